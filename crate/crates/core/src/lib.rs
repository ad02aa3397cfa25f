//! Type reconstruction for machine code from subtype constraints.

pub mod constraint;
pub mod ctype;
pub mod ir;
pub mod label;
pub mod lattice;
pub mod oracle;
pub mod pds;
pub mod pipeline;
pub mod shape;
pub mod simplify;
pub mod sketch;
pub mod solve;
pub mod syntax;

pub use constraint::{Constraint, ConstraintSet, DerivedTypeVar, TypeScheme, TypeVar};
pub use label::{variance_of_word, FieldLabel, Variance};
pub use syntax::{parse_constraints, parse_constraints_checked, ParseError};
