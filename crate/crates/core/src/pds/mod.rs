//! Pushdown-system encoding of a constraint set, its saturation, and the
//! pop*push* transducer that recognizes elementary derivations.

mod dot;
mod graph;
mod stackop;
mod transducer;

pub use dot::{graph_to_dot, transducer_to_dot};
pub use graph::{
    build_graph, build_graph_with_depth, saturate, ConstraintGraph, EdgeKind, Node, NodeId, Side,
};
pub use stackop::{StackOp, StackWord};
pub use transducer::{
    recognizes, shadow, CompactEdge, CompactTransducer, StateId, StateKind, Transducer,
};

use std::fmt;

use crate::constraint::TypeVar;
use crate::label::{FieldLabel, Variance};

/// A stack symbol: a field label, or an interesting variable token with its variance.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Label(FieldLabel),
    Var(TypeVar, Variance),
}

impl Symbol {
    pub fn label(&self) -> Option<&FieldLabel> {
        match self {
            Symbol::Label(l) => Some(l),
            Symbol::Var(..) => None,
        }
    }

    pub fn var(&self) -> Option<(&TypeVar, Variance)> {
        match self {
            Symbol::Var(v, a) => Some((v, *a)),
            Symbol::Label(_) => None,
        }
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Label(l) => write!(f, "{l}"),
            Symbol::Var(v, Variance::Covariant) => write!(f, "{v}⁺"),
            Symbol::Var(v, Variance::Contravariant) => write!(f, "{v}⁻"),
        }
    }
}

/// A transducer move: read (pop) or write (push) one symbol.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Pop(Symbol),
    Push(Symbol),
}

impl Op {
    pub fn symbol(&self) -> &Symbol {
        match self {
            Op::Pop(s) | Op::Push(s) => s,
        }
    }

    pub fn is_pop(&self) -> bool {
        matches!(self, Op::Pop(_))
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Pop(s) => write!(f, "pop {s}"),
            Op::Push(s) => write!(f, "push {s}"),
        }
    }
}
