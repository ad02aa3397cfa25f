//! Derived type variables, constraints, constraint sets and type schemes.

use std::collections::BTreeSet;
use std::fmt;

use crate::label::{variance_of_word, FieldLabel, Variance};

/// A base type variable: either an ordinary variable or a lattice constant (`#name`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TypeVar {
    Var(String),
    Const(String),
}

impl TypeVar {
    pub fn var(name: impl Into<String>) -> TypeVar {
        TypeVar::Var(name.into())
    }

    pub fn constant(name: impl Into<String>) -> TypeVar {
        TypeVar::Const(name.into())
    }

    pub fn name(&self) -> &str {
        match self {
            TypeVar::Var(n) | TypeVar::Const(n) => n,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, TypeVar::Const(_))
    }
}

impl fmt::Display for TypeVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeVar::Var(n) => f.write_str(n),
            TypeVar::Const(n) => write!(f, "#{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DerivedTypeVar {
    pub base: TypeVar,
    pub path: Vec<FieldLabel>,
}

impl DerivedTypeVar {
    pub fn new(base: TypeVar) -> Self {
        DerivedTypeVar {
            base,
            path: Vec::new(),
        }
    }

    pub fn var(name: impl Into<String>) -> Self {
        Self::new(TypeVar::var(name))
    }

    pub fn constant(name: impl Into<String>) -> Self {
        Self::new(TypeVar::constant(name))
    }

    pub fn with_path(base: TypeVar, path: Vec<FieldLabel>) -> Self {
        DerivedTypeVar { base, path }
    }

    pub fn push(&self, label: FieldLabel) -> Self {
        let mut path = self.path.clone();
        path.push(label);
        DerivedTypeVar {
            base: self.base.clone(),
            path,
        }
    }

    pub fn extend<'a>(&self, word: impl IntoIterator<Item = &'a FieldLabel>) -> Self {
        let mut path = self.path.clone();
        path.extend(word.into_iter().cloned());
        DerivedTypeVar {
            base: self.base.clone(),
            path,
        }
    }

    pub fn parent(&self) -> Option<DerivedTypeVar> {
        if self.path.is_empty() {
            return None;
        }
        Some(DerivedTypeVar {
            base: self.base.clone(),
            path: self.path[..self.path.len() - 1].to_vec(),
        })
    }

    pub fn last(&self) -> Option<&FieldLabel> {
        self.path.last()
    }

    pub fn variance(&self) -> Variance {
        variance_of_word(&self.path)
    }

    /// All prefixes, from the bare base to `self` inclusive.
    pub fn prefixes(&self) -> impl Iterator<Item = DerivedTypeVar> + '_ {
        (0..=self.path.len()).map(move |i| DerivedTypeVar {
            base: self.base.clone(),
            path: self.path[..i].to_vec(),
        })
    }

    pub fn is_const(&self) -> bool {
        self.base.is_const()
    }
}

impl fmt::Display for DerivedTypeVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.base)?;
        for l in &self.path {
            write!(f, ".{l}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constraint {
    Exists(DerivedTypeVar),
    Subtype(DerivedTypeVar, DerivedTypeVar),
    Add(DerivedTypeVar, DerivedTypeVar, DerivedTypeVar),
    Sub(DerivedTypeVar, DerivedTypeVar, DerivedTypeVar),
}

impl Constraint {
    pub fn subtype(lhs: DerivedTypeVar, rhs: DerivedTypeVar) -> Constraint {
        Constraint::Subtype(lhs, rhs)
    }

    pub fn dtvs(&self) -> Vec<&DerivedTypeVar> {
        match self {
            Constraint::Exists(a) => vec![a],
            Constraint::Subtype(a, b) => vec![a, b],
            Constraint::Add(a, b, c) | Constraint::Sub(a, b, c) => vec![a, b, c],
        }
    }

    pub fn map_vars(&self, f: &mut impl FnMut(&TypeVar) -> TypeVar) -> Constraint {
        let mut m = |d: &DerivedTypeVar| DerivedTypeVar {
            base: f(&d.base),
            path: d.path.clone(),
        };
        match self {
            Constraint::Exists(a) => Constraint::Exists(m(a)),
            Constraint::Subtype(a, b) => Constraint::Subtype(m(a), m(b)),
            Constraint::Add(a, b, c) => Constraint::Add(m(a), m(b), m(c)),
            Constraint::Sub(a, b, c) => Constraint::Sub(m(a), m(b), m(c)),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Exists(a) => write!(f, "var {a}"),
            Constraint::Subtype(a, b) => write!(f, "{a} <= {b}"),
            Constraint::Add(a, b, c) => write!(f, "add {a}, {b}, {c}"),
            Constraint::Sub(a, b, c) => write!(f, "sub {a}, {b}, {c}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct ConstraintSet {
    pub constraints: BTreeSet<Constraint>,
    /// Names of existentially bound variables.
    pub projected: BTreeSet<String>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, c: Constraint) -> bool {
        self.constraints.insert(c)
    }

    pub fn add_subtype(&mut self, lhs: DerivedTypeVar, rhs: DerivedTypeVar) {
        self.constraints.insert(Constraint::Subtype(lhs, rhs));
    }

    pub fn iter(&self) -> impl Iterator<Item = &Constraint> {
        self.constraints.iter()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn subtypes(&self) -> impl Iterator<Item = (&DerivedTypeVar, &DerivedTypeVar)> {
        self.constraints.iter().filter_map(|c| match c {
            Constraint::Subtype(a, b) => Some((a, b)),
            _ => None,
        })
    }

    pub fn extend(&mut self, other: &ConstraintSet) {
        self.constraints.extend(other.constraints.iter().cloned());
        self.projected.extend(other.projected.iter().cloned());
    }

    pub fn type_vars(&self) -> BTreeSet<TypeVar> {
        self.constraints
            .iter()
            .flat_map(|c| c.dtvs().into_iter().map(|d| d.base.clone()))
            .collect()
    }

    pub fn variables(&self) -> BTreeSet<String> {
        self.type_vars()
            .into_iter()
            .filter_map(|v| match v {
                TypeVar::Var(n) => Some(n),
                TypeVar::Const(_) => None,
            })
            .collect()
    }

    pub fn constants(&self) -> BTreeSet<String> {
        self.type_vars()
            .into_iter()
            .filter_map(|v| match v {
                TypeVar::Const(n) => Some(n),
                TypeVar::Var(_) => None,
            })
            .collect()
    }

    pub fn max_word_len(&self) -> usize {
        self.constraints
            .iter()
            .flat_map(|c| c.dtvs())
            .map(|d| d.path.len())
            .max()
            .unwrap_or(0)
    }

    /// Adds `var` facts for both sides of every subtype constraint and all their prefixes.
    pub fn close_prefixes(&self) -> ConstraintSet {
        let mut out = self.clone();
        for c in &self.constraints {
            for d in c.dtvs() {
                for p in d.prefixes() {
                    out.constraints.insert(Constraint::Exists(p));
                }
            }
        }
        out
    }

    pub fn map_vars(&self, mut f: impl FnMut(&TypeVar) -> TypeVar) -> ConstraintSet {
        let mut out = ConstraintSet::new();
        for c in &self.constraints {
            out.constraints.insert(c.map_vars(&mut f));
        }
        for p in &self.projected {
            out.projected
                .insert(f(&TypeVar::Var(p.clone())).name().to_string());
        }
        out
    }
}

impl FromIterator<Constraint> for ConstraintSet {
    fn from_iter<T: IntoIterator<Item = Constraint>>(iter: T) -> Self {
        ConstraintSet {
            constraints: iter.into_iter().collect(),
            projected: BTreeSet::new(),
        }
    }
}

impl fmt::Display for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.projected {
            writeln!(f, "exists {p}")?;
        }
        for c in &self.constraints {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// `forall quantified. body => subject`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeScheme {
    pub subject: String,
    pub quantified: BTreeSet<String>,
    pub body: ConstraintSet,
}

impl TypeScheme {
    pub fn empty(subject: impl Into<String>) -> Self {
        let subject = subject.into();
        TypeScheme {
            quantified: BTreeSet::from([subject.clone()]),
            subject,
            body: ConstraintSet::new(),
        }
    }

    /// Variables of the body that are neither quantified, projected, constant nor the subject.
    pub fn free_variables(&self) -> BTreeSet<String> {
        self.body
            .variables()
            .into_iter()
            .filter(|v| {
                v != &self.subject
                    && !self.quantified.contains(v)
                    && !self.body.projected.contains(v)
            })
            .collect()
    }
}

impl fmt::Display for TypeScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q: Vec<&str> = self.quantified.iter().map(String::as_str).collect();
        writeln!(f, "// scheme {} forall {}", self.subject, q.join(", "))?;
        write!(f, "{}", self.body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> DerivedTypeVar {
        s.parse().unwrap()
    }

    #[test]
    fn close_prefixes_examples() {
        let c: ConstraintSet = [Constraint::subtype(d("A.load"), d("B"))]
            .into_iter()
            .collect();
        let closed = c.close_prefixes();
        for e in ["A", "A.load", "B"] {
            assert!(closed.constraints.contains(&Constraint::Exists(d(e))));
        }
        assert_eq!(closed.len(), 4);

        assert!(ConstraintSet::new().close_prefixes().is_empty());

        let c: ConstraintSet = [Constraint::subtype(d("x"), d("y.store.s32@0"))]
            .into_iter()
            .collect();
        let closed = c.close_prefixes();
        for e in ["y", "y.store", "y.store.s32@0", "x"] {
            assert!(closed.constraints.contains(&Constraint::Exists(d(e))));
        }
    }

    #[test]
    fn free_variables_of_scheme() {
        let mut s = TypeScheme::empty("f");
        s.body.add_subtype(d("f.in_a"), d("t"));
        s.body.add_subtype(d("t"), d("g"));
        s.body.projected.insert("t".into());
        assert_eq!(s.free_variables(), BTreeSet::from(["g".to_string()]));
    }
}
