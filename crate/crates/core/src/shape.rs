//! Capability shapes: the quotient of derived type variables under
//! unification of subtype endpoints, closed under label congruence.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::constraint::{Constraint, ConstraintSet, DerivedTypeVar, TypeVar};
use crate::label::FieldLabel;

pub type ClassId = usize;

#[derive(Clone, Debug, Default)]
pub struct Shapes {
    parent: Vec<usize>,
    rank: Vec<u8>,
    children: Vec<BTreeMap<FieldLabel, usize>>,
    roots: BTreeMap<TypeVar, usize>,
}

impl Shapes {
    /// Constants never take part in unification.
    pub fn infer(c: &ConstraintSet) -> Shapes {
        Self::build(c, false)
    }

    /// Treats constants like any other variable.
    pub fn infer_unifying_constants(c: &ConstraintSet) -> Shapes {
        Self::build(c, true)
    }

    fn build(c: &ConstraintSet, unify_constants: bool) -> Shapes {
        let mut s = Shapes::default();
        let mut pending: Vec<(usize, usize)> = Vec::new();
        for con in c.iter() {
            for d in con.dtvs() {
                s.intern(d);
            }
            if let Constraint::Subtype(a, b) = con {
                if !unify_constants && (a.is_const() || b.is_const()) {
                    continue;
                }
                let (x, y) = (s.intern(a), s.intern(b));
                pending.push((x, y));
            }
        }
        for n in 0..s.parent.len() {
            if let (Some(&l), Some(&st)) = (
                s.children[n].get(&FieldLabel::Load),
                s.children[n].get(&FieldLabel::Store),
            ) {
                pending.push((l, st));
            }
        }
        while let Some((a, b)) = pending.pop() {
            s.union(a, b, &mut pending);
        }
        s
    }

    fn fresh(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.rank.push(0);
        self.children.push(BTreeMap::new());
        self.parent.len() - 1
    }

    fn intern(&mut self, d: &DerivedTypeVar) -> usize {
        let mut n = match self.roots.get(&d.base) {
            Some(&n) => n,
            None => {
                let n = self.fresh();
                self.roots.insert(d.base.clone(), n);
                n
            }
        };
        for l in &d.path {
            let r = self.find_mut(n);
            n = match self.children[r].get(l) {
                Some(&c) => c,
                None => {
                    let c = self.fresh();
                    self.children[r].insert(l.clone(), c);
                    c
                }
            };
        }
        n
    }

    fn find_mut(&mut self, mut n: usize) -> usize {
        let mut root = n;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[n] != root {
            let next = self.parent[n];
            self.parent[n] = root;
            n = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize, pending: &mut Vec<(usize, usize)>) {
        let (mut ra, mut rb) = (self.find_mut(a), self.find_mut(b));
        if ra == rb {
            return;
        }
        if self.rank[ra] < self.rank[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        if self.rank[ra] == self.rank[rb] {
            self.rank[ra] += 1;
        }
        let moved = std::mem::take(&mut self.children[rb]);
        for (l, c) in moved {
            match self.children[ra].get(&l) {
                Some(&existing) => pending.push((existing, c)),
                None => {
                    self.children[ra].insert(l, c);
                }
            }
        }
        if let (Some(&l), Some(&st)) = (
            self.children[ra].get(&FieldLabel::Load),
            self.children[ra].get(&FieldLabel::Store),
        ) {
            pending.push((l, st));
        }
    }

    pub fn find(&self, mut n: usize) -> ClassId {
        while self.parent[n] != n {
            n = self.parent[n];
        }
        n
    }

    pub fn class_of_var(&self, v: &TypeVar) -> Option<ClassId> {
        self.roots.get(v).map(|&n| self.find(n))
    }

    pub fn class_of(&self, d: &DerivedTypeVar) -> Option<ClassId> {
        let mut n = self.class_of_var(&d.base)?;
        for l in &d.path {
            n = self.find(*self.children[n].get(l)?);
        }
        Some(n)
    }

    pub fn exists(&self, d: &DerivedTypeVar) -> bool {
        self.class_of(d).is_some()
    }

    /// Outgoing labels of a class, targets resolved to classes.
    pub fn children(&self, class: ClassId) -> impl Iterator<Item = (&FieldLabel, ClassId)> {
        self.children[class].iter().map(|(l, &c)| (l, self.find(c)))
    }

    pub fn step(&self, class: ClassId, l: &FieldLabel) -> Option<ClassId> {
        self.children[class].get(l).map(|&c| self.find(c))
    }

    pub fn variables(&self) -> impl Iterator<Item = &TypeVar> {
        self.roots.keys()
    }

    /// Classes reachable from `class`, in label order.
    pub fn reachable(&self, class: ClassId) -> BTreeSet<ClassId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![class];
        while let Some(c) = stack.pop() {
            if seen.insert(c) {
                stack.extend(self.children(c).map(|(_, t)| t));
            }
        }
        seen
    }

    /// Class partition of the variables, for debugging and tests.
    pub fn partition(&self) -> Vec<BTreeSet<TypeVar>> {
        let mut groups: HashMap<ClassId, BTreeSet<TypeVar>> = HashMap::new();
        for (v, &n) in &self.roots {
            groups.entry(self.find(n)).or_default().insert(v.clone());
        }
        let mut out: Vec<_> = groups.into_values().collect();
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_constraints;

    fn d(s: &str) -> DerivedTypeVar {
        s.parse().unwrap()
    }

    #[test]
    fn bare_variables_unify() {
        let s = Shapes::infer(&parse_constraints("x <= y").unwrap());
        assert_eq!(s.class_of(&d("x")), s.class_of(&d("y")));
    }

    #[test]
    fn pointer_sets_share_targets() {
        let s = Shapes::infer(&parse_constraints("Q <= P\nX <= P.store\nQ.load <= Y").unwrap());
        assert_eq!(s.class_of(&d("X")), s.class_of(&d("Y")));
        assert_eq!(s.class_of(&d("P.load")), s.class_of(&d("Q.store")));
    }

    #[test]
    fn congruence_and_existence() {
        let s = Shapes::infer(&parse_constraints("a <= b\na.load.s32@0 <= c\nb.out <= e").unwrap());
        assert!(s.exists(&d("b.load.s32@0")));
        assert!(s.exists(&d("a.out")));
        assert!(!s.exists(&d("c.load")));
    }

    #[test]
    fn constants_stay_apart() {
        let c = parse_constraints("x <= #int\ny <= #int\nx.load <= z").unwrap();
        assert!(!Shapes::infer(&c).exists(&d("y.load")));
        assert!(Shapes::infer_unifying_constants(&c).exists(&d("y.load")));
    }
}
