use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use super::Symbol;
use crate::constraint::{ConstraintSet, DerivedTypeVar, TypeVar};
use crate::label::{variance_of_word, FieldLabel, Variance};
use crate::shape::Shapes;

pub type NodeId = u32;
pub type SymId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    L,
    R,
    Untagged,
}

impl Side {
    fn swap(self) -> Side {
        match self {
            Side::L => Side::R,
            Side::R => Side::L,
            Side::Untagged => Side::Untagged,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Start,
    End,
    Var {
        base: TypeVar,
        side: Side,
        path: Vec<FieldLabel>,
        variance: Variance,
    },
}

impl Node {
    pub fn variance(&self) -> Option<Variance> {
        match self {
            Node::Var { variance, .. } => Some(*variance),
            _ => None,
        }
    }

    /// The involution flipping variance, swapping sides and Start/End.
    pub fn mirror(&self) -> Node {
        match self {
            Node::Start => Node::End,
            Node::End => Node::Start,
            Node::Var {
                base,
                side,
                path,
                variance,
            } => Node::Var {
                base: base.clone(),
                side: side.swap(),
                path: path.clone(),
                variance: variance.flip(),
            },
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Start => f.write_str("#Start"),
            Node::End => f.write_str("#End"),
            Node::Var {
                base,
                side,
                path,
                variance,
            } => {
                write!(
                    f,
                    "{}",
                    DerivedTypeVar::with_path(base.clone(), path.clone())
                )?;
                match side {
                    Side::L => f.write_str("_L")?,
                    Side::R => f.write_str("_R")?,
                    Side::Untagged => {}
                }
                write!(f, "{variance}")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    One,
    Pop(SymId),
    Push(SymId),
}

#[derive(Clone, Debug, Default)]
pub struct ConstraintGraph {
    nodes: Vec<Node>,
    index: HashMap<Node, NodeId>,
    symbols: Vec<Symbol>,
    sym_index: HashMap<Symbol, SymId>,
    out: Vec<Vec<(EdgeKind, NodeId)>>,
    edge_set: HashSet<(NodeId, EdgeKind, NodeId)>,
    /// Reaching pushes: (label, origin node) pairs, filled in by saturation.
    reaching: Vec<HashSet<(SymId, NodeId)>>,
    depth: usize,
    shapes: Shapes,
    pub interesting: BTreeSet<TypeVar>,
}

pub const START: NodeId = 0;
pub const END: NodeId = 1;

impl ConstraintGraph {
    fn empty(interesting: BTreeSet<TypeVar>) -> Self {
        let mut g = ConstraintGraph {
            interesting,
            ..Default::default()
        };
        g.node(Node::Start);
        g.node(Node::End);
        g
    }

    pub fn node(&mut self, n: Node) -> NodeId {
        if let Some(&id) = self.index.get(&n) {
            return id;
        }
        let id = self.nodes.len() as NodeId;
        self.nodes.push(n.clone());
        self.index.insert(n, id);
        self.out.push(Vec::new());
        self.reaching.push(HashSet::new());
        id
    }

    pub fn sym(&mut self, s: Symbol) -> SymId {
        if let Some(&id) = self.sym_index.get(&s) {
            return id;
        }
        let id = self.symbols.len() as SymId;
        self.symbols.push(s.clone());
        self.sym_index.insert(s, id);
        id
    }

    pub fn lookup(&self, n: &Node) -> Option<NodeId> {
        self.index.get(n).copied()
    }

    pub fn lookup_sym(&self, s: &Symbol) -> Option<SymId> {
        self.sym_index.get(s).copied()
    }

    pub fn symbol(&self, id: SymId) -> &Symbol {
        &self.symbols[id as usize]
    }

    pub fn node_data(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_set.len()
    }

    pub fn out_edges(&self, id: NodeId) -> &[(EdgeKind, NodeId)] {
        &self.out[id as usize]
    }

    pub fn reaching(&self, id: NodeId) -> &HashSet<(SymId, NodeId)> {
        &self.reaching[id as usize]
    }

    pub fn has_edge(&self, src: NodeId, kind: EdgeKind, dst: NodeId) -> bool {
        self.edge_set.contains(&(src, kind, dst))
    }

    /// All edges in a stable order.
    pub fn edges(&self) -> Vec<(NodeId, EdgeKind, NodeId)> {
        let mut v: Vec<_> = self.edge_set.iter().copied().collect();
        v.sort();
        v
    }

    pub fn add_edge(&mut self, src: NodeId, kind: EdgeKind, dst: NodeId) -> bool {
        if self.edge_set.insert((src, kind, dst)) {
            self.out[src as usize].push((kind, dst));
            true
        } else {
            false
        }
    }

    fn side_for(&self, base: &TypeVar, side: Side) -> Side {
        if self.interesting.contains(base) {
            side
        } else {
            Side::Untagged
        }
    }

    /// Node for `d` under stack variance `v`, with pop chain (left) or push chain (right).
    fn endpoint(&mut self, d: &DerivedTypeVar, side: Side, v: Variance) -> NodeId {
        let side = self.side_for(&d.base, side);
        let mk = |i: usize| Node::Var {
            base: d.base.clone(),
            side,
            path: d.path[..i].to_vec(),
            variance: v * variance_of_word(&d.path[i..]),
        };
        let n = d.path.len();
        let ids: Vec<NodeId> = (0..=n).map(|i| self.node(mk(i))).collect();
        for i in 0..n {
            let s = self.sym(Symbol::Label(d.path[i].clone()));
            if side == Side::R {
                self.add_edge(ids[i + 1], EdgeKind::Push(s), ids[i]);
            } else if side == Side::L {
                self.add_edge(ids[i], EdgeKind::Pop(s), ids[i + 1]);
            }
        }
        let root_v = v * variance_of_word(&d.path);
        match side {
            Side::L => {
                let t = self.sym(Symbol::Var(d.base.clone(), root_v));
                self.add_edge(START, EdgeKind::Pop(t), ids[0]);
            }
            Side::R => {
                let t = self.sym(Symbol::Var(d.base.clone(), root_v));
                self.add_edge(ids[0], EdgeKind::Push(t), END);
            }
            Side::Untagged => {}
        }
        ids[n]
    }

    fn untagged_chain(&mut self, d: &DerivedTypeVar, v: Variance, pops: bool) -> NodeId {
        let mk = |i: usize| Node::Var {
            base: d.base.clone(),
            side: Side::Untagged,
            path: d.path[..i].to_vec(),
            variance: v * variance_of_word(&d.path[i..]),
        };
        let n = d.path.len();
        let ids: Vec<NodeId> = (0..=n).map(|i| self.node(mk(i))).collect();
        for i in 0..n {
            let s = self.sym(Symbol::Label(d.path[i].clone()));
            if pops {
                self.add_edge(ids[i], EdgeKind::Pop(s), ids[i + 1]);
            } else {
                self.add_edge(ids[i + 1], EdgeKind::Push(s), ids[i]);
            }
        }
        ids[n]
    }

    fn left(&mut self, d: &DerivedTypeVar, v: Variance) -> NodeId {
        if self.interesting.contains(&d.base) {
            self.endpoint(d, Side::L, v)
        } else {
            self.untagged_chain(d, v, true)
        }
    }

    fn right(&mut self, d: &DerivedTypeVar, v: Variance) -> NodeId {
        if self.interesting.contains(&d.base) {
            self.endpoint(d, Side::R, v)
        } else {
            self.untagged_chain(d, v, false)
        }
    }

    /// Adds both encodings of `lhs <= rhs`.
    fn add_subtype(&mut self, lhs: &DerivedTypeVar, rhs: &DerivedTypeVar) {
        let a = self.left(lhs, Variance::Covariant);
        let b = self.right(rhs, Variance::Covariant);
        self.add_edge(a, EdgeKind::One, b);
        let a = self.left(rhs, Variance::Contravariant);
        let b = self.right(lhs, Variance::Contravariant);
        self.add_edge(a, EdgeKind::One, b);
    }

    fn add_reaching(
        &mut self,
        at: NodeId,
        label: SymId,
        origin: NodeId,
        queue: &mut VecDeque<(NodeId, SymId, NodeId)>,
    ) {
        if self.reaching[at as usize].insert((label, origin)) {
            queue.push_back((at, label, origin));
        }
    }

    /// Adds a shortcut edge and forwards the reaching pushes of its source.
    fn add_shortcut(
        &mut self,
        src: NodeId,
        dst: NodeId,
        queue: &mut VecDeque<(NodeId, SymId, NodeId)>,
    ) {
        if self.add_edge(src, EdgeKind::One, dst) {
            let facts: Vec<_> = self.reaching[src as usize].iter().copied().collect();
            for (l, z) in facts {
                self.add_reaching(dst, l, z, queue);
            }
        }
    }

    /// Chains for `v.store <= v.load` in both variances, for every untagged `v`
    /// within the depth bound whose store and load capabilities both exist.
    fn pointer_rules(&mut self, c: &ConstraintSet) {
        let mut work: Vec<DerivedTypeVar> = c
            .type_vars()
            .into_iter()
            .filter(|v| !v.is_const() && !self.interesting.contains(v))
            .map(DerivedTypeVar::new)
            .collect();
        while let Some(v) = work.pop() {
            let Some(class) = self.shapes.class_of(&v) else {
                continue;
            };
            let kids: Vec<FieldLabel> = self
                .shapes
                .children(class)
                .map(|(l, _)| l.clone())
                .collect();
            if kids.contains(&FieldLabel::Store) && kids.contains(&FieldLabel::Load) {
                let store = v.push(FieldLabel::Store);
                let load = v.push(FieldLabel::Load);
                for (lhs, rhs, var) in [
                    (&store, &load, Variance::Covariant),
                    (&load, &store, Variance::Contravariant),
                ] {
                    let a = self.untagged_chain(lhs, var, true);
                    let b = self.untagged_chain(rhs, var, false);
                    self.add_edge(a, EdgeKind::One, b);
                }
            }
            if v.path.len() < self.depth {
                work.extend(kids.iter().map(|l| v.push(l.clone())));
            }
        }
    }

    fn saturate_in_place(&mut self) {
        let mut queue = VecDeque::new();
        for (src, kind, dst) in self.edges() {
            if let EdgeKind::Push(s) = kind {
                if self.symbols[s as usize].label().is_some() {
                    self.add_reaching(dst, s, src, &mut queue);
                }
            }
        }
        let load = self.sym(Symbol::Label(FieldLabel::Load));
        let store = self.sym(Symbol::Label(FieldLabel::Store));
        while let Some((y, l, z)) = queue.pop_front() {
            let mut i = 0;
            while i < self.out[y as usize].len() {
                let (kind, w) = self.out[y as usize][i];
                i += 1;
                match kind {
                    EdgeKind::One => self.add_reaching(w, l, z, &mut queue),
                    EdgeKind::Pop(p) if p == l => self.add_shortcut(z, w, &mut queue),
                    _ => {}
                }
            }
            if self.symbols[l as usize].label().is_none() {
                continue;
            }
            let Node::Var {
                base,
                side: Side::Untagged,
                path,
                variance,
            } = self.nodes[y as usize].clone()
            else {
                continue;
            };
            if variance != Variance::Contravariant || (l != store && l != load) {
                continue;
            }
            // Lazy pointer rule: a store reaching a contravariant node acts as a
            // load at its covariant twin, and vice versa.
            let v = DerivedTypeVar::with_path(base.clone(), path.clone());
            if !self.shapes.exists(&v.push(FieldLabel::Store))
                || !self.shapes.exists(&v.push(FieldLabel::Load))
            {
                continue;
            }
            let twin = if l == store { load } else { store };
            let bar = Node::Var {
                base,
                side: Side::Untagged,
                path,
                variance: Variance::Covariant,
            };
            if let Some(ybar) = self.lookup(&bar) {
                self.add_reaching(ybar, twin, z, &mut queue);
            }
        }
    }
}

/// Builds the graph with pointer rules instantiated two labels past the longest
/// constraint word.
pub fn build_graph(c: &ConstraintSet, interesting: &BTreeSet<TypeVar>) -> ConstraintGraph {
    build_graph_with_depth(c, interesting, c.max_word_len() + 2)
}

pub fn build_graph_with_depth(
    c: &ConstraintSet,
    interesting: &BTreeSet<TypeVar>,
    depth: usize,
) -> ConstraintGraph {
    let mut g = ConstraintGraph::empty(interesting.clone());
    g.shapes = Shapes::infer(c);
    g.depth = depth;
    g.pointer_rules(c);
    for (lhs, rhs) in c.subtypes() {
        g.add_subtype(lhs, rhs);
    }
    g
}

/// Saturates a copy of `g`: shortcut edges for every push/pop pair that cancels,
/// with store/load swaps applied lazily at contravariant untagged nodes.
pub fn saturate(g: &ConstraintGraph) -> ConstraintGraph {
    let mut g = g.clone();
    g.saturate_in_place();
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_constraints;

    fn vars(names: &[&str]) -> BTreeSet<TypeVar> {
        names.iter().map(|n| TypeVar::var(*n)).collect()
    }

    fn var_node(name: &str, side: Side, path: &str, v: Variance) -> Node {
        let path = if path.is_empty() {
            vec![]
        } else {
            path.split('.').map(|l| l.parse().unwrap()).collect()
        };
        Node::Var {
            base: TypeVar::var(name),
            side,
            path,
            variance: v,
        }
    }

    use Variance::{Contravariant as M, Covariant as P};

    #[test]
    fn empty_graph() {
        let g = build_graph(&ConstraintSet::new(), &BTreeSet::new());
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn single_constraint_edges() {
        let c = parse_constraints("a <= b").unwrap();
        let g = build_graph(&c, &vars(&["a", "b"]));
        let n = |s, side, v| g.lookup(&var_node(s, side, "", v)).unwrap();
        assert!(g.has_edge(n("a", Side::L, P), EdgeKind::One, n("b", Side::R, P)));
        assert!(g.has_edge(n("b", Side::L, M), EdgeKind::One, n("a", Side::R, M)));
        let ones = g.edges().iter().filter(|e| e.1 == EdgeKind::One).count();
        assert_eq!(ones, 2);
        assert_eq!(g.edge_count(), 6);
    }

    const POINTER_COPY: &str = "y <= p\np <= x\nA <= x.store\ny.load <= B";

    #[test]
    fn lazy_pointer_rule_adds_shortcut() {
        let c = parse_constraints(POINTER_COPY).unwrap();
        let g = build_graph(&c, &vars(&["A", "B"]));
        let s = saturate(&g);
        let from = s
            .lookup(&var_node("x", Side::Untagged, "store", P))
            .unwrap();
        let to = s.lookup(&var_node("y", Side::Untagged, "load", P)).unwrap();
        assert!(!g.has_edge(from, EdgeKind::One, to));
        assert!(s.has_edge(from, EdgeKind::One, to));
    }

    #[test]
    fn saturation_without_pushes_is_identity() {
        let c = parse_constraints("a <= b\nb <= c").unwrap();
        let g = build_graph(&c, &vars(&["a", "c"]));
        let s = saturate(&g);
        assert_eq!(g.edges(), s.edges());
    }

    #[test]
    fn mirror_symmetry_and_idempotence() {
        let c = parse_constraints(POINTER_COPY).unwrap();
        let g = build_graph(&c, &vars(&["A", "B", "x", "y"]));
        let s = saturate(&g);
        for graph in [&g, &s] {
            for (a, kind, b) in graph.edges() {
                let ma = graph.lookup(&graph.node_data(a).mirror()).unwrap();
                let mb = graph.lookup(&graph.node_data(b).mirror()).unwrap();
                let mk = match kind {
                    EdgeKind::One => EdgeKind::One,
                    EdgeKind::Pop(x) => {
                        let sym = match graph.symbol(x) {
                            Symbol::Var(v, a) => Symbol::Var(v.clone(), a.flip()),
                            l => l.clone(),
                        };
                        EdgeKind::Push(graph.lookup_sym(&sym).unwrap())
                    }
                    EdgeKind::Push(x) => {
                        let sym = match graph.symbol(x) {
                            Symbol::Var(v, a) => Symbol::Var(v.clone(), a.flip()),
                            l => l.clone(),
                        };
                        EdgeKind::Pop(graph.lookup_sym(&sym).unwrap())
                    }
                };
                assert!(
                    graph.has_edge(mb, mk, ma),
                    "missing mirror of {}",
                    graph.node_data(a)
                );
            }
        }
        assert_eq!(saturate(&s).edges(), s.edges());
    }
}
