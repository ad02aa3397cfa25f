//! Shape inference and lattice labelling: from a constraint set to one
//! sketch per type variable.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use thiserror::Error;

use crate::constraint::{ConstraintSet, TypeVar};
use crate::label::{FieldLabel, Variance};
use crate::lattice::{Elem, Lattice};
use crate::pds::{build_graph, saturate, ConstraintGraph, EdgeKind, Node, NodeId, Side, Symbol};
use crate::shape::{ClassId, Shapes};
use crate::sketch::Sketch;

pub type Bindings = BTreeMap<String, Sketch>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolveError {
    #[error("constant `#{0}` is not an element of the lattice")]
    UnknownConstant(String),
}

/// A sketch before minimization: states are (shape class, word variance).
#[derive(Clone, Debug)]
pub struct RawSketch {
    pub states: Vec<(ClassId, Variance)>,
    pub trans: Vec<BTreeMap<FieldLabel, usize>>,
}

impl RawSketch {
    fn of(shapes: &Shapes, root: ClassId) -> RawSketch {
        let mut index = HashMap::from([((root, Variance::Covariant), 0)]);
        let mut states = vec![(root, Variance::Covariant)];
        let mut trans = vec![BTreeMap::new()];
        let mut i = 0;
        while i < states.len() {
            let (c, v) = states[i];
            for (l, t) in shapes.children(c) {
                let key = (t, v * l.variance());
                let id = *index.entry(key).or_insert_with(|| {
                    states.push(key);
                    trans.push(BTreeMap::new());
                    states.len() - 1
                });
                trans[i].insert(l.clone(), id);
            }
            i += 1;
        }
        RawSketch { states, trans }
    }

    fn default_labels(&self, l: &Lattice) -> Vec<Elem> {
        self.states
            .iter()
            .map(|(_, v)| {
                if v.is_covariant() {
                    l.top()
                } else {
                    l.bottom()
                }
            })
            .collect()
    }
}

/// Unifies subtype endpoints and emits a sketch per variable, labelled top
/// at covariant words and bottom at contravariant ones.
pub fn infer_shapes(c: &ConstraintSet, l: &Lattice) -> (Shapes, Bindings) {
    let shapes = Shapes::infer(&c.close_prefixes());
    let mut out = Bindings::new();
    for v in c.variables() {
        if let Some(root) = shapes.class_of_var(&TypeVar::var(&v)) {
            let raw = RawSketch::of(&shapes, root);
            let labels = raw.default_labels(l);
            let notes = vec![BTreeSet::new(); labels.len()];
            out.insert(v, Sketch::with_notes(raw.trans, labels, notes));
        }
    }
    for k in c.constants() {
        if let Some(e) = l.get(&k) {
            out.insert(format!("#{k}"), Sketch::leaf(e));
        }
    }
    (shapes, out)
}

/// Constant bounds of every word of one variable.
#[derive(Clone, Debug)]
pub struct LabelBounds {
    pub raw: RawSketch,
    pub lower: Vec<BTreeSet<Elem>>,
    pub upper: Vec<BTreeSet<Elem>>,
}

impl LabelBounds {
    /// Join of lower bounds met with the meet of upper bounds; unbounded
    /// words keep their default.
    pub fn labels(&self, l: &Lattice) -> Vec<Elem> {
        let defaults = self.raw.default_labels(l);
        (0..self.raw.states.len())
            .map(|i| {
                let (lo, up) = (&self.lower[i], &self.upper[i]);
                if lo.is_empty() && up.is_empty() {
                    return defaults[i];
                }
                let j = lo.iter().fold(None, |acc: Option<Elem>, &e| {
                    Some(acc.map_or(e, |a| l.join(a, e)))
                });
                let m = up.iter().fold(l.top(), |a, &e| l.meet(a, e));
                l.meet(j.unwrap_or(l.top()), m)
            })
            .collect()
    }

    pub fn sketch(&self, l: &Lattice) -> Sketch {
        let notes = (0..self.raw.states.len())
            .map(|i| self.lower[i].union(&self.upper[i]).copied().collect())
            .collect();
        Sketch::with_notes(self.raw.trans.clone(), self.labels(l), notes)
    }
}

/// Saturated graph of a constraint set with only the constants interesting,
/// queried per variable by walking it in lockstep with the variable's shape.
pub struct Solver<'l> {
    lattice: &'l Lattice,
    shapes: Shapes,
    graph: ConstraintGraph,
    rev: Vec<Vec<(EdgeKind, NodeId)>>,
    constants: HashMap<NodeId, (Elem, Side)>,
}

impl<'l> Solver<'l> {
    pub fn new(c: &ConstraintSet, lattice: &'l Lattice) -> Result<Solver<'l>, SolveError> {
        let closed = c.close_prefixes();
        let mut interesting = BTreeSet::new();
        for k in closed.constants() {
            if lattice.get(&k).is_none() {
                return Err(SolveError::UnknownConstant(k));
            }
            interesting.insert(TypeVar::Const(k));
        }
        let graph = saturate(&build_graph(&closed, &interesting));
        let mut rev = vec![Vec::new(); graph.node_count()];
        let mut constants = HashMap::new();
        for id in 0..graph.node_count() as NodeId {
            for &(kind, dst) in graph.out_edges(id) {
                rev[dst as usize].push((kind, id));
            }
            if let Node::Var {
                base: TypeVar::Const(k),
                side,
                path,
                variance,
            } = graph.node_data(id)
            {
                if path.is_empty() && variance.is_covariant() {
                    constants.insert(id, (lattice.get(k).expect("checked above"), *side));
                }
            }
        }
        Ok(Solver {
            lattice,
            shapes: Shapes::infer(&closed),
            graph,
            rev,
            constants,
        })
    }

    pub fn shapes(&self) -> &Shapes {
        &self.shapes
    }

    pub fn bounds(&self, var: &str) -> Option<LabelBounds> {
        let v = TypeVar::var(var);
        let raw = RawSketch::of(&self.shapes, self.shapes.class_of_var(&v)?);
        let n = raw.states.len();
        let mut lower = vec![BTreeSet::new(); n];
        let mut upper = vec![BTreeSet::new(); n];
        for c in [Variance::Covariant, Variance::Contravariant] {
            let node = Node::Var {
                base: v.clone(),
                side: Side::Untagged,
                path: vec![],
                variance: c,
            };
            let Some(start) = self.graph.lookup(&node) else {
                continue;
            };
            self.walk(&raw, start, c, true, &mut upper);
            self.walk(&raw, start, c, false, &mut lower);
        }
        Some(LabelBounds { raw, lower, upper })
    }

    /// Forward: pops spell the word, ending at a right-hand constant (upper
    /// bound). Backward: reversed pushes spell it, starting from a left-hand
    /// constant (lower bound).
    fn walk(
        &self,
        raw: &RawSketch,
        start: NodeId,
        c: Variance,
        forward: bool,
        out: &mut [BTreeSet<Elem>],
    ) {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([(start, 0usize)]);
        while let Some((n, s)) = queue.pop_front() {
            if !seen.insert((n, s)) {
                continue;
            }
            if let Some(&(e, side)) = self.constants.get(&n) {
                let want = if forward { Side::R } else { Side::L };
                if side == want && raw.states[s].1 == c {
                    out[s].insert(e);
                }
            }
            let edges = if forward {
                self.graph.out_edges(n)
            } else {
                &self.rev[n as usize][..]
            };
            for &(kind, m) in edges {
                match kind {
                    EdgeKind::One => queue.push_back((m, s)),
                    EdgeKind::Pop(sym) if forward => {
                        if let Symbol::Label(l) = self.graph.symbol(sym) {
                            if let Some(&t) = raw.trans[s].get(l) {
                                queue.push_back((m, t));
                            }
                        }
                    }
                    EdgeKind::Push(sym) if !forward => {
                        if let Symbol::Label(l) = self.graph.symbol(sym) {
                            if let Some(&t) = raw.trans[s].get(l) {
                                queue.push_back((m, t));
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    pub fn sketch(&self, var: &str) -> Option<Sketch> {
        self.bounds(var).map(|b| b.sketch(self.lattice))
    }
}

/// Solved sketches for the given variables (all plain variables when `None`).
pub fn solve_labels(
    c: &ConstraintSet,
    l: &Lattice,
    vars: Option<&BTreeSet<String>>,
) -> Result<Bindings, SolveError> {
    let solver = Solver::new(c, l)?;
    let all = c.variables();
    let mut out = Bindings::new();
    for v in vars.unwrap_or(&all) {
        if let Some(s) = solver.sketch(v) {
            out.insert(v.clone(), s);
        }
    }
    for k in c.constants() {
        out.insert(
            format!("#{k}"),
            Sketch::leaf(l.get(&k).expect("checked by solver")),
        );
    }
    Ok(out)
}

/// Whether `actual` may be passed where `formal` is constrained by `c`:
/// every word the formal needs exists in the actual, and the actual's
/// label respects the formal's constant bounds in the word's direction.
pub fn check_narrowing(
    actual: &Sketch,
    c: &ConstraintSet,
    formal: &str,
    l: &Lattice,
) -> Result<bool, SolveError> {
    let solver = Solver::new(c, l)?;
    let Some(b) = solver.bounds(formal) else {
        return Ok(true);
    };
    let mut seen = BTreeSet::new();
    let mut stack = vec![(0usize, 0usize)];
    while let Some((f, a)) = stack.pop() {
        if !seen.insert((f, a)) {
            continue;
        }
        let have = actual.label(a);
        let ok = match b.raw.states[f].1 {
            Variance::Covariant => b.upper[f].iter().all(|&u| l.leq(have, u)),
            Variance::Contravariant => b.lower[f].iter().all(|&lo| l.leq(lo, have)),
        };
        if !ok {
            return Ok(false);
        }
        for (lab, &t) in &b.raw.trans[f] {
            match actual.step(a, lab) {
                Some(at) => stack.push((t, at)),
                None => return Ok(false),
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeDoc;
    use crate::syntax::parse_constraints;

    fn small() -> Lattice {
        let e = |a: &str, b: &str| (a.to_string(), b.to_string());
        Lattice::new(LatticeDoc {
            elements: ["top", "num", "str", "url", "bot"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            edges: vec![
                e("num", "top"),
                e("str", "top"),
                e("url", "str"),
                e("bot", "num"),
                e("bot", "url"),
            ],
            top: "top".into(),
            bottom: "bot".into(),
            tags: vec![],
        })
        .unwrap()
    }

    fn w(s: &str) -> Vec<FieldLabel> {
        if s.is_empty() {
            return vec![];
        }
        s.split('.').map(|p| p.parse().unwrap()).collect()
    }

    #[test]
    fn unified_variables_share_sketches() {
        let l = small();
        let (_, b) = infer_shapes(&parse_constraints("x <= y").unwrap(), &l);
        assert_eq!(b["x"], b["y"]);
        assert_eq!(b["x"].state_count(), 1);
    }

    #[test]
    fn bounds_on_both_sides() {
        let l = small();
        let c = parse_constraints("#url <= x\nx <= #str").unwrap();
        let b = solve_labels(&c, &l, None).unwrap();
        assert_eq!(b["x"].label(0), l.get("url").unwrap());
    }

    #[test]
    fn no_constants_keeps_defaults() {
        let l = small();
        let c = parse_constraints("x.in_a <= y\ny.load <= z").unwrap();
        let (_, shaped) = infer_shapes(&c, &l);
        let solved = solve_labels(&c, &l, None).unwrap();
        assert_eq!(shaped["x"], solved["x"]);
        assert_eq!(solved["x"].label_at(&w("in_a")), Some(l.bottom()));
    }

    #[test]
    fn narrowing_through_a_list_payload() {
        let l = small();
        let g = |n| l.get(n).unwrap();
        let (ld, st, f0, f4) = (
            w("load")[0].clone(),
            w("store")[0].clone(),
            w("s32@0")[0].clone(),
            w("s32@4")[0].clone(),
        );
        // States: 0 L, 1 L', 2 str, 3 N, 4 N', 5 str.
        let list = Sketch::from_parts(
            vec![
                vec![(ld.clone(), 1), (st.clone(), 4)],
                vec![(f0.clone(), 2), (f4.clone(), 0)],
                vec![],
                vec![(st, 1), (ld, 4)],
                vec![(f0, 5), (f4, 3)],
                vec![],
            ],
            vec![g("top"), g("top"), g("str"), g("bot"), g("bot"), g("str")],
        );
        let formal = parse_constraints("#url <= result.store.s32@0").unwrap();
        assert!(check_narrowing(&list, &formal, "result", &l).unwrap());
        let no_store = Sketch::from_parts(
            vec![vec![(w("load")[0].clone(), 1)], vec![]],
            vec![g("top"), g("top")],
        );
        assert!(!check_narrowing(&no_store, &formal, "result", &l).unwrap());
        let own = solve_labels(&formal, &l, None).unwrap();
        assert!(check_narrowing(&own["result"], &formal, "result", &l).unwrap());
    }

    #[test]
    fn unknown_constant_is_reported() {
        let c = parse_constraints("x <= #nope").unwrap();
        assert_eq!(
            solve_labels(&c, &small(), None).unwrap_err(),
            SolveError::UnknownConstant("nope".into())
        );
    }

    #[test]
    fn close_last_labels() {
        use crate::simplify::{simplify, SimplificationRequest};
        let l =
            Lattice::from_json(include_str!("../../../fixtures/close_last.lattice.json")).unwrap();
        let c =
            parse_constraints(include_str!("../../../fixtures/close_last.constraints")).unwrap();
        let scheme = simplify(&SimplificationRequest::new(c, "close_last"));
        let b = solve_labels(&scheme.body, &l, None).unwrap();
        let s = &b["close_last"];
        let g = |n| l.get(n).unwrap();
        assert_eq!(s.label_at(&w("out_eax")), Some(g("int")));
        assert_eq!(
            s.label_at(&w("in_stack0.load.s32@4")),
            Some(g("FileDescriptor"))
        );
        assert_eq!(
            s.label_at(&w("in_stack0.load.s32@0.load.s32@0.load.s32@4")),
            Some(g("FileDescriptor"))
        );
        let out = s.run(&w("out_eax")).unwrap();
        assert_eq!(s.notes(out), &BTreeSet::from([g("int"), g("SuccessZ")]));
        assert!(!s.accepts(&w("in_stack0.store")));
    }
}
