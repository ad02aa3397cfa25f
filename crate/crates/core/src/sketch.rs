//! Sketches: deterministic automata over field labels whose states carry
//! lattice elements. Every state accepts, so languages are prefix closed.
//!
//! Values are kept canonical (trimmed, minimized, states numbered in
//! breadth-first order from the root), so structural equality is
//! regular-tree equality.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write;

use crate::label::{FieldLabel, Variance};
use crate::lattice::{Elem, Lattice};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sketch {
    trans: Vec<BTreeMap<FieldLabel, usize>>,
    labels: Vec<Elem>,
    /// Constants that bounded each state during solving; display only.
    notes: Vec<BTreeSet<Elem>>,
}

impl Sketch {
    /// A one-node sketch.
    pub fn leaf(label: Elem) -> Sketch {
        Sketch {
            trans: vec![BTreeMap::new()],
            labels: vec![label],
            notes: vec![BTreeSet::new()],
        }
    }

    /// `{ε}` labelled with the lattice top: the unit of [`Sketch::meet`].
    pub fn top(l: &Lattice) -> Sketch {
        Self::leaf(l.top())
    }

    /// Builds a sketch rooted at state 0 from explicit transitions.
    pub fn from_parts(trans: Vec<Vec<(FieldLabel, usize)>>, labels: Vec<Elem>) -> Sketch {
        let notes = vec![BTreeSet::new(); labels.len()];
        let trans = trans.into_iter().map(|t| t.into_iter().collect()).collect();
        Self::canonical(trans, labels, notes, 0)
    }

    pub(crate) fn with_notes(
        trans: Vec<BTreeMap<FieldLabel, usize>>,
        labels: Vec<Elem>,
        notes: Vec<BTreeSet<Elem>>,
    ) -> Sketch {
        Self::canonical(trans, labels, notes, 0)
    }

    fn canonical(
        trans: Vec<BTreeMap<FieldLabel, usize>>,
        labels: Vec<Elem>,
        notes: Vec<BTreeSet<Elem>>,
        root: usize,
    ) -> Sketch {
        // Partition refinement seeded by (label, notes).
        let n = trans.len();
        let mut seed: HashMap<(Elem, &BTreeSet<Elem>), usize> = HashMap::new();
        let mut class: Vec<usize> = (0..n)
            .map(|i| {
                let k = seed.len();
                *seed.entry((labels[i], &notes[i])).or_insert(k)
            })
            .collect();
        let mut count = seed.len();
        loop {
            let mut sigs: HashMap<(usize, Vec<(&FieldLabel, usize)>), usize> = HashMap::new();
            let next: Vec<usize> = (0..n)
                .map(|i| {
                    let sig = (
                        class[i],
                        trans[i].iter().map(|(l, &t)| (l, class[t])).collect(),
                    );
                    let k = sigs.len();
                    *sigs.entry(sig).or_insert(k)
                })
                .collect();
            class = next;
            if sigs.len() == count {
                break;
            }
            count = sigs.len();
        }
        let mut id: HashMap<usize, usize> = HashMap::new();
        let mut order = Vec::new();
        let mut queue = VecDeque::from([root]);
        id.insert(class[root], 0);
        order.push(root);
        while let Some(s) = queue.pop_front() {
            for &t in trans[s].values() {
                if !id.contains_key(&class[t]) {
                    id.insert(class[t], order.len());
                    order.push(t);
                    queue.push_back(t);
                }
            }
        }
        Sketch {
            trans: order
                .iter()
                .map(|&s| {
                    trans[s]
                        .iter()
                        .map(|(l, &t)| (l.clone(), id[&class[t]]))
                        .collect()
                })
                .collect(),
            labels: order.iter().map(|&s| labels[s]).collect(),
            notes: order.iter().map(|&s| notes[s].clone()).collect(),
        }
    }

    pub fn state_count(&self) -> usize {
        self.trans.len()
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn step(&self, s: usize, l: &FieldLabel) -> Option<usize> {
        self.trans[s].get(l).copied()
    }

    pub fn edges(&self, s: usize) -> impl Iterator<Item = (&FieldLabel, usize)> {
        self.trans[s].iter().map(|(l, &t)| (l, t))
    }

    pub fn label(&self, s: usize) -> Elem {
        self.labels[s]
    }

    pub fn notes(&self, s: usize) -> &BTreeSet<Elem> {
        &self.notes[s]
    }

    pub fn run(&self, word: &[FieldLabel]) -> Option<usize> {
        word.iter().try_fold(0, |s, l| self.step(s, l))
    }

    pub fn accepts(&self, word: &[FieldLabel]) -> bool {
        self.run(word).is_some()
    }

    pub fn label_at(&self, word: &[FieldLabel]) -> Option<Elem> {
        self.run(word).map(|s| self.labels[s])
    }

    /// Accepted words of length at most `max`, shortest first.
    pub fn words(&self, max: usize) -> Vec<Vec<FieldLabel>> {
        let mut out = vec![vec![]];
        let mut frontier = vec![(0usize, vec![])];
        for _ in 0..max {
            let mut next = Vec::new();
            for (s, w) in &frontier {
                for (l, t) in self.edges(*s) {
                    let mut w2: Vec<FieldLabel> = w.clone();
                    w2.push(l.clone());
                    out.push(w2.clone());
                    next.push((t, w2));
                }
            }
            frontier = next;
        }
        out
    }

    /// Whether some state is reachable from itself.
    pub fn is_recursive(&self) -> bool {
        (0..self.state_count()).any(|s| {
            self.reachable_from(s)
                .iter()
                .any(|&t| self.edges(t).any(|(_, u)| u == s))
        })
    }

    pub fn reachable_from(&self, s: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![s];
        while let Some(x) = stack.pop() {
            if seen.insert(x) {
                stack.extend(self.edges(x).map(|(_, t)| t));
            }
        }
        seen
    }

    /// The sketch rooted at `s`.
    pub fn subsketch(&self, s: usize) -> Sketch {
        Self::canonical(
            self.trans.clone(),
            self.labels.clone(),
            self.notes.clone(),
            s,
        )
    }

    /// Points the `label` edge of `parent` at `target`.
    pub fn redirect(&self, parent: usize, label: &FieldLabel, target: usize) -> Sketch {
        let mut trans = self.trans.clone();
        trans[parent].insert(label.clone(), target);
        Self::canonical(trans, self.labels.clone(), self.notes.clone(), 0)
    }

    /// Redirects every edge into `old` to `new`.
    pub fn replace_state(&self, old: usize, new: usize) -> Sketch {
        let trans = self
            .trans
            .iter()
            .map(|t| {
                t.iter()
                    .map(|(l, &u)| (l.clone(), if u == old { new } else { u }))
                    .collect()
            })
            .collect();
        Self::canonical(trans, self.labels.clone(), self.notes.clone(), 0)
    }

    /// Greatest lower bound: union of languages; labels meet at covariant
    /// words and join at contravariant ones.
    pub fn meet(&self, other: &Sketch, l: &Lattice) -> Sketch {
        product(self, other, l, true)
    }

    /// Least upper bound: intersection of languages; labels join at
    /// covariant words and meet at contravariant ones.
    pub fn join(&self, other: &Sketch, l: &Lattice) -> Sketch {
        product(self, other, l, false)
    }

    /// Subtyping between sketches: `self` has every word of `other`, with
    /// labels ordered by word variance.
    pub fn is_subsketch_of(&self, other: &Sketch, l: &Lattice) -> bool {
        let mut seen = BTreeSet::new();
        let mut stack = vec![(0usize, 0usize, Variance::Covariant)];
        while let Some((a, b, v)) = stack.pop() {
            if !seen.insert((a, b, v)) {
                continue;
            }
            let ok = match v {
                Variance::Covariant => l.leq(self.labels[a], other.labels[b]),
                Variance::Contravariant => l.leq(other.labels[b], self.labels[a]),
            };
            if !ok {
                return false;
            }
            for (lab, tb) in other.edges(b) {
                match self.step(a, lab) {
                    Some(ta) => stack.push((ta, tb, v * lab.variance())),
                    None => return false,
                }
            }
        }
        true
    }

    pub fn to_dot(&self, l: &Lattice, name: &str) -> String {
        let mut out = format!("digraph \"{}\" {{\n", name.replace('"', "\\\""));
        for s in 0..self.state_count() {
            let mut label = l.name(self.labels[s]).to_string();
            let tags: Vec<&str> = self.notes[s]
                .iter()
                .filter(|&&e| l.is_tag(e))
                .map(|&e| l.name(e))
                .collect();
            if !tags.is_empty() {
                label.push_str(&format!(" #{}", tags.join(" #")));
            }
            let shape = if s == 0 { "doublecircle" } else { "circle" };
            let _ = writeln!(out, "  s{s} [label=\"{label}\", shape={shape}];");
        }
        for s in 0..self.state_count() {
            for (lab, t) in self.edges(s) {
                let _ = writeln!(out, "  s{s} -> s{t} [label=\".{lab}\"];");
            }
        }
        out.push_str("}\n");
        out
    }
}

fn product(x: &Sketch, y: &Sketch, l: &Lattice, union: bool) -> Sketch {
    type Key = (Option<usize>, Option<usize>, Variance);
    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut keys: Vec<Key> = Vec::new();
    let mut trans: Vec<BTreeMap<FieldLabel, usize>> = Vec::new();
    let start = (Some(0), Some(0), Variance::Covariant);
    index.insert(start, 0);
    keys.push(start);
    trans.push(BTreeMap::new());
    let mut i = 0;
    while i < keys.len() {
        let (a, b, v) = keys[i];
        let mut labels: BTreeSet<&FieldLabel> = BTreeSet::new();
        let xa: Vec<(&FieldLabel, usize)> = a.map(|a| x.edges(a).collect()).unwrap_or_default();
        let yb: Vec<(&FieldLabel, usize)> = b.map(|b| y.edges(b).collect()).unwrap_or_default();
        labels.extend(xa.iter().map(|(l, _)| *l));
        labels.extend(yb.iter().map(|(l, _)| *l));
        for lab in labels {
            let ta = a.and_then(|a| x.step(a, lab));
            let tb = b.and_then(|b| y.step(b, lab));
            if !union && (ta.is_none() || tb.is_none()) {
                continue;
            }
            let key = (ta, tb, v * lab.variance());
            let id = *index.entry(key).or_insert_with(|| {
                keys.push(key);
                trans.push(BTreeMap::new());
                keys.len() - 1
            });
            trans[i].insert(lab.clone(), id);
        }
        i += 1;
    }
    let mut labels = Vec::with_capacity(keys.len());
    let mut notes = Vec::with_capacity(keys.len());
    for &(a, b, v) in &keys {
        let label = match (a, b) {
            (Some(a), Some(b)) => {
                let (p, q) = (x.labels[a], y.labels[b]);
                if union == v.is_covariant() {
                    l.meet(p, q)
                } else {
                    l.join(p, q)
                }
            }
            (Some(a), None) => x.labels[a],
            (None, Some(b)) => y.labels[b],
            (None, None) => unreachable!("product state with no component"),
        };
        labels.push(label);
        let mut n = BTreeSet::new();
        if let Some(a) = a {
            n.extend(x.notes[a].iter().copied());
        }
        if let Some(b) = b {
            n.extend(y.notes[b].iter().copied());
        }
        notes.push(n);
    }
    Sketch::canonical(trans, labels, notes, 0)
}
