use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use super::graph::{ConstraintGraph, EdgeKind, NodeId, END, START};
use super::{Op, Symbol};
use crate::constraint::DerivedTypeVar;
use crate::label::{variance_of_word, FieldLabel, Variance};

pub type StateId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StateKind {
    Start,
    End,
    Internal,
}

/// Deterministic, minimized automaton over pop/push moves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transducer {
    pub kinds: Vec<StateKind>,
    /// Stack variance at each state (none for Start/End).
    pub variances: Vec<Option<Variance>>,
    pub trans: Vec<BTreeMap<Op, StateId>>,
    pub start: StateId,
    pub accept: Option<StateId>,
}

impl Transducer {
    fn empty() -> Self {
        Transducer {
            kinds: vec![StateKind::Start],
            variances: vec![None],
            trans: vec![BTreeMap::new()],
            start: 0,
            accept: None,
        }
    }

    pub fn state_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn run<'a>(&self, ops: impl IntoIterator<Item = &'a Op>) -> Option<StateId> {
        let mut s = self.start;
        for op in ops {
            s = *self.trans[s].get(op)?;
        }
        Some(s)
    }

    pub fn accepts(&self, ops: &[Op]) -> bool {
        self.accept.is_some() && self.run(ops) == self.accept
    }

    pub fn step(&self, s: StateId, op: &Op) -> Option<StateId> {
        self.trans[s].get(op).copied()
    }

    /// Collapses chains of states into multi-move edges; see [`CompactTransducer`].
    pub fn compact(&self) -> CompactTransducer {
        CompactTransducer::from_dfa(self)
    }
}

/// Nodes from which `END` is reachable along any edges.
fn co_reachable(g: &ConstraintGraph) -> Vec<bool> {
    let n = g.node_count();
    let mut rev: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for src in 0..n as NodeId {
        for &(_, dst) in g.out_edges(src) {
            rev[dst as usize].push(src);
        }
    }
    let mut live = vec![false; n];
    let mut stack = vec![END];
    while let Some(v) = stack.pop() {
        if !std::mem::replace(&mut live[v as usize], true) {
            stack.extend(rev[v as usize].iter().copied());
        }
    }
    live
}

/// Unit-edge closures of single (node, phase) pairs, computed on demand.
struct Closures<'g> {
    g: &'g ConstraintGraph,
    live: Vec<bool>,
    memo: HashMap<u64, Vec<u64>>,
}

impl Closures<'_> {
    fn of(&mut self, seed: u64) -> &[u64] {
        if !self.memo.contains_key(&seed) {
            let phase = seed & 1;
            let mut seen: Vec<u64> = Vec::new();
            let mut mark: HashSet<NodeId> = HashSet::new();
            let mut stack = vec![(seed >> 1) as NodeId];
            while let Some(node) = stack.pop() {
                if !mark.insert(node) {
                    continue;
                }
                seen.push(((node as u64) << 1) | phase);
                for &(kind, dst) in self.g.out_edges(node) {
                    if kind == EdgeKind::One && self.live[dst as usize] {
                        stack.push(dst);
                    }
                }
            }
            seen.sort_unstable();
            self.memo.insert(seed, seen);
        }
        &self.memo[&seed]
    }

    fn union(&mut self, seeds: &[u64]) -> Vec<u64> {
        let mut out: Vec<u64> = Vec::new();
        for &s in seeds {
            out.extend_from_slice(self.of(s));
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Restricts the saturated graph to pop*push* paths whose pivot is covariant,
/// then determinizes and minimizes.
pub fn shadow(g: &ConstraintGraph) -> Transducer {
    let pack = |n: NodeId, phase: u64| ((n as u64) << 1) | phase;
    let live = co_reachable(g);
    if !live[START as usize] {
        return Transducer::empty();
    }
    let mut cl = Closures {
        g,
        live,
        memo: HashMap::new(),
    };
    let start_set = cl.union(&[pack(START, 0)]);
    let mut subsets: Vec<Vec<u64>> = vec![start_set.clone()];
    let mut index: HashMap<Vec<u64>, usize> = HashMap::from([(start_set, 0)]);
    let mut trans: Vec<BTreeMap<Op, usize>> = vec![BTreeMap::new()];
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        // (is_push, symbol) -> targets
        let mut moves: BTreeMap<(bool, u32), Vec<u64>> = BTreeMap::new();
        for &s in &subsets[i] {
            let (node, phase) = ((s >> 1) as NodeId, s & 1);
            for &(kind, dst) in g.out_edges(node) {
                if !cl.live[dst as usize] {
                    continue;
                }
                match kind {
                    EdgeKind::One => {}
                    EdgeKind::Pop(sym) if phase == 0 => {
                        moves.entry((false, sym)).or_default().push(pack(dst, 0))
                    }
                    EdgeKind::Pop(_) => {}
                    EdgeKind::Push(sym) => {
                        if phase == 1 || g.node_data(node).variance() == Some(Variance::Covariant) {
                            moves.entry((true, sym)).or_default().push(pack(dst, 1));
                        }
                    }
                }
            }
        }
        for ((push, sym), targets) in moves {
            let set = cl.union(&targets);
            let j = match index.get(&set) {
                Some(&j) => j,
                None => {
                    let j = subsets.len();
                    subsets.push(set.clone());
                    index.insert(set, j);
                    trans.push(BTreeMap::new());
                    queue.push_back(j);
                    j
                }
            };
            let sym = g.symbol(sym).clone();
            trans[i].insert(if push { Op::Push(sym) } else { Op::Pop(sym) }, j);
        }
    }
    let accepting: Vec<bool> = subsets
        .iter()
        .map(|s| s.binary_search(&pack(END, 1)).is_ok())
        .collect();
    let variances: Vec<Option<Variance>> = subsets
        .iter()
        .map(|set| {
            set.iter()
                .find_map(|&s| g.node_data((s >> 1) as NodeId).variance())
        })
        .collect();
    minimize(trans, accepting, variances)
}

/// Trims useless states, merges equivalent ones, and renumbers breadth-first.
fn minimize(
    trans: Vec<BTreeMap<Op, usize>>,
    accepting: Vec<bool>,
    variances: Vec<Option<Variance>>,
) -> Transducer {
    let n = trans.len();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, t) in trans.iter().enumerate() {
        for &j in t.values() {
            rev[j].push(i);
        }
    }
    let mut live = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&i| accepting[i]).collect();
    while let Some(s) = stack.pop() {
        if !live[s] {
            live[s] = true;
            stack.extend(rev[s].iter().copied());
        }
    }
    if !live[0] {
        return Transducer::empty();
    }

    // Moore refinement over live states.
    // Variance is part of a state's meaning, so it seeds the partition.
    let seed: BTreeSet<(bool, Option<Variance>)> =
        (0..n).map(|i| (accepting[i], variances[i])).collect();
    let seed: Vec<(bool, Option<Variance>)> = seed.into_iter().collect();
    let mut class: Vec<usize> = (0..n)
        .map(|i| seed.binary_search(&(accepting[i], variances[i])).unwrap())
        .collect();
    loop {
        let mut sigs: BTreeMap<(usize, Vec<(&Op, usize)>), usize> = BTreeMap::new();
        let mut next = vec![0usize; n];
        for i in 0..n {
            if !live[i] {
                continue;
            }
            let sig: Vec<(&Op, usize)> = trans[i]
                .iter()
                .filter(|(_, &j)| live[j])
                .map(|(op, &j)| (op, class[j]))
                .collect();
            let key = (class[i], sig);
            let len = sigs.len();
            next[i] = *sigs.entry(key).or_insert(len);
        }
        let before = (0..n)
            .filter(|&i| live[i])
            .map(|i| class[i])
            .collect::<BTreeSet<_>>()
            .len();
        let after = sigs.len();
        class = next;
        if before == after {
            break;
        }
    }

    let mut order: Vec<usize> = Vec::new();
    let mut new_id: HashMap<usize, usize> = HashMap::new();
    let mut rep: Vec<usize> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    new_id.insert(class[0], 0);
    rep.push(0);
    order.push(class[0]);
    while let Some(s) = queue.pop_front() {
        for &j in trans[s].values() {
            if live[j] && !new_id.contains_key(&class[j]) {
                new_id.insert(class[j], rep.len());
                rep.push(j);
                order.push(class[j]);
                queue.push_back(j);
            }
        }
    }
    let m = rep.len();
    let mut out = Transducer {
        kinds: vec![StateKind::Internal; m],
        variances: vec![None; m],
        trans: vec![BTreeMap::new(); m],
        start: 0,
        accept: None,
    };
    for (k, &s) in rep.iter().enumerate() {
        out.variances[k] = variances[s];
        for (op, &j) in &trans[s] {
            if live[j] {
                out.trans[k].insert(op.clone(), new_id[&class[j]]);
            }
        }
        if accepting[s] {
            out.accept = Some(k);
            out.kinds[k] = StateKind::End;
            out.variances[k] = None;
        }
    }
    out.kinds[0] = StateKind::Start;
    out.variances[0] = None;
    out
}

fn query_word(
    lhs: &DerivedTypeVar,
    u: &[FieldLabel],
    rhs: &DerivedTypeVar,
    v: &[FieldLabel],
) -> Vec<Op> {
    let mut ops = vec![Op::Pop(Symbol::Var(lhs.base.clone(), variance_of_word(u)))];
    ops.extend(u.iter().map(|l| Op::Pop(Symbol::Label(l.clone()))));
    ops.extend(v.iter().rev().map(|l| Op::Push(Symbol::Label(l.clone()))));
    ops.push(Op::Push(Symbol::Var(rhs.base.clone(), variance_of_word(v))));
    ops
}

fn pointer_pair(u: &[FieldLabel], v: &[FieldLabel]) -> bool {
    if u.len() != v.len() {
        return false;
    }
    let Some(i) = u.iter().zip(v).position(|(a, b)| a != b) else {
        return false;
    };
    if u[..i] != v[..i] || u[i + 1..] != v[i + 1..] {
        return false;
    }
    let tail = variance_of_word(&u[i + 1..]);
    matches!(
        (&u[i], &v[i], tail),
        (FieldLabel::Store, FieldLabel::Load, Variance::Covariant)
            | (FieldLabel::Load, FieldLabel::Store, Variance::Contravariant)
    )
}

/// Whether `lhs <= rhs` has an elementary derivation, given the transducer of
/// the constraint set. Tries every shared suffix, mirroring under contravariant ones.
pub fn recognizes(t: &Transducer, lhs: &DerivedTypeVar, rhs: &DerivedTypeVar) -> bool {
    if lhs == rhs {
        return true;
    }
    if lhs.base == rhs.base && pointer_pair(&lhs.path, &rhs.path) {
        return true;
    }
    let (u, v) = (&lhs.path, &rhs.path);
    let max = u.len().min(v.len());
    for k in 0..=max {
        if k > 0 && u[u.len() - k] != v[v.len() - k] {
            break;
        }
        let (u1, v1) = (&u[..u.len() - k], &v[..v.len() - k]);
        let ops = if variance_of_word(&u[u.len() - k..]) == Variance::Covariant {
            query_word(lhs, u1, rhs, v1)
        } else {
            query_word(rhs, v1, lhs, u1)
        };
        if t.accepts(&ops) {
            return true;
        }
    }
    false
}

/// An edge of the collapsed automaton: pops then pushes (in push order).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CompactEdge {
    pub src: StateId,
    pub dst: StateId,
    pub ops: Vec<Op>,
}

impl CompactEdge {
    pub fn pops(&self) -> impl Iterator<Item = &Symbol> {
        self.ops.iter().filter(|o| o.is_pop()).map(Op::symbol)
    }

    pub fn pushes(&self) -> impl Iterator<Item = &Symbol> {
        self.ops.iter().filter(|o| !o.is_pop()).map(Op::symbol)
    }

    /// `pops / pushes` with variance marks dropped.
    pub fn label(&self) -> String {
        let side = |syms: Vec<&Symbol>| {
            let parts: Vec<String> = syms
                .iter()
                .map(|s| match s {
                    Symbol::Var(v, _) => v.to_string(),
                    Symbol::Label(l) => l.to_string(),
                })
                .collect();
            if parts.is_empty() {
                "ε".to_string()
            } else {
                parts.join(".")
            }
        };
        let pushes: Vec<&Symbol> = self
            .pushes()
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        format!("{} / {}", side(self.pops().collect()), side(pushes))
    }
}

/// The automaton after eliminating every internal state without a self-loop.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompactTransducer {
    pub kinds: Vec<StateKind>,
    pub variances: Vec<Option<Variance>>,
    pub edges: BTreeSet<CompactEdge>,
    pub start: StateId,
    pub end: Option<StateId>,
}

impl CompactTransducer {
    fn from_dfa(t: &Transducer) -> Self {
        let mut edges: Vec<CompactEdge> = Vec::new();
        for (s, tr) in t.trans.iter().enumerate() {
            for (op, &d) in tr {
                edges.push(CompactEdge {
                    src: s,
                    dst: d,
                    ops: vec![op.clone()],
                });
            }
        }
        let mut outs: HashMap<StateId, BTreeSet<CompactEdge>> = HashMap::new();
        let mut ins: HashMap<StateId, BTreeSet<CompactEdge>> = HashMap::new();
        for e in &edges {
            outs.entry(e.src).or_default().insert(e.clone());
            ins.entry(e.dst).or_default().insert(e.clone());
        }
        // Deepest first. Eliminating the deepest candidate never shortens a
        // path to another candidate, so depths are computed once.
        let mut depth: HashMap<StateId, usize> = HashMap::from([(t.start, 0)]);
        let mut queue = VecDeque::from([t.start]);
        while let Some(s) = queue.pop_front() {
            for e in outs.get(&s).into_iter().flatten() {
                if !depth.contains_key(&e.dst) {
                    depth.insert(e.dst, depth[&s] + 1);
                    queue.push_back(e.dst);
                }
            }
        }
        let mut order: Vec<StateId> = (0..t.state_count())
            .filter(|&s| t.kinds[s] == StateKind::Internal)
            .collect();
        order.sort_by_key(|s| (std::cmp::Reverse(depth.get(s).copied().unwrap_or(0)), *s));
        for q in order {
            let q_out = outs.remove(&q).unwrap_or_default();
            if q_out.iter().any(|e| e.dst == q) {
                outs.insert(q, q_out);
                continue;
            }
            let q_in = ins.remove(&q).unwrap_or_default();
            for e in &q_in {
                outs.get_mut(&e.src).map(|o| o.remove(e));
            }
            for e in &q_out {
                ins.get_mut(&e.dst).map(|i| i.remove(e));
            }
            for i in &q_in {
                for o in &q_out {
                    let mut ops = i.ops.clone();
                    ops.extend(o.ops.iter().cloned());
                    let e = CompactEdge {
                        src: i.src,
                        dst: o.dst,
                        ops,
                    };
                    outs.entry(e.src).or_default().insert(e.clone());
                    ins.entry(e.dst).or_default().insert(e);
                }
            }
        }
        let edges: BTreeSet<CompactEdge> = outs.into_values().flatten().collect();
        // Renumber the survivors: Start first, internal states by BFS, End last.
        let mut order: Vec<StateId> = vec![t.start];
        let mut queue = VecDeque::from([t.start]);
        while let Some(s) = queue.pop_front() {
            for e in edges.iter().filter(|e| e.src == s) {
                if !order.contains(&e.dst) && t.kinds[e.dst] == StateKind::Internal {
                    order.push(e.dst);
                    queue.push_back(e.dst);
                }
            }
        }
        if let Some(a) = t.accept {
            order.push(a);
        }
        let id: HashMap<StateId, StateId> =
            order.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        CompactTransducer {
            kinds: order.iter().map(|&s| t.kinds[s]).collect(),
            variances: order.iter().map(|&s| t.variances[s]).collect(),
            edges: edges
                .into_iter()
                .filter(|e| id.contains_key(&e.src) && id.contains_key(&e.dst))
                .map(|e| CompactEdge {
                    src: id[&e.src],
                    dst: id[&e.dst],
                    ops: e.ops,
                })
                .collect(),
            start: 0,
            end: t.accept.map(|a| id[&a]),
        }
    }

    pub fn internal_states(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.kinds.len()).filter(|&s| self.kinds[s] == StateKind::Internal)
    }
}
