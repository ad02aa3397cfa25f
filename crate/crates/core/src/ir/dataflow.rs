use std::collections::{BTreeMap, BTreeSet};

use super::{Instr, Loc, Operand, Procedure};

/// A definition site: the procedure entry or the statement at an index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Def {
    Initial,
    At(usize),
}

/// Statically known value of a definition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Value {
    Unknown,
    Const(i64),
    /// `base` as used at statement `at`, plus `delta` bytes.
    Offset {
        base: Loc,
        at: usize,
        delta: i64,
    },
}

pub type DefMap = BTreeMap<Loc, BTreeSet<Def>>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AbstractState {
    /// Reaching definitions on entry to each statement.
    pub reaching: Vec<DefMap>,
    /// Values of definitions made by each statement; absent means unknown.
    pub values: BTreeMap<usize, Value>,
}

impl AbstractState {
    pub fn defs(&self, loc: &Loc, at: usize) -> BTreeSet<Def> {
        self.reaching
            .get(at)
            .and_then(|m| m.get(loc))
            .cloned()
            .unwrap_or_else(|| BTreeSet::from([Def::Initial]))
    }

    pub fn value(&self, def: Def) -> Value {
        match def {
            Def::Initial => Value::Unknown,
            Def::At(i) => self.values.get(&i).cloned().unwrap_or(Value::Unknown),
        }
    }

    /// Value of `loc` read at statement `at`, if it has a single definition.
    pub fn value_at(&self, loc: &Loc, at: usize) -> Value {
        let defs = self.defs(loc, at);
        match defs.iter().next() {
            Some(&d) if defs.len() == 1 => self.value(d),
            _ => Value::Unknown,
        }
    }
}

pub(crate) fn successors(p: &Procedure, i: usize) -> Vec<usize> {
    let next = if i + 1 < p.body.len() {
        vec![i + 1]
    } else {
        vec![]
    };
    match &p.body[i].instr {
        Instr::Ret => vec![],
        Instr::Jmp(t) => p.index_of(t).into_iter().collect(),
        Instr::Branch { target, .. } => {
            let mut s: Vec<usize> = p.index_of(target).into_iter().collect();
            s.extend(next);
            s
        }
        _ => next,
    }
}

fn all_locs(p: &Procedure) -> BTreeSet<Loc> {
    let mut locs: BTreeSet<Loc> = p.ins.iter().chain(&p.outs).cloned().collect();
    for s in &p.body {
        locs.extend(s.instr.def().into_iter().cloned());
        locs.extend(s.instr.uses().into_iter().cloned());
    }
    locs
}

/// Forward may-analysis to a fixed point.
pub fn compute_reaching_defs(p: &Procedure) -> AbstractState {
    let n = p.body.len();
    let mut reaching: Vec<Option<DefMap>> = vec![None; n];
    if n == 0 {
        return AbstractState::default();
    }
    reaching[0] = Some(
        all_locs(p)
            .into_iter()
            .map(|l| (l, BTreeSet::from([Def::Initial])))
            .collect(),
    );
    let mut work = vec![0];
    while let Some(i) = work.pop() {
        let mut out = reaching[i].clone().expect("visited");
        for d in p.body[i].instr.def() {
            out.insert(d.clone(), BTreeSet::from([Def::At(i)]));
        }
        for s in successors(p, i) {
            let changed = match &mut reaching[s] {
                slot @ None => {
                    *slot = Some(out.clone());
                    true
                }
                Some(m) => {
                    let mut changed = false;
                    for (loc, defs) in &out {
                        let e = m.entry(loc.clone()).or_default();
                        for d in defs {
                            changed |= e.insert(*d);
                        }
                    }
                    changed
                }
            };
            if changed && !work.contains(&s) {
                work.push(s);
            }
        }
    }
    AbstractState {
        reaching: reaching
            .into_iter()
            .map(Option::unwrap_or_default)
            .collect(),
        values: BTreeMap::new(),
    }
}

/// Reaching definitions plus constants and pointer translations.
pub fn track_constants(p: &Procedure) -> AbstractState {
    let mut st = compute_reaching_defs(p);
    let order = reverse_postorder(p);
    // Values only flow forward along single-def chains, so a few passes settle.
    for _ in 0..=p.body.len() {
        let mut changed = false;
        for &i in &order {
            let v = eval(p, &st, i);
            let old = st.values.get(&i).cloned().unwrap_or(Value::Unknown);
            if v != old {
                changed = true;
                if v == Value::Unknown {
                    st.values.remove(&i);
                } else {
                    st.values.insert(i, v);
                }
            }
        }
        if !changed {
            break;
        }
    }
    st
}

fn operand_value(st: &AbstractState, o: &Operand, at: usize) -> Value {
    match o {
        Operand::Imm(v) => Value::Const(*v),
        Operand::Loc(l) => st.value_at(l, at),
    }
}

fn translate(st: &AbstractState, base: &Loc, at: usize, delta: i64) -> Value {
    match st.value_at(base, at) {
        Value::Const(c) => Value::Const(c.wrapping_add(delta)),
        Value::Offset { base, at, delta: d } => Value::Offset {
            base,
            at,
            delta: d.wrapping_add(delta),
        },
        Value::Unknown => Value::Offset {
            base: base.clone(),
            at,
            delta,
        },
    }
}

fn eval(p: &Procedure, st: &AbstractState, i: usize) -> Value {
    match &p.body[i].instr {
        Instr::Const { value, .. } => Value::Const(*value),
        Instr::Mov { src, .. } => operand_value(st, src, i),
        Instr::Xor {
            a,
            b: Operand::Loc(b),
            ..
        } if a == b => Value::Const(0),
        Instr::Xor { a, b, .. } => match (st.value_at(a, i), operand_value(st, b, i)) {
            (Value::Const(x), Value::Const(y)) => Value::Const(x ^ y),
            _ => Value::Unknown,
        },
        Instr::Add { a, b, .. } => match (st.value_at(a, i), operand_value(st, b, i)) {
            (_, Value::Const(n)) => translate(st, a, i, n),
            (Value::Const(n), _) => match b {
                Operand::Loc(b) => translate(st, b, i, n),
                Operand::Imm(_) => unreachable!("immediates are constant"),
            },
            _ => Value::Unknown,
        },
        Instr::Sub { a, b, .. } => match operand_value(st, b, i) {
            Value::Const(n) => translate(st, a, i, n.wrapping_neg()),
            _ => Value::Unknown,
        },
        _ => Value::Unknown,
    }
}

pub(crate) fn reverse_postorder(p: &Procedure) -> Vec<usize> {
    let n = p.body.len();
    let mut seen = vec![false; n];
    let mut post = Vec::with_capacity(n);
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        stack.push((root, 0));
        while let Some(&mut (v, ref mut k)) = stack.last_mut() {
            let succ = successors(p, v);
            if let Some(&s) = succ.get(*k) {
                *k += 1;
                if !seen[s] {
                    seen[s] = true;
                    stack.push((s, 0));
                }
            } else {
                post.push(v);
                stack.pop();
            }
        }
    }
    post.reverse();
    post
}
