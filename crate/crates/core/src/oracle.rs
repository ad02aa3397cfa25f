//! Bounded brute-force closure of the subtyping deduction rules.
//!
//! Used as ground truth for the automaton-based engine and as an
//! entailment checker on small inputs.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::constraint::{Constraint, ConstraintSet, DerivedTypeVar};
use crate::label::{FieldLabel, Variance};

pub const DEFAULT_FACT_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("oracle fact cap of {0} exceeded")]
    ResourceLimit(usize),
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub bound: usize,
    /// Restricts derived words to these labels when set.
    pub labels: Option<BTreeSet<FieldLabel>>,
    pub fact_cap: usize,
}

impl OracleConfig {
    pub fn with_bound(bound: usize) -> Self {
        OracleConfig {
            bound,
            labels: None,
            fact_cap: DEFAULT_FACT_CAP,
        }
    }
}

type Id = u32;

#[derive(Default)]
struct Interner {
    dtvs: Vec<DerivedTypeVar>,
    ids: HashMap<DerivedTypeVar, Id>,
    children: HashMap<(Id, FieldLabel), Id>,
    parent: Vec<Option<(Id, FieldLabel)>>,
}

impl Interner {
    fn intern(&mut self, d: &DerivedTypeVar) -> Id {
        if let Some(&id) = self.ids.get(d) {
            return id;
        }
        let parent = d
            .parent()
            .map(|p| (self.intern(&p), d.last().unwrap().clone()));
        let id = self.dtvs.len() as Id;
        self.dtvs.push(d.clone());
        self.ids.insert(d.clone(), id);
        self.parent.push(parent.clone());
        if let Some((p, l)) = parent {
            self.children.insert((p, l), id);
        }
        id
    }
}

enum Fact {
    Exists(Id),
    Sub(Id, Id),
}

/// All facts derivable with words no longer than the bound.
pub struct EntailmentClosure {
    bound: usize,
    interner: Interner,
    exists: Vec<bool>,
    subs: HashSet<(Id, Id)>,
}

struct Engine<'a> {
    cfg: &'a OracleConfig,
    st: EntailmentClosure,
    succ: Vec<Vec<Id>>,
    pred: Vec<Vec<Id>>,
    live_children: Vec<Vec<(FieldLabel, Id)>>,
    queue: VecDeque<Fact>,
    count: usize,
}

impl<'a> Engine<'a> {
    fn grow(&mut self) {
        let n = self.st.interner.dtvs.len();
        self.st.exists.resize(n, false);
        self.succ.resize(n, Vec::new());
        self.pred.resize(n, Vec::new());
        self.live_children.resize(n, Vec::new());
    }

    fn child(&mut self, parent: Id, label: &FieldLabel) -> Option<Id> {
        if let Some(&c) = self.st.interner.children.get(&(parent, label.clone())) {
            return Some(c);
        }
        let d = self.st.interner.dtvs[parent as usize].push(label.clone());
        if d.path.len() > self.st.bound || d.is_const() {
            return None;
        }
        if let Some(allowed) = &self.cfg.labels {
            if !allowed.contains(label) {
                return None;
            }
        }
        let id = self.st.interner.intern(&d);
        self.grow();
        Some(id)
    }

    fn bump(&mut self) -> Result<(), OracleError> {
        self.count += 1;
        if self.count > self.cfg.fact_cap {
            Err(OracleError::ResourceLimit(self.cfg.fact_cap))
        } else {
            Ok(())
        }
    }

    fn add_exists(&mut self, x: Id) -> Result<(), OracleError> {
        if !self.st.exists[x as usize] {
            self.st.exists[x as usize] = true;
            self.bump()?;
            self.queue.push_back(Fact::Exists(x));
        }
        Ok(())
    }

    fn add_sub(&mut self, a: Id, b: Id) -> Result<(), OracleError> {
        if self.st.subs.insert((a, b)) {
            self.bump()?;
            self.succ[a as usize].push(b);
            self.pred[b as usize].push(a);
            self.queue.push_back(Fact::Sub(a, b));
        }
        Ok(())
    }

    /// S-Field for `a <= b` at label `l`, given Exists(b.l).
    fn field(&mut self, a: Id, l: &FieldLabel, bl: Id) -> Result<(), OracleError> {
        if let Some(al) = self.child(a, l) {
            match l.variance() {
                Variance::Covariant => self.add_sub(al, bl)?,
                Variance::Contravariant => self.add_sub(bl, al)?,
            }
        }
        Ok(())
    }

    fn on_exists(&mut self, x: Id) -> Result<(), OracleError> {
        self.add_sub(x, x)?;
        let Some((p, l)) = self.st.interner.parent[x as usize].clone() else {
            return Ok(());
        };
        self.add_exists(p)?;
        self.live_children[p as usize].push((l.clone(), x));
        // T-InheritL / T-InheritR
        for b in self.succ[p as usize].clone() {
            if let Some(bl) = self.child(b, &l) {
                self.add_exists(bl)?;
            }
        }
        for a in self.pred[p as usize].clone() {
            if let Some(al) = self.child(a, &l) {
                self.add_exists(al)?;
            }
            // S-Field with p as the right-hand side
            self.field(a, &l, x)?;
        }
        // S-Pointer
        let twin = match l {
            FieldLabel::Load => Some(FieldLabel::Store),
            FieldLabel::Store => Some(FieldLabel::Load),
            _ => None,
        };
        if let Some(t) = twin {
            if let Some(&y) = self.st.interner.children.get(&(p, t.clone())) {
                if self.st.exists[y as usize] {
                    match l {
                        FieldLabel::Load => self.add_sub(y, x)?,
                        _ => self.add_sub(x, y)?,
                    }
                }
            }
        }
        Ok(())
    }

    fn on_sub(&mut self, a: Id, b: Id) -> Result<(), OracleError> {
        self.add_exists(a)?;
        self.add_exists(b)?;
        for c in self.succ[b as usize].clone() {
            self.add_sub(a, c)?;
        }
        for z in self.pred[a as usize].clone() {
            self.add_sub(z, b)?;
        }
        for (l, _) in self.live_children[a as usize].clone() {
            if let Some(bl) = self.child(b, &l) {
                self.add_exists(bl)?;
            }
        }
        for (l, bl) in self.live_children[b as usize].clone() {
            if let Some(al) = self.child(a, &l) {
                self.add_exists(al)?;
            }
            self.field(a, &l, bl)?;
        }
        Ok(())
    }

    fn run(mut self, c: &ConstraintSet) -> Result<EntailmentClosure, OracleError> {
        let closed = c.close_prefixes();
        for con in closed.iter() {
            for d in con.dtvs() {
                self.st.interner.intern(d);
            }
        }
        self.grow();
        for con in closed.iter() {
            match con {
                Constraint::Exists(d) => {
                    let id = self.st.interner.ids[d];
                    self.add_exists(id)?;
                }
                Constraint::Subtype(a, b) => {
                    let (a, b) = (self.st.interner.ids[a], self.st.interner.ids[b]);
                    self.add_sub(a, b)?;
                }
                Constraint::Add(..) | Constraint::Sub(..) => {}
            }
        }
        while let Some(f) = self.queue.pop_front() {
            match f {
                Fact::Exists(x) => self.on_exists(x)?,
                Fact::Sub(a, b) => self.on_sub(a, b)?,
            }
        }
        Ok(self.st)
    }
}

pub fn closure(c: &ConstraintSet, cfg: &OracleConfig) -> Result<EntailmentClosure, OracleError> {
    let engine = Engine {
        cfg,
        st: EntailmentClosure {
            bound: cfg.bound,
            interner: Interner::default(),
            exists: Vec::new(),
            subs: HashSet::new(),
        },
        succ: Vec::new(),
        pred: Vec::new(),
        live_children: Vec::new(),
        queue: VecDeque::new(),
        count: 0,
    };
    engine.run(c)
}

impl EntailmentClosure {
    pub fn bound(&self) -> usize {
        self.bound
    }

    pub fn exists(&self, d: &DerivedTypeVar) -> bool {
        self.interner
            .ids
            .get(d)
            .is_some_and(|&i| self.exists[i as usize])
    }

    pub fn subtype(&self, a: &DerivedTypeVar, b: &DerivedTypeVar) -> bool {
        match (self.interner.ids.get(a), self.interner.ids.get(b)) {
            (Some(&a), Some(&b)) => self.subs.contains(&(a, b)),
            _ => false,
        }
    }

    pub fn holds(&self, c: &Constraint) -> bool {
        match c {
            Constraint::Exists(d) => self.exists(d),
            Constraint::Subtype(a, b) => self.subtype(a, b),
            Constraint::Add(..) | Constraint::Sub(..) => false,
        }
    }

    pub fn exists_facts(&self) -> impl Iterator<Item = &DerivedTypeVar> {
        self.interner
            .dtvs
            .iter()
            .enumerate()
            .filter(|(i, _)| self.exists[*i])
            .map(|(_, d)| d)
    }

    pub fn subtype_facts(&self) -> impl Iterator<Item = (&DerivedTypeVar, &DerivedTypeVar)> {
        self.subs.iter().map(|&(a, b)| {
            (
                &self.interner.dtvs[a as usize],
                &self.interner.dtvs[b as usize],
            )
        })
    }

    pub fn fact_count(&self) -> usize {
        self.subs.len() + self.exists.iter().filter(|e| **e).count()
    }
}

pub fn entails(c: &ConstraintSet, goal: &Constraint, bound: usize) -> Result<bool, OracleError> {
    Ok(closure(c, &OracleConfig::with_bound(bound))?.holds(goal))
}

/// Pointer/integer classification used by the additive rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AddTag {
    Pointer,
    Integer,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdditiveOutcome {
    /// Input constraints minus the fully resolved additive ones.
    pub constraints: ConstraintSet,
    pub tags: BTreeMap<DerivedTypeVar, AddTag>,
    pub consumed: Vec<Constraint>,
    pub warnings: Vec<String>,
}

use AddTag::{Integer as I, Pointer as P};

/// (X, Y, Z) columns: `Some((tag, known))`; known entries are premises.
type Column = [(AddTag, bool); 3];

const ADD_RULES: [Column; 6] = [
    [(I, true), (I, true), (I, false)],
    [(I, false), (I, false), (I, true)],
    [(P, true), (I, false), (P, false)],
    [(P, false), (I, true), (P, true)],
    [(I, false), (P, true), (P, false)],
    [(I, true), (P, false), (P, true)],
];

const SUB_RULES: [Column; 7] = [
    [(I, true), (I, false), (I, false)],
    [(I, false), (I, true), (I, true)],
    [(P, false), (I, true), (P, true)],
    [(P, false), (P, true), (I, false)],
    [(P, true), (P, false), (I, true)],
    [(P, true), (I, true), (P, false)],
    [(P, true), (I, false), (P, true)],
];

/// Applies the additive rules to a joint fixed point with subtype propagation:
/// tags are shape attributes, so they flow both ways along derived subtype facts.
pub fn apply_additive(
    c: &ConstraintSet,
    tags: &BTreeMap<DerivedTypeVar, AddTag>,
) -> Result<AdditiveOutcome, OracleError> {
    let bound = c.max_word_len().max(1);
    let cl = closure(c, &OracleConfig::with_bound(bound))?;
    let mut tags = tags.clone();
    let mut warnings = BTreeSet::new();
    let additive: Vec<&Constraint> = c
        .iter()
        .filter(|c| matches!(c, Constraint::Add(..) | Constraint::Sub(..)))
        .collect();

    let set_tag = |tags: &mut BTreeMap<DerivedTypeVar, AddTag>,
                   d: &DerivedTypeVar,
                   t: AddTag,
                   warnings: &mut BTreeSet<String>|
     -> bool {
        match tags.get(d) {
            Some(&old) if old == t => false,
            Some(&old) => {
                warnings.insert(format!("{d} inferred {t:?} but known {old:?}"));
                false
            }
            None => {
                tags.insert(d.clone(), t);
                true
            }
        }
    };

    loop {
        let mut changed = false;
        for (a, b) in cl.subtype_facts() {
            if let Some(&t) = tags.get(a) {
                changed |= set_tag(&mut tags, b, t, &mut warnings);
            }
            if let Some(&t) = tags.get(b) {
                changed |= set_tag(&mut tags, a, t, &mut warnings);
            }
        }
        for con in &additive {
            let (ops, rules): ([&DerivedTypeVar; 3], &[Column]) = match con {
                Constraint::Add(x, y, z) => ([x, y, z], &ADD_RULES),
                Constraint::Sub(x, y, z) => ([x, y, z], &SUB_RULES),
                _ => unreachable!(),
            };
            for col in rules {
                let fires = col
                    .iter()
                    .zip(ops.iter())
                    .all(|((t, known), d)| !known || tags.get(*d) == Some(t));
                if fires {
                    for ((t, known), d) in col.iter().zip(ops.iter()) {
                        if !known {
                            changed |= set_tag(&mut tags, d, *t, &mut warnings);
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut out = AdditiveOutcome {
        tags,
        warnings: warnings.into_iter().collect(),
        ..Default::default()
    };
    out.constraints.projected = c.projected.clone();
    for con in c.iter() {
        let resolved = match con {
            Constraint::Add(x, y, z) | Constraint::Sub(x, y, z) => {
                [x, y, z].iter().all(|d| out.tags.contains_key(*d))
            }
            _ => false,
        };
        if resolved {
            out.consumed.push(con.clone());
        } else {
            out.constraints.insert(con.clone());
        }
    }
    Ok(out)
}
