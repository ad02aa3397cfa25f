#![allow(dead_code)]

use std::collections::BTreeSet;

use mtype::constraint::{Constraint, ConstraintSet, DerivedTypeVar, TypeVar};
use mtype::label::FieldLabel;
use mtype::oracle::{closure, OracleConfig};
use mtype::pds::{build_graph, recognizes, saturate, shadow};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn alphabet() -> Vec<FieldLabel> {
    ["load", "store", "s32@0", "s32@4", "in_a", "out"]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect()
}

pub fn random_word(rng: &mut ChaCha8Rng, max: usize) -> Vec<FieldLabel> {
    let labels = alphabet();
    let n = rng.gen_range(0..=max);
    (0..n)
        .map(|_| labels[rng.gen_range(0..labels.len())].clone())
        .collect()
}

pub const BASES: [&str; 5] = ["a", "b", "c", "d", "e"];

pub fn random_set(rng: &mut ChaCha8Rng) -> ConstraintSet {
    let vars = rng.gen_range(1..=BASES.len());
    let count = rng.gen_range(1..=8);
    let mut c = ConstraintSet::new();
    for _ in 0..count {
        let dtv = |rng: &mut ChaCha8Rng| {
            let base = BASES[rng.gen_range(0..vars)];
            DerivedTypeVar::with_path(TypeVar::var(base), random_word(rng, 2))
        };
        let lhs = dtv(rng);
        let rhs = dtv(rng);
        c.insert(Constraint::subtype(lhs, rhs));
    }
    c
}

pub fn words(max: usize) -> Vec<Vec<FieldLabel>> {
    let labels = alphabet();
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max {
        let mut next = Vec::new();
        for w in &frontier {
            for l in &labels {
                let mut w2: Vec<FieldLabel> = w.clone();
                w2.push(l.clone());
                next.push(w2);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

pub fn probe(base: &str) -> String {
    format!("P{base}")
}

/// Compares transducer recognition with the oracle on one instance.
/// Each base `v` gets an interesting twin `Pv` with `Pv <= v` and `v <= Pv`, so
/// every derivation between twins is elementary. Returns the mismatches.
pub fn equivalence_mismatches(
    c: &ConstraintSet,
    max_word: usize,
    oracle_bound: usize,
    fact_cap: usize,
) -> Result<Vec<String>, String> {
    let bases = c.variables();
    let mut probed = c.clone();
    let mut interesting = BTreeSet::new();
    for b in &bases {
        let p = DerivedTypeVar::var(probe(b));
        let v = DerivedTypeVar::var(b.clone());
        probed.insert(Constraint::subtype(p.clone(), v.clone()));
        probed.insert(Constraint::subtype(v, p));
        interesting.insert(TypeVar::var(probe(b)));
    }
    let t = shadow(&saturate(&build_graph(&probed, &interesting)));
    let mut cfg = OracleConfig::with_bound(oracle_bound);
    cfg.labels = Some(alphabet().into_iter().collect());
    cfg.fact_cap = fact_cap;
    let closed = closure(&probed.close_prefixes(), &cfg).map_err(|e| e.to_string())?;
    let ws = words(max_word);
    let mut dtvs = Vec::new();
    for b in &bases {
        for w in &ws {
            let d = DerivedTypeVar::with_path(TypeVar::var(probe(b)), w.clone());
            if closed.exists(&d) {
                dtvs.push(d);
            }
        }
    }
    let mut bad = Vec::new();
    for x in &dtvs {
        for y in &dtvs {
            let o = closed.subtype(x, y);
            let r = recognizes(&t, x, y);
            if o != r {
                bad.push(format!("{x} <= {y}: oracle {o}, transducer {r}"));
            }
        }
    }
    Ok(bad)
}

/// Compares the oracle closures of an input set and of its simplified scheme
/// on every interesting derived variable with a word of at most `max_word`.
pub fn scheme_mismatches(
    c: &ConstraintSet,
    interesting: &[&str],
    max_word: usize,
    oracle_bound: usize,
    fact_cap: usize,
) -> Result<Vec<String>, String> {
    use mtype::simplify::{simplify, SimplificationRequest};
    let mut req = SimplificationRequest::new(c.clone(), interesting[0]);
    req.interesting = interesting[1..].iter().map(|s| s.to_string()).collect();
    let scheme = simplify(&req);
    let mut cfg = OracleConfig::with_bound(oracle_bound);
    cfg.labels = Some(alphabet().into_iter().collect());
    cfg.fact_cap = fact_cap;
    let before = closure(&c.close_prefixes(), &cfg).map_err(|e| e.to_string())?;
    let after = closure(&scheme.body.close_prefixes(), &cfg).map_err(|e| e.to_string())?;
    let ws = words(max_word);
    let mut dtvs = Vec::new();
    let mut bad = Vec::new();
    for b in interesting {
        for w in &ws {
            let d = DerivedTypeVar::with_path(TypeVar::var(*b), w.clone());
            let (x, y) = (before.exists(&d), after.exists(&d));
            if x != y {
                bad.push(format!("var {d}: input {x}, scheme {y}"));
            }
            if x {
                dtvs.push(d);
            }
        }
    }
    for x in &dtvs {
        for y in &dtvs {
            let (o, s) = (before.subtype(x, y), after.subtype(x, y));
            if o != s {
                bad.push(format!("{x} <= {y}: input {o}, scheme {s}"));
            }
        }
    }
    if !bad.is_empty() {
        bad.push(format!("scheme:\n{scheme}"));
    }
    Ok(bad)
}
