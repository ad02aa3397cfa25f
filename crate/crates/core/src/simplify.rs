//! Type-scheme extraction: project a constraint set onto its interesting
//! variables by reading constraints back off the compact transducer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::constraint::{Constraint, ConstraintSet, DerivedTypeVar, TypeScheme, TypeVar};
use crate::label::{variance_of_word, FieldLabel, Variance};
use crate::pds::{build_graph, saturate, shadow, CompactTransducer, StateKind, Symbol};
use crate::shape::{ClassId, Shapes};

#[derive(Clone, Debug)]
pub struct SimplificationRequest {
    pub constraints: ConstraintSet,
    pub subject: String,
    /// Interesting plain variables besides the subject. Constants are always interesting.
    pub interesting: BTreeSet<String>,
}

impl SimplificationRequest {
    pub fn new(constraints: ConstraintSet, subject: impl Into<String>) -> Self {
        SimplificationRequest {
            constraints,
            subject: subject.into(),
            interesting: BTreeSet::new(),
        }
    }

    fn interesting_vars(&self) -> BTreeSet<TypeVar> {
        let mut vars: BTreeSet<TypeVar> = self.interesting.iter().map(TypeVar::var).collect();
        vars.insert(TypeVar::var(&self.subject));
        vars.extend(self.constraints.constants().into_iter().map(TypeVar::Const));
        vars
    }
}

pub fn fresh_name(i: usize) -> String {
    format!("τ{i}")
}

/// Reads the transducer's edges back as constraints over fresh state variables.
pub fn transducer_constraints(t: &CompactTransducer) -> (ConstraintSet, Vec<String>) {
    let names: BTreeMap<usize, String> = t
        .internal_states()
        .enumerate()
        .map(|(i, s)| (s, fresh_name(i)))
        .collect();
    let mut out = ConstraintSet::new();
    for e in &t.edges {
        let mut ops = e.ops.iter().peekable();
        let mut token_variance = None;
        let mut lhs = match t.kinds[e.src] {
            StateKind::Internal => DerivedTypeVar::var(&names[&e.src]),
            _ => match ops.next().map(|o| o.symbol()) {
                Some(Symbol::Var(v, a)) => {
                    token_variance = Some(*a);
                    DerivedTypeVar::new(v.clone())
                }
                _ => continue,
            },
        };
        let mut pushed: Vec<FieldLabel> = Vec::new();
        let mut rhs =
            (t.kinds[e.dst] == StateKind::Internal).then(|| DerivedTypeVar::var(&names[&e.dst]));
        for op in ops {
            match (op.is_pop(), op.symbol()) {
                (true, Symbol::Label(l)) => lhs = lhs.push(l.clone()),
                (false, Symbol::Label(l)) => pushed.push(l.clone()),
                (false, Symbol::Var(v, _)) => rhs = Some(DerivedTypeVar::new(v.clone())),
                (true, Symbol::Var(..)) => {}
            }
        }
        let Some(rhs) = rhs else { continue };
        pushed.reverse();
        let rhs = rhs.extend(&pushed);
        let start = token_variance
            .or(t.variances[e.src])
            .unwrap_or(Variance::Covariant);
        if (start * variance_of_word(&lhs.path)).is_covariant() {
            out.add_subtype(lhs, rhs);
        } else {
            out.add_subtype(rhs, lhs);
        }
    }
    let mut names: Vec<String> = names.into_values().collect();
    names.sort_by_key(|n| n.trim_start_matches('τ').parse::<usize>().unwrap_or(0));
    (out, names)
}

/// The shadowed, minimized transducer of a request.
pub fn transducer(req: &SimplificationRequest) -> CompactTransducer {
    let closed = req.constraints.close_prefixes();
    shadow(&saturate(&build_graph(&closed, &req.interesting_vars()))).compact()
}

pub fn simplify(req: &SimplificationRequest) -> TypeScheme {
    let interesting = req.interesting_vars();
    let closed = req.constraints.close_prefixes();
    let (mut body, mut fresh) = transducer_constraints(&transducer(req));
    complete_capabilities(&closed, &mut body, &interesting, &mut fresh);
    body.projected = fresh.into_iter().collect();
    let quantified = interesting
        .iter()
        .filter(|v| !v.is_const())
        .map(|v| v.name().to_string())
        .collect();
    TypeScheme {
        subject: req.subject.clone(),
        quantified,
        body,
    }
}

/// Capabilities of interesting variables that the transducer does not
/// mention (fields that are only read, say) are re-attached: finite
/// subtrees as `var` lines, recursive ones through fresh variables.
fn complete_capabilities(
    input: &ConstraintSet,
    body: &mut ConstraintSet,
    interesting: &BTreeSet<TypeVar>,
    fresh: &mut Vec<String>,
) {
    let full = Shapes::infer(input);
    let have = Shapes::infer(body);
    let mut extra = ConstraintSet::new();
    for v in interesting.iter().filter(|v| !v.is_const()) {
        let Some(root) = full.class_of_var(v) else {
            continue;
        };
        if have.class_of_var(v).is_none() && full.children(root).next().is_none() {
            extra.insert(Constraint::Exists(DerivedTypeVar::new(v.clone())));
            continue;
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![(root, have.class_of_var(v), DerivedTypeVar::new(v.clone()))];
        while let Some((c, b, d)) = stack.pop() {
            if !seen.insert((c, b)) {
                continue;
            }
            for (l, child) in full.children(c) {
                let next = d.push(l.clone());
                match b.and_then(|b| have.step(b, l)) {
                    Some(bc) => stack.push((child, Some(bc), next)),
                    None => encode_subtree(&full, child, next, &mut extra, fresh),
                }
            }
        }
    }
    body.extend(&extra);
}

fn encode_subtree(
    s: &Shapes,
    root: ClassId,
    at: DerivedTypeVar,
    out: &mut ConstraintSet,
    fresh: &mut Vec<String>,
) {
    let reach = s.reachable(root);
    let cyclic = reach
        .iter()
        .any(|&c| s.children(c).any(|(_, t)| s.reachable(t).contains(&c)));
    if !cyclic {
        let mut stack = vec![(root, at)];
        while let Some((c, d)) = stack.pop() {
            let kids: Vec<_> = s.children(c).collect();
            if kids.is_empty() {
                out.insert(Constraint::Exists(d.clone()));
            }
            for (l, t) in kids {
                stack.push((t, d.push(l.clone())));
            }
        }
        return;
    }
    let mut names = BTreeMap::new();
    for &c in &reach {
        names.insert(c, fresh_name(fresh.len()));
        fresh.push(fresh_name(fresh.len()));
    }
    out.add_subtype(at, DerivedTypeVar::var(&names[&root]));
    for &c in &reach {
        for (l, t) in s.children(c) {
            out.add_subtype(
                DerivedTypeVar::var(&names[&c]).push(l.clone()),
                DerivedTypeVar::var(&names[&t]),
            );
        }
    }
}

/// Copies a scheme's body for one call site: every non-constant variable gets the tag.
pub fn instantiate_scheme(s: &TypeScheme, tag: &str) -> ConstraintSet {
    let mut out = s.body.map_vars(|v| match v {
        TypeVar::Var(n) => TypeVar::var(format!("{n}:{tag}")),
        c => c.clone(),
    });
    out.projected.clear();
    out
}

/// Display form: constants bounding the same variable are folded into one
/// line, `#a | #b <= x` for lower bounds and `x <= #a & #b` for upper.
pub fn display_scheme(s: &TypeScheme) -> String {
    let mut lowers: BTreeMap<&DerivedTypeVar, Vec<String>> = BTreeMap::new();
    let mut uppers: BTreeMap<&DerivedTypeVar, Vec<String>> = BTreeMap::new();
    let mut rest = Vec::new();
    for c in s.body.iter() {
        match c {
            Constraint::Subtype(a, b) if a.is_const() && !b.is_const() => {
                lowers.entry(b).or_default().push(a.to_string())
            }
            Constraint::Subtype(a, b) if b.is_const() && !a.is_const() => {
                uppers.entry(a).or_default().push(b.to_string())
            }
            other => rest.push(other.to_string()),
        }
    }
    let mut lines = rest;
    lines.extend(
        lowers
            .into_iter()
            .map(|(v, ks)| format!("{} <= {v}", ks.join(" | "))),
    );
    lines.extend(
        uppers
            .into_iter()
            .map(|(v, ks)| format!("{v} <= {}", ks.join(" & "))),
    );
    lines.sort();
    let mut out = String::new();
    let q: Vec<&str> = s.quantified.iter().map(String::as_str).collect();
    let _ = writeln!(out, "// scheme {} forall {}", s.subject, q.join(", "));
    for p in &s.body.projected {
        let _ = writeln!(out, "exists {p}");
    }
    for l in lines {
        let _ = writeln!(out, "{l}");
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct InferOptions {
    /// Worker threads per wave; 0 means one per available core.
    pub jobs: usize,
    /// Variables kept interesting in every procedure (globals).
    pub globals: BTreeSet<String>,
}

/// Schemes for every procedure of the call graph (edges point caller to
/// callee). Strongly connected components are handled callees first;
/// components at the same height run concurrently.
pub fn infer_proc_types<G>(
    callgraph: &DiGraph<String, ()>,
    generator: G,
    opts: &InferOptions,
) -> BTreeMap<String, TypeScheme>
where
    G: Fn(&str, &BTreeMap<String, TypeScheme>) -> ConstraintSet + Sync,
{
    let sccs = tarjan_scc(callgraph);
    let mut comp_of: BTreeMap<NodeIndex, usize> = BTreeMap::new();
    for (i, scc) in sccs.iter().enumerate() {
        for &n in scc {
            comp_of.insert(n, i);
        }
    }
    // Tarjan yields callees before callers.
    let mut height = vec![0usize; sccs.len()];
    for (i, scc) in sccs.iter().enumerate() {
        for &n in scc {
            for m in callgraph.neighbors(n) {
                let j = comp_of[&m];
                if j != i {
                    height[i] = height[i].max(height[j] + 1);
                }
            }
        }
    }
    let max_h = height.iter().copied().max().unwrap_or(0);
    let jobs = if opts.jobs == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        opts.jobs
    };
    let mut table: BTreeMap<String, TypeScheme> = BTreeMap::new();
    for h in 0..=max_h {
        let wave: Vec<&Vec<NodeIndex>> = sccs
            .iter()
            .enumerate()
            .filter(|(i, _)| height[*i] == h)
            .map(|(_, s)| s)
            .collect();
        let tasks: Vec<(Vec<String>, usize)> = wave
            .iter()
            .flat_map(|scc| {
                let names: Vec<String> = scc.iter().map(|&n| callgraph[n].clone()).collect();
                (0..names.len()).map(move |k| (names.clone(), k))
            })
            .collect();
        let results = run_wave(&tasks, jobs, |(members, k)| {
            let mut pooled = ConstraintSet::new();
            for m in members {
                pooled.extend(&generator(m, &table));
            }
            let mut req = SimplificationRequest::new(pooled, members[*k].clone());
            req.interesting = opts.globals.clone();
            simplify(&req)
        });
        for s in results {
            table.insert(s.subject.clone(), s);
        }
    }
    table
}

fn run_wave<T: Sync, R: Send>(tasks: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if jobs <= 1 || tasks.len() <= 1 {
        return tasks.iter().map(&f).collect();
    }
    let chunk = tasks.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = tasks
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                scope.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse_constraints;

    fn body(text: &str, subject: &str, extra: &[&str]) -> TypeScheme {
        let mut req = SimplificationRequest::new(parse_constraints(text).unwrap(), subject);
        req.interesting = extra.iter().map(|s| s.to_string()).collect();
        simplify(&req)
    }

    fn subtypes(s: &TypeScheme) -> BTreeSet<String> {
        s.body
            .iter()
            .filter(|c| matches!(c, Constraint::Subtype(..)))
            .map(|c| c.to_string())
            .collect()
    }

    #[test]
    fn close_last_scheme() {
        let s = body(
            include_str!("../../../fixtures/close_last.constraints"),
            "close_last",
            &[],
        );
        let want: BTreeSet<String> = [
            "close_last.in_stack0 <= τ0",
            "τ0.load.s32@0 <= τ0",
            "τ0.load.s32@4 <= #int",
            "τ0.load.s32@4 <= #FileDescriptor",
            "#int <= close_last.out_eax",
            "#SuccessZ <= close_last.out_eax",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(subtypes(&s), want);
        assert_eq!(s.body.len(), 6);
        assert_eq!(s.body.projected, BTreeSet::from(["τ0".to_string()]));
        let shown = display_scheme(&s);
        assert!(
            shown.contains("#SuccessZ | #int <= close_last.out_eax"),
            "{shown}"
        );
        assert!(
            shown.contains("τ0.load.s32@4 <= #FileDescriptor & #int"),
            "{shown}"
        );
    }

    #[test]
    fn nothing_to_eliminate() {
        let s = body("x <= y", "x", &["y"]);
        assert_eq!(subtypes(&s), BTreeSet::from(["x <= y".to_string()]));
    }

    #[test]
    fn middle_variable_vanishes() {
        let s = body("x <= m\nm <= y", "x", &["y"]);
        assert_eq!(subtypes(&s), BTreeSet::from(["x <= y".to_string()]));
        assert!(!s.body.variables().contains("m"));
    }

    #[test]
    fn read_only_fields_survive() {
        let s = body("F.in_0 <= p\nvar p.load.s32@0", "F", &[]);
        assert!(
            s.body
                .iter()
                .any(|c| c.to_string() == "var F.in_0.load.s32@0"),
            "{s}"
        );
    }

    #[test]
    fn instantiation_tags_variables() {
        let s = body("F.in_0 <= t\nt <= #int", "F", &[]);
        let inst = instantiate_scheme(&s, "0x10");
        assert!(
            inst.iter().any(|c| c.to_string() == "F:0x10.in_0 <= #int"),
            "{inst}"
        );
        assert!(instantiate_scheme(&TypeScheme::empty("G"), "a").is_empty());
    }
}
