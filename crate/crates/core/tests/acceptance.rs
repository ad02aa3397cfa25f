mod common;

use std::alloc::{GlobalAlloc, Layout, System};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use mtype::constraint::{ConstraintSet, DerivedTypeVar, TypeVar};
use mtype::ctype::EmitOptions;
use mtype::ir::parse_program;
use mtype::label::{variance_of_word, FieldLabel, Variance};
use mtype::lattice::{Elem, Lattice};
use mtype::oracle::{closure, OracleConfig};
use mtype::parse_constraints;
use mtype::pds::{build_graph, recognizes, saturate, shadow, EdgeKind, Node, Side};
use mtype::pipeline::{render_schemes, run_program, PipelineOptions};
use mtype::simplify::{display_scheme, simplify, transducer, SimplificationRequest};
use mtype::sketch::Sketch;
use mtype::solve::solve_labels;
use petgraph::algo::is_isomorphic_matching;
use petgraph::graph::DiGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_BUDGET: Duration = Duration::from_secs(1);
const POINTER_ORACLE_BOUND: usize = 2;
const EQUIV_INSTANCES: usize = 200;
const EQUIV_WORD: usize = 3;
const EQUIV_ORACLE_BOUND: usize = 5;
const EQUIV_FACT_CAP: usize = 200_000;
const EQUIV_BUDGET: Duration = Duration::from_secs(60);
const LAW_INSTANCES: usize = 100;
const LAW_DEPTH: usize = 3;
const LAW_WORD: usize = 5;
const LANG_INSTANCES: usize = 100;
const LANG_WORD: usize = 3;
const LANG_MAX_BOUND: usize = 8;
const LANG_DEEP_FACT_CAP: usize = 2_000_000;
const CONST_MIN_FIXTURES: usize = 10;
const CHAIN_LEN: usize = 2000;
const CHAIN_BUDGET: Duration = Duration::from_secs(60);
const CHAIN_MEMORY: usize = 1 << 30;
const CHAIN_DOUBLING_RATIO: f64 = 10.0;
const DETERMINISM_RUNS: usize = 3;

struct Peak;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Peak {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = CURRENT.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        CURRENT.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static ALLOC: Peak = Peak;

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixtures().join(name)).expect("fixture")
}

fn lattice(name: &str) -> Lattice {
    Lattice::from_json(&read(name)).expect("lattice fixture")
}

fn d(s: &str) -> DerivedTypeVar {
    s.parse().unwrap()
}

fn close_last() -> ConstraintSet {
    parse_constraints(&read("close_last.constraints")).unwrap()
}

fn golden_scheme() -> Outcome {
    let c = close_last();
    let t0 = Instant::now();
    let s = simplify(&SimplificationRequest::new(c, "close_last"));
    let took = t0.elapsed();
    let [tau] = s.body.projected.iter().collect::<Vec<_>>()[..] else {
        return Err(format!(
            "expected one existential, got {:?}",
            s.body.projected
        ));
    };
    let got: BTreeSet<String> = s
        .body
        .iter()
        .map(|c| c.to_string().replace(tau.as_str(), "T"))
        .collect();
    let want: BTreeSet<String> = [
        "close_last.in_stack0 <= T",
        "T.load.s32@0 <= T",
        "T.load.s32@4 <= #int",
        "T.load.s32@4 <= #FileDescriptor",
        "#int <= close_last.out_eax",
        "#SuccessZ <= close_last.out_eax",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if got != want {
        return Err(format!("scheme differs:\n{}", display_scheme(&s)));
    }
    let shown = display_scheme(&s);
    let displayed = shown.lines().filter(|l| l.contains("<=")).count();
    if displayed != 4 {
        return Err(format!("{displayed} displayed constraints:\n{shown}"));
    }
    if took >= GOLDEN_BUDGET {
        return Err(format!("took {took:?}"));
    }
    Ok(format!("6 constraints (4 displayed), {took:?}"))
}

fn golden_transducer() -> Outcome {
    let t = transducer(&SimplificationRequest::new(close_last(), "close_last"));
    let mut got: DiGraph<(), String> = DiGraph::new();
    let nodes: Vec<_> = (0..t.kinds.len()).map(|_| got.add_node(())).collect();
    for e in &t.edges {
        got.add_edge(nodes[e.src], nodes[e.dst], e.label());
    }
    let mut want: DiGraph<(), String> = DiGraph::new();
    let (s, q, e) = (want.add_node(()), want.add_node(()), want.add_node(()));
    for (a, b, l) in [
        (s, q, "close_last.in_stack0 / ε"),
        (q, q, "load.s32@0 / ε"),
        (q, e, "load.s32@4 / #FileDescriptor"),
        (q, e, "load.s32@4 / #int"),
        (s, e, "#SuccessZ / close_last.out_eax"),
        (s, e, "#int / close_last.out_eax"),
    ] {
        want.add_edge(a, b, l.to_string());
    }
    let internal = t.internal_states().count();
    if internal != 1 {
        return Err(format!("{internal} internal states"));
    }
    if !is_isomorphic_matching(&got, &want, |_, _| true, |a, b| a == b) {
        let edges: Vec<String> = t
            .edges
            .iter()
            .map(|e| format!("{}->{} {}", e.src, e.dst, e.label()))
            .collect();
        return Err(format!("not isomorphic: {}", edges.join("; ")));
    }
    Ok("1 internal state, 6 edges, isomorphic".into())
}

fn pointer_soundness() -> Outcome {
    let sets = [
        "Q <= P\nX <= P.store\nQ.load <= Y",
        "Q <= P\nX <= Q.store\nP.load <= Y",
    ];
    for (i, text) in sets.iter().enumerate() {
        let c = parse_constraints(text).unwrap();
        let interesting = BTreeSet::from([TypeVar::var("X"), TypeVar::var("Y")]);
        let t = shadow(&saturate(&build_graph(&c, &interesting)));
        let closed = closure(
            &c.close_prefixes(),
            &OracleConfig::with_bound(POINTER_ORACLE_BOUND),
        )
        .map_err(|e| e.to_string())?;
        let (x, y) = (d("X"), d("Y"));
        let checks = [
            ("oracle X<=Y", closed.subtype(&x, &y), true),
            ("transducer X<=Y", recognizes(&t, &x, &y), true),
            ("oracle Y<=X", closed.subtype(&y, &x), false),
            ("transducer Y<=X", recognizes(&t, &y, &x), false),
        ];
        for (what, got, want) in checks {
            if got != want {
                return Err(format!("set {}: {what} = {got}", i + 1));
            }
        }
    }
    Ok("both sets entail X <= Y and not Y <= X".into())
}

fn saturation_example() -> Outcome {
    let c = parse_constraints("y <= p\np <= x\nA <= x.store\ny.load <= B").unwrap();
    let interesting = BTreeSet::from([TypeVar::var("A"), TypeVar::var("B")]);
    let g = build_graph(&c, &interesting);
    let s = saturate(&g);
    let node = |base: &str, path: &str| Node::Var {
        base: TypeVar::var(base),
        side: Side::Untagged,
        path: vec![path.parse::<FieldLabel>().unwrap()],
        variance: Variance::Covariant,
    };
    let (from, to) = (s.lookup(&node("x", "store")), s.lookup(&node("y", "load")));
    let (Some(from), Some(to)) = (from, to) else {
        return Err("x.store or y.load node missing".into());
    };
    if g.has_edge(from, EdgeKind::One, to) {
        return Err("unit edge present before saturation".into());
    }
    if !s.has_edge(from, EdgeKind::One, to) {
        return Err("saturation did not add x.store -> y.load".into());
    }
    let t = shadow(&s);
    if !recognizes(&t, &d("A"), &d("B")) {
        return Err("A <= B not recognized".into());
    }
    if recognizes(&t, &d("B"), &d("A")) {
        return Err("B <= A recognized".into());
    }
    Ok("unit edge x.store -> y.load added; A <= B recognized".into())
}

fn oracle_equivalence() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut compared, mut skipped, mut pairs) = (0, 0, 0);
    while compared < EQUIV_INSTANCES {
        let c = common::random_set(&mut rng);
        match common::equivalence_mismatches(&c, EQUIV_WORD, EQUIV_ORACLE_BOUND, EQUIV_FACT_CAP) {
            Ok(bad) if bad.is_empty() => {
                compared += 1;
                pairs += c.len();
            }
            Ok(bad) => return Err(format!("instance {compared}:\n{c}{}", bad.join("\n"))),
            Err(_) => skipped += 1,
        }
    }
    let took = t0.elapsed();
    if took >= EQUIV_BUDGET {
        return Err(format!("took {took:?}"));
    }
    Ok(format!("{compared} instances ({pairs} constraints), 0 mismatches, {skipped} over the fact cap, {took:?}"))
}

fn random_sketch(rng: &mut ChaCha8Rng, l: &Lattice) -> Sketch {
    let labels = common::alphabet();
    let elems: Vec<Elem> = l.elements().collect();
    let mut trans: Vec<Vec<(FieldLabel, usize)>> = vec![vec![]];
    let mut marks = vec![elems[rng.gen_range(0..elems.len())]];
    let mut frontier = vec![(0usize, 0usize)];
    while let Some((s, depth)) = frontier.pop() {
        if depth == LAW_DEPTH {
            continue;
        }
        for lab in &labels {
            if !rng.gen_bool(0.3) {
                continue;
            }
            if depth > 0 && rng.gen_bool(0.1) {
                trans[s].push((lab.clone(), rng.gen_range(0..=s)));
                continue;
            }
            let t = trans.len();
            trans.push(vec![]);
            marks.push(elems[rng.gen_range(0..elems.len())]);
            trans[s].push((lab.clone(), t));
            frontier.push((t, depth + 1));
        }
    }
    Sketch::from_parts(trans, marks)
}

fn word_variance(w: &[FieldLabel]) -> Variance {
    variance_of_word(w)
}

fn language_equations(
    x: &Sketch,
    y: &Sketch,
    l: &Lattice,
    words: &[Vec<FieldLabel>],
) -> Result<(), String> {
    let m = x.meet(y, l);
    let j = x.join(y, l);
    for w in words {
        let (ax, ay) = (x.accepts(w), y.accepts(w));
        if m.accepts(w) != (ax || ay) || j.accepts(w) != (ax && ay) {
            return Err(format!("language of {w:?}"));
        }
        let co = word_variance(w) == Variance::Covariant;
        let (nx, ny) = (x.label_at(w), y.label_at(w));
        let want_meet = match (nx, ny) {
            (Some(a), Some(b)) => Some(if co { l.meet(a, b) } else { l.join(a, b) }),
            (a, b) => a.or(b),
        };
        let want_join = match (nx, ny) {
            (Some(a), Some(b)) => Some(if co { l.join(a, b) } else { l.meet(a, b) }),
            _ => None,
        };
        if m.label_at(w) != want_meet || j.label_at(w) != want_join {
            return Err(format!("label at {w:?}"));
        }
    }
    Ok(())
}

fn sketch_laws() -> Outcome {
    let l = lattice("strings.lattice.json");
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let words = common::words(LAW_WORD);
    for i in 0..LAW_INSTANCES {
        let (a, b, c) = (
            random_sketch(&mut rng, &l),
            random_sketch(&mut rng, &l),
            random_sketch(&mut rng, &l),
        );
        let fail = |law: &str| Err(format!("instance {i}: {law}"));
        if a.meet(&b, &l) != b.meet(&a, &l) || a.join(&b, &l) != b.join(&a, &l) {
            return fail("commutativity");
        }
        if a.meet(&b, &l).meet(&c, &l) != a.meet(&b.meet(&c, &l), &l)
            || a.join(&b, &l).join(&c, &l) != a.join(&b.join(&c, &l), &l)
        {
            return fail("associativity");
        }
        if a.meet(&a, &l) != a || a.join(&a, &l) != a {
            return fail("idempotence");
        }
        if a.meet(&a.join(&b, &l), &l) != a || a.join(&a.meet(&b, &l), &l) != a {
            return fail("absorption");
        }
        if let Err(e) = language_equations(&a, &b, &l, &words) {
            return fail(&e);
        }
    }
    Ok(format!("{LAW_INSTANCES} triples, words <= {LAW_WORD}"))
}

fn sketch_language_matches_oracle() -> Outcome {
    let l = Lattice::default_lattice();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let words = common::words(LANG_WORD);
    let cfg = |bound: usize, cap: usize| {
        let mut cfg = OracleConfig::with_bound(bound);
        cfg.labels = Some(common::alphabet().into_iter().collect());
        cfg.fact_cap = cap;
        cfg
    };
    let (mut compared, mut skipped, mut checked, mut escalated) = (0, 0, 0, 0);
    while compared < LANG_INSTANCES {
        let c = common::random_set(&mut rng);
        let prefixed = c.close_prefixes();
        let Ok(closed) = closure(&prefixed, &cfg(EQUIV_ORACLE_BOUND, EQUIV_FACT_CAP)) else {
            skipped += 1;
            continue;
        };
        // Deeper closures, built only when a bounded derivation falls short.
        let mut deeper: Vec<Option<_>> = Vec::new();
        let b = solve_labels(&c, &l, None).map_err(|e| e.to_string())?;
        for v in c.variables() {
            let s = &b[&v];
            for w in &words {
                let dtv = DerivedTypeVar::with_path(TypeVar::var(v.clone()), w.clone());
                checked += 1;
                let (sk, or) = (s.accepts(w), closed.exists(&dtv));
                if sk == or {
                    continue;
                }
                if !sk {
                    return Err(format!("{dtv}: oracle derives it, sketch lacks it\n{c}"));
                }
                escalated += 1;
                let mut found = false;
                for (i, bound) in (EQUIV_ORACLE_BOUND + 1..=LANG_MAX_BOUND).enumerate() {
                    if deeper.len() <= i {
                        deeper.push(closure(&prefixed, &cfg(bound, LANG_DEEP_FACT_CAP)).ok());
                    }
                    match &deeper[i] {
                        Some(cl) if cl.exists(&dtv) => {
                            found = true;
                            break;
                        }
                        Some(_) => {}
                        None => break,
                    }
                }
                if !found {
                    return Err(format!(
                        "{dtv}: sketch has it, oracle lacks it up to bound {LANG_MAX_BOUND}\n{c}"
                    ));
                }
            }
        }
        compared += 1;
    }
    Ok(format!(
        "{compared} sets, {checked} words agree ({escalated} needed a deeper oracle bound), {skipped} over the fact cap"
    ))
}

fn const_recovery() -> Outcome {
    let l = lattice("close_last.lattice.json");
    let dir = fixtures().join("const");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "ir"))
        .collect();
    files.sort();
    let mut procs = 0;
    let (mut total, mut agree) = (0, 0);
    let mut misses = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).unwrap();
        let mut want: BTreeMap<String, bool> = BTreeMap::new();
        for line in text.lines() {
            for (tag, v) in [("# expect const:", true), ("# expect mutable:", false)] {
                if let Some(rest) = line.strip_prefix(tag) {
                    want.insert(rest.trim().to_string(), v);
                }
            }
        }
        let prog = parse_program(&text).map_err(|e| format!("{}: {e}", f.display()))?;
        procs += prog.procs.len();
        let out = run_program(&prog, &l, &PipelineOptions::default()).map_err(|e| e.to_string())?;
        for (k, v) in want {
            total += 1;
            if out.consts.get(&k) == Some(&v) {
                agree += 1;
            } else {
                misses.push(format!("{k}: want {v}, got {:?}", out.consts.get(&k)));
            }
        }
    }
    if procs < CONST_MIN_FIXTURES {
        return Err(format!("only {procs} fixture procedures"));
    }
    if agree != total {
        return Err(format!("{agree}/{total}: {}", misses.join("; ")));
    }
    Ok(format!(
        "{agree}/{total} annotations over {procs} procedures"
    ))
}

fn chain(n: usize) -> ConstraintSet {
    let mut text = String::new();
    for i in 0..n {
        if i % 4 == 3 {
            text.push_str(&format!("v{i}.load.s32@0 <= v{}\n", i + 1));
        } else {
            text.push_str(&format!("v{i} <= v{}\n", i + 1));
        }
    }
    parse_constraints(&text).unwrap()
}

fn timed_chain(n: usize) -> (Duration, usize, usize) {
    let c = chain(n);
    let mut req = SimplificationRequest::new(c, "v0");
    req.interesting.insert(format!("v{n}"));
    let base = CURRENT.load(Ordering::Relaxed);
    PEAK.store(base, Ordering::Relaxed);
    let t0 = Instant::now();
    let s = simplify(&req);
    let took = t0.elapsed();
    let peak = PEAK.load(Ordering::Relaxed).saturating_sub(base);
    (took, peak, s.body.len())
}

fn chain_performance() -> Outcome {
    let (half, _, _) = timed_chain(CHAIN_LEN / 2);
    let (full, peak, size) = timed_chain(CHAIN_LEN);
    let ratio = full.as_secs_f64() / half.as_secs_f64().max(1e-6);
    let summary = format!(
        "{CHAIN_LEN} constraints in {full:?}, peak {:.1} MiB, scheme {size} constraints, doubling ratio {ratio:.2}",
        peak as f64 / (1 << 20) as f64
    );
    if size == 0 {
        return Err(format!("empty scheme; {summary}"));
    }
    if full >= CHAIN_BUDGET || peak >= CHAIN_MEMORY || ratio > CHAIN_DOUBLING_RATIO {
        return Err(summary);
    }
    Ok(summary)
}

fn corpus_outputs() -> Result<Vec<(String, String)>, String> {
    let l = lattice("close_last.lattice.json");
    let mut files: Vec<PathBuf> = vec![fixtures().join("close_last.ir")];
    let mut consts: Vec<PathBuf> = std::fs::read_dir(fixtures().join("const"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .collect();
    consts.sort();
    files.extend(consts);
    let mut out = Vec::new();
    for f in files {
        let prog =
            parse_program(&std::fs::read_to_string(&f).unwrap()).map_err(|e| e.to_string())?;
        let opts = PipelineOptions {
            emit: EmitOptions::default(),
            ..PipelineOptions::default()
        };
        let r = run_program(&prog, &l, &opts).map_err(|e| e.to_string())?;
        let sketches: String = r.bindings.iter().map(|(k, s)| s.to_dot(&l, k)).collect();
        let text = format!(
            "{}{}{}{:?}",
            render_schemes(&prog, &r.schemes),
            r.header.render(),
            sketches,
            r.consts
        );
        out.push((f.display().to_string(), text + &r.header.to_json()));
    }
    Ok(out)
}

fn determinism() -> Outcome {
    let runs: Vec<_> = (0..DETERMINISM_RUNS)
        .map(|_| corpus_outputs())
        .collect::<Result<_, _>>()?;
    for (i, r) in runs.iter().enumerate().skip(1) {
        if *r != runs[0] {
            let which = r
                .iter()
                .zip(&runs[0])
                .find(|(a, b)| a != b)
                .map(|(a, _)| a.0.clone());
            return Err(format!("run {} differs on {which:?}", i + 1));
        }
    }
    let bytes: usize = runs[0].iter().map(|(_, t)| t.len()).sum();
    Ok(format!(
        "{DETERMINISM_RUNS} runs over {} programs, {bytes} bytes each",
        runs[0].len()
    ))
}

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("golden scheme", golden_scheme),
        ("golden transducer", golden_transducer),
        ("pointer soundness", pointer_soundness),
        ("lazy saturation", saturation_example),
        ("oracle equivalence", oracle_equivalence),
        ("sketch lattice laws", sketch_laws),
        ("sketch language vs oracle", sketch_language_matches_oracle),
        ("const recovery", const_recovery),
        ("chain performance", chain_performance),
        ("pipeline determinism", determinism),
    ];
    let only: Option<BTreeSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|n| n.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        match f() {
            Ok(msg) => println!("PASS {:>2} {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
