//! Whole-program driver: schemes bottom-up over the call graph, then
//! sketches top-down with call-site specialization, then C declarations.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use thiserror::Error;

use crate::constraint::{ConstraintSet, DerivedTypeVar, TypeScheme};
use crate::ctype::{
    formal_key, infer_const, refine_parameters, Actuals, CHeader, EmitOptions, Emitter,
};
use crate::ir::{callgraph, generate_constraints, Generated, Program};
use crate::label::FieldLabel;
use crate::lattice::Lattice;
use crate::simplify::{infer_proc_types, simplify, InferOptions, SimplificationRequest};
use crate::sketch::Sketch;
use crate::solve::{Bindings, SolveError, Solver};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("procedure `{proc}` generated {count} constraints, over the cap of {cap}")]
    ResourceCap {
        proc: String,
        count: usize,
        cap: usize,
    },
}

#[derive(Clone, Debug, Default)]
pub struct PipelineOptions {
    pub infer: InferOptions,
    pub emit: EmitOptions,
    /// Largest constraint set a single procedure may generate.
    pub max_constraints: Option<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct PipelineOutput {
    pub generated: BTreeMap<String, Generated>,
    pub schemes: BTreeMap<String, TypeScheme>,
    /// Sketches of formals, keyed by `proc.in_L` / `proc.out_L`.
    pub bindings: Bindings,
    pub consts: BTreeMap<String, bool>,
    pub header: CHeader,
    pub warnings: Vec<String>,
}

fn scc_members(prog: &Program) -> (Vec<Vec<String>>, BTreeMap<String, BTreeSet<String>>) {
    let g = callgraph(prog);
    let sccs: Vec<Vec<String>> = tarjan_scc(&g)
        .into_iter()
        .map(|s| {
            let mut names: Vec<String> = s.into_iter().map(|n| g[n].clone()).collect();
            names.sort();
            names
        })
        .collect();
    let mut of = BTreeMap::new();
    for s in &sccs {
        let set: BTreeSet<String> = s.iter().cloned().collect();
        for n in s {
            of.insert(n.clone(), set.clone());
        }
    }
    (sccs, of)
}

fn aux_in(proc: &str, loc: &str) -> String {
    format!("{proc}@in_{loc}")
}

fn aux_out(proc: &str, loc: &str) -> String {
    format!("{proc}@out_{loc}")
}

/// Sketches of a procedure's formals as seen from its scheme.
fn formal_sketches(
    scheme: &TypeScheme,
    ins: &[String],
    outs: &[String],
    l: &Lattice,
) -> Result<Bindings, SolveError> {
    let mut c = scheme.body.clone();
    let p = DerivedTypeVar::var(&scheme.subject);
    for loc in ins {
        c.add_subtype(
            DerivedTypeVar::var(aux_in(&scheme.subject, loc)),
            p.push(FieldLabel::In(loc.clone())),
        );
    }
    for loc in outs {
        c.add_subtype(
            p.push(FieldLabel::Out(loc.clone())),
            DerivedTypeVar::var(aux_out(&scheme.subject, loc)),
        );
    }
    let solver = Solver::new(&c, l)?;
    let mut b = Bindings::new();
    for (locs, is_in) in [(ins, true), (outs, false)] {
        for loc in locs {
            let aux = if is_in {
                aux_in(&scheme.subject, loc)
            } else {
                aux_out(&scheme.subject, loc)
            };
            let s = solver.sketch(&aux).unwrap_or_else(|| Sketch::top(l));
            b.insert(formal_key(&scheme.subject, loc, is_in), s);
        }
    }
    Ok(b)
}

pub fn run_program(
    prog: &Program,
    l: &Lattice,
    opts: &PipelineOptions,
) -> Result<PipelineOutput, PipelineError> {
    let (sccs, scc_of) = scc_members(prog);
    let gen = |name: &str, table: &BTreeMap<String, TypeScheme>| -> Generated {
        let p = prog.proc(name).expect("call graph nodes are procedures");
        generate_constraints(p, prog, table, &scc_of[name])
    };
    if let Some(cap) = opts.max_constraints {
        for p in &prog.procs {
            let count = gen(&p.name, &BTreeMap::new()).constraints.len();
            if count > cap {
                return Err(PipelineError::ResourceCap {
                    proc: p.name.clone(),
                    count,
                    cap,
                });
            }
        }
    }
    let schemes = infer_proc_types(&callgraph(prog), |n, t| gen(n, t).constraints, &opts.infer);
    let mut out = PipelineOutput {
        schemes,
        ..Default::default()
    };
    for p in &prog.procs {
        let g = gen(&p.name, &out.schemes);
        out.warnings.extend(g.warnings.iter().cloned());
        out.generated.insert(p.name.clone(), g);
    }

    let mut actuals = Actuals::default();
    // Tarjan lists callees first; callers are solved first here.
    for scc in sccs.iter().rev() {
        for name in scc {
            let p = prog.proc(name).expect("procedure");
            let ins: Vec<String> = p.ins.iter().map(|l| l.name()).collect();
            let outs: Vec<String> = p.outs.iter().map(|l| l.name()).collect();
            let scheme = &out.schemes[name];
            let formals = formal_sketches(scheme, &ins, &outs, l)?;
            let refined = refine_parameters(&formals, &actuals, l);
            for loc in &ins {
                out.consts.insert(
                    formal_key(name, loc, true),
                    infer_const(&scheme.body, name, loc),
                );
            }
            out.bindings.extend(refined);

            let g = &out.generated[name];
            let solver = Solver::new(&g.constraints, l)?;
            for site in &g.calls {
                if prog.proc(&site.callee).is_none() {
                    continue;
                }
                for (loc, v) in &site.ins {
                    if let Some(s) = solver.sketch(v.base.name()) {
                        actuals
                            .ins
                            .entry(formal_key(&site.callee, loc, true))
                            .or_default()
                            .push(s);
                    }
                }
                for (loc, v) in &site.outs {
                    if let Some(s) = solver.sketch(v.base.name()) {
                        actuals
                            .outs
                            .entry(formal_key(&site.callee, loc, false))
                            .or_default()
                            .push(s);
                    }
                }
            }
        }
    }

    let mut e = Emitter::new(l, opts.emit.clone());
    for p in &prog.procs {
        let params: Vec<(String, Sketch, bool)> = p
            .ins
            .iter()
            .map(|loc| {
                let key = formal_key(&p.name, &loc.name(), true);
                (loc.name(), out.bindings[&key].clone(), out.consts[&key])
            })
            .collect();
        let rets: Vec<(String, Sketch)> = p
            .outs
            .iter()
            .map(|loc| {
                (
                    loc.name(),
                    out.bindings[&formal_key(&p.name, &loc.name(), false)].clone(),
                )
            })
            .collect();
        e.function(&p.name, &params, &rets);
    }
    out.header = e.finish();
    Ok(out)
}

/// Formal locations of `subject` mentioned in a constraint set.
pub fn locators_of(c: &ConstraintSet, subject: &str) -> (Vec<String>, Vec<String>) {
    let (mut ins, mut outs) = (BTreeSet::new(), BTreeSet::new());
    for con in c.iter() {
        for d in con.dtvs() {
            if d.base.is_const() || d.base.name() != subject {
                continue;
            }
            match d.path.first() {
                Some(FieldLabel::In(l)) => {
                    ins.insert(l.clone());
                }
                Some(FieldLabel::Out(l)) => {
                    outs.insert(l.clone());
                }
                _ => {}
            }
        }
    }
    (ins.into_iter().collect(), outs.into_iter().collect())
}

/// Procedures described by a bare constraint set: variables with `in`/`out`
/// capabilities, excluding call-site instances (`f:tag`).
pub fn guess_subjects(c: &ConstraintSet) -> Vec<String> {
    let mut out = BTreeSet::new();
    for con in c.iter() {
        for d in con.dtvs() {
            if !d.base.is_const()
                && !d.base.name().contains(':')
                && matches!(d.path.first(), Some(FieldLabel::In(_) | FieldLabel::Out(_)))
            {
                out.insert(d.base.name().to_string());
            }
        }
    }
    out.into_iter().collect()
}

/// Constraint-file counterpart of [`run_program`]: every subject is
/// simplified against the whole set and typed from it.
pub fn run_constraints(
    c: &ConstraintSet,
    subjects: &[String],
    l: &Lattice,
    opts: &PipelineOptions,
) -> Result<PipelineOutput, PipelineError> {
    if let Some(cap) = opts.max_constraints {
        if c.len() > cap {
            return Err(PipelineError::ResourceCap {
                proc: subjects.join(","),
                count: c.len(),
                cap,
            });
        }
    }
    let mut out = PipelineOutput::default();
    let mut e = Emitter::new(l, opts.emit.clone());
    for s in subjects {
        let mut req = SimplificationRequest::new(c.clone(), s.clone());
        req.interesting = opts.infer.globals.clone();
        out.schemes.insert(s.clone(), simplify(&req));
        let (ins, outs) = locators_of(c, s);
        let whole = TypeScheme {
            subject: s.clone(),
            quantified: BTreeSet::new(),
            body: c.clone(),
        };
        let b = formal_sketches(&whole, &ins, &outs, l)?;
        let params: Vec<(String, Sketch, bool)> = ins
            .iter()
            .map(|loc| {
                let key = formal_key(s, loc, true);
                let k = infer_const(c, s, loc);
                out.consts.insert(key.clone(), k);
                (loc.clone(), b[&key].clone(), k)
            })
            .collect();
        let rets: Vec<(String, Sketch)> = outs
            .iter()
            .map(|loc| (loc.clone(), b[&formal_key(s, loc, false)].clone()))
            .collect();
        e.function(s, &params, &rets);
        out.bindings.extend(b);
    }
    out.header = e.finish();
    Ok(out)
}

/// Schemes in the order given.
pub fn render_scheme_list<'a>(schemes: impl IntoIterator<Item = &'a TypeScheme>) -> String {
    schemes
        .into_iter()
        .map(|s| format!("// {}\n{}", s.subject, crate::simplify::display_scheme(s)))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Schemes rendered one after another in program order.
pub fn render_schemes(prog: &Program, schemes: &BTreeMap<String, TypeScheme>) -> String {
    render_scheme_list(prog.procs.iter().filter_map(|p| schemes.get(&p.name)))
}

/// All generated constraints, one block per procedure.
pub fn render_generated(prog: &Program, generated: &BTreeMap<String, Generated>) -> String {
    prog.procs
        .iter()
        .filter_map(|p| generated.get(&p.name).map(|g| (p, g)))
        .map(|(p, g)| format!("// {}\n{}", p.name, g.constraints))
        .collect::<Vec<_>>()
        .join("\n")
}
