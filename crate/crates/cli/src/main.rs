use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use mtype::ctype::EmitOptions;
use mtype::ir::{parse_program, Program};
use mtype::lattice::Lattice;
use mtype::oracle::{closure, OracleConfig, OracleError, DEFAULT_FACT_CAP};
use mtype::pds::transducer_to_dot;
use mtype::pipeline::{
    guess_subjects, render_generated, render_scheme_list, render_schemes, run_constraints,
    run_program, PipelineError, PipelineOptions, PipelineOutput,
};
use mtype::simplify::{display_scheme, simplify, transducer, InferOptions, SimplificationRequest};
use mtype::sketch::Sketch;
use mtype::solve::{solve_labels, SolveError};
use mtype::syntax::{self, parse_constraints_checked};
use mtype::{Constraint, ConstraintSet};

#[derive(Parser)]
#[command(
    name = "mtype",
    version,
    about = "Recover types from machine-level constraint programs"
)]
struct Cli {
    /// Lattice of type constants (JSON); the built-in integer lattice otherwise.
    #[arg(long, global = true, env = "MTYPE_LATTICE")]
    lattice: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads for per-procedure simplification (0: all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Input format; guessed from the file extension (`.ir`) when absent.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Ir,
    Constraints,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the constraints generated for every procedure of an IR program.
    GenConstraints { input: PathBuf },
    /// Simplify to type schemes.
    Simplify {
        input: PathBuf,
        /// Procedure variables to simplify for (constraint files).
        #[arg(long, value_delimiter = ',')]
        subject: Vec<String>,
        /// Extra variables kept in every scheme.
        #[arg(long, value_delimiter = ',')]
        interesting: Vec<String>,
        /// Print the simplifying transducer as DOT instead.
        #[arg(long)]
        emit_dot: bool,
    },
    /// Solve for sketches.
    Solve {
        input: PathBuf,
        /// Variables to report (constraint files); all when absent.
        #[arg(long, value_delimiter = ',')]
        vars: Vec<String>,
        #[arg(long)]
        emit_dot: bool,
    },
    /// Print C declarations.
    EmitC {
        input: PathBuf,
        #[arg(long, value_delimiter = ',')]
        subject: Vec<String>,
        #[arg(long, default_value = "Struct_")]
        name_prefix: String,
        /// Keep unrolled recursive types as they are.
        #[arg(long)]
        no_reroll: bool,
    },
    /// Run every stage and write the artifacts to a directory.
    Pipeline {
        input: PathBuf,
        #[arg(long, default_value = "mtype-out")]
        out_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "schemes,c-header")]
        emit: Vec<Artifact>,
        #[arg(long, value_delimiter = ',')]
        subject: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        interesting: Vec<String>,
        #[arg(long)]
        emit_dot: bool,
        /// Also write generated constraints and raw schemes.
        #[arg(long)]
        keep_intermediates: bool,
        #[arg(long, default_value = "Struct_")]
        name_prefix: String,
        /// Reject procedures generating more constraints than this.
        #[arg(long)]
        max_constraints: Option<usize>,
    },
    /// Decide a goal constraint with the bounded reference deriver.
    OracleEntails {
        input: PathBuf,
        /// e.g. `x <= y` or `var x.load`.
        goal: String,
        #[arg(long, default_value_t = 3)]
        bound: usize,
        #[arg(long, default_value_t = DEFAULT_FACT_CAP)]
        fact_cap: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Artifact {
    Schemes,
    Sketches,
    CHeader,
    Json,
}

#[derive(Debug)]
enum Failure {
    Parse(String),
    Lattice(String),
    Resource(String),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Parse(_) => 2,
            Failure::Lattice(_) => 3,
            Failure::Resource(_) => 4,
            Failure::Other(_) => 1,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Solve(s) => s.into(),
            r @ PipelineError::ResourceCap { .. } => Failure::Resource(r.to_string()),
        }
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        Failure::Lattice(e.to_string())
    }
}

type Result<T> = std::result::Result<T, Failure>;

enum Input {
    Ir(Program),
    Constraints(ConstraintSet),
}

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)
}

fn load_lattice(path: Option<&Path>) -> Result<Lattice> {
    match path {
        None => Ok(Lattice::default_lattice()),
        Some(p) => {
            let text = read(p)?;
            Lattice::from_json(&text).map_err(|e| Failure::Lattice(format!("{}: {e}", p.display())))
        }
    }
}

fn load_input(path: &Path, mode: Option<Mode>, l: &Lattice) -> Result<Input> {
    let text = read(path)?;
    let mode = mode.unwrap_or(if path.extension().is_some_and(|e| e == "ir") {
        Mode::Ir
    } else {
        Mode::Constraints
    });
    let known = |n: &str| l.get(n).is_some();
    match mode {
        Mode::Ir => {
            let prog = parse_program(&text)
                .map_err(|e| Failure::Parse(format!("{}:{e}", path.display())))?;
            for e in &prog.externs {
                if let Some(c) = &e.scheme {
                    if let Some(k) = c.constants().into_iter().find(|k| !known(k)) {
                        return Err(Failure::Parse(format!(
                            "{}: extern `{}` uses unknown lattice constant `#{k}`",
                            path.display(),
                            e.name
                        )));
                    }
                }
            }
            Ok(Input::Ir(prog))
        }
        Mode::Constraints => {
            let c = if path.extension().is_some_and(|e| e == "json") {
                syntax::from_json(&text)
            } else {
                parse_constraints_checked(&text, known)
            };
            let c = c.map_err(|e| Failure::Parse(format!("{}:{e}", path.display())))?;
            if let Some(k) = c.constants().into_iter().find(|k| !known(k)) {
                return Err(Failure::Parse(format!(
                    "{}: unknown lattice constant `#{k}`",
                    path.display()
                )));
            }
            Ok(Input::Constraints(c))
        }
    }
}

fn subjects_or_guess(c: &ConstraintSet, given: &[String]) -> Vec<String> {
    if given.is_empty() {
        guess_subjects(c)
    } else {
        given.to_vec()
    }
}

fn sketch_json(s: &Sketch, l: &Lattice) -> serde_json::Value {
    let states: Vec<serde_json::Value> = (0..s.state_count())
        .map(|q| {
            let edges: serde_json::Map<String, serde_json::Value> = s
                .edges(q)
                .map(|(lab, t)| (lab.to_string(), t.into()))
                .collect();
            serde_json::json!({
                "label": l.name(s.label(q)),
                "notes": s.notes(q).iter().map(|&e| l.name(e)).collect::<Vec<_>>(),
                "edges": edges,
            })
        })
        .collect();
    serde_json::json!({ "states": states })
}

fn sketch_text(name: &str, s: &Sketch, l: &Lattice) -> String {
    let mut out = format!("{name}\n");
    for q in 0..s.state_count() {
        let notes: Vec<&str> = s.notes(q).iter().map(|&e| l.name(e)).collect();
        let notes = if notes.is_empty() {
            String::new()
        } else {
            format!(" ({})", notes.join(", "))
        };
        let edges: Vec<String> = s
            .edges(q)
            .map(|(lab, t)| format!(".{lab} -> q{t}"))
            .collect();
        let _ = writeln!(
            out,
            "  q{q}: {}{notes}{}",
            l.name(s.label(q)),
            if edges.is_empty() {
                String::new()
            } else {
                format!("; {}", edges.join(", "))
            }
        );
    }
    out
}

fn options(
    cli: &Cli,
    interesting: &[String],
    emit: EmitOptions,
    max_constraints: Option<usize>,
) -> PipelineOptions {
    PipelineOptions {
        infer: InferOptions {
            jobs: cli.jobs,
            globals: interesting.iter().cloned().collect(),
        },
        emit,
        max_constraints,
    }
}

fn run_any(
    input: &Input,
    subjects: &[String],
    l: &Lattice,
    opts: &PipelineOptions,
) -> Result<PipelineOutput> {
    Ok(match input {
        Input::Ir(p) => run_program(p, l, opts)?,
        Input::Constraints(c) => run_constraints(c, &subjects_or_guess(c, subjects), l, opts)?,
    })
}

fn schemes_text(input: &Input, out: &PipelineOutput) -> String {
    match input {
        Input::Ir(p) => render_schemes(p, &out.schemes),
        Input::Constraints(_) => render_scheme_list(out.schemes.values()),
    }
}

fn schemes_json(out: &PipelineOutput) -> serde_json::Value {
    out.schemes
        .iter()
        .map(|(k, s)| {
            let body: serde_json::Value =
                serde_json::from_str(&syntax::to_json(&s.body)).expect("valid json");
            (
                k.clone(),
                serde_json::json!({ "quantified": s.quantified, "body": body }),
            )
        })
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn write(path: &Path, text: &str, written: &mut Vec<String>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    written.push(path.display().to_string());
    Ok(())
}

fn file_name(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn run(cli: &Cli) -> Result<String> {
    let l = load_lattice(cli.lattice.as_deref())?;
    match &cli.cmd {
        Cmd::GenConstraints { input } => {
            let Input::Ir(prog) = load_input(input, Some(cli.mode.unwrap_or(Mode::Ir)), &l)? else {
                return Err(Failure::Other(anyhow::anyhow!(
                    "gen-constraints needs an IR program"
                )));
            };
            let out = run_program(&prog, &l, &options(cli, &[], EmitOptions::default(), None))?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            if cli.json {
                let m: serde_json::Map<String, serde_json::Value> = out
                    .generated
                    .iter()
                    .map(|(k, g)| {
                        (
                            k.clone(),
                            serde_json::from_str(&syntax::to_json(&g.constraints)).expect("json"),
                        )
                    })
                    .collect();
                return Ok(serde_json::to_string_pretty(&m).expect("json"));
            }
            Ok(render_generated(&prog, &out.generated))
        }
        Cmd::Simplify {
            input,
            subject,
            interesting,
            emit_dot,
        } => {
            let input = load_input(input, cli.mode, &l)?;
            if *emit_dot {
                let Input::Constraints(c) = &input else {
                    let Input::Ir(p) = &input else { unreachable!() };
                    let out = run_program(
                        p,
                        &l,
                        &options(cli, interesting, EmitOptions::default(), None),
                    )?;
                    let mut text = String::new();
                    for proc in &p.procs {
                        let g = &out.generated[&proc.name];
                        let mut req =
                            SimplificationRequest::new(g.constraints.clone(), proc.name.clone());
                        req.interesting = interesting.iter().cloned().collect();
                        text.push_str(&transducer_to_dot(&transducer(&req)));
                    }
                    return Ok(text);
                };
                let mut text = String::new();
                for s in subjects_or_guess(c, subject) {
                    let mut req = SimplificationRequest::new(c.clone(), s);
                    req.interesting = interesting.iter().cloned().collect();
                    text.push_str(&transducer_to_dot(&transducer(&req)));
                }
                return Ok(text);
            }
            let out = match &input {
                Input::Constraints(c) => {
                    let mut out = PipelineOutput::default();
                    for s in subjects_or_guess(c, subject) {
                        let mut req = SimplificationRequest::new(c.clone(), s.clone());
                        req.interesting = interesting.iter().cloned().collect();
                        out.schemes.insert(s, simplify(&req));
                    }
                    out
                }
                Input::Ir(_) => run_any(
                    &input,
                    subject,
                    &l,
                    &options(cli, interesting, EmitOptions::default(), None),
                )?,
            };
            if cli.json {
                return Ok(serde_json::to_string_pretty(&schemes_json(&out)).expect("json"));
            }
            Ok(schemes_text(&input, &out))
        }
        Cmd::Solve {
            input,
            vars,
            emit_dot,
        } => {
            let input = load_input(input, cli.mode, &l)?;
            let bindings = match &input {
                Input::Constraints(c) => {
                    let wanted: BTreeSet<String> = vars.iter().cloned().collect();
                    let mut b = solve_labels(
                        c,
                        &l,
                        if wanted.is_empty() {
                            None
                        } else {
                            Some(&wanted)
                        },
                    )?;
                    b.retain(|k, _| !k.starts_with('#'));
                    b
                }
                Input::Ir(_) => {
                    run_any(
                        &input,
                        &[],
                        &l,
                        &options(cli, &[], EmitOptions::default(), None),
                    )?
                    .bindings
                }
            };
            if cli.json {
                let m: serde_json::Map<String, serde_json::Value> = bindings
                    .iter()
                    .map(|(k, s)| (k.clone(), sketch_json(s, &l)))
                    .collect();
                return Ok(serde_json::to_string_pretty(&m).expect("json"));
            }
            Ok(bindings
                .iter()
                .map(|(k, s)| {
                    if *emit_dot {
                        s.to_dot(&l, k)
                    } else {
                        sketch_text(k, s, &l)
                    }
                })
                .collect())
        }
        Cmd::EmitC {
            input,
            subject,
            name_prefix,
            no_reroll,
        } => {
            let input = load_input(input, cli.mode, &l)?;
            let emit = EmitOptions {
                name_prefix: name_prefix.clone(),
                reroll: !no_reroll,
                ..EmitOptions::default()
            };
            let out = run_any(&input, subject, &l, &options(cli, &[], emit, None))?;
            Ok(if cli.json {
                out.header.to_json()
            } else {
                out.header.render()
            })
        }
        Cmd::Pipeline {
            input: path,
            out_dir,
            emit,
            subject,
            interesting,
            emit_dot,
            keep_intermediates,
            name_prefix,
            max_constraints,
        } => {
            let input = load_input(path, cli.mode, &l)?;
            let emit_opts = EmitOptions {
                name_prefix: name_prefix.clone(),
                ..EmitOptions::default()
            };
            let opts = options(cli, interesting, emit_opts, *max_constraints);
            let out = run_any(&input, subject, &l, &opts)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            let mut written = Vec::new();
            let want = |a: Artifact| emit.contains(&a);
            if want(Artifact::Schemes) {
                write(
                    &out_dir.join("schemes.txt"),
                    &schemes_text(&input, &out),
                    &mut written,
                )?;
            }
            if want(Artifact::CHeader) {
                write(&out_dir.join("types.h"), &out.header.render(), &mut written)?;
            }
            if want(Artifact::Sketches) {
                let text: String = out
                    .bindings
                    .iter()
                    .map(|(k, s)| sketch_text(k, s, &l))
                    .collect();
                write(&out_dir.join("sketches.txt"), &text, &mut written)?;
            }
            if want(Artifact::Json) || cli.json {
                let doc = serde_json::json!({
                    "schemes": schemes_json(&out),
                    "sketches": out.bindings.iter().map(|(k, s)| (k.clone(), sketch_json(s, &l))).collect::<serde_json::Map<_, _>>(),
                    "const": out.consts,
                    "header": serde_json::from_str::<serde_json::Value>(&out.header.to_json()).expect("json"),
                });
                write(
                    &out_dir.join("result.json"),
                    &serde_json::to_string_pretty(&doc).expect("json"),
                    &mut written,
                )?;
            }
            if *emit_dot {
                for (k, s) in &out.bindings {
                    write(
                        &out_dir
                            .join("dot")
                            .join(format!("{}.sketch.dot", file_name(k))),
                        &s.to_dot(&l, k),
                        &mut written,
                    )?;
                }
                let requests: Vec<SimplificationRequest> = match &input {
                    Input::Ir(p) => p
                        .procs
                        .iter()
                        .map(|pr| {
                            SimplificationRequest::new(
                                out.generated[&pr.name].constraints.clone(),
                                pr.name.clone(),
                            )
                        })
                        .collect(),
                    Input::Constraints(c) => out
                        .schemes
                        .keys()
                        .map(|s| SimplificationRequest::new(c.clone(), s.clone()))
                        .collect(),
                };
                for mut req in requests {
                    req.interesting = opts.infer.globals.clone();
                    let dot = transducer_to_dot(&transducer(&req));
                    write(
                        &out_dir
                            .join("dot")
                            .join(format!("{}.transducer.dot", file_name(&req.subject))),
                        &dot,
                        &mut written,
                    )?;
                }
            }
            if *keep_intermediates {
                let dir = out_dir.join("intermediates");
                if let Input::Ir(p) = &input {
                    for (name, g) in &out.generated {
                        write(
                            &dir.join(format!("{}.constraints", file_name(name))),
                            &g.constraints.to_string(),
                            &mut written,
                        )?;
                    }
                    write(
                        &dir.join("all.constraints"),
                        &render_generated(p, &out.generated),
                        &mut written,
                    )?;
                }
                for (name, s) in &out.schemes {
                    write(
                        &dir.join(format!("{}.scheme", file_name(name))),
                        &display_scheme(s),
                        &mut written,
                    )?;
                }
            }
            Ok(written.iter().map(|w| format!("wrote {w}\n")).collect())
        }
        Cmd::OracleEntails {
            input,
            goal,
            bound,
            fact_cap,
        } => {
            let Input::Constraints(c) = load_input(input, Some(Mode::Constraints), &l)? else {
                unreachable!()
            };
            let goal: Constraint = goal
                .parse()
                .map_err(|e| Failure::Parse(format!("goal: {e}")))?;
            let cfg = OracleConfig {
                bound: *bound,
                labels: None,
                fact_cap: *fact_cap,
            };
            let cl = closure(&c, &cfg).map_err(|e| match e {
                OracleError::ResourceLimit(_) => Failure::Resource(e.to_string()),
            })?;
            let holds = cl.holds(&goal);
            Ok(if cli.json {
                serde_json::json!({ "goal": goal.to_string(), "bound": bound, "entailed": holds })
                    .to_string()
            } else {
                format!("{holds}")
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            let mut out = std::io::stdout().lock();
            let nl = if text.is_empty() || text.ends_with('\n') {
                ""
            } else {
                "\n"
            };
            // A closed pipe downstream is not an error worth reporting.
            let _ = write!(out, "{text}{nl}").and_then(|_| out.flush());
            ExitCode::SUCCESS
        }
        Err(f) => {
            match &f {
                Failure::Parse(m) => eprintln!("parse error: {m}"),
                Failure::Lattice(m) => eprintln!("lattice error: {m}"),
                Failure::Resource(m) => eprintln!("resource cap exceeded: {m}"),
                Failure::Other(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}
