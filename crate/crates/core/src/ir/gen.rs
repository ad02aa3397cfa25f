use std::collections::{BTreeMap, BTreeSet, HashMap};

use petgraph::graph::DiGraph;

use super::dataflow::{track_constants, AbstractState, Def, Value};
use super::{Instr, Loc, Operand, Procedure, Program};
use crate::constraint::{Constraint, ConstraintSet, DerivedTypeVar, TypeScheme};
use crate::label::FieldLabel;
use crate::simplify::instantiate_scheme;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallSite {
    pub callee: String,
    pub label: String,
    /// Formal location name and the variable passed or received.
    pub ins: Vec<(String, DerivedTypeVar)>,
    pub outs: Vec<(String, DerivedTypeVar)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Generated {
    pub constraints: ConstraintSet,
    pub warnings: Vec<String>,
    pub calls: Vec<CallSite>,
}

/// Procedures as nodes, in program order; edges run caller to callee.
pub fn callgraph(prog: &Program) -> DiGraph<String, ()> {
    let mut g = DiGraph::new();
    let nodes: BTreeMap<&str, _> = prog
        .procs
        .iter()
        .map(|p| (p.name.as_str(), g.add_node(p.name.clone())))
        .collect();
    for p in &prog.procs {
        let mut seen = BTreeSet::new();
        for s in &p.body {
            if let Instr::Call { callee, .. } = &s.instr {
                if let Some(&to) = nodes.get(callee.as_str()) {
                    if seen.insert(callee) {
                        g.add_edge(nodes[p.name.as_str()], to, ());
                    }
                }
            }
        }
    }
    g
}

/// Scheme of an extern with a body: its constraints, all variables quantified.
pub fn extern_scheme(prog: &Program, name: &str) -> Option<TypeScheme> {
    let e = prog.external(name)?;
    let body = e.scheme.clone()?;
    let mut quantified = body.variables();
    quantified.remove(name);
    Some(TypeScheme {
        subject: name.to_string(),
        quantified,
        body,
    })
}

struct Gen<'a> {
    p: &'a Procedure,
    st: AbstractState,
    out: Generated,
    uses: HashMap<(Loc, usize), (DerivedTypeVar, i64)>,
    joins: usize,
}

fn version(proc: &str, loc: &Loc, label: &str) -> String {
    match loc {
        Loc::Reg(r) => format!("{}_{label}_{proc}", r.to_uppercase()),
        Loc::Stack(0) => format!("AR_{proc}_{label}"),
        Loc::Stack(k) => format!("AR_{proc}_{label}_s{k}"),
    }
}

impl Gen<'_> {
    fn def_var(&self, loc: &Loc, d: Def) -> DerivedTypeVar {
        let label = match d {
            Def::Initial => "INITIAL",
            Def::At(i) => &self.p.body[i].label,
        };
        DerivedTypeVar::var(version(&self.p.name, loc, label))
    }

    fn sub(&mut self, a: DerivedTypeVar, b: DerivedTypeVar) {
        self.out.constraints.add_subtype(a, b);
    }

    /// Variable read for `loc` at statement `at`, with any tracked byte offset.
    fn use_of(&mut self, loc: &Loc, at: usize) -> (DerivedTypeVar, i64) {
        if let Some(r) = self.uses.get(&(loc.clone(), at)) {
            return r.clone();
        }
        let defs = self.st.defs(loc, at);
        let r = if defs.len() == 1 {
            let d = *defs.iter().next().expect("one def");
            match self.st.value(d) {
                Value::Offset {
                    base,
                    at: b_at,
                    delta,
                } => {
                    let (v, k) = self.use_of(&base, b_at);
                    (v, k + delta)
                }
                _ => (self.def_var(loc, d), 0),
            }
        } else {
            let join = DerivedTypeVar::var(format!("unknown_loc_{}", self.joins));
            self.joins += 1;
            for d in defs {
                let v = self.def_var(loc, d);
                self.sub(v, join.clone());
            }
            (join, 0)
        };
        self.uses.insert((loc.clone(), at), r.clone());
        r
    }

    fn plain_use(&mut self, loc: &Loc, at: usize) -> DerivedTypeVar {
        self.use_of(loc, at).0
    }

    fn is_tracked(&self, i: usize) -> bool {
        !matches!(self.st.values.get(&i), None | Some(Value::Unknown))
    }

    fn instr(
        &mut self,
        i: usize,
        prog: &Program,
        schemes: &BTreeMap<String, TypeScheme>,
        scc: &BTreeSet<String>,
    ) {
        let p = self.p;
        let at = Def::At(i);
        match &p.body[i].instr {
            Instr::Mov {
                dst,
                src: Operand::Loc(src),
            } if !self.is_tracked(i) => {
                let u = self.plain_use(src, i);
                let d = self.def_var(dst, at);
                self.sub(u, d);
            }
            Instr::Load {
                dst,
                base,
                offset,
                bits,
            } => {
                let (b, k) = self.use_of(base, i);
                let d = self.def_var(dst, at);
                self.sub(
                    b.push(FieldLabel::Load)
                        .push(FieldLabel::field(*bits, offset + k)),
                    d,
                );
            }
            Instr::Store {
                base,
                offset,
                src,
                bits,
            } => {
                let (b, k) = self.use_of(base, i);
                let target = b
                    .push(FieldLabel::Store)
                    .push(FieldLabel::field(*bits, offset + k));
                match src {
                    Operand::Loc(s) => {
                        let u = self.plain_use(s, i);
                        self.sub(u, target);
                    }
                    Operand::Imm(_) => {
                        self.out.constraints.insert(Constraint::Exists(target));
                    }
                }
            }
            Instr::Add {
                dst,
                a,
                b: Operand::Loc(b),
            }
            | Instr::Sub {
                dst,
                a,
                b: Operand::Loc(b),
            } if !self.is_tracked(i) => {
                let (x, y) = (self.plain_use(a, i), self.plain_use(b, i));
                let d = self.def_var(dst, at);
                self.out.constraints.insert(match &p.body[i].instr {
                    Instr::Add { .. } => Constraint::Add(x, y, d),
                    _ => Constraint::Sub(x, y, d),
                });
            }
            Instr::Call { callee, ins, outs } => {
                let label = &p.body[i].label;
                let (formal_in, formal_out) = match prog.signature(callee) {
                    Some((fi, fo)) => (fi.to_vec(), fo.to_vec()),
                    None => (
                        ins.clone().unwrap_or_default(),
                        outs.clone().unwrap_or_default(),
                    ),
                };
                let inst = if scc.contains(callee) {
                    callee.clone()
                } else {
                    let tag = format!("{callee}:{label}");
                    let scheme = schemes
                        .get(callee)
                        .cloned()
                        .or_else(|| extern_scheme(prog, callee));
                    match scheme {
                        Some(s) => self.out.constraints.extend(&instantiate_scheme(&s, label)),
                        None if prog.signature(callee).is_none() => {
                            self.out.warnings.push(format!(
                                "{}: call to unknown `{callee}` at {label} is unconstrained",
                                p.name
                            ))
                        }
                        None => {}
                    }
                    tag
                };
                let callee_var = DerivedTypeVar::var(inst);
                let actual_in = ins.clone().unwrap_or_default();
                let actual_out = outs.clone().unwrap_or_default();
                if actual_in.len() != formal_in.len() || actual_out.len() != formal_out.len() {
                    self.out.warnings.push(format!(
                        "{}: arity mismatch calling `{callee}` at {label}",
                        p.name
                    ));
                }
                let mut site = CallSite {
                    callee: callee.clone(),
                    label: label.clone(),
                    ins: vec![],
                    outs: vec![],
                };
                for (a, f) in actual_in.iter().zip(&formal_in) {
                    let u = self.plain_use(a, i);
                    self.sub(u.clone(), callee_var.push(FieldLabel::In(f.name())));
                    site.ins.push((f.name(), u));
                }
                for (a, f) in actual_out.iter().zip(&formal_out) {
                    let d = self.def_var(a, at);
                    self.sub(callee_var.push(FieldLabel::Out(f.name())), d.clone());
                    site.outs.push((f.name(), d));
                }
                self.out.calls.push(site);
            }
            Instr::Ret => {
                for out in &p.outs {
                    let formal = DerivedTypeVar::var(&p.name).push(FieldLabel::Out(out.name()));
                    let defs = self.st.defs(out, i);
                    if defs.len() == 1 {
                        let u = self.plain_use(out, i);
                        self.sub(u, formal);
                    } else {
                        for d in defs {
                            let v = self.def_var(out, d);
                            self.sub(v, formal.clone());
                        }
                    }
                }
            }
            _ => {}
        }
    }
}

/// Constraints for one procedure. Callees found in `schemes` (or externs
/// with a body) are instantiated per call site; callees in `scc` are
/// referenced monomorphically.
pub fn generate_constraints(
    p: &Procedure,
    prog: &Program,
    schemes: &BTreeMap<String, TypeScheme>,
    scc: &BTreeSet<String>,
) -> Generated {
    let mut g = Gen {
        p,
        st: track_constants(p),
        out: Generated::default(),
        uses: HashMap::new(),
        joins: 0,
    };
    for l in &p.ins {
        let formal = DerivedTypeVar::var(&p.name).push(FieldLabel::In(l.name()));
        let v = g.def_var(l, Def::Initial);
        g.sub(formal, v);
    }
    for i in 0..p.body.len() {
        g.instr(i, prog, schemes, scc);
    }
    g.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_program;
    use crate::syntax::parse_constraints;

    fn gen(text: &str, name: &str) -> Generated {
        let prog = parse_program(text).unwrap();
        let p = prog.proc(name).unwrap();
        generate_constraints(
            p,
            &prog,
            &BTreeMap::new(),
            &BTreeSet::from([name.to_string()]),
        )
    }

    fn has(g: &Generated, line: &str) -> bool {
        let c = parse_constraints(line).unwrap();
        let found = c.iter().all(|x| g.constraints.constraints.contains(x));
        found
    }

    #[test]
    fn mov_with_one_def() {
        let g = gen("proc f(in: eax) {\n m: mov ebx, eax\n ret\n}\n", "f");
        assert!(has(&g, "EAX_INITIAL_f <= EBX_m_f"));
        assert!(has(&g, "f.in_eax <= EAX_INITIAL_f"));
        assert_eq!(g.constraints.len(), 2);
    }

    #[test]
    fn load_through_translated_pointer() {
        let g = gen(
            "proc f(in: ecx; out: eax) {\n add ecx, ecx, 4\n l: load eax, [ecx+0], 32\n ret\n}\n",
            "f",
        );
        assert!(has(&g, "ECX_INITIAL_f.load.s32@4 <= EAX_l_f"));
        assert!(has(&g, "EAX_l_f <= f.out_eax"));
        assert!(!g
            .constraints
            .iter()
            .any(|c| matches!(c, Constraint::Add(..))));
    }

    #[test]
    fn unknown_sum_is_additive() {
        let g = gen(
            "proc f(in: ecx, edx) {\n s: add eax, ecx, edx\n ret\n}\n",
            "f",
        );
        assert!(g
            .constraints
            .iter()
            .any(|c| matches!(c, Constraint::Add(..))));
    }

    #[test]
    fn xor_idiom_is_silent() {
        let g = gen(
            "proc f(out: eax) {\n xor eax, eax, eax\n z: mov ebx, eax\n ret\n}\n",
            "f",
        );
        assert!(!g
            .constraints
            .iter()
            .any(|c| c.to_string().contains("EBX_z_f")));
    }

    #[test]
    fn two_defs_at_exit_flow_separately() {
        let g = gen(
            "proc get(in: ecx; out: eax) {\n br ecx, other\n a: load eax, [ecx+0], 32\n jmp done\n\
             other: mov eax, ecx\n done: ret\n}\n",
            "get",
        );
        assert!(has(&g, "EAX_a_get <= get.out_eax"));
        assert!(has(&g, "EAX_other_get <= get.out_eax"));
    }

    #[test]
    fn stores_and_unknown_callees() {
        let g = gen(
            "proc f(in: ecx) {\n store [ecx+8], 1, 32\n c: call g(in: ecx)\n ret\n}\n",
            "f",
        );
        assert!(has(&g, "var ECX_INITIAL_f.store.s32@8"));
        assert!(has(&g, "ECX_INITIAL_f <= g:c.in_ecx"));
        assert_eq!(g.warnings.len(), 1);
    }

    #[test]
    fn callgraph_edges() {
        let prog =
            parse_program("proc a() {\n call b\n call b\n ret\n}\nproc b() {\n ret\n}\n").unwrap();
        let g = callgraph(&prog);
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
    }
}
