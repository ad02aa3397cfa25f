//! A small register-machine IR and its constraint generator.
//!
//! ```text
//! # comment
//! extern close(in: stack0; out: eax) {
//!     close.in_stack0 <= #FileDescriptor
//! }
//!
//! proc get(in: stack0; out: eax) {
//!     entry: mov ecx, stack0
//!            load eax, [ecx+4], 32
//!            ret
//! }
//! ```
//!
//! Instructions: `mov d, s`, `const d, n`, `load d, [b+k], N`,
//! `store [b+k], s, N`, `add d, a, b`, `sub d, a, b`, `xor d, a, b`,
//! `call f` or `call f(in: a, b; out: c)`, `jmp L`, `br r, L`, `ret`.
//! Operands are registers, stack slots `stackN`, or integer literals.
//! An extern body is the callee's type scheme, written as constraints.

mod dataflow;
mod gen;
mod parse;

pub use dataflow::{compute_reaching_defs, track_constants, AbstractState, Def, Value};
pub use gen::{callgraph, extern_scheme, generate_constraints, CallSite, Generated};
pub use parse::{parse_program, IrError};

use std::fmt;

use crate::constraint::{ConstraintSet, DerivedTypeVar};
use crate::label::FieldLabel;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Loc {
    Reg(String),
    Stack(i64),
}

impl Loc {
    /// The name used inside `in_`/`out_` labels.
    pub fn name(&self) -> String {
        match self {
            Loc::Reg(r) => r.clone(),
            Loc::Stack(k) => format!("stack{k}"),
        }
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Operand {
    Loc(Loc),
    Imm(i64),
}

impl Operand {
    pub fn loc(&self) -> Option<&Loc> {
        match self {
            Operand::Loc(l) => Some(l),
            Operand::Imm(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instr {
    Mov {
        dst: Loc,
        src: Operand,
    },
    Const {
        dst: Loc,
        value: i64,
    },
    Load {
        dst: Loc,
        base: Loc,
        offset: i64,
        bits: u32,
    },
    Store {
        base: Loc,
        offset: i64,
        src: Operand,
        bits: u32,
    },
    Add {
        dst: Loc,
        a: Loc,
        b: Operand,
    },
    Sub {
        dst: Loc,
        a: Loc,
        b: Operand,
    },
    Xor {
        dst: Loc,
        a: Loc,
        b: Operand,
    },
    Call {
        callee: String,
        ins: Option<Vec<Loc>>,
        outs: Option<Vec<Loc>>,
    },
    Jmp(String),
    Branch {
        cond: Loc,
        target: String,
    },
    Ret,
}

impl Instr {
    pub fn def(&self) -> Vec<&Loc> {
        match self {
            Instr::Mov { dst, .. }
            | Instr::Const { dst, .. }
            | Instr::Load { dst, .. }
            | Instr::Add { dst, .. }
            | Instr::Sub { dst, .. }
            | Instr::Xor { dst, .. } => vec![dst],
            Instr::Call { outs: Some(o), .. } => o.iter().collect(),
            _ => vec![],
        }
    }

    pub fn uses(&self) -> Vec<&Loc> {
        match self {
            Instr::Mov { src, .. } => src.loc().into_iter().collect(),
            Instr::Load { base, .. } => vec![base],
            Instr::Store { base, src, .. } => std::iter::once(base).chain(src.loc()).collect(),
            Instr::Add { a, b, .. } | Instr::Sub { a, b, .. } | Instr::Xor { a, b, .. } => {
                std::iter::once(a).chain(b.loc()).collect()
            }
            Instr::Call { ins: Some(i), .. } => i.iter().collect(),
            Instr::Branch { cond, .. } => vec![cond],
            _ => vec![],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stmt {
    pub label: String,
    pub instr: Instr,
    pub line: usize,
}

/// Binds a formal location to the procedure's `in_`/`out_` capability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Locator {
    pub loc: Loc,
    pub is_in: bool,
}

impl Locator {
    pub fn label(&self) -> FieldLabel {
        if self.is_in {
            FieldLabel::In(self.loc.name())
        } else {
            FieldLabel::Out(self.loc.name())
        }
    }

    pub fn var(&self, proc: &str) -> DerivedTypeVar {
        DerivedTypeVar::var(proc).push(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Procedure {
    pub name: String,
    pub ins: Vec<Loc>,
    pub outs: Vec<Loc>,
    pub body: Vec<Stmt>,
}

impl Procedure {
    pub fn locators(&self) -> Vec<Locator> {
        let ins = self.ins.iter().map(|l| Locator {
            loc: l.clone(),
            is_in: true,
        });
        let outs = self.outs.iter().map(|l| Locator {
            loc: l.clone(),
            is_in: false,
        });
        ins.chain(outs).collect()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.body.iter().position(|s| s.label == label)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Extern {
    pub name: String,
    pub ins: Vec<Loc>,
    pub outs: Vec<Loc>,
    pub scheme: Option<ConstraintSet>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub procs: Vec<Procedure>,
    pub externs: Vec<Extern>,
}

impl Program {
    pub fn proc(&self, name: &str) -> Option<&Procedure> {
        self.procs.iter().find(|p| p.name == name)
    }

    pub fn external(&self, name: &str) -> Option<&Extern> {
        self.externs.iter().find(|e| e.name == name)
    }

    /// Formal locations of any declared callee.
    pub fn signature(&self, name: &str) -> Option<(&[Loc], &[Loc])> {
        if let Some(p) = self.proc(name) {
            return Some((&p.ins, &p.outs));
        }
        self.external(name).map(|e| (&e.ins[..], &e.outs[..]))
    }
}
