use std::collections::BTreeSet;

use thiserror::Error;

use super::{Extern, Instr, Loc, Operand, Procedure, Program, Stmt};
use crate::syntax::parse_constraints;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct IrError {
    pub line: usize,
    pub msg: String,
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, IrError> {
    Err(IrError {
        line,
        msg: msg.into(),
    })
}

fn parse_int(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let v = match body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        Some(hex) => i64::from_str_radix(hex, 16).ok()?,
        None if !body.is_empty() && body.chars().all(|c| c.is_ascii_digit()) => {
            body.parse().ok()?
        }
        None => return None,
    };
    Some(if neg { -v } else { v })
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_loc(s: &str, line: usize) -> Result<Loc, IrError> {
    let s = s.trim();
    if let Some(k) = s.strip_prefix("stack").and_then(parse_int) {
        return Ok(Loc::Stack(k));
    }
    if is_ident(s) {
        return Ok(Loc::Reg(s.to_string()));
    }
    err(
        line,
        format!("expected a register or stack slot, found `{s}`"),
    )
}

fn parse_operand(s: &str, line: usize) -> Result<Operand, IrError> {
    match parse_int(s.trim()) {
        Some(v) => Ok(Operand::Imm(v)),
        None => parse_loc(s, line).map(Operand::Loc),
    }
}

fn parse_mem(s: &str, line: usize) -> Result<(Loc, i64), IrError> {
    let s = s.trim();
    let Some(inner) = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')) else {
        return err(
            line,
            format!("expected a memory operand `[base+k]`, found `{s}`"),
        );
    };
    let split = inner.find(['+', '-']);
    match split {
        None => Ok((parse_loc(inner, line)?, 0)),
        Some(p) => {
            let off = parse_int(inner[p..].trim()).or_else(|| {
                let sign = if inner[p..].starts_with('-') { -1 } else { 1 };
                parse_int(inner[p + 1..].trim()).map(|v| sign * v)
            });
            match off {
                Some(k) => Ok((parse_loc(&inner[..p], line)?, k)),
                None => err(line, format!("bad offset in `{s}`")),
            }
        }
    }
}

fn parse_bits(s: &str, line: usize) -> Result<u32, IrError> {
    match parse_int(s.trim()) {
        Some(b) if b > 0 && b <= 1024 => Ok(b as u32),
        _ => err(line, format!("bad bit width `{}`", s.trim())),
    }
}

/// `in: a, b; out: c` (either part optional).
fn parse_locators(s: &str, line: usize) -> Result<(Vec<Loc>, Vec<Loc>), IrError> {
    let mut ins = Vec::new();
    let mut outs = Vec::new();
    for part in s.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (dir, rest) = match part.split_once(':') {
            Some((d, r)) => (d.trim(), r),
            None => return err(line, format!("expected `in:` or `out:`, found `{part}`")),
        };
        let list: Vec<Loc> = rest
            .split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(|x| parse_loc(x, line))
            .collect::<Result<_, _>>()?;
        match dir {
            "in" => ins = list,
            "out" => outs = list,
            _ => return err(line, format!("expected `in:` or `out:`, found `{dir}:`")),
        }
    }
    Ok((ins, outs))
}

/// `name(locators)` followed by anything.
fn parse_header(s: &str, line: usize) -> Result<(String, Vec<Loc>, Vec<Loc>, &str), IrError> {
    let Some(open) = s.find('(') else {
        return err(line, "expected `(` after the procedure name");
    };
    let Some(close) = s.rfind(')') else {
        return err(line, "missing `)`");
    };
    let name = s[..open].trim();
    if name.is_empty() || name.contains(char::is_whitespace) {
        return err(line, format!("bad procedure name `{name}`"));
    }
    let (ins, outs) = parse_locators(&s[open + 1..close], line)?;
    Ok((name.to_string(), ins, outs, s[close + 1..].trim()))
}

fn operands(rest: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    for (i, c) in rest.char_indices() {
        match c {
            '[' | '(' => depth += 1,
            ']' | ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(rest[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if !rest[start..].trim().is_empty() {
        out.push(rest[start..].trim());
    }
    out
}

fn parse_instr(text: &str, line: usize) -> Result<Instr, IrError> {
    let (op, rest) = match text.split_once(char::is_whitespace) {
        Some((o, r)) => (o, r.trim()),
        None => (text, ""),
    };
    let args = operands(rest);
    let want = |n: usize| -> Result<(), IrError> {
        if args.len() == n {
            Ok(())
        } else {
            err(
                line,
                format!("`{op}` takes {n} operand(s), found {}", args.len()),
            )
        }
    };
    Ok(match op {
        "mov" => {
            want(2)?;
            Instr::Mov {
                dst: parse_loc(args[0], line)?,
                src: parse_operand(args[1], line)?,
            }
        }
        "const" => {
            want(2)?;
            let Some(value) = parse_int(args[1]) else {
                return err(line, "`const` needs a literal");
            };
            Instr::Const {
                dst: parse_loc(args[0], line)?,
                value,
            }
        }
        "load" => {
            want(3)?;
            let (base, offset) = parse_mem(args[1], line)?;
            Instr::Load {
                dst: parse_loc(args[0], line)?,
                base,
                offset,
                bits: parse_bits(args[2], line)?,
            }
        }
        "store" => {
            want(3)?;
            let (base, offset) = parse_mem(args[0], line)?;
            Instr::Store {
                base,
                offset,
                src: parse_operand(args[1], line)?,
                bits: parse_bits(args[2], line)?,
            }
        }
        "add" | "sub" | "xor" => {
            want(3)?;
            let (dst, a, b) = (
                parse_loc(args[0], line)?,
                parse_loc(args[1], line)?,
                parse_operand(args[2], line)?,
            );
            match op {
                "add" => Instr::Add { dst, a, b },
                "sub" => Instr::Sub { dst, a, b },
                _ => Instr::Xor { dst, a, b },
            }
        }
        "call" => {
            if rest.contains('(') {
                let (callee, ins, outs, tail) = parse_header(rest, line)?;
                if !tail.is_empty() {
                    return err(line, format!("unexpected `{tail}` after call"));
                }
                Instr::Call {
                    callee,
                    ins: Some(ins),
                    outs: Some(outs),
                }
            } else {
                want(1)?;
                Instr::Call {
                    callee: args[0].to_string(),
                    ins: None,
                    outs: None,
                }
            }
        }
        "jmp" => {
            want(1)?;
            Instr::Jmp(args[0].to_string())
        }
        "br" => {
            want(2)?;
            Instr::Branch {
                cond: parse_loc(args[0], line)?,
                target: args[1].to_string(),
            }
        }
        "ret" => {
            want(0)?;
            Instr::Ret
        }
        _ => return err(line, format!("unknown instruction `{op}`")),
    })
}

fn strip_comment(s: &str) -> &str {
    match s.find('#') {
        Some(p) => &s[..p],
        None => s,
    }
}

pub fn parse_program(text: &str) -> Result<Program, IrError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut prog = Program::default();
    let mut names = BTreeSet::new();
    let mut i = 0;
    while i < lines.len() {
        let line_no = i + 1;
        let body = strip_comment(lines[i]).trim();
        i += 1;
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix("extern ") {
            let (name, ins, outs, tail) = parse_header(rest, line_no)?;
            let scheme = match tail {
                "" => None,
                "{" => {
                    let start = i;
                    while i < lines.len() && lines[i].trim() != "}" {
                        i += 1;
                    }
                    if i == lines.len() {
                        return err(line_no, format!("unterminated body of `{name}`"));
                    }
                    let text = lines[start..i].join("\n");
                    i += 1;
                    let c = parse_constraints(&text).map_err(|e| IrError {
                        line: start + e.line,
                        msg: e.kind.to_string(),
                    })?;
                    Some(c)
                }
                other => return err(line_no, format!("unexpected `{other}`")),
            };
            if !names.insert(name.clone()) {
                return err(line_no, format!("`{name}` is defined twice"));
            }
            prog.externs.push(Extern {
                name,
                ins,
                outs,
                scheme,
            });
        } else if let Some(rest) = body.strip_prefix("proc ") {
            let (name, ins, outs, tail) = parse_header(rest, line_no)?;
            if tail != "{" {
                return err(line_no, "expected `{` after the procedure header");
            }
            if !names.insert(name.clone()) {
                return err(line_no, format!("`{name}` is defined twice"));
            }
            let mut stmts: Vec<Stmt> = Vec::new();
            let mut pending: Option<String> = None;
            let mut closed = false;
            while i < lines.len() {
                let ln = i + 1;
                let mut text = strip_comment(lines[i]).trim();
                i += 1;
                if text == "}" {
                    closed = true;
                    break;
                }
                if let Some((first, rest)) =
                    text.split_once(char::is_whitespace).or(Some((text, "")))
                {
                    if let Some(label) = first.strip_suffix(':') {
                        if label.is_empty() || pending.is_some() {
                            return err(ln, "bad or repeated label");
                        }
                        pending = Some(label.to_string());
                        text = rest.trim();
                    }
                }
                if text.is_empty() {
                    continue;
                }
                let instr = parse_instr(text, ln)?;
                let label = pending
                    .take()
                    .unwrap_or_else(|| format!("i{}", stmts.len()));
                if stmts.iter().any(|s| s.label == label) {
                    return err(ln, format!("label `{label}` is used twice"));
                }
                stmts.push(Stmt {
                    label,
                    instr,
                    line: ln,
                });
            }
            if !closed {
                return err(line_no, format!("unterminated body of `{name}`"));
            }
            if pending.is_some() {
                return err(
                    line_no,
                    format!("label at the end of `{name}` has no instruction"),
                );
            }
            for s in &stmts {
                if let Instr::Jmp(t) | Instr::Branch { target: t, .. } = &s.instr {
                    if !stmts.iter().any(|x| &x.label == t) {
                        return err(s.line, format!("unknown label `{t}`"));
                    }
                }
            }
            prog.procs.push(Procedure {
                name,
                ins,
                outs,
                body: stmts,
            });
        } else {
            return err(line_no, "expected `proc` or `extern`");
        }
    }
    let sigs: Vec<(String, Vec<Loc>, Vec<Loc>)> = prog
        .procs
        .iter()
        .map(|p| (p.name.clone(), p.ins.clone(), p.outs.clone()))
        .chain(
            prog.externs
                .iter()
                .map(|e| (e.name.clone(), e.ins.clone(), e.outs.clone())),
        )
        .collect();
    for p in &mut prog.procs {
        for s in &mut p.body {
            if let Instr::Call { callee, ins, outs } = &mut s.instr {
                if let Some((_, i, o)) = sigs.iter().find(|(n, _, _)| n == callee) {
                    ins.get_or_insert_with(|| i.clone());
                    outs.get_or_insert_with(|| o.clone());
                }
            }
        }
    }
    Ok(prog)
}
