//! Text and JSON formats for constraint sets.
//!
//! ```text
//! // comment
//! exists t
//! var x.load
//! F.in_stack0 <= t
//! t.load.s32@4 <= #FileDescriptor
//! add a, b, c
//! ```

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraint::{Constraint, ConstraintSet, DerivedTypeVar, TypeVar};
use crate::label::FieldLabel;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown label kind `{0}`")]
    UnknownLabel(String),
    #[error("constant `{0}` used with a nonempty word")]
    ConstantWithWord(String),
    #[error("unknown lattice constant `{0}`")]
    UnknownConstant(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

fn is_name_char(c: char) -> bool {
    !(c.is_whitespace() || matches!(c, '.' | ',' | '<' | '>' | '=' | ';' | '#'))
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(is_name_char)
}

/// Parses one derived type variable; the error carries a char offset into `s`.
fn parse_dtv(s: &str) -> Result<DerivedTypeVar, (usize, ParseErrorKind)> {
    let mut parts = s.split('.');
    let head = parts.next().unwrap_or("");
    let base = match head.strip_prefix('#') {
        Some(name) if valid_name(name) => TypeVar::Const(name.to_string()),
        None if valid_name(head) => TypeVar::Var(head.to_string()),
        _ => {
            return Err((
                0,
                ParseErrorKind::Syntax(format!("bad variable name `{head}`")),
            ));
        }
    };
    let mut path = Vec::new();
    let mut offset = head.chars().count() + 1;
    for part in parts {
        let label: FieldLabel = part
            .parse()
            .map_err(|_| (offset, ParseErrorKind::UnknownLabel(part.to_string())))?;
        path.push(label);
        offset += part.chars().count() + 1;
    }
    if base.is_const() && !path.is_empty() {
        return Err((0, ParseErrorKind::ConstantWithWord(base.to_string())));
    }
    Ok(DerivedTypeVar { base, path })
}

impl FromStr for DerivedTypeVar {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        parse_dtv(t).map_err(|(off, kind)| ParseError {
            line: 1,
            col: off + 1,
            kind,
        })
    }
}

impl FromStr for Constraint {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = parse_constraints(s)?;
        if set.len() != 1 {
            return Err(ParseError {
                line: 1,
                col: 1,
                kind: ParseErrorKind::Syntax("expected exactly one constraint".into()),
            });
        }
        Ok(set.constraints.pop_first().unwrap())
    }
}

struct LineCtx<'a> {
    line_no: usize,
    line: &'a str,
}

impl<'a> LineCtx<'a> {
    fn col_of(&self, sub: &str) -> usize {
        let byte = sub.as_ptr() as usize - self.line.as_ptr() as usize;
        self.line[..byte].chars().count() + 1
    }

    fn err(&self, at: &str, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: self.line_no,
            col: self.col_of(at),
            kind,
        }
    }

    fn dtv(&self, tok: &'a str) -> Result<DerivedTypeVar, ParseError> {
        let tok = tok.trim();
        if tok.is_empty() {
            return Err(self.err(tok, ParseErrorKind::Syntax("missing operand".into())));
        }
        parse_dtv(tok).map_err(|(off, kind)| {
            let col = self.col_of(tok) + off;
            ParseError {
                line: self.line_no,
                col,
                kind,
            }
        })
    }
}

fn strip_keyword<'a>(s: &'a str, kw: &str) -> Option<&'a str> {
    let rest = s.strip_prefix(kw)?;
    if rest.starts_with(char::is_whitespace) {
        Some(rest)
    } else {
        None
    }
}

pub fn parse_constraints(text: &str) -> Result<ConstraintSet, ParseError> {
    let mut out = ConstraintSet::new();
    for (i, raw) in text.lines().enumerate() {
        let ctx = LineCtx {
            line_no: i + 1,
            line: raw,
        };
        let body = match raw.find("//") {
            Some(p) => &raw[..p],
            None => raw,
        };
        let body = body.trim();
        if body.is_empty() {
            continue;
        }
        if let Some(p) = body.find("<=") {
            let (l, r) = (&body[..p], &body[p + 2..]);
            out.insert(Constraint::Subtype(ctx.dtv(l)?, ctx.dtv(r)?));
        } else if let Some(rest) = strip_keyword(body, "var") {
            out.insert(Constraint::Exists(ctx.dtv(rest)?));
        } else if let Some(rest) = strip_keyword(body, "exists") {
            for name in rest.split(|c: char| c == ',' || c.is_whitespace()) {
                if name.is_empty() {
                    continue;
                }
                if !valid_name(name) {
                    return Err(ctx.err(
                        name,
                        ParseErrorKind::Syntax(format!("bad variable name `{name}`")),
                    ));
                }
                out.projected.insert(name.to_string());
            }
        } else if let Some((kw, rest)) = strip_keyword(body, "add")
            .map(|r| ("add", r))
            .or_else(|| strip_keyword(body, "sub").map(|r| ("sub", r)))
        {
            let ops: Vec<&str> = rest.split(',').collect();
            if ops.len() != 3 {
                return Err(ctx.err(
                    body,
                    ParseErrorKind::Syntax(format!("`{kw}` takes three operands")),
                ));
            }
            let (a, b, c) = (ctx.dtv(ops[0])?, ctx.dtv(ops[1])?, ctx.dtv(ops[2])?);
            out.insert(if kw == "add" {
                Constraint::Add(a, b, c)
            } else {
                Constraint::Sub(a, b, c)
            });
        } else {
            return Err(ctx.err(
                body,
                ParseErrorKind::Syntax("expected `var`, `exists`, `add`, `sub` or `<=`".into()),
            ));
        }
    }
    Ok(out)
}

/// Like [`parse_constraints`], rejecting constants for which `known` is false.
pub fn parse_constraints_checked(
    text: &str,
    known: impl Fn(&str) -> bool,
) -> Result<ConstraintSet, ParseError> {
    let c = parse_constraints(text)?;
    for (i, raw) in text.lines().enumerate() {
        let body = raw.find("//").map_or(raw, |p| &raw[..p]);
        for (col, _) in body.match_indices('#') {
            let name: String = body[col + 1..]
                .chars()
                .take_while(|&ch| is_name_char(ch))
                .collect();
            if !known(&name) {
                return Err(ParseError {
                    line: i + 1,
                    col: body[..col].chars().count() + 1,
                    kind: ParseErrorKind::UnknownConstant(name),
                });
            }
        }
    }
    Ok(c)
}

/// Serialized form used for `--json` output and input.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct JsonConstraintSet {
    #[serde(default)]
    pub projected: Vec<String>,
    pub constraints: Vec<JsonConstraint>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum JsonConstraint {
    Var(String),
    Subtype([String; 2]),
    Add([String; 3]),
    Sub([String; 3]),
}

impl From<&ConstraintSet> for JsonConstraintSet {
    fn from(c: &ConstraintSet) -> Self {
        let constraints = c
            .iter()
            .map(|c| match c {
                Constraint::Exists(a) => JsonConstraint::Var(a.to_string()),
                Constraint::Subtype(a, b) => {
                    JsonConstraint::Subtype([a.to_string(), b.to_string()])
                }
                Constraint::Add(a, b, d) => {
                    JsonConstraint::Add([a.to_string(), b.to_string(), d.to_string()])
                }
                Constraint::Sub(a, b, d) => {
                    JsonConstraint::Sub([a.to_string(), b.to_string(), d.to_string()])
                }
            })
            .collect();
        JsonConstraintSet {
            projected: c.projected.iter().cloned().collect(),
            constraints,
        }
    }
}

impl TryFrom<&JsonConstraintSet> for ConstraintSet {
    type Error = ParseError;

    fn try_from(j: &JsonConstraintSet) -> Result<Self, Self::Error> {
        let p = |s: &String| -> Result<DerivedTypeVar, ParseError> { s.parse() };
        let mut out = ConstraintSet::new();
        for (i, c) in j.constraints.iter().enumerate() {
            let r = match c {
                JsonConstraint::Var(a) => p(a).map(Constraint::Exists),
                JsonConstraint::Subtype([a, b]) => {
                    p(a).and_then(|a| Ok(Constraint::Subtype(a, p(b)?)))
                }
                JsonConstraint::Add([a, b, d]) => {
                    p(a).and_then(|a| Ok(Constraint::Add(a, p(b)?, p(d)?)))
                }
                JsonConstraint::Sub([a, b, d]) => {
                    p(a).and_then(|a| Ok(Constraint::Sub(a, p(b)?, p(d)?)))
                }
            };
            out.insert(r.map_err(|e| ParseError { line: i + 1, ..e })?);
        }
        out.projected = j.projected.iter().cloned().collect();
        Ok(out)
    }
}

pub fn to_json(c: &ConstraintSet) -> String {
    serde_json::to_string_pretty(&JsonConstraintSet::from(c)).expect("constraint json")
}

pub fn from_json(text: &str) -> Result<ConstraintSet, ParseError> {
    let j: JsonConstraintSet = serde_json::from_str(text).map_err(|e| ParseError {
        line: e.line(),
        col: e.column(),
        kind: ParseErrorKind::Syntax(e.to_string()),
    })?;
    ConstraintSet::try_from(&j)
}
