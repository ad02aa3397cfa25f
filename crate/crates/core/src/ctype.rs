//! Rendering solved sketches as C declarations, plus the display policies
//! applied beforehand: const parameters, scalar unions, specialization to
//! call sites, and rerolling of unrolled recursive types.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write;

use serde::Serialize;

use crate::constraint::{ConstraintSet, DerivedTypeVar};
use crate::label::FieldLabel;
use crate::lattice::{Elem, Lattice};
use crate::shape::Shapes;
use crate::sketch::Sketch;
use crate::solve::Bindings;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CType {
    Primitive {
        name: String,
        tags: Vec<String>,
    },
    Pointer {
        target: Box<CType>,
        is_const: bool,
    },
    /// A named struct, declared once in [`CHeader::structs`].
    Struct {
        name: String,
    },
    Union {
        members: Vec<CType>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Field {
    pub offset: i64,
    pub bits: u32,
    pub ty: CType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StructDecl {
    pub name: String,
    pub fields: Vec<Field>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Param {
    pub location: String,
    pub ty: CType,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FunctionDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub returns: Vec<Param>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CHeader {
    pub structs: Vec<StructDecl>,
    pub functions: Vec<FunctionDecl>,
}

#[derive(Clone, Debug)]
pub struct EmitOptions {
    pub name_prefix: String,
    pub depth_cap: usize,
    pub reroll: bool,
}

impl Default for EmitOptions {
    fn default() -> Self {
        EmitOptions {
            name_prefix: "Struct_".into(),
            depth_cap: 8,
            reroll: true,
        }
    }
}

/// Binding key of a formal parameter or return location.
pub fn formal_key(proc: &str, loc: &str, is_in: bool) -> String {
    format!("{proc}.{}_{loc}", if is_in { "in" } else { "out" })
}

/// C spelling of a lattice element.
pub fn primitive_name(l: &Lattice, e: Elem) -> String {
    let n = l.name(e);
    match n {
        "int" => "int".into(),
        "uint" => "unsigned int".into(),
        "code-ptr" => "code_ptr".into(),
        _ if n.starts_with("uint") && n[4..].parse::<u32>().is_ok() => format!("{n}_t"),
        _ if n.starts_with("int") && n[3..].parse::<u32>().is_ok() => format!("{n}_t"),
        _ => n.replace('-', "_"),
    }
}

fn width_fallback(bits: Option<u32>) -> String {
    match bits {
        Some(b) => format!("int{b}_t"),
        None => "int".into(),
    }
}

/// Comparable elements are merged by meet; what remains is an antichain,
/// rendered as a union ordered by name.
pub fn scalar_union_policy(labels: &BTreeSet<Elem>, l: &Lattice) -> CType {
    let minimal: BTreeSet<Elem> = labels
        .iter()
        .copied()
        .filter(|&a| !labels.iter().any(|&b| b != a && l.leq(b, a)))
        .collect();
    let mut members: Vec<CType> = minimal
        .iter()
        .map(|&e| CType::Primitive {
            name: primitive_name(l, e),
            tags: vec![],
        })
        .collect();
    members.sort_by_key(|m| match m {
        CType::Primitive { name, .. } => name.clone(),
        _ => String::new(),
    });
    match members.len() {
        0 => CType::Primitive {
            name: "void".into(),
            tags: vec![],
        },
        1 => members.pop().expect("one member"),
        _ => CType::Union { members },
    }
}

/// The parameter at `loc` is only read through: its load capability is
/// derivable and its store capability is not.
pub fn infer_const(c: &ConstraintSet, proc: &str, loc: &str) -> bool {
    let shapes = Shapes::infer(&c.close_prefixes());
    let p = DerivedTypeVar::var(proc).push(FieldLabel::In(loc.to_string()));
    shapes.exists(&p.push(FieldLabel::Load)) && !shapes.exists(&p.push(FieldLabel::Store))
}

pub fn infer_const_sketch(s: &Sketch) -> bool {
    s.step(0, &FieldLabel::Load).is_some() && s.step(0, &FieldLabel::Store).is_none()
}

/// Per formal binding key, the sketches of the actuals seen at call sites.
#[derive(Clone, Debug, Default)]
pub struct Actuals {
    pub ins: BTreeMap<String, Vec<Sketch>>,
    pub outs: BTreeMap<String, Vec<Sketch>>,
}

/// Formal-ins are met with the join of their actuals, formal-outs joined
/// with the meet of theirs. Formals without actuals are left alone.
pub fn refine_parameters(b: &Bindings, actuals: &Actuals, l: &Lattice) -> Bindings {
    let mut out = b.clone();
    for (key, acts) in &actuals.ins {
        let Some((first, rest)) = acts.split_first() else {
            continue;
        };
        let lambda = rest.iter().fold(first.clone(), |acc, a| acc.join(a, l));
        if let Some(f) = out.get_mut(key) {
            *f = f.meet(&lambda, l);
        }
    }
    for (key, acts) in &actuals.outs {
        let Some((first, rest)) = acts.split_first() else {
            continue;
        };
        let lambda = rest.iter().fold(first.clone(), |acc, a| acc.meet(a, l));
        if let Some(f) = out.get_mut(key) {
            *f = f.join(&lambda, l);
        }
    }
    out
}

/// Collapses an unrolled recursive type onto its recursive core: a state
/// `x` whose subtree is at least as capable as a recursive state `x.ℓ`
/// (`ℓ` of one or two labels) is replaced by it, provided `x.ℓ`'s parent
/// has a field besides `ℓ`.
pub fn reroll(s: &Sketch, l: &Lattice) -> Sketch {
    let mut cur = s.clone();
    for _ in 0..cur.state_count() + 1 {
        match reroll_step(&cur, l) {
            Some(next) if next != cur => cur = next,
            _ => break,
        }
    }
    cur
}

fn on_cycle(s: &Sketch, t: usize) -> bool {
    s.edges(t).any(|(_, u)| s.reachable_from(u).contains(&t))
}

fn reroll_step(s: &Sketch, l: &Lattice) -> Option<Sketch> {
    for x in 0..s.state_count() {
        if on_cycle(s, x) {
            continue;
        }
        let mut words: Vec<(usize, usize)> = Vec::new();
        for (_, m) in s.edges(x) {
            words.push((x, m));
            words.extend(s.edges(m).map(|(_, t)| (m, t)));
        }
        for (parent, t) in words {
            if t == x || !on_cycle(s, t) || s.edges(parent).count() < 2 {
                continue;
            }
            let (sx, st) = (s.subsketch(x), s.subsketch(t));
            if sx.is_subsketch_of(&st, l) {
                if x == 0 {
                    return Some(st);
                }
                return Some(s.replace_state(x, t));
            }
        }
    }
    None
}

pub struct Emitter<'l> {
    lattice: &'l Lattice,
    opts: EmitOptions,
    names: HashMap<Sketch, String>,
    header: CHeader,
}

impl<'l> Emitter<'l> {
    pub fn new(lattice: &'l Lattice, opts: EmitOptions) -> Self {
        Emitter {
            lattice,
            opts,
            names: HashMap::new(),
            header: CHeader::default(),
        }
    }

    pub fn finish(self) -> CHeader {
        self.header
    }

    /// C type of the value described by `s`.
    pub fn ctype_of(&mut self, s: &Sketch) -> CType {
        let s = if self.opts.reroll {
            reroll(s, self.lattice)
        } else {
            s.clone()
        };
        self.value(&s, 0, None, 0, &mut Vec::new())
    }

    pub fn function(
        &mut self,
        name: &str,
        params: &[(String, Sketch, bool)],
        returns: &[(String, Sketch)],
    ) {
        let mut ps = Vec::new();
        for (loc, s, is_const) in params {
            let mut ty = self.ctype_of(s);
            if *is_const {
                if let CType::Pointer { is_const, .. } = &mut ty {
                    *is_const = true;
                }
            }
            ps.push(Param {
                location: loc.clone(),
                ty,
            });
        }
        let rs = returns
            .iter()
            .map(|(loc, s)| Param {
                location: loc.clone(),
                ty: self.ctype_of(s),
            })
            .collect();
        self.header.functions.push(FunctionDecl {
            name: name.to_string(),
            params: ps,
            returns: rs,
        });
    }

    fn scalar(&self, s: &Sketch, state: usize, bits: Option<u32>) -> CType {
        let l = self.lattice;
        let e = s.label(state);
        let notes = s.notes(state);
        let tags: Vec<String> = notes
            .iter()
            .copied()
            .chain(std::iter::once(e))
            .filter(|&t| l.is_tag(t))
            .map(|t| l.name(t).to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let name = if e != l.top() && e != l.bottom() {
            primitive_name(l, l.scalar_of(e))
        } else if e == l.bottom() && !notes.is_empty() {
            let scalars: BTreeSet<Elem> = notes.iter().map(|&n| l.scalar_of(n)).collect();
            return match scalar_union_policy(&scalars, l) {
                CType::Primitive { name, .. } => CType::Primitive { name, tags },
                u => u,
            };
        } else {
            width_fallback(bits)
        };
        CType::Primitive { name, tags }
    }

    fn informative(&self, s: &Sketch, state: usize) -> bool {
        let l = self.lattice;
        let e = s.label(state);
        e != l.top()
            && e != l.bottom()
            && l.scalar_of(e) != l.top()
            && l.name(l.scalar_of(e)) != "code-ptr"
    }

    fn value(
        &mut self,
        s: &Sketch,
        state: usize,
        bits: Option<u32>,
        depth: usize,
        stack: &mut Vec<usize>,
    ) -> CType {
        let target = s
            .step(state, &FieldLabel::Load)
            .or_else(|| s.step(state, &FieldLabel::Store));
        let has_fields = s.edges(state).any(|(lab, _)| lab.is_field());
        if has_fields {
            return self.struct_ref(s, state, depth, stack);
        }
        let Some(t) = target else {
            return self.scalar(s, state, bits);
        };
        stack.push(state);
        let pointee = self.pointee(s, t, depth + 1, stack);
        stack.pop();
        let ptr = CType::Pointer {
            target: Box::new(pointee),
            is_const: false,
        };
        if self.informative(s, state) {
            CType::Union {
                members: vec![self.scalar(s, state, bits), ptr],
            }
        } else {
            ptr
        }
    }

    fn pointee(&mut self, s: &Sketch, t: usize, depth: usize, stack: &mut Vec<usize>) -> CType {
        let fields: Vec<(&FieldLabel, usize)> =
            s.edges(t).filter(|(lab, _)| lab.is_field()).collect();
        let has_ptr = s.edges(t).any(|(lab, _)| lab.is_pointer());
        let inline = fields.len() == 1
            && matches!(fields[0].0, FieldLabel::Field { offset: 0, .. })
            && !has_ptr
            && !stack.contains(&fields[0].1)
            && depth < self.opts.depth_cap;
        if inline {
            let (lab, f) = (fields[0].0.clone(), fields[0].1);
            let FieldLabel::Field { bits, .. } = lab else {
                unreachable!()
            };
            stack.push(t);
            let ty = self.value(s, f, Some(bits), depth + 1, stack);
            stack.pop();
            return ty;
        }
        if fields.is_empty() && !has_ptr && s.label(t) == self.lattice.top() {
            return CType::Primitive {
                name: "void".into(),
                tags: vec![],
            };
        }
        if fields.is_empty() && (stack.contains(&t) || depth >= self.opts.depth_cap) {
            return CType::Primitive {
                name: "void".into(),
                tags: vec![],
            };
        }
        if fields.is_empty() {
            stack.push(t);
            let ty = self.value(s, t, None, depth, stack);
            stack.pop();
            return ty;
        }
        self.struct_ref(s, t, depth, stack)
    }

    fn struct_ref(&mut self, s: &Sketch, t: usize, depth: usize, stack: &mut Vec<usize>) -> CType {
        let key = s.subsketch(t);
        if let Some(name) = self.names.get(&key) {
            return CType::Struct { name: name.clone() };
        }
        let name = format!("{}{}", self.opts.name_prefix, self.names.len());
        self.names.insert(key, name.clone());
        let slot = self.header.structs.len();
        self.header.structs.push(StructDecl {
            name: name.clone(),
            fields: vec![],
        });
        let mut raw: Vec<(i64, u32, usize)> = s
            .edges(t)
            .filter_map(|(lab, f)| match lab {
                FieldLabel::Field { bits, offset } => Some((*offset, *bits, f)),
                _ => None,
            })
            .collect();
        raw.sort();
        stack.push(t);
        let mut fields: Vec<Field> = Vec::new();
        let mut i = 0;
        while i < raw.len() {
            // Overlapping fields share one union slot.
            let (offset, mut bits, f) = raw[i];
            let mut group = vec![(bits, f)];
            let mut end = offset + i64::from(bits.div_ceil(8));
            let mut j = i + 1;
            while j < raw.len() && raw[j].0 < end {
                group.push((raw[j].1, raw[j].2));
                end = end.max(raw[j].0 + i64::from(raw[j].1.div_ceil(8)));
                bits = bits.max(raw[j].1);
                j += 1;
            }
            let ty = if group.len() == 1 {
                self.value(s, f, Some(bits), depth + 1, stack)
            } else {
                let members = group
                    .iter()
                    .map(|&(b, g)| self.value(s, g, Some(b), depth + 1, stack))
                    .collect();
                CType::Union { members }
            };
            fields.push(Field { offset, bits, ty });
            i = j;
        }
        stack.pop();
        self.header.structs[slot].fields = fields;
        CType::Struct { name }
    }
}

/// Type expression and trailing tag comment.
fn spell(ty: &CType) -> (String, Vec<String>) {
    match ty {
        CType::Primitive { name, tags } => (name.clone(), tags.clone()),
        CType::Struct { name } => (name.clone(), vec![]),
        CType::Pointer { target, is_const } => {
            let (inner, tags) = spell(target);
            let c = if *is_const { "const " } else { "" };
            (format!("{c}{inner} *"), tags)
        }
        CType::Union { members } => {
            let mut s = String::from("union { ");
            for (i, m) in members.iter().enumerate() {
                let _ = write!(s, "{} m{i}; ", spell(m).0);
            }
            s.push('}');
            (s, vec![])
        }
    }
}

fn tag_comment(tags: &[String]) -> String {
    tags.iter().map(|t| format!(" #{t}")).collect::<String>()
}

impl CHeader {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let uses_code_ptr = format!("{self:?}").contains("\"code_ptr\"");
        if uses_code_ptr {
            out.push_str("typedef void (*code_ptr)(void);\n\n");
        }
        for st in &self.structs {
            out.push_str("typedef struct {\n");
            for f in &st.fields {
                let (ty, tags) = spell(&f.ty);
                if tags.is_empty() {
                    let _ = writeln!(out, "    {ty} field_{};", f.offset);
                } else {
                    let _ = writeln!(
                        out,
                        "    {ty} //{}\n      field_{};",
                        tag_comment(&tags),
                        f.offset
                    );
                }
            }
            let _ = writeln!(out, "}} {};\n", st.name);
        }
        for f in &self.functions {
            let (ret, tags) = match f.returns.first() {
                Some(r) => spell(&r.ty),
                None => ("void".into(), vec![]),
            };
            if tags.is_empty() {
                let _ = write!(out, "{ret} ");
            } else {
                let _ = writeln!(out, "{ret} //{}", tag_comment(&tags));
            }
            let params: Vec<String> = f.params.iter().map(|p| spell(&p.ty).0).collect();
            let params = if params.is_empty() {
                "void".to_string()
            } else {
                params.join(", ")
            };
            let _ = write!(out, "{}({params});", f.name);
            let extra: Vec<String> = f
                .returns
                .iter()
                .skip(1)
                .map(|r| format!("{} {}", spell(&r.ty).0, r.location))
                .collect();
            if !extra.is_empty() {
                let _ = write!(out, " // also returns {}", extra.join(", "));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("header serializes")
    }
}

/// Declaration of one procedure from bindings keyed by [`formal_key`].
pub fn emit_ctype(
    b: &Bindings,
    proc: &str,
    ins: &[String],
    outs: &[String],
    consts: &[bool],
    l: &Lattice,
    opts: EmitOptions,
) -> CHeader {
    let mut e = Emitter::new(l, opts);
    let top = Sketch::top(l);
    let params: Vec<(String, Sketch, bool)> = ins
        .iter()
        .enumerate()
        .map(|(i, loc)| {
            let s = b
                .get(&formal_key(proc, loc, true))
                .cloned()
                .unwrap_or_else(|| top.clone());
            (loc.clone(), s, consts.get(i).copied().unwrap_or(false))
        })
        .collect();
    let rets: Vec<(String, Sketch)> = outs
        .iter()
        .map(|loc| {
            (
                loc.clone(),
                b.get(&formal_key(proc, loc, false))
                    .cloned()
                    .unwrap_or_else(|| top.clone()),
            )
        })
        .collect();
    e.function(proc, &params, &rets);
    e.finish()
}
