use std::fmt::Write;

use super::graph::{ConstraintGraph, EdgeKind};
use super::transducer::{CompactTransducer, StateKind};

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn graph_to_dot(g: &ConstraintGraph) -> String {
    let mut out = String::from("digraph constraints {\n");
    for id in 0..g.node_count() as u32 {
        let _ = writeln!(
            out,
            "  n{id} [label=\"{}\"];",
            escape(&g.node_data(id).to_string())
        );
    }
    for (a, kind, b) in g.edges() {
        let label = match kind {
            EdgeKind::One => "1".to_string(),
            EdgeKind::Pop(s) => format!("pop {}", g.symbol(s)),
            EdgeKind::Push(s) => format!("push {}", g.symbol(s)),
        };
        let _ = writeln!(out, "  n{a} -> n{b} [label=\"{}\"];", escape(&label));
    }
    out.push_str("}\n");
    out
}

pub fn transducer_to_dot(t: &CompactTransducer) -> String {
    let mut out = String::from("digraph transducer {\n  rankdir=LR;\n");
    for (i, kind) in t.kinds.iter().enumerate() {
        let (name, shape) = match kind {
            StateKind::Start => ("START".to_string(), "box"),
            StateKind::End => ("END".to_string(), "box"),
            StateKind::Internal => (format!("q{i}"), "circle"),
        };
        let _ = writeln!(out, "  s{i} [label=\"{name}\", shape={shape}];");
    }
    for e in &t.edges {
        let _ = writeln!(
            out,
            "  s{} -> s{} [label=\"{}\"];",
            e.src,
            e.dst,
            escape(&e.label())
        );
    }
    out.push_str("}\n");
    out
}
