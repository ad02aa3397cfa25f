//! Browser bindings: every entry point takes constraint text plus an
//! optional lattice document (empty string for the built-in lattice).

use mtype::lattice::Lattice;
use mtype::pds::transducer_to_dot;
use mtype::pipeline::{guess_subjects, render_scheme_list, run_constraints, PipelineOptions};
use mtype::simplify::{simplify, transducer, SimplificationRequest};
use mtype::solve::solve_labels;
use mtype::syntax::parse_constraints_checked;
use mtype::ConstraintSet;
use wasm_bindgen::prelude::*;

fn lattice(doc: &str) -> Result<Lattice, String> {
    if doc.trim().is_empty() {
        Ok(Lattice::default_lattice())
    } else {
        Lattice::from_json(doc).map_err(|e| format!("lattice: {e}"))
    }
}

fn constraints(text: &str, l: &Lattice) -> Result<ConstraintSet, String> {
    parse_constraints_checked(text, |n| l.get(n).is_some()).map_err(|e| e.to_string())
}

fn subjects(c: &ConstraintSet, subject: &str) -> Vec<String> {
    let given: Vec<String> = subject
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    if given.is_empty() {
        guess_subjects(c)
    } else {
        given
    }
}

pub fn simplify_text(text: &str, lattice_doc: &str, subject: &str) -> Result<String, String> {
    let l = lattice(lattice_doc)?;
    let c = constraints(text, &l)?;
    let schemes: Vec<_> = subjects(&c, subject)
        .into_iter()
        .map(|s| simplify(&SimplificationRequest::new(c.clone(), s)))
        .collect();
    Ok(render_scheme_list(schemes.iter()))
}

pub fn transducer_dot_text(text: &str, lattice_doc: &str, subject: &str) -> Result<String, String> {
    let l = lattice(lattice_doc)?;
    let c = constraints(text, &l)?;
    Ok(subjects(&c, subject)
        .into_iter()
        .map(|s| transducer_to_dot(&transducer(&SimplificationRequest::new(c.clone(), s))))
        .collect())
}

pub fn solve_text(text: &str, lattice_doc: &str) -> Result<String, String> {
    let l = lattice(lattice_doc)?;
    let c = constraints(text, &l)?;
    let b = solve_labels(&c, &l, None).map_err(|e| e.to_string())?;
    Ok(b.iter()
        .filter(|(k, _)| !k.starts_with('#'))
        .map(|(k, s)| s.to_dot(&l, k))
        .collect())
}

pub fn emit_c_text(text: &str, lattice_doc: &str, subject: &str) -> Result<String, String> {
    let l = lattice(lattice_doc)?;
    let c = constraints(text, &l)?;
    let out = run_constraints(&c, &subjects(&c, subject), &l, &PipelineOptions::default())
        .map_err(|e| e.to_string())?;
    Ok(out.header.render())
}

#[wasm_bindgen(js_name = simplify)]
pub fn js_simplify(text: &str, lattice_doc: &str, subject: &str) -> Result<String, JsError> {
    simplify_text(text, lattice_doc, subject).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = transducerDot)]
pub fn js_transducer_dot(text: &str, lattice_doc: &str, subject: &str) -> Result<String, JsError> {
    transducer_dot_text(text, lattice_doc, subject).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = solve)]
pub fn js_solve(text: &str, lattice_doc: &str) -> Result<String, JsError> {
    solve_text(text, lattice_doc).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = emitC)]
pub fn js_emit_c(text: &str, lattice_doc: &str, subject: &str) -> Result<String, JsError> {
    emit_c_text(text, lattice_doc, subject).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LIST: &str = "F.in_0 <= x\nx.load.s32@0 <= x\nx.load.s32@4 <= #int\n";

    #[test]
    fn all_views_render() {
        let s = simplify_text(LIST, "", "").unwrap();
        assert!(s.contains("load.s32@0"), "{s}");
        assert!(transducer_dot_text(LIST, "", "F")
            .unwrap()
            .starts_with("digraph"));
        assert!(solve_text(LIST, "").unwrap().contains("digraph"));
        let c = emit_c_text(LIST, "", "").unwrap();
        assert!(c.contains("F("), "{c}");
    }

    #[test]
    fn errors_are_messages() {
        assert!(simplify_text("x <= #Nope\n", "", "")
            .unwrap_err()
            .contains("Nope"));
        assert!(solve_text(LIST, "{").unwrap_err().starts_with("lattice"));
    }
}
