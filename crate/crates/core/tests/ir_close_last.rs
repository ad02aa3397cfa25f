use std::collections::{BTreeMap, BTreeSet};

use mtype::ir::{generate_constraints, parse_program};
use mtype::parse_constraints;
use mtype::simplify::{display_scheme, simplify, SimplificationRequest};

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!(
        "{}/../../fixtures/{name}",
        env!("CARGO_MANIFEST_DIR")
    ))
    .unwrap()
}

#[test]
fn ir_and_constraint_modes_agree() {
    let prog = parse_program(&fixture("close_last.ir")).unwrap();
    let p = prog.proc("close_last").unwrap();
    let g = generate_constraints(
        p,
        &prog,
        &BTreeMap::new(),
        &BTreeSet::from(["close_last".to_string()]),
    );
    assert!(g.warnings.is_empty(), "{:?}", g.warnings);
    println!("{}", g.constraints);
    assert_eq!(g.constraints.len(), 17);
    let from_ir = simplify(&SimplificationRequest::new(g.constraints, "close_last"));
    let file = parse_constraints(&fixture("close_last.constraints")).unwrap();
    let from_file = simplify(&SimplificationRequest::new(file, "close_last"));
    assert_eq!(display_scheme(&from_ir), display_scheme(&from_file));
    assert_eq!(from_ir.body, from_file.body);
}
