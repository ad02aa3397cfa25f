mod common;

use mtype::simplify::{simplify, SimplificationRequest};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn schemes_preserve_interesting_facts() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut compared = 0;
    while compared < 40 {
        let c = common::random_set(&mut rng);
        let Ok(bad) = common::scheme_mismatches(&c, &["a", "b"], 2, 5, 200_000) else {
            continue;
        };
        assert!(bad.is_empty(), "{c}\n{}", bad.join("\n"));
        compared += 1;
    }
}

#[test]
fn simplifying_twice_is_equivalent() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut compared = 0;
    while compared < 25 {
        let c = common::random_set(&mut rng);
        let mut req = SimplificationRequest::new(c, "a");
        req.interesting.insert("b".into());
        let once = simplify(&req).body;
        let Ok(bad) = common::scheme_mismatches(&once, &["a", "b"], 2, 5, 200_000) else {
            continue;
        };
        assert!(bad.is_empty(), "{once}\n{}", bad.join("\n"));
        compared += 1;
    }
}
