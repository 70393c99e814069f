use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tnet_core::codegen::{emit, emit_module, generate};
use tnet_core::fuzz::{random_case, FuzzConfig};
use tnet_core::optimizer::{run_pipeline, OptLevel};
use tnet_core::{lower_script, scripts};

const LISTING: &str = include_str!("golden/listing.py");
const HYPEREDGE_EINSUM: &str = include_str!("golden/hyperedge_einsum.txt");

#[test]
fn listing_is_byte_identical() {
    let dag = lower_script(&scripts::listing_script()).unwrap().dag();
    assert_eq!(generate(&dag, "numpy").unwrap(), LISTING);
}

#[test]
fn hyperedge_contraction_matches_listing() {
    let dag = lower_script(&scripts::hyperedge_script()).unwrap().dag();
    let program = emit(&dag, "numpy").unwrap();
    assert_eq!(program.parameters, ["T0", "T1", "T2", "T3"]);
    let expected: Vec<&str> = HYPEREDGE_EINSUM.lines().collect();
    assert_eq!(program.statements, expected);
    assert_eq!(program.returns, ["T4"]);
}

#[test]
fn listing_at_level_one_folds_the_transpose() {
    let dag = lower_script(&scripts::listing_script()).unwrap().dag();
    let (opt, _) = run_pipeline(&dag, OptLevel::O1);
    let text = generate(&opt, "numpy").unwrap();
    assert!(text.contains("    T3 = np.einsum(T0, (0, 1, 2), T1, (3, 2), T2, (0, 4, 5), (5, 1, 4, 3))\n"));
    assert!(!text.contains("np.transpose"));
    assert!(text.contains("T5, T6 = np.linalg.qr(T3.reshape((np.prod(T3.shape[:2]),"));
}

#[test]
fn inner_product_module() {
    let dag = lower_script(&scripts::inner_product_script()).unwrap().dag();
    assert_eq!(
        generate(&dag, "numpy").unwrap(),
        "import numpy as np\n\ndef f(T0, T1):\n    T2 = np.einsum(T0, (0,), T1, (0,), ())\n    return T2\n"
    );
}

fn names(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let starts_word = i == 0 || !(bytes[i - 1].is_ascii_alphanumeric() || bytes[i - 1] == b'_');
        if starts_word && (bytes[i] == b'T' || bytes[i] == b'k') {
            let mut j = i + 1;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            let ends_word = j == bytes.len() || !(bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_');
            if j > i + 1 && ends_word {
                out.push(text[i..j].to_string());
            }
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

/// Names referenced before assignment, scanning statement by statement.
fn undefined_references(module: &str) -> Vec<String> {
    let mut lines = module.lines();
    let header = lines.find(|l| l.starts_with("def ")).expect("function header");
    let mut defined: BTreeSet<String> = names(header).into_iter().collect();
    let mut statements: Vec<String> = Vec::new();
    for line in lines {
        let body = line.strip_prefix("    ").expect("indented body");
        if body.starts_with(' ') {
            statements
                .last_mut()
                .expect("continuation follows a statement")
                .push_str(body);
        } else {
            statements.push(body.to_string());
        }
    }
    let mut missing = Vec::new();
    for s in statements {
        let (lhs, rhs) = match s.split_once(" = ") {
            Some((l, r)) => (l.to_string(), r.to_string()),
            None => (String::new(), s.clone()),
        };
        missing.extend(names(&rhs).into_iter().filter(|n| !defined.contains(n)));
        defined.extend(names(&lhs));
    }
    missing
}

#[test]
fn scan_catches_use_before_assignment() {
    assert_eq!(
        undefined_references(
            "import numpy as np\n\ndef f(T0):\n    T2 = np.transpose(T1, (0,))\n    T1 = T0\n    return T2\n"
        ),
        ["T1"]
    );
}

#[test]
fn fuzzed_programs_assign_before_use_and_are_deterministic() {
    let cfg = FuzzConfig::default();
    for seed in 0..60 {
        let case = random_case(&mut ChaCha8Rng::seed_from_u64(seed), &cfg);
        let dag = lower_script(&case.actions).unwrap().dag();
        for level in [OptLevel::O0, OptLevel::O1, OptLevel::O2] {
            let (opt, _) = run_pipeline(&dag, level);
            let program = emit(&opt, "numpy").unwrap();
            let text = emit_module(&program);
            assert_eq!(undefined_references(&text), Vec::<String>::new(), "seed {seed}\n{text}");
            let again = lower_script(&case.actions).unwrap().dag();
            assert_eq!(generate(&run_pipeline(&again, level).0, "numpy").unwrap(), text);
            assert!(text.ends_with('\n'));
        }
    }
}
