mod common;

use proptest::prelude::*;

use common::{flat_row, random_expr, random_row, reference_eval, rng, test_schema};
use rewardopt::dsl::{parse_expr, validate, EvalNotes};
use rewardopt::RewardProgram;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn printed_form_parses_back_to_the_same_tree(seed in any::<u64>(), depth in 0u32..7) {
        let schema = test_schema();
        let e = random_expr(&mut rng(seed), &schema, depth);
        let text = e.to_string();
        let back = parse_expr(&text).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        prop_assert_eq!(&back, &e, "{}", text);
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn compiled_program_matches_reference(seed in any::<u64>(), depth in 0u32..7) {
        let schema = test_schema();
        let mut r = rng(seed);
        let e = random_expr(&mut r, &schema, depth);
        prop_assert!(validate(&e, &schema).is_valid());
        let program = RewardProgram::from_expr(e.clone(), &schema).unwrap();
        for _ in 0..4 {
            let row = random_row(&mut r, &schema);
            let got = program.eval_row(&flat_row(&schema, &row), &mut EvalNotes::default());
            let want = reference_eval(&e, &row);
            prop_assert!(got.is_finite());
            prop_assert!((got - want).abs() <= 1e-12, "{} got {} want {}", e, got, want);
        }
    }

    #[test]
    fn arbitrary_text_never_panics(text in "[sa.nxyuv0-9+*/^()<>=, -]{0,40}") {
        let _ = parse_expr(&text);
    }
}

#[test]
fn documented_precedence() {
    let cases = [
        ("-s.x^2", "-s.x^2"),
        ("(-s.x)^2", "(-s.x)^2"),
        ("2^3^2", "2^3^2"),
        ("1 - 2 - 3", "1 - 2 - 3"),
        ("1 - (2 - 3)", "1 - (2 - 3)"),
        ("s.x + 1 > 2 * s.y", "s.x + 1 > 2 * s.y"),
    ];
    for (src, canonical) in cases {
        assert_eq!(parse_expr(src).unwrap().to_string(), canonical, "{src}");
    }
    let schema = test_schema();
    let p = RewardProgram::compile("2^3^2 - -s.x^2", &schema).unwrap();
    let v = p.eval_transition(&[3.0, 0.0, 0.0], &[0.0], &[0.0, 0.0, 0.0]);
    assert_eq!(v, 512.0 + 9.0);
}

#[test]
fn unknown_identifiers_are_reported() {
    let schema = test_schema();
    let e = parse_expr("s.x + a.missing + sn.z + abs(1, 2)").unwrap();
    let report = validate(&e, &schema);
    assert!(!report.is_valid());
    let text = report.to_string();
    assert!(text.contains("a.missing") && text.contains("sn.z"), "{text}");
    assert!(RewardProgram::compile("s.x + a.missing", &schema).is_err());
}
