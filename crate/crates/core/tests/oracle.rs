use polarq::baselines::{design_channel, oracle_sc_agreement, small_n_oracle, OracleTables};
use polarq::io::load_spec;
use std::path::Path;

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12)
}

fn check_golden(file: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(file);
    let golden: OracleTables = load_spec(&path).unwrap();
    let ch = design_channel(3.0, 1.0, 6, 1e-7).unwrap();
    let binned = ch.binned(ch.equiprobable_binning(golden.bins).unwrap());
    let t = small_n_oracle(&ch, &binned, golden.level, &golden.cosets, None, 0.5).unwrap();
    assert_eq!(t.sets, golden.sets);
    for (a, b) in [(&t.z_prior, &golden.z_prior), (&t.z_post, &golden.z_post), (&t.h_prior, &golden.h_prior), (&t.h_post, &golden.h_post)] {
        assert!(close(a, b), "{a:?} vs {b:?}");
    }
    assert!(close(&[t.variation, t.bound, t.bound_entropy], &[golden.variation, golden.bound, golden.bound_entropy]));
    assert!(t.variation <= t.bound);
}

#[test]
fn level_zero_tables_match_golden() {
    check_golden("oracle_n4_b8_level0.json");
}

#[test]
fn level_one_tables_match_golden() {
    check_golden("oracle_n4_b8_level1.json");
}

#[test]
fn sc_probabilities_agree_with_enumeration() {
    let ch = design_channel(3.0, 1.0, 6, 1e-7).unwrap();
    let binned = ch.binned(ch.equiprobable_binning(4).unwrap());
    for (level, cosets) in [(0, vec![0; 8]), (1, vec![0, 1, 1, 0, 1, 0, 0, 1]), (2, vec![0, 1, 2, 3, 3, 2, 1, 0])] {
        let gap = oracle_sc_agreement(&ch, &binned, level, &cosets).unwrap();
        assert!(gap <= 1e-10, "level {level}: gap {gap}");
    }
}

#[test]
fn oracle_rejects_large_blocks() {
    let ch = design_channel(3.0, 1.0, 6, 1e-7).unwrap();
    let binned = ch.binned(ch.equiprobable_binning(4).unwrap());
    assert!(small_n_oracle(&ch, &binned, 0, &[0; 16], None, 0.5).is_err());
}
