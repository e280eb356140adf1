mod common;

use common::*;

#[test]
fn update_rules_agree_from_a_common_start() {
    let spreads = variant_spreads(30, 11);
    let worst = spreads.iter().cloned().fold(0.0, f64::max);
    assert!(worst < 1e-4, "largest spread {worst:e}");
}

#[test]
fn multi_start_kmeans_finds_the_exhaustive_optimum() {
    let cmp = brute_force_comparison(50, 5);
    assert!(cmp.objective_matches * 10 >= cmp.instances * 9, "objective matched {}/50", cmp.objective_matches);
    assert!(cmp.set_matches * 100 >= cmp.instances * 95, "set matched {}/50", cmp.set_matches);
}

#[test]
fn brute_force_oracle_on_a_hand_instance() {
    let inst = instance(6, 3, 3, 2, 0.0, 1.5, 3);
    let (best, set) = brute_force_optimum(&inst, 1.75, 2, pca_transfer::transfer::Weighting::Effective);
    let expected: Vec<usize> = inst.informative.iter().enumerate().filter(|(_, &g)| g).map(|(i, _)| i).collect();
    assert_eq!(set, expected);
    let w: Vec<f64> = std::iter::once(&inst.target).chain(&inst.candidates).map(|s| s.n_eff).collect();
    let total: f64 = w.iter().sum();
    let in_set: f64 = w[0] + expected.iter().map(|&i| w[i + 1]).sum::<f64>();
    let predicted = (2.0 * in_set + 1.75 * (total - in_set)) / total;
    assert!((best - predicted).abs() < 1e-12, "{best} vs {predicted}");
}

#[test]
fn private_bilinear_variance_matches_monte_carlo() {
    let mc = bilinear_monte_carlo(20_000, 500, 2);
    let rel = (mc.empirical / mc.predicted - 1.0).abs();
    assert!(rel < 0.1, "empirical {} predicted {} ({rel:.3})", mc.empirical, mc.predicted);
}
