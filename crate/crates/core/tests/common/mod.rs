#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pca_transfer::diagnostics::{self, BilinearSpec};
use pca_transfer::estimators::{self, CovarianceEstimate, Dataset, StudySummary};
use pca_transfer::grassmann::{self, Projector, WeightedProjectorSet};
use pca_transfer::linalg::{self, SymMatrix};
use pca_transfer::simulation::{self, Distribution};
use pca_transfer::transfer::{self, Init, TransferConfig, Variant, Weighting};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = Result<(), TestCaseError>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn haar_projector(p: usize, r: usize, rng: &mut ChaCha8Rng) -> Projector {
    Projector::from_basis(linalg::haar_basis(p, r, rng)).unwrap()
}

pub fn orthogonal(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    linalg::haar_basis(p, p, rng)
}

/// A transfer problem with known shared span and informative set.
pub struct Instance {
    pub target: StudySummary,
    pub target_cov: CovarianceEstimate,
    pub candidates: Vec<StudySummary>,
    pub informative: Vec<bool>,
    pub shared: Projector,
}

/// Population-level studies: informative sources share a span within `h`
/// of the target's; the others have informative gap at least `min_gap`.
pub fn instance(p: usize, k: usize, r0: usize, rs: usize, h: f64, min_gap: f64, seed: u64) -> Instance {
    let mut rng = rng(seed);
    let us = linalg::haar_basis(p, rs, &mut rng);
    let shared = Projector::from_basis(us.clone()).unwrap();
    let up0 = simulation::haar_in_complement(&us, r0 - rs, &mut rng);
    let target_cov_m = simulation::build_covariance(&us, &up0, 6.0, 9.0).unwrap();
    let target_cov = CovarianceEstimate::external(target_cov_m.into_inner(), 200).unwrap();
    let mut basis0 = DMatrix::zeros(p, r0);
    basis0.columns_mut(0, rs).copy_from(&us);
    basis0.columns_mut(rs, r0 - rs).copy_from(&up0);
    let target = StudySummary::new("0", Projector::from_basis(basis0).unwrap(), 200, 50.0).unwrap();

    let mut candidates = Vec::new();
    let mut informative = Vec::new();
    for i in 0..k {
        let good = i == 0 || rng.random_bool(0.5);
        let usk = if good {
            let q = simulation::perturbed_rotation(p, h, &mut rng).unwrap();
            linalg::gram_schmidt(&(q * &us)).unwrap()
        } else {
            loop {
                let cand = linalg::haar_basis(p, rs, &mut rng);
                let proj = Projector::from_basis(cand.clone()).unwrap();
                if rs as f64 - proj.trace_with(shared.matrix()) >= min_gap {
                    break cand;
                }
            }
        };
        let rk = rs + rng.random_range(0..=(r0 - rs).min(p - rs - 1));
        let upk = simulation::haar_in_complement(&usk, rk - rs, &mut rng);
        let mut b = DMatrix::zeros(p, rk);
        b.columns_mut(0, rs).copy_from(&usk);
        b.columns_mut(rs, rk - rs).copy_from(&upk);
        let n = rng.random_range(50..400);
        let s = StudySummary::new((i + 1).to_string(), Projector::from_basis(b).unwrap(), n, n as f64 / 4.0)
            .unwrap();
        informative.push(good);
        candidates.push(s);
    }
    Instance { target, target_cov, candidates, informative, shared }
}

/// Largest `tr(A P)` over rank-`r` projectors.
fn top_sum(a: &DMatrix<f64>, r: usize) -> f64 {
    let eig = linalg::sym_eigen(&SymMatrix::symmetrized(a.clone()));
    eig.values.iter().take(r).sum()
}

/// Exhaustive maximum of the rectified objective over subsets, with the
/// maximizing subset.
pub fn brute_force_optimum(inst: &Instance, tau: f64, rs: usize, weighting: Weighting) -> (f64, Vec<usize>) {
    let w0 = weighting.weight(&inst.target);
    let ws: Vec<f64> = inst.candidates.iter().map(|c| weighting.weight(c)).collect();
    let total = w0 + ws.iter().sum::<f64>();
    let k = inst.candidates.len();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for mask in 0u32..(1 << k) {
        let mut a = inst.target.projector.matrix() * w0;
        let mut rest = 0.0;
        let mut set = Vec::new();
        for (i, c) in inst.candidates.iter().enumerate() {
            if mask & (1 << i) != 0 {
                a += c.projector.matrix() * ws[i];
                set.push(i);
            } else {
                rest += ws[i] * tau;
            }
        }
        let value = (top_sum(&a, rs) + rest) / total;
        if value > best.0 {
            best = (value, set);
        }
    }
    best
}

pub fn config(rs: usize, r0: usize, tau: f64, variant: Variant) -> TransferConfig {
    let mut cfg = TransferConfig::new(rs, r0);
    cfg.tau = tau;
    cfg.variant = variant;
    cfg
}

// ---------------------------------------------------------------------------
// Properties shared by the proptest suite and the acceptance runner.

pub fn prop_projector_idempotent(p: usize, r: usize, seed: u64) -> Check {
    let proj = haar_projector(p, r, &mut rng(seed));
    let m = proj.matrix();
    prop_assert!((m * m - m).amax() < 1e-12);
    prop_assert!((m - m.transpose()).amax() < 1e-15);
    prop_assert!((m.trace() - r as f64).abs() < 1e-12);
    prop_assert!(proj.invariant_violation().is_none());
    Ok(())
}

pub fn prop_barycenter_invariance(p: usize, k: usize, rs: usize, scale: f64, seed: u64) -> Check {
    let mut g = rng(seed);
    let items: Vec<(DMatrix<f64>, f64)> = (0..k)
        .map(|_| {
            let r = g.random_range(rs..=p.min(rs + 2));
            (linalg::haar_basis(p, r, &mut g), g.random_range(0.1..5.0))
        })
        .collect();
    let set = |rotate: bool, c: f64, g: &mut ChaCha8Rng| {
        WeightedProjectorSet::new(
            items
                .iter()
                .map(|(b, w)| {
                    let basis = if rotate { b * orthogonal(b.ncols(), g) } else { b.clone() };
                    (Projector::from_basis(basis).unwrap(), w * c)
                })
                .collect(),
        )
        .unwrap()
    };
    let base = grassmann::barycenter(&set(false, 1.0, &mut g), rs).unwrap();
    prop_assume!(base.gap > 1e-6);
    let rotated = grassmann::barycenter(&set(true, 1.0, &mut g), rs).unwrap();
    let scaled = grassmann::barycenter(&set(false, scale, &mut g), rs).unwrap();
    let tol = 1e-9 / base.gap;
    prop_assert!((rotated.projector.matrix() - base.projector.matrix()).amax() < tol);
    prop_assert!((scaled.projector.matrix() - base.projector.matrix()).amax() < tol);
    prop_assert!((scaled.objective - base.objective).abs() < 1e-12);
    Ok(())
}

pub fn prop_kendall_unit_trace_psd(n: usize, p: usize, seed: u64) -> Check {
    let mut g = rng(seed);
    let rows = gaussian(n, p, &mut g);
    let data = Dataset::new(rows).unwrap();
    let all = estimators::kendall_tau(&data, None, seed).unwrap();
    let full = estimators::kendall_tau(&data, Some(n * (n - 1) / 2), seed).unwrap();
    prop_assert_eq!(all.matrix.as_matrix(), full.matrix.as_matrix());
    let m = all.matrix.as_matrix();
    prop_assert!((m.trace() - 1.0).abs() < 1e-12);
    let min = linalg::sym_eigen(&all.matrix).values.iter().cloned().fold(f64::INFINITY, f64::min);
    prop_assert!(min >= -1e-12, "min eigenvalue {min}");
    Ok(())
}

pub fn prop_gradient_tangent(p: usize, r: usize, seed: u64) -> Check {
    let mut g = rng(seed);
    let proj = haar_projector(p, r, &mut g);
    let a = gaussian(p, p, &mut g);
    let pbar = SymMatrix::symmetrized(&a * a.transpose());
    let x = grassmann::ascent_direction(&proj, &pbar).unwrap();
    let pm = proj.matrix();
    let resid = (&x - (pm * &x + &x * pm)).amax();
    prop_assert!(resid <= 1e-10 * (1.0 + x.amax()), "residual {resid}");
    prop_assert!((&x - x.transpose()).amax() <= 1e-10 * (1.0 + x.amax()));
    Ok(())
}

pub fn prop_kmeans_monotone(p: usize, k: usize, seed: u64) -> Check {
    let mut g = rng(seed);
    let r0 = 3.min(p - 1);
    let rs = 2.min(r0);
    let inst = instance(p, k, r0, rs, 0.3, 0.0, g.random());
    let mut cfg = config(rs, r0, g.random_range(0.0..rs as f64), Variant::Kmeans);
    let q = haar_projector(p, rs, &mut g);
    cfg.init = Init::Explicit(q.clone());
    cfg.max_iter = 30;
    let res = transfer::non_oracle_transfer(&inst.target, &inst.target_cov, &inst.candidates, &cfg).unwrap();
    let mut prev = transfer::rectified_objective(&q, &inst.target, &inst.candidates, cfg.tau, cfg.weighting);
    for rec in &res.trace {
        prop_assert!(rec.objective >= prev - 1e-12, "{} after {}", rec.objective, prev);
        prev = rec.objective;
    }
    Ok(())
}

/// Eigenvalue `r0 - rs` of the target covariance compressed to the complement
/// of the exact shared span is at least eigenvalue `r0` of the covariance.
pub fn prop_courant_fischer(p: usize, r0: usize, rs: usize, seed: u64) -> Check {
    let mut g = rng(seed);
    let us = linalg::haar_basis(p, rs, &mut g);
    let up = simulation::haar_in_complement(&us, r0 - rs, &mut g);
    let lam_s = g.random_range(1.5..20.0);
    let lam_p = g.random_range(1.5..20.0);
    let sigma = simulation::build_covariance(&us, &up, lam_s, lam_p).unwrap();
    let noise = gaussian(p, p, &mut g) * 0.1;
    let sigma = SymMatrix::symmetrized(sigma.as_matrix() + &noise * noise.transpose());
    let w = Projector::from_basis(us).unwrap().complement_basis();
    let reduced = SymMatrix::symmetrized(w.transpose() * sigma.as_matrix() * &w);
    let lp = linalg::sym_eigen(&reduced).values[r0 - rs - 1];
    let l = linalg::sym_eigen(&sigma).values[r0 - 1];
    prop_assert!(lp >= l - 1e-10 * (1.0 + l), "{lp} < {l}");
    Ok(())
}

pub fn prop_transfer_orthogonal(p: usize, k: usize, variant: Variant, oracle: bool, seed: u64) -> Check {
    let mut g = rng(seed);
    let r0 = g.random_range(2..=4.min(p - 1));
    let rs = g.random_range(1..r0);
    let inst = instance(p, k, r0, rs, 0.2, 0.5, g.random());
    let mut cfg = config(rs, r0, 0.5 * rs as f64, variant);
    cfg.max_iter = 20;
    let res = if oracle {
        let mut all = vec![inst.target.clone()];
        all.extend(inst.candidates.iter().cloned());
        transfer::oracle_transfer(&all, &inst.target_cov, &cfg).unwrap()
    } else {
        transfer::non_oracle_transfer(&inst.target, &inst.target_cov, &inst.candidates, &cfg).unwrap()
    };
    let private = res.private.expect("r_p > 0");
    prop_assert!((res.shared.matrix() * private.matrix()).amax() < 1e-10);
    let c = res.combined.matrix();
    prop_assert_eq!(res.combined.rank(), r0);
    prop_assert!((c.trace() - r0 as f64).abs() < 1e-10);
    prop_assert!((c * c - c).amax() < 1e-10);
    Ok(())
}

pub fn prop_distance_forms(p: usize, r: usize, seed: u64) -> Check {
    let mut g = rng(seed);
    let a = haar_projector(p, r, &mut g);
    let b = haar_projector(p, r, &mut g);
    let frob = grassmann::subspace_distance(&a, &b).unwrap().scaled;
    let trace = grassmann::scaled_distance_trace_form(&a, &b).unwrap();
    prop_assert!((frob - trace).abs() < 1e-12, "{frob} vs {trace}");
    prop_assert!((0.0..=1.0 + 1e-12).contains(&frob));
    Ok(())
}

pub fn prop_gap_rotation_invariant(p: usize, rk: usize, rs: usize, seed: u64) -> Check {
    let mut g = rng(seed);
    let pk = haar_projector(p, rk, &mut g);
    let ps = haar_projector(p, rs, &mut g);
    let q = orthogonal(p, &mut g);
    let d = diagnostics::informative_gap(&pk, &ps).unwrap();
    let d_rot = diagnostics::informative_gap(&pk.rotated(&q).unwrap(), &ps.rotated(&q).unwrap()).unwrap();
    prop_assert!((d - d_rot).abs() < 1e-10);
    prop_assert!((0.0..=rs as f64).contains(&d));
    Ok(())
}

pub fn prop_margin_scale_invariant(p: usize, k: usize, scale: f64, seed: u64) -> Check {
    let mut g = rng(seed);
    let items: Vec<(Projector, f64)> = (0..k)
        .map(|_| {
            let r = g.random_range(1..p);
            (haar_projector(p, r, &mut g), g.random_range(0.1..5.0))
        })
        .collect();
    let scaled: Vec<(Projector, f64)> = items.iter().map(|(q, w)| (q.clone(), w * scale)).collect();
    let a = diagnostics::identifiability_margin(&WeightedProjectorSet::new(items).unwrap()).unwrap();
    let b = diagnostics::identifiability_margin(&WeightedProjectorSet::new(scaled).unwrap()).unwrap();
    prop_assert!((a - b).abs() < 1e-12);
    prop_assert!((0.0..=1.0).contains(&a));
    Ok(())
}

pub fn prop_ar_scale_invariant(p: usize, n: usize, scale: f64, seed: u64) -> Check {
    let mut g = rng(seed);
    let t = haar_projector(p, 2, &mut g);
    let b = haar_projector(p, 2, &mut g);
    let data = Dataset::new(gaussian(n, p, &mut g)).unwrap();
    let a1 = diagnostics::ar_ratio(&t, &b, &data).unwrap();
    let a2 = diagnostics::ar_ratio(&t, &b, &data.scaled(scale).unwrap()).unwrap();
    prop_assert!((a1 - a2).abs() <= 1e-10 * a1.max(1.0));
    Ok(())
}

// ---------------------------------------------------------------------------
// Monte Carlo check of the private-projector bilinear variance.

pub struct BilinearMc {
    pub predicted: f64,
    pub empirical: f64,
}

pub fn bilinear_monte_carlo(reps: usize, n: usize, seed: u64) -> BilinearMc {
    use rayon::prelude::*;
    let (p, r0, rs, lam_p, lam_s) = (6, 3, 1, 20.0, 2.0);
    let mut g = rng(seed);
    let us = linalg::haar_basis(p, rs, &mut g);
    let up = simulation::haar_in_complement(&us, r0 - rs, &mut g);
    let sigma = simulation::build_covariance(&us, &up, lam_s, lam_p).unwrap();
    let shared = Projector::from_basis(us.clone()).unwrap();
    let private = Projector::from_basis(up.clone()).unwrap();
    let mut u0 = DMatrix::zeros(p, r0);
    u0.columns_mut(0, rs).copy_from(&us);
    u0.columns_mut(rs, r0 - rs).copy_from(&up);
    let tail = linalg::orthogonal_complement(&u0);
    let u = DVector::from_iterator(p, (0..p).map(|_| g.sample::<f64, _>(StandardNormal))).normalize();
    let v = DVector::from_iterator(p, (0..p).map(|_| g.sample::<f64, _>(StandardNormal))).normalize();
    let spec = BilinearSpec {
        u: u.clone(),
        v: v.clone(),
        private_pairs: up.column_iter().map(|c| (lam_p, c.into_owned())).collect(),
        tail_pairs: tail.column_iter().map(|c| (1.0, c.into_owned())).collect(),
        nu4: 3.0,
    };
    let predicted = diagnostics::bilinear_variance(&spec).unwrap();
    let root_n = (n as f64).sqrt();
    let zs: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = simulation::replication_rng(seed, 0, rep);
            let data = simulation::sample_dataset(&sigma, n, Distribution::Gaussian, &mut rng).unwrap();
            let cov = estimators::sample_covariance(&data, false).unwrap();
            let hat = transfer::fine_tune(&shared, &cov, r0 - rs).unwrap();
            root_n * (u.transpose() * (hat.matrix() - private.matrix()) * &v)[(0, 0)]
        })
        .collect();
    let mean = zs.iter().sum::<f64>() / reps as f64;
    let empirical = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    BilinearMc { predicted, empirical }
}

// ---------------------------------------------------------------------------
// Algorithm-level checks.

/// Spread (max - min) of the final rectified objectives reached by the three
/// update rules from the blind barycenter, one entry per instance.
pub fn variant_spreads(instances: usize, seed: u64) -> Vec<f64> {
    let mut g = rng(seed);
    (0..instances)
        .map(|_| {
            let p = g.random_range(5..=10);
            let k = g.random_range(2..=6);
            let inst = instance(p, k, 3, 2, 0.05, 0.5, g.random());
            let objectives: Vec<f64> = [Variant::Kmeans, Variant::Gradient, Variant::Newton]
                .into_iter()
                .map(|v| {
                    let mut cfg = config(2, 3, 1.0, v);
                    cfg.max_iter = 500;
                    cfg.tol = 1e-10;
                    transfer::non_oracle_transfer(&inst.target, &inst.target_cov, &inst.candidates, &cfg)
                        .unwrap()
                        .objective
                })
                .collect();
            let max = objectives.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = objectives.iter().cloned().fold(f64::INFINITY, f64::min);
            max - min
        })
        .collect()
}

/// Every off-set source keeps gap `min_gap` from every rank-`rs` subspace of
/// the target's span, and the target with the informative sources carries
/// most of the weight.
pub fn well_separated(inst: &Instance, rs: usize, min_gap: f64, weighting: Weighting) -> bool {
    let u0 = inst.target.projector.orthonormal_basis();
    let mut on = weighting.weight(&inst.target);
    let mut off = 0.0;
    for (c, &good) in inst.candidates.iter().zip(&inst.informative) {
        if good {
            on += weighting.weight(c);
            continue;
        }
        off += weighting.weight(c);
        let reach = top_sum(&(u0.transpose() * c.projector.matrix() * &u0), rs);
        if rs as f64 - reach < min_gap {
            return false;
        }
    }
    on > off
}

pub struct OracleComparison {
    pub instances: usize,
    pub objective_matches: usize,
    pub set_matches: usize,
}

/// Multi-start k-means against the exhaustive subset maximum on small,
/// well-separated instances.
pub fn brute_force_comparison(instances: usize, seed: u64) -> OracleComparison {
    let mut g = rng(seed);
    let (rs, r0, tau) = (2, 3, 1.75);
    let mut out = OracleComparison { instances, objective_matches: 0, set_matches: 0 };
    for _ in 0..instances {
        let p = g.random_range(4..=8);
        let k = g.random_range(1..=6);
        let h = g.random_range(0.0..=0.05);
        let mut cfg = config(rs, r0, tau, Variant::Kmeans);
        let inst = loop {
            let inst = instance(p, k, r0, rs, h, 0.5, g.random());
            if well_separated(&inst, rs, 0.5, cfg.weighting) {
                break inst;
            }
        };
        cfg.init = Init::MultiStart { m: 8, seed: g.random() };
        let res = transfer::non_oracle_transfer(&inst.target, &inst.target_cov, &inst.candidates, &cfg).unwrap();
        let (best, _) = brute_force_optimum(&inst, tau, rs, cfg.weighting);
        if (res.objective - best).abs() <= 1e-6 * best.abs() {
            out.objective_matches += 1;
        }
        let truth: Vec<String> = inst
            .candidates
            .iter()
            .zip(&inst.informative)
            .filter(|(_, &good)| good)
            .map(|(c, _)| c.id.clone())
            .collect();
        if res.selected == truth {
            out.set_matches += 1;
        }
    }
    out
}
