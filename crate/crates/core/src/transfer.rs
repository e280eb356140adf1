//! Oracle and non-oracle knowledge transfer for the target's principal
//! subspace.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{ess_formula, CovarianceEstimate, StudySummary};
use crate::grassmann::{self, Projector, WeightedProjectorSet};
use crate::linalg::{self, SymMatrix};

/// Objective decreases smaller than this are treated as rounding.
const ASCENT_SLACK: f64 = 1e-12;
const MAX_HALVINGS: usize = 20;
/// A zero eigengap is replaced by this fraction of the leading eigenvalue
/// when computing the effective sample size.
const GAP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Kmeans,
    Gradient,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    RawN,
    Effective,
}

impl Weighting {
    pub fn weight(self, s: &StudySummary) -> f64 {
        match self {
            Weighting::RawN => s.n as f64,
            Weighting::Effective => s.n_eff,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Barycenter over the target and every candidate.
    BlindBarycenter,
    /// Leading `r_s` eigenvectors of the target covariance.
    TargetTop,
    Explicit(Projector),
    /// Blind barycenter, target top, the barycenter of the target with each
    /// single candidate, and `m` Haar-random starts; the run with the largest
    /// rectified objective wins.
    MultiStart { m: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferConfig {
    pub r_s: usize,
    pub r_0: usize,
    pub tau: f64,
    pub variant: Variant,
    pub weighting: Weighting,
    pub max_iter: usize,
    pub tol: f64,
    pub alpha: f64,
    pub init: Init,
    /// Gradient steps taken before the first Newton step.
    pub warm_start_steps: usize,
}

impl TransferConfig {
    /// Defaults: `tau = r_s / 2`, k-means updates, effective-sample-size
    /// weights, `T = 50`, `tol = 1e-8`, `alpha = 0.5`, blind initialization.
    pub fn new(r_s: usize, r_0: usize) -> Self {
        TransferConfig {
            r_s,
            r_0,
            tau: 0.5 * r_s as f64,
            variant: Variant::Kmeans,
            weighting: Weighting::Effective,
            max_iter: 50,
            tol: 1e-8,
            alpha: 0.5,
            init: Init::BlindBarycenter,
            warm_start_steps: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_s == 0 || self.r_s > self.r_0 {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= r_s <= r_0, got r_s = {}, r_0 = {}",
                self.r_s, self.r_0
            )));
        }
        if !(self.tau >= 0.0 && self.tau <= self.r_s as f64) {
            return Err(Error::InvalidConfig(format!(
                "tau = {} outside [0, {}]",
                self.tau, self.r_s
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be positive".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {}", self.alpha)));
        }
        if let Init::Explicit(p) = &self.init {
            if p.rank() != self.r_s {
                return Err(Error::RankMismatch(p.rank(), self.r_s));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Barycenter,
    Gradient,
    Newton,
    /// The Newton step was singular, failed to ascend, or started outside the
    /// region where the objective is locally concave; a gradient step was
    /// taken instead.
    GradientFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub selected: Vec<String>,
    pub step_norm: f64,
    pub step: StepKind,
}

#[derive(Debug, Clone)]
pub struct TransferResult {
    pub shared: Projector,
    /// `None` when `r_s = r_0`.
    pub private: Option<Projector>,
    pub combined: Projector,
    /// Sources entering the final aggregation; the target always does.
    pub selected: Vec<String>,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
    /// Objective at `shared`: the barycenter objective for the oracle
    /// procedure, the rectified objective otherwise.
    pub objective: f64,
    /// Final rectified objective of each multi-start run, in start order.
    pub start_objectives: Vec<f64>,
}

/// Leading-`r` eigenspace of a covariance estimate together with its plug-in
/// effective sample size. A vanishing eigengap is floored and flagged.
pub fn individual_pca(cov: &CovarianceEstimate, r: usize) -> Result<StudySummary> {
    let p = cov.dim();
    if r == 0 || r > p {
        return Err(Error::InvalidRank(format!("rank {r} outside 1..={p}")));
    }
    let eig = linalg::sym_eigen(&cov.matrix);
    let projector = Projector::from_basis(eig.vectors.columns(0, r).into_owned())?;
    let values: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    let lambda1 = values[0];
    if !(lambda1 > 0.0) {
        return Err(Error::InvalidData("covariance estimate is zero".into()));
    }
    let next = if r < p { values[r] } else { 0.0 };
    let gap = values[r - 1] - next;
    let degenerate = gap < linalg::DEGENERATE_GAP * (1.0 + lambda1);
    let ess = ess_formula(
        cov.n,
        r,
        cov.ess_mode(),
        p,
        lambda1,
        gap.max(GAP_FLOOR * lambda1),
        values.iter().sum(),
    )?;
    let mut summary = StudySummary::new(String::new(), projector, cov.n, ess.n_eff)?;
    summary.degenerate_gap = degenerate;
    Ok(summary)
}

/// Leading `r_p` eigenvectors of `(I - P_s) Sigma (I - P_s)`, computed in a
/// basis of the complement so the result is exactly orthogonal to `shared`.
pub fn fine_tune(shared: &Projector, target_cov: &CovarianceEstimate, r_p: usize) -> Result<Projector> {
    let p = shared.dim();
    if target_cov.dim() != p {
        return Err(Error::DimensionMismatch(format!("{p} vs {}", target_cov.dim())));
    }
    if r_p > p - shared.rank() {
        return Err(Error::InvalidRank(format!(
            "private rank {r_p} exceeds complement dimension {}",
            p - shared.rank()
        )));
    }
    if r_p == 0 {
        return Ok(Projector::zero(p));
    }
    let w = shared.complement_basis();
    let reduced = SymMatrix::symmetrized(w.transpose() * target_cov.matrix.as_matrix() * &w);
    let eig = linalg::top_r_eig(&reduced, r_p)?;
    Projector::from_basis(&w * eig.vectors)
}

fn combine(shared: &Projector, private: &Projector) -> Result<Projector> {
    let us = shared.orthonormal_basis();
    let up = private.orthonormal_basis();
    let p = shared.dim();
    let mut u = DMatrix::zeros(p, us.ncols() + up.ncols());
    u.columns_mut(0, us.ncols()).copy_from(&us);
    u.columns_mut(us.ncols(), up.ncols()).copy_from(&up);
    Projector::from_basis(u)
}

fn finish(
    shared: Projector,
    target_cov: &CovarianceEstimate,
    cfg: &TransferConfig,
) -> Result<(Option<Projector>, Projector)> {
    let r_p = cfg.r_0 - cfg.r_s;
    if r_p == 0 {
        return Ok((None, shared));
    }
    let private = fine_tune(&shared, target_cov, r_p)?;
    let combined = combine(&shared, &private)?;
    Ok((Some(private), combined))
}

fn check_dims(studies: &[&StudySummary], target_cov: &CovarianceEstimate) -> Result<usize> {
    let p = target_cov.dim();
    for s in studies {
        if s.dim() != p {
            return Err(Error::DimensionMismatch(format!(
                "study '{}' has dimension {}, target covariance {p}",
                s.id,
                s.dim()
            )));
        }
    }
    Ok(p)
}

fn weighted_set(studies: &[&StudySummary], weighting: Weighting) -> Result<WeightedProjectorSet> {
    WeightedProjectorSet::new(
        studies.iter().map(|s| (s.projector.clone(), weighting.weight(s))).collect(),
    )
}

/// Barycenter over every supplied study (target first) followed by
/// fine-tuning on the target covariance. Every source counts as selected.
pub fn oracle_transfer(
    studies: &[StudySummary],
    target_cov: &CovarianceEstimate,
    cfg: &TransferConfig,
) -> Result<TransferResult> {
    cfg.validate()?;
    if studies.is_empty() {
        return Err(Error::Empty("studies"));
    }
    let refs: Vec<&StudySummary> = studies.iter().collect();
    check_dims(&refs, target_cov)?;
    let bary = grassmann::barycenter(&weighted_set(&refs, cfg.weighting)?, cfg.r_s)?;
    let selected: Vec<String> = studies[1..].iter().map(|s| s.id.clone()).collect();
    let (private, combined) = finish(bary.projector.clone(), target_cov, cfg)?;
    Ok(TransferResult {
        trace: vec![IterationRecord {
            iteration: 1,
            objective: bary.objective,
            selected: selected.clone(),
            step_norm: 0.0,
            step: StepKind::Barycenter,
        }],
        shared: bary.projector,
        private,
        combined,
        selected,
        converged: true,
        objective: bary.objective,
        start_objectives: vec![],
    })
}

/// Indices of the candidates with `tr(P P_k) >= tau`.
pub fn select_indices(p: &Projector, candidates: &[StudySummary], tau: f64) -> Vec<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.projector.trace_with(p.matrix()) >= tau)
        .map(|(i, _)| i)
        .collect()
}

/// Ids of the candidates with `tr(P P_k) >= tau`, in input order.
pub fn select_sources(p: &Projector, candidates: &[StudySummary], tau: f64) -> Vec<String> {
    select_indices(p, candidates, tau).into_iter().map(|i| candidates[i].id.clone()).collect()
}

/// `(w_0 tr(P_0 P) + sum_k w_k max{tr(P_k P), tau}) / (w_0 + sum_k w_k)`.
pub fn rectified_objective(
    p: &Projector,
    target: &StudySummary,
    candidates: &[StudySummary],
    tau: f64,
    weighting: Weighting,
) -> f64 {
    let w0 = weighting.weight(target);
    let mut num = w0 * target.projector.trace_with(p.matrix());
    let mut total = w0;
    for c in candidates {
        let w = weighting.weight(c);
        num += w * c.projector.trace_with(p.matrix()).max(tau);
        total += w;
    }
    num / total
}

struct Problem<'a> {
    target: &'a StudySummary,
    candidates: &'a [StudySummary],
    cfg: &'a TransferConfig,
}

impl Problem<'_> {
    fn objective(&self, p: &Projector) -> f64 {
        rectified_objective(p, self.target, self.candidates, self.cfg.tau, self.cfg.weighting)
    }

    fn selected_average(&self, selected: &[usize]) -> Result<SymMatrix> {
        let mut refs = vec![self.target];
        refs.extend(selected.iter().map(|&i| &self.candidates[i]));
        weighted_set(&refs, self.cfg.weighting)?.weighted_average()
    }

    fn selected_barycenter(&self, selected: &[usize]) -> Result<Projector> {
        let mut refs = vec![self.target];
        refs.extend(selected.iter().map(|&i| &self.candidates[i]));
        Ok(grassmann::barycenter(&weighted_set(&refs, self.cfg.weighting)?, self.cfg.r_s)?.projector)
    }

    /// Gradient step with step-size halving until the rectified objective
    /// does not decrease; returns the current point if no step ascends.
    fn gradient_ascent(&self, p: &Projector, pbar: &SymMatrix, f_now: f64) -> Result<Projector> {
        let mut alpha = self.cfg.alpha;
        for _ in 0..=MAX_HALVINGS {
            let next = grassmann::gradient_step(p, pbar, alpha)?;
            if self.objective(&next) >= f_now - ASCENT_SLACK {
                return Ok(next);
            }
            alpha *= 0.5;
        }
        Ok(p.clone())
    }

    fn ids(&self, selected: &[usize]) -> Vec<String> {
        selected.iter().map(|&i| self.candidates[i].id.clone()).collect()
    }

    fn run(&self, start: Projector) -> Result<Run> {
        let cfg = self.cfg;
        let mut p = start;
        let mut f = self.objective(&p);
        let mut best = (p.clone(), f);
        let mut trace = Vec::with_capacity(cfg.max_iter);
        let mut converged = false;
        for t in 1..=cfg.max_iter {
            let selected = select_indices(&p, self.candidates, cfg.tau);
            let (next, step) = match cfg.variant {
                Variant::Kmeans => (self.selected_barycenter(&selected)?, StepKind::Barycenter),
                Variant::Gradient => {
                    let pbar = self.selected_average(&selected)?;
                    (self.gradient_ascent(&p, &pbar, f)?, StepKind::Gradient)
                }
                Variant::Newton => {
                    let pbar = self.selected_average(&selected)?;
                    if t <= cfg.warm_start_steps {
                        (self.gradient_ascent(&p, &pbar, f)?, StepKind::Gradient)
                    } else if grassmann::ritz_separation(&p, &pbar)? <= 0.0 {
                        (self.gradient_ascent(&p, &pbar, f)?, StepKind::GradientFallback)
                    } else {
                        match grassmann::newton_step(&p, &pbar) {
                            Ok(q) if self.objective(&q) >= f - ASCENT_SLACK => (q, StepKind::Newton),
                            Ok(_) | Err(Error::SingularNewton { .. }) => {
                                (self.gradient_ascent(&p, &pbar, f)?, StepKind::GradientFallback)
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
            };
            let step_norm = (next.matrix() - p.matrix()).norm();
            p = next;
            f = self.objective(&p);
            if f > best.1 {
                best = (p.clone(), f);
            }
            trace.push(IterationRecord {
                iteration: t,
                objective: f,
                selected: self.ids(&selected),
                step_norm,
                step,
            });
            if step_norm < cfg.tol {
                converged = true;
                break;
            }
        }
        let (shared, objective) = if converged { (p, f) } else { best };
        Ok(Run { shared, objective, trace, converged })
    }
}

struct Run {
    shared: Projector,
    objective: f64,
    trace: Vec<IterationRecord>,
    converged: bool,
}

fn target_top(target_cov: &CovarianceEstimate, r_s: usize) -> Result<Projector> {
    Ok(Projector::leading_eigenspace(&target_cov.matrix, r_s)?.0)
}

fn blind_start(problem: &Problem<'_>) -> Result<Projector> {
    let all: Vec<usize> = (0..problem.candidates.len()).collect();
    problem.selected_barycenter(&all)
}

/// Iterative source selection and shared-subspace estimation, followed by
/// fine-tuning on the target covariance. The rectified objective never
/// decreases along the k-means iterates.
pub fn non_oracle_transfer(
    target: &StudySummary,
    target_cov: &CovarianceEstimate,
    candidates: &[StudySummary],
    cfg: &TransferConfig,
) -> Result<TransferResult> {
    cfg.validate()?;
    let mut refs = vec![target];
    refs.extend(candidates.iter());
    let p = check_dims(&refs, target_cov)?;
    if target.rank() != cfg.r_0 {
        return Err(Error::RankMismatch(target.rank(), cfg.r_0));
    }
    let problem = Problem { target, candidates, cfg };

    let starts: Vec<Projector> = match &cfg.init {
        Init::BlindBarycenter => vec![blind_start(&problem)?],
        Init::TargetTop => vec![target_top(target_cov, cfg.r_s)?],
        Init::Explicit(q) => {
            if q.dim() != p {
                return Err(Error::DimensionMismatch(format!("init has dimension {}", q.dim())));
            }
            vec![q.clone()]
        }
        Init::MultiStart { m, seed } => {
            let mut v = vec![blind_start(&problem)?, target_top(target_cov, cfg.r_s)?];
            for k in 0..candidates.len() {
                v.push(problem.selected_barycenter(&[k])?);
            }
            for i in 0..*m {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(i as u64);
                v.push(Projector::from_basis(linalg::haar_basis(p, cfg.r_s, &mut rng))?);
            }
            v
        }
    };

    let runs: Vec<Run> = starts
        .into_par_iter()
        .map(|s| problem.run(s))
        .collect::<Result<Vec<_>>>()?;
    let start_objectives: Vec<f64> = runs.iter().map(|r| r.objective).collect();
    let best_idx = start_objectives
        .iter()
        .enumerate()
        .fold(0, |b, (i, &f)| if f > start_objectives[b] { i } else { b });
    let run = runs.into_iter().nth(best_idx).expect("at least one start");

    let selected = problem.ids(&select_indices(&run.shared, candidates, cfg.tau));
    let (private, combined) = finish(run.shared.clone(), target_cov, cfg)?;
    Ok(TransferResult {
        shared: run.shared,
        private,
        combined,
        selected,
        trace: run.trace,
        converged: run.converged,
        objective: run.objective,
        start_objectives: if matches!(cfg.init, Init::MultiStart { .. }) {
            start_objectives
        } else {
            vec![]
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::CovarianceEstimate;

    fn diag_cov(d: &[f64], n: usize) -> CovarianceEstimate {
        CovarianceEstimate::external(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)), n)
            .unwrap()
    }

    fn diag_proj(d: &[f64]) -> Projector {
        let rank = d.iter().filter(|&&v| v == 1.0).count();
        Projector::from_matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)), rank)
            .unwrap()
    }

    fn study(id: &str, proj: Projector, n: usize) -> StudySummary {
        StudySummary::new(id, proj, n, n as f64).unwrap()
    }

    fn basis_vec(p: usize, i: usize) -> DMatrix<f64> {
        let mut v = DMatrix::zeros(p, 1);
        v[(i, 0)] = 1.0;
        v
    }

    #[test]
    fn individual_pca_toy_examples() {
        let s0 = individual_pca(&diag_cov(&[5.0, 2.0, 1.0, 1.0, 1.0, 1.0], 110), 2).unwrap();
        assert!((s0.projector.matrix() - diag_proj(&[1., 1., 0., 0., 0., 0.]).matrix()).amax() < 1e-12);
        assert!((s0.n_eff - 1.0).abs() < 1e-12);
        assert!(!s0.degenerate_gap);
        let s1 = individual_pca(&diag_cov(&[1.0, 2.0, 5.0, 1.0, 1.0, 1.0], 10), 2).unwrap();
        assert!((s1.projector.matrix() - diag_proj(&[0., 1., 1., 0., 0., 0.]).matrix()).amax() < 1e-12);
    }

    #[test]
    fn individual_pca_flags_identity() {
        let s = individual_pca(&diag_cov(&[1.0; 4], 10), 1).unwrap();
        assert!(s.degenerate_gap);
        assert!(s.n_eff.is_finite() && s.n_eff > 0.0);
        let full = individual_pca(&diag_cov(&[3.0, 2.0], 10), 2).unwrap();
        assert!(!full.degenerate_gap);
    }

    #[test]
    fn fine_tune_examples() {
        let shared = Projector::from_basis(basis_vec(6, 1)).unwrap();
        let cov = diag_cov(&[5.0, 2.0, 1.0, 1.0, 1.0, 1.0], 10);
        let private = fine_tune(&shared, &cov, 1).unwrap();
        assert!((private.matrix() - diag_proj(&[1., 0., 0., 0., 0., 0.]).matrix()).amax() < 1e-12);
        let none = fine_tune(&shared, &cov, 0).unwrap();
        assert_eq!(none.rank(), 0);
        assert_eq!(none.matrix().amax(), 0.0);
        assert!(matches!(fine_tune(&shared, &cov, 6), Err(Error::InvalidRank(_))));
    }

    #[test]
    fn oracle_toy_pair_recovers_target() {
        let cov0 = diag_cov(&[5.0, 2.0, 1.0, 1.0, 1.0, 1.0], 100);
        let cov1 = diag_cov(&[1.0, 2.0, 5.0, 1.0, 1.0, 1.0], 100);
        let s0 = study("target", individual_pca(&cov0, 2).unwrap().projector, 100);
        let s1 = study("source", individual_pca(&cov1, 2).unwrap().projector, 100);
        let cfg = TransferConfig::new(1, 2);
        let res = oracle_transfer(&[s0, s1], &cov0, &cfg).unwrap();
        assert!((res.shared.matrix() - diag_proj(&[0., 1., 0., 0., 0., 0.]).matrix()).amax() < 1e-12);
        assert!((res.combined.matrix() - diag_proj(&[1., 1., 0., 0., 0., 0.]).matrix()).amax() < 1e-12);
        assert_eq!(res.selected, vec!["source"]);
        assert_eq!(res.trace.len(), 1);
    }

    #[test]
    fn oracle_single_study() {
        let cov = diag_cov(&[4.0, 3.0, 1.0], 20);
        let s = individual_pca(&cov, 2).unwrap();
        let res = oracle_transfer(std::slice::from_ref(&s), &cov, &TransferConfig::new(2, 2)).unwrap();
        assert!(res.private.is_none());
        assert!((res.combined.matrix() - s.projector.matrix()).amax() < 1e-12);
    }

    #[test]
    fn selection_examples() {
        let p = Projector::from_basis(basis_vec(3, 0)).unwrap();
        let other = study("a", Projector::from_basis(basis_vec(3, 1)).unwrap(), 5);
        assert_eq!(select_sources(&p, std::slice::from_ref(&other), 0.0), vec!["a"]);
        assert!(select_sources(&p, std::slice::from_ref(&other), 0.5).is_empty());
        let contains = study("b", diag_proj(&[1.0, 1.0, 0.0]), 5);
        assert_eq!(select_sources(&p, &[contains], 1.0), vec!["b"]);
    }

    #[test]
    fn rectified_objective_examples() {
        let p = Projector::from_basis(basis_vec(4, 0)).unwrap();
        let target = study("t", diag_proj(&[1.0, 1.0, 0.0, 0.0]), 10);
        let cand = study("c", p.clone(), 10);
        let f = rectified_objective(&p, &target, std::slice::from_ref(&cand), 0.0, Weighting::RawN);
        assert!((f - 1.0).abs() < 1e-14);
        let far = Projector::from_basis(basis_vec(4, 3)).unwrap();
        let f = rectified_objective(&far, &target, &[cand.clone(), cand], 0.3, Weighting::RawN);
        assert!((f - 0.2).abs() < 1e-14);
    }

    #[test]
    fn orthogonal_candidate_is_excluded() {
        let cov0 = diag_cov(&[5.0, 4.0, 1.0, 1.0], 50);
        let target = study("t", individual_pca(&cov0, 2).unwrap().projector, 50);
        let cand = study("c", diag_proj(&[0.0, 0.0, 1.0, 1.0]), 500);
        let mut cfg = TransferConfig::new(1, 2);
        cfg.init = Init::TargetTop;
        cfg.weighting = Weighting::RawN;
        let res = non_oracle_transfer(&target, &cov0, &[cand], &cfg).unwrap();
        assert!(res.trace.iter().all(|r| r.selected.is_empty()));
        assert!(res.selected.is_empty());
        assert!((res.combined.matrix() - target.projector.matrix()).amax() < 1e-10);
        assert!(res.converged);
    }

    #[test]
    fn newton_and_gradient_reach_kmeans_objective() {
        let cov0 = diag_cov(&[6.0, 5.0, 4.0, 1.0, 1.0], 50);
        let target = study("t", individual_pca(&cov0, 3).unwrap().projector, 50);
        let a = study("a", diag_proj(&[1.0, 1.0, 0.0, 0.0, 1.0]), 80);
        let b = study("b", diag_proj(&[1.0, 0.0, 1.0, 1.0, 0.0]), 60);
        let mut fs = vec![];
        for variant in [Variant::Kmeans, Variant::Gradient, Variant::Newton] {
            let mut cfg = TransferConfig::new(1, 3);
            cfg.variant = variant;
            cfg.weighting = Weighting::RawN;
            cfg.max_iter = 500;
            let res = non_oracle_transfer(&target, &cov0, &[a.clone(), b.clone()], &cfg).unwrap();
            assert!(res.converged, "{variant:?}");
            fs.push(res.objective);
        }
        assert!((fs[0] - fs[1]).abs() < 1e-6 && (fs[0] - fs[2]).abs() < 1e-6, "{fs:?}");
    }

    #[test]
    fn config_validation() {
        let mut cfg = TransferConfig::new(2, 3);
        assert!(cfg.validate().is_ok());
        cfg.tau = 2.5;
        assert!(cfg.validate().is_err());
        assert!(TransferConfig::new(3, 2).validate().is_err());
        assert!(TransferConfig::new(0, 2).validate().is_err());
    }
}
