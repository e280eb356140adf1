//! Synthetic multi-study data and the experiment drivers built on it.
//!
//! Every random draw comes from a `ChaCha8Rng` seeded with the master seed;
//! replication `rep` at grid point `g` uses stream `(g << 32) | rep`, and
//! draws shared by a whole experiment use stream [`EXPERIMENT_STREAM`].
//! Results are therefore independent of the thread count.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution as _, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::diagnostics::{bilinear_variance, BilinearSpec};
use crate::error::{Error, Result};
use crate::estimators::{
    default_max_pairs, kendall_tau, sample_covariance, CovarianceEstimate, Dataset, StudySummary,
};
use crate::grassmann::{subspace_distance, Projector};
use crate::linalg::{self, SymMatrix};
use crate::transfer::{
    fine_tune, individual_pca, non_oracle_transfer, oracle_transfer, Init, TransferConfig, Variant,
    Weighting,
};

pub use crate::linalg::haar_basis;

/// Stream reserved for draws made once per experiment.
pub const EXPERIMENT_STREAM: u64 = u64::MAX;
const RATIO_DENOM_MIN: f64 = 1e-6;

/// Generator for replication `rep` at grid point `grid`.
pub fn replication_rng(seed: u64, grid: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((grid as u64) << 32) | rep as u64);
    rng
}

pub fn experiment_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(EXPERIMENT_STREAM);
    rng
}

/// Orthogonal factor of the Gram-Schmidt QR of `I + N`, `N_ij ~ N(0, h^2/p)`.
pub fn perturbed_rotation<R: Rng + ?Sized>(p: usize, h: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::InvalidConfig(format!("h must be non-negative, got {h}")));
    }
    let sd = h / (p as f64).sqrt();
    for _ in 0..2 {
        let m = DMatrix::from_fn(p, p, |i, j| {
            let z: f64 = rng.sample(StandardNormal);
            if i == j { 1.0 + sd * z } else { sd * z }
        });
        if let Some(q) = linalg::gram_schmidt(&m) {
            return Ok(q);
        }
    }
    Err(Error::InvalidData("perturbed identity was numerically singular twice".into()))
}

/// `p x r` orthonormal basis drawn uniformly from the orthogonal complement
/// of `span(u)`.
pub fn haar_in_complement<R: Rng + ?Sized>(u: &DMatrix<f64>, r: usize, rng: &mut R) -> DMatrix<f64> {
    let w = linalg::orthogonal_complement(u);
    let q = haar_basis(w.ncols(), r, rng);
    w * q
}

/// `(lam_s - 1) U_s U_s^T + (lam_p - 1) U_p U_p^T + I`.
pub fn build_covariance(us: &DMatrix<f64>, up: &DMatrix<f64>, lam_s: f64, lam_p: f64) -> Result<SymMatrix> {
    let p = us.nrows();
    if up.nrows() != p {
        return Err(Error::DimensionMismatch(format!("{p} vs {}", up.nrows())));
    }
    let mut joint = DMatrix::zeros(p, us.ncols() + up.ncols());
    joint.columns_mut(0, us.ncols()).copy_from(us);
    joint.columns_mut(us.ncols(), up.ncols()).copy_from(up);
    let err = if joint.ncols() == 0 { 0.0 } else { linalg::orthonormality_error(&joint) };
    if err > 1e-8 {
        return Err(Error::NotOrthonormal(err));
    }
    let m = us * us.transpose() * (lam_s - 1.0) + up * up.transpose() * (lam_p - 1.0)
        + DMatrix::identity(p, p);
    Ok(SymMatrix::symmetrized(m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    Gaussian,
    /// Multivariate t with the given degrees of freedom and scatter `Sigma`.
    StudentT(f64),
}

/// `n` rows `Sigma^{1/2} z`, times `sqrt(df / chi2_df)` for the t family.
pub fn sample_dataset<R: Rng + ?Sized>(
    sigma: &SymMatrix,
    n: usize,
    dist: Distribution,
    rng: &mut R,
) -> Result<Dataset> {
    let root = linalg::psd_sqrt(sigma);
    let p = sigma.dim();
    let z = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut x = z * root;
    if let Distribution::StudentT(df) = dist {
        let chi = ChiSquared::new(df)
            .map_err(|_| Error::InvalidConfig(format!("invalid degrees of freedom {df}")))?;
        for i in 0..n {
            let w = (df / chi.sample(rng)).sqrt();
            x.row_mut(i).scale_mut(w);
        }
    }
    Dataset::new(x)
}

/// Symmetric Gaussian matrix with off-diagonal variance `1/(2p)` and
/// diagonal variance `1/p`.
pub fn goe_matrix<R: Rng + ?Sized>(p: usize, rng: &mut R) -> SymMatrix {
    let off = Normal::new(0.0, (0.5 / p as f64).sqrt()).expect("finite sd");
    let diag = Normal::new(0.0, (1.0 / p as f64).sqrt()).expect("finite sd");
    let mut m = DMatrix::zeros(p, p);
    for j in 0..p {
        m[(j, j)] = diag.sample(rng);
        for i in j + 1..p {
            let v = off.sample(rng);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    SymMatrix::symmetrized(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Every source is informative.
    S1,
    /// Half the sources have Haar-random shared spans.
    S2,
    /// Half the sources cluster around an alternative shared span.
    S3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcaKind {
    Classical,
    Elliptical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub r: usize,
    pub r_s: usize,
    pub h: f64,
    pub lambda0_p: f64,
    pub lambda_p: f64,
    pub lambda_s: f64,
    pub distribution: Distribution,
    pub pca_kind: PcaKind,
    pub tau: f64,
    #[serde(rename = "T")]
    pub max_iter: usize,
    pub replications: usize,
    pub seed: u64,
    pub weighting: Weighting,
    /// Haar-random starts added to the deterministic multi-start set of the
    /// selected estimator.
    pub random_starts: usize,
    /// Feed population covariances to the estimators instead of samples.
    pub population: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: Scenario::S1,
            p: 50,
            k: 6,
            n: 100,
            r: 4,
            r_s: 2,
            h: 0.05,
            lambda0_p: 10.0,
            lambda_p: 8.0,
            lambda_s: 4.0,
            distribution: Distribution::Gaussian,
            pca_kind: PcaKind::Classical,
            tau: 0.5,
            max_iter: 10,
            replications: 100,
            seed: 0,
            weighting: Weighting::RawN,
            random_starts: 4,
            population: false,
        }
    }
}

impl ScenarioConfig {
    /// Named presets: `s{1,2,3}-figure1` (Gaussian, classical PCA) and
    /// `s{1,2,3}-figure2` (t with 3 degrees of freedom, elliptical PCA).
    pub fn preset(name: &str) -> Option<Self> {
        let (scenario, rest) = match name.split_once('-')? {
            ("s1", r) => (Scenario::S1, r),
            ("s2", r) => (Scenario::S2, r),
            ("s3", r) => (Scenario::S3, r),
            _ => return None,
        };
        let mut cfg = ScenarioConfig { scenario, ..Default::default() };
        match rest {
            "figure1" => {}
            "figure2" => {
                cfg.distribution = Distribution::StudentT(3.0);
                cfg.pca_kind = PcaKind::Elliptical;
            }
            _ => return None,
        }
        Some(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_s == 0 || self.r_s > self.r || self.r > self.p {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= r_s <= r <= p, got r_s = {}, r = {}, p = {}",
                self.r_s, self.r, self.p
            )));
        }
        if self.n < 2 || self.replications == 0 || self.max_iter == 0 {
            return Err(Error::InvalidConfig("n >= 2, replications >= 1 and T >= 1 required".into()));
        }
        if self.scenario != Scenario::S1 && self.k < 2 {
            return Err(Error::InvalidConfig("S2 and S3 need K >= 2".into()));
        }
        if !(self.tau >= 0.0 && self.tau <= self.r_s as f64) {
            return Err(Error::InvalidConfig(format!("tau = {} outside [0, r_s]", self.tau)));
        }
        for (name, v) in [("lambda0_p", self.lambda0_p), ("lambda_p", self.lambda_p), ("lambda_s", self.lambda_s)]
        {
            if !(v >= 1.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1, got {v}")));
            }
        }
        if let Distribution::StudentT(df) = self.distribution {
            if !(df > 0.0) {
                return Err(Error::InvalidConfig(format!("degrees of freedom must be positive, got {df}")));
            }
            if df <= 2.0 && self.pca_kind == PcaKind::Classical {
                return Err(Error::InvalidConfig(
                    "t data with df <= 2 has no covariance; use elliptical PCA".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Spec of one study in a generated family.
#[derive(Debug, Clone)]
struct StudyTruth {
    us: DMatrix<f64>,
    up: DMatrix<f64>,
    lam_s: f64,
    lam_p: f64,
}

impl StudyTruth {
    fn covariance(&self) -> Result<SymMatrix> {
        build_covariance(&self.us, &self.up, self.lam_s, self.lam_p)
    }

    fn projector(&self) -> Result<Projector> {
        let p = self.us.nrows();
        let mut u = DMatrix::zeros(p, self.us.ncols() + self.up.ncols());
        u.columns_mut(0, self.us.ncols()).copy_from(&self.us);
        u.columns_mut(self.us.ncols(), self.up.ncols()).copy_from(&self.up);
        Projector::from_basis(u)
    }
}

/// Source shared spans relative to the target's.
enum SourceKind {
    Informative,
    Haar,
    AlternativeCenter,
}

struct FamilySpec<'a> {
    p: usize,
    r: usize,
    r_s: usize,
    h: f64,
    lambda0_p: f64,
    lambda_p: f64,
    lambda_s: f64,
    sources: Vec<SourceKind>,
    alt_center: Option<&'a DMatrix<f64>>,
}

fn generate_family<R: Rng + ?Sized>(spec: &FamilySpec<'_>, rng: &mut R) -> Result<Vec<StudyTruth>> {
    let u0s = haar_basis(spec.p, spec.r_s, rng);
    let mut shared = vec![u0s.clone()];
    for kind in &spec.sources {
        let us = match kind {
            SourceKind::Informative => perturbed_rotation(spec.p, spec.h, rng)? * &u0s,
            SourceKind::Haar => haar_basis(spec.p, spec.r_s, rng),
            SourceKind::AlternativeCenter => {
                let v0 = spec
                    .alt_center
                    .ok_or_else(|| Error::InvalidConfig("alternative center missing".into()))?;
                perturbed_rotation(spec.p, spec.h, rng)? * v0
            }
        };
        shared.push(us);
    }
    shared
        .into_iter()
        .enumerate()
        .map(|(k, us)| {
            let up = haar_in_complement(&us, spec.r - spec.r_s, rng);
            let lam_p = if k == 0 { spec.lambda0_p } else { spec.lambda_p };
            Ok(StudyTruth { us, up, lam_s: spec.lambda_s, lam_p })
        })
        .collect()
}

fn estimate_covariance<R: Rng + ?Sized>(
    truth: &StudyTruth,
    n: usize,
    dist: Distribution,
    kind: PcaKind,
    population: bool,
    rng: &mut R,
) -> Result<CovarianceEstimate> {
    let sigma = truth.covariance()?;
    if population {
        return CovarianceEstimate::external(sigma.into_inner(), n);
    }
    let data = sample_dataset(&sigma, n, dist, rng)?;
    match kind {
        PcaKind::Classical => sample_covariance(&data, false),
        PcaKind::Elliptical => kendall_tau(&data, default_max_pairs(n), rng.random()),
    }
}

fn summarize_all(covs: &[CovarianceEstimate], r: usize) -> Result<Vec<StudySummary>> {
    covs.iter()
        .enumerate()
        .map(|(k, c)| {
            let mut s = individual_pca(c, r)?;
            s.id = k.to_string();
            Ok(s)
        })
        .collect()
}

fn pooled_pca(covs: &[CovarianceEstimate], r: usize) -> Result<Projector> {
    let p = covs[0].dim();
    let mut acc = DMatrix::<f64>::zeros(p, p);
    let mut total = 0.0;
    for c in covs {
        acc += c.matrix.as_matrix() * c.n as f64;
        total += c.n as f64;
    }
    Ok(Projector::leading_eigenspace(&SymMatrix::symmetrized(acc / total), r)?.0)
}

pub const SCENARIO_METHODS: [&str; 4] = ["blind_gb", "blind_pca", "selected_gb", "individual_pca"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationValue {
    pub method: String,
    pub x: f64,
    pub replication: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ScenarioConfig,
    pub methods: Vec<MethodSummary>,
    pub failures: Vec<ReplicationFailure>,
    #[serde(skip)]
    pub values: Vec<ReplicationValue>,
}

impl ExperimentReport {
    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Long-format CSV `method,x,replication,value`.
pub fn values_csv(values: &[ReplicationValue]) -> String {
    let mut out = String::from("method,x,replication,value\n");
    for v in values {
        out.push_str(&format!("{},{:.16e},{},{:.16e}\n", v.method, v.x, v.replication, v.value));
    }
    out
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn scenario_replication(cfg: &ScenarioConfig, alt: Option<&DMatrix<f64>>, rep: usize) -> Result<[f64; 4]> {
    let mut rng = replication_rng(cfg.seed, 0, rep);
    let half = cfg.k / 2;
    let sources = (0..cfg.k)
        .map(|k| match cfg.scenario {
            Scenario::S1 => SourceKind::Informative,
            _ if k < cfg.k - half => SourceKind::Informative,
            Scenario::S2 => SourceKind::Haar,
            Scenario::S3 => SourceKind::AlternativeCenter,
        })
        .collect();
    let spec = FamilySpec {
        p: cfg.p,
        r: cfg.r,
        r_s: cfg.r_s,
        h: cfg.h,
        lambda0_p: cfg.lambda0_p,
        lambda_p: cfg.lambda_p,
        lambda_s: cfg.lambda_s,
        sources,
        alt_center: alt,
    };
    let truths = generate_family(&spec, &mut rng)?;
    let covs = truths
        .iter()
        .map(|t| estimate_covariance(t, cfg.n, cfg.distribution, cfg.pca_kind, cfg.population, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let studies = summarize_all(&covs, cfg.r)?;
    let truth = truths[0].projector()?;

    let mut tcfg = TransferConfig::new(cfg.r_s, cfg.r);
    tcfg.weighting = cfg.weighting;
    tcfg.tau = cfg.tau;
    tcfg.max_iter = cfg.max_iter;
    tcfg.variant = Variant::Kmeans;
    let blind_gb = oracle_transfer(&studies, &covs[0], &tcfg)?.combined;
    let blind_pca = pooled_pca(&covs, cfg.r)?;
    tcfg.init = Init::MultiStart { m: cfg.random_starts, seed: rng.random() };
    let selected = non_oracle_transfer(&studies[0], &covs[0], &studies[1..], &tcfg)?.combined;
    let individual = studies[0].projector.clone();
    let mut out = [0.0; 4];
    for (slot, est) in out.iter_mut().zip([&blind_gb, &blind_pca, &selected, &individual]) {
        *slot = subspace_distance(est, &truth)?.scaled;
    }
    Ok(out)
}

/// Generates target and sources per scenario for every replication and
/// records the scaled distance of the four estimators to the truth.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let alt = match cfg.scenario {
        Scenario::S3 => Some(haar_basis(cfg.p, cfg.r_s, &mut experiment_rng(cfg.seed))),
        _ => None,
    };
    let outcomes: Vec<Result<[f64; 4]>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| scenario_replication(cfg, alt.as_ref(), rep))
        .collect();

    let mut values = Vec::new();
    let mut failures = Vec::new();
    let mut per_method: Vec<Vec<f64>> = vec![Vec::new(); SCENARIO_METHODS.len()];
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(ds) => {
                for (m, d) in ds.iter().enumerate() {
                    per_method[m].push(*d);
                    values.push(ReplicationValue {
                        method: SCENARIO_METHODS[m].to_string(),
                        x: cfg.k as f64,
                        replication: rep,
                        value: *d,
                    });
                }
            }
            Err(e) => failures.push(ReplicationFailure { replication: rep, message: e.to_string() }),
        }
    }
    let methods = SCENARIO_METHODS
        .iter()
        .zip(&per_method)
        .map(|(name, v)| {
            let (mean, se) = mean_se(v);
            MethodSummary { method: name.to_string(), mean, se, count: v.len() }
        })
        .collect();
    Ok(ExperimentReport { config: cfg.clone(), methods, failures, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateTerm {
    Private,
    VarianceN,
    VarianceK,
    Bias,
    Deviation,
}

impl RateTerm {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "private" => Some(RateTerm::Private),
            "variance_n" => Some(RateTerm::VarianceN),
            "variance_k" => Some(RateTerm::VarianceK),
            "bias" => Some(RateTerm::Bias),
            "deviation" => Some(RateTerm::Deviation),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RateTerm::Private => "private",
            RateTerm::VarianceN => "variance_n",
            RateTerm::VarianceK => "variance_K",
            RateTerm::Bias => "bias",
            RateTerm::Deviation => "deviation",
        }
    }
}

/// Fixed parameters of one curve in a rate experiment; the term's grid
/// variable overrides the matching field at each point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSeries {
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub n: usize,
    pub lambda_s: f64,
    pub lambda_p: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub term: RateTerm,
    pub series: Vec<RateSeries>,
    /// Values of the varied quantity: `n`, `K`, `h`, or `lambda_p` for the
    /// private term.
    pub grid: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub r: usize,
    pub r_s: usize,
    pub weighting: Weighting,
}

impl RateConfig {
    pub fn preset(term: RateTerm) -> Self {
        let s = |p, k, n, lambda_s, lambda_p, h| RateSeries { p, k, n, lambda_s, lambda_p, h };
        let (series, grid) = match term {
            RateTerm::Private => (
                vec![s(50, 20, 100, 5.0, 0.0, 0.0), s(50, 20, 100, 6.0, 0.0, 0.0), s(50, 20, 100, 7.0, 0.0, 0.0)],
                vec![2.0, 4.0, 6.0, 8.0, 10.0],
            ),
            RateTerm::VarianceN => (
                vec![s(30, 5, 0, 4.0, 100.0, 0.0), s(40, 5, 0, 4.0, 100.0, 0.0), s(50, 5, 0, 4.0, 100.0, 0.0)],
                vec![50.0, 80.0, 110.0, 140.0, 170.0],
            ),
            RateTerm::VarianceK => (
                vec![s(35, 0, 150, 2.0, 50.0, 0.0), s(40, 0, 150, 2.0, 50.0, 0.0), s(45, 0, 150, 2.0, 50.0, 0.0)],
                vec![5.0, 7.0, 9.0, 11.0, 13.0],
            ),
            RateTerm::Bias => (
                vec![s(15, 10, 0, 2.0, 1000.0, 0.0), s(25, 20, 0, 2.0, 1000.0, 0.0), s(35, 30, 0, 2.0, 1000.0, 0.0)],
                vec![35.0, 40.0, 45.0, 50.0],
            ),
            RateTerm::Deviation => (
                vec![s(15, 10, 150, 50.0, 100.0, 0.0), s(20, 10, 200, 50.0, 100.0, 0.0), s(25, 10, 250, 50.0, 100.0, 0.0)],
                vec![0.1, 0.12, 0.14, 0.16, 0.18, 0.2],
            ),
        };
        RateConfig { term, series, grid, replications: 50, seed: 0, r: 4, r_s: 2, weighting: Weighting::RawN }
    }

    /// The series parameters at grid value `x`.
    fn point(&self, series: &RateSeries, x: f64) -> Result<RateSeries> {
        let mut s = series.clone();
        let as_count = |x: f64| -> Result<usize> {
            if x >= 1.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(Error::InvalidConfig(format!("grid value {x} is not a positive integer")))
            }
        };
        match self.term {
            RateTerm::Private => s.lambda_p = x,
            RateTerm::VarianceN | RateTerm::Bias => s.n = as_count(x)?,
            RateTerm::VarianceK => s.k = as_count(x)?,
            RateTerm::Deviation => s.h = x,
        }
        Ok(s)
    }

    /// The abscissa of the log-log fit: `lambda_p - 1` for the private term.
    fn abscissa(&self, x: f64) -> f64 {
        match self.term {
            RateTerm::Private => x - 1.0,
            _ => x,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.series.is_empty() || self.grid.len() < 2 || self.replications == 0 {
            return Err(Error::InvalidConfig("need a series, two grid points and one replication".into()));
        }
        if self.r_s == 0 || self.r_s > self.r {
            return Err(Error::InvalidConfig("need 1 <= r_s <= r".into()));
        }
        for series in &self.series {
            for &x in &self.grid {
                let s = self.point(series, x)?;
                if s.n < 2 || s.k == 0 || s.p < self.r || !(s.lambda_p >= 1.0) || !(s.lambda_s >= 1.0) || !(s.h >= 0.0)
                {
                    return Err(Error::InvalidConfig(format!("invalid rate point {s:?}")));
                }
            }
            if self.grid.iter().any(|&x| self.abscissa(x) <= 0.0) {
                return Err(Error::InvalidConfig("grid abscissae must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub x: f64,
    pub mean: f64,
    pub se: f64,
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSeriesResult {
    pub label: String,
    pub points: Vec<RatePoint>,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub config: RateConfig,
    pub series: Vec<RateSeriesResult>,
    pub failures: Vec<ReplicationFailure>,
    #[serde(skip)]
    pub values: Vec<ReplicationValue>,
}

/// Ordinary least squares of `y` on `x`: `(slope, intercept)`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn series_label(term: RateTerm, s: &RateSeries) -> String {
    match term {
        RateTerm::Private => format!("lambda_s={}", s.lambda_s),
        RateTerm::VarianceN | RateTerm::VarianceK => format!("p={}", s.p),
        RateTerm::Bias => format!("p={},K={}", s.p, s.k),
        RateTerm::Deviation => format!("p={},n={}", s.p, s.n),
    }
}

/// `(||P_hat - P*||_F, ||P_tilde - P*||_F)` for one replication of the oracle
/// procedure on an all-informative family.
fn rate_replication(cfg: &RateConfig, s: &RateSeries, grid: usize, rep: usize) -> Result<(f64, f64)> {
    let mut rng = replication_rng(cfg.seed, grid, rep);
    let spec = FamilySpec {
        p: s.p,
        r: cfg.r,
        r_s: cfg.r_s,
        h: s.h,
        lambda0_p: s.lambda_p,
        lambda_p: s.lambda_p,
        lambda_s: s.lambda_s,
        sources: (0..s.k).map(|_| SourceKind::Informative).collect(),
        alt_center: None,
    };
    let truths = generate_family(&spec, &mut rng)?;
    let covs = truths
        .iter()
        .map(|t| estimate_covariance(t, s.n, Distribution::Gaussian, PcaKind::Classical, false, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let studies = summarize_all(&covs, cfg.r)?;
    let mut tcfg = TransferConfig::new(cfg.r_s, cfg.r);
    tcfg.weighting = cfg.weighting;
    let est = oracle_transfer(&studies, &covs[0], &tcfg)?.combined;
    let truth = truths[0].projector()?;
    Ok((
        subspace_distance(&est, &truth)?.frobenius,
        subspace_distance(&studies[0].projector, &truth)?.frobenius,
    ))
}

/// Mean error (error ratio for the private term) over the grid of each
/// series and the OLS slope of `log(mean)` on `log(x)`.
pub fn run_rate_experiment(cfg: &RateConfig) -> Result<RateReport> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.series.len())
        .flat_map(|si| (0..cfg.grid.len()).flat_map(move |gi| (0..cfg.replications).map(move |r| (si, gi, r))))
        .collect();
    let outcomes: Vec<Result<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(si, gi, rep)| {
            let s = cfg.point(&cfg.series[si], cfg.grid[gi])?;
            rate_replication(cfg, &s, si * cfg.grid.len() + gi, rep)
        })
        .collect();

    let mut values = Vec::new();
    let mut failures = Vec::new();
    let mut series_out = Vec::new();
    let mut it = jobs.iter().zip(outcomes);
    for (si, series) in cfg.series.iter().enumerate() {
        let label = series_label(cfg.term, &cfg.point(series, cfg.grid[0])?);
        let mut points = Vec::new();
        for (gi, &x) in cfg.grid.iter().enumerate() {
            let mut kept = Vec::new();
            let mut dropped = 0;
            for _ in 0..cfg.replications {
                let (&(_, _, rep), outcome) = it.next().expect("one outcome per job");
                let grid_idx = si * cfg.grid.len() + gi;
                match outcome {
                    Ok((e_hat, e_tilde)) => {
                        let value = match cfg.term {
                            RateTerm::Private => {
                                let denom = e_tilde - e_hat;
                                if denom < RATIO_DENOM_MIN {
                                    dropped += 1;
                                    continue;
                                }
                                e_hat / denom
                            }
                            _ => e_hat,
                        };
                        kept.push(value);
                        values.push(ReplicationValue {
                            method: label.clone(),
                            x: cfg.abscissa(x),
                            replication: rep,
                            value,
                        });
                    }
                    Err(e) => failures.push(ReplicationFailure {
                        replication: (grid_idx << 32) | rep,
                        message: e.to_string(),
                    }),
                }
            }
            let (mean, se) = mean_se(&kept);
            points.push(RatePoint { x: cfg.abscissa(x), mean, se, kept: kept.len(), dropped });
        }
        for pt in &points {
            if !(pt.mean > 0.0) {
                return Err(Error::NonPositiveError { x: pt.x, value: pt.mean });
            }
        }
        let lx: Vec<f64> = points.iter().map(|p| p.x.ln()).collect();
        let ly: Vec<f64> = points.iter().map(|p| p.mean.ln()).collect();
        let (slope, intercept) = ols(&lx, &ly);
        series_out.push(RateSeriesResult { label, points, slope, intercept });
    }
    Ok(RateReport { config: cfg.clone(), series: series_out, failures, values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalityConfig {
    pub n0: usize,
    pub p: usize,
    pub r0: usize,
    pub r_s: usize,
    pub lambda_p: f64,
    pub lambda_s: f64,
    /// Scale of the GOE perturbation of the shared projector.
    pub s: f64,
    pub distribution: Distribution,
    /// Fourth moment of the innovations; defaults to 3 for Gaussian data.
    pub nu4: Option<f64>,
    pub replications: usize,
    pub seed: u64,
    /// Drawn uniformly from the sphere when absent.
    pub u: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
}

impl Default for NormalityConfig {
    fn default() -> Self {
        NormalityConfig {
            n0: 100,
            p: 50,
            r0: 4,
            r_s: 2,
            lambda_p: 10.0,
            lambda_s: 2.0,
            s: 0.05,
            distribution: Distribution::Gaussian,
            nu4: None,
            replications: 2000,
            seed: 0,
            u: None,
            v: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalityReport {
    pub config: NormalityConfig,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub sigma0: f64,
    pub sigma_p: f64,
    pub ks_tilde: f64,
    pub ks_hat: f64,
    pub mean_tilde: f64,
    pub mean_hat: f64,
    pub var_tilde: f64,
    pub var_hat: f64,
    #[serde(skip)]
    pub z_tilde: Vec<f64>,
    #[serde(skip)]
    pub z_hat: Vec<f64>,
}

impl NormalityReport {
    pub fn values(&self) -> Vec<ReplicationValue> {
        let mut out = Vec::with_capacity(2 * self.z_hat.len());
        for (name, zs) in [("z_tilde", &self.z_tilde), ("z_hat", &self.z_hat)] {
            out.extend(zs.iter().enumerate().map(|(rep, &value)| ReplicationValue {
                method: name.to_string(),
                x: self.config.n0 as f64,
                replication: rep,
                value,
            }));
        }
        out
    }
}

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against `N(0, 1)`.
pub fn ks_standard_normal(samples: &[f64]) -> f64 {
    let normal = NormalDist::standard();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

fn unit_vector<R: Rng + ?Sized>(given: &Option<Vec<f64>>, p: usize, rng: &mut R) -> Result<DVector<f64>> {
    match given {
        Some(v) if v.len() != p => Err(Error::DimensionMismatch(format!("vector of length {} for p = {p}", v.len()))),
        Some(v) => {
            let v = DVector::from_column_slice(v);
            let norm = v.norm();
            if !(norm > 0.0) {
                return Err(Error::InvalidConfig("u and v must be non-zero".into()));
            }
            Ok(v / norm)
        }
        None => Ok(haar_basis(p, 1, rng).column(0).into_owned()),
    }
}

fn columns(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

/// Standardized bilinear forms of the target projector before (individual
/// PCA) and after (fine-tuning a GOE-perturbed shared projector) transfer,
/// with their Kolmogorov-Smirnov distances to `N(0, 1)`.
pub fn run_normality_experiment(cfg: &NormalityConfig) -> Result<NormalityReport> {
    if cfg.r_s == 0 || cfg.r_s >= cfg.r0 || cfg.r0 >= cfg.p || cfg.n0 < 2 || cfg.replications < 2 {
        return Err(Error::InvalidConfig(
            "need 1 <= r_s < r0 < p, n0 >= 2 and at least two replications".into(),
        ));
    }
    if !(cfg.lambda_p > 1.0 && cfg.lambda_s > 1.0 && cfg.s >= 0.0) {
        return Err(Error::InvalidConfig("need lambda_p, lambda_s > 1 and s >= 0".into()));
    }
    let nu4 = match (cfg.nu4, cfg.distribution) {
        (Some(v), _) => v,
        (None, Distribution::Gaussian) => 3.0,
        (None, Distribution::StudentT(_)) => {
            return Err(Error::InvalidConfig("nu4 must be supplied for t data".into()));
        }
    };

    let mut rng = experiment_rng(cfg.seed);
    let us = haar_basis(cfg.p, cfg.r_s, &mut rng);
    let up = haar_in_complement(&us, cfg.r0 - cfg.r_s, &mut rng);
    let truth = StudyTruth { us: us.clone(), up: up.clone(), lam_s: cfg.lambda_s, lam_p: cfg.lambda_p };
    let sigma = truth.covariance()?;
    let p_star = truth.projector()?;
    let p_shared = Projector::from_basis(us.clone())?;
    let tail = linalg::orthogonal_complement(&p_star.orthonormal_basis());
    let u = unit_vector(&cfg.u, cfg.p, &mut rng)?;
    let v = unit_vector(&cfg.v, cfg.p, &mut rng)?;

    let tail_pairs: Vec<(f64, DVector<f64>)> = columns(&tail).into_iter().map(|c| (1.0, c)).collect();
    let mut leading: Vec<(f64, DVector<f64>)> = columns(&up).into_iter().map(|c| (cfg.lambda_p, c)).collect();
    leading.extend(columns(&us).into_iter().map(|c| (cfg.lambda_s, c)));
    let sigma0_sq = bilinear_variance(&BilinearSpec {
        u: u.clone(),
        v: v.clone(),
        private_pairs: leading,
        tail_pairs: tail_pairs.clone(),
        nu4,
    })?;
    let sigma_p_sq = bilinear_variance(&BilinearSpec {
        u: u.clone(),
        v: v.clone(),
        private_pairs: columns(&up).into_iter().map(|c| (cfg.lambda_p, c)).collect(),
        tail_pairs,
        nu4,
    })?;
    if !(sigma_p_sq > 0.0 && sigma0_sq > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let (sigma0, sigma_p) = (sigma0_sq.sqrt(), sigma_p_sq.sqrt());
    let bilinear = |m: &DMatrix<f64>| (u.transpose() * (m - p_star.matrix()) * &v)[(0, 0)];
    let root_n = (cfg.n0 as f64).sqrt();

    let pairs: Vec<(f64, f64)> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| -> Result<(f64, f64)> {
            let mut rng = replication_rng(cfg.seed, 0, rep);
            let data = sample_dataset(&sigma, cfg.n0, cfg.distribution, &mut rng)?;
            let cov = sample_covariance(&data, false)?;
            let tilde = Projector::leading_eigenspace(&cov.matrix, cfg.r0)?.0;
            let g = goe_matrix(cfg.p, &mut rng);
            let perturbed = SymMatrix::symmetrized(p_shared.matrix() + g.as_matrix() * cfg.s);
            let shared_hat = Projector::leading_eigenspace(&perturbed, cfg.r_s)?.0;
            let private_hat = fine_tune(&shared_hat, &cov, cfg.r0 - cfg.r_s)?;
            let hat = shared_hat.matrix() + private_hat.matrix();
            Ok((root_n * bilinear(tilde.matrix()) / sigma0, root_n * bilinear(&hat) / sigma_p))
        })
        .collect::<Result<Vec<_>>>()?;
    let (z_tilde, z_hat): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let moments = |z: &[f64]| {
        let (mean, se) = mean_se(z);
        (mean, se * se * z.len() as f64)
    };
    let (mean_tilde, var_tilde) = moments(&z_tilde);
    let (mean_hat, var_hat) = moments(&z_hat);
    Ok(NormalityReport {
        config: cfg.clone(),
        u: u.iter().copied().collect(),
        v: v.iter().copied().collect(),
        sigma0,
        sigma_p,
        ks_tilde: ks_standard_normal(&z_tilde),
        ks_hat: ks_standard_normal(&z_hat),
        mean_tilde,
        mean_hat,
        var_tilde,
        var_hat,
        z_tilde,
        z_hat,
    })
}
