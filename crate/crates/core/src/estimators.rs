//! Covariance-like matrices from raw observations and per-study effective
//! sample sizes.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grassmann::Projector;
use crate::linalg::{self, SymMatrix};

/// Above this many observations, [`default_max_pairs`] subsamples pairs for
/// the spatial Kendall's tau estimator.
pub const KENDALL_EXHAUSTIVE_LIMIT: usize = 2000;
const DEGENERATE_PAIR_NORM: f64 = 1e-12;
const PAIR_CHUNK: usize = 4096;
const PSD_TOL: f64 = 1e-8;

/// `n x p` observations, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: DMatrix<f64>,
}

impl Dataset {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::Empty("dataset"));
        }
        if let Some(pos) = rows.iter().position(|v| !v.is_finite()) {
            let n = rows.nrows();
            return Err(Error::InvalidData(format!(
                "non-finite value at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        Ok(Dataset { rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map(Vec::len).unwrap_or(0);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} columns, expected {p}",
                r.len()
            )));
        }
        Dataset::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn p(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Dataset::new(&self.rows * c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Classical,
    KendallTau,
    External,
}

/// A symmetric PSD covariance-like matrix with its provenance.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub matrix: SymMatrix,
    pub n: usize,
    pub kind: CovarianceKind,
    pub centered: bool,
    /// Pairs skipped by the Kendall estimator because the two observations
    /// coincided.
    pub skipped_pairs: usize,
}

impl CovarianceEstimate {
    /// Wraps a caller-supplied matrix (population covariance, a matrix read
    /// from disk, ...). Rejects matrices with eigenvalues below `-1e-8`.
    pub fn external(matrix: DMatrix<f64>, n: usize) -> Result<Self> {
        let matrix = SymMatrix::new(matrix)?;
        let min = linalg::sym_eigen(&matrix).values.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL * (1.0 + matrix.as_matrix().amax()) {
            return Err(Error::InvalidData(format!(
                "covariance is not positive semidefinite (min eigenvalue {min:e})"
            )));
        }
        Ok(CovarianceEstimate {
            matrix,
            n,
            kind: CovarianceKind::External,
            centered: false,
            skipped_pairs: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Effective-sample-size mode matching the estimator.
    pub fn ess_mode(&self) -> EssMode {
        match self.kind {
            CovarianceKind::KendallTau => EssMode::Elliptical,
            _ => EssMode::Classical,
        }
    }
}

/// `(1/n) sum_i x_i x_i^T`, optionally after subtracting the sample mean.
pub fn sample_covariance(data: &Dataset, center: bool) -> Result<CovarianceEstimate> {
    let n = data.n();
    if center && n < 2 {
        return Err(Error::InvalidData("centering needs at least two observations".into()));
    }
    let mut x = data.rows().clone();
    if center {
        let mean = x.row_mean();
        for mut row in x.row_iter_mut() {
            row -= &mean;
        }
    }
    let cov = x.transpose() * &x / n as f64;
    Ok(CovarianceEstimate {
        matrix: SymMatrix::symmetrized(cov),
        n,
        kind: CovarianceKind::Classical,
        centered: center,
        skipped_pairs: 0,
    })
}

/// Pair budget used by callers that do not pick one: exhaustive up to
/// [`KENDALL_EXHAUSTIVE_LIMIT`] observations, otherwise as many pairs as the
/// exhaustive estimator would use at that limit.
pub fn default_max_pairs(n: usize) -> Option<usize> {
    if n > KENDALL_EXHAUSTIVE_LIMIT {
        Some(KENDALL_EXHAUSTIVE_LIMIT * (KENDALL_EXHAUSTIVE_LIMIT - 1) / 2)
    } else {
        None
    }
}

/// Index `k` of the lexicographic enumeration of pairs `i < j` among `n`.
fn pair_from_index(k: usize, n: usize) -> (usize, usize) {
    // Row i holds n - 1 - i pairs; walk rows with a closed-form start.
    let mut i = {
        let nf = n as f64;
        let kf = k as f64;
        let disc = (2.0 * nf - 1.0).powi(2) - 8.0 * kf;
        (((2.0 * nf - 1.0) - disc.max(0.0).sqrt()) / 2.0).floor() as usize
    };
    let start = |i: usize| i * (2 * n - i - 1) / 2;
    while i > 0 && start(i) > k {
        i -= 1;
    }
    while start(i + 1) <= k {
        i += 1;
    }
    (i, i + 1 + (k - start(i)))
}

/// Sample spatial Kendall's tau matrix:
/// the average of `(x_i - x_j)(x_i - x_j)^T / ||x_i - x_j||^2` over pairs.
///
/// Uses all `n(n-1)/2` pairs unless `max_pairs` is smaller, in which case a
/// seeded uniform subsample (without replacement, visited in enumeration
/// order) is used. Coincident pairs are skipped and counted.
pub fn kendall_tau(data: &Dataset, max_pairs: Option<usize>, seed: u64) -> Result<CovarianceEstimate> {
    let n = data.n();
    let p = data.p();
    if n < 2 {
        return Err(Error::InvalidData("Kendall's tau needs at least two observations".into()));
    }
    let total = n * (n - 1) / 2;
    let indices: Vec<usize> = match max_pairs {
        Some(0) => {
            return Err(Error::InvalidConfig("max_pairs must be positive".into()));
        }
        Some(m) if m < total => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, total, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..total).collect(),
    };

    let x = data.rows();
    let partials: Vec<(DMatrix<f64>, usize, usize)> = indices
        .par_chunks(PAIR_CHUNK)
        .map(|chunk| {
            let mut acc = DMatrix::<f64>::zeros(p, p);
            let mut diff = vec![0.0; p];
            let mut used = 0usize;
            let mut skipped = 0usize;
            for &k in chunk {
                let (i, j) = pair_from_index(k, n);
                let mut sq = 0.0;
                for c in 0..p {
                    let d = x[(i, c)] - x[(j, c)];
                    diff[c] = d;
                    sq += d * d;
                }
                if sq.sqrt() < DEGENERATE_PAIR_NORM {
                    skipped += 1;
                    continue;
                }
                used += 1;
                let inv = 1.0 / sq;
                for b in 0..p {
                    let db = diff[b] * inv;
                    if db == 0.0 {
                        continue;
                    }
                    for a in b..p {
                        acc[(a, b)] += diff[a] * db;
                    }
                }
            }
            (acc, used, skipped)
        })
        .collect();

    // Fixed chunking and in-order reduction make the result independent of
    // the thread count.
    let mut acc = DMatrix::<f64>::zeros(p, p);
    let mut used = 0;
    let mut skipped = 0;
    for (m, u, s) in partials {
        acc += m;
        used += u;
        skipped += s;
    }
    if used == 0 {
        return Err(Error::DegeneratePairs(skipped));
    }
    for b in 0..p {
        for a in b + 1..p {
            acc[(b, a)] = acc[(a, b)];
        }
    }
    acc /= used as f64;
    Ok(CovarianceEstimate {
        matrix: SymMatrix::symmetrized(acc),
        n,
        kind: CovarianceKind::KendallTau,
        centered: false,
        skipped_pairs: skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EssMode {
    Classical,
    Elliptical,
}

/// Effective sample size and the quantities it is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveSampleSize {
    pub n_eff: f64,
    /// Condition number `lambda_1 / d_r`.
    pub kappa: f64,
    /// Effective rank `tr / lambda_1`.
    pub effective_rank: f64,
    /// `d_r = lambda_r - lambda_{r+1}` (with `lambda_{p+1} = 0`).
    pub gap: f64,
}

/// Classical: `n / (kappa^2 r e)`. Elliptical: `n / (kappa^2 r e^2 log p)`.
pub fn effective_sample_size(
    eigenvalues: &[f64],
    n: usize,
    r: usize,
    mode: EssMode,
    p: usize,
) -> Result<EffectiveSampleSize> {
    if eigenvalues.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{} eigenvalues for dimension {p}",
            eigenvalues.len()
        )));
    }
    if r == 0 || r > p {
        return Err(Error::InvalidRank(format!("rank {r} outside 1..={p}")));
    }
    if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::InvalidData("eigenvalues must be non-increasing".into()));
    }
    let lambda1 = eigenvalues[0];
    if !(lambda1 > 0.0) {
        return Err(Error::InvalidData("leading eigenvalue must be positive".into()));
    }
    let next = if r < p { eigenvalues[r] } else { 0.0 };
    let gap = eigenvalues[r - 1] - next;
    if !(gap > 0.0) {
        return Err(Error::ZeroGap(r));
    }
    ess_formula(n, r, mode, p, lambda1, gap, eigenvalues.iter().sum())
}

/// The effective-sample-size formula from its ingredients, without
/// validating the spectrum.
pub(crate) fn ess_formula(
    n: usize,
    r: usize,
    mode: EssMode,
    p: usize,
    lambda1: f64,
    gap: f64,
    trace: f64,
) -> Result<EffectiveSampleSize> {
    let kappa = lambda1 / gap;
    let effective_rank = trace / lambda1;
    let denom = match mode {
        EssMode::Classical => kappa * kappa * r as f64 * effective_rank,
        EssMode::Elliptical => {
            if p < 2 {
                return Err(Error::InvalidData("elliptical mode needs p >= 2".into()));
            }
            kappa * kappa * r as f64 * effective_rank * effective_rank * (p as f64).ln()
        }
    };
    Ok(EffectiveSampleSize { n_eff: n as f64 / denom, kappa, effective_rank, gap })
}

/// One study's subspace estimate: the unit exchanged between machines.
#[derive(Debug, Clone)]
pub struct StudySummary {
    pub id: String,
    pub projector: Projector,
    pub n: usize,
    pub n_eff: f64,
    /// The leading eigenvectors were not separated by a positive gap.
    pub degenerate_gap: bool,
}

impl StudySummary {
    pub fn new(id: impl Into<String>, projector: Projector, n: usize, n_eff: f64) -> Result<Self> {
        if !(n_eff.is_finite() && n_eff > 0.0) {
            return Err(Error::InvalidWeight(n_eff));
        }
        if let Some(msg) = projector.invariant_violation() {
            return Err(Error::InvalidProjector(msg));
        }
        Ok(StudySummary { id: id.into(), projector, n, n_eff, degenerate_gap: false })
    }

    pub fn dim(&self) -> usize {
        self.projector.dim()
    }

    pub fn rank(&self) -> usize {
        self.projector.rank()
    }
}
