//! Points of the Grassmann manifold `G(p, r)` represented as rank-`r`
//! orthogonal projectors, plus the barycenter and the two manifold update
//! steps used when maximizing `tr(Pbar P)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, LinalgError, SymMatrix};

const ORTHONORMAL_TOL: f64 = 1e-8;
const IDEMPOTENT_TOL: f64 = 1e-8;
const TRACE_TOL: f64 = 1e-6;
/// Barycenter gaps below this are flagged.
pub const BARYCENTER_GAP_WARN: f64 = 1e-8;

/// Rank-`r` orthogonal projector in `R^{p x p}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    matrix: DMatrix<f64>,
    rank: usize,
    basis: Option<DMatrix<f64>>,
}

impl Projector {
    /// `U U^T` for a column-orthonormal `U`; the basis is retained.
    pub fn from_basis(u: DMatrix<f64>) -> Result<Self> {
        let err = if u.ncols() == 0 { 0.0 } else { linalg::orthonormality_error(&u) };
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::NotOrthonormal(err));
        }
        let matrix = &u * u.transpose();
        Ok(Projector { rank: u.ncols(), matrix, basis: Some(u) })
    }

    /// Wraps a full matrix after checking symmetry, idempotence and trace.
    pub fn from_matrix(m: DMatrix<f64>, rank: usize) -> Result<Self> {
        let sym = SymMatrix::new(m)?;
        let p = Projector { matrix: sym.into_inner(), rank, basis: None };
        if let Some(msg) = p.invariant_violation() {
            return Err(Error::InvalidProjector(msg));
        }
        Ok(p)
    }

    /// The rank-0 projector.
    pub fn zero(p: usize) -> Self {
        Projector { matrix: DMatrix::zeros(p, p), rank: 0, basis: Some(DMatrix::zeros(p, 0)) }
    }

    /// Projector onto the span of the leading `r` eigenvectors of `a`.
    pub fn leading_eigenspace(a: &SymMatrix, r: usize) -> Result<(Self, linalg::EigPairs)> {
        let eig = linalg::top_r_eig(a, r)?;
        let proj = Projector::from_basis(eig.vectors.clone())?;
        Ok((proj, eig))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn basis(&self) -> Option<&DMatrix<f64>> {
        self.basis.as_ref()
    }

    /// An orthonormal basis of the range; recomputed from the matrix when
    /// none was stored.
    pub fn orthonormal_basis(&self) -> DMatrix<f64> {
        match &self.basis {
            Some(b) => b.clone(),
            None if self.rank == 0 => DMatrix::zeros(self.dim(), 0),
            None => {
                let eig = linalg::sym_eigen(&SymMatrix::symmetrized(self.matrix.clone()));
                eig.vectors.columns(0, self.rank).into_owned()
            }
        }
    }

    /// Orthonormal basis of the orthogonal complement of the range.
    pub fn complement_basis(&self) -> DMatrix<f64> {
        linalg::orthogonal_complement(&self.orthonormal_basis())
    }

    /// `I - P` as a matrix.
    pub fn complement_matrix(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim()) - &self.matrix
    }

    /// `tr(P Q)` for symmetric `P`, `Q`.
    pub fn trace_with(&self, other: &DMatrix<f64>) -> f64 {
        self.matrix.dot(other)
    }

    pub fn as_sym(&self) -> SymMatrix {
        SymMatrix::symmetrized(self.matrix.clone())
    }

    /// `None` when all projector invariants hold, otherwise a description.
    pub fn invariant_violation(&self) -> Option<String> {
        let m = &self.matrix;
        let asym = (m - m.transpose()).amax();
        if asym > 1e-10 * (1.0 + m.amax()) {
            return Some(format!("asymmetry {asym:e}"));
        }
        let idem = (m * m - m).norm();
        if idem > IDEMPOTENT_TOL {
            return Some(format!("||P^2 - P||_F = {idem:e}"));
        }
        let tr = m.trace();
        if (tr - self.rank as f64).abs() > TRACE_TOL {
            return Some(format!("trace {tr} differs from rank {}", self.rank));
        }
        if let Some(b) = &self.basis {
            let diff = (b * b.transpose() - m).amax();
            if diff > 1e-8 {
                return Some(format!("basis does not reproduce matrix ({diff:e})"));
            }
        }
        None
    }

    /// Rotates by an orthogonal `q`: returns `Q P Q^T`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> Result<Self> {
        Projector::from_basis(q * self.orthonormal_basis())
    }
}

/// Frobenius and scaled projection distances between two subspaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceDistance {
    pub frobenius: f64,
    /// `||P - Q||_F / sqrt(2 r)`, in `[0, 1]`.
    pub scaled: f64,
}

pub fn frobenius_distance(p: &Projector, q: &Projector) -> Result<f64> {
    check_dims(p, q)?;
    Ok((p.matrix() - q.matrix()).norm())
}

/// Frobenius distance and the scaled projection metric; both projectors must
/// have the same rank.
pub fn subspace_distance(p: &Projector, q: &Projector) -> Result<SubspaceDistance> {
    check_dims(p, q)?;
    if p.rank() != q.rank() {
        return Err(Error::RankMismatch(p.rank(), q.rank()));
    }
    if p.rank() == 0 {
        return Err(Error::InvalidRank("scaled distance needs rank >= 1".into()));
    }
    let frobenius = (p.matrix() - q.matrix()).norm();
    let scaled = (frobenius / (2.0 * p.rank() as f64).sqrt()).min(1.0);
    Ok(SubspaceDistance { frobenius, scaled })
}

/// The same metric through the trace form `(1 - tr(PQ)/r)^{1/2}`.
pub fn scaled_distance_trace_form(p: &Projector, q: &Projector) -> Result<f64> {
    check_dims(p, q)?;
    if p.rank() != q.rank() || p.rank() == 0 {
        return Err(Error::RankMismatch(p.rank(), q.rank()));
    }
    let t = p.trace_with(q.matrix()) / p.rank() as f64;
    Ok((1.0 - t).max(0.0).sqrt())
}

fn check_dims(p: &Projector, q: &Projector) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", p.dim(), q.dim())));
    }
    Ok(())
}

/// Projectors with positive weights over a common ambient dimension.
#[derive(Debug, Clone)]
pub struct WeightedProjectorSet {
    items: Vec<(Projector, f64)>,
}

impl WeightedProjectorSet {
    pub fn new(items: Vec<(Projector, f64)>) -> Result<Self> {
        if let Some((first, _)) = items.first() {
            let p = first.dim();
            for (proj, w) in &items {
                if proj.dim() != p {
                    return Err(Error::DimensionMismatch(format!("{} vs {p}", proj.dim())));
                }
                if !(w.is_finite() && *w > 0.0) {
                    return Err(Error::InvalidWeight(*w));
                }
            }
        }
        Ok(WeightedProjectorSet { items })
    }

    pub fn items(&self) -> &[(Projector, f64)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.items.first().map(|(p, _)| p.dim())
    }

    pub fn total_weight(&self) -> f64 {
        self.items.iter().map(|(_, w)| w).sum()
    }

    /// `sum_k w_k P_k / sum_k w_k`.
    pub fn weighted_average(&self) -> Result<SymMatrix> {
        let p = self.dim().ok_or(Error::Empty("projector set"))?;
        let mut acc = DMatrix::<f64>::zeros(p, p);
        for (proj, w) in &self.items {
            acc += proj.matrix() * *w;
        }
        acc /= self.total_weight();
        Ok(SymMatrix::symmetrized(acc))
    }
}

/// Output of [`barycenter`].
#[derive(Debug, Clone)]
pub struct Barycenter {
    pub projector: Projector,
    /// `r_s`-th eigenvalue gap of the averaged projector.
    pub gap: f64,
    pub degenerate: bool,
    /// `sum_k w_k tr(P_k P) / sum_k w_k` at the returned `P`.
    pub objective: f64,
}

/// Grassmannian barycenter: projector onto the leading `r_s` eigenvectors of
/// the weighted average projector, which maximizes `sum_k w_k tr(P_k P)`
/// over `G(p, r_s)`.
pub fn barycenter(set: &WeightedProjectorSet, r_s: usize) -> Result<Barycenter> {
    if set.is_empty() {
        return Err(Error::Empty("projector set"));
    }
    let min_rank = set.items().iter().map(|(p, _)| p.rank()).min().unwrap_or(0);
    if r_s == 0 || r_s > min_rank {
        return Err(Error::InvalidRank(format!(
            "shared rank {r_s} must lie in 1..={min_rank}"
        )));
    }
    let avg = set.weighted_average()?;
    let (projector, eig) = Projector::leading_eigenspace(&avg, r_s)?;
    Ok(Barycenter {
        projector,
        gap: eig.gap,
        degenerate: eig.gap < BARYCENTER_GAP_WARN,
        objective: eig.values.sum(),
    })
}

/// Lie bracket `[A, B] = AB - BA`.
pub fn lie_bracket(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a * b - b * a
}

/// Riemannian ascent direction of `P -> tr(Pbar P)`: `[P, [P, Pbar]]`.
pub fn ascent_direction(p: &Projector, pbar: &SymMatrix) -> Result<DMatrix<f64>> {
    if p.dim() != pbar.dim() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", p.dim(), pbar.dim())));
    }
    let inner = lie_bracket(p.matrix(), pbar.as_matrix());
    Ok(lie_bracket(p.matrix(), &inner))
}

/// One gradient ascent step `P + alpha [P, [P, Pbar]]`, retracted onto
/// `G(p, r)` through the leading `r` eigenvectors.
pub fn gradient_step(p: &Projector, pbar: &SymMatrix, alpha: f64) -> Result<Projector> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidConfig(format!("step size must be positive, got {alpha}")));
    }
    let x = ascent_direction(p, pbar)?;
    if p.rank() == 0 {
        return Ok(p.clone());
    }
    if x.amax() == 0.0 {
        return Ok(p.clone());
    }
    let moved = SymMatrix::symmetrized(p.matrix() + x * alpha);
    let (next, _) = Projector::leading_eigenspace(&moved, p.rank())?;
    Ok(next)
}

/// `lambda_min(U1^T Pbar U1) - lambda_max(U2^T Pbar U2)` for `P = U1 U1^T`.
/// Positive exactly where the Hessian of `P -> tr(Pbar P)` is negative
/// definite, i.e. near the leading eigenspace of `Pbar`.
pub fn ritz_separation(p: &Projector, pbar: &SymMatrix) -> Result<f64> {
    let dim = p.dim();
    let r = p.rank();
    if dim != pbar.dim() {
        return Err(Error::DimensionMismatch(format!("{dim} vs {}", pbar.dim())));
    }
    if r == 0 || r == dim {
        return Ok(f64::INFINITY);
    }
    let u1 = p.orthonormal_basis();
    let u2 = linalg::orthogonal_complement(&u1);
    let m = pbar.as_matrix();
    let inner = linalg::sym_eigen(&SymMatrix::symmetrized(u1.transpose() * m * &u1));
    let outer = linalg::sym_eigen(&SymMatrix::symmetrized(u2.transpose() * m * &u2));
    Ok(inner.values[r - 1] - outer.values[0])
}

/// One Newton step for `P -> tr(Pbar P)`.
///
/// With `P = U1 U1^T` and `U2` spanning the complement, solves
/// `Z Pbar22 - Pbar11 Z = Pbar12`, QR-factorizes `[[I, 0], [-Z^T, I]]` and
/// maps the first `r` columns of `Q` back through `(U1 | U2)`.
pub fn newton_step(p: &Projector, pbar: &SymMatrix) -> Result<Projector> {
    let dim = p.dim();
    let r = p.rank();
    if dim != pbar.dim() {
        return Err(Error::DimensionMismatch(format!("{dim} vs {}", pbar.dim())));
    }
    if r == 0 || r == dim {
        return Ok(p.clone());
    }
    let u1 = p.orthonormal_basis();
    let u2 = linalg::orthogonal_complement(&u1);
    let m = pbar.as_matrix();
    let p11 = u1.transpose() * m * &u1;
    let p22 = u2.transpose() * m * &u2;
    let p12 = u1.transpose() * m * &u2;

    let z = linalg::solve_sylvester(&p11, &p22, &p12).map_err(|e| match e {
        LinalgError::SingularSylvester { separation } => Error::SingularNewton { separation },
        other => Error::Linalg(other),
    })?;

    let mut lower = DMatrix::identity(dim, dim);
    lower.view_mut((r, 0), (dim - r, r)).copy_from(&(-z.transpose()));
    let q = lower.qr().q();

    let mut frame = DMatrix::zeros(dim, dim);
    frame.columns_mut(0, r).copy_from(&u1);
    frame.columns_mut(r, dim - r).copy_from(&u2);
    let basis = frame * q.columns(0, r);
    // Re-orthonormalize to absorb rounding in the frame product.
    let basis = linalg::gram_schmidt(&basis)
        .ok_or_else(|| Error::InvalidProjector("Newton update lost rank".into()))?;
    Projector::from_basis(basis)
}
