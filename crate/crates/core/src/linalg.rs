//! Dense symmetric linear algebra: leading eigenpairs and the Sylvester solve
//! used by the Grassmannian Newton step.
//!
//! The symmetric eigensolver is nalgebra's implicit QR on the tridiagonal
//! form; everything here wraps it with the ordering, sign and gap
//! conventions the rest of the crate relies on.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Gaps below this are reported as degenerate by [`top_r_eig`].
pub const DEGENERATE_GAP: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-10;
const SIGN_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("requested rank {r} is outside 1..={p}")]
    RankOutOfRange { r: usize, p: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("singular Sylvester operator: spectra overlap (separation {separation:e})")]
    SingularSylvester { separation: f64 },
}

/// A real symmetric `p x p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates squareness, finiteness and symmetry up to
    /// `1e-10 * (1 + max|a_ij|)`.
    pub fn new(m: DMatrix<f64>) -> Result<Self, LinalgError> {
        if m.nrows() != m.ncols() {
            return Err(LinalgError::DimensionMismatch(format!(
                "expected square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite);
        }
        let asym = asymmetry(&m);
        if asym > SYMMETRY_TOL * (1.0 + m.amax()) {
            return Err(LinalgError::NotSymmetric { asymmetry: asym });
        }
        Ok(SymMatrix(m))
    }

    /// Replaces `m` by `(m + m^T) / 2`. For matrices that are symmetric by
    /// construction but carry rounding noise.
    pub fn symmetrized(m: DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "symmetrized needs a square matrix");
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn identity(p: usize) -> Self {
        SymMatrix(DMatrix::identity(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

impl AsRef<DMatrix<f64>> for SymMatrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let p = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..p {
        for i in (j + 1)..p {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Leading eigenpairs of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigPairs {
    /// Non-increasing.
    pub values: DVector<f64>,
    /// `p x r`, orthonormal columns.
    pub vectors: DMatrix<f64>,
    /// `lambda_r - lambda_{r+1}`; `+inf` when `r = p`.
    pub gap: f64,
    /// Set when `gap < DEGENERATE_GAP`; the result is still deterministic.
    pub degenerate: bool,
}

/// Full spectral decomposition sorted by non-increasing eigenvalue, with
/// canonical eigenvector signs.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SortedEigen {
    pub fn gap(&self, r: usize) -> f64 {
        let p = self.values.len();
        if r >= p {
            f64::INFINITY
        } else {
            self.values[r - 1] - self.values[r]
        }
    }

    pub fn leading(&self, r: usize) -> EigPairs {
        let gap = self.gap(r);
        EigPairs {
            values: self.values.rows(0, r).into_owned(),
            vectors: self.vectors.columns(0, r).into_owned(),
            gap,
            degenerate: gap < DEGENERATE_GAP,
        }
    }
}

/// Full symmetric eigendecomposition, eigenvalues non-increasing.
pub fn sym_eigen(a: &SymMatrix) -> SortedEigen {
    let p = a.dim();
    let eig = nalgebra::SymmetricEigen::new(a.as_matrix().clone());
    let mut order: Vec<usize> = (0..p).collect();
    // Stable sort keeps the solver's order among exact ties.
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        canonicalize_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    SortedEigen { values, vectors }
}

/// Flips `v` so that its largest-magnitude entry is positive. Entries within
/// `1e-12` of the maximum count as ties, resolved by lowest index.
pub fn canonicalize_sign(v: &mut DVector<f64>) {
    let max = v.amax();
    if max == 0.0 {
        return;
    }
    if let Some(idx) = v.iter().position(|x| x.abs() >= max - SIGN_TIE_TOL) {
        if v[idx] < 0.0 {
            v.neg_mut();
        }
    }
}

/// The `r` largest eigenvalues of `a` and their eigenvectors.
pub fn top_r_eig(a: &SymMatrix, r: usize) -> Result<EigPairs, LinalgError> {
    let p = a.dim();
    if r == 0 || r > p {
        return Err(LinalgError::RankOutOfRange { r, p });
    }
    Ok(sym_eigen(a).leading(r))
}

/// Solves `Z B - A Z = C` for `Z` (`A: r x r`, `B: m x m`, `C: r x m`) by
/// dense Kronecker vectorization.
///
/// Fails with [`LinalgError::SingularSylvester`] when some eigenvalue of `A`
/// lies within `1e-10 * (1 + spectral scale)` of an eigenvalue of `B`.
pub fn solve_sylvester(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LinalgError> {
    let r = a.nrows();
    let m = b.nrows();
    if a.ncols() != r || b.ncols() != m || c.nrows() != r || c.ncols() != m {
        return Err(LinalgError::DimensionMismatch(format!(
            "A {}x{}, B {}x{}, C {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    if r == 0 || m == 0 {
        return Ok(DMatrix::zeros(r, m));
    }

    let spec_a = a.complex_eigenvalues();
    let spec_b = b.complex_eigenvalues();
    let scale = spec_a
        .iter()
        .chain(spec_b.iter())
        .map(|z| z.norm())
        .fold(0.0f64, f64::max);
    let separation = spec_a
        .iter()
        .flat_map(|x| spec_b.iter().map(move |y| (x - y).norm()))
        .fold(f64::INFINITY, f64::min);
    if separation <= 1e-10 * (1.0 + scale) {
        return Err(LinalgError::SingularSylvester { separation });
    }

    // vec(Z B) = (B^T kron I_r) vec(Z), vec(A Z) = (I_m kron A) vec(Z), column-major vec.
    let n = r * m;
    let mut op = DMatrix::zeros(n, n);
    for j in 0..m {
        for l in 0..m {
            let blj = b[(l, j)];
            if blj != 0.0 {
                for i in 0..r {
                    op[(j * r + i, l * r + i)] += blj;
                }
            }
        }
        for i in 0..r {
            for k in 0..r {
                op[(j * r + i, j * r + k)] -= a[(i, k)];
            }
        }
    }
    let rhs = DVector::from_column_slice(c.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or(LinalgError::SingularSylvester { separation })?;
    Ok(DMatrix::from_column_slice(r, m, sol.as_slice()))
}

/// Symmetric square root of a positive semidefinite matrix. Eigenvalues at
/// rounding level relative to the largest one are treated as zero.
pub fn psd_sqrt(a: &SymMatrix) -> DMatrix<f64> {
    let eig = sym_eigen(a);
    let p = a.dim();
    let floor = f64::EPSILON * p as f64 * eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut scaled = eig.vectors.clone();
    for j in 0..p {
        let s = if eig.values[j] > floor { eig.values[j].sqrt() } else { 0.0 };
        scaled.column_mut(j).scale_mut(s);
    }
    &scaled * eig.vectors.transpose()
}

/// Orthonormal basis of the orthogonal complement of `span(basis)`.
/// `basis` must have orthonormal columns.
pub fn orthogonal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let p = basis.nrows();
    let r = basis.ncols();
    let comp = DMatrix::identity(p, p) - basis * basis.transpose();
    let eig = sym_eigen(&SymMatrix::symmetrized(comp));
    eig.vectors.columns(0, p - r).into_owned()
}

/// Gram-Schmidt orthonormalization (modified, two passes), returning `None`
/// when a column is numerically dependent on the previous ones.
pub fn gram_schmidt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut q = m.clone();
    let cols = q.ncols();
    for j in 0..cols {
        let original = m.column(j).norm();
        for _ in 0..2 {
            for k in 0..j {
                let proj = q.column(k).dot(&q.column(j));
                let qk = q.column(k).into_owned();
                q.column_mut(j).axpy(-proj, &qk, 1.0);
            }
        }
        let norm = q.column(j).norm();
        if !(norm > 1e-12 * original.max(1.0)) {
            return None;
        }
        q.column_mut(j).scale_mut(1.0 / norm);
    }
    Some(q)
}

/// Haar-distributed `p x r` column-orthonormal matrix: QR of a standard
/// Gaussian matrix with the signs of `diag(R)` fixed positive.
pub fn haar_basis<R: Rng + ?Sized>(p: usize, r: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(r <= p, "haar_basis: r = {r} exceeds p = {p}");
    let g = DMatrix::from_fn(p, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let rmat = qr.r();
    for j in 0..r {
        if rmat[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Max absolute deviation of `U^T U` from the identity.
pub fn orthonormality_error(u: &DMatrix<f64>) -> f64 {
    let gram = u.transpose() * u;
    let r = gram.nrows();
    (gram - DMatrix::<f64>::identity(r, r)).amax()
}
