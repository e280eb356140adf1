//! Transferability and inference diagnostics.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::Dataset;
use crate::grassmann::{Projector, WeightedProjectorSet};
use crate::linalg;

const UNIT_TOL: f64 = 1e-10;
const ORTHO_TOL: f64 = 1e-8;
const BASELINE_TOL: f64 = 1e-12;

/// `d_k = r_s - tr(P_k P_s)`: zero iff the shared span lies inside `P_k`.
pub fn informative_gap(p_k: &Projector, p0_shared: &Projector) -> Result<f64> {
    if p_k.dim() != p0_shared.dim() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", p_k.dim(), p0_shared.dim())));
    }
    let d = p0_shared.rank() as f64 - p_k.trace_with(p0_shared.matrix());
    Ok(d.clamp(0.0, p0_shared.rank() as f64))
}

/// `g = 1 - ||sum_k w_k P_k^p||_2 / sum_k w_k` for the private projectors.
pub fn identifiability_margin(private: &WeightedProjectorSet) -> Result<f64> {
    let avg = private.weighted_average()?;
    let top = linalg::sym_eigen(&avg).values[0];
    Ok((1.0 - top).clamp(0.0, 1.0))
}

/// Inputs to the asymptotic variance of a bilinear form of the private
/// projector estimate.
#[derive(Debug, Clone)]
pub struct BilinearSpec {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    /// `(lambda_i^p, u_i^p)`.
    pub private_pairs: Vec<(f64, DVector<f64>)>,
    /// `(lambda_j, u_j)` for the eigenpairs outside the target subspace.
    pub tail_pairs: Vec<(f64, DVector<f64>)>,
    /// Fourth moment of the standardized innovations; 3 for Gaussian data.
    pub nu4: f64,
}

impl BilinearSpec {
    pub fn validate(&self) -> Result<()> {
        let p = self.u.len();
        let vecs: Vec<&DVector<f64>> =
            self.private_pairs.iter().chain(&self.tail_pairs).map(|(_, x)| x).collect();
        if self.v.len() != p || vecs.iter().any(|x| x.len() != p) {
            return Err(Error::DimensionMismatch("bilinear spec vectors differ in length".into()));
        }
        for (name, x) in [("u", &self.u), ("v", &self.v)] {
            if (x.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidData(format!("{name} is not a unit vector")));
            }
        }
        if !vecs.is_empty() {
            let m = DMatrix::from_columns(&vecs.iter().map(|x| (*x).clone()).collect::<Vec<_>>());
            let err = linalg::orthonormality_error(&m);
            if err > ORTHO_TOL {
                return Err(Error::NotOrthonormal(err));
            }
        }
        for (li, _) in &self.private_pairs {
            for (lj, _) in &self.tail_pairs {
                if !(li > lj) {
                    return Err(Error::InvalidData(format!(
                        "private eigenvalue {li} does not exceed tail eigenvalue {lj}"
                    )));
                }
            }
        }
        if !self.nu4.is_finite() {
            return Err(Error::InvalidData("nu4 must be finite".into()));
        }
        Ok(())
    }
}

/// `sigma^2 = sum_ij omega_ij^2
///   + (nu4 - 3) sum_m (sum_ij omega_ij (u_i^p)_m (u_j)_m)^2`
/// with `omega_ij = rho_ij sqrt(lambda_i^p lambda_j) / (lambda_i^p - lambda_j)`
/// and `rho_ij = (u_i^p . u)(u_j . v) + (u_j . u)(u_i^p . v)`.
pub fn bilinear_variance(spec: &BilinearSpec) -> Result<f64> {
    spec.validate()?;
    let p = spec.u.len();
    let mut first = 0.0;
    let mut inner = DVector::<f64>::zeros(p);
    for (li, ui) in &spec.private_pairs {
        let (a_u, a_v) = (ui.dot(&spec.u), ui.dot(&spec.v));
        for (lj, uj) in &spec.tail_pairs {
            let rho = a_u * uj.dot(&spec.v) + uj.dot(&spec.u) * a_v;
            let omega = rho * (li * lj).sqrt() / (li - lj);
            first += omega * omega;
            inner += ui.component_mul(uj) * omega;
        }
    }
    let sigma2 = first + (spec.nu4 - 3.0) * inner.norm_squared();
    Ok(sigma2.max(0.0))
}

/// Mean over test rows of `||P_hat y||^2 / ||P_tilde y||^2`.
pub fn ar_ratio(transfer_p: &Projector, baseline_p: &Projector, test_rows: &Dataset) -> Result<f64> {
    let p = transfer_p.dim();
    if baseline_p.dim() != p || test_rows.p() != p {
        return Err(Error::DimensionMismatch(format!(
            "projectors {p}, {} and data {}",
            baseline_p.dim(),
            test_rows.p()
        )));
    }
    let y = test_rows.rows().transpose();
    let num = transfer_p.matrix() * &y;
    let den = baseline_p.matrix() * &y;
    let mut total = 0.0;
    for i in 0..test_rows.n() {
        let scale = y.column(i).norm();
        let d = den.column(i).norm();
        if !(d > BASELINE_TOL * scale.max(1.0)) || scale == 0.0 {
            return Err(Error::DegenerateBaseline { row: i });
        }
        total += (num.column(i).norm() / d).powi(2);
    }
    Ok(total / test_rows.n() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(p: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(p);
        v[i] = 1.0;
        v
    }

    fn rank1(v: DVector<f64>) -> Projector {
        Projector::from_basis(DMatrix::from_columns(&[v.normalize()])).unwrap()
    }

    #[test]
    fn gap_examples() {
        let shared = rank1(e(3, 0));
        let sup = Projector::from_basis(DMatrix::from_columns(&[e(3, 0), e(3, 1)])).unwrap();
        assert!(informative_gap(&sup, &shared).unwrap().abs() < 1e-15);
        assert!((informative_gap(&rank1(e(3, 2)), &shared).unwrap() - 1.0).abs() < 1e-15);
        let diag = rank1(DVector::from_column_slice(&[1.0, 1.0, 0.0]));
        assert!((informative_gap(&diag, &shared).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn margin_examples() {
        let two = WeightedProjectorSet::new(vec![(rank1(e(3, 0)), 1.0), (rank1(e(3, 1)), 1.0)]).unwrap();
        assert!((identifiability_margin(&two).unwrap() - 0.5).abs() < 1e-14);
        let same = WeightedProjectorSet::new(vec![(rank1(e(3, 2)), 2.0), (rank1(e(3, 2)), 5.0)]).unwrap();
        assert!(identifiability_margin(&same).unwrap().abs() < 1e-14);
        let one = WeightedProjectorSet::new(vec![(rank1(e(3, 1)), 7.0)]).unwrap();
        assert!(identifiability_margin(&one).unwrap().abs() < 1e-14);
    }

    #[test]
    fn bilinear_hand_example() {
        let spec = BilinearSpec {
            u: e(3, 0),
            v: e(3, 2),
            private_pairs: vec![(10.0, e(3, 0))],
            tail_pairs: vec![(1.0, e(3, 2))],
            nu4: 3.0,
        };
        assert!((bilinear_variance(&spec).unwrap() - 10.0 / 81.0).abs() < 1e-15);
    }

    #[test]
    fn bilinear_orthogonal_directions_vanish() {
        let spec = BilinearSpec {
            u: e(4, 3),
            v: e(4, 3),
            private_pairs: vec![(10.0, e(4, 0))],
            tail_pairs: vec![(1.0, e(4, 1)), (0.5, e(4, 2))],
            nu4: 9.0,
        };
        assert_eq!(bilinear_variance(&spec).unwrap(), 0.0);
    }

    #[test]
    fn bilinear_rejects_bad_spec() {
        let mut spec = BilinearSpec {
            u: e(3, 0),
            v: e(3, 2),
            private_pairs: vec![(1.0, e(3, 0))],
            tail_pairs: vec![(1.0, e(3, 2))],
            nu4: 3.0,
        };
        assert!(bilinear_variance(&spec).is_err());
        spec.private_pairs[0].0 = 5.0;
        spec.u = DVector::from_column_slice(&[1.0, 1.0, 0.0]);
        assert!(bilinear_variance(&spec).is_err());
    }

    #[test]
    fn ar_examples() {
        let rows = Dataset::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 2.0]]).unwrap();
        let base = Projector::from_basis(DMatrix::from_columns(&[e(3, 0), e(3, 1)])).unwrap();
        assert!((ar_ratio(&base, &base, &rows).unwrap() - 1.0).abs() < 1e-15);
        let full = Projector::from_basis(DMatrix::identity(3, 3)).unwrap();
        assert!(ar_ratio(&full, &base, &rows).unwrap() > 1.0);
        let bad = Dataset::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert!(matches!(ar_ratio(&full, &base, &bad), Err(Error::DegenerateBaseline { row: 1 })));
    }
}
