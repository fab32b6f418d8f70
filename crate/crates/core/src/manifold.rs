//! Target manifolds phi(x_f) = 0 with gradients, per-component Hessians, and
//! tangent bases.

use crate::dynamics::Chart;
use crate::linalg::orthonormal_complement;
use nalgebra::{DMatrix, DVector, SMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("constraint gradient is rank deficient at the evaluation point")]
    RankDeficient,
    #[error("invalid manifold definition: {0}")]
    Invalid(String),
}

/// Smooth constraint submanifold of the final state.
///
/// All variants provide analytic gradients; Hessians are identically zero for
/// the affine variants.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum TargetManifold {
    /// Fixes the first six MEOE components (P, ex, ey, hx, hy, l); the final
    /// mass stays free. Affine in the MEOE chart, s = 6.
    MeoeTarget { target: [f64; 6] },
    /// Fully fixed endpoint, s = 7.
    FixedEndpoint { x_f: [f64; 7] },
    /// Quadratic constraints phi_i(x) = a_i x + x^T q_i x / 2 - b_i.
    Quadratic {
        a: Vec<[f64; 7]>,
        q: Vec<[[f64; 7]; 7]>,
        b: Vec<f64>,
    },
}

impl TargetManifold {
    /// Constraint manifold fixing a final orbit and true longitude, mass free.
    pub fn meoe_target(p: f64, ex: f64, ey: f64, hx: f64, hy: f64, l_f: f64) -> Self {
        Self::MeoeTarget {
            target: [p, ex, ey, hx, hy, l_f],
        }
    }

    pub fn fixed_endpoint(x_f: [f64; 7]) -> Self {
        Self::FixedEndpoint { x_f }
    }

    /// Number of scalar constraints s.
    pub fn constraint_count(&self) -> usize {
        match self {
            Self::MeoeTarget { .. } => 6,
            Self::FixedEndpoint { .. } => 7,
            Self::Quadratic { a, .. } => a.len(),
        }
    }

    /// The chart the constraint expressions are written in, when it matters.
    pub fn required_chart(&self) -> Option<Chart> {
        match self {
            Self::MeoeTarget { .. } => Some(Chart::Meoe),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ManifoldError> {
        match self {
            Self::Quadratic { a, q, b } => {
                let s = a.len();
                if s == 0 || s > 7 {
                    return Err(ManifoldError::Invalid(format!(
                        "constraint count {s} outside 1..=7"
                    )));
                }
                if q.len() != s || b.len() != s {
                    return Err(ManifoldError::Invalid(
                        "a, q, b must have matching lengths".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Constraint values phi(x).
    pub fn phi(&self, x: &[f64; 7]) -> DVector<f64> {
        match self {
            Self::MeoeTarget { target } => {
                DVector::from_fn(6, |i, _| x[i] - target[i])
            }
            Self::FixedEndpoint { x_f } => DVector::from_fn(7, |i, _| x[i] - x_f[i]),
            Self::Quadratic { a, q, b } => DVector::from_fn(a.len(), |i, _| {
                let mut acc = -b[i];
                for j in 0..7 {
                    acc += a[i][j] * x[j];
                    for k in 0..7 {
                        acc += 0.5 * x[j] * q[i][j][k] * x[k];
                    }
                }
                acc
            }),
        }
    }

    /// Constraint gradient, s x 7.
    pub fn grad(&self, x: &[f64; 7]) -> DMatrix<f64> {
        match self {
            Self::MeoeTarget { .. } => {
                let mut g = DMatrix::zeros(6, 7);
                for i in 0..6 {
                    g[(i, i)] = 1.0;
                }
                g
            }
            Self::FixedEndpoint { .. } => DMatrix::identity(7, 7),
            Self::Quadratic { a, q, .. } => DMatrix::from_fn(a.len(), 7, |i, j| {
                let mut acc = a[i][j];
                for k in 0..7 {
                    acc += 0.5 * (q[i][j][k] + q[i][k][j]) * x[k];
                }
                acc
            }),
        }
    }

    /// Hessian of the i-th constraint component, 7 x 7.
    pub fn hessian(&self, i: usize, _x: &[f64; 7]) -> SMatrix<f64, 7, 7> {
        match self {
            Self::MeoeTarget { .. } | Self::FixedEndpoint { .. } => SMatrix::zeros(),
            Self::Quadratic { q, .. } => {
                SMatrix::from_fn(|r, c| 0.5 * (q[i][r][c] + q[i][c][r]))
            }
        }
    }

    /// Orthonormal basis of the tangent space ker(grad phi) at `x`.
    pub fn tangent_basis(&self, x: &[f64; 7]) -> Result<TangentBasis, ManifoldError> {
        let s = self.constraint_count();
        if s == 7 {
            return Ok(TangentBasis(DMatrix::zeros(7, 0)));
        }
        let g = self.grad(x);
        let t = orthonormal_complement(&g.transpose(), 1.0e-10)
            .ok_or(ManifoldError::RankDeficient)?;
        Ok(TangentBasis(t))
    }
}

/// Orthonormal tangent basis T (7 x (7 - s)) with grad(phi) * T = 0.
#[derive(Clone, Debug)]
pub struct TangentBasis(pub DMatrix<f64>);

impl TangentBasis {
    pub fn cols(&self) -> usize {
        self.0.ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meoe_target_is_affine_with_identity_gradient_block() {
        let m = TargetManifold::meoe_target(1.0, 0.0, 0.0, 0.0, 0.0, 18.0 * std::f64::consts::PI);
        let x = [1.0, 0.0, 0.0, 0.0, 0.0, 18.0 * std::f64::consts::PI, 0.8];
        assert_eq!(m.constraint_count(), 6);
        assert!(m.phi(&x).norm() == 0.0);
        let g = m.grad(&x);
        for i in 0..6 {
            for j in 0..7 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(g[(i, j)], expect);
            }
        }
        for i in 0..6 {
            assert_eq!(m.hessian(i, &x).norm(), 0.0);
        }
        // Off the manifold by 1 canonical unit in P.
        let mut x_off = x;
        x_off[0] += 1.0;
        let phi = m.phi(&x_off);
        assert_eq!(phi[0], 1.0);
        assert_eq!(phi.norm(), 1.0);
    }

    #[test]
    fn meoe_target_tangent_basis_is_mass_direction() {
        let m = TargetManifold::meoe_target(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let t = m.tangent_basis(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(t.cols(), 1);
        for i in 0..7 {
            let expect = if i == 6 { 1.0 } else { 0.0 };
            assert!((t.0[(i, 0)].abs() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn fixed_endpoint_has_empty_tangent_basis() {
        let m = TargetManifold::fixed_endpoint([0.0; 7]);
        assert_eq!(m.constraint_count(), 7);
        let t = m.tangent_basis(&[0.0; 7]).unwrap();
        assert_eq!(t.cols(), 0);
    }

    #[test]
    fn single_plane_constraint_tangent_spans_rest() {
        // grad = [1 0 ... 0]: tangent basis must span e2..e7.
        let m = TargetManifold::Quadratic {
            a: vec![[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]],
            q: vec![[[0.0; 7]; 7]],
            b: vec![0.0],
        };
        let t = m.tangent_basis(&[0.0; 7]).unwrap();
        assert_eq!(t.cols(), 6);
        let g = m.grad(&[0.0; 7]);
        assert!((g * &t.0).norm() < 1e-14);
    }

    #[test]
    fn quadratic_gradient_matches_finite_differences() {
        let q1 = {
            let mut q = [[0.0; 7]; 7];
            q[0][0] = 2.0;
            q[1][3] = 0.5;
            q[3][1] = 0.5;
            q
        };
        let m = TargetManifold::Quadratic {
            a: vec![[0.1, -0.2, 0.3, 0.0, 0.5, 0.0, 1.0]],
            q: vec![q1],
            b: vec![0.7],
        };
        let x = [0.3, -0.1, 0.2, 0.5, -0.4, 0.9, 1.1];
        let g = m.grad(&x);
        let h = 1e-6;
        for j in 0..7 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fd = (m.phi(&xp)[0] - m.phi(&xm)[0]) / (2.0 * h);
            assert!((g[(0, j)] - fd).abs() < 1e-6);
        }
        // Hessian is constant and symmetric.
        let hess = m.hessian(0, &x);
        assert!((hess - hess.transpose()).norm() < 1e-14);
        assert_eq!(hess[(0, 0)], 2.0);
        assert_eq!(hess[(1, 3)], 0.5);
    }
}
