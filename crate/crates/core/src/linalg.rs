//! Small dense linear-algebra helpers shared by the manifold and sufficiency
//! machinery.

use nalgebra::DMatrix;

/// Full orthogonal factor of a Householder QR of `a` (n x k, n >= k).
///
/// The first k columns of the returned n x n matrix span the column space of
/// `a`; the trailing n - k columns form an orthonormal basis of its
/// orthogonal complement. Returns `None` when `a` is rank deficient (a
/// diagonal entry of R below `tol` times the largest column norm).
pub fn full_qr_q(a: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let (n, k) = (a.nrows(), a.ncols());
    assert!(n >= k);
    let scale = a
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max)
        .max(1.0e-300);
    let mut r = a.clone();
    let mut qt = DMatrix::<f64>::identity(n, n);
    for j in 0..k {
        // Householder vector for column j below the diagonal.
        let x = r.view((j, j), (n - j, 1)).into_owned();
        let xn = x.norm();
        if xn < tol * scale {
            return None;
        }
        let alpha = -x[0].signum() * xn;
        let mut u = x;
        u[0] -= alpha;
        let un = u.norm();
        if un > 0.0 {
            u /= un;
            // Apply H = I - 2uu^T to the trailing blocks of R and to Q^T.
            let ur = u.transpose() * r.view((j, 0), (n - j, k));
            let mut rv = r.view_mut((j, 0), (n - j, k));
            rv.gemm(-2.0, &u, &ur, 1.0);
            let uq = u.transpose() * qt.view((j, 0), (n - j, n));
            let mut qv = qt.view_mut((j, 0), (n - j, n));
            qv.gemm(-2.0, &u, &uq, 1.0);
        }
        if r[(j, j)].abs() < tol * scale {
            return None;
        }
    }
    Some(qt.transpose())
}

/// Orthonormal basis of the orthogonal complement of the columns of `a`.
pub fn orthonormal_complement(a: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let (n, k) = (a.nrows(), a.ncols());
    let q = full_qr_q(a, tol)?;
    Some(q.columns(k, n - k).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complement_of_first_basis_vector_is_rest_of_basis() {
        let mut a = DMatrix::<f64>::zeros(7, 1);
        a[(0, 0)] = 1.0;
        let c = orthonormal_complement(&a, 1e-12).unwrap();
        assert_eq!(c.shape(), (7, 6));
        for j in 0..6 {
            for i in 0..7 {
                let expected = if i == j + 1 { 1.0 } else { 0.0 };
                assert!((c[(i, j)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn complement_is_orthonormal_and_orthogonal_to_input() {
        // Vandermonde columns are independent.
        let a = DMatrix::<f64>::from_fn(7, 3, |i, j| (1.0 + i as f64).powi(j as i32) / 10.0);
        let c = orthonormal_complement(&a, 1e-12).unwrap();
        let ctc = c.transpose() * &c;
        assert!((ctc - DMatrix::identity(4, 4)).norm() < 1e-12);
        let atc = a.transpose() * &c;
        assert!(atc.norm() < 1e-12);
    }

    #[test]
    fn rank_deficiency_is_detected() {
        let mut a = DMatrix::<f64>::zeros(7, 2);
        a[(0, 0)] = 1.0;
        a[(0, 1)] = 2.0; // second column parallel to the first
        assert!(orthonormal_complement(&a, 1e-10).is_none());
    }
}
