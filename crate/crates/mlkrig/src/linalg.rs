//! Small dense factorization helpers shared across modules.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Relative pivot threshold below which a column is declared dependent.
pub(crate) const RANK_TOL: f64 = 1e-12;

/// Column-pivoted QR of `a`, unpacked as (full Q, R, permutation) with
/// `a * P = Q * R`. `perm[k]` is the original column moved to position `k`.
pub(crate) fn full_qr(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, Vec<usize>) {
    let n = a.nrows();
    let qr = a.clone().col_piv_qr();
    let mut qt = DMatrix::<f64>::identity(n, n);
    qr.q_tr_mul(&mut qt);
    let q = qt.transpose();
    let r = qr.r();
    (q, r, permutation_indices(&qr))
}

/// perm[k] = original column sitting at pivoted position k.
fn permutation_indices(
    qr: &nalgebra::linalg::ColPivQR<f64, nalgebra::Dyn, nalgebra::Dyn>,
) -> Vec<usize> {
    let p = qr.r().ncols();
    let mut idx = DMatrix::<f64>::from_fn(1, p, |_, j| j as f64);
    qr.p().permute_columns(&mut idx);
    (0..p).map(|k| idx[(0, k)] as usize).collect()
}

/// Numerical rank from the R factor of a pivoted QR: leading pivots within
/// `RANK_TOL` of the largest.
pub(crate) fn pivot_rank(r: &DMatrix<f64>) -> usize {
    let k = r.nrows().min(r.ncols());
    if k == 0 {
        return 0;
    }
    let lead = r[(0, 0)].abs();
    if lead == 0.0 {
        return 0;
    }
    (0..k).take_while(|&i| r[(i, i)].abs() > RANK_TOL * lead).count()
}

/// Minimum-residual solution of the overdetermined system `a x = b` via
/// column-pivoted QR. Errors if `a` is column-rank deficient.
pub(crate) fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, p) = (a.nrows(), a.ncols());
    assert_eq!(b.len(), n);
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let rank = pivot_rank(&r);
    if rank < p {
        return Err(Error::DegenerateDesign {
            deficient: p - rank,
            p,
            context: String::new(),
        });
    }
    let mut qtb = b.clone();
    qr.q_tr_mul(&mut qtb);
    // back-substitute R (p x p upper triangular), then undo the pivoting
    let mut y = DVector::<f64>::zeros(p);
    for i in (0..p).rev() {
        let mut acc = qtb[i];
        for j in (i + 1)..p {
            acc -= r[(i, j)] * y[j];
        }
        y[i] = acc / r[(i, i)];
    }
    let perm = permutation_indices(&qr);
    let mut x = DVector::<f64>::zeros(p);
    for k in 0..p {
        x[perm[k]] = y[k];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn full_qr_reconstructs() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0, 2.0, 2.0]);
        let (q, r, perm) = full_qr(&a);
        // Q orthogonal
        let qtq = q.transpose() * &q;
        assert!((qtq - DMatrix::identity(4, 4)).amax() < 1e-13);
        // A P = Q R  =>  A[:, perm[k]] = (Q_thin R)[:, k]
        let qr_prod = q.columns(0, 2) * &r;
        for k in 0..2 {
            for i in 0..4 {
                assert_abs_diff_eq!(qr_prod[(i, k)], a[(i, perm[k])], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn least_squares_recovers_coefficients() {
        let a = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 4.0]);
        let truth = DVector::from_vec(vec![2.0, -0.5]);
        let b = &a * &truth;
        let x = least_squares(&a, &b).unwrap();
        assert_abs_diff_eq!((x - truth).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn least_squares_detects_rank_deficiency() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
        let b = DVector::zeros(4);
        assert!(matches!(
            least_squares(&a, &b),
            Err(Error::DegenerateDesign { deficient: 1, .. })
        ));
    }
}
