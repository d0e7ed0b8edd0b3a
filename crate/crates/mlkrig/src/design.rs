//! Total-degree polynomial trend basis and the realized design matrix.

use crate::data::Points;
use crate::error::{Error, Result};
use crate::linalg::pivot_rank;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Number of monomials in `dim` variables of total degree <= `degree`:
/// binomial(dim + degree, degree).
pub fn total_degree_count(dim: usize, degree: usize) -> usize {
    // product form avoids factorial overflow
    let mut p = 1usize;
    for k in 1..=degree {
        p = p * (dim + k) / k;
    }
    p
}

/// Per-coordinate affine map onto [-1, 1] fitted over a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateScaling {
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
}

impl CoordinateScaling {
    pub fn fit(points: &Points) -> Self {
        let d = points.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for i in 0..points.len() {
            for (k, &v) in points.point(i).iter().enumerate() {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let half_width: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| {
                let w = 0.5 * (b - a);
                if w > 0.0 {
                    w
                } else {
                    1.0
                }
            })
            .collect();
        Self { center, half_width }
    }

    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for k in 0..x.len() {
            out[k] = (x[k] - self.center[k]) / self.half_width[k];
        }
    }
}

/// Total-degree polynomial feature map: all monomials `x^alpha` with
/// `|alpha| <= degree`, ordered by (total degree, then lexicographically
/// with earlier coordinates ranked higher). The first entry is always the
/// constant 1; for `dim = 2`, `degree = 1` the order is `[1, x1, x2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendBasis {
    d_loc: usize,
    degree: usize,
    exponents: Vec<Vec<u32>>,
    scaling: Option<CoordinateScaling>,
}

fn enumerate_exponents(dim: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::with_capacity(total_degree_count(dim, degree));
    let mut current = vec![0u32; dim];
    for g in 0..=degree {
        push_degree(&mut out, &mut current, 0, g as u32);
    }
    out
}

fn push_degree(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, pos: usize, remaining: u32) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    // earlier coordinates take larger exponents first
    for e in (0..=remaining).rev() {
        current[pos] = e;
        push_degree(out, current, pos + 1, remaining - e);
        current[pos] = 0;
    }
}

impl TrendBasis {
    /// Basis over raw coordinates.
    pub fn new(d_loc: usize, degree: usize) -> Result<Self> {
        if d_loc == 0 {
            return Err(Error::ParamDomain("d_loc must be positive".into()));
        }
        let exponents = enumerate_exponents(d_loc, degree);
        debug_assert_eq!(exponents.len(), total_degree_count(d_loc, degree));
        Ok(Self {
            d_loc,
            degree,
            exponents,
            scaling: None,
        })
    }

    /// Basis over coordinates affinely rescaled to [-1, 1] across the
    /// training set. Keeps the design matrix well-scaled at higher degree.
    pub fn fitted(d_loc: usize, degree: usize, training: &Points) -> Result<Self> {
        if training.dim() != d_loc {
            return Err(Error::ShapeMismatch {
                expected: format!("points of dimension {d_loc}"),
                got: format!("{}", training.dim()),
            });
        }
        let mut basis = Self::new(d_loc, degree)?;
        basis.scaling = Some(CoordinateScaling::fit(training));
        Ok(basis)
    }

    pub fn d_loc(&self) -> usize {
        self.d_loc
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions p.
    pub fn p(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn scaling(&self) -> Option<&CoordinateScaling> {
        self.scaling.as_ref()
    }

    /// Monomial vector k(x), length p.
    pub fn eval(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.d_loc {
            return Err(Error::ShapeMismatch {
                expected: format!("point of dimension {}", self.d_loc),
                got: format!("{}", x.len()),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::ParamDomain("non-finite coordinate".into()));
        }
        let mut z = vec![0.0; self.d_loc];
        match &self.scaling {
            Some(s) => s.apply_into(x, &mut z),
            None => z.copy_from_slice(x),
        }
        // powers per coordinate up to the basis degree
        let mut pows = vec![1.0; self.d_loc * (self.degree + 1)];
        for k in 0..self.d_loc {
            for e in 1..=self.degree {
                pows[k * (self.degree + 1) + e] = pows[k * (self.degree + 1) + e - 1] * z[k];
            }
        }
        let vals = self
            .exponents
            .iter()
            .map(|alpha| {
                alpha
                    .iter()
                    .enumerate()
                    .map(|(k, &e)| pows[k * (self.degree + 1) + e as usize])
                    .product()
            })
            .collect();
        Ok(DVector::from_vec(vals))
    }

    /// Design matrix X with row i = k(x_i); checks full column rank via a
    /// rank-revealing factorization.
    pub fn design_matrix(&self, locations: &Points) -> Result<DMatrix<f64>> {
        let n = locations.len();
        let p = self.p();
        if n < p {
            return Err(Error::InsufficientData(format!(
                "need at least p = {p} locations, got {n}"
            )));
        }
        let mut x = DMatrix::<f64>::zeros(n, p);
        for i in 0..n {
            let row = self.eval(locations.point(i))?;
            x.row_mut(i).copy_from(&row.transpose());
        }
        let r = x.clone().col_piv_qr().r();
        let rank = pivot_rank(&r);
        if rank < p {
            return Err(Error::DegenerateDesign {
                deficient: p - rank,
                p,
                context: " in the trend design matrix".into(),
            });
        }
        Ok(x)
    }
}

/// Convenience: evaluate the basis at one point (spec operation form).
pub fn eval_basis(basis: &TrendBasis, x: &[f64]) -> Result<DVector<f64>> {
    basis.eval(x)
}

/// Convenience: build and rank-check the design matrix (spec operation form).
pub fn build_design_matrix(basis: &TrendBasis, locations: &Points) -> Result<DMatrix<f64>> {
    basis.design_matrix(locations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn counts_match_binomial() {
        assert_eq!(total_degree_count(2, 0), 1);
        assert_eq!(total_degree_count(2, 1), 3);
        assert_eq!(total_degree_count(2, 2), 6);
        assert_eq!(total_degree_count(20, 3), 1771);
        assert_eq!(total_degree_count(25, 2), 351);
        assert_eq!(total_degree_count(19, 3), 1540);
    }

    #[test]
    fn ordering_is_graded_with_leading_coordinate_first() {
        let b = TrendBasis::new(2, 2).unwrap();
        let expect: Vec<Vec<u32>> = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
        ];
        assert_eq!(b.exponents(), expect.as_slice());
    }

    #[test]
    fn eval_simple_cases() {
        let b0 = TrendBasis::new(3, 0).unwrap();
        assert_eq!(b0.eval(&[5.0, -2.0, 0.1]).unwrap().as_slice(), &[1.0]);

        let b1 = TrendBasis::new(2, 1).unwrap();
        let v = b1.eval(&[3.0, 4.0]).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 3.0, 4.0]);

        assert!(b1.eval(&[1.0]).is_err());
        assert!(b1.eval(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn constant_term_is_always_one() {
        let pts = Points::new(vec![100.0, -3.0, 55.0, 7.0], 2).unwrap();
        let b = TrendBasis::fitted(2, 3, &pts).unwrap();
        let v = b.eval(&[42.0, 1.0]).unwrap();
        assert_eq!(v[0], 1.0);
    }

    #[test]
    fn rescaled_coordinates_land_in_unit_box() {
        let pts = Points::new(vec![0.0, 1000.0, 10.0, 3000.0], 2).unwrap();
        let b = TrendBasis::fitted(2, 1, &pts).unwrap();
        let v = b.eval(pts.point(0)).unwrap();
        assert_abs_diff_eq!(v[1], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[2], -1.0, epsilon = 1e-15);
        let v = b.eval(pts.point(1)).unwrap();
        assert_abs_diff_eq!(v[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn design_matrix_constant_basis() {
        let pts = Points::new(vec![0.0, 1.0, 2.0], 1).unwrap();
        let b = TrendBasis::new(1, 0).unwrap();
        let x = b.design_matrix(&pts).unwrap();
        assert_eq!(x.nrows(), 3);
        assert_eq!(x.ncols(), 1);
        assert!(x.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn square_generic_design_is_full_rank() {
        let pts = Points::new(vec![0.1, 0.2, 0.9, 0.4, 0.5, 0.85], 2).unwrap();
        let b = TrendBasis::new(2, 1).unwrap();
        assert!(b.design_matrix(&pts).is_ok());
    }

    #[test]
    fn collinear_points_are_rank_deficient() {
        // three points on a line, degree-1 basis in 2 variables
        let pts = Points::new(vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0], 2).unwrap();
        let b = TrendBasis::new(2, 1).unwrap();
        match b.design_matrix(&pts) {
            Err(Error::DegenerateDesign { deficient, p, .. }) => {
                assert_eq!(deficient, 1);
                assert_eq!(p, 3);
            }
            other => panic!("expected degenerate design, got {other:?}"),
        }
    }

    #[test]
    fn design_is_permutation_equivariant() {
        let pts = Points::new(vec![0.1, 0.7, 0.3, 0.2, 0.9, 0.5, 0.4, 0.8], 2).unwrap();
        let b = TrendBasis::new(2, 1).unwrap();
        let x = b.design_matrix(&pts).unwrap();
        let perm = [2usize, 0, 3, 1];
        let xp = b.design_matrix(&pts.select(&perm)).unwrap();
        for (new_row, &old_row) in perm.iter().enumerate() {
            for c in 0..b.p() {
                assert_eq!(xp[(new_row, c)], x[(old_row, c)]);
            }
        }
    }
}
