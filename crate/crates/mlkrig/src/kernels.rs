//! Matérn covariance evaluation and covariance matrix/vector products.

use crate::data::{dist, Points};
use crate::error::{Error, Result};
use crate::par;
use crate::special::{bessel_k, bessel_k_half_integer, half_integer_order};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Scaled argument beyond which the kernel value underflows double
/// precision; returning 0 there avoids NaN from 0 * inf products.
const UNDERFLOW_ARG: f64 = 700.0;

/// Matérn covariance parameters: shape `nu`, correlation length `rho`,
/// variance scale `sigma2`.
///
/// With `sigma2 = 1` the kernel is a correlation (value 1 at distance 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub nu: f64,
    pub rho: f64,
    pub sigma2: f64,
}

impl CovarianceModel {
    pub fn new(nu: f64, rho: f64, sigma2: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::ParamDomain(format!("nu must be positive, got {nu}")));
        }
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::ParamDomain(format!("rho must be positive, got {rho}")));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::ParamDomain(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        Ok(Self { nu, rho, sigma2 })
    }

    /// Same shape and length, unit variance.
    pub fn correlation_form(&self) -> CovarianceModel {
        CovarianceModel {
            sigma2: 1.0,
            ..*self
        }
    }
}

/// Precomputed per-model constants for repeated kernel evaluation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MaternEval {
    arg_scale: f64, // sqrt(2 nu) / rho
    prefactor: f64, // 1 / (Gamma(nu) 2^{nu-1})
    nu: f64,
    sigma2: f64,
    half_order: Option<usize>,
}

impl MaternEval {
    pub(crate) fn new(model: &CovarianceModel) -> Self {
        let nu = model.nu;
        Self {
            arg_scale: (2.0 * nu).sqrt() / model.rho,
            prefactor: (-(ln_gamma(nu)) - (nu - 1.0) * std::f64::consts::LN_2).exp(),
            nu,
            sigma2: model.sigma2,
            half_order: half_integer_order(nu),
        }
    }

    #[inline]
    pub(crate) fn eval(&self, r: f64) -> f64 {
        if r == 0.0 {
            return self.sigma2;
        }
        let s = self.arg_scale * r;
        if s > UNDERFLOW_ARG {
            return 0.0;
        }
        let k = match self.half_order {
            Some(m) => bessel_k_half_integer(m, s),
            None => bessel_k(self.nu, s),
        };
        self.sigma2 * self.prefactor * s.powf(self.nu) * k
    }
}

/// Matérn kernel value at distance `r`:
/// `sigma2 * (1/(Gamma(nu) 2^{nu-1})) (sqrt(2 nu) r/rho)^nu K_nu(sqrt(2 nu) r/rho)`,
/// with the limit value `sigma2` at `r = 0`.
pub fn matern(r: f64, model: &CovarianceModel) -> Result<f64> {
    if !r.is_finite() || r < 0.0 {
        return Err(Error::ParamDomain(format!(
            "distance must be finite and nonnegative, got {r}"
        )));
    }
    Ok(MaternEval::new(model).eval(r))
}

/// Dense N x N covariance matrix C_ij = matern(||x_i - x_j||, model).
///
/// Entries are computed once on the upper triangle and mirrored, so the
/// result is exactly symmetric. Duplicate locations are rejected (C would
/// be singular).
pub fn assemble_covariance(locations: &Points, model: &CovarianceModel) -> Result<DMatrix<f64>> {
    let n = locations.len();
    if n == 0 {
        return Err(Error::InsufficientData("no locations".into()));
    }
    let eval = MaternEval::new(model);
    let mut data = vec![0.0f64; n * n];
    let duplicate = std::sync::atomic::AtomicUsize::new(usize::MAX);
    // upper triangle (row-major), one row per work unit
    par::for_each_chunk_mut(&mut data, n, |i, row| {
        row[i] = eval.sigma2;
        let xi = locations.point(i);
        for j in (i + 1)..n {
            let r = dist(xi, locations.point(j));
            if r == 0.0 {
                duplicate.fetch_min(i * n + j, std::sync::atomic::Ordering::Relaxed);
            }
            row[j] = eval.eval(r);
        }
    });
    let dup = duplicate.load(std::sync::atomic::Ordering::Relaxed);
    if dup != usize::MAX {
        return Err(Error::DegenerateInput(format!(
            "duplicate locations at indices {} and {}",
            dup / n,
            dup % n
        )));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            data[j * n + i] = data[i * n + j];
        }
    }
    // symmetric, so the row-major buffer is also the column-major buffer
    Ok(DMatrix::from_vec(n, n, data))
}

/// Cross-covariance vector c_i = matern(||x_i - x0||, model).
pub fn cross_covariance(locations: &Points, x0: &[f64], model: &CovarianceModel) -> Result<DVector<f64>> {
    if x0.len() != locations.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("point of dimension {}", locations.dim()),
            got: format!("{}", x0.len()),
        });
    }
    let eval = MaternEval::new(model);
    let c = par::map_indexed(locations.len(), |i| eval.eval(dist(locations.point(i), x0)));
    Ok(DVector::from_vec(c))
}

/// Default memory budget for materializing C: 256 MiB of f64 entries.
pub const DEFAULT_COV_MEMORY_BUDGET: usize = 256 << 20;

/// Row-block size for the matrix-free product. Fixed so the summation
/// order, and therefore the bits of the result, never depend on threads.
const MATVEC_BLOCK: usize = 64;

/// The covariance operator v -> C(theta) v.
///
/// Holds the dense matrix when it fits the memory budget; otherwise
/// recomputes kernel entries row-block by row-block. Both paths apply
/// identical per-entry summation order.
pub struct CovOperator<'a> {
    locations: &'a Points,
    eval: MaternEval,
    dense: Option<DMatrix<f64>>,
}

impl<'a> CovOperator<'a> {
    pub fn new(locations: &'a Points, model: &CovarianceModel) -> Result<Self> {
        Self::with_budget(locations, model, DEFAULT_COV_MEMORY_BUDGET)
    }

    pub fn with_budget(
        locations: &'a Points,
        model: &CovarianceModel,
        budget_bytes: usize,
    ) -> Result<Self> {
        let n = locations.len();
        let dense = if n.saturating_mul(n).saturating_mul(8) <= budget_bytes {
            Some(assemble_covariance(locations, model)?)
        } else {
            None
        };
        Ok(Self {
            locations,
            eval: MaternEval::new(model),
            dense,
        })
    }

    pub fn dim(&self) -> usize {
        self.locations.len()
    }

    pub fn is_materialized(&self) -> bool {
        self.dense.is_some()
    }

    pub fn dense(&self) -> Option<&DMatrix<f64>> {
        self.dense.as_ref()
    }

    /// C[i, j] — table lookup when materialized, kernel evaluation otherwise.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.dense {
            Some(c) => c[(i, j)],
            None => self.eval.eval(self.locations.dist(i, j)),
        }
    }

    /// y = C v.
    pub fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        assert_eq!(v.len(), n, "cov_matvec dimension mismatch");
        let mut y = vec![0.0f64; n];
        match &self.dense {
            Some(c) => {
                par::for_each_chunk_mut(&mut y, MATVEC_BLOCK, |b, block| {
                    let base = b * MATVEC_BLOCK;
                    for (k, out) in block.iter_mut().enumerate() {
                        let i = base + k;
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += c[(i, j)] * v[j];
                        }
                        *out = acc;
                    }
                });
            }
            None => {
                par::for_each_chunk_mut(&mut y, MATVEC_BLOCK, |b, block| {
                    let base = b * MATVEC_BLOCK;
                    for (k, out) in block.iter_mut().enumerate() {
                        let i = base + k;
                        let xi = self.locations.point(i);
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += self.eval.eval(dist(xi, self.locations.point(j))) * v[j];
                        }
                        *out = acc;
                    }
                });
            }
        }
        DVector::from_vec(y)
    }
}

/// One-shot product C(theta) v without keeping the operator around.
pub fn cov_matvec(locations: &Points, model: &CovarianceModel, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != locations.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("vector of length {}", locations.len()),
            got: format!("{}", v.len()),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::ParamDomain("non-finite entry in v".into()));
    }
    Ok(CovOperator::new(locations, model)?.matvec(v))
}
