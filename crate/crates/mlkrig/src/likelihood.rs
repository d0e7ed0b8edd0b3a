//! Decoupled log-likelihood in the transformed space and covariance
//! parameter estimation.
//!
//! Because W annihilates the trend columns, the transformed data
//! `Y_W = W Y` is mean zero with covariance `C_W = W C W^T`, so the
//! likelihood of theta no longer involves beta. For speed the matrix may
//! be replaced by a sparsified version keeping only entry pairs whose
//! W-row supports are geometrically close.

use crate::data::{ObservationSet, Points};
use crate::design::TrendBasis;
use crate::error::{Error, Result};
use crate::kernels::{CovarianceModel, CovOperator};
use crate::mlbasis::MultilevelBasis;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::par;
use crate::rng::{stream_rng, streams};
use crate::sparse::SparseRowMat;
use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct LikelihoodConfig {
    /// Distance criterion tau: W-row pairs whose support boxes are farther
    /// apart than `tau * rho` are structurally zero. `f64::INFINITY` keeps
    /// C_W fully dense.
    pub sparse_threshold: f64,
    /// Bounds for nu (linear scale; the search runs in log space).
    pub nu_bounds: (f64, f64),
    /// Bounds for rho. None derives them as [1e-3, 1e3] times the median
    /// pairwise distance of a seeded location subsample.
    pub rho_bounds: Option<(f64, f64)>,
    pub max_evals: usize,
    /// Largest transformed dimension factored densely; beyond it the
    /// sparsified matrix goes through a sparse Cholesky.
    pub dense_fallback_n: usize,
    /// Profile the variance scale in closed form at each evaluation.
    /// With `false`, sigma2 is pinned at 1 (the correlation-form model).
    pub profile_sigma2: bool,
    pub seed: u64,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self {
            sparse_threshold: 3.0,
            nu_bounds: (0.25, 4.0),
            rho_bounds: None,
            max_evals: 200,
            dense_fallback_n: 2000,
            profile_sigma2: true,
            seed: 0,
        }
    }
}

impl LikelihoodConfig {
    fn validate(&self) -> Result<()> {
        let ok_interval = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi;
        if !ok_interval(self.nu_bounds) {
            return Err(Error::Config(format!("bad nu bounds {:?}", self.nu_bounds)));
        }
        if let Some(rb) = self.rho_bounds {
            if !ok_interval(rb) {
                return Err(Error::Config(format!("bad rho bounds {rb:?}")));
            }
        }
        if !(self.sparse_threshold >= 0.0) {
            return Err(Error::Config("tau must be nonnegative".into()));
        }
        if self.max_evals == 0 {
            return Err(Error::Config("max_evals must be positive".into()));
        }
        Ok(())
    }
}

/// One optimizer evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitTraceEntry {
    pub eval: usize,
    pub nu: f64,
    pub rho: f64,
    pub sigma2: f64,
    pub loglik: f64,
    pub feasible: bool,
    pub wall_time: f64,
}

/// Write the optimizer trace as CSV.
pub fn write_trace_csv<W: Write>(trace: &[FitTraceEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eval", "nu", "rho", "sigma2", "loglik", "feasible", "wall_time_s"])?;
    for t in trace {
        w.write_record(&[
            t.eval.to_string(),
            t.nu.to_string(),
            t.rho.to_string(),
            t.sigma2.to_string(),
            t.loglik.to_string(),
            (t.feasible as u8).to_string(),
            t.wall_time.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Axis-aligned bounding boxes of each W row's support locations.
fn row_boxes(basis: &MultilevelBasis, locations: &Points) -> Vec<(Vec<f64>, Vec<f64>)> {
    let d = locations.dim();
    par::map_indexed(basis.w_rows(), |i| {
        let (cols, _) = basis.w().row(i);
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &c in cols {
            for (k, &v) in locations.point(c).iter().enumerate() {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        (lo, hi)
    })
}

fn box_distance(a: &(Vec<f64>, Vec<f64>), b: &(Vec<f64>, Vec<f64>)) -> f64 {
    let mut acc = 0.0;
    for k in 0..a.0.len() {
        let gap = (b.0[k] - a.1[k]).max(a.0[k] - b.1[k]).max(0.0);
        acc += gap * gap;
    }
    acc.sqrt()
}

/// C_W entry (i, j) = w_i^T C w_j over the two rows' sparse supports.
fn cw_entry(basis: &MultilevelBasis, cov: &CovOperator, i: usize, j: usize) -> f64 {
    let (ci, vi) = basis.w().row(i);
    let (cj, vj) = basis.w().row(j);
    let mut acc = 0.0;
    for (a, &ca) in ci.iter().enumerate() {
        let va = vi[a];
        let mut inner = 0.0;
        for (b, &cb) in cj.iter().enumerate() {
            inner += vj[b] * cov.entry(ca, cb);
        }
        acc += va * inner;
    }
    acc
}

/// Sparsified transformed covariance: entry (i, j) is kept iff the
/// supports' bounding boxes are within `tau * rho`; the diagonal is always
/// kept. `tau = inf` keeps everything.
pub fn sparsify_cw(
    basis: &MultilevelBasis,
    locations: &Points,
    model: &CovarianceModel,
    tau: f64,
) -> Result<SparseRowMat> {
    if !(tau >= 0.0) {
        return Err(Error::ParamDomain(format!("tau must be nonnegative, got {tau}")));
    }
    let m = basis.w_rows();
    let cov = CovOperator::new(locations, model)?;
    let boxes = row_boxes(basis, locations);
    let cutoff = tau * model.rho;
    // kept columns per row (upper triangle), then mirrored
    let upper: Vec<Vec<usize>> = par::map_indexed(m, |i| {
        (i..m)
            .filter(|&j| {
                tau.is_infinite() || box_distance(&boxes[i], &boxes[j]) <= cutoff
            })
            .collect()
    });
    let mut pattern: Vec<Vec<usize>> = vec![Vec::new(); m];
    for i in 0..m {
        for &j in &upper[i] {
            pattern[i].push(j);
            if j != i {
                pattern[j].push(i);
            }
        }
    }
    for row in &mut pattern {
        row.sort_unstable();
    }
    let rows: Vec<Vec<(usize, f64)>> = par::map_indexed(m, |i| {
        pattern[i]
            .iter()
            .map(|&j| {
                let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                (j, cw_entry(basis, &cov, lo, hi))
            })
            .collect()
    });
    Ok(SparseRowMat::from_rows(m, rows))
}

/// A factored (possibly sparsified) C_W with its log determinant.
pub(crate) enum FactoredCw {
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Sparse(Box<CscCholesky<f64>>),
}

impl FactoredCw {
    pub(crate) fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match self {
            FactoredCw::Dense(ch) => ch.solve(rhs),
            FactoredCw::Sparse(ch) => {
                let m = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
                DVector::from_column_slice(ch.solve(&m).as_slice())
            }
        }
    }

    pub(crate) fn logdet(&self) -> f64 {
        match self {
            FactoredCw::Dense(ch) => 2.0 * ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
            FactoredCw::Sparse(ch) => {
                let l = ch.l();
                2.0 * (0..l.nrows())
                    .map(|i| l.get_entry(i, i).map(|e| e.into_value().ln()).unwrap_or(f64::NAN))
                    .sum::<f64>()
            }
        }
    }
}

/// Assemble and factor C_W(model), dense or sparse per the config.
pub(crate) fn factor_cw(
    basis: &MultilevelBasis,
    locations: &Points,
    model: &CovarianceModel,
    config: &LikelihoodConfig,
) -> Result<FactoredCw> {
    let m = basis.w_rows();
    let tau = config.sparse_threshold;
    if tau.is_infinite() || m <= config.dense_fallback_n {
        // dense assembly via the sparse-times-dense product W (C W^T)
        let dense = if tau.is_infinite() {
            dense_cw(basis, locations, model)?
        } else {
            sparsify_cw(basis, locations, model, tau)?.to_dense()
        };
        let chol = dense
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("C_W(theta) Cholesky failed".into()))?;
        Ok(FactoredCw::Dense(chol))
    } else {
        let sp = sparsify_cw(basis, locations, model, tau)?;
        let mut coo = CooMatrix::new(m, m);
        for i in 0..m {
            let (cols, vals) = sp.row(i);
            for (c, v) in cols.iter().zip(vals) {
                coo.push(i, *c, *v);
            }
        }
        let csc = CscMatrix::from(&coo);
        let chol = CscCholesky::factor(&csc).map_err(|e| {
            Error::NotPositiveDefinite(format!("sparse Cholesky of C_W failed: {e}"))
        })?;
        Ok(FactoredCw::Sparse(Box::new(chol)))
    }
}

/// Dense C_W = W C W^T without sparsification.
pub(crate) fn dense_cw(
    basis: &MultilevelBasis,
    locations: &Points,
    model: &CovarianceModel,
) -> Result<DMatrix<f64>> {
    let m = basis.w_rows();
    let n = basis.n();
    let cov = CovOperator::new(locations, model)?;
    let c = match cov.dense() {
        Some(c) => c.clone(),
        None => crate::kernels::assemble_covariance(locations, model)?,
    };
    // rows of W C
    let mut wc = vec![0.0f64; m * n];
    par::for_each_chunk_mut(&mut wc, n, |i, row| {
        let (cols, vals) = basis.w().row(i);
        for j in 0..n {
            let mut acc = 0.0;
            for (k, &ck) in cols.iter().enumerate() {
                acc += vals[k] * c[(ck, j)];
            }
            row[j] = acc;
        }
    });
    // (W C) W^T, upper triangle mirrored
    let mut out = vec![0.0f64; m * m];
    par::for_each_chunk_mut(&mut out, m, |i, row| {
        let wc_i = &wc[i * n..(i + 1) * n];
        for j in i..m {
            let (cols, vals) = basis.w().row(j);
            let mut acc = 0.0;
            for (k, &ck) in cols.iter().enumerate() {
                acc += vals[k] * wc_i[ck];
            }
            row[j] = acc;
        }
    });
    for i in 0..m {
        for j in (i + 1)..m {
            out[j * m + i] = out[i * m + j];
        }
    }
    Ok(DMatrix::from_vec(m, m, out))
}

/// The transformed log-likelihood
/// `-(N-p)/2 log(2 pi) - 1/2 log det C_W - 1/2 Y_W^T C_W^{-1} Y_W`
/// evaluated for the given model (sigma2 included in C_W).
pub fn loglik_w(
    y_w: &DVector<f64>,
    basis: &MultilevelBasis,
    locations: &Points,
    model: &CovarianceModel,
    config: &LikelihoodConfig,
) -> Result<f64> {
    let m = basis.w_rows();
    if y_w.len() != m {
        return Err(Error::ShapeMismatch {
            expected: format!("Y_W of length {m}"),
            got: format!("{}", y_w.len()),
        });
    }
    config.validate()?;
    let fac = factor_cw(basis, locations, model, config)?;
    let quad = y_w.dot(&fac.solve(y_w));
    let dim = m as f64;
    Ok(-0.5 * dim * (2.0 * std::f64::consts::PI).ln() - 0.5 * fac.logdet() - 0.5 * quad)
}

/// Median pairwise distance over a seeded subsample of locations.
pub fn median_pairwise_distance(locations: &Points, seed: u64) -> f64 {
    let n = locations.len();
    let k = n.min(400);
    let mut rng = stream_rng(seed, streams::MEDIAN_DISTANCE_SUBSAMPLE);
    let idx: Vec<usize> = if k == n {
        (0..n).collect()
    } else {
        let mut v = sample(&mut rng, n, k).into_vec();
        v.sort_unstable();
        v
    };
    let mut dists = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in (a + 1)..k {
            dists.push(locations.dist(idx[a], idx[b]));
        }
    }
    dists.sort_by(|x, y| x.partial_cmp(y).unwrap());
    if dists.is_empty() {
        1.0
    } else {
        dists[dists.len() / 2]
    }
}

/// Maximum-likelihood estimate of (nu, rho) on the decoupled objective,
/// with sigma2 profiled in closed form when enabled. Returns the fitted
/// model and the full evaluation trace.
pub fn fit_theta(
    observations: &ObservationSet,
    _trend: &TrendBasis,
    basis: &MultilevelBasis,
    config: &LikelihoodConfig,
) -> Result<(CovarianceModel, Vec<FitTraceEntry>)> {
    config.validate()?;
    let locations = &observations.locations;
    let y = DVector::from_vec(observations.responses.clone());
    let y_w = basis.apply_w(&y)?;
    let m = basis.w_rows();
    if m == 0 {
        return Err(Error::InsufficientData(
            "N = p leaves no transformed data to estimate theta from".into(),
        ));
    }
    let dim = m as f64;
    let rho_bounds = config.rho_bounds.unwrap_or_else(|| {
        let med = median_pairwise_distance(locations, config.seed);
        (1e-3 * med, 1e3 * med)
    });

    let start = Instant::now();
    let trace = std::cell::RefCell::new(Vec::<FitTraceEntry>::new());
    let objective = |z: &[f64]| -> f64 {
        let nu = z[0].exp();
        let rho = z[1].exp();
        let model = match CovarianceModel::new(nu, rho, 1.0) {
            Ok(mo) => mo,
            Err(_) => return f64::INFINITY,
        };
        let outcome = factor_cw(basis, locations, &model, config).map(|fac| {
            let quad = y_w.dot(&fac.solve(&y_w));
            (fac.logdet(), quad)
        });
        let (ll, sigma2, feasible) = match outcome {
            Ok((logdet, quad)) if quad > 0.0 => {
                if config.profile_sigma2 {
                    let s2 = quad / dim;
                    let ll = -0.5 * dim * (2.0 * std::f64::consts::PI).ln()
                        - 0.5 * logdet
                        - 0.5 * dim * s2.ln()
                        - 0.5 * dim;
                    (ll, s2, true)
                } else {
                    let ll = -0.5 * dim * (2.0 * std::f64::consts::PI).ln()
                        - 0.5 * logdet
                        - 0.5 * quad;
                    (ll, 1.0, true)
                }
            }
            _ => (f64::NEG_INFINITY, f64::NAN, false),
        };
        let mut tr = trace.borrow_mut();
        let eval = tr.len();
        tr.push(FitTraceEntry {
            eval,
            nu,
            rho,
            sigma2,
            loglik: ll,
            feasible,
            wall_time: start.elapsed().as_secs_f64(),
        });
        -ll
    };

    let lower = [config.nu_bounds.0.ln(), rho_bounds.0.ln()];
    let upper = [config.nu_bounds.1.ln(), rho_bounds.1.ln()];
    let x0 = [
        0.5 * (lower[0] + upper[0]),
        0.5 * (lower[1] + upper[1]),
    ];
    let nm = nelder_mead(
        objective,
        &x0,
        &NelderMeadOptions {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            max_evals: config.max_evals,
            f_tol: 1e-9,
            step_fraction: 0.25,
        },
    );
    let trace = trace.into_inner();
    if !nm.converged || !nm.f.is_finite() {
        return Err(Error::EstimationFailed(
            "every likelihood evaluation was infeasible".into(),
        ));
    }
    let nu = nm.x[0].exp();
    let rho = nm.x[1].exp();
    let sigma2 = if config.profile_sigma2 {
        let model = CovarianceModel::new(nu, rho, 1.0)?;
        let fac = factor_cw(basis, locations, &model, config)?;
        y_w.dot(&fac.solve(&y_w)) / dim
    } else {
        1.0
    };
    Ok((CovarianceModel::new(nu, rho, sigma2)?, trace))
}
