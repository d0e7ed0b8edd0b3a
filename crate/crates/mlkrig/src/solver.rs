//! Conjugate-gradient solution of the transformed BLUP system
//! `C_W gamma_W = Y_W` and recovery of the original coefficients.

use crate::data::{ObservationSet, Points};
use crate::design::TrendBasis;
use crate::error::{Error, Result};
use crate::kernels::{CovarianceModel, CovOperator, DEFAULT_COV_MEMORY_BUDGET};
use crate::linalg::least_squares;
use crate::mlbasis::MultilevelBasis;
use crate::par;
use crate::rng::{stream_rng, streams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

/// Outcome of one iterative solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_relative_residual: f64,
    pub preconditioned: bool,
    pub matvec_count: usize,
    pub wall_time: f64,
}

/// Diagonal-preconditioner selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreconditionerPolicy {
    /// Estimate kappa(C_W) cheaply; precondition only when it is large.
    Auto,
    Always,
    Never,
}

/// Threshold on the estimated kappa(C_W) below which preconditioning is
/// skipped under `Auto`.
pub const PRECONDITIONER_SKIP_KAPPA: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Relative-residual stopping tolerance, measured in the
    /// unpreconditioned norm ||Y_W - C_W g|| / ||Y_W||.
    pub tol: f64,
    /// Defaults to `ceil(10 sqrt(N))` when None.
    pub max_iter: Option<usize>,
    pub preconditioner: PreconditionerPolicy,
    pub cov_memory_budget: usize,
    /// Seed for the condition-estimate probe under `Auto`.
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: None,
            preconditioner: PreconditionerPolicy::Auto,
            cov_memory_budget: DEFAULT_COV_MEMORY_BUDGET,
            seed: 0,
        }
    }
}

/// Fitted Kriging coefficients, ready for prediction.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub theta: CovarianceModel,
    pub beta_hat: DVector<f64>,
    pub gamma_hat: DVector<f64>,
    pub gamma_w: DVector<f64>,
    pub basis: Arc<MultilevelBasis>,
    pub trend: TrendBasis,
    pub locations: Points,
    pub responses: Vec<f64>,
}

/// The three-step product u -> W (C (W^T u)) without forming C_W.
pub struct MultilevelOperator<'a> {
    basis: &'a MultilevelBasis,
    cov: CovOperator<'a>,
}

impl<'a> MultilevelOperator<'a> {
    pub fn new(
        basis: &'a MultilevelBasis,
        locations: &'a Points,
        model: &CovarianceModel,
        budget: usize,
    ) -> Result<Self> {
        Ok(Self {
            basis,
            cov: CovOperator::with_budget(locations, model, budget)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.w_rows()
    }

    pub fn cov(&self) -> &CovOperator<'a> {
        &self.cov
    }

    pub fn apply(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let a = self.basis.apply_wt(u)?;
        let b = self.cov.matvec(&a);
        self.basis.apply_w(&b)
    }
}

/// One-shot W (C (W^T u)); builds the covariance operator each call.
pub fn multilevel_matvec(
    basis: &MultilevelBasis,
    locations: &Points,
    model: &CovarianceModel,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::ParamDomain("non-finite entry in u".into()));
    }
    MultilevelOperator::new(basis, locations, model, DEFAULT_COV_MEMORY_BUDGET)?.apply(u)
}

/// Diagonal of C_W: entry i is w_i^T C w_i over the sparse support of
/// W row i. Errors if any entry is not strictly positive.
pub fn build_preconditioner(
    basis: &MultilevelBasis,
    locations: &Points,
    model: &CovarianceModel,
) -> Result<DVector<f64>> {
    let cov = CovOperator::with_budget(locations, model, DEFAULT_COV_MEMORY_BUDGET)?;
    diag_cw(basis, &cov)
}

pub(crate) fn diag_cw(basis: &MultilevelBasis, cov: &CovOperator) -> Result<DVector<f64>> {
    let rows = basis.w_rows();
    let diag = par::map_indexed(rows, |i| {
        let (cols, vals) = basis.w().row(i);
        let mut acc = 0.0;
        for (a, &ca) in cols.iter().enumerate() {
            let va = vals[a];
            // diagonal term once, off-diagonal pairs twice by symmetry
            acc += va * va * cov.entry(ca, ca);
            for (b, &cb) in cols.iter().enumerate().skip(a + 1) {
                acc += 2.0 * va * vals[b] * cov.entry(ca, cb);
            }
        }
        acc
    });
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::NotPositiveDefinite(format!(
            "diag(C_W)[{i}] = {} for this theta",
            diag[i]
        )));
    }
    Ok(DVector::from_vec(diag))
}

/// Preconditioned conjugate gradients on a symmetric positive definite
/// operator. Convergence is judged on the unpreconditioned relative
/// residual. `observer` sees (iteration, current residual) after each step.
pub(crate) fn pcg<F>(
    apply: F,
    b: &DVector<f64>,
    precond_diag: Option<&DVector<f64>>,
    tol: f64,
    max_iter: usize,
    mut observer: Option<&mut dyn FnMut(usize, &DVector<f64>, f64)>,
) -> Result<(DVector<f64>, SolveReport)>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let start = Instant::now();
    let n = b.len();
    let b_norm = b.norm();
    let mut x = DVector::<f64>::zeros(n);
    let mut report = SolveReport {
        iterations: 0,
        final_relative_residual: 0.0,
        preconditioned: precond_diag.is_some(),
        matvec_count: 0,
        wall_time: 0.0,
    };
    if b_norm == 0.0 {
        report.wall_time = start.elapsed().as_secs_f64();
        return Ok((x, report));
    }
    let apply_precond = |r: &DVector<f64>| -> DVector<f64> {
        match precond_diag {
            Some(d) => DVector::from_fn(n, |i, _| r[i] / d[i]),
            None => r.clone(),
        }
    };
    let mut r = b.clone();
    let mut z = apply_precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut res = 1.0;
    for k in 1..=max_iter {
        let ap = apply(&p)?;
        report.matvec_count += 1;
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "curvature p^T A p = {pap} at iteration {k}"
            )));
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        res = r.norm() / b_norm;
        report.iterations = k;
        if let Some(obs) = observer.as_deref_mut() {
            obs(k, &x, res);
        }
        if res <= tol {
            report.final_relative_residual = res;
            report.wall_time = start.elapsed().as_secs_f64();
            return Ok((x, report));
        }
        z = apply_precond(&r);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        p = z + beta * p;
        rz = rz_new;
    }
    Err(Error::NonConvergence {
        iterations: report.iterations,
        residual: res,
        tol,
    })
}

/// Condition-number estimation settings.
#[derive(Debug, Clone)]
pub struct CondEstimateOptions {
    /// Below this dimension an exact dense eigen-decomposition is used.
    pub dense_limit: usize,
    /// Lanczos steps otherwise.
    pub lanczos_iters: usize,
    pub seed: u64,
}

impl Default for CondEstimateOptions {
    fn default() -> Self {
        Self {
            dense_limit: 2000,
            lanczos_iters: 50,
            seed: 0,
        }
    }
}

/// Extreme-eigenvalue ratio of a symmetric positive definite matrix.
pub fn condition_number_dense(m: &DMatrix<f64>) -> Result<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if !(min > 0.0) {
        return Err(Error::ConditionUnavailable(format!(
            "smallest eigenvalue {min} is not positive"
        )));
    }
    Ok(max / min)
}

/// lambda_max / lambda_min of a symmetric positive definite operator:
/// exact dense eigen-decomposition for small dimensions, a seeded Lanczos
/// estimate otherwise.
pub fn estimate_condition_number<F>(apply: F, dim: usize, opts: &CondEstimateOptions) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if dim == 0 {
        return Err(Error::ConditionUnavailable("zero-dimensional operator".into()));
    }
    if dim <= opts.dense_limit {
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        let mut e = DVector::<f64>::zeros(dim);
        for j in 0..dim {
            e[j] = 1.0;
            m.column_mut(j).copy_from(&apply(&e)?);
            e[j] = 0.0;
        }
        return condition_number_dense(&m);
    }
    lanczos_condition(apply, dim, opts)
}

fn lanczos_condition<F>(apply: F, dim: usize, opts: &CondEstimateOptions) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut rng = stream_rng(opts.seed, streams::LANCZOS_START);
    let mut v = DVector::from_fn(dim, |_, _| rng.gen::<f64>() - 0.5);
    v /= v.norm();
    let steps = opts.lanczos_iters.min(dim);
    let mut basis: Vec<DVector<f64>> = vec![v.clone()];
    let mut alphas = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::new();
    let mut scale: f64 = 0.0;
    for _ in 0..steps {
        let mut w = apply(basis.last().unwrap())?;
        let alpha = basis.last().unwrap().dot(&w);
        scale = scale.max(alpha.abs());
        alphas.push(alpha);
        w.axpy(-alpha, basis.last().unwrap(), 1.0);
        if basis.len() >= 2 {
            w.axpy(-betas[betas.len() - 1], &basis[basis.len() - 2], 1.0);
        }
        // full reorthogonalization, twice
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&w);
                w.axpy(-c, q, 1.0);
            }
        }
        let beta = w.norm();
        if beta <= 1e-12 * scale.max(1.0) {
            break;
        }
        betas.push(beta);
        basis.push(w / beta);
    }
    let k = alphas.len();
    if k < 2 {
        return Err(Error::ConditionUnavailable(
            "Lanczos broke down before two steps".into(),
        ));
    }
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    condition_number_dense(&t)
}

/// Solve the BLUP system in the transformed space and recover the
/// original-space coefficients:
/// Y_W = W Y; PCG on C_W gamma_W = Y_W; gamma = W^T gamma_W;
/// beta from least squares on X beta = Y - C gamma.
pub fn solve_blup(
    observations: &ObservationSet,
    trend: &TrendBasis,
    basis: &Arc<MultilevelBasis>,
    model: &CovarianceModel,
    opts: &SolveOptions,
) -> Result<(FittedModel, SolveReport)> {
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return Err(Error::ParamDomain(format!(
            "tol must be in (0, 1), got {}",
            opts.tol
        )));
    }
    let n = observations.len();
    if basis.n() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("basis over {n} observations"),
            got: format!("{}", basis.n()),
        });
    }
    let locations = &observations.locations;
    let y = DVector::from_vec(observations.responses.clone());
    let x = trend.design_matrix(locations)?;
    let start = Instant::now();

    if basis.w_rows() == 0 {
        // N = p: the transformed system is empty and the fit is pure trend
        let beta_hat = least_squares(&x, &y)?;
        let report = SolveReport {
            iterations: 0,
            final_relative_residual: 0.0,
            preconditioned: false,
            matvec_count: 0,
            wall_time: start.elapsed().as_secs_f64(),
        };
        let fitted = FittedModel {
            theta: *model,
            beta_hat,
            gamma_hat: DVector::zeros(n),
            gamma_w: DVector::zeros(0),
            basis: basis.clone(),
            trend: trend.clone(),
            locations: locations.clone(),
            responses: observations.responses.clone(),
        };
        return Ok((fitted, report));
    }

    let op = MultilevelOperator::new(basis, locations, model, opts.cov_memory_budget)?;
    let y_w = basis.apply_w(&y)?;

    let use_precond = match opts.preconditioner {
        PreconditionerPolicy::Always => true,
        PreconditionerPolicy::Never => false,
        PreconditionerPolicy::Auto => {
            let probe = CondEstimateOptions {
                dense_limit: 0,
                lanczos_iters: 20,
                seed: opts.seed,
            };
            match estimate_condition_number(|u| op.apply(u), op.dim(), &probe) {
                Ok(kappa) => kappa >= PRECONDITIONER_SKIP_KAPPA,
                Err(_) => true,
            }
        }
    };
    let precond = if use_precond {
        Some(diag_cw(basis, op.cov())?)
    } else {
        None
    };

    let max_iter = opts
        .max_iter
        .unwrap_or_else(|| (10.0 * (n as f64).sqrt()).ceil() as usize);
    let (gamma_w, mut report) = pcg(
        |u| op.apply(u),
        &y_w,
        precond.as_ref(),
        opts.tol,
        max_iter,
        None,
    )?;

    let gamma_hat = basis.apply_wt(&gamma_w)?;
    let c_gamma = op.cov().matvec(&gamma_hat);
    let beta_hat = least_squares(&x, &(&y - &c_gamma))?;
    report.wall_time = start.elapsed().as_secs_f64();

    let fitted = FittedModel {
        theta: *model,
        beta_hat,
        gamma_hat,
        gamma_w,
        basis: basis.clone(),
        trend: trend.clone(),
        locations: locations.clone(),
        responses: observations.responses.clone(),
    };
    Ok((fitted, report))
}

/// Dense bordered-system oracle: solves
/// `[C X; X^T 0] [gamma; beta] = [Y; 0]` by LU. Exact reference for the
/// multilevel path on instances small enough to factor directly.
pub fn dense_kkt_solve(
    locations: &Points,
    responses: &[f64],
    x: &DMatrix<f64>,
    model: &CovarianceModel,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = locations.len();
    let p = x.ncols();
    let c = crate::kernels::assemble_covariance(locations, model)?;
    let mut kkt = DMatrix::<f64>::zeros(n + p, n + p);
    kkt.view_mut((0, 0), (n, n)).copy_from(&c);
    kkt.view_mut((0, n), (n, p)).copy_from(x);
    kkt.view_mut((n, 0), (p, n)).copy_from(&x.transpose());
    let mut rhs = DVector::<f64>::zeros(n + p);
    for i in 0..n {
        rhs[i] = responses[i];
    }
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NotPositiveDefinite("bordered system is singular".into()))?;
    Ok((sol.rows(0, n).into_owned(), sol.rows(n, p).into_owned()))
}
