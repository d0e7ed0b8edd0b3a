//! BLUP point prediction and kriging mean-squared error.

use crate::error::{Error, Result};
use crate::kernels::{assemble_covariance, cross_covariance};
use crate::par;
use crate::solver::FittedModel;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

/// Largest N for which the dense kriging-variance formula is evaluated;
/// beyond it `predict_mse` reports the value as unavailable.
pub const MSE_DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub y_hat: f64,
    /// Kriging MSE when computed; None outside the dense-feasible regime.
    pub mse: Option<f64>,
    pub x0: Vec<f64>,
}

/// BLUP point prediction `k(x0)^T beta + c(theta)^T gamma` from stored
/// coefficients; no new solve per point.
pub fn predict(model: &FittedModel, x0: &[f64]) -> Result<Prediction> {
    let k = model.trend.eval(x0)?;
    let c = cross_covariance(&model.locations, x0, &model.theta)?;
    Ok(Prediction {
        y_hat: k.dot(&model.beta_hat) + c.dot(&model.gamma_hat),
        mse: None,
        x0: x0.to_vec(),
    })
}

/// Predictions at many points, parallel over points.
pub fn predict_batch(model: &FittedModel, points: &crate::data::Points) -> Result<Vec<f64>> {
    if points.dim() != model.locations.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("points of dimension {}", model.locations.dim()),
            got: format!("{}", points.dim()),
        });
    }
    let out: Vec<Result<f64>> = par::map_indexed(points.len(), |i| {
        predict(model, points.point(i)).map(|p| p.y_hat)
    });
    out.into_iter().collect()
}

/// Factored universal-kriging variance context. Holds the correlation-form
/// Cholesky of C and of X^T C^{-1} X so batches of MSE queries reuse one
/// factorization.
pub struct MsePredictor<'a> {
    model: &'a FittedModel,
    chol_r: Cholesky<f64, Dyn>,
    chol_xtrx: Cholesky<f64, Dyn>,
    x: DMatrix<f64>,
}

impl<'a> MsePredictor<'a> {
    /// None when N exceeds `MSE_DENSE_LIMIT` (the formula needs C^{-1}).
    pub fn new(model: &'a FittedModel) -> Result<Option<Self>> {
        Self::with_limit(model, MSE_DENSE_LIMIT)
    }

    pub fn with_limit(model: &'a FittedModel, dense_limit: usize) -> Result<Option<Self>> {
        let n = model.locations.len();
        if n > dense_limit {
            return Ok(None);
        }
        let corr = model.theta.correlation_form();
        let r = assemble_covariance(&model.locations, &corr)?;
        let chol_r = r
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("correlation matrix".into()))?;
        let x = model.trend.design_matrix(&model.locations)?;
        let rinv_x = chol_r.solve(&x);
        let xtrx = x.transpose() * &rinv_x;
        let chol_xtrx = xtrx
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("X^T C^{-1} X".into()))?;
        Ok(Some(Self {
            model,
            chol_r,
            chol_xtrx,
            x,
        }))
    }

    /// Kriging MSE at x0:
    /// `sigma2 [1 + u^T (X^T R^{-1} X)^{-1} u - c^T R^{-1} c]` with
    /// `u = X^T R^{-1} c - k(x0)`, all in correlation form. Tiny negative
    /// values from roundoff are clamped to zero.
    pub fn mse(&self, x0: &[f64]) -> Result<f64> {
        let corr = self.model.theta.correlation_form();
        let k = self.model.trend.eval(x0)?;
        let c = cross_covariance(&self.model.locations, x0, &corr)?;
        let rinv_c = self.chol_r.solve(&c);
        let u = self.x.transpose() * &rinv_c - &k;
        let trend_term = u.dot(&self.chol_xtrx.solve(&u));
        let data_term = c.dot(&rinv_c);
        let sigma2 = self.model.theta.sigma2;
        let mse = sigma2 * (1.0 + trend_term - data_term);
        if mse >= 0.0 {
            Ok(mse)
        } else {
            let scale = sigma2 * (1.0 + trend_term.abs() + data_term.abs());
            if mse >= -1e-10 * scale {
                Ok(0.0)
            } else {
                Err(Error::NotPositiveDefinite(format!(
                    "kriging variance {mse} is negative beyond roundoff at this theta"
                )))
            }
        }
    }

    /// Implicit BLUP weights lambda with X^T lambda = k(x0); exposed for
    /// verification of the unbiasedness constraint.
    pub fn weights(&self, x0: &[f64]) -> Result<DVector<f64>> {
        let corr = self.model.theta.correlation_form();
        let k = self.model.trend.eval(x0)?;
        let c = cross_covariance(&self.model.locations, x0, &corr)?;
        let rinv_c = self.chol_r.solve(&c);
        let u = self.x.transpose() * &rinv_c - &k;
        let m_u = self.chol_xtrx.solve(&u);
        Ok(self.chol_r.solve(&(&c - &self.x * &m_u)))
    }
}

/// One-shot kriging MSE at x0; factors C per call. `Ok(None)` marks the
/// value unavailable because N is beyond the dense-feasible regime.
pub fn predict_mse(model: &FittedModel, x0: &[f64]) -> Result<Option<f64>> {
    match MsePredictor::new(model)? {
        Some(p) => p.mse(x0).map(Some),
        None => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ObservationSet, Points};
    use crate::design::TrendBasis;
    use crate::kdtree::KdTree;
    use crate::kernels::CovarianceModel;
    use crate::mlbasis::MultilevelBasis;
    use crate::rng::stream_rng;
    use crate::solver::{dense_kkt_solve, solve_blup, SolveOptions};
    use rand::Rng;
    use std::sync::Arc;

    fn fit_instance(n: usize, seed: u64) -> FittedModel {
        let mut rng = stream_rng(seed, 5000);
        let pts = Points::new((0..n * 2).map(|_| rng.gen::<f64>() * 2.0).collect(), 2).unwrap();
        let trend = TrendBasis::new(2, 1).unwrap();
        let x = trend.design_matrix(&pts).unwrap();
        let model = CovarianceModel::new(0.5, 0.5, 1.5).unwrap();
        let c = crate::kernels::assemble_covariance(&pts, &model).unwrap();
        let chol = c.cholesky().unwrap();
        let z = DVector::from_fn(n, |_, _| {
            let u1: f64 = rng.gen();
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        let y = &x * DVector::from_vec(vec![3.0, -1.0, 0.5]) + chol.l() * z;
        let tree = KdTree::build(&pts, 8).unwrap();
        let basis = Arc::new(MultilevelBasis::build(&x, &tree).unwrap());
        let obs = ObservationSet::new(pts, y.iter().copied().collect()).unwrap();
        let opts = SolveOptions {
            tol: 1e-12,
            ..Default::default()
        };
        solve_blup(&obs, &trend, &basis, &model, &opts).unwrap().0
    }

    #[test]
    fn interpolates_training_points() {
        let fit = fit_instance(150, 50);
        for j in [0usize, 17, 90, 149] {
            let pred = predict(&fit, fit.locations.point(j)).unwrap();
            let truth = fit.responses[j];
            assert!(
                (pred.y_hat - truth).abs() <= 1e-6 * truth.abs().max(1.0),
                "row {j}: {} vs {truth}",
                pred.y_hat
            );
        }
    }

    #[test]
    fn matches_dense_kkt_prediction() {
        let fit = fit_instance(130, 51);
        let x = fit.trend.design_matrix(&fit.locations).unwrap();
        let (gamma_o, beta_o) =
            dense_kkt_solve(&fit.locations, &fit.responses, &x, &fit.theta).unwrap();
        let mut rng = stream_rng(51, 5001);
        for _ in 0..10 {
            let q = [rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0];
            let pred = predict(&fit, &q).unwrap();
            let k = fit.trend.eval(&q).unwrap();
            let c = cross_covariance(&fit.locations, &q, &fit.theta).unwrap();
            let oracle = k.dot(&beta_o) + c.dot(&gamma_o);
            assert!(
                (pred.y_hat - oracle).abs() <= 1e-8 * oracle.abs().max(1.0),
                "{} vs {oracle}",
                pred.y_hat
            );
        }
    }

    #[test]
    fn pure_trend_fit_predicts_by_trend() {
        let mut rng = stream_rng(52, 5002);
        let pts = Points::new((0..80 * 2).map(|_| rng.gen::<f64>()).collect(), 2).unwrap();
        let trend = TrendBasis::new(2, 1).unwrap();
        let x = trend.design_matrix(&pts).unwrap();
        let beta = DVector::from_vec(vec![2.0, 1.0, -3.0]);
        let y = &x * &beta;
        let tree = KdTree::build(&pts, 8).unwrap();
        let basis = Arc::new(MultilevelBasis::build(&x, &tree).unwrap());
        let model = CovarianceModel::new(0.5, 0.3, 1.0).unwrap();
        let obs = ObservationSet::new(pts, y.iter().copied().collect()).unwrap();
        let opts = SolveOptions {
            tol: 1e-10,
            ..Default::default()
        };
        let (fit, _) = solve_blup(&obs, &trend, &basis, &model, &opts).unwrap();
        let q = [0.25, 0.75];
        let pred = predict(&fit, &q).unwrap();
        let expect = fit.trend.eval(&q).unwrap().dot(&beta);
        assert!((pred.y_hat - expect).abs() <= 1e-7 * expect.abs().max(1.0));
    }

    #[test]
    fn mse_zero_at_training_points_and_matches_bordered_oracle() {
        let fit = fit_instance(100, 53);
        let predictor = MsePredictor::new(&fit).unwrap().unwrap();
        for j in [3usize, 42, 77] {
            let v = predictor.mse(fit.locations.point(j)).unwrap();
            assert!(v <= 1e-8 * fit.theta.sigma2, "mse at training point: {v}");
        }

        // textbook universal-kriging variance via the dense bordered system:
        // mse = sigma2 * (1) - [c; k]^T solve([R X; X^T 0], [c; k])
        let corr = fit.theta.correlation_form();
        let r = crate::kernels::assemble_covariance(&fit.locations, &corr).unwrap();
        let x = fit.trend.design_matrix(&fit.locations).unwrap();
        let n = fit.locations.len();
        let p = x.ncols();
        let mut kkt = DMatrix::<f64>::zeros(n + p, n + p);
        kkt.view_mut((0, 0), (n, n)).copy_from(&r);
        kkt.view_mut((0, n), (n, p)).copy_from(&x);
        kkt.view_mut((n, 0), (p, n)).copy_from(&x.transpose());
        let lu = kkt.lu();
        let mut rng = stream_rng(53, 5003);
        for _ in 0..8 {
            let q = [rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0];
            let c = cross_covariance(&fit.locations, &q, &corr).unwrap();
            let k = fit.trend.eval(&q).unwrap();
            let mut rhs = DVector::<f64>::zeros(n + p);
            rhs.rows_mut(0, n).copy_from(&c);
            rhs.rows_mut(n, p).copy_from(&k);
            let sol = lu.solve(&rhs).unwrap();
            let oracle = fit.theta.sigma2 * (1.0 - rhs.dot(&sol));
            let got = predictor.mse(&q).unwrap();
            assert!(
                (got - oracle).abs() <= 1e-8 * oracle.abs().max(fit.theta.sigma2),
                "{got} vs {oracle}"
            );
        }
    }

    #[test]
    fn far_field_mse_exceeds_prior_variance() {
        let fit = fit_instance(80, 54);
        let predictor = MsePredictor::new(&fit).unwrap().unwrap();
        let far = [500.0, -500.0];
        let v = predictor.mse(&far).unwrap();
        assert!(v >= fit.theta.sigma2, "far-field mse {v}");
    }

    #[test]
    fn unbiasedness_constraint_on_weights() {
        let fit = fit_instance(90, 55);
        let predictor = MsePredictor::new(&fit).unwrap().unwrap();
        let x = fit.trend.design_matrix(&fit.locations).unwrap();
        let mut rng = stream_rng(55, 5004);
        for _ in 0..5 {
            let q = [rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0];
            let lambda = predictor.weights(&q).unwrap();
            let k = fit.trend.eval(&q).unwrap();
            let xt_lambda = x.transpose() * &lambda;
            assert!(
                (xt_lambda - &k).amax() <= 1e-8,
                "X^T lambda differs from k(x0)"
            );
        }
    }

    #[test]
    fn mse_unavailable_beyond_dense_limit() {
        let fit = fit_instance(60, 56);
        let none = MsePredictor::with_limit(&fit, 10).unwrap();
        assert!(none.is_none());
        assert!(predict_mse(&fit, &[0.5, 0.5]).unwrap().is_some());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let fit = fit_instance(60, 57);
        assert!(predict(&fit, &[0.5]).is_err());
    }
}
