//! Imputation methods: multilevel Kriging plus the GLS, kNN, and
//! kNN-regression baselines.
//!
//! All methods share one frame: training rows are the complete rows of
//! the dataset, target rows are those with predictors present and the
//! response missing, and prediction happens in the z-scored predictor
//! space fitted on the training rows.

use super::dataset::TabularDataset;
use super::metrics::{compute_metrics, MetricsReport};
use crate::data::{ObservationSet, Points};
use crate::design::TrendBasis;
use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::kernels::CovarianceModel;
use crate::likelihood::{fit_theta, FitTraceEntry, LikelihoodConfig};
use crate::linalg::least_squares;
use crate::mlbasis::MultilevelBasis;
use crate::par;
use crate::predict::predict_batch;
use crate::rng::{stream_rng, streams};
use crate::solver::{solve_blup, FittedModel, SolveOptions};
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImputeMethod {
    Kriging,
    Gls,
    Knn,
    KnnRegression,
}

impl ImputeMethod {
    pub fn name(self) -> &'static str {
        match self {
            ImputeMethod::Kriging => "kriging",
            ImputeMethod::Gls => "gls",
            ImputeMethod::Knn => "knn",
            ImputeMethod::KnnRegression => "knn-reg",
        }
    }
}

/// How the covariance parameters are obtained for kriging/GLS.
#[derive(Debug, Clone)]
pub enum ThetaSpec {
    Fixed(CovarianceModel),
    Fit(LikelihoodConfig),
}

#[derive(Debug, Clone)]
pub struct ImputeConfig {
    /// Trend total degree.
    pub degree: usize,
    pub theta: ThetaSpec,
    /// Estimate theta on a seeded training subsample of this size; the
    /// final BLUP solve always uses every training row.
    pub fit_subsample: Option<usize>,
    pub tol: f64,
    pub max_iter: Option<usize>,
    /// kd-tree leaf capacity; None uses the p-dependent default.
    pub leaf_min: Option<usize>,
    /// Neighbor count for the kNN baselines.
    pub k_neighbors: usize,
    pub seed: u64,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        Self {
            degree: 1,
            theta: ThetaSpec::Fit(LikelihoodConfig::default()),
            fit_subsample: Some(800),
            tol: 1e-6,
            max_iter: None,
            leaf_min: None,
            k_neighbors: 10,
            seed: 0,
        }
    }
}

/// One method's output: values for the requested rows, in dataset order.
#[derive(Debug, Clone)]
pub struct ImputeOutcome {
    pub method: String,
    /// (row index, imputed value) for every target row.
    pub values: Vec<(usize, f64)>,
    /// Present when ground truth was supplied.
    pub metrics: Option<MetricsReport>,
    /// Fitted covariance parameters (kriging/GLS with ThetaSpec::Fit).
    pub fitted_theta: Option<CovarianceModel>,
    pub fit_trace: Vec<FitTraceEntry>,
    /// Training rows collapsed because their predictor vectors coincided.
    pub n_duplicates_merged: usize,
}

/// Per-predictor standardization fitted on training rows; all methods
/// measure distance in this z-scored space.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PredictorScaling {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl PredictorScaling {
    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(k, v)| (v - self.mean[k]) / self.std[k])
            .collect()
    }
}

/// The shared regression frame extracted from a dataset.
struct Frame {
    train_rows: Vec<usize>,
    target_rows: Vec<usize>,
    /// z-scored predictor matrix for training rows (deduplicated).
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
    /// z-scored predictors for target rows.
    target_x: Vec<Vec<f64>>,
    scaling: PredictorScaling,
    n_duplicates_merged: usize,
}

fn build_frame(
    dataset: &TabularDataset,
    response: &str,
    predictors: &[String],
) -> Result<Frame> {
    let resp_col = dataset.column_index(response)?;
    let pred_cols: Vec<usize> = predictors
        .iter()
        .map(|p| dataset.column_index(p))
        .collect::<Result<_>>()?;
    if pred_cols.is_empty() {
        return Err(Error::Config("at least one predictor required".into()));
    }
    let mut train_rows = Vec::new();
    let mut target_rows = Vec::new();
    for r in 0..dataset.n_rows() {
        let preds_ok = pred_cols.iter().all(|&c| dataset.get(r, c).is_some());
        match (preds_ok, dataset.get(r, resp_col).is_some()) {
            (true, true) => train_rows.push(r),
            (true, false) => target_rows.push(r),
            (false, false) => {
                return Err(Error::DegenerateInput(format!(
                    "row {r} needs imputation but has missing predictors"
                )))
            }
            (false, true) => {} // unusable for training, nothing to impute
        }
    }
    if train_rows.is_empty() {
        return Err(Error::InsufficientData("no complete training rows".into()));
    }
    // z-score statistics over training rows
    let d = pred_cols.len();
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    for &r in &train_rows {
        for (k, &c) in pred_cols.iter().enumerate() {
            mean[k] += dataset.get(r, c).unwrap();
        }
    }
    for m in &mut mean {
        *m /= train_rows.len() as f64;
    }
    for &r in &train_rows {
        for (k, &c) in pred_cols.iter().enumerate() {
            let v = dataset.get(r, c).unwrap() - mean[k];
            var[k] += v * v;
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = (v / train_rows.len() as f64).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let zrow = |r: usize| -> Vec<f64> {
        pred_cols
            .iter()
            .enumerate()
            .map(|(k, &c)| (dataset.get(r, c).unwrap() - mean[k]) / std[k])
            .collect()
    };

    // collapse exact predictor duplicates, averaging their responses;
    // coincident locations would make the covariance matrix singular
    let mut seen: std::collections::HashMap<Vec<u64>, usize> = std::collections::HashMap::new();
    let mut train_x: Vec<Vec<f64>> = Vec::new();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for &r in &train_rows {
        let z = zrow(r);
        let key: Vec<u64> = z.iter().map(|v| v.to_bits()).collect();
        let y = dataset.get(r, resp_col).unwrap();
        match seen.entry(key) {
            std::collections::hash_map::Entry::Occupied(e) => {
                let slot = *e.get();
                sums[slot].0 += y;
                sums[slot].1 += 1;
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(train_x.len());
                train_x.push(z);
                sums.push((y, 1));
            }
        }
    }
    let n_duplicates_merged = train_rows.len() - train_x.len();
    let train_y: Vec<f64> = sums.iter().map(|(s, c)| s / *c as f64).collect();
    let target_x: Vec<Vec<f64>> = target_rows.iter().map(|&r| zrow(r)).collect();
    Ok(Frame {
        train_rows,
        target_rows,
        train_x,
        train_y,
        target_x,
        scaling: PredictorScaling { mean, std },
        n_duplicates_merged,
    })
}

/// A fitted kriging regression over a tabular frame: the BLUP coefficients
/// plus the predictor standardization needed to place new rows in the
/// same space. This is the unit the CLI persists and reloads.
#[derive(Debug, Clone)]
pub struct KrigingImputer {
    pub model: FittedModel,
    pub scaling: PredictorScaling,
    pub response: String,
    pub predictors: Vec<String>,
    pub fitted_theta: Option<CovarianceModel>,
    pub fit_trace: Vec<FitTraceEntry>,
    pub n_duplicates_merged: usize,
    /// leaf capacity used for the kd-tree (recorded for rebuilds).
    pub leaf_min: usize,
}

impl KrigingImputer {
    pub fn fit(
        dataset: &TabularDataset,
        response: &str,
        predictors: &[String],
        cfg: &ImputeConfig,
    ) -> Result<Self> {
        let frame = build_frame(dataset, response, predictors)?;
        Self::fit_frame(frame, response, predictors, cfg)
    }

    fn fit_frame(
        frame: Frame,
        response: &str,
        predictors: &[String],
        cfg: &ImputeConfig,
    ) -> Result<Self> {
        let d = frame.train_x[0].len();
        let n = frame.train_x.len();
        let locations = Points::from_rows(&frame.train_x)?;
        let trend = TrendBasis::fitted(d, cfg.degree, &locations)?;
        let p = trend.p();
        if n < p {
            return Err(Error::InsufficientData(format!(
                "{n} training rows cannot support a degree-{} trend with p = {p}",
                cfg.degree
            )));
        }
        let obs = ObservationSet::new(locations.clone(), frame.train_y.clone())?;

        let (theta, trace, fitted) = match &cfg.theta {
            ThetaSpec::Fixed(model) => (*model, Vec::new(), None),
            ThetaSpec::Fit(like_cfg) => {
                // estimate on a subsample when configured, solve on everything
                let (fit_obs, fit_locations) = match cfg.fit_subsample {
                    Some(k) if k < n => {
                        let mut rng = stream_rng(cfg.seed, streams::FIT_SUBSAMPLE);
                        let mut idx = sample(&mut rng, n, k).into_vec();
                        idx.sort_unstable();
                        let locs = locations.select(&idx);
                        let ys: Vec<f64> = idx.iter().map(|&i| frame.train_y[i]).collect();
                        (ObservationSet::new(locs.clone(), ys)?, locs)
                    }
                    _ => (obs.clone(), locations.clone()),
                };
                let sub_trend = TrendBasis::fitted(d, cfg.degree, &fit_locations)?;
                let leaf = cfg
                    .leaf_min
                    .unwrap_or_else(|| crate::default_leaf_min(sub_trend.p()));
                let tree = KdTree::build(&fit_locations, leaf)?;
                let x = sub_trend.design_matrix(&fit_locations)?;
                let basis = MultilevelBasis::build(&x, &tree)?;
                let mut like_cfg = like_cfg.clone();
                like_cfg.seed = cfg.seed;
                let (theta, trace) = fit_theta(&fit_obs, &sub_trend, &basis, &like_cfg)?;
                (theta, trace, Some(theta))
            }
        };

        let leaf_min = cfg.leaf_min.unwrap_or_else(|| crate::default_leaf_min(p));
        let tree = KdTree::build(&locations, leaf_min)?;
        let x = trend.design_matrix(&locations)?;
        let basis = Arc::new(MultilevelBasis::build(&x, &tree)?);
        // imputation runs at tighter tolerances than the benchmark default,
        // so allow proportionally more iterations
        let max_iter = cfg
            .max_iter
            .unwrap_or_else(|| 50 * (n as f64).sqrt().ceil() as usize + 200);
        let opts = SolveOptions {
            tol: cfg.tol,
            max_iter: Some(max_iter),
            seed: cfg.seed,
            ..Default::default()
        };
        let (model, _report) = solve_blup(&obs, &trend, &basis, &theta, &opts)?;
        Ok(Self {
            model,
            scaling: frame.scaling,
            response: response.to_string(),
            predictors: predictors.to_vec(),
            fitted_theta: fitted,
            fit_trace: trace,
            n_duplicates_merged: frame.n_duplicates_merged,
            leaf_min,
        })
    }

    fn raw_rows(&self, dataset: &TabularDataset, rows: &[usize]) -> Result<Vec<Vec<f64>>> {
        let cols: Vec<usize> = self
            .predictors
            .iter()
            .map(|p| dataset.column_index(p))
            .collect::<Result<_>>()?;
        rows.iter()
            .map(|&r| {
                cols.iter()
                    .map(|&c| {
                        dataset.get(r, c).ok_or_else(|| {
                            Error::DegenerateInput(format!(
                                "row {r} has a missing predictor"
                            ))
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Kriging predictions for the given dataset rows.
    pub fn predict_rows(&self, dataset: &TabularDataset, rows: &[usize]) -> Result<Vec<f64>> {
        let raw = self.raw_rows(dataset, rows)?;
        let z: Vec<Vec<f64>> = raw.iter().map(|r| self.scaling.apply(r)).collect();
        predict_batch(&self.model, &Points::from_rows(&z)?)
    }

    /// Trend-only (GLS) predictions for the given dataset rows.
    pub fn predict_gls_rows(&self, dataset: &TabularDataset, rows: &[usize]) -> Result<Vec<f64>> {
        let raw = self.raw_rows(dataset, rows)?;
        let z: Vec<Vec<f64>> = raw.iter().map(|r| self.scaling.apply(r)).collect();
        let pts = Points::from_rows(&z)?;
        let out: Vec<Result<f64>> = par::map_indexed(pts.len(), |i| {
            Ok(self.model.trend.eval(pts.point(i))?.dot(&self.model.beta_hat))
        });
        out.into_iter().collect()
    }
}

fn knn_indices(train_x: &[Vec<f64>], query: &[f64], k: usize) -> Vec<usize> {
    // ties break toward the lower row index via the (distance, index) key
    let mut scored: Vec<(f64, usize)> = train_x
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let d2: f64 = x
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d2, i)
        })
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    scored.iter().take(k).map(|&(_, i)| i).collect()
}

fn knn_mean(frame: &Frame, k: usize, query: &[f64]) -> f64 {
    let idx = knn_indices(&frame.train_x, query, k);
    idx.iter().map(|&i| frame.train_y[i]).sum::<f64>() / idx.len() as f64
}

/// Local least squares on the k nearest neighbors (intercept plus linear
/// terms), evaluated at the query; falls back to the neighbor mean when
/// the local design is singular (coincident neighbors).
fn knn_regression(frame: &Frame, k: usize, query: &[f64]) -> f64 {
    let idx = knn_indices(&frame.train_x, query, k);
    let d = query.len();
    let mut a = DMatrix::<f64>::zeros(idx.len(), d + 1);
    let mut b = DVector::<f64>::zeros(idx.len());
    for (r, &i) in idx.iter().enumerate() {
        a[(r, 0)] = 1.0;
        for c in 0..d {
            a[(r, c + 1)] = frame.train_x[i][c];
        }
        b[r] = frame.train_y[i];
    }
    match least_squares(&a, &b) {
        Ok(coef) => {
            let mut v = coef[0];
            for c in 0..d {
                v += coef[c + 1] * query[c];
            }
            v
        }
        Err(_) => idx.iter().map(|&i| frame.train_y[i]).sum::<f64>() / idx.len() as f64,
    }
}

/// Run one imputation method over the dataset's missing-response rows.
///
/// `truth` supplies held-back responses (aligned with the target rows in
/// row order) for metric computation; rows without truth are skipped in
/// the metrics but still imputed.
pub fn impute_with_method(
    dataset: &TabularDataset,
    response: &str,
    predictors: &[String],
    method: ImputeMethod,
    cfg: &ImputeConfig,
    truth: Option<&[Option<f64>]>,
) -> Result<ImputeOutcome> {
    let frame = build_frame(dataset, response, predictors)?;
    if let Some(t) = truth {
        if t.len() != frame.target_rows.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} truth slots", frame.target_rows.len()),
                got: format!("{}", t.len()),
            });
        }
    }
    if frame.target_rows.is_empty() {
        return Ok(ImputeOutcome {
            method: method.name().into(),
            values: Vec::new(),
            metrics: None,
            fitted_theta: None,
            fit_trace: Vec::new(),
            n_duplicates_merged: frame.n_duplicates_merged,
        });
    }

    let mut fitted_theta = None;
    let mut fit_trace = Vec::new();
    let n_duplicates_merged = frame.n_duplicates_merged;
    let target_rows = frame.target_rows.clone();
    let predictions: Vec<f64> = match method {
        ImputeMethod::Kriging | ImputeMethod::Gls => {
            let target_x = frame.target_x.clone();
            let imputer = KrigingImputer::fit_frame(frame, response, predictors, cfg)?;
            let targets = Points::from_rows(&target_x)?;
            let out = match method {
                ImputeMethod::Kriging => predict_batch(&imputer.model, &targets)?,
                ImputeMethod::Gls => {
                    // trend-only prediction under the same fitted theta
                    let res: Vec<Result<f64>> = par::map_indexed(targets.len(), |i| {
                        Ok(imputer
                            .model
                            .trend
                            .eval(targets.point(i))?
                            .dot(&imputer.model.beta_hat))
                    });
                    res.into_iter().collect::<Result<Vec<f64>>>()?
                }
                _ => unreachable!(),
            };
            fitted_theta = imputer.fitted_theta;
            fit_trace = imputer.fit_trace;
            out
        }
        ImputeMethod::Knn => {
            let k = cfg.k_neighbors;
            if k == 0 || k > frame.train_x.len() {
                return Err(Error::ParamDomain(format!(
                    "k = {k} outside 1..={}",
                    frame.train_x.len()
                )));
            }
            par::map_indexed(frame.target_x.len(), |i| {
                knn_mean(&frame, k, &frame.target_x[i])
            })
        }
        ImputeMethod::KnnRegression => {
            let k = cfg.k_neighbors;
            if k == 0 || k > frame.train_x.len() {
                return Err(Error::ParamDomain(format!(
                    "k = {k} outside 1..={}",
                    frame.train_x.len()
                )));
            }
            par::map_indexed(frame.target_x.len(), |i| {
                knn_regression(&frame, k, &frame.target_x[i])
            })
        }
    };

    let metrics = match truth {
        Some(t) => {
            let mut y_true = Vec::new();
            let mut y_pred = Vec::new();
            for (i, slot) in t.iter().enumerate() {
                if let Some(y) = slot {
                    y_true.push(*y);
                    y_pred.push(predictions[i]);
                }
            }
            if y_true.is_empty() {
                None
            } else {
                Some(compute_metrics(method.name(), &y_true, &y_pred)?)
            }
        }
        None => None,
    };

    Ok(ImputeOutcome {
        method: method.name().into(),
        values: target_rows.iter().copied().zip(predictions).collect(),
        metrics,
        fitted_theta,
        fit_trace,
        n_duplicates_merged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impute::dataset::make_split;
    use crate::kernels::assemble_covariance;

    /// Continuous GP tabular data drawn exactly from the trend+field model.
    pub(crate) fn gp_table(
        n: usize,
        d: usize,
        model: &CovarianceModel,
        beta_scale: f64,
        seed: u64,
    ) -> TabularDataset {
        use rand::Rng;
        let mut rng = stream_rng(seed, streams::GP_DRAW);
        let pts = Points::new((0..n * d).map(|_| rng.gen::<f64>() * 4.0).collect(), d).unwrap();
        let trend = TrendBasis::new(d, 1).unwrap();
        let x = trend.design_matrix(&pts).unwrap();
        let beta = DVector::from_fn(x.ncols(), |_, _| (rng.gen::<f64>() - 0.5) * beta_scale);
        let c = assemble_covariance(&pts, model).unwrap();
        let chol = c.cholesky().unwrap();
        let z = DVector::from_fn(n, |_, _| {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        let y = &x * &beta + chol.l() * z;

        let mut columns: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
        columns.push("y".into());
        let mut cells = Vec::with_capacity(n * (d + 1));
        for i in 0..n {
            for k in 0..d {
                cells.push(Some(pts.point(i)[k]));
            }
            cells.push(Some(y[i]));
        }
        TabularDataset::new(columns, cells).unwrap()
    }

    fn predictors(d: usize) -> Vec<String> {
        (0..d).map(|k| format!("x{k}")).collect()
    }

    #[test]
    fn kriging_interpolates_duplicated_validation_point() {
        // a validation row whose predictors equal a training row's is
        // imputed with that training response (no-nugget interpolation)
        let model = CovarianceModel::new(1.5, 0.8, 1.0).unwrap();
        let mut ds = gp_table(60, 2, &model, 2.0, 60);
        let ycol = ds.column_index("y").unwrap();
        // duplicate row 5's predictors into a fresh row with missing y
        let x0 = ds.get(5, 0);
        let x1 = ds.get(5, 1);
        let y5 = ds.get(5, ycol).unwrap();
        let mut cells = Vec::new();
        for r in 0..ds.n_rows() {
            for c in 0..ds.n_cols() {
                cells.push(ds.get(r, c));
            }
        }
        cells.extend_from_slice(&[x0, x1, None]);
        ds = TabularDataset::new(ds.columns().to_vec(), cells).unwrap();

        let cfg = ImputeConfig {
            theta: ThetaSpec::Fixed(model),
            tol: 1e-10,
            ..Default::default()
        };
        let out = impute_with_method(&ds, "y", &predictors(2), ImputeMethod::Kriging, &cfg, None)
            .unwrap();
        assert_eq!(out.values.len(), 1);
        let (row, v) = out.values[0];
        assert_eq!(row, 60);
        assert!(
            (v - y5).abs() <= 1e-5 * y5.abs().max(1.0),
            "imputed {v}, training response {y5}"
        );
    }

    #[test]
    fn kriging_beats_gls_on_correlated_field() {
        // Y has a genuine correlated component: kriging is the correct
        // specification, GLS ignores the field
        let model = CovarianceModel::new(1.5, 0.8, 1.0).unwrap();
        let ds_full = gp_table(400, 2, &model, 2.0, 61);
        let split = make_split(&ds_full, 0.9, 61).unwrap();
        let mut ds = ds_full.clone();
        let ycol = ds.column_index("y").unwrap();
        let truth = ds.mask_rows(ycol, &split.validation_rows);

        let cfg = ImputeConfig {
            theta: ThetaSpec::Fixed(model),
            tol: 1e-8,
            ..Default::default()
        };
        let krig = impute_with_method(
            &ds,
            "y",
            &predictors(2),
            ImputeMethod::Kriging,
            &cfg,
            Some(&truth),
        )
        .unwrap();
        let gls = impute_with_method(
            &ds,
            "y",
            &predictors(2),
            ImputeMethod::Gls,
            &cfg,
            Some(&truth),
        )
        .unwrap();
        let (mk, mg) = (krig.metrics.unwrap(), gls.metrics.unwrap());
        assert!(
            mk.rmse_rel < mg.rmse_rel,
            "kriging {} should beat gls {}",
            mk.rmse_rel,
            mg.rmse_rel
        );
    }

    #[test]
    fn knn_edge_cases() {
        let ds = TabularDataset::new(
            vec!["x0".into(), "y".into()],
            vec![
                Some(0.0), Some(5.0),
                Some(1.0), Some(7.0),
                Some(2.0), Some(9.0),
                Some(0.0), None,
            ],
        )
        .unwrap();
        // k = 1 and the query equals training row 0
        let cfg = ImputeConfig {
            k_neighbors: 1,
            ..Default::default()
        };
        let out =
            impute_with_method(&ds, "y", &["x0".into()], ImputeMethod::Knn, &cfg, None).unwrap();
        assert_eq!(out.values[0].1, 5.0);

        // k = N on a constant response gives that constant
        let ds_const = TabularDataset::new(
            vec!["x0".into(), "y".into()],
            vec![
                Some(0.0), Some(3.0),
                Some(1.0), Some(3.0),
                Some(2.0), Some(3.0),
                Some(0.5), None,
            ],
        )
        .unwrap();
        let cfg = ImputeConfig {
            k_neighbors: 3,
            ..Default::default()
        };
        let out = impute_with_method(&ds_const, "y", &["x0".into()], ImputeMethod::Knn, &cfg, None)
            .unwrap();
        assert_eq!(out.values[0].1, 3.0);

        // k beyond the training size is a parameter error
        let cfg = ImputeConfig {
            k_neighbors: 10,
            ..Default::default()
        };
        assert!(matches!(
            impute_with_method(&ds_const, "y", &["x0".into()], ImputeMethod::Knn, &cfg, None),
            Err(Error::ParamDomain(_))
        ));
    }

    #[test]
    fn knn_regression_fits_local_line() {
        // responses exactly linear in the predictor: local OLS nails them
        let mut cells = Vec::new();
        for i in 0..20 {
            let x = i as f64;
            cells.push(Some(x));
            cells.push(Some(2.0 * x + 1.0));
        }
        cells.push(Some(7.25));
        cells.push(None);
        let ds = TabularDataset::new(vec!["x0".into(), "y".into()], cells).unwrap();
        let cfg = ImputeConfig {
            k_neighbors: 5,
            ..Default::default()
        };
        let out = impute_with_method(
            &ds,
            "y",
            &["x0".into()],
            ImputeMethod::KnnRegression,
            &cfg,
            None,
        )
        .unwrap();
        assert!((out.values[0].1 - (2.0 * 7.25 + 1.0)).abs() < 1e-8);
    }

    #[test]
    fn missing_predictors_on_target_row_rejected() {
        let ds = TabularDataset::new(
            vec!["x0".into(), "y".into()],
            vec![Some(0.0), Some(1.0), None, None],
        )
        .unwrap();
        assert!(matches!(
            impute_with_method(
                &ds,
                "y",
                &["x0".into()],
                ImputeMethod::Knn,
                &ImputeConfig::default(),
                None
            ),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn duplicate_training_predictors_are_merged() {
        let ds = TabularDataset::new(
            vec!["x0".into(), "y".into()],
            vec![
                Some(1.0), Some(10.0),
                Some(1.0), Some(14.0),
                Some(2.0), Some(20.0),
                Some(3.0), Some(30.0),
                Some(1.5), None,
            ],
        )
        .unwrap();
        let cfg = ImputeConfig {
            theta: ThetaSpec::Fixed(CovarianceModel::new(0.5, 1.0, 1.0).unwrap()),
            degree: 0,
            k_neighbors: 2,
            tol: 1e-8,
            ..Default::default()
        };
        let out =
            impute_with_method(&ds, "y", &["x0".into()], ImputeMethod::Kriging, &cfg, None)
                .unwrap();
        assert_eq!(out.n_duplicates_merged, 1);
        assert!(out.values[0].1.is_finite());
    }
}
