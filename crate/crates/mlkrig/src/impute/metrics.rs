//! Imputation error metrics: relative RMSE, MAPE, and the log accuracy
//! ratio lnQ.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    /// sqrt(mean((yhat - y)^2)) / sqrt(mean(y^2))
    pub rmse_rel: f64,
    /// mean(|yhat - y| / |y|) over rows with y != 0
    pub mape: f64,
    /// mean(|ln(yhat / y)|) over rows with yhat * y > 0
    pub lnq: f64,
    /// mean(ln(yhat / y)) over the same rows; sign exposes bias
    pub lnq_signed: f64,
    pub n_validation: usize,
    pub n_excluded_zero_truth: usize,
    pub n_excluded_nonpositive_ratio: usize,
}

pub fn compute_metrics(method: &str, y_true: &[f64], y_pred: &[f64]) -> Result<MetricsReport> {
    if y_true.len() != y_pred.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} predictions", y_true.len()),
            got: format!("{}", y_pred.len()),
        });
    }
    if y_true.is_empty() {
        return Err(Error::EmptyMetric("no validation rows".into()));
    }
    let n = y_true.len() as f64;
    let mse: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(y, p)| (p - y) * (p - y))
        .sum::<f64>()
        / n;
    let denom: f64 = y_true.iter().map(|y| y * y).sum::<f64>() / n;
    if denom == 0.0 {
        return Err(Error::EmptyMetric("all truths are zero".into()));
    }
    let rmse_rel = (mse / denom).sqrt();

    let mut mape_sum = 0.0;
    let mut mape_n = 0usize;
    let mut zero_truth = 0usize;
    for (y, p) in y_true.iter().zip(y_pred) {
        if *y == 0.0 {
            zero_truth += 1;
        } else {
            mape_sum += ((p - y) / y).abs();
            mape_n += 1;
        }
    }
    if mape_n == 0 {
        return Err(Error::EmptyMetric("every truth is zero; MAPE undefined".into()));
    }

    let mut lnq_abs = 0.0;
    let mut lnq_signed = 0.0;
    let mut lnq_n = 0usize;
    let mut bad_ratio = 0usize;
    for (y, p) in y_true.iter().zip(y_pred) {
        if p * y > 0.0 {
            let l = (p / y).ln();
            lnq_abs += l.abs();
            lnq_signed += l;
            lnq_n += 1;
        } else {
            bad_ratio += 1;
        }
    }
    if lnq_n == 0 {
        return Err(Error::EmptyMetric(
            "no rows with a positive predicted/actual ratio; lnQ undefined".into(),
        ));
    }

    Ok(MetricsReport {
        method: method.to_string(),
        rmse_rel,
        mape: mape_sum / mape_n as f64,
        lnq: lnq_abs / lnq_n as f64,
        lnq_signed: lnq_signed / lnq_n as f64,
        n_validation: y_true.len(),
        n_excluded_zero_truth: zero_truth,
        n_excluded_nonpositive_ratio: bad_ratio,
    })
}

/// Wasserstein-1 distance between two equal-size samples: the mean
/// absolute gap between their sorted values.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} values", a.len()),
            got: format!("{}", b.len()),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyMetric("empty samples".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(sa
        .iter()
        .zip(&sb)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_zero_everywhere() {
        let y = [1.0, 2.0, 3.0];
        let m = compute_metrics("t", &y, &y).unwrap();
        assert_eq!(m.rmse_rel, 0.0);
        assert_eq!(m.mape, 0.0);
        assert_eq!(m.lnq, 0.0);
        assert_eq!(m.n_validation, 3);
    }

    #[test]
    fn doubling_gives_exact_ratios() {
        let y = [1.0, 2.0, 5.0];
        let p: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let m = compute_metrics("t", &y, &p).unwrap();
        assert!((m.mape - 1.0).abs() < 1e-12);
        assert!((m.lnq - 2.0f64.ln()).abs() < 1e-12);
        assert!((m.lnq_signed - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_mixed_case() {
        // y = (1, 2), yhat = (2, 2)
        let m = compute_metrics("t", &[1.0, 2.0], &[2.0, 2.0]).unwrap();
        assert!((m.rmse_rel - (0.5f64 / 2.5).sqrt()).abs() < 1e-12);
        assert!((m.mape - 0.5).abs() < 1e-12);
        assert!((m.lnq - 2.0f64.ln() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn scale_invariance() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let p = [1.1, 1.8, 3.3, 4.4];
        let a = compute_metrics("t", &y, &p).unwrap();
        let yc: Vec<f64> = y.iter().map(|v| 17.0 * v).collect();
        let pc: Vec<f64> = p.iter().map(|v| 17.0 * v).collect();
        let b = compute_metrics("t", &yc, &pc).unwrap();
        assert!((a.rmse_rel - b.rmse_rel).abs() < 1e-12);
        assert!((a.mape - b.mape).abs() < 1e-12);
        assert!((a.lnq - b.lnq).abs() < 1e-12);
    }

    #[test]
    fn exclusions_are_counted() {
        let y = [0.0, 1.0, -2.0];
        let p = [1.0, 2.0, 3.0];
        let m = compute_metrics("t", &y, &p).unwrap();
        assert_eq!(m.n_excluded_zero_truth, 1);
        // rows with yhat * y <= 0: the zero truth and the sign flip
        assert_eq!(m.n_excluded_nonpositive_ratio, 2);

        assert!(matches!(
            compute_metrics("t", &[0.0], &[1.0]),
            Err(Error::EmptyMetric(_))
        ));
        assert!(matches!(
            compute_metrics("t", &[], &[]),
            Err(Error::EmptyMetric(_))
        ));
    }

    #[test]
    fn wasserstein_basics() {
        assert_eq!(wasserstein1(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        // shift by c moves W1 by c
        let a = [0.0, 1.0, 2.0];
        let b = [0.5, 1.5, 2.5];
        assert!((wasserstein1(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        // order-free
        assert_eq!(
            wasserstein1(&[2.0, 0.0, 1.0], &[1.5, 2.5, 0.5]).unwrap(),
            wasserstein1(&a, &b).unwrap()
        );
    }
}
