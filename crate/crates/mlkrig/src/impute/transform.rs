//! Per-column log and z-score transforms with recorded inverses.

use super::dataset::TabularDataset;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnTransform {
    Identity,
    Log,
    Zscore,
    /// log first, then z-score of the logged values.
    LogZscore,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TransformSpec {
    pub per_column: Vec<(String, ColumnTransform)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FittedStep {
    column: String,
    transform: ColumnTransform,
    mean: f64,
    std: f64,
}

/// The fitted pipeline: forward statistics (training rows only) plus the
/// rows that survived the positivity screen, by original index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedTransform {
    steps: Vec<FittedStep>,
    pub kept_rows: Vec<usize>,
    pub n_dropped: usize,
}

impl FittedTransform {
    pub fn identity() -> Self {
        Self {
            steps: Vec::new(),
            kept_rows: Vec::new(),
            n_dropped: 0,
        }
    }

    fn step(&self, column: &str) -> Option<&FittedStep> {
        self.steps.iter().find(|s| s.column == column)
    }

    /// Map a transformed value back to original units.
    pub fn inverse_value(&self, column: &str, v: f64) -> f64 {
        match self.step(column) {
            None => v,
            Some(s) => match s.transform {
                ColumnTransform::Identity => v,
                ColumnTransform::Log => v.exp(),
                ColumnTransform::Zscore => v * s.std + s.mean,
                ColumnTransform::LogZscore => (v * s.std + s.mean).exp(),
            },
        }
    }

    /// Forward-map a raw value (for round-trip checks).
    pub fn forward_value(&self, column: &str, v: f64) -> f64 {
        match self.step(column) {
            None => v,
            Some(s) => match s.transform {
                ColumnTransform::Identity => v,
                ColumnTransform::Log => v.ln(),
                ColumnTransform::Zscore => (v - s.mean) / s.std,
                ColumnTransform::LogZscore => (v.ln() - s.mean) / s.std,
            },
        }
    }
}

fn needs_log(t: ColumnTransform) -> bool {
    matches!(t, ColumnTransform::Log | ColumnTransform::LogZscore)
}

/// Apply the transform spec. Rows holding a nonpositive value in any
/// log column are dropped (counted, not fatal); z-score statistics come
/// from the surviving training rows and are applied to every row. Returns
/// the transformed dataset (dropped rows removed) and the fitted pipeline.
pub fn transform_pipeline(
    dataset: &TabularDataset,
    spec: &TransformSpec,
    train_rows: &[usize],
) -> Result<(TabularDataset, FittedTransform)> {
    for (name, _) in &spec.per_column {
        dataset.column_index(name)?;
    }
    let log_cols: Vec<usize> = spec
        .per_column
        .iter()
        .filter(|(_, t)| needs_log(*t))
        .map(|(name, _)| dataset.column_index(name).unwrap())
        .collect();
    let kept_rows: Vec<usize> = (0..dataset.n_rows())
        .filter(|&r| {
            log_cols
                .iter()
                .all(|&c| dataset.get(r, c).map(|v| v > 0.0).unwrap_or(true))
        })
        .collect();
    let n_dropped = dataset.n_rows() - kept_rows.len();
    let mut out = dataset.subset_rows(&kept_rows);

    // original-index -> kept-index for the training set
    let mut kept_pos = vec![usize::MAX; dataset.n_rows()];
    for (new, &old) in kept_rows.iter().enumerate() {
        kept_pos[old] = new;
    }
    let train_kept: Vec<usize> = train_rows
        .iter()
        .filter_map(|&r| (kept_pos[r] != usize::MAX).then(|| kept_pos[r]))
        .collect();

    let mut steps = Vec::new();
    for (name, t) in &spec.per_column {
        let c = out.column_index(name)?;
        if *t == ColumnTransform::Identity {
            steps.push(FittedStep {
                column: name.clone(),
                transform: *t,
                mean: 0.0,
                std: 1.0,
            });
            continue;
        }
        // apply the log part first so z-score statistics see logged values
        if needs_log(*t) {
            for r in 0..out.n_rows() {
                if let Some(v) = out.get(r, c) {
                    out.set(r, c, Some(v.ln()));
                }
            }
        }
        let (mean, std) = if matches!(t, ColumnTransform::Zscore | ColumnTransform::LogZscore) {
            let vals: Vec<f64> = train_kept
                .iter()
                .filter_map(|&r| out.get(r, c))
                .collect();
            if vals.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "no training values to standardize column '{name}'"
                )));
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / vals.len() as f64;
            let std = var.sqrt();
            if std == 0.0 {
                return Err(Error::DegenerateInput(format!(
                    "column '{name}' is constant on the training rows"
                )));
            }
            for r in 0..out.n_rows() {
                if let Some(v) = out.get(r, c) {
                    out.set(r, c, Some((v - mean) / std));
                }
            }
            (mean, std)
        } else {
            (0.0, 1.0)
        };
        steps.push(FittedStep {
            column: name.clone(),
            transform: *t,
            mean,
            std,
        });
    }
    Ok((
        out,
        FittedTransform {
            steps,
            kept_rows,
            n_dropped,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> TabularDataset {
        TabularDataset::new(
            vec!["y".into(), "x".into()],
            vec![
                Some(1.0), Some(10.0),
                Some(2.0), Some(20.0),
                Some(4.0), Some(30.0),
                Some(8.0), Some(40.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn identity_spec_is_a_noop() {
        let ds = table();
        let spec = TransformSpec {
            per_column: vec![("y".into(), ColumnTransform::Identity)],
        };
        let (out, fit) = transform_pipeline(&ds, &spec, &[0, 1, 2, 3]).unwrap();
        assert_eq!(out.get(2, 0), ds.get(2, 0));
        assert_eq!(fit.n_dropped, 0);
        assert_eq!(fit.inverse_value("y", 5.0), 5.0);
    }

    #[test]
    fn log_round_trips() {
        let ds = table();
        let spec = TransformSpec {
            per_column: vec![("y".into(), ColumnTransform::Log)],
        };
        let (out, fit) = transform_pipeline(&ds, &spec, &[0, 1, 2, 3]).unwrap();
        for r in 0..4 {
            let orig = ds.get(r, 0).unwrap();
            let t = out.get(r, 0).unwrap();
            assert!((fit.inverse_value("y", t) - orig).abs() <= 1e-12 * orig);
            assert!((fit.forward_value("y", orig) - t).abs() <= 1e-15);
        }
    }

    #[test]
    fn zscore_training_stats_only() {
        let ds = table();
        let spec = TransformSpec {
            per_column: vec![("x".into(), ColumnTransform::Zscore)],
        };
        // only the first three rows are training
        let (out, fit) = transform_pipeline(&ds, &spec, &[0, 1, 2]).unwrap();
        let train_vals: Vec<f64> = (0..3).map(|r| out.get(r, 1).unwrap()).collect();
        let mean = train_vals.iter().sum::<f64>() / 3.0;
        let var = train_vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0;
        assert!(mean.abs() <= 1e-10);
        assert!((var - 1.0).abs() <= 1e-10);
        // the held-out row is standardized by the same statistics
        assert!(out.get(3, 1).unwrap() > 1.0);
        let _ = fit;
    }

    #[test]
    fn nonpositive_log_rows_dropped_with_count() {
        let ds = TabularDataset::new(
            vec!["y".into()],
            vec![Some(1.0), Some(-2.0), Some(3.0), Some(0.0), None],
        )
        .unwrap();
        let spec = TransformSpec {
            per_column: vec![("y".into(), ColumnTransform::Log)],
        };
        let (out, fit) = transform_pipeline(&ds, &spec, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(fit.n_dropped, 2);
        assert_eq!(out.n_rows(), 3);
        assert_eq!(fit.kept_rows, vec![0, 2, 4]);
        // missing cells pass through untouched
        assert_eq!(out.get(2, 0), None);
    }
}
