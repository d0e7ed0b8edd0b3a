//! End-to-end missing-data imputation: tabular ingestion, transforms,
//! splitting, model fitting, imputation, baselines, and error metrics.

pub mod dataset;
pub mod methods;
pub mod metrics;
pub mod synth;
pub mod transform;

pub use dataset::{load_csv, load_csv_reader, make_split, CsvSchema, LoadSummary, Split, TabularDataset};
pub use methods::{
    impute_with_method, ImputeConfig, ImputeMethod, ImputeOutcome, KrigingImputer,
    PredictorScaling, ThetaSpec,
};
pub use metrics::{compute_metrics, wasserstein1, MetricsReport};
pub use synth::{generate_synthetic_medical, SYNTH_COLUMNS};
pub use transform::{transform_pipeline, ColumnTransform, FittedTransform, TransformSpec};
