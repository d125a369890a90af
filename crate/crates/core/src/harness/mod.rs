//! Datasets, per-record pipelines, the Monte Carlo protocol and reports.

pub mod dataset;
pub mod model;
pub mod pipeline;
pub mod protocol;
pub mod report;

pub use dataset::{Dataset, DatasetEntry};
pub use model::TrainedModel;
pub use pipeline::{extract_all, extract_features, ClassifierKind, FeatureSet, Method, PipelineConfig, RecordFeatures};
pub use protocol::{evaluate, evaluate_with, split, ConfusionMatrix, EvalProtocol};
pub use report::{config_hash, Report};
