//! Experiment orchestration: configuration, training, artifacts, evaluation,
//! optimizer comparison and reports.

pub mod artifact;
pub mod compare;
pub mod config;
pub mod data;
pub mod evaluate;
pub mod report;
pub mod train;

pub use artifact::{load_model, save_model, ModelArtifact, FORMAT_VERSION, MODEL_FORMAT};
pub use compare::{compare_optimizers, ComparisonRow, ComparisonTable};
pub use config::{DatasetConfig, ExperimentConfig, ModelConfig, OptimizerConfig, TrainingConfig};
pub use data::{
    load_dataset, prepare_holdout, prepare_test_file, taxonomy_for, EvaluationDoc, PreparedData,
};
pub use evaluate::{evaluate, evaluate_matrix, predict_proba, Evaluation, Protocol};
pub use report::{emit_report, BaselineRow, BaselineTable, NamedReport, BASELINE_LABEL};
pub use train::{clip_global_norm, train, train_with_observer, EpochStats, TrainReport};
