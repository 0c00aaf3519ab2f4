//! Loading benchmark files and fitting the pipeline for either evaluation
//! protocol.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{load_csv, split, AttackTaxonomy, DatasetKind, LabeledDataset};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::preprocess::{FeatureMatrix, PipelineState};
use crate::runner::config::DatasetConfig;
use crate::runner::evaluate::Protocol;

/// Taxonomy from `taxonomy_path`, or the shipped one for `kind`.
pub fn taxonomy_for(kind: DatasetKind, taxonomy_path: Option<&Path>) -> Result<AttackTaxonomy> {
    match taxonomy_path {
        Some(p) => AttackTaxonomy::load(p, &kind.class_names()),
        None => Ok(kind.default_taxonomy()),
    }
}

pub fn load_dataset(cfg: &DatasetConfig, path: &Path) -> Result<LabeledDataset> {
    let taxonomy = taxonomy_for(cfg.kind, cfg.taxonomy.as_deref())?;
    load_csv(path, &cfg.kind.schema(), &taxonomy, cfg.has_header())
}

/// A fitted pipeline with the matrices to train on and to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub pipeline: PipelineState,
    pub train: FeatureMatrix,
    pub eval: FeatureMatrix,
    pub protocol: Protocol,
}

/// Splits `ds`, then fits the pipeline on the training part only.
pub fn prepare_holdout(ds: &LabeledDataset, fraction: f64, seed: u64) -> Result<PreparedData> {
    let (train_ds, eval_ds) = split(ds, fraction, seed)?;
    if train_ds.is_empty() || eval_ds.is_empty() {
        return Err(Error::ConfigInvalid(format!(
            "split of {} records at fraction {fraction} leaves an empty side",
            ds.len()
        )));
    }
    let (pipeline, train) = PipelineState::fit(&train_ds)?;
    let eval = pipeline.apply(&eval_ds)?;
    Ok(PreparedData {
        pipeline,
        train,
        eval,
        protocol: Protocol::HoldoutSplit { fraction, seed },
    })
}

/// Fits on `train_ds` and encodes `test_ds` with the frozen pipeline.
pub fn prepare_test_file(
    train_ds: &LabeledDataset,
    test_ds: &LabeledDataset,
) -> Result<PreparedData> {
    let (pipeline, train) = PipelineState::fit(train_ds)?;
    let eval = pipeline.apply(test_ds)?;
    Ok(PreparedData {
        pipeline,
        train,
        eval,
        protocol: Protocol::TestFile,
    })
}

/// Evaluation results as written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationDoc {
    pub dataset: DatasetKind,
    pub protocol: Protocol,
    pub source: Option<String>,
    pub model_checksum: String,
    pub metrics: MetricsReport,
}

impl EvaluationDoc {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("evaluation serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::CorruptArtifact(format!("evaluation file: {e}")))
    }
}
