//! Scoring a trained artifact on labelled data through its frozen pipeline.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::{argmax_rows, MetricsReport};
use crate::preprocess::FeatureMatrix;
use crate::runner::artifact::ModelArtifact;
use crate::tensor::Tensor2;

/// Rows scored per forward pass.
const CHUNK_ROWS: usize = 4096;

/// Where the evaluation records came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "kebab-case")]
pub enum Protocol {
    /// A separate test file, such as an official test set.
    TestFile,
    /// A seeded held-out fraction of the training file.
    HoldoutSplit { fraction: f64, seed: u64 },
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::TestFile => f.write_str("test-file"),
            Protocol::HoldoutSplit { fraction, seed } => {
                write!(f, "holdout-split(fraction={fraction}, seed={seed})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub y_true: Vec<usize>,
    pub y_pred: Vec<usize>,
    pub probs: Tensor2,
}

impl Evaluation {
    /// `row,true,pred,p0..p{k-1}`
    pub fn predictions_csv(&self) -> String {
        let k = self.probs.cols();
        let mut out = String::from("row,true,pred");
        for c in 0..k {
            out.push_str(&format!(",p{c}"));
        }
        out.push('\n');
        for r in 0..self.y_true.len() {
            out.push_str(&format!("{r},{},{}", self.y_true[r], self.y_pred[r]));
            for v in self.probs.row(r) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Class probabilities for every row, scored in fixed-size chunks.
pub fn predict_proba(artifact: &ModelArtifact, x: &Tensor2) -> Result<Tensor2> {
    let k = artifact.model.spec().num_classes;
    let mut data = Vec::with_capacity(x.rows() * k);
    let mut start = 0;
    while start < x.rows() {
        let end = (start + CHUNK_ROWS).min(x.rows());
        let idx: Vec<usize> = (start..end).collect();
        data.extend_from_slice(
            artifact
                .model
                .predict_proba(&x.select_rows(&idx))?
                .as_slice(),
        );
        start = end;
    }
    Tensor2::from_vec(x.rows(), k, data)
}

/// Scores an already encoded and normalized matrix.
pub fn evaluate_matrix(artifact: &ModelArtifact, m: &FeatureMatrix) -> Result<Evaluation> {
    if m.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let probs = predict_proba(artifact, &m.values)?;
    let p = &artifact.pipeline;
    let normal = p.schema_name.normal_class();
    let report = MetricsReport::build(&p.class_names, normal, &m.class_indices, &probs)?;
    Ok(Evaluation {
        y_pred: argmax_rows(&probs),
        y_true: m.class_indices.clone(),
        report,
        probs,
    })
}

/// Encodes `test` with the artifact's pipeline (no refitting) and scores it.
pub fn evaluate(artifact: &ModelArtifact, test: &LabeledDataset) -> Result<Evaluation> {
    let m = artifact.pipeline.apply(test)?;
    evaluate_matrix(artifact, &m)
}
