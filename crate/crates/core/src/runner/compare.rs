//! Trains the same model, seed and data under each optimizer and ranks the
//! results.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetKind;
use crate::error::{Error, Result};
use crate::metrics::{fmt_opt, MetricsReport, OverallMetrics};
use crate::optim::{HyperParams, OptimizerKind};
use crate::preprocess::{FeatureMatrix, PipelineState};
use crate::runner::config::{ExperimentConfig, OptimizerConfig};
use crate::runner::evaluate::{evaluate_matrix, Protocol};
use crate::runner::train::{train, EpochStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// 1-based; `None` when the run failed.
    pub rank: Option<usize>,
    pub optimizer: OptimizerKind,
    pub hyper_params: HyperParams,
    pub metrics: Option<OverallMetrics>,
    pub report: Option<MetricsReport>,
    pub epochs: Vec<EpochStats>,
    pub param_checksum: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub dataset: DatasetKind,
    pub protocol: Protocol,
    pub ranking: String,
    /// Observation only.
    pub adamax_ranked_first: bool,
    /// Ranked rows first, failed runs after them in declaration order.
    pub rows: Vec<ComparisonRow>,
}

fn desc_opt(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

fn asc_opt(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// Accuracy descending, then detection rate descending, then FAR ascending,
/// then optimizer declaration order. Undefined values sort last.
pub fn rank_order(
    a: (OptimizerKind, &OverallMetrics),
    b: (OptimizerKind, &OverallMetrics),
) -> Ordering {
    b.1.accuracy
        .total_cmp(&a.1.accuracy)
        .then_with(|| desc_opt(a.1.detection_rate, b.1.detection_rate))
        .then_with(|| asc_opt(a.1.far, b.1.far))
        .then_with(|| a.0.cmp(&b.0))
}

/// Sorts rows and assigns ranks.
pub fn rank_rows(mut rows: Vec<ComparisonRow>) -> Vec<ComparisonRow> {
    rows.sort_by(|a, b| match (&a.metrics, &b.metrics) {
        (Some(x), Some(y)) => rank_order((a.optimizer, x), (b.optimizer, y)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.optimizer.cmp(&b.optimizer),
    });
    let mut next = 1;
    for row in &mut rows {
        row.rank = row.metrics.as_ref().map(|_| {
            next += 1;
            next - 1
        });
    }
    rows
}

fn run_one(
    base: &ExperimentConfig,
    kind: OptimizerKind,
    pipeline: &PipelineState,
    train_m: &FeatureMatrix,
    test_m: &FeatureMatrix,
) -> ComparisonRow {
    let mut config = base.clone();
    config.optimizer = OptimizerConfig::defaults(kind);
    let hyper_params = config.optimizer.hyper_params();
    let outcome: Result<_> = train(&config, pipeline, train_m)
        .and_then(|(artifact, report)| Ok((evaluate_matrix(&artifact, test_m)?, report)));
    match outcome {
        Ok((eval, report)) => ComparisonRow {
            rank: None,
            optimizer: kind,
            hyper_params,
            metrics: Some(eval.report.overall.clone()),
            report: Some(eval.report),
            epochs: report.epochs,
            param_checksum: Some(report.param_checksum),
            error: None,
        },
        Err(e) => ComparisonRow {
            rank: None,
            optimizer: kind,
            hyper_params,
            metrics: None,
            report: None,
            epochs: Vec::new(),
            param_checksum: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs all seven optimizers with their default hyperparameters; everything
/// else comes from `base`. Runs execute on the current rayon pool and a failed
/// run is reported in its row without stopping the others.
pub fn compare_optimizers(
    base: &ExperimentConfig,
    pipeline: &PipelineState,
    train_m: &FeatureMatrix,
    test_m: &FeatureMatrix,
    protocol: Protocol,
) -> Result<ComparisonTable> {
    base.validate()?;
    let rows: Vec<ComparisonRow> = OptimizerKind::ALL
        .par_iter()
        .map(|&kind| run_one(base, kind, pipeline, train_m, test_m))
        .collect();
    let rows = rank_rows(rows);
    Ok(ComparisonTable {
        dataset: pipeline.schema_name,
        protocol,
        ranking: "accuracy desc, detection_rate desc, far asc, optimizer order".into(),
        adamax_ranked_first: rows
            .first()
            .is_some_and(|r| r.rank == Some(1) && r.optimizer == OptimizerKind::Adamax),
        rows,
    })
}

impl ComparisonTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::CorruptArtifact(format!("comparison table: {e}")))
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("rank,optimizer,accuracy,detection_rate,precision,f1,far,error\n");
        for r in &self.rows {
            let m = r.metrics.as_ref();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.rank.map(|x| x.to_string()).unwrap_or_default(),
                r.optimizer,
                fmt_opt(m.map(|m| m.accuracy)),
                fmt_opt(m.and_then(|m| m.detection_rate)),
                fmt_opt(m.and_then(|m| m.precision)),
                fmt_opt(m.and_then(|m| m.f1)),
                fmt_opt(m.and_then(|m| m.far)),
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            ));
        }
        out
    }
}
