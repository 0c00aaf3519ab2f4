//! Seeded mini-batch training.
//!
//! Each epoch draws its permutation from a ChaCha stream selected by the epoch
//! number, so the order depends only on `(seed, epoch)`. Training itself runs
//! on the calling thread.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::argmax_rows;
use crate::model::{Classifier, LossAndGrads};
use crate::nn::sub_seed;
use crate::optim::Optimizer;
use crate::preprocess::{FeatureMatrix, PipelineState};
use crate::runner::artifact::ModelArtifact;
use crate::runner::config::ExperimentConfig;
use crate::tensor::Tensor2;

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean batch loss weighted by batch size.
    pub loss: f64,
    /// Accuracy of the predictions made during the epoch, before each update.
    pub accuracy: f64,
}

impl EpochStats {
    pub fn log_line(&self) -> String {
        format!(
            "epoch,{},loss,{},acc,{}",
            self.epoch, self.loss, self.accuracy
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub wall_clock_seconds: f64,
    pub param_checksum: String,
    pub records: usize,
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before scaling.
pub fn clip_global_norm(grads: &mut [Tensor2], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor2::sum_sq).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale(s));
    }
    norm
}

pub fn train(
    config: &ExperimentConfig,
    pipeline: &PipelineState,
    matrix: &FeatureMatrix,
) -> Result<(ModelArtifact, TrainReport)> {
    train_with_observer(config, pipeline, matrix, |_| {})
}

/// As [`train`], calling `observer` after every epoch.
pub fn train_with_observer(
    config: &ExperimentConfig,
    pipeline: &PipelineState,
    matrix: &FeatureMatrix,
    mut observer: impl FnMut(&EpochStats),
) -> Result<(ModelArtifact, TrainReport)> {
    config.validate()?;
    if pipeline.schema_name != config.dataset.kind {
        return Err(Error::SchemaMismatch {
            expected: config.dataset.kind.to_string(),
            found: pipeline.schema_name.to_string(),
        });
    }
    if matrix.cols() != pipeline.width() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns, pipeline encodes {}",
            matrix.cols(),
            pipeline.width()
        )));
    }
    let n = matrix.rows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let k = pipeline.class_names.len();
    if let Some(&bad) = matrix.class_indices.iter().find(|&&c| c >= k) {
        return Err(Error::OutOfRangeClass { class: bad, k });
    }

    let spec = config.model_spec(pipeline.width(), k);
    let mut model = Classifier::new(spec, sub_seed(config.seed, INIT_STREAM))?;
    let mut opt = Optimizer::new(
        config.optimizer.kind,
        config.optimizer.hyper_params(),
        &model.param_shapes(),
    )?;
    let clip = config.training.effective_clip();
    let batch_size = config.training.batch_size;
    let start = Instant::now();
    let mut history = Vec::with_capacity(config.training.epochs);

    for epoch in 1..=config.training.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, SHUFFLE_STREAM));
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, idx) in order.chunks(batch_size).enumerate() {
            let x = matrix.values.select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| matrix.class_indices[i]).collect();
            let LossAndGrads {
                loss,
                mut grads,
                probs,
            } = model.loss_and_grads(&x, &y)?;
            let diverged = || Error::NumericDivergence {
                epoch,
                batch: b + 1,
                loss,
            };
            if !loss.is_finite() {
                return Err(diverged());
            }
            if let Some(c) = clip {
                if !clip_global_norm(&mut grads, c).is_finite() {
                    return Err(diverged());
                }
            }
            opt.step(&mut model.params_mut(), &grads)?;
            loss_sum += loss * idx.len() as f64;
            correct += argmax_rows(&probs)
                .iter()
                .zip(&y)
                .filter(|(p, t)| p == t)
                .count();
        }
        if !model.params().iter().all(|p| p.is_finite()) {
            return Err(Error::NumericDivergence {
                epoch,
                batch: n.div_ceil(batch_size),
                loss: f64::NAN,
            });
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / n as f64,
            accuracy: correct as f64 / n as f64,
        };
        log::debug!("{}", stats.log_line());
        observer(&stats);
        history.push(stats);
    }

    let report = TrainReport {
        epochs: history,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        param_checksum: model.param_checksum(),
        records: n,
    };
    let artifact = ModelArtifact {
        config: config.clone(),
        pipeline: pipeline.clone(),
        model,
    };
    Ok((artifact, report))
}
