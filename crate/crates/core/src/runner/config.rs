//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//!
//! [dataset]
//! kind = "nsl-kdd"
//!
//! [model]
//! kind = "lstm"
//! hidden_dim = 128
//!
//! [optimizer]
//! kind = "adamax"
//!
//! [training]
//! epochs = 20
//! batch_size = 128
//! clip_norm = 5.0   # 0 disables clipping
//! eval_split = 0.2
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::dataset::DatasetKind;
use crate::error::{Error, Result};
use crate::model::{ModelKind, ModelSpec};
use crate::nn::ActivationKind;
use crate::optim::{HyperParams, OptimizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Required; there is no default seed.
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub training: TrainingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Shipped taxonomy when absent.
    pub taxonomy: Option<PathBuf>,
    pub has_header: Option<bool>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::NslKdd,
            train: None,
            test: None,
            taxonomy: None,
            has_header: None,
        }
    }
}

impl DatasetConfig {
    pub fn has_header(&self) -> bool {
        self.has_header
            .unwrap_or_else(|| self.kind.default_has_header())
    }

    /// Configured train/test paths, falling back to the conventional file
    /// names inside `data_dir`.
    pub fn resolve_files(&self, data_dir: Option<&Path>) -> (Option<PathBuf>, Option<PathBuf>) {
        let (train_name, test_name) = self.kind.default_files();
        let fallback = |name: &str| data_dir.map(|d| d.join(name));
        (
            self.train.clone().or_else(|| fallback(train_name)),
            self.test.clone().or_else(|| fallback(test_name)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden_dim: usize,
    pub activation: ActivationKind,
    pub time_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Dnn,
            hidden_dim: 128,
            activation: ActivationKind::ReLU,
            time_steps: 1,
        }
    }
}

/// Unset hyperparameters take the per-optimizer defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::defaults(OptimizerKind::Adam)
    }
}

impl OptimizerConfig {
    pub fn defaults(kind: OptimizerKind) -> Self {
        OptimizerConfig {
            kind,
            learning_rate: None,
            beta1: None,
            beta2: None,
            rho: None,
            epsilon: None,
        }
    }

    pub fn hyper_params(&self) -> HyperParams {
        let d = HyperParams::defaults_for(self.kind);
        HyperParams {
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            beta1: self.beta1.unwrap_or(d.beta1),
            beta2: self.beta2.unwrap_or(d.beta2),
            rho: self.rho.unwrap_or(d.rho),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Global gradient-norm threshold; `None` or `0` disables clipping.
    pub clip_norm: Option<f64>,
    /// Fraction of the training data held out for evaluation.
    pub eval_split: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 20,
            batch_size: 128,
            clip_norm: Some(5.0),
            eval_split: None,
        }
    }
}

impl TrainingConfig {
    pub fn effective_clip(&self) -> Option<f64> {
        self.clip_norm.filter(|&c| c > 0.0)
    }
}

impl ExperimentConfig {
    /// Default settings with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        ExperimentConfig {
            seed,
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            training: TrainingConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_seed(text, None)
    }

    /// Like [`from_toml_str`](Self::from_toml_str), with `seed` replacing or
    /// supplying the document's `seed` key.
    pub fn from_toml_with_seed(text: &str, seed: Option<u64>) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::ConfigInvalid(e.to_string()))?;
        if let Some(s) = seed {
            let s = i64::try_from(s).map_err(|_| {
                Error::ConfigInvalid(format!("seed {s} exceeds the TOML integer range"))
            })?;
            table.insert("seed".into(), toml::Value::Integer(s));
        }
        let cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_seed(path, None)
    }

    pub fn load_with_seed(path: &Path, seed: Option<u64>) -> Result<Self> {
        let bytes = codec::read_file(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::ConfigInvalid(format!("{} is not UTF-8", path.display())))?;
        Self::from_toml_with_seed(&text, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        if t.epochs == 0 {
            return Err(Error::ConfigInvalid("epochs must be >= 1".into()));
        }
        if t.batch_size == 0 {
            return Err(Error::ConfigInvalid("batch_size must be >= 1".into()));
        }
        if let Some(c) = t.clip_norm {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::ConfigInvalid(format!(
                    "clip_norm must be >= 0, got {c}"
                )));
            }
        }
        if let Some(f) = t.eval_split {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidFraction(f));
            }
        }
        let m = &self.model;
        if m.hidden_dim == 0 || m.time_steps == 0 {
            return Err(Error::ConfigInvalid(
                "hidden_dim and time_steps must be >= 1".into(),
            ));
        }
        if m.kind == ModelKind::Dnn && m.time_steps != 1 {
            return Err(Error::ConfigInvalid(
                "time_steps applies only to rnn and lstm models".into(),
            ));
        }
        self.optimizer.hyper_params().validate()
    }

    pub fn model_spec(&self, input_dim: usize, num_classes: usize) -> ModelSpec {
        ModelSpec {
            kind: self.model.kind,
            input_dim,
            hidden_dim: self.model.hidden_dim,
            num_classes,
            activation: self.model.activation,
            time_steps: self.model.time_steps,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg = ExperimentConfig::from_toml_str("seed = 3").unwrap();
        assert_eq!(cfg, ExperimentConfig::with_seed(3));
        assert_eq!(cfg.training.epochs, 20);
        assert_eq!(cfg.training.batch_size, 128);
        assert_eq!(cfg.model.hidden_dim, 128);
        assert_eq!(cfg.training.effective_clip(), Some(5.0));
        assert_eq!(cfg.optimizer.hyper_params().learning_rate, 0.002);
    }

    #[test]
    fn seed_is_required() {
        assert!(matches!(
            ExperimentConfig::from_toml_str("[training]\nepochs = 2"),
            Err(Error::ConfigInvalid(_))
        ));
    }

    #[test]
    fn full_document_parses() {
        let text = r#"
seed = 11
[dataset]
kind = "unsw-nb15"
train = "a.csv"
[model]
kind = "lstm"
hidden_dim = 16
activation = "tanh"
time_steps = 2
[optimizer]
kind = "adadelta"
rho = 0.9
[training]
epochs = 3
batch_size = 8
clip_norm = 0
eval_split = 0.25
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.dataset.kind, DatasetKind::UnswNb15);
        assert!(cfg.dataset.has_header());
        assert_eq!(cfg.model.kind, ModelKind::Lstm);
        let hp = cfg.optimizer.hyper_params();
        assert_eq!((hp.learning_rate, hp.rho), (1.0, 0.9));
        assert_eq!(cfg.training.effective_clip(), None);
        assert_eq!(cfg.training.eval_split, Some(0.25));
        let (train, test) = cfg.dataset.resolve_files(Some(Path::new("/data")));
        assert_eq!(train, Some(PathBuf::from("a.csv")));
        assert_eq!(test, Some(PathBuf::from("/data/UNSW_NB15_testing-set.csv")));
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "seed = 1\n[training]\nepochs = 0",
            "seed = 1\n[training]\nbatch_size = 0",
            "seed = 1\n[training]\nclip_norm = -1.0",
            "seed = 1\n[training]\neval_split = 1.0",
            "seed = 1\n[optimizer]\nkind = \"adam\"\nlearning_rate = 0.0",
            "seed = 1\n[model]\ntime_steps = 3",
            "seed = 1\nunknown = 2",
            "seed = 1\n[optimizer]\nkind = \"lbfgs\"",
        ] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn json_snapshot_round_trips() {
        let mut cfg = ExperimentConfig::with_seed(9);
        cfg.training.clip_norm = None;
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn seed_flag_supplies_or_replaces_the_document_seed() {
        assert!(ExperimentConfig::from_toml_str("[model]\nkind = \"rnn\"").is_err());
        let cfg =
            ExperimentConfig::from_toml_with_seed("[model]\nkind = \"rnn\"", Some(4)).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.model.kind, ModelKind::Rnn);
        assert_eq!(
            ExperimentConfig::from_toml_with_seed("seed = 1", Some(9))
                .unwrap()
                .seed,
            9
        );
    }
}
