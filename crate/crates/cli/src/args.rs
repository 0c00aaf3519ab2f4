use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};
use mcids::dataset::DatasetKind;
use mcids::model::ModelKind;
use mcids::nn::ActivationKind;
use mcids::optim::OptimizerKind;

#[derive(Debug, Parser)]
#[command(
    name = "mcids",
    version,
    about = "Train and evaluate DNN, RNN and LSTM intrusion classifiers on KDD'99, NSL-KDD and UNSW-NB15",
    after_help = "Exit codes: 0 success, 1 internal error, 2 input or configuration error, 3 numeric divergence."
)]
pub struct Cli {
    /// Worker threads for parallel sections such as compare-optimizers.
    #[arg(long, global = true, default_value_t = 1, value_parser = positive)]
    pub threads: usize,

    /// Directory holding the benchmark files under their usual names.
    #[arg(long, global = true, env = "IDS_DATA_DIR", value_name = "DIR")]
    pub data_dir: Option<PathBuf>,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the encoder and normalizer on a training file and write the encoded matrix.
    Preprocess(PreprocessArgs),
    /// Train a model from a preprocessed matrix or a raw training file.
    Train(TrainArgs),
    /// Evaluate a saved model and write metrics and predictions.
    Evaluate(EvaluateArgs),
    /// Train the same model under all seven optimizers and rank them.
    CompareOptimizers(CompareArgs),
    /// Write one-vs-rest ROC curves, one CSV per class.
    Roc(RocArgs),
    /// Merge evaluation results with the shipped published baselines.
    Report(ReportArgs),
}

pub fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

/// How raw CSV records are read.
#[derive(Debug, Clone, Default, Args)]
pub struct ReadArgs {
    /// Attack-name to class mapping (`name,class` lines); the built-in table when absent.
    #[arg(long, value_name = "FILE")]
    pub taxonomy: Option<PathBuf>,

    /// Whether CSV files start with a header line [default: true for UNSW-NB15 only].
    #[arg(long, value_name = "BOOL")]
    pub has_header: Option<bool>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Dataset layout.
    #[arg(long, value_name = "KIND", default_value = "nsl-kdd")]
    pub dataset: DatasetKind,

    /// Training CSV [default: the official training file in --data-dir].
    #[arg(long, value_name = "FILE")]
    pub train_csv: Option<PathBuf>,

    #[command(flatten)]
    pub read: ReadArgs,

    /// Where to write the fitted pipeline (JSON).
    #[arg(long, value_name = "FILE")]
    pub out_pipeline: PathBuf,

    /// Where to write the normalized training matrix.
    #[arg(long, value_name = "FILE")]
    pub out_matrix: PathBuf,
}

/// Experiment settings: a config file plus per-field overrides.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment configuration (TOML).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for initialization, shuffling and splits; replaces the config's seed. Required without --config.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Dataset layout of the raw CSV files.
    #[arg(long, value_name = "KIND")]
    pub dataset: Option<DatasetKind>,

    /// Passes over the training data.
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Records per optimizer step.
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// dnn, rnn or lstm.
    #[arg(long, value_name = "KIND")]
    pub model_kind: Option<ModelKind>,

    /// Hidden units per layer or cell.
    #[arg(long)]
    pub hidden_dim: Option<usize>,

    /// Hidden activation of the dnn model: relu, sigmoid or tanh.
    #[arg(long)]
    pub activation: Option<ActivationKind>,

    /// Sequence length the encoded record is split into (rnn and lstm).
    #[arg(long)]
    pub time_steps: Option<usize>,

    /// Global gradient-norm threshold; 0 disables clipping.
    #[arg(long)]
    pub clip_norm: Option<f64>,

    /// Hold out this fraction of the training file for evaluation.
    #[arg(long, value_name = "FRACTION")]
    pub eval_split: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,

    /// sgd, adagrad, adadelta, rmsprop, adam, adamax or nadam.
    #[arg(long, value_name = "KIND")]
    pub optimizer: Option<OptimizerKind>,

    /// Step size; other hyperparameters keep the optimizer's defaults unless set in --config.
    #[arg(long)]
    pub learning_rate: Option<f64>,

    /// Pipeline written by `preprocess`.
    #[arg(
        long,
        value_name = "FILE",
        requires = "matrix",
        conflicts_with = "train_csv"
    )]
    pub pipeline: Option<PathBuf>,

    /// Matrix written by `preprocess`.
    #[arg(long, value_name = "FILE", requires = "pipeline")]
    pub matrix: Option<PathBuf>,

    /// Raw training CSV, preprocessed here [default: config or --data-dir].
    #[arg(long, value_name = "FILE")]
    pub train_csv: Option<PathBuf>,

    #[command(flatten)]
    pub read: ReadArgs,

    /// Where to write the model artifact.
    #[arg(long, value_name = "FILE")]
    pub out_model: PathBuf,
}

/// Which records a saved model is scored on.
#[derive(Debug, Args)]
pub struct EvalDataArgs {
    /// Test CSV [default: held-out part of the training file when the model was trained with eval_split, else the official test file].
    #[arg(long, value_name = "FILE")]
    pub test_csv: Option<PathBuf>,

    /// Training CSV the held-out split is drawn from [default: the one recorded in the model].
    #[arg(long, value_name = "FILE", conflicts_with = "test_csv")]
    pub train_csv: Option<PathBuf>,

    #[command(flatten)]
    pub read: ReadArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model artifact written by `train`.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,

    #[command(flatten)]
    pub data: EvalDataArgs,

    /// Where to write the metrics (JSON).
    #[arg(long, value_name = "FILE")]
    pub out_metrics: PathBuf,

    /// Metrics in long CSV form [default: --out-metrics with a .csv extension].
    #[arg(long, value_name = "FILE")]
    pub out_metrics_csv: Option<PathBuf>,

    /// Per-record predictions [default: <out-metrics stem>.predictions.csv].
    #[arg(long, value_name = "FILE")]
    pub out_predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub config: ConfigArgs,

    /// Raw training CSV [default: config or --data-dir].
    #[arg(long, value_name = "FILE")]
    pub train_csv: Option<PathBuf>,

    /// Test CSV, used when no eval_split is set [default: config or --data-dir].
    #[arg(long, value_name = "FILE")]
    pub test_csv: Option<PathBuf>,

    /// Train on a class-stratified subsample of this many records.
    #[arg(long, value_name = "N", value_parser = positive)]
    pub subsample: Option<usize>,

    #[command(flatten)]
    pub read: ReadArgs,

    /// Where to write the ranked table (JSON).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,

    /// Table as CSV [default: --out with a .csv extension].
    #[arg(long, value_name = "FILE")]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RocArgs {
    /// Metrics file written by `evaluate`.
    #[arg(
        long,
        value_name = "FILE",
        conflicts_with = "model",
        required_unless_present = "model"
    )]
    pub metrics: Option<PathBuf>,

    /// Model artifact to score instead of a metrics file.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,

    #[command(flatten)]
    pub data: EvalDataArgs,

    /// Directory for the per-class curve files.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics file from `evaluate` or table from `compare-optimizers` (repeatable).
    #[arg(long = "metrics", value_name = "FILE")]
    pub metrics: Vec<PathBuf>,

    /// Display name for the matching --metrics file [default: its file stem].
    #[arg(long = "name", value_name = "NAME")]
    pub names: Vec<String>,

    /// Where to write the report JSON; the CSV goes next to it.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}
