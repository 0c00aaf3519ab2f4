use std::path::{Path, PathBuf};

use log::info;
use mcids::codec::write_atomic;
use mcids::dataset::{class_distribution, split, stratified_subsample, LabeledDataset};
use mcids::metrics::roc_csv;
use mcids::preprocess::{FeatureMatrix, PipelineState};
use mcids::runner::{
    compare_optimizers, emit_report, evaluate, evaluate_matrix, load_dataset, load_model,
    prepare_holdout, prepare_test_file, save_model, train_with_observer, BaselineTable,
    ComparisonTable, DatasetConfig, EvaluationDoc, ExperimentConfig, ModelArtifact, NamedReport,
    Protocol,
};
use mcids::{Error, Result};
use serde_json::{json, Value};

use crate::args::{
    Cli, Command, CompareArgs, ConfigArgs, EvalDataArgs, EvaluateArgs, PreprocessArgs, ReadArgs,
    ReportArgs, RocArgs, TrainArgs,
};

/// Runs the command and returns its JSON summary.
pub fn run(cli: &Cli) -> Result<Value> {
    let data_dir = cli.data_dir.as_deref();
    match &cli.command {
        Command::Preprocess(a) => preprocess(a, data_dir),
        Command::Train(a) => train(a, data_dir),
        Command::Evaluate(a) => evaluate_cmd(a, data_dir),
        Command::CompareOptimizers(a) => compare(a, data_dir),
        Command::Roc(a) => roc(a, data_dir),
        Command::Report(a) => report(a),
    }
}

fn missing(what: &str, flag: &str) -> Error {
    Error::ConfigInvalid(format!(
        "no {what}: pass {flag} or set IDS_DATA_DIR / --data-dir"
    ))
}

fn with_read(mut cfg: DatasetConfig, read: &ReadArgs) -> DatasetConfig {
    if read.taxonomy.is_some() {
        cfg.taxonomy = read.taxonomy.clone();
    }
    if read.has_header.is_some() {
        cfg.has_header = read.has_header;
    }
    cfg
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn preprocess(a: &PreprocessArgs, data_dir: Option<&Path>) -> Result<Value> {
    let cfg = with_read(
        DatasetConfig {
            kind: a.dataset,
            train: a.train_csv.clone(),
            ..DatasetConfig::default()
        },
        &a.read,
    );
    let path = cfg
        .resolve_files(data_dir)
        .0
        .ok_or_else(|| missing("training file", "--train-csv"))?;
    let ds = load_dataset(&cfg, &path)?;
    let (pipeline, matrix) = PipelineState::fit(&ds)?;
    pipeline.save(&a.out_pipeline)?;
    matrix.save(&a.out_matrix)?;

    let counts = class_distribution(&ds);
    let dist: serde_json::Map<String, serde_json::Value> = ds
        .class_names
        .iter()
        .enumerate()
        .map(|(c, name)| (name.clone(), json!(counts.get(&c).copied().unwrap_or(0))))
        .collect();
    Ok(json!({
        "dataset": a.dataset,
        "source": path,
        "records": ds.len(),
        "encoded_width": pipeline.width(),
        "class_distribution": dist,
        "pipeline": a.out_pipeline,
        "pipeline_checksum": pipeline.checksum(),
        "matrix": a.out_matrix,
    }))
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.seed) {
            (Some(path), seed) => ExperimentConfig::load_with_seed(path, seed)?,
            (None, Some(seed)) => ExperimentConfig::with_seed(seed),
            (None, None) => {
                return Err(Error::ConfigInvalid(
                    "a seed is required: pass --seed or --config".into(),
                ))
            }
        };
        if let Some(v) = self.dataset {
            cfg.dataset.kind = v;
        }
        if let Some(v) = self.epochs {
            cfg.training.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.training.batch_size = v;
        }
        if let Some(v) = self.model_kind {
            cfg.model.kind = v;
        }
        if let Some(v) = self.hidden_dim {
            cfg.model.hidden_dim = v;
        }
        if let Some(v) = self.activation {
            cfg.model.activation = v;
        }
        if let Some(v) = self.time_steps {
            cfg.model.time_steps = v;
        }
        if let Some(v) = self.clip_norm {
            cfg.training.clip_norm = Some(v);
        }
        if let Some(v) = self.eval_split {
            cfg.training.eval_split = Some(v);
        }
        Ok(cfg)
    }
}

fn train(a: &TrainArgs, data_dir: Option<&Path>) -> Result<Value> {
    let mut cfg = a.config.resolve()?;
    if let Some(k) = a.optimizer {
        cfg.optimizer.kind = k;
    }
    if let Some(lr) = a.learning_rate {
        cfg.optimizer.learning_rate = Some(lr);
    }
    cfg.dataset = with_read(cfg.dataset, &a.read);
    cfg.validate()?;

    let (pipeline, matrix, eval) = match (&a.pipeline, &a.matrix) {
        (Some(p), Some(m)) => {
            if cfg.training.eval_split.is_some() {
                return Err(Error::ConfigInvalid(
                    "eval_split needs --train-csv so the pipeline is fitted on the training part only".into(),
                ));
            }
            let pipeline = PipelineState::load(p)?;
            if cfg.dataset.kind != pipeline.schema_name {
                info!(
                    "dataset kind {} taken from the pipeline",
                    pipeline.schema_name
                );
                cfg.dataset.kind = pipeline.schema_name;
            }
            (pipeline, FeatureMatrix::load(m)?, None)
        }
        _ => {
            if a.train_csv.is_some() {
                cfg.dataset.train = a.train_csv.clone();
            }
            let path = cfg
                .dataset
                .resolve_files(data_dir)
                .0
                .ok_or_else(|| missing("training data", "--train-csv"))?;
            cfg.dataset.train = Some(path.clone());
            let ds = load_dataset(&cfg.dataset, &path)?;
            match cfg.training.eval_split {
                Some(f) => {
                    let p = prepare_holdout(&ds, f, cfg.seed)?;
                    (p.pipeline, p.train, Some((p.eval, p.protocol)))
                }
                None => {
                    let (pipeline, train) = PipelineState::fit(&ds)?;
                    (pipeline, train, None)
                }
            }
        }
    };
    finish_train(a, &cfg, &pipeline, &matrix, eval)
}

fn finish_train(
    a: &TrainArgs,
    cfg: &ExperimentConfig,
    pipeline: &PipelineState,
    matrix: &FeatureMatrix,
    held_out: Option<(FeatureMatrix, Protocol)>,
) -> Result<Value> {
    let (artifact, report) =
        train_with_observer(cfg, pipeline, matrix, |s| eprintln!("{}", s.log_line()))?;
    save_model(&artifact, &a.out_model)?;
    let last = report.epochs.last();
    let mut summary = json!({
        "model": a.out_model,
        "model_kind": cfg.model.kind,
        "optimizer": cfg.optimizer.kind,
        "records": report.records,
        "epochs": report.epochs.len(),
        "final_loss": last.map(|e| e.loss),
        "final_train_accuracy": last.map(|e| e.accuracy),
        "param_checksum": report.param_checksum,
        "wall_clock_seconds": report.wall_clock_seconds,
    });
    if let Some((eval_m, protocol)) = held_out {
        let eval = evaluate_matrix(&artifact, &eval_m)?;
        summary["held_out"] = json!({ "protocol": protocol, "overall": eval.report.overall });
    }
    Ok(summary)
}

/// Records to score a saved model on, and how they were chosen.
fn eval_records(
    artifact: &ModelArtifact,
    data: &EvalDataArgs,
    data_dir: Option<&Path>,
) -> Result<(LabeledDataset, Protocol, PathBuf)> {
    let cfg = with_read(artifact.config.dataset.clone(), &data.read);
    if let Some(test) = &data.test_csv {
        return Ok((load_dataset(&cfg, test)?, Protocol::TestFile, test.clone()));
    }
    let (train_path, test_path) = cfg.resolve_files(data_dir);
    match artifact.config.training.eval_split {
        Some(fraction) => {
            let path = data
                .train_csv
                .clone()
                .or(train_path)
                .ok_or_else(|| missing("training file", "--train-csv"))?;
            let seed = artifact.config.seed;
            let (_, held_out) = split(&load_dataset(&cfg, &path)?, fraction, seed)?;
            Ok((held_out, Protocol::HoldoutSplit { fraction, seed }, path))
        }
        None => {
            let path = test_path.ok_or_else(|| missing("test file", "--test-csv"))?;
            Ok((load_dataset(&cfg, &path)?, Protocol::TestFile, path))
        }
    }
}

fn evaluate_cmd(a: &EvaluateArgs, data_dir: Option<&Path>) -> Result<Value> {
    let artifact = load_model(&a.model)?;
    let (ds, protocol, source) = eval_records(&artifact, &a.data, data_dir)?;
    let eval = evaluate(&artifact, &ds)?;
    let doc = EvaluationDoc {
        dataset: artifact.pipeline.schema_name,
        protocol,
        source: Some(source.display().to_string()),
        model_checksum: artifact.model.param_checksum(),
        metrics: eval.report.clone(),
    };
    let csv_path = a
        .out_metrics_csv
        .clone()
        .unwrap_or_else(|| a.out_metrics.with_extension("csv"));
    let pred_path = a
        .out_predictions
        .clone()
        .unwrap_or_else(|| sibling(&a.out_metrics, ".predictions.csv"));
    write_atomic(&a.out_metrics, doc.to_json().as_bytes())?;
    write_atomic(&csv_path, eval.report.to_csv().as_bytes())?;
    write_atomic(&pred_path, eval.predictions_csv().as_bytes())?;
    Ok(json!({
        "dataset": doc.dataset,
        "protocol": protocol,
        "records": eval.y_true.len(),
        "overall": eval.report.overall,
        "metrics": a.out_metrics,
        "metrics_csv": csv_path,
        "predictions": pred_path,
    }))
}

fn compare(a: &CompareArgs, data_dir: Option<&Path>) -> Result<Value> {
    let mut cfg = a.config.resolve()?;
    cfg.dataset = with_read(cfg.dataset, &a.read);
    if a.train_csv.is_some() {
        cfg.dataset.train = a.train_csv.clone();
    }
    if a.test_csv.is_some() {
        cfg.dataset.test = a.test_csv.clone();
    }
    cfg.validate()?;
    let (train_path, test_path) = cfg.dataset.resolve_files(data_dir);
    let train_path = train_path.ok_or_else(|| missing("training file", "--train-csv"))?;
    let mut ds = load_dataset(&cfg.dataset, &train_path)?;
    if let Some(n) = a.subsample {
        ds = stratified_subsample(&ds, n, cfg.seed)?;
        info!("subsampled {} training records", ds.len());
    }
    let prepared = match cfg.training.eval_split {
        Some(f) => prepare_holdout(&ds, f, cfg.seed)?,
        None => {
            let test_path =
                test_path.ok_or_else(|| missing("test file or eval_split", "--test-csv"))?;
            prepare_test_file(&ds, &load_dataset(&cfg.dataset, &test_path)?)?
        }
    };
    let table = compare_optimizers(
        &cfg,
        &prepared.pipeline,
        &prepared.train,
        &prepared.eval,
        prepared.protocol,
    )?;
    let csv_path = a
        .out_csv
        .clone()
        .unwrap_or_else(|| a.out.with_extension("csv"));
    write_atomic(&a.out, table.to_json().as_bytes())?;
    write_atomic(&csv_path, table.to_csv().as_bytes())?;
    let failed: Vec<_> = table
        .rows
        .iter()
        .filter(|r| r.error.is_some())
        .map(|r| r.optimizer)
        .collect();
    Ok(json!({
        "protocol": table.protocol,
        "train_records": prepared.train.rows(),
        "eval_records": prepared.eval.rows(),
        "ranking": table.rows.iter().filter(|r| r.rank.is_some()).map(|r| r.optimizer).collect::<Vec<_>>(),
        "failed": failed,
        "adamax_ranked_first": table.adamax_ranked_first,
        "table": a.out,
        "table_csv": csv_path,
    }))
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn roc(a: &RocArgs, data_dir: Option<&Path>) -> Result<Value> {
    let metrics = match (&a.metrics, &a.model) {
        (Some(path), _) => EvaluationDoc::from_json(&read_text(path)?)?.metrics,
        (None, Some(model)) => {
            let artifact = load_model(model)?;
            let (ds, _, _) = eval_records(&artifact, &a.data, data_dir)?;
            evaluate(&artifact, &ds)?.report
        }
        (None, None) => unreachable!("clap requires --metrics or --model"),
    };
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
        path: a.out_dir.clone(),
        source: e,
    })?;
    let mut files = Vec::new();
    for r in &metrics.roc {
        let base = format!("roc_{}_{}", r.class, file_safe(&r.name));
        let path = if r.degenerate {
            let path = a.out_dir.join(format!("{base}.degenerate"));
            let why = format!(
                "degenerate: class {} has {} positives and {} negatives, so no ROC curve is defined\n",
                r.name, r.positives, r.negatives
            );
            write_atomic(&path, why.as_bytes())?;
            path
        } else {
            let path = a.out_dir.join(format!("{base}.csv"));
            write_atomic(&path, roc_csv(&r.points).as_bytes())?;
            path
        };
        files.push(json!({
            "class": r.class,
            "name": r.name,
            "auc": r.auc,
            "degenerate": r.degenerate,
            "file": path,
        }));
    }
    Ok(json!({ "curves": files }))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn report(a: &ReportArgs) -> Result<Value> {
    if a.names.len() > a.metrics.len() {
        return Err(Error::ConfigInvalid(format!(
            "{} --name values for {} --metrics files",
            a.names.len(),
            a.metrics.len()
        )));
    }
    let mut reports = Vec::new();
    for (i, path) in a.metrics.iter().enumerate() {
        let name = a.names.get(i).cloned().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("run{i}"))
        });
        let text = read_text(path)?;
        if let Ok(doc) = EvaluationDoc::from_json(&text) {
            reports.push(NamedReport {
                name,
                dataset: doc.dataset,
                protocol: doc.protocol,
                metrics: doc.metrics,
            });
            continue;
        }
        let table = ComparisonTable::from_json(&text).map_err(|_| {
            Error::CorruptArtifact(format!(
                "{}: neither an evaluation file nor a comparison table",
                path.display()
            ))
        })?;
        for row in table.rows {
            if let Some(metrics) = row.report {
                reports.push(NamedReport {
                    name: format!("{name}/{}", row.optimizer),
                    dataset: table.dataset,
                    protocol: table.protocol,
                    metrics,
                });
            }
        }
    }
    let baselines = BaselineTable::shipped();
    let (json_path, csv_path) = emit_report(&reports, &baselines, &a.out)?;
    Ok(json!({
        "measured": reports.len(),
        "baselines": baselines.rows.len(),
        "report": json_path,
        "report_csv": csv_path,
    }))
}
