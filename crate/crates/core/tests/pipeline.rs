use mcids::dataset::{read_csv, DatasetKind, LabeledDataset};
use mcids::metrics::{confusion, overall_metrics, per_class_metrics};
use mcids::model::ModelKind;
use mcids::optim::OptimizerKind;
use mcids::preprocess::PipelineState;
use mcids::runner::{
    compare_optimizers, evaluate, evaluate_matrix, load_model, prepare_holdout, save_model, train,
    ExperimentConfig, OptimizerConfig, Protocol,
};
use mcids::synth::{nsl_kdd_like_csv, SynthOptions};
use mcids::Error;

fn nsl(text: &str) -> LabeledDataset {
    let k = DatasetKind::NslKdd;
    read_csv(text.as_bytes(), &k.schema(), &k.default_taxonomy(), false).unwrap()
}

fn synthetic(n: usize, seed: u64) -> LabeledDataset {
    nsl(&nsl_kdd_like_csv(n, seed, &SynthOptions::default()))
}

fn small_config(seed: u64, kind: ModelKind, epochs: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::with_seed(seed);
    c.model.kind = kind;
    c.model.hidden_dim = 16;
    c.training.epochs = epochs;
    c.training.batch_size = 32;
    c
}

/// Rows that differ only in `src_bytes`: small means DoS, large means normal.
fn separable_rows(n: usize) -> String {
    let mut out = String::new();
    for i in 0..n {
        let (bytes, label) = if i % 2 == 0 {
            (i % 7, "neptune")
        } else {
            (900 + i % 11, "normal")
        };
        let mut f = vec![
            "0".to_string(),
            "tcp".into(),
            "http".into(),
            "SF".into(),
            bytes.to_string(),
        ];
        f.extend((5..41).map(|_| "0".to_string()));
        f.push(label.into());
        f.push("0".into());
        out.push_str(&f.join(","));
        out.push('\n');
    }
    out
}

#[test]
fn holdout_training_learns_the_synthetic_classes() {
    let ds = synthetic(3000, 5);
    let data = prepare_holdout(&ds, 0.2, 5).unwrap();
    assert_eq!(data.eval.rows(), 600);
    for kind in ModelKind::ALL {
        let cfg = small_config(5, kind, 6);
        let (artifact, report) = train(&cfg, &data.pipeline, &data.train).unwrap();
        assert_eq!(report.epochs.len(), 6);
        let eval = evaluate_matrix(&artifact, &data.eval).unwrap();
        assert!(
            eval.report.overall.accuracy > 0.9,
            "{kind}: {}",
            eval.report.overall.accuracy
        );
    }
}

#[test]
fn one_epoch_records_one_entry() {
    let ds = synthetic(10, 1);
    let (pipeline, m) = PipelineState::fit(&ds).unwrap();
    let (_, report) = train(&small_config(1, ModelKind::Dnn, 1), &pipeline, &m).unwrap();
    assert_eq!(report.epochs.len(), 1);
    assert_eq!(report.records, 10);
}

#[test]
fn separable_toy_reaches_full_training_accuracy_with_sgd() {
    let ds = nsl(&separable_rows(40));
    let (pipeline, m) = PipelineState::fit(&ds).unwrap();
    let mut cfg = small_config(3, ModelKind::Dnn, 200);
    cfg.optimizer = OptimizerConfig::defaults(OptimizerKind::Sgd);
    cfg.optimizer.learning_rate = Some(0.01);
    cfg.training.batch_size = 8;
    let (artifact, report) = train(&cfg, &pipeline, &m).unwrap();
    assert_eq!(report.epochs.last().unwrap().accuracy, 1.0);

    let losses: Vec<f64> = report.epochs.iter().map(|e| e.loss).collect();
    for w in 0..losses.len() - 10 {
        assert!(
            losses[w + 10] <= losses[w],
            "epoch {}: {} > {}",
            w + 11,
            losses[w + 10],
            losses[w]
        );
    }

    let eval = evaluate(&artifact, &ds).unwrap();
    assert_eq!(eval.report.overall.accuracy, 1.0);
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let ds = synthetic(400, 2);
    let (pipeline, m) = PipelineState::fit(&ds).unwrap();
    for kind in ModelKind::ALL {
        let cfg = small_config(9, kind, 2);
        let (a, ra) = train(&cfg, &pipeline, &m).unwrap();
        let (b, rb) = train(&cfg, &pipeline, &m).unwrap();
        assert_eq!(ra.param_checksum, rb.param_checksum);
        assert_eq!(ra.epochs, rb.epochs);
        assert_eq!(a.to_bytes(), b.to_bytes());
        let (c, _) = train(&small_config(10, kind, 2), &pipeline, &m).unwrap();
        assert_ne!(a.model.param_checksum(), c.model.param_checksum());
    }
}

#[test]
fn saved_model_evaluates_identically() {
    let ds = synthetic(500, 4);
    let data = prepare_holdout(&ds, 0.3, 4).unwrap();
    let (artifact, _) = train(
        &small_config(4, ModelKind::Lstm, 2),
        &data.pipeline,
        &data.train,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&artifact, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    let direct = evaluate_matrix(&artifact, &data.eval).unwrap();
    let reloaded = evaluate_matrix(&loaded, &data.eval).unwrap();
    assert_eq!(direct, reloaded);
    assert_eq!(direct.report.to_json(), reloaded.report.to_json());
    let path2 = dir.path().join("model2.json");
    save_model(&loaded, &path2).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&path2).unwrap()
    );
}

#[test]
fn evaluation_handles_unseen_services_without_refitting() {
    let train_ds = synthetic(400, 6);
    let test_ds = nsl(&nsl_kdd_like_csv(
        200,
        7,
        &SynthOptions {
            unseen_service_rate: 0.3,
            ..SynthOptions::default()
        },
    ));
    let (pipeline, m) = PipelineState::fit(&train_ds).unwrap();
    let (artifact, _) = train(&small_config(6, ModelKind::Dnn, 2), &pipeline, &m).unwrap();
    let before = artifact.pipeline.checksum();
    let snapshot = artifact.clone();
    let eval = evaluate(&artifact, &test_ds).unwrap();
    assert_eq!(eval.y_true.len(), 200);
    assert_eq!(artifact.pipeline.checksum(), before);
    assert_eq!(artifact, snapshot);
}

#[test]
fn prediction_dump_recounts_to_the_same_metrics() {
    let ds = synthetic(600, 8);
    let data = prepare_holdout(&ds, 0.25, 8).unwrap();
    let (artifact, _) = train(
        &small_config(8, ModelKind::Rnn, 2),
        &data.pipeline,
        &data.train,
    )
    .unwrap();
    let eval = evaluate_matrix(&artifact, &data.eval).unwrap();

    let csv = eval.predictions_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "row,true,pred,p0,p1,p2,p3,p4");
    let (mut t, mut p) = (Vec::new(), Vec::new());
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        t.push(f[1].parse::<usize>().unwrap());
        p.push(f[2].parse::<usize>().unwrap());
    }
    let cm = confusion(&t, &p, 5, 4).unwrap();
    assert_eq!(cm, eval.report.confusion);
    assert_eq!(overall_metrics(&cm).unwrap(), eval.report.overall);
    assert_eq!(per_class_metrics(&cm).unwrap(), eval.report.per_class);
}

#[test]
fn schema_mismatch_is_reported() {
    let ds = synthetic(50, 1);
    let (pipeline, m) = PipelineState::fit(&ds).unwrap();
    let (artifact, _) = train(&small_config(1, ModelKind::Dnn, 1), &pipeline, &m).unwrap();
    let mut other = ds.clone();
    other.schema = DatasetKind::Kdd99.schema();
    assert!(matches!(
        evaluate(&artifact, &other),
        Err(Error::SchemaMismatch { .. })
    ));
}

#[test]
fn exploding_updates_abort_with_divergence() {
    let ds = synthetic(200, 3);
    let (pipeline, m) = PipelineState::fit(&ds).unwrap();
    let mut cfg = small_config(3, ModelKind::Dnn, 5);
    cfg.optimizer = OptimizerConfig::defaults(OptimizerKind::Sgd);
    cfg.optimizer.learning_rate = Some(1e300);
    cfg.training.clip_norm = None;
    assert!(matches!(
        train(&cfg, &pipeline, &m),
        Err(Error::NumericDivergence { .. })
    ));
}

#[test]
fn optimizer_comparison_is_complete_and_repeatable() {
    let ds = synthetic(500, 12);
    let data = prepare_holdout(&ds, 0.2, 12).unwrap();
    let cfg = small_config(12, ModelKind::Lstm, 2);
    let a =
        compare_optimizers(&cfg, &data.pipeline, &data.train, &data.eval, data.protocol).unwrap();
    assert_eq!(a.rows.len(), 7);
    let mut kinds: Vec<_> = a.rows.iter().map(|r| r.optimizer).collect();
    kinds.sort();
    assert_eq!(kinds, OptimizerKind::ALL.to_vec());
    assert!(a.rows.iter().all(|r| r.error.is_none()));
    assert_eq!(
        a.rows.iter().filter_map(|r| r.rank).collect::<Vec<_>>(),
        (1..=7).collect::<Vec<_>>()
    );
    assert!(matches!(a.protocol, Protocol::HoldoutSplit { .. }));

    let b =
        compare_optimizers(&cfg, &data.pipeline, &data.train, &data.eval, data.protocol).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.to_json(), b.to_json());
}
