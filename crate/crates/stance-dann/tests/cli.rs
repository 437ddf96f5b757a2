mod common;

use std::fs;
use std::process::Command;

use common::*;
use stance_dann::cmd::train::{CHECKPOINT_FILE, MANIFEST_FILE, PLOT_FILE};
use stance_dann::dataset::{read_dataset, write_dataset, Record};
use stance_dann::manifest::RunManifest;
use stance_dann_core::checkpoint;
use stance_dann_core::config::{FeatureKinds, LabelSpace, ModelConfig};
use stance_dann_core::data::{DomainTag, StanceLabel};
use stance_dann_core::metrics::EvaluationReport;
use stance_dann_core::model::{FeatureSpace, Init, StanceModel};
use stance_dann_core::textprep::Vocabulary;
use tempfile::tempdir;

/// Half a unit in the third decimal, plus representation error.
const HALF_UNIT: f64 = 5e-4 + 1e-12;

fn report_row(out: &str) -> EvaluationReport {
    let row = out.lines().last().expect("a report row");
    EvaluationReport::parse_row(row).unwrap()
}

#[test]
fn ingest_prints_counts() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("all.jsonl");
    let o = cli(&[
        "ingest",
        "--fnc-stances",
        path_str(&fixture("fnc_stances.csv")),
        "--fnc-bodies",
        path_str(&fixture("fnc_bodies.csv")),
        "--fever",
        path_str(&fixture("fever.jsonl")),
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("dropped NOT ENOUGH INFO: 2"), "{text}");
    assert!(text.contains("source: 3"), "{text}");
    assert!(text.contains("target: 6"), "{text}");
    assert!(text.contains("unrelated: 3"), "{text}");
    let records = read_dataset(&out).unwrap();
    assert_eq!(records.len(), 9);
}

#[test]
fn ingest_missing_file_names_the_path() {
    let dir = tempdir().unwrap();
    let missing = dir.path().join("nowhere.jsonl");
    let o = cli(&[
        "ingest",
        "--fever",
        path_str(&missing),
        "--out",
        path_str(&dir.path().join("o.jsonl")),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains(path_str(&missing)), "{}", stderr(&o));
}

#[test]
fn train_records_the_best_run() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    write_synthetic_dataset(&data, 3);
    let config = write_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = cli(&[
        "train",
        "--config",
        path_str(&config),
        "--data",
        path_str(&data),
        "--out-dir",
        path_str(&out),
        "--runs",
        "5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = RunManifest::read(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.runs, 5);
    let best = manifest.best_run.expect("best run recorded");
    assert!(best < 5);
    assert!(stdout(&o).contains(&format!("best run {best}")));
    assert_eq!(manifest.artifacts.histories.len(), 5);
    for h in &manifest.artifacts.histories {
        let log = fs::read_to_string(out.join(h)).unwrap();
        assert_eq!(log.lines().count(), 1 + SMALL_EPOCHS, "{h}");
    }
    assert!(manifest.config.iter().any(|l| l == "runs = 5"));
    assert_eq!(manifest.datasets[0].sha256.len(), 64);
    let model = checkpoint::decode(&fs::read(out.join(CHECKPOINT_FILE)).unwrap()).unwrap();
    assert_eq!(model.label_space(), LabelSpace::Stance);
    let plot = fs::read_to_string(out.join(PLOT_FILE)).unwrap();
    assert!(plot.contains(&format!("history-run{best}.tsv")));
}

#[test]
fn train_unknown_config_key() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    write_synthetic_dataset(&data, 3);
    let config = write_config(dir.path(), "dropout_rate = 0.5\n");
    let o = cli(&[
        "train",
        "--config",
        path_str(&config),
        "--data",
        path_str(&data),
        "--out-dir",
        path_str(&dir.path().join("out")),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("dropout_rate"), "{}", stderr(&o));
}

#[test]
fn train_hierarchy_writes_one_container() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    write_dataset(&data, &mixed_records(8)).unwrap();
    let config = write_config(dir.path(), "hierarchy = true\nstage1_features = bow\n");
    let out = dir.path().join("out");
    let o = cli(&[
        "train",
        "--config",
        path_str(&config),
        "--data",
        path_str(&data),
        "--out-dir",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bytes = fs::read(out.join(CHECKPOINT_FILE)).unwrap();
    assert!(checkpoint::is_hierarchy(&bytes));
    assert!(out.join("history-run0-stage1.tsv").exists());
    assert!(out.join("history-run0-stage2.tsv").exists());
    let o = cli(&[
        "evaluate",
        "--checkpoint",
        path_str(&out.join(CHECKPOINT_FILE)),
        "--data",
        path_str(&data),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    report_row(&stdout(&o));
}

#[test]
fn thread_cap_must_be_positive() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    write_synthetic_dataset(&data, 3);
    let o = Command::new(env!("CARGO_BIN_EXE_stance-dann"))
        .args([
            "train",
            "--data",
            path_str(&data),
            "--out-dir",
            path_str(&dir.path().join("out")),
        ])
        .env("STANCE_DANN_THREADS", "0")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("STANCE_DANN_THREADS"), "{}", stderr(&o));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("data.jsonl");
    write_synthetic_dataset(&data, 5);
    let config = write_config(dir.path(), "runs = 3\n");
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("out{threads}"));
        let o = Command::new(env!("CARGO_BIN_EXE_stance-dann"))
            .args([
                "train",
                "--config",
                path_str(&config),
                "--data",
                path_str(&data),
                "--out-dir",
                path_str(&out),
            ])
            .env("STANCE_DANN_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(fs::read(out.join(CHECKPOINT_FILE)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn evaluate_perfect_predictions() {
    let dir = tempdir().unwrap();
    let ckpt = dir.path().join("keyword.ckpt");
    write_keyword_model(&ckpt);
    let data = dir.path().join("data.jsonl");
    let labels: Vec<StanceLabel> = (0..20).map(|i| StanceLabel::ALL[i % 4]).collect();
    write_dataset(&data, &keyword_records(&labels)).unwrap();
    let o = cli(&[
        "evaluate",
        "--checkpoint",
        path_str(&ckpt),
        "--data",
        path_str(&data),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(
        text.lines().last().unwrap(),
        "1.000 1.000 1.000 1.000/1.000/1.000/1.000"
    );
    assert_eq!(text.lines().next().unwrap(), EvaluationReport::header());
}

#[test]
fn evaluate_all_unrelated_predictor() {
    let dir = tempdir().unwrap();
    let ckpt = dir.path().join("keyword.ckpt");
    write_keyword_model(&ckpt);
    let data = dir.path().join("data.jsonl");
    let labels: Vec<StanceLabel> = (0..100)
        .map(|i| {
            if i < 73 {
                StanceLabel::Unrelated
            } else {
                StanceLabel::ALL[i % 3]
            }
        })
        .collect();
    let mut records = keyword_records(&labels);
    for r in &mut records {
        r.claim = format!("{} claim", keyword(StanceLabel::Unrelated));
    }
    write_dataset(&data, &records).unwrap();
    let sidecar = dir.path().join("report.json");
    let o = cli(&[
        "evaluate",
        "--checkpoint",
        path_str(&ckpt),
        "--data",
        path_str(&data),
        "--sidecar",
        path_str(&sidecar),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (unrelated, related) = (73.0, 27.0);
    let oracle = 0.25 * unrelated / (0.25 * unrelated + related);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&sidecar).unwrap()).unwrap();
    assert_eq!(json["weighted_accuracy"].as_f64().unwrap(), oracle);
    assert_eq!(json["accuracy"].as_f64().unwrap(), 0.73);
    assert_eq!(json["examples"].as_u64().unwrap(), 100);
    let row = report_row(&stdout(&o));
    assert!((row.weighted_accuracy - oracle).abs() <= HALF_UNIT);
    assert!((row.accuracy - 0.73).abs() <= HALF_UNIT);
}

#[test]
fn evaluate_sidecar_round_trips() {
    let dir = tempdir().unwrap();
    let ckpt = dir.path().join("keyword.ckpt");
    write_keyword_model(&ckpt);
    let data = dir.path().join("data.jsonl");
    let labels: Vec<StanceLabel> = (0..37).map(|i| StanceLabel::ALL[(i * 7) % 4]).collect();
    let mut records = keyword_records(&labels);
    for (i, r) in records.iter_mut().enumerate() {
        if i % 3 == 0 {
            r.claim = format!("{} claim", keyword(StanceLabel::ALL[(i + 1) % 4]));
        }
    }
    write_dataset(&data, &records).unwrap();
    let o = cli(&[
        "evaluate",
        "--checkpoint",
        path_str(&ckpt),
        "--data",
        path_str(&data),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let row = report_row(&stdout(&o));
    let sidecar = dir.path().join("keyword.ckpt.report.json");
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sidecar).unwrap()).unwrap();
    let close = |printed: f64, key: &str| {
        let full = json[key].as_f64().unwrap();
        assert!(
            (printed - full).abs() <= HALF_UNIT,
            "{key}: {printed} vs {full}"
        );
    };
    close(row.weighted_accuracy, "weighted_accuracy");
    close(row.accuracy, "accuracy");
    close(row.macro_f1, "macro_f1");
    for (i, printed) in row.per_class_f1.iter().enumerate() {
        let full = json["per_class_f1"][i][1].as_f64().unwrap();
        assert_eq!(json["per_class_f1"][i][0], StanceLabel::ALL[i].as_str());
        assert!((printed - full).abs() <= HALF_UNIT);
    }
}

#[test]
fn evaluate_domain_filter() {
    let dir = tempdir().unwrap();
    let ckpt = dir.path().join("keyword.ckpt");
    write_keyword_model(&ckpt);
    let data = dir.path().join("data.jsonl");
    let mut records = keyword_records(&StanceLabel::ALL);
    records[0].domain = DomainTag::Source;
    records[0].claim = format!("{} claim", keyword(StanceLabel::Discuss));
    write_dataset(&data, &records).unwrap();
    let sidecar = dir.path().join("r.json");
    let args = [
        "evaluate",
        "--checkpoint",
        path_str(&ckpt),
        "--data",
        path_str(&data),
        "--sidecar",
        path_str(&sidecar),
    ];
    let o = cli(&[&args[..], &["--domain", "target"]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&sidecar).unwrap()).unwrap();
    assert_eq!(json["examples"].as_u64().unwrap(), 3);
    assert_eq!(json["accuracy"].as_f64().unwrap(), 1.0);
    let o = cli(&args);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&sidecar).unwrap()).unwrap();
    assert!(o.status.success());
    assert_eq!(json["accuracy"].as_f64().unwrap(), 0.75);
}

#[test]
fn evaluate_requires_labels() {
    let dir = tempdir().unwrap();
    let ckpt = dir.path().join("keyword.ckpt");
    write_keyword_model(&ckpt);
    let data = dir.path().join("data.jsonl");
    let mut records = keyword_records(&StanceLabel::ALL);
    records[2].label = None;
    write_dataset(&data, &records).unwrap();
    let o = cli(&[
        "evaluate",
        "--checkpoint",
        path_str(&ckpt),
        "--data",
        path_str(&data),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("labels required"), "{}", stderr(&o));
}

#[test]
fn evaluate_rejects_class_order_mismatch() {
    let dir = tempdir().unwrap();
    let ckpt = dir.path().join("binary.ckpt");
    let config = ModelConfig {
        use_bow: true,
        use_cnn: false,
        da_features: FeatureKinds::NONE,
        bow_vocab_size: 2,
        label_space: LabelSpace::Relatedness,
        ..ModelConfig::default()
    };
    let vocab = Vocabulary::from_counts([("claim".to_string(), 1), ("document".to_string(), 1)], 2)
        .unwrap();
    let space = FeatureSpace {
        bow: Some(vocab),
        embed: None,
    };
    let model = StanceModel::new(&config, space, Init::Zeros).unwrap();
    fs::write(&ckpt, checkpoint::encode(&model)).unwrap();
    let data = dir.path().join("data.jsonl");
    write_dataset(&data, &keyword_records(&StanceLabel::ALL)).unwrap();
    let o = cli(&[
        "evaluate",
        "--checkpoint",
        path_str(&ckpt),
        "--data",
        path_str(&data),
    ]);
    assert!(!o.status.success());
    assert!(
        stderr(&o).contains("class order mismatch"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn predict_labels_every_record() {
    let dir = tempdir().unwrap();
    let ckpt = dir.path().join("keyword.ckpt");
    write_keyword_model(&ckpt);
    let data = dir.path().join("data.jsonl");
    let mut records = keyword_records(&[
        StanceLabel::Discuss,
        StanceLabel::Agree,
        StanceLabel::Unrelated,
    ]);
    for r in &mut records {
        r.label = None;
    }
    write_dataset(&data, &records).unwrap();
    let out = dir.path().join("pred.jsonl");
    let o = cli(&[
        "predict",
        "--checkpoint",
        path_str(&ckpt),
        "--data",
        path_str(&data),
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let labeled = read_dataset(&out).unwrap();
    let labels: Vec<Option<StanceLabel>> = labeled.iter().map(|r| r.label).collect();
    assert_eq!(
        labels,
        [
            Some(StanceLabel::Discuss),
            Some(StanceLabel::Agree),
            Some(StanceLabel::Unrelated)
        ]
    );
    let ids: Vec<&str> = labeled.iter().map(|r: &Record| r.id.as_str()).collect();
    assert_eq!(ids, ["k0", "k1", "k2"]);
}

#[test]
fn gradcheck_default_config_passes() {
    let o = cli(&["gradcheck"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert!(!text.contains("FAIL"), "{text}");
    assert!(text.contains("lambda = 0 zeroes"), "{text}");
}

#[test]
fn gradcheck_corrupted_backward_names_the_layer() {
    let o = cli(&["gradcheck", "--corrupt-backward", "label.hidden"]);
    assert!(!o.status.success());
    let text = stdout(&o);
    let failing: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("FAIL") && l.contains("coords"))
        .collect();
    assert!(!failing.is_empty());
    assert_eq!(failing.len(), 2, "{text}");
    assert!(
        failing.iter().all(|l| l.contains("label.hidden")),
        "{failing:?}"
    );
    assert!(text.lines().last().unwrap().starts_with("FAIL"), "{text}");
}

#[test]
fn gradcheck_all_variants_pass_at_zero_lambda() {
    let o = cli(&["gradcheck", "--all-variants", "--lambda", "0"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.matches("lambda = 0 zeroes").count(), 3, "{text}");
}

#[test]
fn synthbench_reports_are_reproducible() {
    let dir = tempdir().unwrap();
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = cli(&[
            "synthbench",
            "--seed",
            "11",
            "--seeds",
            "1",
            "--epochs",
            "6",
            "--out-dir",
            path_str(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = fs::read_to_string(out.join("synthbench.txt")).unwrap();
        assert_eq!(format!("{}\n", stdout(&o).trim_end()), text);
        reports.push((
            text,
            fs::read_to_string(out.join("synthbench.json")).unwrap(),
        ));
    }
    assert_eq!(reports[0], reports[1]);
    let (text, json) = &reports[0];
    assert!(
        text.contains("f1 da") && text.contains("probe da"),
        "{text}"
    );
    let json: serde_json::Value = serde_json::from_str(json).unwrap();
    let seed = &json["seeds"][0];
    for key in [
        "adapted_macro_f1",
        "plain_macro_f1",
        "adapted_probe_accuracy",
        "plain_probe_accuracy",
    ] {
        assert!(seed[key].as_f64().is_some(), "{json}");
    }
}

#[test]
fn synthbench_flags_insufficient_training() {
    let dir = tempdir().unwrap();
    let o = cli(&[
        "synthbench",
        "--seeds",
        "1",
        "--epochs",
        "0",
        "--out-dir",
        path_str(&dir.path().join("o")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("insufficient training"), "{text}");
    assert!(text.trim_end().ends_with("FAIL"), "{text}");
}
