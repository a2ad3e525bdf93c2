//! End-to-end tests of the `harkit` binary: artifact round-trips, the error
//! contract, and byte-reproducibility of every pipeline stage.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

/// Small-but-real configuration: full taxonomy, short videos, a model sized
/// for sub-second epochs.
const TINY_CONFIG: &str = r#"
seed = 11

[model]
window_len = 20
seq_len = 4
stem_width = 12
block_widths = [16, 16, 16]
se_reduction = 4
gru_hidden = 12
attn_pool_dim = 8
embed_dim = 16
wat_heads = 2
wat_ff = 32
gate_hidden = 8

[data]
window_len = 20
window_stride = 10

[synth]
videos = 40
duration_s = 3.0

[optim]
epochs = 2
warmup_epochs = 1
batch_size = 16
micro_batch = 8
patience = 0
lr = 1e-3

[sweep]
betas = [0.0, 0.3, 1.0]
epochs = 1

[analyze]
permutations = 49
"#;

fn harkit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_harkit"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn harkit");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Write the shared config and generate a corpus under `dir`.
fn synth_corpus(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let config = dir.join("config.toml");
    fs::write(&config, TINY_CONFIG).unwrap();
    let corpus = dir.join("corpus");
    run_ok(harkit().args([
        "--config",
        config.to_str().unwrap(),
        "synth",
        "--out",
        corpus.to_str().unwrap(),
    ]));
    (config, corpus.join("raw"), corpus.join("labels.jsonl"))
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap())
        .unwrap_or_else(|e| panic!("parsing {}: {e}", path.display()))
}

#[test]
fn version_embeds_the_config_schema() {
    let out = run_ok(harkit().arg("--version"));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("config schema v1"), "got: {text}");
}

#[test]
fn failures_exit_nonzero_with_one_json_line() {
    let dir = TempDir::new().unwrap();
    let (config, raw, labels) = synth_corpus(dir.path());
    let out = harkit()
        .args([
            "--config",
            config.to_str().unwrap(),
            "eval",
            "--checkpoint",
            dir.path().join("missing.bin").to_str().unwrap(),
            "--imu",
            raw.to_str().unwrap(),
            "--labels",
            labels.to_str().unwrap(),
            "--out",
            dir.path().join("eval").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let mut lines = stderr.lines();
    let line = lines.next().expect("an error line");
    assert_eq!(lines.next(), None, "more than one stderr line: {stderr}");
    let parsed: serde_json::Value = serde_json::from_str(line).expect("stderr line is JSON");
    assert!(parsed["error"].as_str().unwrap().contains("missing.bin"));
}

#[test]
fn pipeline_round_trips_and_reproduces() {
    let dir = TempDir::new().unwrap();
    let (config, raw, _) = synth_corpus(dir.path());
    let config = config.to_str().unwrap();

    // Same seed, second corpus: byte-identical files.
    let corpus2 = dir.path().join("corpus2");
    run_ok(harkit().args(["--config", config, "synth", "--out", corpus2.to_str().unwrap()]));
    for name in ["labels.jsonl", "synth.json", "raw/v0000.csv"] {
        assert_eq!(
            fs::read(dir.path().join("corpus").join(name)).unwrap(),
            fs::read(corpus2.join(name)).unwrap(),
            "{name} differs between same-seed corpora"
        );
    }

    // Prepare: disjoint, non-empty splits; curated labels emitted.
    let prepared = dir.path().join("prepared");
    run_ok(harkit().args([
        "--config",
        config,
        "prepare",
        "--imu",
        raw.to_str().unwrap(),
        "--labels",
        dir.path().join("corpus/labels.jsonl").to_str().unwrap(),
        "--out",
        prepared.to_str().unwrap(),
    ]));
    let manifest = read_json(&prepared.join("manifest.json"));
    let split_ids = |name: &str| -> Vec<String> {
        manifest["splits"][name]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap().to_string())
            .collect()
    };
    let (train_v, val_v, test_v) = (split_ids("train"), split_ids("val"), split_ids("test"));
    assert!(!train_v.is_empty() && !val_v.is_empty() && !test_v.is_empty());
    let mut all = [train_v.clone(), val_v.clone(), test_v.clone()].concat();
    all.sort();
    let n = all.len();
    all.dedup();
    assert_eq!(all.len(), n, "splits share a video id");
    let labels = prepared.join("labels.jsonl");

    // Train twice: identical checkpoint and history bytes.
    let run1 = dir.path().join("run1");
    let run2 = dir.path().join("run2");
    for run in [&run1, &run2] {
        run_ok(harkit().args([
            "--config",
            config,
            "train",
            "--imu",
            raw.to_str().unwrap(),
            "--labels",
            labels.to_str().unwrap(),
            "--out",
            run.to_str().unwrap(),
        ]));
    }
    for name in ["checkpoint.bin", "history.json", "history.csv"] {
        assert_eq!(
            fs::read(run1.join(name)).unwrap(),
            fs::read(run2.join(name)).unwrap(),
            "{name} differs between same-seed runs"
        );
    }
    let history = read_json(&run1.join("history.json"));
    assert_eq!(history["epochs_run"], 2);
    assert_eq!(history["schema_version"], 1);
    assert!(history["config_hash"].as_str().unwrap().len() == 64);

    // Eval on the written checkpoint, no retraining.
    let eval_dir = dir.path().join("eval");
    run_ok(harkit().args([
        "--config",
        config,
        "eval",
        "--checkpoint",
        run1.join("checkpoint.bin").to_str().unwrap(),
        "--imu",
        raw.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]));
    let metrics = read_json(&eval_dir.join("metrics.json"));
    assert_eq!(metrics["split"], "test");
    assert!(metrics["metrics"]["n_windows"].as_u64().unwrap() > 0);

    // Analyze with the checkpoint: model-free reports plus embeddings.
    let analysis = dir.path().join("analysis");
    run_ok(harkit().args([
        "--config",
        config,
        "analyze",
        "--imu",
        raw.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--checkpoint",
        run1.join("checkpoint.bin").to_str().unwrap(),
        "--out",
        analysis.to_str().unwrap(),
    ]));
    for name in [
        "separability.json",
        "separability.csv",
        "transitions.json",
        "transitions.csv",
        "knn.json",
        "knn.csv",
        "embeddings.csv",
    ] {
        assert!(analysis.join(name).exists(), "missing {name}");
    }
    let transitions = read_json(&analysis.join("transitions.json"));
    let scopes: Vec<&str> = transitions["matrices"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["scope"].as_str().unwrap())
        .collect();
    assert_eq!(scopes[0], "all");
    assert!(scopes.len() > 1, "expected per-scenario matrices");

    // Analyze without a checkpoint still writes the model-free reports.
    let modelfree = dir.path().join("modelfree");
    run_ok(harkit().args([
        "--config",
        config,
        "analyze",
        "--imu",
        raw.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--out",
        modelfree.to_str().unwrap(),
    ]));
    assert!(modelfree.join("separability.json").exists());
    assert!(!modelfree.join("embeddings.csv").exists());
    for name in ["separability.json", "transitions.json", "knn.json"] {
        assert_eq!(
            fs::read(analysis.join(name)).unwrap(),
            fs::read(modelfree.join(name)).unwrap(),
            "{name} depends on checkpoint presence"
        );
    }

    // Sweep: one row per beta.
    let sweep_dir = dir.path().join("sweep");
    run_ok(harkit().args([
        "--config",
        config,
        "sweep",
        "--imu",
        raw.to_str().unwrap(),
        "--labels",
        labels.to_str().unwrap(),
        "--out",
        sweep_dir.to_str().unwrap(),
    ]));
    let table = fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 3, "header plus three betas");
}

#[test]
fn seed_override_changes_outputs() {
    let dir = TempDir::new().unwrap();
    let (config, _, _) = synth_corpus(dir.path());
    let other = dir.path().join("other");
    run_ok(harkit().args([
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "999",
        "synth",
        "--out",
        other.to_str().unwrap(),
    ]));
    assert_ne!(
        fs::read(dir.path().join("corpus/labels.jsonl")).unwrap(),
        fs::read(other.join("labels.jsonl")).unwrap(),
        "different seeds should label differently"
    );
    let manifest = read_json(&other.join("synth.json"));
    assert_eq!(manifest["seed"], 999);
}

/// Annotations over five Cooking videos of the tiny corpus (enough for a
/// 3/1/1 split): six verified records, one exact duplicate awaiting
/// propagation, one correction, one deletion.
fn annotation_fixture(dir: &Path) -> PathBuf {
    let lines = [
        r#"{"video_id":"v0000","timestamp_s":0.8,"narration":"Picks up the pan.","scenario":"Cooking","llm_label":"ObjectTransfer","verdict":"Gold"}"#,
        r#"{"video_id":"v0000","timestamp_s":2.0,"narration":"picks up pan","scenario":"Cooking","llm_label":"Stationary","verdict":"Skipped"}"#,
        r#"{"video_id":"v0008","timestamp_s":1.0,"narration":"walks to the bench","scenario":"Cooking","llm_label":"Locomotion","verdict":"Gold"}"#,
        r#"{"video_id":"v0008","timestamp_s":2.2,"narration":"wanders off","scenario":"Cooking","llm_label":"Locomotion","verdict":"Deleted"}"#,
        r#"{"video_id":"v0016","timestamp_s":1.0,"narration":"stirs the pot","scenario":"Cooking","llm_label":"Search","verdict":"Corrected","corrected_label":"TaskOperation"}"#,
        r#"{"video_id":"v0024","timestamp_s":1.5,"narration":"stands still","scenario":"Cooking","llm_label":"Stationary","verdict":"Gold"}"#,
        r#"{"video_id":"v0032","timestamp_s":1.2,"narration":"scans the room","scenario":"Cooking","llm_label":"Search","verdict":"Gold"}"#,
        r#"{"video_id":"v0032","timestamp_s":2.4,"narration":"walks to the bench","scenario":"Cooking","llm_label":"Locomotion","verdict":"Gold"}"#,
    ];
    let path = dir.join("annotations.jsonl");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

#[test]
fn prepare_curates_annotations_into_spans() {
    let dir = TempDir::new().unwrap();
    let (config, raw, _) = synth_corpus(dir.path());
    let annotations = annotation_fixture(dir.path());
    let out = dir.path().join("curated");
    run_ok(harkit().args([
        "--config",
        config.to_str().unwrap(),
        "prepare",
        "--imu",
        raw.to_str().unwrap(),
        "--annotations",
        annotations.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]));
    let coverage = read_json(&out.join("coverage.json"));
    let gold = coverage["gold_coverage"].as_f64().unwrap();
    let total = coverage["total_coverage"].as_f64().unwrap();
    assert!(gold > 0.0 && gold <= total && total <= 1.0);
    let propagation = read_json(&out.join("propagation.json"));
    // The skipped duplicate of "picks up pan" receives the gold label.
    assert_eq!(propagation["exact_count"], 1);
    assert!(out.join("conflicts.csv").exists());
    assert!(out.join("pairs.csv").exists());

    // Derived spans: only positive-weight records, clipped to the video.
    let labels = fs::read_to_string(out.join("labels.jsonl")).unwrap();
    let spans: Vec<serde_json::Value> = labels
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(spans.len(), 7, "verified + propagated: {labels}");
    for span in &spans {
        assert!(span["weight"].as_f64().unwrap() > 0.0);
        assert!(span["end_s"].as_f64().unwrap() <= 3.0);
        assert!(span["start_s"].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn curate_stages_run_standalone() {
    let dir = TempDir::new().unwrap();
    let annotations = annotation_fixture(dir.path());
    let config = dir.path().join("config.toml");
    fs::write(&config, TINY_CONFIG).unwrap();
    let config = config.to_str().unwrap();

    // normalize: idempotent text rewrite.
    let norm1 = dir.path().join("norm1");
    let norm2 = dir.path().join("norm2");
    run_ok(harkit().args([
        "--config", config, "curate", "normalize",
        "--annotations", annotations.to_str().unwrap(),
        "--out", norm1.to_str().unwrap(),
    ]));
    run_ok(harkit().args([
        "--config", config, "curate", "normalize",
        "--annotations", norm1.join("normalized.jsonl").to_str().unwrap(),
        "--out", norm2.to_str().unwrap(),
    ]));
    assert_eq!(
        fs::read(norm1.join("normalized.jsonl")).unwrap(),
        fs::read(norm2.join("normalized.jsonl")).unwrap()
    );
    let normalized = fs::read_to_string(norm1.join("normalized.jsonl")).unwrap();
    assert!(normalized.contains("\"picks up pan\""));

    // dedup: "picks up pan" appears under two labels (two groups), while the
    // two "walks to the bench" records collapse into one.
    let dedup = dir.path().join("dedup");
    run_ok(harkit().args([
        "--config", config, "curate", "dedup",
        "--annotations", annotations.to_str().unwrap(),
        "--out", dedup.to_str().unwrap(),
    ]));
    let groups = read_json(&dedup.join("groups.json"));
    assert_eq!(groups["groups"].as_array().unwrap().len(), 7);

    // quota: budget 3 spread across the populated classes.
    let quota = dir.path().join("quota");
    run_ok(harkit().args([
        "--config", config, "curate", "quota",
        "--annotations", annotations.to_str().unwrap(),
        "--budget", "3",
        "--out", quota.to_str().unwrap(),
    ]));
    let summary = read_json(&quota.join("quota.json"));
    assert_eq!(summary["selected"], 3);
    let kept = fs::read_to_string(quota.join("selected.jsonl")).unwrap();
    assert_eq!(kept.lines().count(), 3);

    // tier → propagate → coverage chain.
    let tiered = dir.path().join("tiered");
    run_ok(harkit().args([
        "--config", config, "curate", "tier",
        "--annotations", annotations.to_str().unwrap(),
        "--out", tiered.to_str().unwrap(),
    ]));
    let tiered_text = fs::read_to_string(tiered.join("tiered.jsonl")).unwrap();
    assert!(tiered_text.contains("\"tier\":1"));
    assert!(tiered_text.contains("\"tier\":3"));
    assert!(tiered_text.contains("\"tier\":4"));

    let expanded = dir.path().join("expanded");
    run_ok(harkit().args([
        "--config", config, "curate", "propagate",
        "--annotations", tiered.join("tiered.jsonl").to_str().unwrap(),
        "--out", expanded.to_str().unwrap(),
    ]));
    let report = read_json(&expanded.join("propagation.json"));
    assert_eq!(report["exact_count"], 1);
    assert!(report["expansion_factor"].as_f64().unwrap() > 1.0);

    let durations = dir.path().join("durations.json");
    fs::write(
        &durations,
        r#"{"v0000": 3.0, "v0008": 3.0, "v0016": 3.0, "v0024": 3.0, "v0032": 3.0}"#,
    )
    .unwrap();
    let cov = dir.path().join("coverage");
    run_ok(harkit().args([
        "--config", config, "curate", "coverage",
        "--annotations", expanded.join("expanded.jsonl").to_str().unwrap(),
        "--durations", durations.to_str().unwrap(),
        "--out", cov.to_str().unwrap(),
    ]));
    let report = read_json(&cov.join("coverage.json"));
    assert!(report["total_coverage"].as_f64().unwrap() > 0.0);
}
