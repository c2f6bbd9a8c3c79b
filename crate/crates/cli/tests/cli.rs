//! End-to-end tests of the `fontpair` binary on small synthetic corpora.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TINY_CONFIG: &str = "\
[model]
input_size = 32
conv_channels = [4, 4, 8, 8]
fc_sizes = [16, 8, 2]

[train]
batch_size = 32
learning_rate = 0.001
max_epochs = 2
";

fn fontpair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fontpair"))
        .args(args)
        .env_remove("FONTPAIR_SEED")
        .output()
        .expect("run fontpair")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[track_caller]
fn ok(o: Output) -> Output {
    assert_eq!(o.status.code(), Some(0), "stdout: {}\nstderr: {}", stdout(&o), stderr(&o));
    o
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

/// Writes `n` synthetic fonts and builds them into a 32 px dataset.
fn corpus(root: &Path, n: usize, seed: u64) -> (PathBuf, PathBuf) {
    let fonts = root.join("fonts");
    synthfont::write_corpus(&fonts, n, seed).unwrap();
    let dataset = root.join("dataset");
    ok(fontpair(&["build-dataset", "--fonts-dir", s(&fonts), "--out", s(&dataset), "--size", "32"]));
    (fonts, dataset)
}

#[test]
fn help_exits_zero() {
    let o = ok(fontpair(&["--help"]));
    assert!(stdout(&o).contains("Usage"));
    for cmd in ["build-dataset", "split", "folds", "count-pairs", "train", "cv", "eval", "cross-eval", "pca", "gradcam", "report", "defaults"] {
        assert!(stdout(&o).contains(cmd), "help lacks {cmd}");
    }
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(fontpair(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(fontpair(&["train"]).status.code(), Some(2), "missing required flags");
    assert_eq!(fontpair(&["count-pairs", "--fonts", "many"]).status.code(), Some(2));
}

#[test]
fn count_pairs_for_test_set() {
    let o = ok(fontpair(&["count-pairs", "--fonts", "628"]));
    let text = stdout(&o);
    assert!(text.contains("204,100 positives"), "{text}");
    assert!(text.contains("325 per font"), "{text}");
    assert!(stdout(&ok(fontpair(&["count-pairs", "--fonts", "1132"]))).contains("367,900"));
}

#[test]
fn domain_errors_exit_one_with_coded_line() {
    let o = fontpair(&["count-pairs", "--fonts", "3", "--chars", "1"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[core.invalid_argument]: "), "{err}");
}

#[test]
fn report_on_empty_dir_is_missing_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = fontpair(&["report", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[cli.missing_report]"), "{}", stderr(&o));
}

#[test]
fn defaults_print_parseable_toml() {
    let o = ok(fontpair(&["defaults"]));
    let v: toml::Table = toml::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["train"]["batch_size"].as_integer(), Some(128));
    assert_eq!(v["model"]["conv_channels"].as_array().map(Vec::len), Some(4));
    assert!(v.contains_key("cv"));
}

#[test]
fn bad_config_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.toml");
    fs::write(&cfg, "[train]\nbatchsize = 3\n").unwrap();
    let out = dir.path().join("run");
    let o = fontpair(&["train", "--pairs", s(dir.path()), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[cli.invalid_config]"), "{}", stderr(&o));
    let meta = read_json(&out.join("run_meta.json"));
    assert_eq!(meta["status"], "error");
    assert_eq!(meta["error"]["code"], "cli.invalid_config");
}

#[test]
fn split_manifests_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (_, dataset) = corpus(dir.path(), 10, 3);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(fontpair(&[
            "--seed", seed, "--deterministic", "split", "--dataset", s(&dataset), "--out", s(&out),
            "--train", "6", "--val", "2", "--test", "2",
        ]));
        out
    };
    let (a, b, c) = (run("a", "5"), run("b", "5"), run("c", "6"));
    for f in ["split.json", "pairs_train.jsonl", "pairs_val.jsonl", "pairs_test.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_ne!(fs::read(a.join("split.json")).unwrap(), fs::read(c.join("split.json")).unwrap());

    // Seed from the environment when no flag is given.
    let out = dir.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_fontpair"))
        .args(["--deterministic", "split", "--dataset", s(&dataset), "--out", s(&out), "--train", "6", "--val", "2", "--test", "2"])
        .env("FONTPAIR_SEED", "5")
        .output()
        .unwrap();
    ok(o);
    assert_eq!(fs::read(a.join("split.json")).unwrap(), fs::read(out.join("split.json")).unwrap());

    let split = read_json(&a.join("split.json"));
    assert_eq!(split["train_fonts"].as_array().unwrap().len(), 6);
    assert!(split["dataset"].is_string());
    let meta = read_json(&a.join("run_meta.json"));
    assert_eq!(meta["status"], "ok");
    assert_eq!(meta["seed"], 5);
    assert_eq!(meta["config"]["train"], 6);
    assert_eq!(meta["inputs"].as_object().unwrap().len(), 1);

    let folds = dir.path().join("folds");
    ok(fontpair(&["folds", "--dataset", s(&dataset), "--k", "5", "--out", s(&folds)]));
    let f = read_json(&folds.join("folds.json"));
    assert_eq!(f["folds"].as_array().unwrap().len(), 5);
}

#[test]
fn build_dataset_honours_exclusions() {
    let dir = tempfile::tempdir().unwrap();
    let fonts = dir.path().join("fonts");
    synthfont::write_corpus(&fonts, 4, 1).unwrap();
    let first = fontpair::raster::find_font_files(&fonts).unwrap().remove(0);
    let id = fontpair::raster::font_id_for(&first, &fonts);
    let exclude = dir.path().join("exclude.txt");
    fs::write(&exclude, format!("# manual exclusions\n{id}\n\n")).unwrap();
    let out = dir.path().join("dataset");
    ok(fontpair(&["build-dataset", "--fonts-dir", s(&fonts), "--out", s(&out), "--size", "32", "--exclude", s(&exclude)]));
    let ds = fontpair::raster::Dataset::open(&out).unwrap();
    assert_eq!(ds.fonts.len(), 3);
    assert!(ds.entry(&id).is_none());
    assert!(fs::read_to_string(out.join("rejected.jsonl")).unwrap().contains("manual"));
    assert_eq!(read_json(&out.join("run_meta.json"))["inputs"].as_object().unwrap().len(), 2);
}

/// Dataset -> split -> train -> eval -> report -> gradcam -> pca -> cross-eval.
#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let (_, dataset) = corpus(&root.join("a"), 10, 11);
    let cfg = root.join("train.toml");
    fs::write(&cfg, TINY_CONFIG).unwrap();

    let split = root.join("split");
    ok(fontpair(&[
        "--seed", "1", "split", "--dataset", s(&dataset), "--out", s(&split),
        "--train", "6", "--val", "2", "--test", "2", "--max-train-pairs", "400", "--max-val-pairs", "100",
    ]));

    // Deterministic training twice: identical checkpoints and logs.
    let train = |name: &str| {
        let out = root.join(name);
        ok(fontpair(&[
            "--seed", "4", "--deterministic", "train", "--pairs", s(&split), "--split", s(&split.join("split.json")),
            "--config", s(&cfg), "--out", s(&out), "--epochs", "3",
        ]));
        out
    };
    let (t1, t2) = (train("train1"), train("train2"));
    for f in ["model.ckpt", "train_log.csv"] {
        assert_eq!(fs::read(t1.join(f)).unwrap(), fs::read(t2.join(f)).unwrap(), "{f} differs");
    }
    let ckpt = t1.join("model.ckpt");
    let loaded = fontpair::netmodel::ModelCheckpoint::load(&ckpt).unwrap();
    assert_eq!(loaded.rng_seed, 4);
    assert_eq!(loaded.config.input_size, 32);
    assert_eq!(loaded.provenance.train_font_ids.len(), 6);
    assert_eq!(loaded.provenance.train_font_sha256.len(), 6);
    assert_eq!(fs::read_to_string(t1.join("train_log.csv")).unwrap().lines().count(), 4, "header + 3 epochs");
    let meta = read_json(&t1.join("run_meta.json"));
    assert_eq!(meta["config"]["train"]["max_epochs"], 3, "flag beats file");
    assert_eq!(meta["config"]["train"]["batch_size"], 32, "file beats default");
    assert_eq!(meta["config"]["train"]["beta1"], 0.9, "default");
    assert_eq!(meta["seed"], 4);
    assert_eq!(meta["inputs"].as_object().unwrap().len(), 4);

    // Evaluation and the consolidated report.
    let eval = root.join("eval");
    let test_pairs = split.join("pairs_test.jsonl");
    ok(fontpair(&["eval", "--ckpt", s(&ckpt), "--pairs", s(&test_pairs), "--out", s(&eval)]));
    for f in ["report.json", "confusion.csv", "charpair_matrix.csv", "ranked_pairs.csv", "run_meta.json"] {
        assert!(eval.join(f).is_file(), "missing {f}");
    }
    let report = read_json(&eval.join("report.json"));
    assert_eq!(report["n_pairs"], 1300);
    ok(fontpair(&["report", s(&eval), "--top", "5"]));
    let summary = read_json(&eval.join("summary.json"));
    assert_eq!(summary["accuracy"], report["accuracy"]);
    assert_eq!(
        summary["accuracy"].as_f64().unwrap().to_bits(),
        report["accuracy"].as_f64().unwrap().to_bits()
    );
    assert_eq!(summary["worst_pairs"].as_array().unwrap().len(), 5);
    assert!(fs::read_to_string(eval.join("summary.txt")).unwrap().contains("accuracy"));

    // Grad-CAM on one test pair.
    let cam = root.join("cam");
    ok(fontpair(&["gradcam", "--ckpt", s(&ckpt), "--pair-manifest", s(&test_pairs), "--index", "3", "--target", "same", "--out", s(&cam)]));
    let meta = read_json(&cam.join("gradcam_meta.json"));
    assert_eq!(meta["target"], "same");
    for name in meta["images"].as_array().unwrap() {
        let (w, h, channels, _) = fontpair::raster::read_png(&cam.join(name.as_str().unwrap())).unwrap();
        assert_eq!((w, h, channels), (32, 32, 3));
    }
    let o = fontpair(&["gradcam", "--ckpt", s(&ckpt), "--pair-manifest", s(&test_pairs), "--index", "99999", "--out", s(&cam)]);
    assert_eq!(o.status.code(), Some(1));

    // PCA over the training fonts.
    let pca = root.join("pca");
    ok(fontpair(&["pca", "--ckpt", s(&ckpt), "--split", s(&split.join("split.json")), "--chars", "D", "E", "--fonts", "train", "--out", s(&pca)]));
    let points = fontpair::explain::read_scatter_csv(&pca.join("pca_points.csv")).unwrap();
    assert_eq!(points.len(), 12);
    let overlap = read_json(&pca.join("pca.json"))["overlap_score"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&overlap));
    assert!(pca.join("pca_D_E.png").is_file());
    let o = fontpair(&["pca", "--ckpt", s(&ckpt), "--split", s(&split.join("split.json")), "--chars", "D", "D", "--out", s(&pca)]);
    assert!(stderr(&o).starts_with("error[explain.identical_characters]"), "{}", stderr(&o));

    // Cross-dataset evaluation on raw fonts from a disjoint corpus.
    let (fonts_b, _) = corpus(&root.join("b"), 3, 99);
    let cross = root.join("cross");
    ok(fontpair(&["cross-eval", "--ckpt", s(&ckpt), "--fonts-dir", s(&fonts_b), "--out", s(&cross)]));
    let summary = read_json(&cross.join("cross_eval.json"));
    assert_eq!(summary["n_positive"], 3 * 325);
    assert_eq!(summary["n_negative"], 3 * 325);

    // The training corpus itself is rejected as leakage.
    let o = fontpair(&["cross-eval", "--ckpt", s(&ckpt), "--fonts-dir", s(&dataset), "--out", s(&root.join("leak"))]);
    assert!(stderr(&o).starts_with("error[trainer.leakage_detected]"), "{}", stderr(&o));
    assert_eq!(read_json(&root.join("leak/run_meta.json"))["status"], "error");
}

#[test]
fn train_rejects_test_font_leakage() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let (_, dataset) = corpus(root, 7, 21);
    let split = root.join("split");
    ok(fontpair(&["split", "--dataset", s(&dataset), "--out", s(&split), "--train", "3", "--val", "2", "--test", "2", "--max-train-pairs", "50", "--max-val-pairs", "20", "--max-test-pairs", "20"]));
    // Train on the test manifest: every training font is a test font.
    fs::copy(split.join("pairs_test.jsonl"), split.join("pairs_train.jsonl")).unwrap();
    let cfg = root.join("train.toml");
    fs::write(&cfg, TINY_CONFIG).unwrap();
    let out = root.join("run");
    let o = fontpair(&["train", "--pairs", s(&split), "--split", s(&split.join("split.json")), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[trainer.leakage_detected]"), "{}", stderr(&o));
    assert!(!out.join("model.ckpt").exists());
    let meta = read_json(&out.join("run_meta.json"));
    assert_eq!(meta["status"], "error");
    assert_eq!(meta["config"]["model"]["input_size"], 32);
}

#[test]
fn cross_validation_writes_every_fold() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let (_, dataset) = corpus(root, 8, 5);
    let cfg = root.join("train.toml");
    fs::write(&cfg, format!("{TINY_CONFIG}\n[cv]\ntrain_val_ratio = [2, 1]\nmax_train_pairs = 200\nmax_val_pairs = 60\n")).unwrap();
    let out = root.join("cv");
    ok(fontpair(&[
        "--seed", "2", "cv", "--dataset", s(&dataset), "--k", "4", "--config", s(&cfg), "--out", s(&out),
        "--epochs", "1", "--max-test-pairs", "100",
    ]));
    let summary = read_json(&out.join("cv_summary.json"));
    assert_eq!(summary["k"], 4);
    let accs: Vec<f64> = summary["accuracies"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(accs.len(), 4);
    let mean = accs.iter().sum::<f64>() / 4.0;
    assert!((summary["mean_accuracy"].as_f64().unwrap() - mean).abs() < 1e-12);
    for i in 0..4 {
        let fold = out.join(format!("fold_{i}"));
        assert_eq!(read_json(&fold.join("report.json"))["n_pairs"], 100);
        assert!(fold.join("model.ckpt").is_file());
    }
    assert_eq!(read_json(&out.join("run_meta.json"))["config"]["cv"]["max_train_pairs"], 200);

    // Reusing the written folds with a contradicting k is refused.
    let o = fontpair(&["cv", "--folds", s(&out.join("folds.json")), "--k", "3", "--out", s(&root.join("cv2"))]);
    assert!(stderr(&o).starts_with("error[cli.invalid_argument]"), "{}", stderr(&o));
}
