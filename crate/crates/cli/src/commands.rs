//! Subcommand implementations.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fontpair::evaluator::{self, EvalReport, RankedPair};
use fontpair::explain::{self, Upsampling};
use fontpair::netmodel::{image_to_input, ModelCheckpoint};
use fontpair::pairgen::{self, PairRecord, SplitManifest, DIFFERENT, SAME};
use fontpair::raster::{self, BuildOptions, Dataset, GlyphImage, InkBounds};
use fontpair::trainer::{self, CvOptions};
use fontpair::derive_seed;
use serde::Serialize;
use serde_json::json;

use crate::config::{FileConfig, TrainOverrides};
use crate::error::CliError;
use crate::meta::RunMeta;
use crate::{Cli, Command, FontSet, TargetArg, UpsampleArg};

type Result<T = ()> = std::result::Result<T, CliError>;

pub const SPLIT_FILE: &str = "split.json";
pub const FOLDS_FILE: &str = "folds.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const CV_SUMMARY_FILE: &str = "cv_summary.json";
pub const CROSS_EVAL_FILE: &str = "cross_eval.json";
pub const PCA_POINTS_FILE: &str = "pca_points.csv";
pub const PCA_FILE: &str = "pca.json";
pub const GRADCAM_FILE: &str = "gradcam_meta.json";
pub const SUMMARY_TEXT_FILE: &str = "summary.txt";
pub const SUMMARY_JSON_FILE: &str = "summary.json";

/// Pair manifest file name for a split part (`train`, `val`, `test`).
pub fn pairs_file(part: &str) -> String {
    format!("pairs_{part}.jsonl")
}

pub fn execute(cli: &Cli, meta: &mut RunMeta) -> Result {
    let seed = cli.global.seed.unwrap_or(0);
    let deterministic = cli.global.deterministic;
    match &cli.command {
        Command::BuildDataset { fonts_dir, out, size, exclude, ink_low, ink_high } => {
            build_dataset(meta, fonts_dir, out, *size, exclude.as_deref(), InkBounds { low: *ink_low, high: *ink_high })
        }
        Command::Split { dataset, out, train, val, test, max_train_pairs, max_val_pairs, max_test_pairs } => split(
            meta,
            dataset,
            out,
            (*train, *val, *test),
            [*max_train_pairs, *max_val_pairs, *max_test_pairs],
            seed,
        ),
        Command::Folds { dataset, k, out } => folds(meta, dataset, *k, out, seed),
        Command::CountPairs { fonts, chars } => count_pairs(*fonts, *chars),
        Command::Train { pairs, split, config, out, overrides } => {
            train(meta, pairs, split.as_deref(), config.as_deref(), out, overrides, cli.global.seed, deterministic)
        }
        Command::Cv { dataset, folds, k, config, out, max_train_pairs, max_val_pairs, max_test_pairs, overrides } => {
            let limits = [*max_train_pairs, *max_val_pairs, *max_test_pairs];
            cv(meta, dataset.as_deref(), folds.as_deref(), *k, config.as_deref(), out, limits, overrides, cli.global.seed, deterministic)
        }
        Command::Eval { ckpt, pairs, out } => eval(meta, ckpt, pairs, out),
        Command::CrossEval { ckpt, fonts_dir, out } => cross_eval(meta, ckpt, fonts_dir, out, seed),
        Command::Pca { ckpt, split, chars, out, fonts, dataset } => {
            pca(meta, ckpt, split, (chars[0], chars[1]), out, *fonts, dataset.as_deref())
        }
        Command::Gradcam { ckpt, pair_manifest, index, target, upsample, out } => {
            gradcam(meta, ckpt, pair_manifest, *index, *target, *upsample, out)
        }
        Command::Report { run_dir, top } => report(meta, run_dir, *top),
        Command::Defaults => {
            print!("{}", defaults_toml());
            Ok(())
        }
    }
}

/// The default `train.toml`, with a header comment.
pub fn defaults_toml() -> String {
    format!(
        "# fontpair defaults. Precedence: command-line flags > this file > built-in defaults.\n\n{}",
        FileConfig::default().to_toml()
    )
}

/// `1234567` -> `"1,234,567"`.
pub fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn create_dir(dir: &Path) -> Result {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::InvalidArgument(format!("cannot create output directory {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::InvalidArgument(format!("cannot serialize {}: {e}", path.display())))?;
    fs::write(path, text + "\n").map_err(|e| CliError::InvalidArgument(format!("cannot write {}: {e}", path.display())))
}

fn read_exclusions(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::InvalidArgument(format!("cannot read exclusion list {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

fn build_dataset(
    meta: &mut RunMeta,
    fonts_dir: &Path,
    out: &Path,
    size: usize,
    exclude: Option<&Path>,
    ink: InkBounds,
) -> Result {
    meta.set_out_dir(out);
    meta.set_config(&json!({ "fonts_dir": fonts_dir, "out": out, "size": size, "exclude": exclude, "ink": ink }));
    meta.add_input(fonts_dir);
    if let Some(path) = exclude {
        meta.add_input(path);
    }
    let exclude = exclude.map(read_exclusions).transpose()?.unwrap_or_default();
    let summary = raster::build_dataset(fonts_dir, out, &BuildOptions { size, exclude, ink })?;
    println!(
        "kept {} fonts, rejected {} (see {})",
        summary.kept.len(),
        summary.rejected.len(),
        out.join(raster::REJECTED_FILE).display()
    );
    Ok(())
}

fn split(
    meta: &mut RunMeta,
    dataset: &Path,
    out: &Path,
    sizes: (usize, usize, usize),
    limits: [Option<usize>; 3],
    seed: u64,
) -> Result {
    meta.set_out_dir(out);
    meta.set_config(&json!({
        "dataset": dataset, "out": out,
        "train": sizes.0, "val": sizes.1, "test": sizes.2,
        "max_train_pairs": limits[0], "max_val_pairs": limits[1], "max_test_pairs": limits[2],
    }));
    meta.add_input(dataset);
    let ds = Dataset::open(dataset)?;
    let mut manifest = pairgen::split_fonts(&ds.font_ids(), sizes, seed)?;
    manifest.dataset = Some(ds.root.clone());
    create_dir(out)?;
    manifest.write(&out.join(SPLIT_FILE))?;
    let parts = [("train", &manifest.train_fonts), ("val", &manifest.val_fonts), ("test", &manifest.test_fonts)];
    for (i, ((name, fonts), limit)) in parts.into_iter().zip(limits).enumerate() {
        if fonts.is_empty() {
            continue;
        }
        let pairs = pairgen::balanced_pairs(&ds, fonts, derive_seed(seed, 10 + i as u64), limit)?;
        pairgen::write_pairs(&out.join(pairs_file(name)), &pairs)?;
        println!("{name}: {} fonts, {} pairs", fonts.len(), pairs.len());
    }
    Ok(())
}

fn folds(meta: &mut RunMeta, dataset: &Path, k: usize, out: &Path, seed: u64) -> Result {
    meta.set_out_dir(out);
    meta.set_config(&json!({ "dataset": dataset, "k": k, "out": out }));
    meta.add_input(dataset);
    let ds = Dataset::open(dataset)?;
    let mut manifest = pairgen::make_folds(&ds.font_ids(), k, seed)?;
    manifest.dataset = Some(ds.root.clone());
    create_dir(out)?;
    manifest.write(&out.join(FOLDS_FILE))?;
    let sizes: Vec<usize> = manifest.folds.iter().flatten().map(Vec::len).collect();
    println!("{k} folds of {sizes:?} fonts");
    Ok(())
}

fn count_pairs(fonts: u64, chars: u64) -> Result {
    let (total, per_font) = pairgen::count_pairs(fonts, chars)?;
    println!("{} positives ({} per font) for {} fonts of {chars} characters", thousands(total), thousands(per_font), thousands(fonts));
    println!("{} negatives drawn to balance them", thousands(total));
    Ok(())
}

/// Training-font ids and file digests recorded in checkpoint provenance.
fn font_digests(ds: &Dataset, fonts: &BTreeSet<String>) -> Result<Vec<String>> {
    fonts
        .iter()
        .map(|id| {
            ds.entry(id)
                .map(|e| e.sha256.clone())
                .ok_or_else(|| CliError::InvalidArgument(format!("font {id} is not in dataset {}", ds.root.display())))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn train(
    meta: &mut RunMeta,
    pairs_dir: &Path,
    split: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
    overrides: &TrainOverrides,
    seed: Option<u64>,
    deterministic: bool,
) -> Result {
    meta.set_out_dir(out);
    let mut file = FileConfig::load(config)?;
    overrides.apply(&mut file.train, seed);
    meta.seed = file.train.seed;
    meta.set_config(&json!({ "pairs": pairs_dir, "split": split, "out": out, "model": file.model, "train": file.train }));
    let train_path = pairs_dir.join(pairs_file("train"));
    let val_path = pairs_dir.join(pairs_file("val"));
    for path in [&train_path, &val_path].into_iter().map(PathBuf::as_path).chain(split).chain(config) {
        meta.add_input(path);
    }
    let train_pairs = pairgen::read_pairs(&train_path)?;
    let val_pairs = pairgen::read_pairs(&val_path)?;
    let train_fonts = pairgen::fonts_in(&train_pairs);

    let mut digests = Vec::new();
    let mut split_seed = None;
    if let Some(path) = split {
        let manifest = SplitManifest::read(path)?;
        let test: BTreeSet<String> = manifest.test_fonts.iter().cloned().collect();
        pairgen::check_disjoint("train", &train_fonts, "test", &test)?;
        pairgen::check_disjoint("val", &pairgen::fonts_in(&val_pairs), "test", &test)?;
        split_seed = Some(manifest.seed);
        match &manifest.dataset {
            Some(root) => digests = font_digests(&Dataset::open(root)?, &train_fonts)?,
            None => log::warn!("split manifest records no dataset; training font digests omitted"),
        }
    }

    let (mut ckpt, log) = trainer::train(&file.model, &train_pairs, &val_pairs, &file.train)?;
    ckpt.provenance.train_font_sha256 = digests;
    ckpt.provenance.split_seed = split_seed;
    create_dir(out)?;
    ckpt.save(&out.join(CHECKPOINT_FILE))?;
    log.write_csv(&out.join(TRAIN_LOG_FILE), deterministic)?;
    println!(
        "trained {} epochs; best validation accuracy {:.4} at epoch {}",
        log.epochs.len(),
        log.best_val_acc,
        log.best_epoch
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cv(
    meta: &mut RunMeta,
    dataset: Option<&Path>,
    folds_path: Option<&Path>,
    k: Option<usize>,
    config: Option<&Path>,
    out: &Path,
    limits: [Option<usize>; 3],
    overrides: &TrainOverrides,
    seed: Option<u64>,
    deterministic: bool,
) -> Result {
    meta.set_out_dir(out);
    let mut file = FileConfig::load(config)?;
    overrides.apply(&mut file.train, seed);
    let opts = CvOptions {
        max_train_pairs: limits[0].or(file.cv.max_train_pairs),
        max_val_pairs: limits[1].or(file.cv.max_val_pairs),
        max_test_pairs: limits[2].or(file.cv.max_test_pairs),
        ..file.cv.clone()
    };
    meta.seed = file.train.seed;
    meta.set_config(&json!({
        "dataset": dataset, "folds": folds_path, "k": k, "out": out,
        "model": file.model, "train": file.train, "cv": opts,
    }));
    for path in [dataset, folds_path, config].into_iter().flatten() {
        meta.add_input(path);
    }

    let manifest = match folds_path {
        Some(path) => {
            let m = SplitManifest::read(path)?;
            let n = m.folds.as_ref().map_or(0, Vec::len);
            if k.is_some_and(|k| k != n) {
                return Err(CliError::InvalidArgument(format!("--k {} disagrees with the {n} folds in {}", k.unwrap_or(0), path.display())));
            }
            m
        }
        None => {
            let root = dataset.ok_or_else(|| CliError::InvalidArgument("cv needs --dataset or --folds".into()))?;
            let ds = Dataset::open(root)?;
            let mut m = pairgen::make_folds(&ds.font_ids(), k.unwrap_or(6), file.train.seed)?;
            m.dataset = Some(ds.root.clone());
            m
        }
    };
    let root = dataset
        .map(Path::to_path_buf)
        .or_else(|| manifest.dataset.clone())
        .ok_or_else(|| CliError::InvalidArgument("folds manifest records no dataset; pass --dataset".into()))?;
    let ds = Dataset::open(&root)?;
    create_dir(out)?;
    manifest.write(&out.join(FOLDS_FILE))?;

    let result = trainer::run_cv(&ds, &manifest, &file.model, &file.train, &opts)?;
    let mut accuracies = Vec::new();
    for fold in &result.folds {
        let dir = out.join(format!("fold_{}", fold.round));
        create_dir(&dir)?;
        let mut ckpt = fold.checkpoint.clone();
        ckpt.provenance.train_font_sha256 = font_digests(&ds, &ckpt.provenance.train_font_ids.iter().cloned().collect())?;
        ckpt.provenance.split_seed = Some(manifest.seed);
        ckpt.save(&dir.join(CHECKPOINT_FILE))?;
        fold.log.write_csv(&dir.join(TRAIN_LOG_FILE), deterministic)?;
        evaluator::write_report(&dir, &fold.report)?;
        accuracies.push(fold.report.accuracy);
        println!("fold {}: test accuracy {:.4}", fold.round, fold.report.accuracy);
    }
    write_json(
        &out.join(CV_SUMMARY_FILE),
        &json!({
            "k": result.folds.len(),
            "accuracies": accuracies,
            "mean_accuracy": result.mean_accuracy,
            "std_accuracy": result.std_accuracy,
        }),
    )?;
    println!("accuracy {:.4} ± {:.4} over {} folds", result.mean_accuracy, result.std_accuracy, result.folds.len());
    Ok(())
}

fn eval(meta: &mut RunMeta, ckpt_path: &Path, pairs_path: &Path, out: &Path) -> Result {
    meta.set_out_dir(out);
    meta.set_config(&json!({ "ckpt": ckpt_path, "pairs": pairs_path, "out": out }));
    meta.add_input(ckpt_path);
    meta.add_input(pairs_path);
    let ckpt = ModelCheckpoint::load(ckpt_path)?;
    let pairs = pairgen::read_pairs(pairs_path)?;
    let report = evaluator::evaluate(&ckpt, &pairs)?;
    evaluator::write_report(out, &report)?;
    println!("accuracy {:.4} on {} pairs", report.accuracy, report.n_pairs);
    Ok(())
}

fn cross_eval(meta: &mut RunMeta, ckpt_path: &Path, fonts_dir: &Path, out: &Path, seed: u64) -> Result {
    meta.set_out_dir(out);
    meta.set_config(&json!({ "ckpt": ckpt_path, "fonts_dir": fonts_dir, "out": out }));
    meta.add_input(ckpt_path);
    meta.add_input(fonts_dir);
    let ckpt = ModelCheckpoint::load(ckpt_path)?;
    let dataset_dir = if fonts_dir.join(raster::FONTS_FILE).is_file() {
        fonts_dir.to_path_buf()
    } else {
        let dir = out.join("dataset");
        let opts = BuildOptions { size: ckpt.config.input_size, ..BuildOptions::default() };
        let summary = raster::build_dataset(fonts_dir, &dir, &opts)?;
        println!("built external dataset: kept {} fonts, rejected {}", summary.kept.len(), summary.rejected.len());
        dir
    };
    let outcome = evaluator::cross_evaluate(&ckpt, &dataset_dir, seed)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    evaluator::write_report(out, &outcome.report)?;
    write_json(
        &out.join(CROSS_EVAL_FILE),
        &json!({
            "dataset": dataset_dir,
            "n_positive": outcome.n_positive,
            "n_negative": outcome.n_negative,
            "accuracy": outcome.report.accuracy,
            "warnings": outcome.warnings,
        }),
    )?;
    println!(
        "cross-dataset accuracy {:.4} on {} positive + {} negative pairs",
        outcome.report.accuracy, outcome.n_positive, outcome.n_negative
    );
    Ok(())
}

fn pca(
    meta: &mut RunMeta,
    ckpt_path: &Path,
    split_path: &Path,
    chars: (char, char),
    out: &Path,
    font_set: FontSet,
    dataset: Option<&Path>,
) -> Result {
    meta.set_out_dir(out);
    meta.set_config(&json!({
        "ckpt": ckpt_path, "split": split_path, "chars": [chars.0, chars.1],
        "fonts": font_set, "dataset": dataset, "out": out,
    }));
    meta.add_input(ckpt_path);
    meta.add_input(split_path);
    let ckpt = ModelCheckpoint::load(ckpt_path)?;
    let manifest = SplitManifest::read(split_path)?;
    let root = dataset
        .map(Path::to_path_buf)
        .or_else(|| manifest.dataset.clone())
        .ok_or_else(|| CliError::InvalidArgument("split manifest records no dataset; pass --dataset".into()))?;
    let ds = Dataset::open(&root)?;
    let fonts: Vec<String> = match font_set {
        FontSet::Train => manifest.train_fonts.clone(),
        FontSet::Val => manifest.val_fonts.clone(),
        FontSet::Test => manifest.test_fonts.clone(),
        FontSet::All => {
            let mut all: Vec<String> = manifest.train_fonts.iter().chain(&manifest.val_fonts).chain(&manifest.test_fonts).cloned().collect();
            all.extend(manifest.folds.iter().flatten().flatten().cloned());
            all.sort();
            all.dedup();
            all
        }
    };
    let proj = explain::pca_project(&ckpt, &ds, &fonts, chars.0, chars.1)?;
    create_dir(out)?;
    let png = out.join(format!("pca_{}_{}.png", chars.0, chars.1));
    explain::render_scatter(&proj, &png, &out.join(PCA_POINTS_FILE))?;
    write_json(
        &out.join(PCA_FILE),
        &json!({
            "char_a": proj.char_a,
            "char_b": proj.char_b,
            "n_fonts": proj.fonts.len(),
            "explained_variance": proj.explained_variance,
            "overlap_score": proj.overlap_score,
            "scatter": png.file_name().map(|n| n.to_string_lossy().into_owned()),
        }),
    )?;
    println!("{} vs {}: overlap score {:.3} over {} fonts", chars.0, chars.1, proj.overlap_score, proj.fonts.len());
    Ok(())
}

fn gradcam(
    meta: &mut RunMeta,
    ckpt_path: &Path,
    manifest_path: &Path,
    index: usize,
    target: TargetArg,
    upsample: UpsampleArg,
    out: &Path,
) -> Result {
    meta.set_out_dir(out);
    meta.set_config(&json!({
        "ckpt": ckpt_path, "pair_manifest": manifest_path, "index": index,
        "target": format!("{target:?}").to_lowercase(), "upsample": format!("{upsample:?}").to_lowercase(), "out": out,
    }));
    meta.add_input(ckpt_path);
    meta.add_input(manifest_path);
    let ckpt = ModelCheckpoint::load(ckpt_path)?;
    let pairs = pairgen::read_pairs(manifest_path)?;
    let pair: &PairRecord = pairs.get(index).ok_or_else(|| {
        CliError::InvalidArgument(format!("index {index} out of range for {} pairs in {}", pairs.len(), manifest_path.display()))
    })?;
    let img_a = GlyphImage::read_png(&pair.image_a_path, pair.char_a, &pair.font_a)?;
    let img_b = GlyphImage::read_png(&pair.image_b_path, pair.char_b, &pair.font_b)?;
    let net = ckpt.network()?;
    let target = match target {
        TargetArg::Auto => None,
        TargetArg::Same => Some(SAME),
        TargetArg::Different => Some(DIFFERENT),
    };
    let mode = match upsample {
        UpsampleArg::Bilinear => Upsampling::Bilinear,
        UpsampleArg::Nearest => Upsampling::Nearest,
    };
    let cam = explain::grad_cam(
        &net,
        &image_to_input::<f32>(&img_a.pixels),
        &image_to_input::<f32>(&img_b.pixels),
        target,
        mode,
    )?;
    create_dir(out)?;
    let mut images = Vec::new();
    for (map, img, tag) in [(&cam.maps[0], &img_a, "a"), (&cam.maps[1], &img_b, "b")] {
        let name = format!("gradcam_{index}_{tag}.png");
        explain::render_heatmap(map, img, &out.join(&name))?;
        images.push(name);
    }
    write_json(
        &out.join(GRADCAM_FILE),
        &json!({
            "index": index,
            "pair": pair,
            "p_same": cam.p_same,
            "predicted": explain::class_name(cam.predicted),
            "target": explain::class_name(cam.target_class),
            "images": images,
            "maps": cam.maps.iter().map(|m| json!({
                "slot": m.slot,
                "alphas": m.alphas,
                "raw_height": m.raw_height,
                "raw_width": m.raw_width,
                "raw": m.raw,
            })).collect::<Vec<_>>(),
        }),
    )?;
    println!(
        "pair {index} ({}{} / {}{}): p_same {:.4}, predicted {}, maps for {}",
        pair.char_a,
        pair.font_a,
        pair.char_b,
        pair.font_b,
        cam.p_same,
        explain::class_name(cam.predicted),
        explain::class_name(cam.target_class)
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    n_pairs: usize,
    accuracy: f64,
    confusion: BTreeMap<&'static str, BTreeMap<&'static str, u64>>,
    worst_pairs: Vec<RankedPair>,
    best_pairs: Vec<RankedPair>,
    worst_fonts: Vec<(String, u64)>,
    figures: Vec<String>,
    #[serde(skip)]
    report: &'a EvalReport,
}

fn report(meta: &mut RunMeta, run_dir: &Path, top: usize) -> Result {
    if !run_dir.join(evaluator::REPORT_FILE).is_file() {
        return Err(CliError::MissingReport(run_dir.to_path_buf()));
    }
    meta.set_out_dir(run_dir);
    meta.set_config(&json!({ "run_dir": run_dir, "top": top }));
    meta.add_input(&run_dir.join(evaluator::REPORT_FILE));
    let report = evaluator::read_report(run_dir)?;
    let (worst, best) = evaluator::rank_charpairs(&report, top);
    let mut figures: Vec<String> = fs::read_dir(run_dir)
        .map_err(|e| CliError::InvalidArgument(format!("cannot list {}: {e}", run_dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".png"))
        .collect();
    figures.sort();
    let c = &report.confusion;
    let row = |t: u8| BTreeMap::from([("same", c.get(t, SAME)), ("different", c.get(t, DIFFERENT))]);
    let summary = Summary {
        n_pairs: report.n_pairs,
        accuracy: report.accuracy,
        confusion: BTreeMap::from([("same", row(SAME)), ("different", row(DIFFERENT))]),
        worst_pairs: worst,
        best_pairs: best,
        worst_fonts: evaluator::worst_fonts(&report, top),
        figures,
        report: &report,
    };
    write_json(&run_dir.join(SUMMARY_JSON_FILE), &summary)?;
    let text = summary_text(&summary);
    fs::write(run_dir.join(SUMMARY_TEXT_FILE), &text)
        .map_err(|e| CliError::InvalidArgument(format!("cannot write summary: {e}")))?;
    print!("{text}");
    Ok(())
}

fn summary_text(s: &Summary<'_>) -> String {
    let c = &s.report.confusion;
    let mut t = String::new();
    writeln!(t, "pairs evaluated: {}", thousands(s.n_pairs as u64)).unwrap();
    writeln!(t, "accuracy: {:.4} ({})", s.accuracy, s.accuracy).unwrap();
    writeln!(t, "\nconfusion (rows: truth, columns: predicted)").unwrap();
    writeln!(t, "{:>10} {:>12} {:>12}", "", "same", "different").unwrap();
    for (name, truth) in [("same", SAME), ("different", DIFFERENT)] {
        writeln!(t, "{name:>10} {:>12} {:>12}", c.get(truth, SAME), c.get(truth, DIFFERENT)).unwrap();
    }
    let list = |t: &mut String, title: &str, pairs: &[RankedPair]| {
        writeln!(t, "\n{title}").unwrap();
        for (i, p) in pairs.iter().enumerate() {
            writeln!(t, "{:>3}. {}-{}  {:.4}  ({} errors / {})", i + 1, p.char_a, p.char_b, p.accuracy, p.errors, p.total)
                .unwrap();
        }
    };
    list(&mut t, &format!("hardest {} character pairs", s.worst_pairs.len()), &s.worst_pairs);
    list(&mut t, &format!("easiest {} character pairs", s.best_pairs.len()), &s.best_pairs);
    writeln!(t, "\nfonts with most errors on same-font pairs").unwrap();
    for (font, errors) in &s.worst_fonts {
        writeln!(t, "  {font}: {errors}").unwrap();
    }
    if !s.figures.is_empty() {
        writeln!(t, "\nfigures").unwrap();
        for f in &s.figures {
            writeln!(t, "  {f}").unwrap();
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands_groups_digits() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(325), "325");
        assert_eq!(thousands(204_100), "204,100");
        assert_eq!(thousands(3_250_000), "3,250,000");
    }

    #[test]
    fn defaults_parse_back() {
        let text = defaults_toml();
        let parsed: FileConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed, FileConfig::default());
    }
}
