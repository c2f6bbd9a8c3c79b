//! Mini-batch Adam training with validation-accuracy model selection and
//! early stopping, plus the k-fold cross-validation driver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::evaluator::{self, EvalReport};
use crate::netmodel::{image_to_input, ModelCheckpoint, ModelConfig, Network, PairInput, Params, Provenance};
use crate::pairgen::{balanced_pairs, check_disjoint, fonts_in, PairRecord, SplitManifest, DIFFERENT};
use crate::raster::{Dataset, GlyphStore};

// Seed streams derived from `TrainConfig::seed`.
const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_DROPOUT: u64 = 2;
const STREAM_NEGATIVES: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    /// Epochs without validation-accuracy improvement before stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
    /// Redraw the training negatives every epoch instead of using the fixed
    /// manifest negatives.
    pub resample_negatives: bool,
    /// Measure training accuracy with a separate evaluation-mode pass
    /// (no dropout) instead of the running training-mode estimate.
    pub eval_train_accuracy: bool,
    /// Stop as soon as training accuracy reaches this value.
    pub target_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 50,
            early_stop_patience: 5,
            seed: 0,
            resample_negatives: false,
            eval_train_accuracy: false,
            target_train_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.early_stop_patience == 0 {
            return bad("early_stop_patience must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must be in [0, 1)");
        }
        if self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Seconds since the start of training.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

impl TrainLog {
    /// One row per epoch. `wall_time` is omitted with `deterministic` so
    /// that logs of identical runs compare equal byte for byte.
    pub fn to_csv(&self, deterministic: bool) -> String {
        let mut s = String::from("epoch,train_loss,train_acc,val_loss,val_acc,wall_time\n");
        for e in &self.epochs {
            let wall = if deterministic { String::new() } else { format!("{:.3}", e.wall_time) };
            writeln!(s, "{},{},{},{},{},{}", e.epoch, e.train_loss, e.train_acc, e.val_loss, e.val_acc, wall).unwrap();
        }
        s
    }

    pub fn write_csv(&self, path: &Path, deterministic: bool) -> Result<()> {
        std::fs::write(path, self.to_csv(deterministic)).map_err(|e| Error::io(path, e))
    }

    /// Equality on everything except wall-clock times.
    pub fn same_trajectory(&self, other: &TrainLog) -> bool {
        self.to_csv(true) == other.to_csv(true) && self.best_epoch == other.best_epoch
    }
}

struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    step: i32,
}

impl Adam {
    fn new(params: &Params<f32>) -> Self {
        let zeros: Vec<Vec<f32>> = params.tensors().iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Adam { m: zeros.clone(), v: zeros, step: 0 }
    }

    fn update(&mut self, params: &mut Params<f32>, grads: &Params<f32>, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let (lr, eps) = (cfg.learning_rate as f32, cfg.epsilon as f32);
        let grads = grads.tensors();
        for (((theta, (_, _, g)), m), v) in params.tensors_mut().into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..theta.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                theta[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

/// Mean loss and argmax accuracy of `pairs` in evaluation mode.
pub fn evaluate_loss_acc(net: &Network<f32>, glyphs: &GlyphStore, pairs: &[PairRecord]) -> Result<(f64, f64)> {
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in pairs.chunks(256) {
        let images = batch_images(glyphs, chunk)?;
        let out = net.forward_batch(&pair_inputs(&images, chunk), false, 0)?;
        for (p, pair) in out.iter().zip(chunk) {
            loss_sum += f64::from(crate::netmodel::loss(*p, pair.label));
            correct += usize::from(evaluator::predicted_label(f64::from(p[1])) == pair.label);
        }
    }
    let n = pairs.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

fn batch_images(glyphs: &GlyphStore, pairs: &[PairRecord]) -> Result<Vec<Vec<f32>>> {
    let mut images = Vec::with_capacity(pairs.len() * 2);
    for p in pairs {
        images.push(image_to_input(glyphs.get(&p.image_a_path)?));
        images.push(image_to_input(glyphs.get(&p.image_b_path)?));
    }
    Ok(images)
}

fn pair_inputs<'a>(images: &'a [Vec<f32>], pairs: &[PairRecord]) -> Vec<PairInput<'a, f32>> {
    images.chunks(2).zip(pairs).map(|(ab, p)| PairInput { a: &ab[0], b: &ab[1], label: p.label }).collect()
}

/// Redraws negatives among the training fonts, keeping the count. Glyph
/// paths come from the pairs themselves, so only (font, letter) images that
/// already occur in the manifest are used.
fn resample_negatives(pairs: &[PairRecord], seed: u64) -> Vec<PairRecord> {
    let mut glyphs: BTreeMap<&str, BTreeMap<char, &Path>> = BTreeMap::new();
    for p in pairs {
        glyphs.entry(&p.font_a).or_default().insert(p.char_a, &p.image_a_path);
        glyphs.entry(&p.font_b).or_default().insert(p.char_b, &p.image_b_path);
    }
    let fonts: Vec<(&str, Vec<(char, &Path)>)> =
        glyphs.into_iter().map(|(f, m)| (f, m.into_iter().collect())).collect();
    let n_neg = pairs.iter().filter(|p| !p.is_positive()).count();
    let mut out: Vec<PairRecord> = pairs.iter().filter(|p| p.is_positive()).cloned().collect();
    if fonts.len() < 2 {
        out.extend(pairs.iter().filter(|p| !p.is_positive()).cloned());
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0usize;
    while out.len() < pairs.len() {
        attempts += 1;
        if attempts > 1000 + 100 * n_neg {
            // Degenerate manifest (e.g. one letter per font): keep the originals.
            out.truncate(pairs.len() - n_neg);
            out.extend(pairs.iter().filter(|p| !p.is_positive()).cloned());
            return out;
        }
        let i = rng.random_range(0..fonts.len());
        let mut j = rng.random_range(0..fonts.len() - 1);
        if j >= i {
            j += 1;
        }
        let (ca, pa) = fonts[i].1[rng.random_range(0..fonts[i].1.len())];
        let (cb, pb) = fonts[j].1[rng.random_range(0..fonts[j].1.len())];
        if ca == cb {
            continue;
        }
        out.push(PairRecord {
            char_a: ca,
            char_b: cb,
            font_a: fonts[i].0.to_string(),
            font_b: fonts[j].0.to_string(),
            image_a_path: pa.to_path_buf(),
            image_b_path: pb.to_path_buf(),
            label: DIFFERENT,
        });
    }
    out
}

/// Trains a fresh network. The returned checkpoint holds the parameters of
/// the epoch with the best validation accuracy (earliest on ties).
pub fn train(
    model: &ModelConfig,
    train_pairs: &[PairRecord],
    val_pairs: &[PairRecord],
    cfg: &TrainConfig,
) -> Result<(ModelCheckpoint, TrainLog)> {
    cfg.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::EmptyDataset("no training pairs".into()));
    }
    if val_pairs.is_empty() {
        return Err(Error::EmptyDataset("no validation pairs".into()));
    }
    let train_fonts = fonts_in(train_pairs);
    let val_fonts = fonts_in(val_pairs);
    check_disjoint("train", &train_fonts, "val", &val_fonts)?;

    let mut net = Network::<f32>::init(model.clone(), derive_seed(cfg.seed, STREAM_INIT))?;
    let glyphs = evaluator::load_pair_glyphs(train_pairs)?;
    let val_glyphs = evaluator::load_pair_glyphs(val_pairs)?;
    for g in [&glyphs, &val_glyphs] {
        if g.size() != model.input_size {
            return Err(Error::ShapeMismatch(format!(
                "glyphs are {0}x{0}, model expects {1}x{1}",
                g.size(),
                model.input_size
            )));
        }
    }

    let mut adam = Adam::new(&net.params);
    let mut log = TrainLog::default();
    let mut best_params = net.params.clone();
    let mut stale = 0;
    let start = Instant::now();

    for epoch in 1..=cfg.max_epochs {
        let epoch_seed = derive_seed(cfg.seed, epoch as u64);
        let resampled;
        let pairs: &[PairRecord] = if cfg.resample_negatives {
            resampled = resample_negatives(train_pairs, derive_seed(epoch_seed, STREAM_NEGATIVES));
            &resampled
        } else {
            train_pairs
        };
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(epoch_seed, STREAM_SHUFFLE)));

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<PairRecord> = idx.iter().map(|&i| pairs[i].clone()).collect();
            let images = batch_images(&glyphs, &batch)?;
            let inputs = pair_inputs(&images, &batch);
            let dropout_seed = derive_seed(derive_seed(epoch_seed, STREAM_DROPOUT), b as u64);
            let out = net.batch_gradients(&inputs, true, dropout_seed)?;
            if !out.mean_loss.is_finite() {
                return Err(Error::InvalidConfig(format!("non-finite training loss at epoch {epoch}, batch {b}")));
            }
            loss_sum += f64::from(out.mean_loss) * batch.len() as f64;
            correct += out
                .probs
                .iter()
                .zip(&batch)
                .filter(|(p, pair)| evaluator::predicted_label(f64::from(p[1])) == pair.label)
                .count();
            adam.update(&mut net.params, &out.grads, cfg);
        }
        let mut train_loss = loss_sum / pairs.len() as f64;
        let mut train_acc = correct as f64 / pairs.len() as f64;
        if cfg.eval_train_accuracy {
            (train_loss, train_acc) = evaluate_loss_acc(&net, &glyphs, pairs)?;
        }
        let (val_loss, val_acc) = evaluate_loss_acc(&net, &val_glyphs, val_pairs)?;
        let record =
            EpochRecord { epoch, train_loss, train_acc, val_loss, val_acc, wall_time: start.elapsed().as_secs_f64() };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.4} acc {train_acc:.4}, val loss {val_loss:.4} acc {val_acc:.4} ({:.0}s)",
            record.wall_time
        );
        log.epochs.push(record);
        if log.best_epoch == 0 || val_acc > log.best_val_acc {
            log.best_epoch = epoch;
            log.best_val_acc = val_acc;
            best_params = net.params.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        if cfg.target_train_accuracy.is_some_and(|t| train_acc >= t) {
            break;
        }
        if stale >= cfg.early_stop_patience {
            log::info!("early stop after {epoch} epochs (best epoch {})", log.best_epoch);
            break;
        }
    }

    let provenance = Provenance {
        train_font_ids: train_fonts.into_iter().collect(),
        val_font_ids: val_fonts.into_iter().collect(),
        ..Provenance::default()
    };
    net.params = best_params;
    let ckpt = ModelCheckpoint::from_network(&net, log.best_epoch, cfg.seed, provenance);
    Ok((ckpt, log))
}

/// Pair-count limits for cross-validation rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvOptions {
    /// Train:validation font ratio inside the non-test folds.
    pub train_val_ratio: (usize, usize),
    pub max_train_pairs: Option<usize>,
    pub max_val_pairs: Option<usize>,
    pub max_test_pairs: Option<usize>,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions { train_val_ratio: (5, 1), max_train_pairs: None, max_val_pairs: None, max_test_pairs: None }
    }
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub round: usize,
    pub checkpoint: ModelCheckpoint,
    pub log: TrainLog,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    /// Sample standard deviation (n - 1); 0 for a single fold.
    pub std_accuracy: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One training per fold, each tested on its held-out fold.
pub fn run_cv(
    ds: &Dataset,
    folds: &SplitManifest,
    model: &ModelConfig,
    cfg: &TrainConfig,
    opts: &CvOptions,
) -> Result<CvResult> {
    let k = folds
        .folds
        .as_ref()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidArgument("split manifest has no folds".into()))?;
    let mut results = Vec::with_capacity(k);
    for round in 0..k {
        let (train_fonts, val_fonts, test_fonts) = folds.fold_round(round, opts.train_val_ratio)?;
        let seed = derive_seed(cfg.seed, 100 + round as u64);
        let train_pairs = balanced_pairs(ds, &train_fonts, derive_seed(seed, 0), opts.max_train_pairs)?;
        let val_pairs = balanced_pairs(ds, &val_fonts, derive_seed(seed, 1), opts.max_val_pairs)?;
        let test_pairs = balanced_pairs(ds, &test_fonts, derive_seed(seed, 2), opts.max_test_pairs)?;
        check_disjoint("train", &fonts_in(&train_pairs), "test", &fonts_in(&test_pairs))?;
        log::info!(
            "fold {}/{k}: {} train / {} val / {} test pairs",
            round + 1,
            train_pairs.len(),
            val_pairs.len(),
            test_pairs.len()
        );
        let (checkpoint, log) = train(model, &train_pairs, &val_pairs, cfg)?;
        let report = evaluator::evaluate(&checkpoint, &test_pairs)?;
        results.push(FoldResult { round, checkpoint, log, report });
    }
    let accs: Vec<f64> = results.iter().map(|r| r.report.accuracy).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&accs);
    Ok(CvResult { folds: results, mean_accuracy, std_accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        let c = TrainConfig { early_stop_patience: 0, ..TrainConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn mean_std_arithmetic() {
        assert_eq!(mean_std(&[0.8, 0.8]), (0.8, 0.0));
        let (m, s) = mean_std(&[0.9, 0.7]);
        assert!((m - 0.8).abs() < 1e-12);
        assert!((s - 0.141_421_356_237_309_5).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let cfg = TrainConfig::default();
        let net = Network::<f32>::init(ModelConfig::reduced(), 0).unwrap();
        let mut params = net.params.clone();
        let mut grads = params.clone();
        for t in grads.tensors_mut() {
            t.fill(0.5);
        }
        let mut adam = Adam::new(&params);
        adam.update(&mut params, &grads, &cfg);
        let before = net.params.tensors();
        for ((_, _, a), (_, _, b)) in params.tensors().iter().zip(&before) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!(((y - x) - 1e-4).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn resampled_negatives_keep_counts_and_labels() {
        let mk = |f: &str, a: char, b: char, label| PairRecord {
            char_a: a,
            char_b: b,
            font_a: f.into(),
            font_b: f.into(),
            image_a_path: format!("{f}/{a}").into(),
            image_b_path: format!("{f}/{b}").into(),
            label,
        };
        let mut pairs = vec![mk("f", 'A', 'B', 1), mk("g", 'A', 'C', 1)];
        let mut neg = mk("f", 'A', 'C', 0);
        neg.font_b = "g".into();
        neg.image_b_path = "g/C".into();
        pairs.push(neg.clone());
        pairs.push(neg);
        let out = resample_negatives(&pairs, 9);
        assert_eq!(out.len(), 4);
        assert_eq!(out.iter().filter(|p| p.is_positive()).count(), 2);
        for p in out.iter().filter(|p| !p.is_positive()) {
            assert_ne!(p.font_a, p.font_b);
            assert_ne!(p.char_a, p.char_b);
            assert_eq!(p.image_a_path, Path::new(&format!("{}/{}", p.font_a, p.char_a)));
        }
        assert_eq!(out, resample_negatives(&pairs, 9));
    }
}
