//! Accuracy, confusion and per-character-pair reports.
//!
//! Predictions use argmax with ties going to "different". Character-pair
//! matrices count both positive and negative pairs; per-label breakdowns are
//! kept alongside. Per-font error counts only consider positive pairs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{image_to_input, ModelCheckpoint, Network, PairInput};
use crate::pairgen::{gen_negative, gen_positive, PairRecord, DIFFERENT, SAME};
use crate::raster::{Dataset, GlyphStore};
use crate::{letter_index, LETTERS};

pub const REPORT_FILE: &str = "report.json";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const CHARPAIR_FILE: &str = "charpair_matrix.csv";
pub const RANKED_FILE: &str = "ranked_pairs.csv";

/// Pairs per forward batch during prediction.
const PREDICT_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub p_same: f64,
    pub label: u8,
}

impl Prediction {
    pub fn from_p_same(p_same: f64) -> Self {
        Prediction { p_same, label: predicted_label(p_same) }
    }
}

/// Argmax over (different, same); an exact tie is "different".
pub fn predicted_label(p_same: f64) -> u8 {
    if p_same > 0.5 {
        SAME
    } else {
        DIFFERENT
    }
}

/// 2x2 counts; rows are ground truth, columns the prediction, both in
/// `[same, different]` order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Confusion(pub [[u64; 2]; 2]);

impl Confusion {
    fn index(label: u8) -> usize {
        if label == SAME {
            0
        } else {
            1
        }
    }

    pub fn record(&mut self, truth: u8, predicted: u8) {
        self.0[Self::index(truth)][Self::index(predicted)] += 1;
    }

    pub fn get(&self, truth: u8, predicted: u8) -> u64 {
        self.0[Self::index(truth)][Self::index(predicted)]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        self.0[0][0] + self.0[1][1]
    }

    /// Ground-truth row sums, `[same, different]`.
    pub fn row_sums(&self) -> [u64; 2] {
        [self.0[0][0] + self.0[0][1], self.0[1][0] + self.0[1][1]]
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.correct() as f64 / total as f64
        }
    }
}

pub type Matrix26 = Vec<Vec<u64>>;

fn zero_matrix() -> Matrix26 {
    vec![vec![0; 26]; 26]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub char_a: char,
    pub char_b: char,
    pub errors: u64,
    pub total: u64,
    pub accuracy: f64,
}

/// Character-pair errors and totals restricted to one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMatrices {
    pub errors: Matrix26,
    pub totals: Matrix26,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_pairs: usize,
    pub accuracy: f64,
    pub confusion: Confusion,
    /// Symmetric, zero diagonal; both labels aggregated.
    pub charpair_errors: Matrix26,
    pub charpair_totals: Matrix26,
    pub positive: LabelMatrices,
    pub negative: LabelMatrices,
    /// Pairs that were evaluated at least once, worst accuracy first, ties
    /// in alphabetical order.
    pub ranked_pairs: Vec<RankedPair>,
    /// Errors on each font's positive pairs (fonts with zero errors included).
    pub per_font_errors: BTreeMap<String, u64>,
}

fn pair_indices(p: &PairRecord) -> Result<(usize, usize)> {
    let idx = |c: char| letter_index(c).ok_or_else(|| Error::InvalidArgument(format!("'{c}' is not an uppercase letter")));
    let (a, b) = (idx(p.char_a)?, idx(p.char_b)?);
    if a == b {
        return Err(Error::InvalidArgument(format!("pair compares '{}' with itself", p.char_a)));
    }
    Ok((a, b))
}

/// Builds the full report from labeled pairs and their predictions.
pub fn build_report(pairs: &[PairRecord], predictions: &[Prediction]) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("no pairs to evaluate".into()));
    }
    if pairs.len() != predictions.len() {
        return Err(Error::InvalidArgument(format!(
            "{} pairs but {} predictions",
            pairs.len(),
            predictions.len()
        )));
    }
    let mut confusion = Confusion::default();
    let mut errors = zero_matrix();
    let mut totals = zero_matrix();
    let mut positive = LabelMatrices { errors: zero_matrix(), totals: zero_matrix() };
    let mut negative = LabelMatrices { errors: zero_matrix(), totals: zero_matrix() };
    let mut per_font_errors = BTreeMap::new();

    for (pair, pred) in pairs.iter().zip(predictions) {
        if pair.label > 1 {
            return Err(Error::InvalidArgument(format!("label must be 0 or 1, got {}", pair.label)));
        }
        let (a, b) = pair_indices(pair)?;
        let wrong = u64::from(pred.label != pair.label);
        confusion.record(pair.label, pred.label);
        let by_label = if pair.is_positive() { &mut positive } else { &mut negative };
        for (x, y) in [(a, b), (b, a)] {
            errors[x][y] += wrong;
            totals[x][y] += 1;
            by_label.errors[x][y] += wrong;
            by_label.totals[x][y] += 1;
        }
        if pair.is_positive() {
            *per_font_errors.entry(pair.font_a.clone()).or_insert(0) += wrong;
        }
    }

    let mut ranked_pairs = Vec::new();
    for a in 0..26 {
        for b in a + 1..26 {
            if totals[a][b] > 0 {
                ranked_pairs.push(RankedPair {
                    char_a: LETTERS[a],
                    char_b: LETTERS[b],
                    errors: errors[a][b],
                    total: totals[a][b],
                    accuracy: 1.0 - errors[a][b] as f64 / totals[a][b] as f64,
                });
            }
        }
    }
    // The loop above is already alphabetical; a stable sort keeps that for ties.
    ranked_pairs.sort_by(|x, y| x.accuracy.total_cmp(&y.accuracy));

    Ok(EvalReport {
        n_pairs: pairs.len(),
        accuracy: confusion.accuracy(),
        confusion,
        charpair_errors: errors,
        charpair_totals: totals,
        positive,
        negative,
        ranked_pairs,
        per_font_errors,
    })
}

/// The `n` worst and `n` best character pairs. Both lists break accuracy
/// ties alphabetically.
pub fn rank_charpairs(report: &EvalReport, n: usize) -> (Vec<RankedPair>, Vec<RankedPair>) {
    let worst = report.ranked_pairs.iter().take(n).cloned().collect();
    let mut best = report.ranked_pairs.clone();
    best.sort_by(|x, y| y.accuracy.total_cmp(&x.accuracy).then((x.char_a, x.char_b).cmp(&(y.char_a, y.char_b))));
    best.truncate(n);
    (worst, best)
}

/// Fonts by descending positive-pair error count, ties alphabetical.
pub fn worst_fonts(report: &EvalReport, n: usize) -> Vec<(String, u64)> {
    let mut fonts: Vec<(String, u64)> = report.per_font_errors.iter().map(|(k, &v)| (k.clone(), v)).collect();
    fonts.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    fonts.truncate(n);
    fonts
}

/// Loads every glyph referenced by `pairs`.
pub fn load_pair_glyphs(pairs: &[PairRecord]) -> Result<GlyphStore> {
    GlyphStore::load(pairs.iter().flat_map(|p| [p.image_a_path.as_path(), p.image_b_path.as_path()]))
}

/// Evaluation-mode predictions; deterministic for a given network.
pub fn predict(net: &Network<f32>, glyphs: &GlyphStore, pairs: &[PairRecord]) -> Result<Vec<Prediction>> {
    let size = net.config().input_size;
    if !glyphs.is_empty() && glyphs.size() != size {
        return Err(Error::ShapeMismatch(format!(
            "glyphs are {0}x{0}, checkpoint expects {1}x{1}",
            glyphs.size(),
            size
        )));
    }
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(PREDICT_BATCH) {
        let images = chunk
            .iter()
            .map(|p| {
                Ok((
                    image_to_input::<f32>(glyphs.get(&p.image_a_path)?),
                    image_to_input::<f32>(glyphs.get(&p.image_b_path)?),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let inputs: Vec<PairInput<f32>> =
            images.iter().zip(chunk).map(|((a, b), p)| PairInput { a, b, label: p.label.min(1) }).collect();
        let probs = net.forward_batch(&inputs, false, 0)?;
        out.extend(probs.iter().map(|p| Prediction::from_p_same(f64::from(p[1]))));
    }
    Ok(out)
}

pub fn predict_checkpoint(ckpt: &ModelCheckpoint, pairs: &[PairRecord]) -> Result<Vec<Prediction>> {
    let net = ckpt.network()?;
    predict(&net, &load_pair_glyphs(pairs)?, pairs)
}

pub fn evaluate(ckpt: &ModelCheckpoint, pairs: &[PairRecord]) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("no pairs to evaluate".into()));
    }
    build_report(pairs, &predict_checkpoint(ckpt, pairs)?)
}

#[derive(Debug, Clone)]
pub struct CrossEvalOutcome {
    pub report: EvalReport,
    pub n_positive: usize,
    pub n_negative: usize,
    /// Non-fatal findings, e.g. unverifiable training provenance.
    pub warnings: Vec<String>,
}

/// Checks the external corpus against the checkpoint's training fonts by
/// file digest. Returns warnings when that cannot be verified.
pub fn check_provenance(ckpt: &ModelCheckpoint, ds: &Dataset) -> Result<Vec<String>> {
    let trained: BTreeSet<&str> = ckpt.provenance.train_font_sha256.iter().map(String::as_str).collect();
    if trained.is_empty() {
        return Ok(vec!["checkpoint records no training font digests; corpus disjointness is unverified".into()]);
    }
    let shared: Vec<String> =
        ds.fonts.iter().filter(|f| trained.contains(f.sha256.as_str())).map(|f| f.font_id.clone()).collect();
    if shared.is_empty() {
        Ok(Vec::new())
    } else {
        Err(Error::LeakageDetected { left: "checkpoint training set".into(), right: "external corpus".into(), fonts: shared })
    }
}

/// Evaluates on every positive pair of an external dataset plus as many
/// seeded negatives.
pub fn cross_evaluate(ckpt: &ModelCheckpoint, dataset_dir: &Path, seed: u64) -> Result<CrossEvalOutcome> {
    let ds = Dataset::open(dataset_dir)?;
    if ds.fonts.is_empty() {
        return Err(Error::EmptyCorpus(dataset_dir.to_path_buf()));
    }
    let warnings = check_provenance(ckpt, &ds)?;
    let fonts = ds.font_ids();
    let mut pairs: Vec<PairRecord> = gen_positive(&ds, &fonts)?.collect();
    let n_positive = pairs.len();
    pairs.extend(gen_negative(&ds, &fonts, n_positive, seed)?);
    let report = evaluate(ckpt, &pairs)?;
    Ok(CrossEvalOutcome { report, n_positive, n_negative: pairs.len() - n_positive, warnings })
}

fn matrix_csv(m: &Matrix26) -> String {
    let mut s = String::from("char");
    for c in LETTERS {
        write!(s, ",{c}").unwrap();
    }
    s.push('\n');
    for (c, row) in LETTERS.iter().zip(m) {
        s.push(*c);
        for v in row {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

/// Writes `report.json`, `confusion.csv`, `charpair_matrix.csv` and
/// `ranked_pairs.csv` into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))
    };
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::format(REPORT_FILE, e))?;
    write(REPORT_FILE, json + "\n")?;

    let c = &report.confusion;
    write(
        CONFUSION_FILE,
        format!(
            "truth\\predicted,same,different\nsame,{},{}\ndifferent,{},{}\n",
            c.0[0][0], c.0[0][1], c.0[1][0], c.0[1][1]
        ),
    )?;
    write(CHARPAIR_FILE, matrix_csv(&report.charpair_errors))?;

    let mut ranked = String::from("rank,char_a,char_b,errors,total,accuracy\n");
    for (i, p) in report.ranked_pairs.iter().enumerate() {
        writeln!(ranked, "{},{},{},{},{},{}", i + 1, p.char_a, p.char_b, p.errors, p.total, p.accuracy).unwrap();
    }
    write(RANKED_FILE, ranked)
}

pub fn read_report(dir: &Path) -> Result<EvalReport> {
    let path = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: char, b: char, fa: &str, fb: &str, label: u8) -> PairRecord {
        PairRecord {
            char_a: a,
            char_b: b,
            font_a: fa.into(),
            font_b: fb.into(),
            image_a_path: format!("{fa}/{a}.png").into(),
            image_b_path: format!("{fb}/{b}.png").into(),
            label,
        }
    }

    #[test]
    fn tie_goes_to_different() {
        assert_eq!(predicted_label(0.7), SAME);
        assert_eq!(predicted_label(0.5), DIFFERENT);
        assert_eq!(predicted_label(0.3), DIFFERENT);
    }

    #[test]
    fn three_pair_hand_count() {
        let pairs = vec![pair('A', 'B', "f", "f", SAME), pair('A', 'B', "f", "g", DIFFERENT), pair('C', 'D', "g", "g", SAME)];
        let preds = [0.9, 0.8, 0.1].map(Prediction::from_p_same);
        let r = build_report(&pairs, &preds).unwrap();
        assert_eq!(r.confusion.0, [[1, 1], [1, 0]]);
        assert!((r.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.charpair_errors[0][1], 1);
        assert_eq!(r.charpair_errors[1][0], 1);
        assert_eq!(r.charpair_totals[0][1], 2);
        assert_eq!(r.positive.errors[2][3], 1);
        assert_eq!(r.negative.errors[0][1], 1);
        assert_eq!(r.per_font_errors, BTreeMap::from([("f".into(), 0), ("g".into(), 1)]));
        assert_eq!(worst_fonts(&r, 5), vec![("g".to_string(), 1), ("f".to_string(), 0)]);
        let (worst, best) = rank_charpairs(&r, 20);
        assert_eq!((worst[0].char_a, worst[0].char_b), ('C', 'D'));
        assert_eq!((best[0].char_a, best[0].char_b), ('A', 'B'));
    }

    #[test]
    fn single_pair_type_in_both_lists() {
        let pairs = vec![pair('Q', 'R', "f", "f", SAME)];
        let r = build_report(&pairs, &[Prediction::from_p_same(0.9)]).unwrap();
        let (worst, best) = rank_charpairs(&r, 20);
        assert_eq!(worst, best);
        assert_eq!(worst.len(), 1);
    }

    #[test]
    fn equal_accuracy_sorted_alphabetically() {
        let pairs = vec![pair('Y', 'Z', "f", "f", SAME), pair('A', 'C', "f", "f", SAME), pair('A', 'B', "f", "f", SAME)];
        let r = build_report(&pairs, &[Prediction::from_p_same(0.9); 3]).unwrap();
        let (worst, best) = rank_charpairs(&r, 3);
        let names = |v: &[RankedPair]| v.iter().map(|p| format!("{}{}", p.char_a, p.char_b)).collect::<Vec<_>>();
        assert_eq!(names(&worst), ["AB", "AC", "YZ"]);
        assert_eq!(names(&best), ["AB", "AC", "YZ"]);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(matches!(build_report(&[], &[]), Err(Error::EmptyDataset(_))));
        let pairs = vec![pair('A', 'B', "f", "f", SAME)];
        assert!(build_report(&pairs, &[]).is_err());
    }

    #[test]
    fn report_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pairs = vec![pair('A', 'B', "f", "f", SAME), pair('A', 'B', "f", "g", DIFFERENT)];
        let r = build_report(&pairs, &[0.2, 0.2].map(Prediction::from_p_same)).unwrap();
        write_report(dir.path(), &r).unwrap();
        assert_eq!(read_report(dir.path()).unwrap(), r);
        let confusion = fs::read_to_string(dir.path().join(CONFUSION_FILE)).unwrap();
        assert!(confusion.contains("same,0,1\ndifferent,0,1"));
        let matrix = fs::read_to_string(dir.path().join(CHARPAIR_FILE)).unwrap();
        assert_eq!(matrix.lines().count(), 27);
    }
}
