//! Cross-character pair generation and font-disjoint splits.
//!
//! Every font contributes one positive pair per unordered pair of distinct
//! letters (325 for A-Z). Negatives are drawn with replacement: a letter
//! pair uniformly from the 325, then two distinct fonts uniformly. Pairs are
//! manifests of glyph PNG paths, never materialized tensors.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{read_jsonl, write_jsonl, Dataset};
use crate::{derive_seed, LETTERS};

pub const SAME: u8 = 1;
pub const DIFFERENT: u8 = 0;

/// All unordered pairs of distinct letters, `X < Y`, in lexicographic order.
pub fn char_pairs() -> Vec<(char, char)> {
    let mut pairs = Vec::with_capacity(325);
    for (i, &a) in LETTERS.iter().enumerate() {
        for &b in &LETTERS[i + 1..] {
            pairs.push((a, b));
        }
    }
    pairs
}

/// `(positives in corpus, pairs per font)` for `n_fonts` fonts of `n_chars` classes.
pub fn count_pairs(n_fonts: u64, n_chars: u64) -> Result<(u64, u64)> {
    if n_chars < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 character classes, got {n_chars}")));
    }
    let per_font = n_chars * (n_chars - 1) / 2;
    Ok((n_fonts * per_font, per_font))
}

/// One line of a `pairs.jsonl` manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub char_a: char,
    pub char_b: char,
    pub font_a: String,
    pub font_b: String,
    pub image_a_path: PathBuf,
    pub image_b_path: PathBuf,
    /// 1 = same font, 0 = different fonts.
    pub label: u8,
}

impl PairRecord {
    pub fn is_positive(&self) -> bool {
        self.label == SAME
    }
}

/// Resolves every font's 26 glyph paths, failing on unknown fonts or
/// missing files. Index `[font][letter]`.
fn resolve_glyphs(ds: &Dataset, fonts: &[String]) -> Result<Vec<Vec<PathBuf>>> {
    fonts
        .iter()
        .map(|id| {
            let entry = ds
                .entry(id)
                .ok_or_else(|| Error::InvalidArgument(format!("font {id} is not in dataset {}", ds.root.display())))?;
            LETTERS
                .iter()
                .map(|&c| {
                    let path = ds
                        .glyph_path(entry, c)
                        .ok_or_else(|| Error::MissingGlyphFile { path: ds.root.join(id).join(format!("{c}.png")) })?;
                    if !path.is_file() {
                        return Err(Error::MissingGlyphFile { path });
                    }
                    Ok(path)
                })
                .collect()
        })
        .collect()
}

/// All 325 positives of every font, font-major then canonical pair order.
pub fn gen_positive<'a>(ds: &Dataset, fonts: &'a [String]) -> Result<impl Iterator<Item = PairRecord> + 'a> {
    let glyphs = resolve_glyphs(ds, fonts)?;
    let pairs = char_pairs();
    Ok(fonts.iter().zip(glyphs).flat_map(move |(font, paths)| {
        pairs
            .clone()
            .into_iter()
            .map(move |(a, b)| PairRecord {
                char_a: a,
                char_b: b,
                font_a: font.clone(),
                font_b: font.clone(),
                image_a_path: paths[(a as u8 - b'A') as usize].clone(),
                image_b_path: paths[(b as u8 - b'A') as usize].clone(),
                label: SAME,
            })
    }))
}

/// Exactly `count` seeded negatives drawn with replacement.
pub fn gen_negative<'a>(
    ds: &Dataset,
    fonts: &'a [String],
    count: usize,
    seed: u64,
) -> Result<impl Iterator<Item = PairRecord> + 'a> {
    if fonts.len() < 2 {
        return Err(Error::InsufficientFonts(fonts.len()));
    }
    let glyphs = resolve_glyphs(ds, fonts)?;
    let pairs = char_pairs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(move |_| {
        let (a, b) = pairs[rng.random_range(0..pairs.len())];
        let i = rng.random_range(0..fonts.len());
        let mut j = rng.random_range(0..fonts.len() - 1);
        if j >= i {
            j += 1;
        }
        PairRecord {
            char_a: a,
            char_b: b,
            font_a: fonts[i].clone(),
            font_b: fonts[j].clone(),
            image_a_path: glyphs[i][(a as u8 - b'A') as usize].clone(),
            image_b_path: glyphs[j][(b as u8 - b'A') as usize].clone(),
            label: DIFFERENT,
        }
    }))
}

/// Positives followed by an equal number of negatives. With `max_total`,
/// positives are subsampled (seeded, order kept) to `max_total / 2` and the
/// same number of negatives is drawn.
pub fn balanced_pairs(ds: &Dataset, fonts: &[String], seed: u64, max_total: Option<usize>) -> Result<Vec<PairRecord>> {
    let mut positives: Vec<PairRecord> = gen_positive(ds, fonts)?.collect();
    if let Some(max) = max_total {
        positives = subsample(positives, max / 2, derive_seed(seed, 1));
    }
    let n = positives.len();
    let negatives = gen_negative(ds, fonts, n, seed)?;
    positives.extend(negatives);
    Ok(positives)
}

/// Seeded uniform subsample without replacement, original order preserved.
pub fn subsample<T>(items: Vec<T>, n: usize, seed: u64) -> Vec<T> {
    if n >= items.len() {
        return items;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = rand::seq::index::sample(&mut rng, items.len(), n).into_vec();
    keep.sort_unstable();
    let mut keep = keep.into_iter().peekable();
    items
        .into_iter()
        .enumerate()
        .filter_map(|(i, item)| {
            if keep.peek() == Some(&i) {
                keep.next();
                Some(item)
            } else {
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train_fonts: Vec<String>,
    pub val_fonts: Vec<String>,
    pub test_fonts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<Vec<Vec<String>>>,
    /// Glyph dataset the font ids refer to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
}

impl SplitManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::format("split manifest", e))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Train/val/test fonts of cross-validation round `round`: the round's
    /// fold is the test set, the remaining fonts are cut `train:val` in
    /// proportion `ratio`.
    pub fn fold_round(&self, round: usize, ratio: (usize, usize)) -> Result<(Vec<String>, Vec<String>, Vec<String>)> {
        let folds = self
            .folds
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("split manifest has no folds".into()))?;
        if round >= folds.len() {
            return Err(Error::InvalidArgument(format!("round {round} out of range for {} folds", folds.len())));
        }
        if ratio.0 + ratio.1 == 0 {
            return Err(Error::InvalidArgument("train:val ratio must not be 0:0".into()));
        }
        let rest: Vec<String> = folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != round)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect();
        let n_val = (rest.len() * ratio.1 + (ratio.0 + ratio.1) / 2) / (ratio.0 + ratio.1);
        let n_train = rest.len() - n_val;
        Ok((rest[..n_train].to_vec(), rest[n_train..].to_vec(), folds[round].clone()))
    }
}

fn shuffled(fonts: &[String], seed: u64) -> Vec<String> {
    let mut order = fonts.to_vec();
    order.sort();
    order.dedup();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Seeded shuffle of the (sorted, deduplicated) font list, then slice.
pub fn split_fonts(fonts: &[String], sizes: (usize, usize, usize), seed: u64) -> Result<SplitManifest> {
    let order = shuffled(fonts, seed);
    let requested = sizes.0 + sizes.1 + sizes.2;
    if requested > order.len() {
        return Err(Error::SizeMismatch { requested, available: order.len() });
    }
    let (train, rest) = order.split_at(sizes.0);
    let (val, rest) = rest.split_at(sizes.1);
    Ok(SplitManifest {
        seed,
        train_fonts: train.to_vec(),
        val_fonts: val.to_vec(),
        test_fonts: rest[..sizes.2].to_vec(),
        folds: None,
        dataset: None,
    })
}

/// Seeded shuffle then `k` contiguous chunks whose sizes differ by at most 1.
pub fn make_folds(fonts: &[String], k: usize, seed: u64) -> Result<SplitManifest> {
    let order = shuffled(fonts, seed);
    if k < 2 || order.len() < k {
        return Err(Error::TooFewFonts { k, fonts: order.len() });
    }
    let (base, extra) = (order.len() / k, order.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(SplitManifest { seed, train_fonts: Vec::new(), val_fonts: Vec::new(), test_fonts: Vec::new(), folds: Some(folds), dataset: None })
}

/// Distinct fonts referenced by a pair list.
pub fn fonts_in(pairs: &[PairRecord]) -> BTreeSet<String> {
    pairs.iter().flat_map(|p| [p.font_a.clone(), p.font_b.clone()]).collect()
}

/// Fails with `LeakageDetected` when the two font sets intersect.
pub fn check_disjoint(
    left_name: &str,
    left: &BTreeSet<String>,
    right_name: &str,
    right: &BTreeSet<String>,
) -> Result<()> {
    let shared: Vec<String> = left.intersection(right).cloned().collect();
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::LeakageDetected { left: left_name.into(), right: right_name.into(), fonts: shared })
    }
}

pub fn write_pairs(path: &Path, pairs: &[PairRecord]) -> Result<()> {
    write_jsonl(path, pairs)
}

pub fn read_pairs(path: &Path) -> Result<Vec<PairRecord>> {
    read_jsonl(path)
}
