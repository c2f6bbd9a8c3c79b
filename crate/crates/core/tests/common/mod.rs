//! Shared fixtures for integration tests: synthetic font corpora built into
//! glyph datasets in temporary directories.
#![allow(dead_code)]

use std::path::Path;

use fontpair::raster::{build_dataset, BuildOptions, Dataset};
use tempfile::TempDir;

/// A built dataset of `n` synthetic fonts plus the directory holding it.
pub struct Corpus {
    pub dir: TempDir,
    pub dataset: Dataset,
}

impl Corpus {
    pub fn fonts_dir(&self) -> std::path::PathBuf {
        self.dir.path().join("fonts")
    }
}

pub fn build_corpus_at(root: &Path, n: usize, seed: u64, size: usize) -> Dataset {
    let fonts = root.join("fonts");
    synthfont::write_corpus(&fonts, n, seed).expect("write synthetic fonts");
    let opts = BuildOptions { size, ..BuildOptions::default() };
    let summary = build_dataset(&fonts, &root.join("dataset"), &opts).expect("build dataset");
    assert_eq!(summary.kept.len(), n, "synthetic fonts rejected: {:?}", summary.rejected);
    Dataset::open(&root.join("dataset")).expect("open dataset")
}

pub fn corpus(n: usize, seed: u64) -> Corpus {
    let dir = tempfile::tempdir().expect("tempdir");
    let dataset = build_corpus_at(dir.path(), n, seed, 100);
    Corpus { dir, dataset }
}
