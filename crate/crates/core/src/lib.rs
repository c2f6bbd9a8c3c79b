//! Character-independent font identification.
//!
//! Given glyph images of two *different* uppercase letters, decide whether
//! they were set in the same font. The crate covers the whole pipeline:
//!
//! - [`raster`]: font loading, glyph normalization/binarization, corpus filtering
//! - [`pairgen`]: cross-character pair manifests and font-disjoint splits/folds
//! - [`netmodel`]: the two-stream shared-weight CNN with exact backprop
//! - [`trainer`]: mini-batch Adam training, early stopping, k-fold CV
//! - [`evaluator`]: confusion/character-pair reports and cross-corpus evaluation
//! - [`explain`]: PCA of stream features and Grad-CAM contribution maps

pub mod error;
pub mod evaluator;
pub mod explain;
pub mod netmodel;
pub mod pairgen;
pub mod raster;
pub mod trainer;

pub use error::{Error, Result};

/// The 26 character classes, in canonical order.
pub const LETTERS: [char; 26] = [
    'A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'J', 'K', 'L', 'M', 'N', 'O', 'P', 'Q', 'R', 'S', 'T', 'U', 'V',
    'W', 'X', 'Y', 'Z',
];

/// Index of an uppercase letter in [`LETTERS`].
pub fn letter_index(c: char) -> Option<usize> {
    c.is_ascii_uppercase().then(|| (c as u8 - b'A') as usize)
}

/// Mixes a base seed with a stream index (splitmix64 finalizer), so that
/// sub-streams of one run get independent, reproducible RNG seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
