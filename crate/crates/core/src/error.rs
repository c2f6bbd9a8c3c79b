use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a scalable font: {reason}")]
    UnparseableFont { path: PathBuf, reason: String },
    #[error("font {font_id} has no usable outline for '{letter}'")]
    MissingGlyph { font_id: String, letter: char },
    #[error("font {font_id} rejected, missing glyphs: {}", letters.iter().collect::<String>())]
    FontRejected { font_id: String, letters: Vec<char> },
    #[error("glyph image {path} referenced by manifest does not exist")]
    MissingGlyphFile { path: PathBuf },
    #[error("need at least 2 fonts to draw negative pairs, got {0}")]
    InsufficientFonts(usize),
    #[error("split sizes {requested} exceed corpus of {available} fonts")]
    SizeMismatch { requested: usize, available: usize },
    #[error("cannot make {k} folds from {fonts} fonts")]
    TooFewFonts { k: usize, fonts: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("font leakage between {left} and {right}: {fonts:?}")]
    LeakageDetected { left: String, right: String, fonts: Vec<String> },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("no usable fonts in external corpus {0}")]
    EmptyCorpus(PathBuf),
    #[error("characters must differ, got '{0}' twice")]
    IdenticalCharacters(char),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed {what}: {reason}")]
    Format { what: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable code, prefixed by the module that raised it.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnreadableFile { .. } => "raster.unreadable_file",
            Error::UnparseableFont { .. } => "raster.unparseable_font",
            Error::MissingGlyph { .. } => "raster.missing_glyph",
            Error::FontRejected { .. } => "raster.font_rejected",
            Error::MissingGlyphFile { .. } => "pairgen.missing_glyph_file",
            Error::InsufficientFonts(_) => "pairgen.insufficient_fonts",
            Error::SizeMismatch { .. } => "pairgen.size_mismatch",
            Error::TooFewFonts { .. } => "pairgen.too_few_fonts",
            Error::InvalidConfig(_) => "netmodel.invalid_config",
            Error::ShapeMismatch(_) => "netmodel.shape_mismatch",
            Error::LeakageDetected { .. } => "trainer.leakage_detected",
            Error::EmptyDataset(_) => "trainer.empty_dataset",
            Error::EmptyCorpus(_) => "evaluator.empty_corpus",
            Error::IdenticalCharacters(_) => "explain.identical_characters",
            Error::InvalidArgument(_) => "core.invalid_argument",
            Error::Format { .. } => "core.format",
            Error::Io { .. } => "core.io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(what: impl Into<String>, reason: impl ToString) -> Self {
        Error::Format { what: what.into(), reason: reason.to_string() }
    }
}
