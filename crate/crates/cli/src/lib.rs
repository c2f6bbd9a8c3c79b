//! Command-line driver for the `fontpair` pipeline.
//!
//! [`run`] parses arguments, executes one subcommand and maps the outcome to
//! an exit code: 0 on success, 1 on a domain error (reported on standard
//! error as a single `error[code]: message` line), 2 on a usage error.
//! Every command with an output directory records `run_meta.json` there,
//! also when it fails after its arguments were resolved.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod commands;
pub mod config;
pub mod error;
pub mod meta;

pub use error::CliError;

use config::TrainOverrides;
use meta::RunMeta;

#[derive(Debug, Parser)]
#[command(name = "fontpair", version, about = "Character-independent font identification")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Single worker and timestamp-free outputs, for byte-identical reruns.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Global seed; overrides the config file.
    #[arg(long, global = true, env = "FONTPAIR_SEED")]
    pub seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    /// The predicted class.
    Auto,
    Same,
    Different,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UpsampleArg {
    Bilinear,
    Nearest,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rasterize a font directory into a glyph dataset.
    BuildDataset {
        #[arg(long)]
        fonts_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = fontpair::raster::DEFAULT_SIZE)]
        size: usize,
        /// File of font ids to drop, one per line (`#` starts a comment).
        #[arg(long)]
        exclude: Option<PathBuf>,
        #[arg(long, default_value_t = 0.01)]
        ink_low: f64,
        #[arg(long, default_value_t = 0.60)]
        ink_high: f64,
    },
    /// Split a dataset's fonts into train/val/test and write pair manifests.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        train: usize,
        #[arg(long)]
        val: usize,
        #[arg(long)]
        test: usize,
        /// Subsample each manifest to at most this many balanced pairs.
        #[arg(long)]
        max_train_pairs: Option<usize>,
        #[arg(long)]
        max_val_pairs: Option<usize>,
        #[arg(long)]
        max_test_pairs: Option<usize>,
    },
    /// Partition a dataset's fonts into k disjoint folds.
    Folds {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 6)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the number of positive pairs for a font count.
    CountPairs {
        #[arg(long)]
        fonts: u64,
        #[arg(long, default_value_t = 26)]
        chars: u64,
    },
    /// Train a network on pair manifests.
    Train {
        /// Directory with pairs_train.jsonl and pairs_val.jsonl.
        #[arg(long)]
        pairs: PathBuf,
        /// Split manifest; enables the test-set leakage check and font digests.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// k-fold cross-validation.
    Cv {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Existing folds manifest; created from the dataset when absent.
        #[arg(long)]
        folds: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_train_pairs: Option<usize>,
        #[arg(long)]
        max_val_pairs: Option<usize>,
        #[arg(long)]
        max_test_pairs: Option<usize>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Evaluate a checkpoint on a pair manifest.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate on an external corpus (a dataset dir or a raw font dir).
    CrossEval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        fonts_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project two characters' stream outputs onto their first two principal components.
    Pca {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        chars: Vec<char>,
        #[arg(long)]
        out: PathBuf,
        /// Which fonts of the split to project.
        #[arg(long, value_enum, default_value_t = FontSet::Test)]
        fonts: FontSet,
        /// Dataset directory, if the split does not record one.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Grad-CAM contribution maps for one pair of a manifest.
    Gradcam {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        pair_manifest: PathBuf,
        #[arg(long)]
        index: usize,
        #[arg(long, value_enum, default_value_t = TargetArg::Auto)]
        target: TargetArg,
        #[arg(long, value_enum, default_value_t = UpsampleArg::Bilinear)]
        upsample: UpsampleArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Consolidated text + JSON summary of an evaluation directory.
    Report {
        run_dir: PathBuf,
        /// Length of the worst/best character-pair lists.
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
    /// Print the default train.toml.
    Defaults,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FontSet {
    Train,
    Val,
    Test,
    All,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::BuildDataset { .. } => "build-dataset",
            Command::Split { .. } => "split",
            Command::Folds { .. } => "folds",
            Command::CountPairs { .. } => "count-pairs",
            Command::Train { .. } => "train",
            Command::Cv { .. } => "cv",
            Command::Eval { .. } => "eval",
            Command::CrossEval { .. } => "cross-eval",
            Command::Pca { .. } => "pca",
            Command::Gradcam { .. } => "gradcam",
            Command::Report { .. } => "report",
            Command::Defaults => "defaults",
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.global.verbose);

    let workers = if cli.global.deterministic {
        1
    } else {
        cli.global.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    };
    if workers == 0 {
        return report_error(&CliError::InvalidArgument("--workers must be at least 1".into()));
    }
    // Fails only if a pool already exists (repeated in-process runs).
    let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();

    let argv_text: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut meta = RunMeta::new(argv_text, cli.global.seed.unwrap_or(0), workers, cli.global.deterministic);
    meta.command = cli.command.name().to_string();

    let result = commands::execute(&cli, &mut meta);
    if meta.out_dir.is_some() {
        meta.finish(&result);
        if let Err(e) = meta.write() {
            log::warn!("could not write {}: {e}", meta::RUN_META_FILE);
        }
    }
    match result {
        Ok(()) => 0,
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &CliError) -> i32 {
    let message = e.to_string().replace('\n', " ");
    eprintln!("error[{}]: {message}", e.code());
    1
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}
