//! Command-line front end: `preprocess`, `build-vocab`, `train`, `evaluate`
//! and `predict`.

mod commands;
pub mod settings;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use emocaps::Error;

use settings::Settings;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "emocaps", version, about = "Implicit emotion classification with a Bi-GRU capsule network")]
pub struct Cli {
    /// Flat JSON file with any of the keys below; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub settings: Settings,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize tweets, one per line (--input, --output, --lexicon).
    Preprocess,
    /// Build vocabulary, lexicon and initial embedding from --train into --vocab-dir.
    BuildVocab,
    /// Train on --train (early stopping on --dev) and write --checkpoint.
    Train,
    /// Score --predictions against --gold, or a --checkpoint on --test.
    Evaluate {
        /// Also list examples with this gold:predicted pair, e.g. anger:sad.
        #[arg(long)]
        errors: Option<String>,
    },
    /// Label every line of --input with the model in --checkpoint.
    Predict,
}

/// Maps an error to the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::InvalidConfig(_) => EXIT_USAGE,
        e if e.is_numeric() => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parses `args` and runs the chosen subcommand. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}
