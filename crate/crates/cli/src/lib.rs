//! Command-line front end: `analyze`, `corpus`, `export` and `serve`.

pub mod commands;
pub mod server;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use commands::{Fatal, Outcome};

#[derive(Debug, Parser)]
#[command(
    name = "nbpurpose",
    version,
    about = "Chapter and purpose overlays for Jupyter notebooks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build `<name>.overlay.json` for one notebook.
    Analyze(AnalyzeArgs),
    /// Count purpose patterns over every `.ipynb` in a directory.
    Corpus(CorpusArgs),
    /// Export the expanded parts of an overlay.
    Export(ExportArgs),
    /// Serve the overlay, annotations and viewer over local HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct CatalogArgs {
    /// Function catalog merged over the built-in one.
    #[arg(long, value_name = "PATH")]
    pub catalog: Option<PathBuf>,
    /// Pattern catalog replacing the built-in one.
    #[arg(long, value_name = "PATH")]
    pub patterns: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub notebook: PathBuf,
    #[command(flatten)]
    pub catalogs: CatalogArgs,
    /// Output file, or a directory to write `<name>.overlay.json` into.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Print the collapsed unit list to stdout as JSON lines.
    #[arg(long)]
    pub dump_encoding: bool,
    #[arg(long, value_name = "N", default_value_t = nbpurpose_core::encoding::DEFAULT_MIN_REPEAT_LEN)]
    pub min_repeat_len: usize,
    #[arg(long, value_name = "N", default_value_t = nbpurpose_core::encoding::DEFAULT_MIN_REPEAT_COUNT)]
    pub min_repeat_count: usize,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    pub dir: PathBuf,
    #[command(flatten)]
    pub catalogs: CatalogArgs,
    /// CSV output path; the JSON table goes next to it.
    #[arg(long, value_name = "PATH", default_value = "frequencies.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    pub notebook: PathBuf,
    #[command(flatten)]
    pub catalogs: CatalogArgs,
    /// Overlay file; defaults to `<name>.overlay.json` beside the notebook,
    /// rebuilt from the notebook when that file is missing.
    #[arg(long, value_name = "PATH")]
    pub overlay: Option<PathBuf>,
    /// Annotation sidecar; defaults to `<name>.annotations.json`.
    #[arg(long, value_name = "PATH")]
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// `all`, `none`, or a comma list such as `2,4.1`.
    #[arg(long, value_name = "SPEC", default_value = "none")]
    pub expand: String,
    #[arg(long, value_name = "FORMAT", default_value = "markdown")]
    pub format: String,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_name = "N", default_value_t = 8765)]
    pub port: u16,
    /// Directory holding a built viewer bundle.
    #[arg(long, value_name = "DIR")]
    pub viewer: Option<PathBuf>,
}

/// Parses `args` and runs the command, mapping the result to the exit
/// code contract: 0 success, 1 partial, 2 fatal.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => commands::analyze(&a),
        Command::Corpus(a) => commands::corpus(&a),
        Command::Export(a) => commands::export(&a),
        Command::Serve(a) => server::serve(&a),
    };
    match result {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("nbpurpose: error: {e:#}");
            ExitCode::from(2)
        }
    }
}
