//! `semtag`: train, apply and evaluate taggers from the command line.
//!
//! Exit status is 0 on success, 1 when a run fails and 2 for usage or
//! configuration errors.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use settings::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] semtag::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(semtag::Error::Config(_)) => 2,
            CliError::Core(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "semtag",
    version,
    about = "Semantic and part-of-speech tagging"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it with its run log (`<model>.log`).
    Train(RunArgs),
    /// Tag tokens read one per line (first tab column), sentences separated by blank lines.
    Tag(TagArgs),
    /// Accuracy of a model on a labeled test corpus.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Most-frequent-class baseline fitted on --train, scored on --test.
    Baseline {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Bootstrap p-value that system A is more accurate than system B.
    Significance(SignificanceArgs),
    /// Sentence, token and distinct-tag counts of corpora.
    Census(CensusArgs),
}

/// Settings shared by the commands that read a run configuration.
#[derive(Args, Default)]
pub struct RunArgs {
    /// `key = value` configuration file; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub train: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub dev: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub test: Option<PathBuf>,
    /// Pretrained word vectors (text format); random initialization without it.
    #[arg(long, value_name = "PATH")]
    pub embeddings: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// `semtag`, `ud_pos` or a tagset file.
    #[arg(long, value_name = "NAME|PATH")]
    pub tagset: Option<String>,
    /// POS training corpus for joint POS + semantic tagging.
    #[arg(long, value_name = "PATH")]
    pub pos_train: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub pos_dev: Option<PathBuf>,
    #[arg(long, value_name = "NAME")]
    pub arch: Option<String>,
    /// Add the auxiliary head and loss.
    #[arg(long)]
    pub aux: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Auxiliary loss weight.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Reject tags outside the tagset (default).
    #[arg(long, conflicts_with = "lenient")]
    pub strict: bool,
    /// Replace tags outside the tagset by its fallback tag.
    #[arg(long)]
    pub lenient: bool,
    #[arg(long, value_name = "add|concat")]
    pub bypass_mode: Option<String>,
    /// Any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl RunArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = RunConfig::default();
        if let Some(p) = &self.config {
            c.apply_file(p)?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            c.set(k.trim(), v)?;
        }
        let show = |p: &PathBuf| p.display().to_string();
        let flags: [(&str, Option<String>); 16] = [
            ("train", self.train.as_ref().map(show)),
            ("dev", self.dev.as_ref().map(show)),
            ("test", self.test.as_ref().map(show)),
            ("embeddings", self.embeddings.as_ref().map(show)),
            ("model", self.model.as_ref().map(show)),
            ("tagset", self.tagset.clone()),
            ("pos_train", self.pos_train.as_ref().map(show)),
            ("pos_dev", self.pos_dev.as_ref().map(show)),
            ("arch", self.arch.clone()),
            ("aux", self.aux.then(|| "true".into())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("max_epochs", self.epochs.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("lambda_aux", self.lambda.map(|v| v.to_string())),
            ("patience", self.patience.map(|v| v.to_string())),
            ("bypass_mode", self.bypass_mode.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                c.set(k, &v)?;
            }
        }
        if self.strict {
            c.set("validation", "strict")?;
        }
        if self.lenient {
            c.set("validation", "lenient")?;
        }
        Ok(c)
    }
}

#[derive(Args)]
pub struct OutputArgs {
    /// Write the machine-readable report here.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Write predicted tags here in the corpus format.
    #[arg(long, value_name = "PATH")]
    pub predictions: Option<PathBuf>,
}

#[derive(Args)]
pub struct TagArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Input file, or `-` for standard input.
    #[arg(default_value = "-")]
    pub input: PathBuf,
    /// Output file; standard output by default.
    #[arg(long, short, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Tagset the output must use; an error if the model's differs.
    #[arg(long, value_name = "NAME|PATH")]
    pub tagset: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Unit {
    Sentence,
    Token,
}

#[derive(Args)]
pub struct SignificanceArgs {
    /// Output of system A (corpus format).
    pub a: PathBuf,
    /// Output of system B.
    pub b: PathBuf,
    pub gold: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = semtag::eval::DEFAULT_RESAMPLES)]
    pub resamples: usize,
    #[arg(long, value_enum, default_value = "sentence")]
    pub unit: Unit,
    #[arg(long, default_value = "semtag", value_name = "NAME|PATH")]
    pub tagset: String,
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Args)]
pub struct CensusArgs {
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    #[arg(long, default_value = "semtag", value_name = "NAME|PATH")]
    pub tagset: String,
    #[arg(long)]
    pub lenient: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => commands::train(&args.resolve()?),
        Command::Tag(args) => commands::tag(&args),
        Command::Eval { run, out } => commands::eval(&run.resolve()?, &out),
        Command::Baseline { run, out } => commands::baseline(&run.resolve()?, &out),
        Command::Significance(args) => commands::significance(&args),
        Command::Census(args) => commands::census(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("semtag: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
