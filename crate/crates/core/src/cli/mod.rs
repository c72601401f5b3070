//! Command-line front end: argument parsing, config resolution, dispatch,
//! manifests and exit codes (0 ok, 1 config, 2 I/O or file format, 3 domain).

pub mod commands;
pub mod config;
pub mod files;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use crate::error::Error;
use config::{RunConfig, ENV_PREFIX};
use files::Manifest;

#[derive(Debug, Parser)]
#[command(
    name = "motiondiff",
    version,
    about = "Discrete diffusion over motion tokens"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config value.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override a config value, e.g. `--set train.epochs=50`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Output path; defaults to the matching `paths.*` entry.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic clustered codebook.
    MakeCodebook,
    /// Quantize per-condition sinusoid trajectories into a token dataset.
    MakeDataset,
    /// Fit the tabular denoiser.
    Train,
    /// Apply the forward chain at step `t` to every dataset sequence.
    Corrupt {
        /// Diffusion step, 1..=T.
        #[arg(long)]
        t: usize,
    },
    /// Sample single-segment sequences.
    Generate,
    /// Sample a multi-segment sequence with two-phase sampling.
    GenerateMulti,
    /// Jerk, diversity and Frechet report for a tokens file.
    Evaluate,
    /// Per-step stochasticity and mask-row table of the transition matrices.
    MatrixAudit {
        /// Use the multi-segment rank scale.
        #[arg(long)]
        multi: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::MakeCodebook => "make-codebook",
            Command::MakeDataset => "make-dataset",
            Command::Train => "train",
            Command::Corrupt { .. } => "corrupt",
            Command::Generate => "generate",
            Command::GenerateMulti => "generate-multi",
            Command::Evaluate => "evaluate",
            Command::MatrixAudit { .. } => "matrix-audit",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Domain(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Domain(_) => 3,
        }
    }

    /// Single-line `error kind=... code=... msg="..."`.
    pub fn line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Config(m) => ("config", m.clone()),
            CliError::Io(m) => ("io", m.clone()),
            CliError::Domain(e) => ("domain", e.to_string()),
        };
        format!(
            "error kind={kind} code={} msg={:?}",
            self.exit_code(),
            msg.replace('\n', " ")
        )
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Format(_) => CliError::Io(e.to_string()),
            other => CliError::Domain(other),
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let text = match &cli.config {
        Some(p) => Some(files::read_text(p).map_err(|e| CliError::Config(e.to_string()))?),
        None => None,
    };
    let mut env: Vec<(String, String)> = std::env::vars()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    env.sort();
    let mut sets = cli.sets.clone();
    if let Some(seed) = cli.seed {
        sets.push(format!("seed={seed}"));
    }
    RunConfig::resolve(text.as_deref(), &env, &sets).map_err(CliError::Config)
}

fn write_manifest(
    cmd: &str,
    cfg: &RunConfig,
    outcome: &commands::Outcome,
    started: Instant,
) -> Result<(), CliError> {
    let Some(primary) = outcome.outputs.first() else {
        return Ok(());
    };
    let hashes = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>, CliError> {
        paths
            .iter()
            .map(|p| Ok((p.display().to_string(), files::sha256_file(p)?)))
            .collect()
    };
    let manifest = Manifest {
        command: cmd.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        config: cfg.to_toml(),
        inputs: hashes(&outcome.inputs)?,
        outputs: hashes(&outcome.outputs)?,
        wall_clock_s: started.elapsed().as_secs_f64(),
        finished_unix_s: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    files::write_atomic(&files::manifest_path(primary), text.as_bytes())?;
    Ok(())
}

/// Runs a parsed command and returns its stdout text.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let started = Instant::now();
    let cfg = load_config(cli)?;
    let out = |default: &Path| cli.out.clone().unwrap_or_else(|| default.to_path_buf());
    let p = &cfg.paths;
    let outcome = match &cli.command {
        Command::MakeCodebook => commands::make_codebook(&cfg, &out(&p.codebook)),
        Command::MakeDataset => commands::make_dataset(&cfg, &out(&p.dataset)),
        Command::Train => commands::train(&cfg, &out(&p.model)),
        Command::Corrupt { t } => commands::corrupt(&cfg, *t, &out(&p.corrupted)),
        Command::Generate => commands::generate(&cfg, &out(&p.tokens)),
        Command::GenerateMulti => commands::generate_multi(&cfg, &out(&p.tokens)),
        Command::Evaluate => commands::evaluate(&cfg, &out(&p.report)),
        Command::MatrixAudit { multi } => commands::matrix_audit(&cfg, *multi, cli.out.as_deref()),
    }?;
    write_manifest(cli.command.name(), &cfg, &outcome, started)?;
    Ok(outcome.stdout)
}

/// Parses `args`, runs, prints, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            let err = CliError::Config(first.to_string());
            eprintln!("{}", err.line());
            return err.exit_code();
        }
    };
    match execute(&cli) {
        Ok(stdout) => {
            let mut lock = std::io::stdout().lock();
            let _ = lock.write_all(stdout.as_bytes());
            0
        }
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}
