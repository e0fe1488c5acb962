//! Command-line front end: configuration, seeding and CSV/JSON emission for
//! every experiment in `aquaplan`.

pub mod commands;
pub mod config;
pub mod csv;
pub mod error;
pub mod manifest;

use std::path::{Path, PathBuf};

use aquaplan::acquisition::AcquisitionKind;
use aquaplan::surrogate::SurrogateKind;
use clap::Parser;

use commands::{execute, Command};
use config::{Overrides, RunConfig};
use error::{CliError, CliResult};
use manifest::{Manifest, MANIFEST_NAME};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "aquaplan", version, about = "Underwater sensor placement and update-rate planning")]
#[command(allow_negative_numbers = true)]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (falls back to $AQUAPLAN_OUTDIR, then ".").
    #[arg(long, global = true)]
    pub outdir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Re-run the command recorded in a run.json.
    #[arg(long, global = true)]
    pub from_manifest: Option<PathBuf>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub mu: Option<f64>,
    /// AoI threshold.
    #[arg(long = "M", global = true, allow_negative_numbers = true)]
    pub m: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub gamma_wake: Option<f64>,
    /// Detection decay factor.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Sensor count of the reference layout.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub freq_khz: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub zeta: Option<f64>,
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    /// gp or mlp.
    #[arg(long, global = true)]
    pub surrogate: Option<SurrogateKind>,
    /// ei or aei.
    #[arg(long, global = true)]
    pub acq: Option<AcquisitionKind>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            lambda: self.lambda,
            mu: self.mu,
            m: self.m,
            gamma_wake: self.gamma_wake,
            delta: self.delta,
            k: self.k,
            freq_khz: self.freq_khz,
            zeta: self.zeta,
            iters: self.iters,
            surrogate: self.surrogate,
            acq: self.acq,
        }
    }
}

pub struct Report {
    pub stdout: Vec<String>,
    pub written: Vec<PathBuf>,
    pub manifest: Manifest,
}

fn resolve_outdir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os("AQUAPLAN_OUTDIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs one invocation. `args` is the raw command line recorded in the
/// manifest.
pub fn run(cli: Cli, args: Vec<String>) -> CliResult<Report> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }

    let (command, config, timestamp, args) = match &cli.from_manifest {
        Some(path) => {
            if cli.command.is_some() || cli.config.is_some() || cli.overrides() != Overrides::default() {
                return Err(CliError::Usage(
                    "--from-manifest takes no subcommand, config file or parameter overrides".into(),
                ));
            }
            let m = Manifest::load(path)?;
            (m.command, m.config, m.timestamp, m.args)
        }
        None => {
            let command = cli
                .command
                .clone()
                .ok_or_else(|| CliError::Usage("a subcommand is required (see --help)".into()))?;
            let mut config = match &cli.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            config.apply(&cli.overrides());
            let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
            (command, config, stamp, args)
        }
    };

    let outcome = execute(&command, &config, &timestamp)?;

    let name = command.name();
    let header: Vec<String> = [
        format!("command = {name}"),
        format!("version = {VERSION}"),
        format!("timestamp = {timestamp}"),
    ]
    .into_iter()
    .chain(config.to_toml().lines().map(str::to_string))
    .collect();

    let outdir = resolve_outdir(cli.outdir.as_deref());
    std::fs::create_dir_all(&outdir).map_err(|source| CliError::Io {
        path: outdir.clone(),
        source,
    })?;
    let mut written = Vec::new();
    let mut outputs = Vec::new();
    for mut artifact in outcome.artifacts {
        let file = match artifact.part {
            None => format!("{name}_{timestamp}.csv"),
            Some(part) => format!("{name}_{part}_{timestamp}.csv"),
        };
        for line in &header {
            artifact.table.comment(line.clone());
        }
        let path = outdir.join(&file);
        write(&path, &artifact.table.render())?;
        written.push(path);
        outputs.push(file);
    }

    let manifest = Manifest {
        version: VERSION.into(),
        timestamp,
        seed: config.seed,
        command,
        config,
        args,
        outputs,
    };
    let path = outdir.join(MANIFEST_NAME);
    write(&path, &manifest.to_json())?;
    written.push(path);
    Ok(Report {
        stdout: outcome.stdout,
        written,
        manifest,
    })
}
