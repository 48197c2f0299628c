//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use gradraker::{KernelFamily, KernelSpec, RfMap};

use crate::config::{ConfigError, ExperimentConfig};
use crate::error::{io_err, BenchError, BenchResult};
use crate::experiment::{bench_newnode, run_dataset, run_regret, run_synthetic};
use crate::report::{newnode_tsv, regret_tsv, report_tsv, summary_json, write_newnode, write_regret, write_run};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Tsv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "gradraker", about = "Online multi-kernel learning over graphs")]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for report files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Format of the summary printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    /// Extra `key=value` settings applied after the configuration file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Accuracy on synthetic Erdős–Rényi graphs.
    Synthetic,
    /// Accuracy on an edge list with node labels.
    Dataset,
    /// Static regret of the online learner.
    Regret,
    /// Per-node inference cost as the graph grows.
    BenchNewnode,
    /// Random-feature encoding of one connectivity pattern.
    Encode(EncodeArgs),
}

#[derive(Debug, clap::Args)]
pub struct EncodeArgs {
    /// Comma-separated pattern values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub pattern: Vec<f64>,
    #[arg(long, default_value = "gaussian")]
    pub family: String,
    #[arg(long, default_value_t = 1.0)]
    pub bandwidth: f64,
    /// Number of random features.
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    /// Load the spectral matrix from a saved map instead of drawing one.
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Save the map used for encoding.
    #[arg(long)]
    pub save_map: Option<PathBuf>,
}

/// Relative data paths in a configuration file resolve against its
/// directory.
fn resolve(path: &mut Option<String>, base: &Path) {
    if let Some(p) = path {
        if Path::new(p).is_relative() {
            *p = base.join(&*p).to_string_lossy().into_owned();
        }
    }
}

pub fn load_config(cli: &Cli) -> BenchResult<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            let mut cfg = ExperimentConfig::parse(&text)?;
            let base = path.parent().unwrap_or(Path::new("."));
            resolve(&mut cfg.edge_list, base);
            resolve(&mut cfg.labels, base);
            cfg
        }
        None => ExperimentConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("--set expects KEY=VALUE, got `{o}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn encode(args: &EncodeArgs, seed: u64, format: Format, out: &mut dyn Write) -> BenchResult<()> {
    let map = match &args.map {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(io_err(path))?;
            RfMap::from_bytes(&bytes)?
        }
        None => {
            let family: KernelFamily = args.family.parse()?;
            RfMap::new(KernelSpec::new(family, args.bandwidth)?, args.d, args.pattern.len(), seed)?
        }
    };
    if let Some(path) = &args.save_map {
        std::fs::write(path, map.to_bytes()).map_err(io_err(path))?;
    }
    let z = map.encode(&args.pattern)?;
    let text = match format {
        Format::Tsv => z.as_slice().iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\t"),
        Format::Json => serde_json::to_string(z.as_slice())?,
    };
    writeln!(out, "{text}").map_err(io_err("stdout"))
}

/// Execute a parsed command, printing its summary to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> BenchResult<()> {
    let cfg = load_config(cli)?;
    let text = match &cli.command {
        Command::Encode(args) => return encode(args, cfg.seed, cli.format, out),
        Command::Synthetic | Command::Dataset => {
            let report = if matches!(cli.command, Command::Synthetic) {
                run_synthetic(&cfg)?
            } else {
                run_dataset(&cfg)?
            };
            if let Some(dir) = &cli.out {
                write_run(&report, dir)?;
            }
            match cli.format {
                Format::Tsv => report_tsv(&report),
                Format::Json => serde_json::to_string_pretty(&summary_json(&report))?,
            }
        }
        Command::Regret => {
            let run = run_regret(&cfg)?;
            if let Some(dir) = &cli.out {
                write_regret(&run, dir)?;
            }
            match cli.format {
                Format::Tsv => regret_tsv(&run),
                Format::Json => serde_json::to_string_pretty(&run)?,
            }
        }
        Command::BenchNewnode => {
            let rows = bench_newnode(&cfg)?;
            if let Some(dir) = &cli.out {
                write_newnode(&rows, &cfg.echo(), dir)?;
            }
            match cli.format {
                Format::Tsv => newnode_tsv(&rows),
                Format::Json => serde_json::to_string_pretty(&rows)?,
            }
        }
    };
    write!(out, "{text}").map_err(io_err("stdout"))?;
    if !text.ends_with('\n') {
        writeln!(out).map_err(io_err("stdout"))?;
    }
    Ok(())
}

/// Parse arguments and run; returns the process exit code. Usage and
/// configuration errors exit with 2, runtime failures with 1.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    match execute(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                BenchError::Config(_) => 2,
                _ => 1,
            }
        }
    }
}
