//! The `observatory` command line.
//!
//! Exit codes: 0 on success, 1 on operational errors, 2 on usage errors.
//! Errors are printed to stderr as `error[E_CODE]: message`.

mod blocklist_cmd;
mod config;
mod content_cmd;
mod figures;
mod network_cmd;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use config::{
    AnalyzeSettings, AuditSettings, BlocklistSettings, Config, CrawlSettings, IntelSettings, SimSettings,
};
pub use figures::{figure_export, ExportError, Figure, FIGURES};
pub use network_cmd::{AnalyzeReport, CrawlClassification, IntelReport, SnapshotSummary};

/// A failed command: a stable machine-readable code and a message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("E_USAGE", message)
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self::new("E_IO", format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        if self.code == "E_USAGE" {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ExportError> for CliError {
    fn from(e: ExportError) -> Self {
        let code = match e {
            ExportError::MissingSection(_) => "E_MISSING_SECTION",
            ExportError::Malformed { .. } => "E_FORMAT",
            ExportError::UnknownFigure(_) => "E_USAGE",
        };
        CliError::new(code, e.to_string())
    }
}

/// Provenance of one command run, written next to its primary output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Config,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub tool_version: String,
    pub seeds: BTreeMap<String, u64>,
}

/// `<dir>/manifest.json` for directory outputs, `<file>.manifest.json`
/// otherwise.
pub fn manifest_path(primary_output: &Path) -> PathBuf {
    if primary_output.is_dir() {
        primary_output.join("manifest.json")
    } else {
        let mut name = primary_output.file_name().map(OsString::from).unwrap_or_default();
        name.push(".manifest.json");
        primary_output.with_file_name(name)
    }
}

/// What a command hands back for its manifest.
#[derive(Debug, Default)]
pub(crate) struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub seeds: BTreeMap<String, u64>,
}

impl Outcome {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn input(mut self, p: impl Into<PathBuf>) -> Self {
        self.inputs.push(p.into());
        self
    }

    pub fn output(mut self, p: impl Into<PathBuf>) -> Self {
        self.outputs.push(p.into());
        self
    }

    pub fn seed(mut self, name: &str, v: u64) -> Self {
        self.seeds.insert(name.to_string(), v);
        self
    }
}

#[derive(Debug, Parser)]
#[command(name = "observatory", version, about = "Enumerate, profile and harden Kademlia-based IPFS-style networks")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest instead of next to the output.
    #[arg(long, global = true, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// More logging; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enumerate the DHT by bucket extraction.
    Crawl(network_cmd::CrawlArgs),
    /// Generate a simulated network descriptor.
    Sim(network_cmd::SimArgs),
    /// IP sets, overlaps, agents and reachability across snapshots.
    Analyze(network_cmd::AnalyzeArgs),
    /// Threat-intelligence verdicts and statistics for crawled IPs.
    Intel(network_cmd::IntelArgs),
    /// Export CSV tables from an analyze or intel report.
    Figures(FiguresArgs),
    /// Build, query, publish and enforce IP blocklists.
    #[command(subcommand)]
    Blocklist(blocklist_cmd::BlocklistCommand),
    /// Record Bitswap want-lists and fetch what is asked for.
    Monitor(content_cmd::MonitorArgs),
    /// Print the UnixFS root CID of files.
    Cid(content_cmd::CidArgs),
    /// Compute payload CIDs and look up their providers.
    Audit(content_cmd::AuditArgs),
    /// Show the effective configuration.
    Config(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct FiguresArgs {
    /// Report written by `analyze` or `intel`.
    #[arg(long)]
    pub report: PathBuf,
    /// Output directory for the CSV files.
    #[arg(long)]
    pub out: PathBuf,
    /// Figures to export (default: every one the report supports).
    #[arg(long = "figure", value_name = "NAME")]
    pub figures: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Print the merged configuration as TOML.
    #[arg(long)]
    pub show: bool,
}

/// Parses durations such as `15s`, `24h` or `500ms`; bare numbers are
/// seconds.
pub(crate) fn parse_duration(s: &str) -> Result<Duration, String> {
    if let Ok(secs) = s.parse::<f64>() {
        return Duration::try_from_secs_f64(secs).map_err(|e| e.to_string());
    }
    humantime::parse_duration(s).map_err(|e| e.to_string())
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let raw = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&raw).map_err(|e| CliError::new("E_FORMAT", format!("{}: {e}", path.display())))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut raw = serde_json::to_vec_pretty(value).expect("report serializes");
    raw.push(b'\n');
    std::fs::write(path, raw).map_err(|e| CliError::io(path, e))
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.verbose);
    match run(cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Crawl(_) => "crawl",
        Command::Sim(_) => "sim",
        Command::Analyze(_) => "analyze",
        Command::Intel(_) => "intel",
        Command::Figures(_) => "figures",
        Command::Blocklist(b) => b.name(),
        Command::Monitor(_) => "monitor",
        Command::Cid(_) => "cid",
        Command::Audit(_) => "audit",
        Command::Config(_) => "config",
    }
}

fn run(cli: Cli, argv: &[OsString]) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let started_at = Utc::now();
    let name = command_name(&cli.command);
    let outcome = match cli.command {
        Command::Crawl(a) => network_cmd::crawl(a, &mut config)?,
        Command::Sim(a) => network_cmd::sim(a, &mut config)?,
        Command::Analyze(a) => network_cmd::analyze(a, &mut config)?,
        Command::Intel(a) => network_cmd::intel(a, &mut config)?,
        Command::Figures(a) => {
            let report: serde_json::Value = read_json(&a.report)?;
            let written = figure_export(&report, &a.figures, &a.out)?;
            for p in &written {
                println!("{}", p.display());
            }
            Outcome::new().input(&a.report).output(&a.out)
        }
        Command::Blocklist(b) => blocklist_cmd::run(b, &mut config)?,
        Command::Monitor(a) => content_cmd::monitor(a, &mut config)?,
        Command::Cid(a) => content_cmd::cid(a)?,
        Command::Audit(a) => content_cmd::audit(a, &mut config)?,
        Command::Config(a) => {
            if !a.show {
                return Err(CliError::usage("nothing to do; pass --show"));
            }
            print!("{}", config.to_toml());
            Outcome::new()
        }
    };
    let target = match (&cli.manifest, outcome.outputs.first()) {
        (Some(m), _) => m.clone(),
        (None, Some(primary)) => manifest_path(primary),
        (None, None) => return Ok(()),
    };
    let manifest = RunManifest {
        command: name.to_string(),
        argv: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        config,
        inputs: outcome.inputs,
        outputs: outcome.outputs,
        started_at,
        finished_at: Utc::now(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: outcome.seeds,
    };
    write_json(&target, &manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn durations() {
        assert_eq!(parse_duration("15s").unwrap(), Duration::from_secs(15));
        assert_eq!(parse_duration("24h").unwrap(), Duration::from_secs(86400));
        assert_eq!(parse_duration("1.5").unwrap(), Duration::from_millis(1500));
        assert!(parse_duration("soon").is_err());
    }

    #[test]
    fn manifest_locations() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(manifest_path(dir.path()), dir.path().join("manifest.json"));
        assert_eq!(
            manifest_path(&dir.path().join("r.json")),
            dir.path().join("r.json.manifest.json")
        );
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(dispatch(["observatory", "--bogus"]), 2);
        assert_eq!(dispatch(["observatory", "config"]), 2);
        assert_eq!(dispatch(["observatory", "config", "--show"]), 0);
    }
}
