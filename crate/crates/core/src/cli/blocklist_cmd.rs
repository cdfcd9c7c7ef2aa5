use std::io::{self, BufRead, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{TimeDelta, Utc};
use clap::{Args, Subcommand};
use ed25519_dalek::SigningKey;
use rand::RngCore;
use serde_json::{json, Value};

use super::{read_json, write_json, CliError, Config, Outcome};
use crate::blocklist::{
    name_key, pin_blob, publish, signing_key_from_hex, signing_key_to_hex, Blocklist, BloomBlocklist,
    ConnectionGate, GateDecision, IpFilter, PointerRecord, Resolver, BLOOM_MAGIC, IPFS_API_ENV, MAGIC,
};
use crate::intel::{IntelVerdict, VerdictMap};
use crate::kad::Multiaddr;

#[derive(Debug, Subcommand)]
pub enum BlocklistCommand {
    /// Build a blob from the malicious IPs of a verdict file.
    Build(BuildArgs),
    /// Look IPs up in a blob.
    Check(CheckArgs),
    /// Create an Ed25519 publishing key.
    Keygen(KeygenArgs),
    /// Sign a pointer to a blob's CID.
    Publish(PublishArgs),
    /// Verify a pointer and the blob it names.
    Resolve(ResolveArgs),
    /// Gate addresses read from stdin, one per line, printing a JSON decision
    /// for each.
    Gate(GateArgs),
}

impl BlocklistCommand {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            BlocklistCommand::Build(_) => "blocklist build",
            BlocklistCommand::Check(_) => "blocklist check",
            BlocklistCommand::Keygen(_) => "blocklist keygen",
            BlocklistCommand::Publish(_) => "blocklist publish",
            BlocklistCommand::Resolve(_) => "blocklist resolve",
            BlocklistCommand::Gate(_) => "blocklist gate",
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Intel report, verdict array, or map of IP to verdict.
    #[arg(long)]
    pub verdicts: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `sorted` (exact) or `bloom`.
    #[arg(long)]
    pub format: Option<String>,
    /// Bloom false-positive rate.
    #[arg(long)]
    pub fp_rate: Option<f64>,
    #[arg(long)]
    pub bloom_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub blob: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    pub ip: Vec<IpAddr>,
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    /// File receiving the hex secret key.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PublishArgs {
    /// Hex secret key file from `blocklist keygen`.
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long)]
    pub seq: u64,
    /// Sorted blocklist blob to publish.
    #[arg(long)]
    pub blob: PathBuf,
    /// Pointer record output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub validity_hours: Option<i64>,
    /// Also add and pin the blob through the daemon at $OBS_IPFS_API.
    #[arg(long)]
    pub pin: bool,
}

#[derive(Debug, Args)]
pub struct ResolveArgs {
    #[arg(long)]
    pub record: PathBuf,
    /// Trusted publisher name (hex SHA-256 of its public key).
    #[arg(long)]
    pub name: String,
    /// Local copy of the blob the record points to.
    #[arg(long)]
    pub blob: PathBuf,
}

#[derive(Debug, Args)]
pub struct GateArgs {
    #[arg(long)]
    pub blob: PathBuf,
    /// JSON-lines log of decisions.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn format_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::new("E_FORMAT", format!("{}: {e}", path.display()))
}

/// Loads a sorted (`OBSB`) or Bloom (`OBSF`) blob.
pub(crate) fn load_filter(path: &Path) -> Result<Arc<dyn IpFilter>, CliError> {
    let raw = read_bytes(path)?;
    if raw.starts_with(MAGIC) {
        Ok(Arc::new(Blocklist::deserialize(&raw).map_err(|e| format_error(path, e))?))
    } else if raw.starts_with(BLOOM_MAGIC) {
        Ok(Arc::new(BloomBlocklist::deserialize(&raw).map_err(|e| format_error(path, e))?))
    } else {
        Err(format_error(path, "not a blocklist blob"))
    }
}

/// Accepts an intel report, a verdict array or an IP-keyed verdict map.
pub(crate) fn parse_verdicts(raw: Value) -> Result<VerdictMap, String> {
    let list = match raw {
        Value::Object(mut o) if o.contains_key("verdicts") => o.remove("verdicts").expect("checked"),
        other => other,
    };
    match list {
        Value::Array(_) => {
            let v: Vec<IntelVerdict> = serde_json::from_value(list).map_err(|e| e.to_string())?;
            Ok(crate::intel::verdict_map(v))
        }
        Value::Object(_) => serde_json::from_value(list).map_err(|e| e.to_string()),
        _ => Err("expected verdicts as an array or an object".into()),
    }
}

pub(crate) fn run(cmd: BlocklistCommand, config: &mut Config) -> Result<Outcome, CliError> {
    match cmd {
        BlocklistCommand::Build(a) => build(a, config),
        BlocklistCommand::Check(a) => check(a),
        BlocklistCommand::Keygen(a) => keygen(a),
        BlocklistCommand::Publish(a) => publish_cmd(a, config),
        BlocklistCommand::Resolve(a) => resolve(a),
        BlocklistCommand::Gate(a) => gate(a),
    }
}

fn build(a: BuildArgs, config: &mut Config) -> Result<Outcome, CliError> {
    let s = &mut config.blocklist;
    if let Some(f) = a.format {
        s.format = f;
    }
    s.false_positive_rate = a.fp_rate.unwrap_or(s.false_positive_rate);
    s.bloom_seed = a.bloom_seed.unwrap_or(s.bloom_seed);
    let s = s.clone();
    let verdicts = parse_verdicts(read_json(&a.verdicts)?).map_err(|e| format_error(&a.verdicts, e))?;
    let listed: Vec<IpAddr> = verdicts.values().filter(|v| v.malicious).map(|v| v.ip).collect();
    let (blob, summary) = match s.format.as_str() {
        "sorted" => {
            let list = Blocklist::build(listed, Utc::now());
            let summary = format!(
                "{} IPv4 + {} IPv6 entries, {} bytes",
                list.ipv4_entries().len(),
                list.ipv6_entries().len(),
                list.serialized_len()
            );
            (list.serialize(), summary)
        }
        "bloom" => {
            let f = BloomBlocklist::build(listed.iter().copied(), s.false_positive_rate, s.bloom_seed)
                .map_err(|e| CliError::usage(e.to_string()))?;
            let summary = format!("{} items, m={} bits, k={}, {} bytes", listed.len(), f.m_bits(), f.k(), f.size_bytes());
            (f.serialize(), summary)
        }
        other => return Err(CliError::usage(format!("--format must be sorted or bloom, not {other:?}"))),
    };
    std::fs::write(&a.out, &blob).map_err(|e| CliError::io(&a.out, e))?;
    println!("{}: {summary}", a.out.display());
    Ok(Outcome::new()
        .input(&a.verdicts)
        .output(&a.out)
        .seed("bloom", s.bloom_seed))
}

fn check(a: CheckArgs) -> Result<Outcome, CliError> {
    let filter = load_filter(&a.blob)?;
    for ip in a.ip {
        println!("{}", json!({"ip": ip, "listed": filter.is_listed(ip)}));
    }
    Ok(Outcome::new())
}

fn write_secret(path: &Path, contents: &str) -> io::Result<()> {
    let mut opts = std::fs::OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    std::os::unix::fs::OpenOptionsExt::mode(&mut opts, 0o600);
    let mut f = opts.open(path)?;
    writeln!(f, "{contents}")
}

fn keygen(a: KeygenArgs) -> Result<Outcome, CliError> {
    let mut secret = [0u8; 32];
    rand::rng().fill_bytes(&mut secret);
    let key = SigningKey::from_bytes(&secret);
    write_secret(&a.out, &signing_key_to_hex(&key)).map_err(|e| CliError::io(&a.out, e))?;
    println!("{}", name_key(&key.verifying_key()));
    Ok(Outcome::new().output(&a.out))
}

fn publish_cmd(a: PublishArgs, config: &mut Config) -> Result<Outcome, CliError> {
    let s = &mut config.blocklist;
    s.validity_hours = a.validity_hours.unwrap_or(s.validity_hours);
    if s.validity_hours <= 0 {
        return Err(CliError::usage("--validity-hours must be positive"));
    }
    let key_hex = std::fs::read_to_string(&a.key).map_err(|e| CliError::io(&a.key, e))?;
    let key = signing_key_from_hex(&key_hex).ok_or_else(|| format_error(&a.key, "not a 32-byte hex key"))?;
    let list = Blocklist::deserialize(&read_bytes(&a.blob)?).map_err(|e| format_error(&a.blob, e))?;
    let published = publish(&list, &key, a.seq, Utc::now(), TimeDelta::hours(s.validity_hours));
    write_json(&a.out, &published.record)?;
    if a.pin {
        let api = std::env::var(IPFS_API_ENV)
            .map_err(|_| CliError::new("E_CONFIG", format!("--pin needs {IPFS_API_ENV}")))?;
        pin_blob(&api, &published.blob, &published.content_id).map_err(|e| CliError::new("E_NETWORK", e))?;
    }
    println!("{} sequence {} -> {}", published.record.name_key, a.seq, published.content_id);
    Ok(Outcome::new().input(&a.key).input(&a.blob).output(&a.out))
}

fn resolve(a: ResolveArgs) -> Result<Outcome, CliError> {
    let record: PointerRecord = read_json(&a.record)?;
    let list = Resolver::new()
        .resolve(&record, &a.name, |_| std::fs::read(&a.blob).map_err(|e| e.to_string()), Utc::now())
        .map_err(|e| CliError::new("E_VERIFY", e.to_string()))?;
    println!(
        "{}",
        json!({"content_id": record.content_id.to_string(), "sequence": record.sequence, "entries": list.len()})
    );
    Ok(Outcome::new())
}

/// One decision line per input line; unparsable lines are reported and
/// skipped.
pub(crate) fn gate_stream(gate: &ConnectionGate, input: impl BufRead, mut out: impl Write) -> io::Result<usize> {
    let mut denied = 0;
    for line in input.lines() {
        let line = line?;
        let item = line.trim();
        if item.is_empty() {
            continue;
        }
        let decision = if let Ok(ip) = item.parse::<IpAddr>() {
            Some((Some(ip), gate.check_ip(ip)))
        } else if let Ok(addr) = item.parse::<Multiaddr>() {
            Some((addr.ip(), gate.gate(&addr)))
        } else {
            None
        };
        match decision {
            Some((ip, d)) => {
                denied += usize::from(d == GateDecision::Deny);
                writeln!(out, "{}", json!({"input": item, "ip": ip, "decision": d}))?;
            }
            None => log::warn!("skipping unparsable gate input {item:?}"),
        }
        out.flush()?;
    }
    Ok(denied)
}

fn gate(a: GateArgs) -> Result<Outcome, CliError> {
    let mut g = ConnectionGate::new(load_filter(&a.blob)?);
    if let Some(log) = &a.log {
        let f = std::fs::File::create(log).map_err(|e| CliError::io(log, e))?;
        g = g.with_sink(Box::new(f));
    }
    gate_stream(&g, io::stdin().lock(), io::stdout().lock()).map_err(|e| CliError::new("E_IO", e.to_string()))?;
    Ok(Outcome::new())
}
