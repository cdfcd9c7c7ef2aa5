use std::collections::BTreeSet;
use std::fs::File;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeDelta, Utc};
use clap::Args;
use serde::{Deserialize, Serialize};

use super::blocklist_cmd::load_filter;
use super::{figure_export, parse_duration, write_json, CliError, Config, Outcome};
use crate::analytics::{agent_histogram, extract_ips, intersect_report, peer_ip_map, unreachable_fraction, IntersectionReport};
use crate::blocklist::{ConnectionGate, GatedTransport};
use crate::crawler::{crawl_with_stats, read_snapshot, write_snapshot, CrawlConfig, CrawlSnapshot, CrawlStats};
use crate::intel::{
    attribute_histogram, campaign_stats, classify_snapshot, jarm_clusters, neighbor_malice, sinkhole_stats,
    FixtureProvider, IntelCache, IntelProvider, IntelVerdict, NeighborMalice, RetryPolicy, SinkholeStats,
    SpamhausClient, VirusTotalClient,
};
use crate::kad::tcp::TcpTransport;
use crate::kad::{KeyTable, Multiaddr, PeerId, Transport};
use crate::netsim::{apply_churn, generate_network_with, ChurnModel, NetworkParams, SimNetwork, SimTransport};

#[derive(Debug, Args)]
pub struct CrawlArgs {
    /// Bootstrap multiaddresses ending in /p2p/<peer id>.
    #[arg(long, num_args = 1..)]
    pub bootstrap: Vec<String>,
    /// Snapshot directory (one subdirectory per crawl with --repeat).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_cpl: Option<u32>,
    /// Sessions open at once.
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Number of consecutive crawls.
    #[arg(long)]
    pub repeat: Option<u32>,
    /// Pause between the starts of consecutive crawls, e.g. 240s.
    #[arg(long, value_parser = parse_duration)]
    pub interval: Option<Duration>,
    /// Crawl a simulated network descriptor instead of the live network;
    /// intervals then advance the simulated clock.
    #[arg(long, value_name = "NETWORK_JSON")]
    pub sim: Option<PathBuf>,
    /// Never dial IPs listed in this blocklist blob.
    #[arg(long, value_name = "BLOB")]
    pub gate: Option<PathBuf>,
    /// JSON-lines log of every gate decision.
    #[arg(long, requires = "gate")]
    pub gate_log: Option<PathBuf>,
    /// Cache file for the query-key table.
    #[arg(long)]
    pub key_table: Option<PathBuf>,
}

fn parse_bootstrap(s: &str) -> Result<(PeerId, Multiaddr), CliError> {
    let addr: Multiaddr = s
        .parse()
        .map_err(|e| CliError::usage(format!("bootstrap address {s:?}: {e}")))?;
    let peer = addr
        .peer_id()
        .cloned()
        .ok_or_else(|| CliError::usage(format!("bootstrap address {s:?} lacks /p2p/<peer id>")))?;
    Ok((peer, addr.without_peer_id()))
}

fn load_sim(path: &Path) -> Result<SimNetwork, CliError> {
    SimNetwork::load(path).map_err(|e| CliError::new("E_IO", format!("{}: {e}", path.display())))
}

fn crawl_via<T: Transport>(
    transport: &T,
    config: &CrawlConfig,
    keys: &KeyTable,
) -> Result<(CrawlSnapshot, CrawlStats), CliError> {
    crawl_with_stats(config, transport, keys).map_err(|e| CliError::new("E_CRAWL", e.to_string()))
}

pub(crate) fn crawl(args: CrawlArgs, config: &mut Config) -> Result<Outcome, CliError> {
    let c = &mut config.crawl;
    if !args.bootstrap.is_empty() {
        c.bootstrap = args.bootstrap.clone();
    }
    c.max_cpl = args.max_cpl.unwrap_or(c.max_cpl);
    c.concurrency = args.concurrency.unwrap_or(c.concurrency);
    c.repeat = args.repeat.unwrap_or(c.repeat);
    if let Some(i) = args.interval {
        c.interval_secs = i.as_secs_f64();
    }
    if args.key_table.is_some() {
        c.key_table = args.key_table.clone();
    }
    let c = c.clone();
    if c.repeat == 0 {
        return Err(CliError::usage("--repeat must be at least 1"));
    }
    let sim = args.sim.as_deref().map(load_sim).transpose()?.map(Arc::new);
    let mut bootstrap_peers = c.bootstrap.iter().map(|s| parse_bootstrap(s)).collect::<Result<Vec<_>, _>>()?;
    if bootstrap_peers.is_empty() {
        match &sim {
            Some(net) => bootstrap_peers = net.bootstrap(3),
            None => return Err(CliError::usage("no bootstrap peers; pass --bootstrap or set crawl.bootstrap")),
        }
    }
    let crawl_config = CrawlConfig {
        bootstrap_peers,
        max_concurrent_sessions: c.concurrency,
        dial_timeout: Duration::from_secs_f64(c.dial_timeout_secs),
        max_cpl: c.max_cpl,
        stop_rule: c.stop_rule,
        public_addresses_only: sim.is_none(),
    };
    let keys = match &c.key_table {
        Some(p) => KeyTable::load_or_build(p, c.key_seed, c.key_pool),
        None => KeyTable::build(c.key_seed, c.key_pool),
    }
    .map_err(|e| CliError::new("E_KEYTABLE", e.to_string()))?;
    let gate = match &args.gate {
        Some(blob) => {
            let mut g = ConnectionGate::new(load_filter(blob)?);
            if let Some(log) = &args.gate_log {
                let f = File::create(log).map_err(|e| CliError::io(log, e))?;
                g = g.with_sink(Box::new(f));
            }
            Some(Arc::new(g))
        }
        None => None,
    };
    let tcp = TcpTransport {
        dial_timeout: Duration::from_secs_f64(c.dial_timeout_secs),
        rpc_timeout: Duration::from_secs_f64(c.rpc_timeout_secs),
        kad_protocol: c.kad_protocol.clone(),
        identify_protocol: c.identify_protocol.clone(),
    };

    let mut outcome = Outcome::new().seed("key_table", c.key_seed);
    if let Some(p) = &args.sim {
        outcome = outcome.input(p);
    }
    if let Some(p) = &args.gate {
        outcome = outcome.input(p);
    }
    outcome = outcome.output(&args.out);
    for i in 0..c.repeat {
        let began = Instant::now();
        let at_hours = f64::from(i) * c.interval_secs / 3600.0;
        let (mut snap, stats) = match (&sim, &gate) {
            (Some(net), None) => crawl_via(&SimTransport::new(net.clone()).at(at_hours), &crawl_config, &keys)?,
            (Some(net), Some(g)) => crawl_via(
                &GatedTransport::new(SimTransport::new(net.clone()).at(at_hours), g.clone()),
                &crawl_config,
                &keys,
            )?,
            (None, None) => crawl_via(&tcp, &crawl_config, &keys)?,
            (None, Some(g)) => crawl_via(&GatedTransport::new(tcp.clone(), g.clone()), &crawl_config, &keys)?,
        };
        if sim.is_some() {
            snap.started_at = DateTime::UNIX_EPOCH + TimeDelta::milliseconds((at_hours * 3_600_000.0) as i64);
            snap.finished_at = snap.started_at;
        }
        let dir = if c.repeat == 1 {
            args.out.clone()
        } else {
            args.out.join(format!("crawl-{:04}", i + 1))
        };
        write_snapshot(&snap, &dir).map_err(|e| CliError::new("E_IO", e.to_string()))?;
        println!(
            "{}: {} peers, {} reachable, {} edges, {} dials",
            dir.display(),
            snap.peers.len(),
            snap.reachable_count(),
            snap.edges.len(),
            stats.dials
        );
        if sim.is_none() && i + 1 < c.repeat {
            let pause = Duration::from_secs_f64(c.interval_secs).saturating_sub(began.elapsed());
            std::thread::sleep(pause);
        }
    }
    if let Some(g) = &gate {
        println!("gate: {} denied, {} allowed", g.denied(), g.allowed());
    }
    Ok(outcome)
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `none` or `default`.
    #[arg(long)]
    pub churn: Option<String>,
    /// Bucket size.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub undialable: Option<f64>,
    #[arg(long)]
    pub unresponsive: Option<f64>,
    /// Simulated span covered by the churn schedule.
    #[arg(long)]
    pub duration_hours: Option<f64>,
    /// Output directory; the descriptor is written to network.json.
    #[arg(long)]
    pub out: PathBuf,
}

pub(crate) fn sim(args: SimArgs, config: &mut Config) -> Result<Outcome, CliError> {
    let s = &mut config.sim;
    s.nodes = args.nodes.unwrap_or(s.nodes);
    s.seed = args.seed.unwrap_or(s.seed);
    s.k = args.k.unwrap_or(s.k);
    s.undialable_fraction = args.undialable.unwrap_or(s.undialable_fraction);
    s.unresponsive_fraction = args.unresponsive.unwrap_or(s.unresponsive_fraction);
    s.duration_hours = args.duration_hours.unwrap_or(s.duration_hours);
    if let Some(c) = args.churn {
        s.churn = c;
    }
    let s = s.clone();
    let churn = match s.churn.as_str() {
        "none" => None,
        "default" => Some(ChurnModel::default()),
        other => return Err(CliError::usage(format!("--churn must be none or default, not {other:?}"))),
    };
    if s.nodes == 0 || s.k == 0 {
        return Err(CliError::usage("--nodes and --k must be positive"));
    }
    for f in [s.undialable_fraction, s.unresponsive_fraction] {
        if !(0.0..=1.0).contains(&f) {
            return Err(CliError::usage("fractions must lie in [0, 1]"));
        }
    }
    if churn.is_some() && s.duration_hours <= 0.0 {
        return Err(CliError::usage("--duration-hours must be positive"));
    }
    let mut params = NetworkParams::new(s.nodes, s.k, s.seed);
    params.undialable_fraction = s.undialable_fraction;
    params.unresponsive_fraction = s.unresponsive_fraction;
    let mut net = generate_network_with(&params);
    if churn.is_some() {
        net = apply_churn(&net, s.duration_hours, churn);
    }
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let path = args.out.join("network.json");
    net.save(&path)
        .map_err(|e| CliError::new("E_IO", format!("{}: {e}", path.display())))?;
    println!("{}: {} nodes", path.display(), net.len());
    Ok(Outcome::new().output(&args.out).seed("network", s.seed))
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Snapshot directories; 2 or 3 also yield an overlap report.
    #[arg(long, alias = "snapshot", num_args = 1.., required = true)]
    pub snapshots: Vec<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
    /// Agents kept per snapshot.
    #[arg(long)]
    pub top: Option<usize>,
    /// Keep agent subversions apart instead of merging them into `*.*`.
    #[arg(long)]
    pub no_merge: bool,
    /// Also export CSV tables into this directory.
    #[arg(long)]
    pub figures: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSummary {
    pub label: String,
    pub path: PathBuf,
    pub peers: usize,
    pub reachable: usize,
    pub ip_count: usize,
    pub unreachable_fraction: Option<f64>,
    pub agents: Vec<(String, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub snapshots: Vec<SnapshotSummary>,
    pub intersection: Option<IntersectionReport>,
}

fn label_of(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_snapshots(paths: &[PathBuf]) -> Result<Vec<CrawlSnapshot>, CliError> {
    paths
        .iter()
        .map(|p| read_snapshot(p).map_err(|e| CliError::new("E_IO", e.to_string())))
        .collect()
}

fn export_figures(report: &impl Serialize, dir: &Option<PathBuf>, outcome: Outcome) -> Result<Outcome, CliError> {
    let Some(dir) = dir else { return Ok(outcome) };
    let value = serde_json::to_value(report).expect("report serializes");
    figure_export(&value, &[], dir)?;
    Ok(outcome.output(dir))
}

pub(crate) fn analyze(args: AnalyzeArgs, config: &mut Config) -> Result<Outcome, CliError> {
    let a = &mut config.analyze;
    a.top_n = args.top.unwrap_or(a.top_n);
    if args.no_merge {
        a.merge_subversions = false;
    }
    let a = a.clone();
    let snaps = load_snapshots(&args.snapshots)?;
    let mut sets = Vec::new();
    let mut summaries = Vec::new();
    for (path, snap) in args.snapshots.iter().zip(&snaps) {
        let label = label_of(path);
        let ips = extract_ips(snap, &label);
        summaries.push(SnapshotSummary {
            label,
            path: path.clone(),
            peers: snap.peers.len(),
            reachable: snap.reachable_count(),
            ip_count: ips.len(),
            unreachable_fraction: unreachable_fraction(snap).ok(),
            agents: agent_histogram(snap, Some(a.top_n), a.merge_subversions),
        });
        sets.push(ips);
    }
    let intersection = (2..=3).contains(&sets.len()).then(|| intersect_report(&sets).expect("arity checked"));
    let report = AnalyzeReport {
        snapshots: summaries,
        intersection,
    };
    write_json(&args.report, &report)?;
    for s in &report.snapshots {
        println!("{}: {} IPs, {} peers", s.label, s.ip_count, s.peers);
    }
    let mut outcome = Outcome::new();
    for p in &args.snapshots {
        outcome = outcome.input(p);
    }
    export_figures(&report, &args.figures, outcome.output(&args.report))
}

#[derive(Debug, Args)]
pub struct IntelArgs {
    /// Snapshot directories; 2 or 3 also yield a malicious-overlap report.
    #[arg(long = "snapshot", alias = "snapshots", num_args = 1.., required = true)]
    pub snapshots: Vec<PathBuf>,
    /// Comma-separated `fixture:<path>`, `virustotal`, `spamhaus`.
    #[arg(long, value_delimiter = ',')]
    pub providers: Vec<String>,
    #[arg(long)]
    pub report: PathBuf,
    /// Persistent verdict cache file.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub ttl_hours: Option<i64>,
    /// IPs queried at once.
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Rows kept in port, service and OS histograms.
    #[arg(long)]
    pub top: Option<usize>,
    /// Also export CSV tables into this directory.
    #[arg(long)]
    pub figures: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlClassification {
    pub label: String,
    pub total: usize,
    pub malicious: usize,
    pub benign: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntelReport {
    pub crawls: Vec<CrawlClassification>,
    pub malicious_intersection: Option<IntersectionReport>,
    pub jarm_clusters: Vec<(String, usize)>,
    pub sinkhole: SinkholeStats,
    pub campaigns: Vec<(String, usize)>,
    pub ports: Vec<(String, usize)>,
    pub services: Vec<(String, usize)>,
    pub os: Vec<(String, usize)>,
    pub neighbor_malice: NeighborMalice,
    /// IPs answered by providers rather than the cache.
    pub fetched: usize,
    pub verdicts: Vec<IntelVerdict>,
}

fn env_key(name: &str) -> Result<String, CliError> {
    let var = format!("OBS_PROVIDER_{}_KEY", name.to_ascii_uppercase());
    std::env::var(&var).map_err(|_| CliError::new("E_CONFIG", format!("provider {name} needs {var}")))
}

fn env_url(name: &str, default: &str) -> String {
    std::env::var(format!("OBS_PROVIDER_{}_URL", name.to_ascii_uppercase())).unwrap_or_else(|_| default.to_string())
}

fn build_provider(spec: &str) -> Result<(Box<dyn IntelProvider>, Option<PathBuf>), CliError> {
    if let Some(path) = spec.strip_prefix("fixture:") {
        let path = PathBuf::from(path);
        let name = path.file_stem().map_or("fixture".into(), |s| s.to_string_lossy().into_owned());
        let p = FixtureProvider::load(name, &path)
            .map_err(|e| CliError::new("E_PROVIDER", format!("{}: {e}", path.display())))?;
        return Ok((Box::new(p), Some(path)));
    }
    match spec {
        "virustotal" => Ok((
            Box::new(VirusTotalClient::new(
                env_url("virustotal", VirusTotalClient::DEFAULT_BASE_URL),
                env_key("virustotal")?,
            )),
            None,
        )),
        "spamhaus" => Ok((
            Box::new(SpamhausClient::new(
                env_url("spamhaus", SpamhausClient::DEFAULT_BASE_URL),
                env_key("spamhaus")?,
            )),
            None,
        )),
        other => Err(CliError::usage(format!(
            "unknown provider {other:?}; expected fixture:<path>, virustotal or spamhaus"
        ))),
    }
}

pub(crate) fn intel(args: IntelArgs, config: &mut Config) -> Result<Outcome, CliError> {
    let s = &mut config.intel;
    if !args.providers.is_empty() {
        s.providers = args.providers.clone();
    }
    if args.cache.is_some() {
        s.cache = args.cache.clone();
    }
    s.ttl_hours = args.ttl_hours.unwrap_or(s.ttl_hours);
    s.parallelism = args.parallelism.unwrap_or(s.parallelism);
    s.top_n = args.top.unwrap_or(s.top_n);
    let s = s.clone();
    if s.providers.is_empty() {
        return Err(CliError::usage("no providers; pass --providers or set intel.providers"));
    }
    if s.parallelism == 0 {
        return Err(CliError::usage("--parallelism must be at least 1"));
    }
    let mut outcome = Outcome::new();
    let mut providers = Vec::new();
    for spec in &s.providers {
        let (p, input) = build_provider(spec)?;
        if let Some(i) = input {
            outcome = outcome.input(i);
        }
        providers.push(p);
    }
    let snaps = load_snapshots(&args.snapshots)?;
    let sets: Vec<_> = args
        .snapshots
        .iter()
        .zip(&snaps)
        .map(|(p, snap)| extract_ips(snap, label_of(p)))
        .collect();
    let all: Vec<IpAddr> = sets
        .iter()
        .flat_map(|s| s.ips.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let ttl = TimeDelta::hours(s.ttl_hours);
    let cache = match &s.cache {
        Some(p) => IntelCache::open(p, ttl).map_err(|e| CliError::new("E_IO", format!("{}: {e}", p.display())))?,
        None => IntelCache::in_memory(ttl),
    };
    let policy = RetryPolicy {
        max_attempts: s.max_attempts,
        ..RetryPolicy::default()
    };
    let refs: Vec<&dyn IntelProvider> = providers.iter().map(|p| p.as_ref()).collect();
    let resolution = cache.resolve(&all, &refs, &policy, s.parallelism, Utc::now());
    cache.flush().map_err(|e| CliError::new("E_IO", e.to_string()))?;
    if let Some((ip, err)) = resolution.failures.first() {
        return Err(CliError::new(
            "E_PROVIDER",
            format!("{} IPs unresolved; first {ip}: {err}", resolution.failures.len()),
        ));
    }
    let verdicts = resolution.verdicts;

    let mut crawls = Vec::new();
    let mut malicious_sets = Vec::new();
    for set in &sets {
        let c = classify_snapshot(set, &verdicts).map_err(|e| CliError::new("E_PROVIDER", e.to_string()))?;
        crawls.push(CrawlClassification {
            label: set.label.clone(),
            total: set.len(),
            malicious: c.malicious.len(),
            benign: c.benign.len(),
        });
        let mut m = c.malicious;
        m.label = set.label.clone();
        malicious_sets.push(m);
    }
    let histogram = |attr: &str| {
        attribute_histogram(verdicts.values(), attr, Some(s.top_n)).expect("attribute names are fixed")
    };
    let edges: Vec<(PeerId, PeerId)> = snaps.iter().flat_map(|s| s.edges.iter().cloned()).collect();
    let report = IntelReport {
        crawls,
        malicious_intersection: (2..=3)
            .contains(&malicious_sets.len())
            .then(|| intersect_report(&malicious_sets).expect("arity checked")),
        jarm_clusters: jarm_clusters(verdicts.values(), s.min_jarm_cluster),
        sinkhole: sinkhole_stats(verdicts.values()),
        campaigns: campaign_stats(verdicts.values()),
        ports: histogram("port"),
        services: histogram("service"),
        os: histogram("os"),
        neighbor_malice: neighbor_malice(&edges, &peer_ip_map(&snaps), &verdicts),
        fetched: resolution.fetched,
        verdicts: verdicts.into_values().collect(),
    };
    write_json(&args.report, &report)?;
    for c in &report.crawls {
        println!("{}: {} malicious, {} benign", c.label, c.malicious, c.benign);
    }
    for p in &args.snapshots {
        outcome = outcome.input(p);
    }
    export_figures(&report, &args.figures, outcome.output(&args.report))
}
