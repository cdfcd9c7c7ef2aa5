use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::Args;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{parse_duration, write_json, CliError, Config, Outcome};
use crate::content::{
    cid_of_file, find_providers, monitor as run_monitor, payload_sets, torrent_audit, FixedScore, NsfwClassifier,
    WantType,
};
use crate::kad::tcp::TcpTransport;
use crate::kad::{Multiaddr, PeerId};
use crate::netsim::{SimContentNetwork, SimNetwork, SimTransport};

#[derive(Debug, Args)]
pub struct MonitorArgs {
    /// How long to listen, e.g. 24h.
    #[arg(long, value_parser = parse_duration)]
    pub duration: Option<Duration>,
    /// Connection count to maintain.
    #[arg(long)]
    pub connections: Option<usize>,
    /// Per-CID fetch deadline, e.g. 15s.
    #[arg(long, value_parser = parse_duration)]
    pub deadline: Option<Duration>,
    /// Newline-delimited JSON event log.
    #[arg(long)]
    pub out: PathBuf,
    /// Monitor the peers of a simulated network descriptor.
    #[arg(long, value_name = "NETWORK_JSON")]
    pub sim: Option<PathBuf>,
    /// With --sim: directory whose files are served by random peers and wanted by others.
    #[arg(long, requires = "sim", value_name = "DIR")]
    pub serve: Option<PathBuf>,
    /// With --sim: additional wants for content nobody serves.
    #[arg(long, requires = "sim", default_value_t = 0)]
    pub unseeded: usize,
    /// With --sim: seed for placing content and wants.
    #[arg(long, requires = "sim", default_value_t = 1)]
    pub seed: u64,
    /// Score every decodable image with this constant instead of a model.
    #[arg(long)]
    pub nsfw_score: Option<f32>,
}

fn regular_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

pub(crate) fn monitor(a: MonitorArgs, config: &mut Config) -> Result<Outcome, CliError> {
    let m = &mut config.monitor;
    m.duration = a.duration.unwrap_or(m.duration);
    m.target_connections = a.connections.unwrap_or(m.target_connections);
    m.fetch_deadline = a.deadline.unwrap_or(m.fetch_deadline);
    let mcfg = m.clone();
    let Some(sim_path) = &a.sim else {
        return Err(CliError::new(
            "E_UNSUPPORTED",
            "live Bitswap monitoring needs a libp2p stream transport, which this build lacks; use --sim",
        ));
    };
    let net = SimNetwork::load(sim_path).map_err(|e| CliError::new("E_IO", format!("{}: {e}", sim_path.display())))?;
    let dialable: Vec<PeerId> = net.nodes.iter().filter(|n| n.dialable).map(|n| n.peer_id.clone()).collect();
    if dialable.len() < 2 {
        return Err(CliError::usage("the simulated network needs at least two dialable peers"));
    }
    let mut content = SimContentNetwork::from_network(&net, None);
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    let window = (mcfg.duration / 2).max(Duration::from_millis(1));
    let mut outcome = Outcome::new().input(sim_path).seed("placement", a.seed);
    let mut wants = Vec::new();
    if let Some(dir) = &a.serve {
        for path in regular_files(dir)? {
            let data = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
            let provider = &dialable[rng.random_range(0..dialable.len())];
            wants.push(content.serve_file(provider, &data));
        }
        outcome = outcome.input(dir);
    }
    for _ in 0..a.unseeded {
        let mut junk = [0u8; 64];
        rng.fill_bytes(&mut junk);
        wants.push(cid_of_file(&junk));
    }
    for cid in wants {
        let wanter = &dialable[rng.random_range(0..dialable.len())];
        let at = window.mul_f64(rng.random::<f64>());
        content.schedule_want(wanter, at, cid, WantType::WantHave);
    }

    let fixed = a.nsfw_score.map(FixedScore);
    let classifier = fixed.as_ref().map(|c| c as &dyn NsfwClassifier);
    let log = File::create(&a.out).map_err(|e| CliError::io(&a.out, e))?;
    let summary = run_monitor(&content, &mcfg, classifier, BufWriter::new(log))
        .map_err(|e| CliError::new("E_MONITOR", e.to_string()))?;
    let mut summary_path = a.out.clone().into_os_string();
    summary_path.push(".summary.json");
    let summary_path = PathBuf::from(summary_path);
    write_json(&summary_path, &summary)?;
    println!(
        "{} wants, {} fetches ({} complete, {} timed out), {} files",
        summary.want_events, summary.fetches, summary.complete, summary.timeout, summary.files_total
    );
    Ok(outcome.output(&a.out).output(summary_path))
}

#[derive(Debug, Args)]
pub struct CidArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    /// Print CIDv1 (base32) instead of CIDv0.
    #[arg(long)]
    pub v1: bool,
}

pub(crate) fn cid(a: CidArgs) -> Result<Outcome, CliError> {
    for path in &a.files {
        let data = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let cid = cid_of_file(&data);
        let cid = if a.v1 { cid.to_v1() } else { cid };
        println!("{cid}  {}", path.display());
    }
    Ok(Outcome::new())
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Payload directory; each subdirectory is one torrent's file set.
    #[arg(long)]
    pub files: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Look providers up in a simulated network descriptor.
    #[arg(long, value_name = "NETWORK_JSON", conflicts_with = "bootstrap")]
    pub sim: Option<PathBuf>,
    /// Live DHT bootstrap multiaddresses ending in /p2p/<peer id>.
    #[arg(long, num_args = 1..)]
    pub bootstrap: Vec<String>,
    /// Per-CID lookup deadline.
    #[arg(long, value_parser = parse_duration)]
    pub deadline: Option<Duration>,
}

fn bootstrap_peers(addrs: &[String]) -> Result<Vec<(PeerId, Multiaddr)>, CliError> {
    addrs
        .iter()
        .map(|s| {
            let addr: Multiaddr = s.parse().map_err(|e| CliError::usage(format!("{s:?}: {e}")))?;
            let peer = addr
                .peer_id()
                .cloned()
                .ok_or_else(|| CliError::usage(format!("{s:?} lacks /p2p/<peer id>")))?;
            Ok((peer, addr.without_peer_id()))
        })
        .collect()
}

pub(crate) fn audit(a: AuditArgs, config: &mut Config) -> Result<Outcome, CliError> {
    if let Some(d) = a.deadline {
        config.audit.deadline_secs = d.as_secs_f64();
    }
    let deadline = Duration::from_secs_f64(config.audit.deadline_secs);
    let sets = payload_sets(&a.files).map_err(|e| CliError::io(&a.files, e))?;
    let mut outcome = Outcome::new().input(&a.files);
    let report = if let Some(sim) = &a.sim {
        let net = SimNetwork::load(sim).map_err(|e| CliError::new("E_IO", format!("{}: {e}", sim.display())))?;
        let boot = net.bootstrap(3);
        let transport = SimTransport::new(Arc::new(net));
        outcome = outcome.input(sim);
        torrent_audit(&sets, &mut |cid| find_providers(cid, &transport, &boot, deadline))
    } else if !a.bootstrap.is_empty() {
        let boot = bootstrap_peers(&a.bootstrap)?;
        let transport = TcpTransport {
            kad_protocol: config.crawl.kad_protocol.clone(),
            identify_protocol: config.crawl.identify_protocol.clone(),
            ..TcpTransport::default()
        };
        torrent_audit(&sets, &mut |cid| find_providers(cid, &transport, &boot, deadline))
    } else {
        return Err(CliError::usage("pass --sim <network.json> or --bootstrap <multiaddr>..."));
    };
    write_json(&a.out, &report)?;
    println!("{}", report.summary);
    Ok(outcome.output(&a.out))
}
