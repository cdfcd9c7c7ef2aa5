//! Breadth-first enumeration of a Kademlia network from bootstrap peers.
//!
//! Each reachable peer is identified and then asked FIND_NODE with
//! precomputed keys for buckets `0..=max_cpl`, which empties its routing
//! table bucket by bucket. Every peer id seen in any response is dialed
//! exactly once.

mod snapshot;

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use chrono::Utc;
use crossbeam_channel::unbounded;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::is_public_ip;
use crate::kad::{KeyTable, Multiaddr, PeerId, PeerSession, RpcError, Transport};

pub use snapshot::{
    read_snapshot, write_snapshot, CrawlSnapshot, PeerSnapshot, SnapshotError, EDGES_FILE, META_FILE, PEERS_FILE,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrawlConfig {
    pub bootstrap_peers: Vec<(PeerId, Multiaddr)>,
    pub max_concurrent_sessions: usize,
    #[serde(with = "crate::serde_secs")]
    pub dial_timeout: Duration,
    pub max_cpl: u32,
    /// Consecutive buckets yielding nothing new before a peer is abandoned.
    pub stop_rule: u32,
    /// Dial only addresses with a public IP. Relayed addresses are never
    /// dialed.
    pub public_addresses_only: bool,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        CrawlConfig {
            bootstrap_peers: Vec::new(),
            max_concurrent_sessions: 500,
            dial_timeout: Duration::from_secs(10),
            max_cpl: 15,
            stop_rule: 2,
            public_addresses_only: true,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CrawlError {
    #[error("invalid crawl configuration: {0}")]
    InvalidConfig(String),
    #[error("none of the {0} bootstrap peers could be reached")]
    AllBootstrapsUnreachable(usize),
}

/// Per-crawl counters that do not belong in the snapshot itself.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CrawlStats {
    pub dials: usize,
    pub sessions: usize,
    pub find_node_requests: usize,
    pub rpc_failures: usize,
    /// Buckets skipped because the key table had no key for that prefix.
    pub skipped_buckets: usize,
}

struct Frontier {
    queue: VecDeque<PeerId>,
    in_flight: usize,
}

struct Shared<'a> {
    frontier: Mutex<Frontier>,
    wake: Condvar,
    /// Authoritative dedup set: a peer is enqueued only by the thread that
    /// inserted it.
    visited: Mutex<HashSet<PeerId>>,
    addresses: Mutex<HashMap<PeerId, Vec<Multiaddr>>>,
    config: &'a CrawlConfig,
    keys: &'a KeyTable,
}

struct PeerOutcome {
    peer: PeerId,
    reachable: bool,
    agent_version: String,
    listen_addrs: Vec<Multiaddr>,
    neighbors: Vec<PeerId>,
    find_node_requests: usize,
    rpc_failures: usize,
    skipped_buckets: usize,
}

pub fn crawl<T: Transport>(config: &CrawlConfig, transport: &T, keys: &KeyTable) -> Result<CrawlSnapshot, CrawlError> {
    crawl_with_stats(config, transport, keys).map(|(s, _)| s)
}

pub fn crawl_with_stats<T: Transport>(
    config: &CrawlConfig,
    transport: &T,
    keys: &KeyTable,
) -> Result<(CrawlSnapshot, CrawlStats), CrawlError> {
    if config.bootstrap_peers.is_empty() {
        return Err(CrawlError::InvalidConfig("no bootstrap peers".into()));
    }
    if config.max_concurrent_sessions == 0 {
        return Err(CrawlError::InvalidConfig("max_concurrent_sessions must be at least 1".into()));
    }
    let started_at = Utc::now();

    let mut queue = VecDeque::new();
    let mut visited = HashSet::new();
    let mut addresses: HashMap<PeerId, Vec<Multiaddr>> = HashMap::new();
    for (peer, addr) in &config.bootstrap_peers {
        merge_addrs(addresses.entry(peer.clone()).or_default(), std::slice::from_ref(addr));
        if visited.insert(peer.clone()) {
            queue.push_back(peer.clone());
        }
    }
    let bootstraps: HashSet<PeerId> = visited.clone();

    let shared = Shared {
        frontier: Mutex::new(Frontier { queue, in_flight: 0 }),
        wake: Condvar::new(),
        visited: Mutex::new(visited),
        addresses: Mutex::new(addresses),
        config,
        keys,
    };
    let (tx, rx) = unbounded::<PeerOutcome>();

    let mut outcomes: Vec<PeerOutcome> = Vec::new();
    thread::scope(|scope| {
        for _ in 0..config.max_concurrent_sessions {
            let tx = tx.clone();
            let shared = &shared;
            scope.spawn(move || worker(shared, transport, tx));
        }
        drop(tx);
        // Single writer: all results are assembled here.
        for outcome in rx {
            outcomes.push(outcome);
        }
    });

    if !outcomes.iter().any(|o| o.reachable && bootstraps.contains(&o.peer)) {
        return Err(CrawlError::AllBootstrapsUnreachable(bootstraps.len()));
    }

    let addresses = shared.addresses.into_inner().unwrap();
    let mut stats = CrawlStats::default();
    let mut peers = Vec::with_capacity(outcomes.len());
    let mut edges = Vec::new();
    for o in outcomes {
        stats.dials += 1;
        stats.sessions += usize::from(o.reachable);
        stats.find_node_requests += o.find_node_requests;
        stats.rpc_failures += o.rpc_failures;
        stats.skipped_buckets += o.skipped_buckets;
        let mut addrs = addresses.get(&o.peer).cloned().unwrap_or_default();
        merge_addrs(&mut addrs, &o.listen_addrs);
        edges.extend(o.neighbors.into_iter().map(|n| (o.peer.clone(), n)));
        peers.push(PeerSnapshot {
            peer_id: o.peer,
            multiaddresses: addrs,
            agent_version: o.agent_version,
            reachable: o.reachable,
        });
    }
    let mut snapshot = CrawlSnapshot {
        started_at,
        finished_at: Utc::now(),
        peers,
        edges,
    };
    snapshot.normalize();
    Ok((snapshot, stats))
}

fn merge_addrs(into: &mut Vec<Multiaddr>, from: &[Multiaddr]) {
    for a in from {
        if !into.contains(a) {
            into.push(a.clone());
        }
    }
}

fn worker<T: Transport>(shared: &Shared<'_>, transport: &T, tx: crossbeam_channel::Sender<PeerOutcome>) {
    loop {
        let peer = {
            let mut f = shared.frontier.lock().unwrap();
            loop {
                if let Some(p) = f.queue.pop_front() {
                    f.in_flight += 1;
                    break Some(p);
                }
                if f.in_flight == 0 {
                    break None;
                }
                f = shared.wake.wait(f).unwrap();
            }
        };
        let Some(peer) = peer else {
            shared.wake.notify_all();
            return;
        };
        let outcome = visit(shared, transport, peer);
        let _ = tx.send(outcome);
        let mut f = shared.frontier.lock().unwrap();
        f.in_flight -= 1;
        if f.in_flight == 0 && f.queue.is_empty() {
            shared.wake.notify_all();
        }
    }
}

fn dialable_addrs(addrs: &[Multiaddr], public_only: bool) -> Vec<Multiaddr> {
    addrs
        .iter()
        .filter(|a| !a.is_relayed())
        .filter(|a| !public_only || a.ip().is_some_and(|ip| is_public_ip(&ip)))
        .cloned()
        .collect()
}

fn visit<T: Transport>(shared: &Shared<'_>, transport: &T, peer: PeerId) -> PeerOutcome {
    let mut outcome = PeerOutcome {
        peer: peer.clone(),
        reachable: false,
        agent_version: String::new(),
        listen_addrs: Vec::new(),
        neighbors: Vec::new(),
        find_node_requests: 0,
        rpc_failures: 0,
        skipped_buckets: 0,
    };
    let known = shared.addresses.lock().unwrap().get(&peer).cloned().unwrap_or_default();
    let targets = dialable_addrs(&known, shared.config.public_addresses_only);
    if targets.is_empty() {
        log::debug!("{peer}: no dialable address");
        return outcome;
    }
    let mut session = match transport.dial(&peer, &targets) {
        Ok(s) => s,
        Err(e) => {
            log::debug!("{peer}: dial failed: {e}");
            return outcome;
        }
    };
    outcome.reachable = true;
    match session.identify() {
        Ok(info) => {
            outcome.agent_version = info.agent_version;
            outcome.listen_addrs = info.listen_addrs;
        }
        Err(e) => {
            outcome.rpc_failures += 1;
            log::debug!("{peer}: identify failed: {e}");
        }
    }

    let target = peer.kad_key();
    let mut returned: HashSet<PeerId> = HashSet::new();
    let mut dry_streak = 0;
    for cpl in 0..=shared.config.max_cpl {
        let key = match shared.keys.find_query_key(&target, cpl) {
            Ok(k) => k,
            Err(_) => {
                outcome.skipped_buckets += 1;
                continue;
            }
        };
        outcome.find_node_requests += 1;
        let closer = match session.find_node(key) {
            Ok(c) => c,
            Err(e) => {
                outcome.rpc_failures += 1;
                log::debug!("{peer}: FIND_NODE cpl {cpl} failed: {e}");
                if matches!(e, RpcError::Disconnected | RpcError::Timeout) {
                    break;
                }
                continue;
            }
        };
        let mut fresh = 0;
        for info in closer {
            if info.id == peer {
                continue;
            }
            {
                let mut book = shared.addresses.lock().unwrap();
                merge_addrs(book.entry(info.id.clone()).or_default(), &info.addrs);
            }
            if returned.insert(info.id.clone()) {
                fresh += 1;
                outcome.neighbors.push(info.id.clone());
            }
            let first_sighting = shared.visited.lock().unwrap().insert(info.id.clone());
            if first_sighting {
                shared.frontier.lock().unwrap().queue.push_back(info.id);
                shared.wake.notify_one();
            }
        }
        if fresh == 0 {
            dry_streak += 1;
            if dry_streak >= shared.config.stop_rule {
                break;
            }
        } else {
            dry_streak = 0;
        }
    }
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{coverage, generate_network, LatencyModel, SimTransport};
    use std::sync::{Arc, OnceLock};

    fn keys() -> &'static KeyTable {
        static KEYS: OnceLock<KeyTable> = OnceLock::new();
        KEYS.get_or_init(|| KeyTable::build(1, 1 << 16).unwrap())
    }

    fn config_for(net: &crate::netsim::SimNetwork) -> CrawlConfig {
        CrawlConfig {
            bootstrap_peers: net.bootstrap(2),
            max_concurrent_sessions: 16,
            max_cpl: keys().max_cpl_guarantee(),
            ..Default::default()
        }
    }

    #[test]
    fn full_static_network_fully_covered() {
        let net = generate_network(300, 20, 21);
        let transport = SimTransport::new(Arc::new(net.clone())).with_latency(LatencyModel::Zero);
        let (snap, stats) = crawl_with_stats(&config_for(&net), &transport, keys()).unwrap();
        let cov = coverage(&net, &snap);
        assert_eq!(cov.discovered_fraction, 1.0);
        assert_eq!(cov.reachable_fraction, 1.0);
        assert_eq!(transport.log().max_dials_per_peer(), 1);
        assert_eq!(stats.dials, 300);
        // Edges only point at crawled peers.
        let ids: HashSet<_> = snap.peers.iter().map(|p| &p.peer_id).collect();
        assert!(snap.edges.iter().all(|(a, b)| ids.contains(a) && ids.contains(b)));
    }

    #[test]
    fn edges_mirror_find_node_answers() {
        let net = generate_network(120, 20, 22);
        let transport = SimTransport::new(Arc::new(net.clone())).with_latency(LatencyModel::Zero);
        let snap = crawl(&config_for(&net), &transport, keys()).unwrap();
        // Every routing-table entry is reported, so every (node, entry) is an edge.
        let edges: HashSet<_> = snap.edges.iter().cloned().collect();
        for node in &net.nodes {
            for entry in node.routing_entries() {
                assert!(edges.contains(&(node.peer_id.clone(), entry.clone())));
            }
        }
    }

    #[test]
    fn single_isolated_bootstrap() {
        let net = generate_network(1, 20, 1);
        let transport = SimTransport::new(Arc::new(net.clone())).with_latency(LatencyModel::Zero);
        let snap = crawl(&config_for(&net), &transport, keys()).unwrap();
        assert_eq!(snap.peers.len(), 1);
        assert!(snap.peers[0].reachable);
        assert!(snap.edges.is_empty());
    }

    #[test]
    fn unreachable_bootstraps_abort() {
        let mut net = generate_network(10, 20, 2);
        let cfg = config_for(&net);
        for node in &mut net.nodes {
            node.dialable = false;
        }
        let transport = SimTransport::new(Arc::new(net)).with_latency(LatencyModel::Zero);
        assert_eq!(crawl(&cfg, &transport, keys()), Err(CrawlError::AllBootstrapsUnreachable(2)));
    }

    #[test]
    fn config_validation() {
        let transport = SimTransport::new(Arc::new(generate_network(1, 20, 1)));
        let cfg = CrawlConfig::default();
        assert!(matches!(crawl(&cfg, &transport, keys()), Err(CrawlError::InvalidConfig(_))));
    }

    #[test]
    fn private_only_peers_recorded_unreachable() {
        let mut net = generate_network(40, 20, 3);
        let victim = net.nodes[5].peer_id.clone();
        net.node_mut(&victim).unwrap().addresses = vec!["/ip4/192.168.7.7/tcp/4001".parse().unwrap()];
        let transport = SimTransport::new(Arc::new(net.clone())).with_latency(LatencyModel::Zero);
        let mut cfg = config_for(&net);
        cfg.bootstrap_peers.retain(|(p, _)| *p != victim);
        let snap = crawl(&cfg, &transport, keys()).unwrap();
        let rec = snap.peers.iter().find(|p| p.peer_id == victim).unwrap();
        assert!(!rec.reachable);
        assert_eq!(transport.log().dial_count(&victim), 0);
    }
}
