//! In-memory synthetic Kademlia network used as the crawler's offline
//! transport and as the brute-force oracle for discovery and coverage.

mod churn;
mod content;
mod transport;
pub mod wire_server;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::net::{IpAddr, Ipv4Addr};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::is_public_ip;
use crate::crawler::CrawlSnapshot;
use crate::kad::{KadKey, Multiaddr, PeerId, Protocol};

pub use churn::{apply_churn, ChurnModel};
pub use content::SimContentNetwork;
pub use transport::{LatencyModel, SessionLog, SimSession, SimTransport};

/// Default bucket size.
pub const DEFAULT_K: usize = 20;

/// Agent strings handed out to generated nodes, with relative weights.
const AGENT_MIX: &[(&str, u32)] = &[
    ("go-ipfs/0.8.0/48f94e2", 30),
    ("go-ipfs/0.8.0/", 10),
    ("go-ipfs/0.7.0/", 12),
    ("go-ipfs/0.9.0-rc1/", 6),
    ("go-ipfs/0.6.0/d6e036a", 5),
    ("storm", 15),
    ("hydra-booster/0.7.4", 4),
    ("js-ipfs/0.54.4", 3),
    ("", 15),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimNode {
    pub peer_id: PeerId,
    #[serde(skip, default = "zero_key")]
    pub kad_key: KadKey,
    /// `routing_table[i]` holds peers whose key shares exactly `i` leading
    /// bits with this node's key; at most `k` each.
    pub routing_table: Vec<Vec<PeerId>>,
    pub agent_version: String,
    pub addresses: Vec<Multiaddr>,
    pub dialable: bool,
    /// An unresponsive node accepts sessions but never answers RPCs.
    #[serde(default = "default_true")]
    pub responsive: bool,
    /// Online periods in hours since network start. `None` until churn is
    /// applied, meaning always online.
    #[serde(default)]
    pub online_intervals: Option<Vec<(f64, f64)>>,
    /// Provider records this node stores, keyed by hex-encoded DHT key.
    #[serde(default)]
    pub provider_records: BTreeMap<String, Vec<PeerId>>,
}

fn zero_key() -> KadKey {
    KadKey([0; 32])
}

fn default_true() -> bool {
    true
}

impl SimNode {
    pub fn is_online_at(&self, hours: f64) -> bool {
        match &self.online_intervals {
            None => true,
            Some(iv) => iv.iter().any(|&(s, e)| s <= hours && hours < e),
        }
    }

    pub fn routing_entries(&self) -> impl Iterator<Item = &PeerId> {
        self.routing_table.iter().flatten()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimNetwork {
    pub seed: u64,
    pub k: usize,
    #[serde(default)]
    pub latency: LatencyModel,
    /// Set by [`apply_churn`].
    #[serde(default)]
    pub churn: Option<ChurnModel>,
    #[serde(default)]
    pub duration_hours: Option<f64>,
    pub nodes: Vec<SimNode>,
    #[serde(skip)]
    index: HashMap<PeerId, usize>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("network descriptor: {0}")]
    Io(#[from] std::io::Error),
    #[error("network descriptor is malformed: {0}")]
    Format(String),
}

/// Knobs for [`generate_network_with`]. Fractions are of the node count.
#[derive(Clone, Debug)]
pub struct NetworkParams {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub undialable_fraction: f64,
    pub unresponsive_fraction: f64,
}

impl NetworkParams {
    pub fn new(n: usize, k: usize, seed: u64) -> Self {
        NetworkParams {
            n,
            k,
            seed,
            undialable_fraction: 0.0,
            unresponsive_fraction: 0.0,
        }
    }
}

/// Generates `n` nodes with random ids, unique public IPv4 addresses and
/// routing tables filled from the exact-CPL membership of each bucket.
pub fn generate_network(n: usize, k: usize, seed: u64) -> SimNetwork {
    generate_network_with(&NetworkParams::new(n, k, seed))
}

pub fn generate_network_with(params: &NetworkParams) -> SimNetwork {
    assert!(params.n >= 1, "network needs at least one node");
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let n = params.n;

    let mut ids = Vec::with_capacity(n);
    let mut seen = HashSet::with_capacity(n);
    while ids.len() < n {
        let id = PeerId::random(&mut rng);
        if seen.insert(id.clone()) {
            ids.push(id);
        }
    }
    let keys: Vec<KadKey> = ids.iter().map(PeerId::kad_key).collect();

    let mut ips = HashSet::with_capacity(n);
    let mut addresses = Vec::with_capacity(n);
    while addresses.len() < n {
        let ip = Ipv4Addr::from(rng.random::<u32>());
        if is_public_ip(&IpAddr::V4(ip)) && ips.insert(ip) {
            addresses.push(vec![Multiaddr::new(vec![Protocol::Ip4(ip), Protocol::Tcp(4001)])]);
        }
    }

    let total_weight: u32 = AGENT_MIX.iter().map(|(_, w)| w).sum();
    let agents: Vec<String> = (0..n)
        .map(|_| {
            let mut pick = rng.random_range(0..total_weight);
            for (agent, w) in AGENT_MIX {
                if pick < *w {
                    return (*agent).to_string();
                }
                pick -= w;
            }
            unreachable!()
        })
        .collect();

    let undialable = pick_mask(&mut rng, n, params.undialable_fraction);
    let unresponsive = pick_mask(&mut rng, n, params.unresponsive_fraction);

    let mut nodes = Vec::with_capacity(n);
    let mut by_cpl: Vec<Vec<usize>> = vec![Vec::new(); 257];
    for i in 0..n {
        by_cpl.iter_mut().for_each(Vec::clear);
        for j in 0..n {
            if i != j {
                by_cpl[keys[i].common_prefix_len(&keys[j]) as usize].push(j);
            }
        }
        let depth = by_cpl.iter().rposition(|b| !b.is_empty()).map_or(0, |d| d + 1);
        let routing_table = by_cpl[..depth]
            .iter_mut()
            .map(|bucket| {
                bucket.shuffle(&mut rng);
                bucket.iter().take(params.k).map(|&j| ids[j].clone()).collect()
            })
            .collect();
        nodes.push(SimNode {
            peer_id: ids[i].clone(),
            kad_key: keys[i],
            routing_table,
            agent_version: agents[i].clone(),
            addresses: addresses[i].clone(),
            dialable: !undialable[i],
            responsive: !unresponsive[i],
            online_intervals: None,
            provider_records: BTreeMap::new(),
        });
    }

    let mut net = SimNetwork {
        seed: params.seed,
        k: params.k,
        latency: LatencyModel::default(),
        churn: None,
        duration_hours: None,
        nodes,
        index: HashMap::new(),
    };
    net.rebuild_index();
    net
}

/// Exactly `round(fraction * n)` indices set, chosen by seeded shuffle.
fn pick_mask(rng: &mut ChaCha20Rng, n: usize, fraction: f64) -> Vec<bool> {
    let count = ((fraction.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut mask = vec![false; n];
    for &i in &order[..count] {
        mask[i] = true;
    }
    mask
}

impl SimNetwork {
    fn rebuild_index(&mut self) {
        self.index = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.peer_id.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &PeerId) -> Option<&SimNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn node_mut(&mut self, id: &PeerId) -> Option<&mut SimNode> {
        self.index.get(id).map(|&i| &mut self.nodes[i])
    }

    pub fn contains(&self, id: &PeerId) -> bool {
        self.index.contains_key(id)
    }

    /// `(peer, address)` pairs usable as crawl bootstrap entries.
    pub fn bootstrap(&self, count: usize) -> Vec<(PeerId, Multiaddr)> {
        self.nodes
            .iter()
            .filter(|n| n.dialable && n.responsive)
            .take(count)
            .map(|n| (n.peer_id.clone(), n.addresses[0].clone()))
            .collect()
    }

    /// Marks exactly `round(fraction * n)` nodes undialable, chosen by seed.
    pub fn set_undialable_fraction(&mut self, fraction: f64, seed: u64) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mask = pick_mask(&mut rng, self.nodes.len(), fraction);
        for (node, off) in self.nodes.iter_mut().zip(mask) {
            node.dialable = !off;
        }
    }

    /// The `k` members of `table` closest to `target`, nearest first.
    pub fn k_closest_in<'a>(
        &self,
        table: impl Iterator<Item = &'a PeerId>,
        target: &KadKey,
        k: usize,
    ) -> Vec<PeerId> {
        let mut ranked: Vec<_> = table
            .map(|id| {
                let key = self.node(id).map_or_else(|| id.kad_key(), |n| n.kad_key);
                (key.distance(target), id)
            })
            .collect();
        ranked.sort_unstable();
        ranked.into_iter().take(k).map(|(_, id)| id.clone()).collect()
    }

    /// Stores `providers` as provider records for `key` at the `k` members
    /// closest to `kad_key(key)`.
    pub fn seed_providers(&mut self, key: &[u8], providers: &[PeerId]) {
        let target = crate::kad::kad_key(key);
        let holders = k_closest(self, &target, self.k);
        let hex = data_encoding::HEXLOWER.encode(key);
        for holder in holders {
            let node = self.node_mut(&holder).expect("member");
            let entry = node.provider_records.entry(hex.clone()).or_default();
            for p in providers {
                if !entry.contains(p) {
                    entry.push(p.clone());
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        let json = serde_json::to_vec(self).map_err(|e| SimError::Format(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let raw = fs::read(path)?;
        Self::from_json(&raw)
    }

    pub fn from_json(raw: &[u8]) -> Result<Self, SimError> {
        let mut net: SimNetwork = serde_json::from_slice(raw).map_err(|e| SimError::Format(e.to_string()))?;
        for node in &mut net.nodes {
            node.kad_key = node.peer_id.kad_key();
        }
        net.rebuild_index();
        for node in &net.nodes {
            if let Some(stranger) = node.routing_entries().find(|p| !net.index.contains_key(p)) {
                return Err(SimError::Format(format!(
                    "routing table of {} references non-member {}",
                    node.peer_id, stranger
                )));
            }
        }
        Ok(net)
    }
}

/// Brute-force XOR ranking of the whole membership.
pub fn k_closest(net: &SimNetwork, target: &KadKey, k: usize) -> Vec<PeerId> {
    net.k_closest_in(net.nodes.iter().map(|n| &n.peer_id), target, k)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Coverage {
    pub discovered_fraction: f64,
    pub reachable_fraction: f64,
    /// Members counted in the denominator.
    pub population: usize,
}

/// Fractions of the membership that the snapshot discovered and reached.
/// With churn applied, only members online at `crawl_at_hours` count.
pub fn coverage(net: &SimNetwork, snapshot: &CrawlSnapshot) -> Coverage {
    coverage_at(net, snapshot, 0.0)
}

pub fn coverage_at(net: &SimNetwork, snapshot: &CrawlSnapshot, crawl_at_hours: f64) -> Coverage {
    let population: HashSet<&PeerId> = net
        .nodes
        .iter()
        .filter(|n| n.is_online_at(crawl_at_hours))
        .map(|n| &n.peer_id)
        .collect();
    let mut discovered = 0usize;
    let mut reachable = 0usize;
    for peer in &snapshot.peers {
        if population.contains(&peer.peer_id) {
            discovered += 1;
            reachable += usize::from(peer.reachable);
        }
    }
    let denom = population.len().max(1) as f64;
    Coverage {
        discovered_fraction: discovered as f64 / denom,
        reachable_fraction: reachable as f64 / denom,
        population: population.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crawler::PeerSnapshot;

    #[test]
    fn single_node_has_empty_table() {
        let net = generate_network(1, DEFAULT_K, 1);
        assert_eq!(net.len(), 1);
        assert_eq!(net.nodes[0].routing_entries().count(), 0);
    }

    #[test]
    fn buckets_hold_exact_cpl_and_respect_k() {
        let net = generate_network(1000, 20, 42);
        for node in &net.nodes {
            for (cpl, bucket) in node.routing_table.iter().enumerate() {
                assert!(bucket.len() <= 20);
                for peer in bucket {
                    let key = net.node(peer).unwrap().kad_key;
                    assert_eq!(node.kad_key.common_prefix_len(&key) as usize, cpl);
                }
            }
        }
    }

    #[test]
    fn buckets_are_full_or_exhaustive() {
        let net = generate_network(300, 8, 3);
        for node in &net.nodes {
            for (cpl, bucket) in node.routing_table.iter().enumerate() {
                let members = net
                    .nodes
                    .iter()
                    .filter(|o| o.peer_id != node.peer_id && node.kad_key.common_prefix_len(&o.kad_key) as usize == cpl)
                    .count();
                assert_eq!(bucket.len(), members.min(8));
            }
        }
    }

    #[test]
    fn deterministic_by_seed() {
        let a = serde_json::to_vec(&generate_network(200, 20, 9)).unwrap();
        let b = serde_json::to_vec(&generate_network(200, 20, 9)).unwrap();
        let c = serde_json::to_vec(&generate_network(200, 20, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn addresses_unique_and_public() {
        let net = generate_network(500, 20, 4);
        let ips: HashSet<_> = net.nodes.iter().map(|n| n.addresses[0].ip().unwrap()).collect();
        assert_eq!(ips.len(), 500);
        assert!(ips.iter().all(is_public_ip));
    }

    #[test]
    fn k_closest_properties() {
        let net = generate_network(50, 20, 5);
        let target = net.nodes[7].kad_key;
        let all = k_closest(&net, &target, 100);
        assert_eq!(all.len(), 50);
        assert_eq!(all[0], net.nodes[7].peer_id);
        let dists: Vec<_> = all.iter().map(|p| net.node(p).unwrap().kad_key.distance(&target)).collect();
        assert!(dists.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn descriptor_round_trip() {
        let mut net = generate_network(100, 20, 6);
        net.seed_providers(b"some-key", &[net.nodes[1].peer_id.clone()]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.save(&path).unwrap();
        assert_eq!(SimNetwork::load(&path).unwrap(), net);
    }

    #[test]
    fn descriptor_rejects_foreign_routing_entries() {
        let mut net = generate_network(5, 20, 6);
        net.nodes[0].routing_table = vec![vec![PeerId::from_ed25519_public(&[0xee; 32])]];
        let raw = serde_json::to_vec(&net).unwrap();
        assert!(matches!(SimNetwork::from_json(&raw), Err(SimError::Format(_))));
    }

    #[test]
    fn coverage_fractions() {
        let mut net = generate_network(100, 20, 8);
        net.set_undialable_fraction(0.5, 1);
        assert_eq!(net.nodes.iter().filter(|n| !n.dialable).count(), 50);
        let peers = net
            .nodes
            .iter()
            .map(|n| PeerSnapshot {
                peer_id: n.peer_id.clone(),
                multiaddresses: n.addresses.clone(),
                agent_version: n.agent_version.clone(),
                reachable: n.dialable,
            })
            .collect();
        let snap = CrawlSnapshot {
            peers,
            ..CrawlSnapshot::empty()
        };
        let c = coverage(&net, &snap);
        assert_eq!(c.discovered_fraction, 1.0);
        assert_eq!(c.reachable_fraction, 0.5);
        assert_eq!(coverage(&net, &CrawlSnapshot::empty()).discovered_fraction, 0.0);
    }
}
