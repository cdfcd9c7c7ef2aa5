use std::collections::HashMap;
use std::net::IpAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SimNetwork, SimNode};
use crate::content::bitswap::BITSWAP_PROTOCOL;
use crate::kad::wire::{DEFAULT_IDENTIFY_PROTOCOL, DEFAULT_KAD_PROTOCOL};
use crate::kad::{
    kad_key, DialError, IdentifyInfo, Multiaddr, PeerId, PeerInfo, PeerSession, ProvidersResponse, RpcError,
    Transport,
};

/// Per-RPC delay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatencyModel {
    Zero,
    Uniform { min_ms: u64, max_ms: u64 },
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel::Uniform { min_ms: 5, max_ms: 50 }
    }
}

impl LatencyModel {
    fn sample<R: Rng>(&self, rng: &mut R) -> Duration {
        match *self {
            LatencyModel::Zero => Duration::ZERO,
            LatencyModel::Uniform { min_ms, max_ms } => Duration::from_millis(rng.random_range(min_ms..=max_ms.max(min_ms))),
        }
    }
}

/// Audit trail of everything a [`SimTransport`] was asked to do.
#[derive(Debug, Default)]
pub struct SessionLog {
    dials: Mutex<HashMap<PeerId, u32>>,
    sessions: Mutex<HashMap<PeerId, u32>>,
    find_node_calls: AtomicU64,
    identify_calls: AtomicU64,
    get_providers_calls: AtomicU64,
}

impl SessionLog {
    pub fn dial_count(&self, peer: &PeerId) -> u32 {
        self.dials.lock().unwrap().get(peer).copied().unwrap_or(0)
    }

    pub fn session_count(&self, peer: &PeerId) -> u32 {
        self.sessions.lock().unwrap().get(peer).copied().unwrap_or(0)
    }

    pub fn total_dials(&self) -> u64 {
        self.dials.lock().unwrap().values().map(|&c| u64::from(c)).sum()
    }

    pub fn total_sessions(&self) -> u64 {
        self.sessions.lock().unwrap().values().map(|&c| u64::from(c)).sum()
    }

    pub fn max_dials_per_peer(&self) -> u32 {
        self.dials.lock().unwrap().values().copied().max().unwrap_or(0)
    }

    pub fn find_node_calls(&self) -> u64 {
        self.find_node_calls.load(Ordering::Relaxed)
    }

    pub fn identify_calls(&self) -> u64 {
        self.identify_calls.load(Ordering::Relaxed)
    }

    pub fn get_providers_calls(&self) -> u64 {
        self.get_providers_calls.load(Ordering::Relaxed)
    }

    pub(crate) fn record_get_providers(&self) {
        self.get_providers_calls.fetch_add(1, Ordering::Relaxed);
    }

    fn bump(map: &Mutex<HashMap<PeerId, u32>>, peer: &PeerId) {
        *map.lock().unwrap().entry(peer.clone()).or_default() += 1;
    }
}

/// Dials sim nodes through the same contract as the TCP transport.
#[derive(Clone)]
pub struct SimTransport {
    net: Arc<SimNetwork>,
    pub latency: LatencyModel,
    pub rpc_timeout: Duration,
    /// Simulated wall-clock instant, in hours, at which dials happen.
    pub at_hours: f64,
    log: Arc<SessionLog>,
    sessions_opened: Arc<AtomicU64>,
}

impl SimTransport {
    pub fn new(net: Arc<SimNetwork>) -> Self {
        SimTransport {
            latency: net.latency,
            net,
            rpc_timeout: Duration::from_secs(10),
            at_hours: 0.0,
            log: Arc::new(SessionLog::default()),
            sessions_opened: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn with_latency(mut self, latency: LatencyModel) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_rpc_timeout(mut self, timeout: Duration) -> Self {
        self.rpc_timeout = timeout;
        self
    }

    pub fn at(mut self, hours: f64) -> Self {
        self.at_hours = hours;
        self
    }

    pub fn network(&self) -> &Arc<SimNetwork> {
        &self.net
    }

    pub fn log(&self) -> &Arc<SessionLog> {
        &self.log
    }

    fn rng_for(&self, peer: &PeerId) -> ChaCha8Rng {
        let n = self.sessions_opened.fetch_add(1, Ordering::Relaxed);
        let key = peer.kad_key();
        let salt = u64::from_be_bytes(key.0[..8].try_into().unwrap());
        ChaCha8Rng::seed_from_u64(self.net.seed ^ salt ^ n.rotate_left(32))
    }
}

impl Transport for SimTransport {
    type Session = SimSession;

    fn dial(&self, peer: &PeerId, addrs: &[Multiaddr]) -> Result<SimSession, DialError> {
        SessionLog::bump(&self.log.dials, peer);
        let mut rng = self.rng_for(peer);
        thread::sleep(self.latency.sample(&mut rng));
        if addrs.is_empty() {
            return Err(DialError::NoUsableAddress);
        }
        let node = self
            .net
            .node(peer)
            .ok_or_else(|| DialError::Unreachable("no such peer".into()))?;
        let node_ips: Vec<IpAddr> = node.addresses.iter().filter_map(Multiaddr::ip).collect();
        if !addrs.iter().filter_map(Multiaddr::ip).any(|ip| node_ips.contains(&ip)) {
            return Err(DialError::Unreachable("no route to any given address".into()));
        }
        if !node.is_online_at(self.at_hours) {
            return Err(DialError::Unreachable("peer offline".into()));
        }
        if !node.dialable {
            return Err(DialError::Unreachable("connection refused".into()));
        }
        SessionLog::bump(&self.log.sessions, peer);
        Ok(SimSession {
            peer: peer.clone(),
            net: Arc::clone(&self.net),
            latency: self.latency,
            rpc_timeout: self.rpc_timeout,
            log: Arc::clone(&self.log),
            rng,
        })
    }
}

pub struct SimSession {
    peer: PeerId,
    net: Arc<SimNetwork>,
    latency: LatencyModel,
    rpc_timeout: Duration,
    log: Arc<SessionLog>,
    rng: ChaCha8Rng,
}

impl SimSession {
    fn node(&self) -> &SimNode {
        self.net.node(&self.peer).expect("session peer is a member")
    }

    fn round_trip(&mut self) -> Result<(), RpcError> {
        if !self.node().responsive {
            thread::sleep(self.rpc_timeout);
            return Err(RpcError::Timeout);
        }
        let delay = self.latency.sample(&mut self.rng);
        if delay >= self.rpc_timeout {
            thread::sleep(self.rpc_timeout);
            return Err(RpcError::Timeout);
        }
        thread::sleep(delay);
        Ok(())
    }
}

impl PeerSession for SimSession {
    fn remote(&self) -> &PeerId {
        &self.peer
    }

    fn find_node(&mut self, key: &[u8]) -> Result<Vec<PeerInfo>, RpcError> {
        self.log.find_node_calls.fetch_add(1, Ordering::Relaxed);
        self.round_trip()?;
        Ok(find_node_response(&self.net, self.node(), key))
    }

    fn identify(&mut self) -> Result<IdentifyInfo, RpcError> {
        self.log.identify_calls.fetch_add(1, Ordering::Relaxed);
        self.round_trip()?;
        Ok(identify_response(self.node()))
    }

    fn get_providers(&mut self, key: &[u8]) -> Result<ProvidersResponse, RpcError> {
        self.log.record_get_providers();
        self.round_trip()?;
        Ok(get_providers_response(&self.net, self.node(), key))
    }
}

fn peer_info(net: &SimNetwork, id: &PeerId) -> PeerInfo {
    PeerInfo {
        id: id.clone(),
        addrs: net.node(id).map(|n| n.addresses.clone()).unwrap_or_default(),
    }
}

/// The `k` entries of the node's own routing table closest to the key.
pub(crate) fn find_node_response(net: &SimNetwork, node: &SimNode, key: &[u8]) -> Vec<PeerInfo> {
    let target = kad_key(key);
    net.k_closest_in(node.routing_entries(), &target, net.k)
        .iter()
        .map(|id| peer_info(net, id))
        .collect()
}

pub(crate) fn identify_response(node: &SimNode) -> IdentifyInfo {
    IdentifyInfo {
        agent_version: node.agent_version.clone(),
        protocol_version: "ipfs/0.1.0".into(),
        listen_addrs: node.addresses.clone(),
        protocols: vec![
            DEFAULT_KAD_PROTOCOL.to_string(),
            DEFAULT_IDENTIFY_PROTOCOL.to_string(),
            BITSWAP_PROTOCOL.to_string(),
        ],
    }
}

pub(crate) fn get_providers_response(net: &SimNetwork, node: &SimNode, key: &[u8]) -> ProvidersResponse {
    let hex = data_encoding::HEXLOWER.encode(key);
    let providers = node
        .provider_records
        .get(&hex)
        .map(|ids| ids.iter().map(|id| peer_info(net, id)).collect())
        .unwrap_or_default();
    ProvidersResponse {
        providers,
        closer_peers: find_node_response(net, node, key),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{generate_network, k_closest};
    use std::time::Instant;

    fn fast(net: SimNetwork) -> SimTransport {
        SimTransport::new(Arc::new(net)).with_latency(LatencyModel::Zero)
    }

    #[test]
    fn find_node_is_k_closest_of_own_table() {
        let net = generate_network(400, 20, 11);
        let t = fast(net.clone());
        for node in net.nodes.iter().take(25) {
            let mut s = t.dial(&node.peer_id, &node.addresses).unwrap();
            for probe in 0..5u8 {
                let key = [probe; 7];
                let got: Vec<_> = s.find_node(&key).unwrap().into_iter().map(|p| p.id).collect();
                let table: Vec<_> = node.routing_entries().cloned().collect();
                // Brute force over the routing table only.
                let mut expected = table.clone();
                let target = kad_key(&key);
                expected.sort_by_key(|id| id.kad_key().distance(&target));
                expected.truncate(20);
                assert_eq!(got, expected);
                assert!(got.iter().all(|id| table.contains(id)));
                // Answers never reach beyond the routing table into global membership.
                let global = k_closest(&net, &target, 20);
                assert!(got.iter().all(|id| global.contains(id) || table.contains(id)));
            }
        }
    }

    #[test]
    fn empty_table_gives_empty_answer() {
        let net = generate_network(1, 20, 1);
        let node = &net.nodes[0];
        let mut s = fast(net.clone()).dial(&node.peer_id, &node.addresses).unwrap();
        assert!(s.find_node(b"anything").unwrap().is_empty());
    }

    #[test]
    fn identify_reports_configured_agent_and_relay_addr() {
        let mut net = generate_network(3, 20, 2);
        let relay: Multiaddr = format!(
            "/ip4/198.51.100.7/tcp/4001/p2p/{}/p2p-circuit",
            net.nodes[1].peer_id
        )
        .parse()
        .unwrap();
        net.nodes[0].agent_version = "storm".into();
        net.nodes[0].addresses.push(relay.clone());
        net.nodes[2].agent_version.clear();
        let t = fast(net.clone());
        let info = t.dial(&net.nodes[0].peer_id, &net.nodes[0].addresses).unwrap().identify().unwrap();
        assert_eq!(info.agent_version, "storm");
        assert!(info.listen_addrs.contains(&relay));
        let info = t.dial(&net.nodes[2].peer_id, &net.nodes[2].addresses).unwrap().identify().unwrap();
        assert_eq!(info.agent_version, "");
    }

    #[test]
    fn unresponsive_node_times_out() {
        let mut net = generate_network(3, 20, 3);
        net.nodes[0].responsive = false;
        let t = fast(net.clone()).with_rpc_timeout(Duration::from_millis(80));
        let mut s = t.dial(&net.nodes[0].peer_id, &net.nodes[0].addresses).unwrap();
        let start = Instant::now();
        assert_eq!(s.find_node(b"k"), Err(RpcError::Timeout));
        assert!(start.elapsed() >= Duration::from_millis(80));
    }

    #[test]
    fn undialable_and_offline_nodes_refuse() {
        let mut net = generate_network(3, 20, 4);
        net.nodes[0].dialable = false;
        net.nodes[1].online_intervals = Some(vec![(5.0, 6.0)]);
        let t = fast(net.clone());
        assert!(matches!(
            t.dial(&net.nodes[0].peer_id, &net.nodes[0].addresses),
            Err(DialError::Unreachable(_))
        ));
        assert!(t.dial(&net.nodes[1].peer_id, &net.nodes[1].addresses).is_err());
        assert!(t.clone().at(5.5).dial(&net.nodes[1].peer_id, &net.nodes[1].addresses).is_ok());
        assert_eq!(t.dial(&net.nodes[2].peer_id, &[]).err(), Some(DialError::NoUsableAddress));
        assert_eq!(t.log().dial_count(&net.nodes[0].peer_id), 1);
        assert_eq!(t.log().session_count(&net.nodes[0].peer_id), 0);
    }

    #[test]
    fn providers_served_by_record_holders() {
        let mut net = generate_network(200, 20, 5);
        let providers = vec![net.nodes[3].peer_id.clone(), net.nodes[4].peer_id.clone()];
        net.seed_providers(b"content-key", &providers);
        let holder = k_closest(&net, &kad_key(b"content-key"), 1)[0].clone();
        let node = net.node(&holder).unwrap().clone();
        let t = fast(net);
        let resp = t.dial(&node.peer_id, &node.addresses).unwrap().get_providers(b"content-key").unwrap();
        let got: Vec<_> = resp.providers.into_iter().map(|p| p.id).collect();
        assert_eq!(got, providers);
        assert_eq!(t.log().get_providers_calls(), 1);
    }
}
