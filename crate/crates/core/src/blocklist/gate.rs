use std::io::Write;
use std::net::IpAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Blocklist, BloomBlocklist};
use crate::analytics::canonical_ip;
use crate::kad::{DialError, Multiaddr, PeerId, Transport};

/// Anything that can answer "is this IP listed?".
pub trait IpFilter: Send + Sync {
    fn is_listed(&self, ip: IpAddr) -> bool;
}

impl IpFilter for Blocklist {
    fn is_listed(&self, ip: IpAddr) -> bool {
        self.contains(ip)
    }
}

impl IpFilter for BloomBlocklist {
    fn is_listed(&self, ip: IpAddr) -> bool {
        self.contains(ip)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateDecision {
    Allow,
    Deny,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateLogEntry {
    pub at: DateTime<Utc>,
    pub ip: IpAddr,
    pub decision: GateDecision,
}

/// Allows or denies connections by remote IP and logs every decision.
pub struct ConnectionGate {
    filter: Arc<dyn IpFilter>,
    log: Mutex<Vec<GateLogEntry>>,
    sink: Option<Mutex<Box<dyn Write + Send>>>,
    denied: AtomicU64,
    allowed: AtomicU64,
}

impl ConnectionGate {
    pub fn new(filter: Arc<dyn IpFilter>) -> Self {
        ConnectionGate {
            filter,
            log: Mutex::new(Vec::new()),
            sink: None,
            denied: AtomicU64::new(0),
            allowed: AtomicU64::new(0),
        }
    }

    /// Also writes each decision to `sink` as one JSON line.
    pub fn with_sink(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.sink = Some(Mutex::new(sink));
        self
    }

    pub fn check_ip(&self, ip: IpAddr) -> GateDecision {
        let ip = canonical_ip(ip);
        let decision = if self.filter.is_listed(ip) {
            self.denied.fetch_add(1, Ordering::Relaxed);
            GateDecision::Deny
        } else {
            self.allowed.fetch_add(1, Ordering::Relaxed);
            GateDecision::Allow
        };
        let entry = GateLogEntry {
            at: Utc::now(),
            ip,
            decision,
        };
        if let Some(sink) = &self.sink {
            let mut w = sink.lock().unwrap();
            let line = serde_json::to_string(&entry).expect("log entry serializes");
            if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                log::warn!("gate log: {e}");
            }
        }
        self.log.lock().unwrap().push(entry);
        decision
    }

    /// Decision for a remote address. Addresses without an IP (DNS names)
    /// cannot be checked and are allowed without a log entry.
    pub fn gate(&self, addr: &Multiaddr) -> GateDecision {
        match addr.ip() {
            Some(ip) => self.check_ip(ip),
            None => GateDecision::Allow,
        }
    }

    pub fn decisions(&self) -> Vec<GateLogEntry> {
        self.log.lock().unwrap().clone()
    }

    pub fn denied(&self) -> u64 {
        self.denied.load(Ordering::Relaxed)
    }

    pub fn allowed(&self) -> u64 {
        self.allowed.load(Ordering::Relaxed)
    }
}

/// A transport that consults a [`ConnectionGate`] before every dial and
/// never dials a denied address.
pub struct GatedTransport<T> {
    inner: T,
    gate: Arc<ConnectionGate>,
}

impl<T> GatedTransport<T> {
    pub fn new(inner: T, gate: Arc<ConnectionGate>) -> Self {
        GatedTransport { inner, gate }
    }

    pub fn gate(&self) -> &Arc<ConnectionGate> {
        &self.gate
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

impl<T: Transport> Transport for GatedTransport<T> {
    type Session = T::Session;

    fn dial(&self, peer: &PeerId, addrs: &[Multiaddr]) -> Result<Self::Session, DialError> {
        let mut denied = None;
        let allowed: Vec<Multiaddr> = addrs
            .iter()
            .filter(|a| match (a.ip(), self.gate.gate(a)) {
                (Some(ip), GateDecision::Deny) => {
                    denied.get_or_insert(ip);
                    false
                }
                _ => true,
            })
            .cloned()
            .collect();
        match denied {
            Some(ip) if allowed.is_empty() => Err(DialError::Gated(ip)),
            _ => self.inner.dial(peer, &allowed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crawler::{crawl, CrawlConfig};
    use crate::kad::KeyTable;
    use crate::netsim::{coverage, generate_network, LatencyModel, SimTransport};
    use std::collections::HashSet;

    fn gate_for(ips: &[&str]) -> ConnectionGate {
        let list = Blocklist::build(ips.iter().map(|s| s.parse().unwrap()), Utc::now());
        ConnectionGate::new(Arc::new(list))
    }

    #[test]
    fn listed_denied_unlisted_allowed_and_logged() {
        let g = gate_for(&["81.2.69.160"]);
        assert_eq!(g.check_ip("81.2.69.160".parse().unwrap()), GateDecision::Deny);
        assert_eq!(g.check_ip("81.2.69.161".parse().unwrap()), GateDecision::Allow);
        let addr: Multiaddr = "/ip4/81.2.69.160/tcp/4001".parse().unwrap();
        assert_eq!(g.gate(&addr), GateDecision::Deny);
        let log = g.decisions();
        assert_eq!(log.len(), 3);
        assert_eq!(log[0].ip, "81.2.69.160".parse::<IpAddr>().unwrap());
        assert_eq!(log[0].decision, GateDecision::Deny);
        assert_eq!((g.denied(), g.allowed()), (2, 1));
    }

    #[test]
    fn sink_receives_json_lines() {
        #[derive(Clone, Default)]
        struct Shared(Arc<Mutex<Vec<u8>>>);
        impl Write for Shared {
            fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
                self.0.lock().unwrap().extend_from_slice(b);
                Ok(b.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let buf = Shared::default();
        let g = gate_for(&["81.2.69.160"]).with_sink(Box::new(buf.clone()));
        g.check_ip("81.2.69.160".parse().unwrap());
        let text = String::from_utf8(buf.0.lock().unwrap().clone()).unwrap();
        let entry: GateLogEntry = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(entry.decision, GateDecision::Deny);
    }

    #[test]
    fn gated_crawl_never_reaches_listed_nodes() {
        let net = generate_network(300, 20, 77);
        let boot = net.bootstrap(3);
        let boot_ids: HashSet<_> = boot.iter().map(|b| b.0.clone()).collect();
        let listed: Vec<_> = net.nodes.iter().filter(|n| !boot_ids.contains(&n.peer_id)).take(30).collect();
        let list = Blocklist::build(listed.iter().filter_map(|n| n.addresses[0].ip()), Utc::now());
        let gate = Arc::new(ConnectionGate::new(Arc::new(list)));
        let sim = SimTransport::new(Arc::new(net.clone())).with_latency(LatencyModel::Zero);
        let log = sim.log().clone();
        let gated = GatedTransport::new(sim, gate.clone());
        let table = KeyTable::build(1, 1 << 16).unwrap();
        let config = CrawlConfig {
            bootstrap_peers: boot,
            max_concurrent_sessions: 16,
            ..Default::default()
        };
        let snap = crawl(&config, &gated, &table).unwrap();
        for n in &listed {
            assert_eq!(log.session_count(&n.peer_id), 0);
            assert_eq!(log.dial_count(&n.peer_id), 0);
        }
        assert_eq!(gate.denied(), listed.len() as u64);
        let cov = coverage(&net, &snap);
        assert_eq!(cov.discovered_fraction, 1.0);
        assert!((cov.reachable_fraction - 270.0 / 300.0).abs() < 1e-9);
    }
}
