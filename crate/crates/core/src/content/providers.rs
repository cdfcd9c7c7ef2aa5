//! Provider lookups over the DHT and audits of already-downloaded payloads.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::cid::Cid;
use super::unixfs::cid_of_file;
use crate::kad::{kad_key, KadKey, Multiaddr, PeerId, PeerInfo, PeerSession, Transport};

pub const ALPHA: usize = 3;
pub const LOOKUP_K: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LookupStatus {
    /// The walk converged: the closest known peers were all queried.
    Complete,
    /// The deadline passed first; the provider list may be incomplete.
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderLookup {
    pub cid: Cid,
    pub providers: Vec<PeerId>,
    pub status: LookupStatus,
    pub queried: usize,
}

struct Walk {
    target: KadKey,
    addrs: HashMap<PeerId, Vec<Multiaddr>>,
    queried: HashSet<PeerId>,
    providers: Vec<PeerId>,
    seen_providers: HashSet<PeerId>,
}

impl Walk {
    fn learn(&mut self, peers: Vec<PeerInfo>) {
        for p in peers {
            let entry = self.addrs.entry(p.id).or_default();
            for a in p.addrs {
                if !entry.contains(&a) {
                    entry.push(a);
                }
            }
        }
    }

    /// The next unqueried peers among the `LOOKUP_K` closest known.
    fn next_batch(&self) -> Vec<(PeerId, Vec<Multiaddr>)> {
        let mut ranked: Vec<_> = self
            .addrs
            .keys()
            .map(|id| (id.kad_key().distance(&self.target), id))
            .collect();
        ranked.sort_unstable();
        ranked
            .into_iter()
            .take(LOOKUP_K)
            .filter(|(_, id)| !self.queried.contains(*id))
            .take(ALPHA)
            .map(|(_, id)| (id.clone(), self.addrs[id].clone()))
            .collect()
    }
}

/// Iterative GET_PROVIDERS walk toward `kad_key(cid multihash)` with
/// `ALPHA` queries in flight per round. Providers are deduplicated in
/// discovery order.
pub fn find_providers<T: Transport>(
    cid: &Cid,
    transport: &T,
    bootstrap: &[(PeerId, Multiaddr)],
    deadline: Duration,
) -> ProviderLookup {
    let key = cid.multihash();
    let until = Instant::now() + deadline;
    let mut walk = Walk {
        target: kad_key(&key),
        addrs: HashMap::new(),
        queried: HashSet::new(),
        providers: Vec::new(),
        seen_providers: HashSet::new(),
    };
    walk.learn(
        bootstrap
            .iter()
            .map(|(id, a)| PeerInfo {
                id: id.clone(),
                addrs: vec![a.clone()],
            })
            .collect(),
    );
    let status = loop {
        let batch = walk.next_batch();
        if batch.is_empty() {
            break LookupStatus::Complete;
        }
        if Instant::now() >= until {
            break LookupStatus::Timeout;
        }
        let replies = Mutex::new(Vec::new());
        thread::scope(|scope| {
            for (id, addrs) in &batch {
                let (replies, key) = (&replies, &key);
                scope.spawn(move || {
                    let reply = transport
                        .dial(id, addrs)
                        .map_err(|e| e.to_string())
                        .and_then(|mut s| s.get_providers(key).map_err(|e| e.to_string()));
                    replies.lock().unwrap().push((id.clone(), reply));
                });
            }
        });
        for (id, reply) in replies.into_inner().unwrap() {
            walk.queried.insert(id.clone());
            match reply {
                Ok(r) => {
                    for p in &r.providers {
                        if walk.seen_providers.insert(p.id.clone()) {
                            walk.providers.push(p.id.clone());
                        }
                    }
                    walk.learn(r.closer_peers);
                }
                Err(e) => {
                    log::debug!("GET_PROVIDERS via {id}: {e}");
                    walk.addrs.remove(&id);
                }
            }
        }
    };
    ProviderLookup {
        cid: *cid,
        providers: walk.providers,
        status,
        queried: walk.queried.len(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    /// The payload set (torrent) the file belongs to.
    pub source: String,
    pub path: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cid: Option<Cid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<u64>,
    pub provider_count: usize,
    pub providers: Vec<PeerId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lookup_status: Option<LookupStatus>,
    /// Set when an earlier file had the same CID; the lookup is shared.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
    pub files: usize,
    pub errors: usize,
    pub unique_cids: usize,
    pub cids_with_providers: usize,
    pub summary: String,
}

/// Payload sets under `dir`: each subdirectory is one set named after it,
/// and loose files form a set named ".". Files are listed recursively in
/// name order.
pub fn payload_sets(dir: &Path) -> io::Result<Vec<(String, Vec<PathBuf>)>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
        let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let path = e.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else {
                out.push(path);
            }
        }
        Ok(())
    }
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    let mut loose = Vec::new();
    let mut sets = Vec::new();
    for e in entries {
        let path = e.path();
        if path.is_dir() {
            let mut files = Vec::new();
            walk(&path, &mut files)?;
            sets.push((e.file_name().to_string_lossy().into_owned(), files));
        } else {
            loose.push(path);
        }
    }
    if !loose.is_empty() {
        sets.insert(0, (".".to_string(), loose));
    }
    Ok(sets)
}

/// Computes the root CID of every payload file and looks up providers once
/// per distinct CID. Read errors are recorded per file and the audit goes
/// on. Nothing is ever announced or stored on the network.
pub fn torrent_audit(
    sets: &[(String, Vec<PathBuf>)],
    lookup: &mut dyn FnMut(&Cid) -> ProviderLookup,
) -> AuditReport {
    let mut entries = Vec::new();
    let mut first: HashMap<Cid, (PathBuf, ProviderLookup)> = HashMap::new();
    let mut order: Vec<Cid> = Vec::new();
    for (source, files) in sets {
        for path in files {
            let mut entry = AuditEntry {
                source: source.clone(),
                path: path.clone(),
                cid: None,
                size: None,
                provider_count: 0,
                providers: Vec::new(),
                lookup_status: None,
                duplicate_of: None,
                error: None,
            };
            match fs::read(path) {
                Ok(data) => {
                    let cid = cid_of_file(&data);
                    entry.cid = Some(cid);
                    entry.size = Some(data.len() as u64);
                    let result = match first.get(&cid) {
                        Some((p, r)) => {
                            entry.duplicate_of = Some(p.clone());
                            r.clone()
                        }
                        None => {
                            let r = lookup(&cid);
                            first.insert(cid, (path.clone(), r.clone()));
                            order.push(cid);
                            r
                        }
                    };
                    entry.provider_count = result.providers.len();
                    entry.providers = result.providers;
                    entry.lookup_status = Some(result.status);
                }
                Err(e) => entry.error = Some(format!("{}: {e}", path.display())),
            }
            entries.push(entry);
        }
    }
    let with = order.iter().filter(|c| !first[c].1.providers.is_empty()).count();
    AuditReport {
        files: entries.len(),
        errors: entries.iter().filter(|e| e.error.is_some()).count(),
        unique_cids: order.len(),
        cids_with_providers: with,
        summary: format!("{with} of {} with ≥1 provider", order.len()),
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{generate_network, LatencyModel, SimTransport};
    use std::sync::Arc;

    #[test]
    fn walk_finds_exactly_the_seeded_providers() {
        let mut net = generate_network(400, 20, 3);
        let cid = cid_of_file(b"seeded payload");
        let seeded: Vec<PeerId> = net.nodes[10..13].iter().map(|n| n.peer_id.clone()).collect();
        net.seed_providers(&cid.multihash(), &seeded);
        let boot = net.bootstrap(3);
        let t = SimTransport::new(Arc::new(net)).with_latency(LatencyModel::Zero);
        let found = find_providers(&cid, &t, &boot, Duration::from_secs(30));
        assert_eq!(found.status, LookupStatus::Complete);
        let mut got = found.providers.clone();
        let mut want = seeded;
        got.sort();
        want.sort();
        assert_eq!(got, want);

        let none = find_providers(&cid_of_file(b"nobody has this"), &t, &boot, Duration::from_secs(30));
        assert!(none.providers.is_empty());
        assert_eq!(none.status, LookupStatus::Complete);
    }

    #[test]
    fn zero_deadline_reports_timeout() {
        let net = generate_network(50, 20, 4);
        let boot = net.bootstrap(2);
        let t = SimTransport::new(Arc::new(net)).with_latency(LatencyModel::Zero);
        let r = find_providers(&cid_of_file(b"x"), &t, &boot, Duration::ZERO);
        assert_eq!(r.status, LookupStatus::Timeout);
        assert!(r.providers.is_empty());
    }

    #[test]
    fn audit_dedups_and_survives_unreadable_files() {
        let dir = tempfile::tempdir().unwrap();
        for (set, name, body) in [("a", "1.bin", "same"), ("b", "2.bin", "same"), ("b", "3.bin", "other")] {
            fs::create_dir_all(dir.path().join(set)).unwrap();
            fs::write(dir.path().join(set).join(name), body).unwrap();
        }
        let mut sets = payload_sets(dir.path()).unwrap();
        sets[1].1.push(dir.path().join("b/missing.bin"));
        let provided = cid_of_file(b"other");
        let mut calls = 0;
        let report = torrent_audit(&sets, &mut |cid| {
            calls += 1;
            ProviderLookup {
                cid: *cid,
                providers: if *cid == provided {
                    vec![PeerId::from_ed25519_public(&[1; 32])]
                } else {
                    vec![]
                },
                status: LookupStatus::Complete,
                queried: 1,
            }
        });
        assert_eq!(calls, 2);
        assert_eq!(report.files, 4);
        assert_eq!(report.errors, 1);
        assert_eq!(report.unique_cids, 2);
        assert_eq!(report.summary, "1 of 2 with ≥1 provider");
        assert_eq!(report.entries[1].duplicate_of.as_deref(), Some(dir.path().join("a/1.bin").as_path()));
    }
}
