//! Crawl snapshots and their on-disk form: `peers.json`, `edges.csv` and a
//! small `meta.json` holding the crawl timestamps.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kad::{Multiaddr, PeerId};

pub const PEERS_FILE: &str = "peers.json";
pub const EDGES_FILE: &str = "edges.csv";
pub const META_FILE: &str = "meta.json";

/// One crawled peer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerSnapshot {
    pub peer_id: PeerId,
    #[serde(rename = "multiaddrs")]
    pub multiaddresses: Vec<Multiaddr>,
    pub agent_version: String,
    /// True iff a session was established during this crawl.
    pub reachable: bool,
}

/// One full crawl.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrawlSnapshot {
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub peers: Vec<PeerSnapshot>,
    /// Directed source → reported-neighbor pairs.
    pub edges: Vec<(PeerId, PeerId)>,
}

impl CrawlSnapshot {
    pub fn empty() -> Self {
        let now = Utc::now();
        CrawlSnapshot {
            started_at: now,
            finished_at: now,
            peers: Vec::new(),
            edges: Vec::new(),
        }
    }

    /// Sorts peers by id, deduplicates edges and truncates timestamps to the
    /// second, which is the precision kept on disk.
    pub fn normalize(&mut self) {
        self.started_at = self.started_at.trunc_subsecs(0);
        self.finished_at = self.finished_at.trunc_subsecs(0);
        self.peers.sort_by(|a, b| a.peer_id.cmp(&b.peer_id));
        for p in &mut self.peers {
            let mut seen = std::collections::HashSet::new();
            p.multiaddresses.retain(|a| seen.insert(a.clone()));
        }
        self.edges.sort();
        self.edges.dedup();
    }

    pub fn reachable_count(&self) -> usize {
        self.peers.iter().filter(|p| p.reachable).count()
    }
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: u64,
        message: String,
    },
}

impl SnapshotError {
    fn io(path: &Path, source: io::Error) -> Self {
        SnapshotError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    started_at: DateTime<Utc>,
    finished_at: DateTime<Utc>,
}

/// Writes the snapshot into `dir`, creating it if needed. Returns the paths
/// of `peers.json` and `edges.csv`.
pub fn write_snapshot(snapshot: &CrawlSnapshot, dir: &Path) -> Result<(PathBuf, PathBuf), SnapshotError> {
    fs::create_dir_all(dir).map_err(|e| SnapshotError::io(dir, e))?;
    let peers_path = dir.join(PEERS_FILE);
    let edges_path = dir.join(EDGES_FILE);
    let meta_path = dir.join(META_FILE);

    let file = File::create(&peers_path).map_err(|e| SnapshotError::io(&peers_path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &snapshot.peers)
        .map_err(|e| SnapshotError::io(&peers_path, e.into()))?;
    w.flush().map_err(|e| SnapshotError::io(&peers_path, e))?;

    let mut csv = csv::Writer::from_path(&edges_path).map_err(|e| SnapshotError::io(&edges_path, e.into()))?;
    csv.write_record(["source", "target"])
        .map_err(|e| SnapshotError::io(&edges_path, e.into()))?;
    for (source, target) in &snapshot.edges {
        csv.write_record([source.to_base58(), target.to_base58()])
            .map_err(|e| SnapshotError::io(&edges_path, e.into()))?;
    }
    csv.flush().map_err(|e| SnapshotError::io(&edges_path, e))?;

    let meta = Meta {
        started_at: snapshot.started_at.trunc_subsecs(0),
        finished_at: snapshot.finished_at.trunc_subsecs(0),
    };
    let meta_json = serde_json::to_vec_pretty(&meta).expect("meta serializes");
    fs::write(&meta_path, meta_json).map_err(|e| SnapshotError::io(&meta_path, e))?;
    Ok((peers_path, edges_path))
}

/// Reads a snapshot directory. Without `meta.json` both timestamps fall back
/// to the modification time of `peers.json`.
pub fn read_snapshot(dir: &Path) -> Result<CrawlSnapshot, SnapshotError> {
    let peers_path = dir.join(PEERS_FILE);
    let edges_path = dir.join(EDGES_FILE);
    let meta_path = dir.join(META_FILE);

    let file = File::open(&peers_path).map_err(|e| SnapshotError::io(&peers_path, e))?;
    let peers: Vec<PeerSnapshot> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| SnapshotError::Format {
            path: peers_path.clone(),
            line: e.line() as u64,
            message: e.to_string(),
        })?;

    let mut reader = csv::Reader::from_path(&edges_path).map_err(|e| SnapshotError::io(&edges_path, e.into()))?;
    let headers = reader.headers().map_err(|e| csv_format(&edges_path, e))?.clone();
    if headers.len() != 2 || &headers[0] != "source" || &headers[1] != "target" {
        return Err(SnapshotError::Format {
            path: edges_path,
            line: 1,
            message: "expected header \"source,target\"".into(),
        });
    }
    let mut edges = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_format(&edges_path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let parse = |field: Option<&str>| -> Result<PeerId, SnapshotError> {
            field
                .ok_or("missing field")
                .and_then(|f| f.parse::<PeerId>().map_err(|_| "invalid peer id"))
                .map_err(|m| SnapshotError::Format {
                    path: edges_path.clone(),
                    line,
                    message: m.into(),
                })
        };
        if record.len() != 2 {
            return Err(SnapshotError::Format {
                path: edges_path.clone(),
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        edges.push((parse(record.get(0))?, parse(record.get(1))?));
    }

    let (started_at, finished_at) = if meta_path.exists() {
        let raw = fs::read(&meta_path).map_err(|e| SnapshotError::io(&meta_path, e))?;
        let meta: Meta = serde_json::from_slice(&raw).map_err(|e| SnapshotError::Format {
            path: meta_path.clone(),
            line: e.line() as u64,
            message: e.to_string(),
        })?;
        (meta.started_at, meta.finished_at)
    } else {
        let modified = fs::metadata(&peers_path)
            .and_then(|m| m.modified())
            .map_err(|e| SnapshotError::io(&peers_path, e))?;
        let t = DateTime::<Utc>::from(modified).trunc_subsecs(0);
        (t, t)
    };

    Ok(CrawlSnapshot {
        started_at,
        finished_at,
        peers,
        edges,
    })
}

fn csv_format(path: &Path, e: csv::Error) -> SnapshotError {
    let line = e.position().map_or(0, |p| p.line());
    SnapshotError::Format {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn peer(n: u8, reachable: bool) -> PeerSnapshot {
        PeerSnapshot {
            peer_id: PeerId::from_ed25519_public(&[n; 32]),
            multiaddresses: vec![format!("/ip4/203.0.113.{n}/tcp/4001").parse().unwrap()],
            agent_version: if reachable { "go-ipfs/0.8.0/".into() } else { String::new() },
            reachable,
        }
    }

    fn small() -> CrawlSnapshot {
        let peers = vec![peer(1, true), peer(2, true), peer(3, false)];
        let edges = vec![
            (peers[0].peer_id.clone(), peers[1].peer_id.clone()),
            (peers[1].peer_id.clone(), peers[2].peer_id.clone()),
        ];
        let mut s = CrawlSnapshot {
            started_at: Utc::now(),
            finished_at: Utc::now(),
            peers,
            edges,
        };
        s.normalize();
        s
    }

    #[test]
    fn writes_expected_record_counts_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let snap = small();
        let (peers_path, edges_path) = write_snapshot(&snap, dir.path()).unwrap();

        let json: serde_json::Value = serde_json::from_slice(&fs::read(&peers_path).unwrap()).unwrap();
        let records = json.as_array().unwrap();
        assert_eq!(records.len(), 3);
        let first = records[0].as_object().unwrap();
        for key in ["peer_id", "multiaddrs", "agent_version", "reachable"] {
            assert!(first.contains_key(key), "missing {key}");
        }

        let csv = fs::read_to_string(&edges_path).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "source,target");
        assert_eq!(lines.len(), 3);

        assert_eq!(read_snapshot(dir.path()).unwrap(), snap);
    }

    #[test]
    fn malformed_edge_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        write_snapshot(&small(), dir.path()).unwrap();
        let edges = dir.path().join(EDGES_FILE);
        let mut text = fs::read_to_string(&edges).unwrap();
        text.push_str("not-a-peer,also-not\n");
        fs::write(&edges, text).unwrap();
        match read_snapshot(dir.path()) {
            Err(SnapshotError::Format { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_directory_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_snapshot(&dir.path().join("nope")).unwrap_err();
        assert!(matches!(err, SnapshotError::Io { .. }));
    }
}
