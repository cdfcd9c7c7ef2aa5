//! Passive Bitswap want-list monitoring with bounded one-hop fetches.
//!
//! Three activities run concurrently: a connection manager holding the
//! connection count near a target, an ingestion loop decoding inbound
//! Bitswap messages into want events, and a fetch pool retrieving each
//! first-seen CID directly from connected peers. Everything observed goes
//! through one queue to a single NDJSON writer.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{self, Write};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use crossbeam_channel::{unbounded, Receiver, Sender};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::bitswap::{decode_bitswap_message, encode_bitswap_message, BitswapMessage, Presence, WantType};
use super::classify::{is_flagged, is_image_mime, nsfw_classify, sniff_mime, NsfwClassifier, UNKNOWN_MIME};
use super::cid::Cid;
use super::unixfs::{assemble, block_content, BlockContent};
use crate::kad::{DialError, PeerId, RpcError};

/// Messages received since the previous poll.
#[derive(Debug, Default)]
pub struct Inbound {
    pub messages: Vec<(PeerId, Vec<u8>)>,
    /// Peers whose connection closed.
    pub dropped: Vec<PeerId>,
}

/// Bitswap connectivity as seen by the monitor. Deliberately offers no
/// content routing: fetches can only ask peers already connected.
pub trait ContentNetwork: Send + Sync {
    /// Peers that may be dialed, typically from a crawl.
    fn candidates(&self) -> Vec<PeerId>;

    fn connect(&self, peer: &PeerId) -> Result<(), DialError>;

    fn disconnect(&self, peer: &PeerId);

    fn poll(&self) -> Inbound;

    /// Sends one Bitswap message to a connected peer and returns its reply.
    fn request(&self, peer: &PeerId, message: &[u8], timeout: Duration) -> Result<Vec<u8>, RpcError>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    pub target_connections: usize,
    #[serde(with = "crate::serde_secs")]
    pub fetch_deadline: Duration,
    #[serde(with = "crate::serde_secs")]
    pub duration: Duration,
    pub max_parallel_fetches: usize,
    pub max_fetch_bytes: u64,
    /// Also fetch CIDs first seen in a want-block.
    pub fetch_want_block: bool,
    #[serde(with = "crate::serde_secs")]
    pub poll_interval: Duration,
    #[serde(with = "crate::serde_secs")]
    pub request_timeout: Duration,
    pub nsfw_threshold: f32,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            target_connections: 4000,
            fetch_deadline: Duration::from_secs(15),
            duration: Duration::from_secs(24 * 3600),
            max_parallel_fetches: 32,
            max_fetch_bytes: 16 * 1024 * 1024,
            fetch_want_block: true,
            poll_interval: Duration::from_millis(100),
            request_timeout: Duration::from_secs(2),
            nsfw_threshold: super::classify::DEFAULT_NSFW_THRESHOLD,
        }
    }
}

impl MonitorConfig {
    /// Connection counts the manager tries to stay within (±10%).
    pub fn connection_band(&self) -> (usize, usize) {
        let t = self.target_connections as f64;
        ((t * 0.9).ceil() as usize, (t * 1.1).floor() as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WantEvent {
    pub peer: PeerId,
    pub cid: Cid,
    pub want_type: WantType,
    pub received_at: DateTime<Utc>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FetchStatus {
    Complete,
    Timeout,
    Partial,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FetchResult {
    pub cid: Cid,
    pub status: FetchStatus,
    pub bytes_retrieved: u64,
    /// Seconds from fetch start to completion or cancellation.
    pub duration: f64,
    /// Verified blocks held when the fetch ended.
    pub blocks: usize,
    /// Blocks received whose data did not hash to the requested CID.
    pub rejected_blocks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileReport {
    pub cid: Cid,
    pub size: u64,
    pub mime: String,
    pub is_image: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nsfw_score: Option<f32>,
    /// Name recovered from a UnixFS directory entry, when one is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name_hint: Option<String>,
}

/// One NDJSON log line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MonitorEvent {
    Want(WantEvent),
    Fetch(FetchResult),
    File(FileReport),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorSummary {
    pub want_events: u64,
    pub want_have: u64,
    pub want_block: u64,
    pub cancels: u64,
    pub decode_errors: u64,
    pub unique_cids: u64,
    pub fetches: u64,
    pub complete: u64,
    pub timeout: u64,
    pub partial: u64,
    pub error: u64,
    pub files_total: u64,
    pub files_classified: u64,
    pub files_unknown: u64,
    pub images: u64,
    pub nsfw_scored: u64,
    pub nsfw_flagged: u64,
    pub blocks_retrieved: u64,
    pub blocks_rejected: u64,
    pub bytes_retrieved: u64,
    pub mime_counts: std::collections::BTreeMap<String, u64>,
    pub dials: u64,
    pub connection_errors: u64,
    pub disconnects: u64,
    /// Smallest and largest connection counts once the target band was
    /// first reached.
    pub connections_min: Option<usize>,
    pub connections_max: Option<usize>,
}

impl MonitorSummary {
    fn record(&mut self, event: &MonitorEvent, threshold: f32) {
        match event {
            MonitorEvent::Want(w) => {
                self.want_events += 1;
                match w.want_type {
                    WantType::WantHave => self.want_have += 1,
                    WantType::WantBlock => self.want_block += 1,
                }
            }
            MonitorEvent::Fetch(f) => {
                self.fetches += 1;
                match f.status {
                    FetchStatus::Complete => self.complete += 1,
                    FetchStatus::Timeout => self.timeout += 1,
                    FetchStatus::Partial => self.partial += 1,
                    FetchStatus::Error => self.error += 1,
                }
                self.blocks_retrieved += f.blocks as u64;
                self.blocks_rejected += f.rejected_blocks as u64;
                self.bytes_retrieved += f.bytes_retrieved;
            }
            MonitorEvent::File(r) => {
                self.files_total += 1;
                if r.mime == UNKNOWN_MIME {
                    self.files_unknown += 1;
                } else {
                    self.files_classified += 1;
                }
                *self.mime_counts.entry(r.mime.clone()).or_default() += 1;
                if r.is_image {
                    self.images += 1;
                }
                if let Some(score) = r.nsfw_score {
                    self.nsfw_scored += 1;
                    if is_flagged(score, threshold) {
                        self.nsfw_flagged += 1;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("peer pool exhausted: no connections and no peers left to dial")]
    BootstrapExhausted,
    #[error("invalid monitor configuration: {0}")]
    InvalidConfig(String),
    #[error("event log: {0}")]
    Io(#[from] io::Error),
}

struct Connections {
    live: Vec<PeerId>,
    set: HashSet<PeerId>,
    pool: VecDeque<PeerId>,
    cooling: VecDeque<(Instant, PeerId)>,
    band_reached: bool,
    min: Option<usize>,
    max: Option<usize>,
}

impl Connections {
    fn observe(&mut self, lo: usize) {
        let n = self.live.len();
        self.band_reached |= n >= lo;
        if self.band_reached {
            self.min = Some(self.min.map_or(n, |m| m.min(n)));
            self.max = Some(self.max.map_or(n, |m| m.max(n)));
        }
    }

    fn remove(&mut self, peer: &PeerId) -> bool {
        if self.set.remove(peer) {
            self.live.retain(|p| p != peer);
            true
        } else {
            false
        }
    }
}

struct Shared<'a, N: ?Sized> {
    net: &'a N,
    config: &'a MonitorConfig,
    conns: Mutex<Connections>,
    stop: AtomicBool,
    exhausted: AtomicBool,
    dials: AtomicU64,
    connection_errors: AtomicU64,
    disconnects: AtomicU64,
    decode_errors: AtomicU64,
    cancels: AtomicU64,
    unique: AtomicU64,
}

const REDIAL_COOLDOWN: Duration = Duration::from_secs(30);

impl<N: ContentNetwork + ?Sized> Shared<'_, N> {
    fn connected(&self) -> Vec<PeerId> {
        self.conns.lock().unwrap().live.clone()
    }

    /// One connection-manager pass. Returns false once nothing is connected
    /// and no peer is left to dial; peers cooling down after a failed dial
    /// do not count.
    fn manage(&self) -> bool {
        let (lo, hi) = self.config.connection_band();
        let target = self.config.target_connections;
        let mut c = self.conns.lock().unwrap();
        let now = Instant::now();
        while c.cooling.front().is_some_and(|(t, _)| *t <= now) {
            let (_, p) = c.cooling.pop_front().unwrap();
            c.pool.push_back(p);
        }
        while c.live.len() < target {
            let Some(peer) = c.pool.pop_front() else { break };
            if c.set.contains(&peer) {
                continue;
            }
            self.dials.fetch_add(1, Ordering::Relaxed);
            match self.net.connect(&peer) {
                Ok(()) => {
                    c.set.insert(peer.clone());
                    c.live.push(peer);
                }
                Err(e) => {
                    log::debug!("dial {peer}: {e}");
                    self.connection_errors.fetch_add(1, Ordering::Relaxed);
                    c.cooling.push_back((now + REDIAL_COOLDOWN, peer));
                }
            }
        }
        while c.live.len() > hi {
            let peer = c.live.pop().unwrap();
            c.set.remove(&peer);
            self.net.disconnect(&peer);
            c.pool.push_back(peer);
        }
        c.observe(lo);
        !(c.live.is_empty() && c.pool.is_empty())
    }

    fn ingest(&self, seen: &mut HashSet<Cid>, fetch_tx: &Sender<Cid>, events: &Sender<MonitorEvent>) -> bool {
        let inbound = self.net.poll();
        if !inbound.dropped.is_empty() {
            let mut c = self.conns.lock().unwrap();
            for peer in inbound.dropped {
                if c.remove(&peer) {
                    self.disconnects.fetch_add(1, Ordering::Relaxed);
                    c.pool.push_back(peer);
                }
            }
        }
        let busy = !inbound.messages.is_empty();
        for (peer, raw) in inbound.messages {
            let msg = match decode_bitswap_message(&raw) {
                Ok(m) => m,
                Err(e) => {
                    log::debug!("message from {peer}: {e}");
                    self.decode_errors.fetch_add(1, Ordering::Relaxed);
                    continue;
                }
            };
            for entry in msg.wantlist {
                if entry.cancel {
                    self.cancels.fetch_add(1, Ordering::Relaxed);
                    continue;
                }
                let _ = events.send(MonitorEvent::Want(WantEvent {
                    peer: peer.clone(),
                    cid: entry.cid,
                    want_type: entry.want_type,
                    received_at: Utc::now(),
                }));
                let eligible = entry.want_type == WantType::WantHave || self.config.fetch_want_block;
                if eligible && seen.insert(entry.cid) {
                    self.unique.fetch_add(1, Ordering::Relaxed);
                    let _ = fetch_tx.send(entry.cid);
                }
            }
        }
        busy
    }

    fn holders(&self, cid: &Cid, deadline: Instant) -> Vec<PeerId> {
        let query = encode_bitswap_message(&BitswapMessage::want(*cid, WantType::WantHave));
        let mut out = Vec::new();
        for peer in self.connected() {
            let Some(remaining) = deadline.checked_duration_since(Instant::now()) else { break };
            let Ok(reply) = self.net.request(&peer, &query, remaining.min(self.config.request_timeout)) else {
                continue;
            };
            if let Ok(msg) = decode_bitswap_message(&reply) {
                if msg.presences.contains(&(*cid, Presence::Have)) || msg.blocks.iter().any(|b| b.cid().ok() == Some(*cid)) {
                    out.push(peer);
                }
            }
        }
        out
    }

    /// Asks `holders` for one block, accepting only data that hashes to
    /// `cid`.
    fn block_from(&self, cid: &Cid, holders: &[PeerId], deadline: Instant, rejected: &mut usize) -> Option<Vec<u8>> {
        let query = encode_bitswap_message(&BitswapMessage::want(*cid, WantType::WantBlock));
        for peer in holders {
            let remaining = deadline.checked_duration_since(Instant::now())?;
            let Ok(reply) = self.net.request(peer, &query, remaining.min(self.config.request_timeout)) else {
                continue;
            };
            let Ok(msg) = decode_bitswap_message(&reply) else { continue };
            for block in msg.blocks {
                if block.cid().ok() == Some(*cid) {
                    return Some(block.data);
                }
                *rejected += 1;
            }
        }
        None
    }

    fn fetch(&self, root: Cid) -> (FetchResult, Option<Vec<u8>>) {
        let started = Instant::now();
        let deadline = started + self.config.fetch_deadline;
        let mut store: HashMap<Cid, Vec<u8>> = HashMap::new();
        let mut pending = vec![root];
        let mut holders: Vec<PeerId> = Vec::new();
        let mut bytes = 0u64;
        let mut rejected = 0usize;
        let mut error = None;
        let status = loop {
            let Some(&next) = pending.last() else {
                break FetchStatus::Complete;
            };
            if Instant::now() >= deadline {
                break if store.is_empty() { FetchStatus::Timeout } else { FetchStatus::Partial };
            }
            if holders.is_empty() {
                holders = self.holders(&next, deadline);
            }
            match self.block_from(&next, &holders, deadline, &mut rejected) {
                Some(data) => {
                    pending.pop();
                    bytes += data.len() as u64;
                    match block_content(&next, &data) {
                        Ok(BlockContent::Links(children)) => pending.extend(children.into_iter().rev()),
                        Ok(BlockContent::Bytes(_)) => {}
                        Ok(BlockContent::Other(kind, _)) => {
                            error = Some(format!("{kind:?} nodes are not fetched"));
                            store.insert(next, data);
                            break FetchStatus::Error;
                        }
                        Err(e) => {
                            error = Some(e.to_string());
                            break FetchStatus::Error;
                        }
                    }
                    store.insert(next, data);
                    if bytes > self.config.max_fetch_bytes {
                        error = Some(format!("size cap of {} bytes exceeded", self.config.max_fetch_bytes));
                        break FetchStatus::Partial;
                    }
                }
                None => {
                    holders.clear();
                    let pause = self.config.poll_interval.max(Duration::from_millis(10));
                    if let Some(remaining) = deadline.checked_duration_since(Instant::now()) {
                        thread::sleep(pause.min(remaining));
                    }
                }
            }
        };
        let file = match status {
            FetchStatus::Complete => match assemble(&root, &store) {
                Ok(f) => Some(f),
                Err(e) => {
                    error = Some(e.to_string());
                    None
                }
            },
            _ => None,
        };
        let status = if status == FetchStatus::Complete && file.is_none() {
            FetchStatus::Error
        } else {
            status
        };
        let result = FetchResult {
            cid: root,
            status,
            bytes_retrieved: bytes,
            duration: started.elapsed().as_secs_f64(),
            blocks: store.len(),
            rejected_blocks: rejected,
            error,
        };
        (result, file)
    }
}

/// Classifies a reassembled file.
pub fn file_report(cid: Cid, data: &[u8], classifier: Option<&dyn NsfwClassifier>) -> FileReport {
    let mime = sniff_mime(data);
    let is_image = is_image_mime(mime);
    let nsfw_score = match classifier {
        Some(c) if is_image => match nsfw_classify(data, Some(c)) {
            Ok(s) => Some(s),
            Err(e) => {
                log::debug!("{cid}: {e}");
                None
            }
        },
        _ => None,
    };
    FileReport {
        cid,
        size: data.len() as u64,
        mime: mime.to_string(),
        is_image,
        nsfw_score,
        name_hint: None,
    }
}

fn write_events<W: Write>(
    rx: Receiver<MonitorEvent>,
    mut out: W,
    threshold: f32,
) -> io::Result<MonitorSummary> {
    let mut summary = MonitorSummary::default();
    for event in rx {
        serde_json::to_writer(&mut out, &event)?;
        out.write_all(b"\n")?;
        summary.record(&event, threshold);
    }
    out.flush()?;
    Ok(summary)
}

/// Runs the monitor for `config.duration`, then lets queued fetches finish
/// (each bounded by the fetch deadline). Every event is written to `log` as
/// one JSON object per line.
pub fn monitor<N, W>(
    net: &N,
    config: &MonitorConfig,
    classifier: Option<&dyn NsfwClassifier>,
    log: W,
) -> Result<MonitorSummary, MonitorError>
where
    N: ContentNetwork + ?Sized,
    W: Write + Send,
{
    if config.target_connections == 0 || config.max_parallel_fetches == 0 {
        return Err(MonitorError::InvalidConfig(
            "target_connections and max_parallel_fetches must be positive".into(),
        ));
    }
    let shared = Shared {
        net,
        config,
        conns: Mutex::new(Connections {
            live: Vec::new(),
            set: HashSet::new(),
            pool: net.candidates().into(),
            cooling: VecDeque::new(),
            band_reached: false,
            min: None,
            max: None,
        }),
        stop: AtomicBool::new(false),
        exhausted: AtomicBool::new(false),
        dials: AtomicU64::new(0),
        connection_errors: AtomicU64::new(0),
        disconnects: AtomicU64::new(0),
        decode_errors: AtomicU64::new(0),
        cancels: AtomicU64::new(0),
        unique: AtomicU64::new(0),
    };
    let (event_tx, event_rx) = unbounded::<MonitorEvent>();
    let (fetch_tx, fetch_rx) = unbounded::<Cid>();
    let end = Instant::now() + config.duration;

    let written = thread::scope(|scope| {
        let writer = scope.spawn(move || write_events(event_rx, log, config.nsfw_threshold));

        let shared = &shared;
        scope.spawn(move || {
            while !shared.stop.load(Ordering::Relaxed) {
                if !shared.manage() {
                    shared.exhausted.store(true, Ordering::Relaxed);
                    shared.stop.store(true, Ordering::Relaxed);
                    break;
                }
                thread::sleep(config.poll_interval);
            }
        });

        for _ in 0..config.max_parallel_fetches {
            let rx = fetch_rx.clone();
            let events = event_tx.clone();
            scope.spawn(move || {
                for cid in rx {
                    let (result, file) = shared.fetch(cid);
                    let _ = events.send(MonitorEvent::Fetch(result));
                    if let Some(data) = file {
                        let _ = events.send(MonitorEvent::File(file_report(cid, &data, classifier)));
                    }
                }
            });
        }
        drop(fetch_rx);

        {
            let events = event_tx;
            let mut seen = HashSet::new();
            while Instant::now() < end && !shared.stop.load(Ordering::Relaxed) {
                if !shared.ingest(&mut seen, &fetch_tx, &events) {
                    let left = end.saturating_duration_since(Instant::now());
                    thread::sleep(config.poll_interval.min(left));
                }
            }
            shared.stop.store(true, Ordering::Relaxed);
            drop(fetch_tx);
        }
        writer.join().expect("event writer panicked")
    });

    if shared.exhausted.load(Ordering::Relaxed) {
        return Err(MonitorError::BootstrapExhausted);
    }
    let mut summary = written?;
    let c = shared.conns.into_inner().unwrap();
    summary.connections_min = c.min;
    summary.connections_max = c.max;
    summary.dials = shared.dials.into_inner();
    summary.connection_errors = shared.connection_errors.into_inner();
    summary.disconnects = shared.disconnects.into_inner();
    summary.decode_errors = shared.decode_errors.into_inner();
    summary.cancels = shared.cancels.into_inner();
    summary.unique_cids = shared.unique.into_inner();
    Ok(summary)
}

/// Parses an NDJSON event log.
pub fn read_events(raw: &str) -> Result<Vec<MonitorEvent>, serde_json::Error> {
    raw.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::content::classify::FixedScore;
    use crate::netsim::SimContentNetwork;

    fn quick(deadline_ms: u64, duration_ms: u64, target: usize) -> MonitorConfig {
        MonitorConfig {
            target_connections: target,
            fetch_deadline: Duration::from_millis(deadline_ms),
            duration: Duration::from_millis(duration_ms),
            max_parallel_fetches: 8,
            poll_interval: Duration::from_millis(20),
            ..Default::default()
        }
    }

    fn run(net: &SimContentNetwork, config: &MonitorConfig) -> (MonitorSummary, Vec<MonitorEvent>) {
        let mut buf = Vec::new();
        let summary = monitor(net, config, Some(&FixedScore(0.9)), &mut buf).unwrap();
        let events = read_events(std::str::from_utf8(&buf).unwrap()).unwrap();
        (summary, events)
    }

    fn fetches(events: &[MonitorEvent]) -> Vec<&FetchResult> {
        events
            .iter()
            .filter_map(|e| match e {
                MonitorEvent::Fetch(f) => Some(f),
                _ => None,
            })
            .collect()
    }

    fn png(side: u32) -> Vec<u8> {
        let img = image::RgbImage::from_fn(side, side, |x, y| image::Rgb([x as u8, y as u8, 7]));
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png).unwrap();
        out.into_inner()
    }

    #[test]
    fn seeded_unseeded_and_duplicate_wants() {
        let mut net = SimContentNetwork::with_random_peers(12, 1);
        let peers = net.peers().to_vec();
        let image = png(40);
        let seeded = net.serve_file(&peers[1], &image);
        let big: Vec<u8> = (0..600_000u32).map(|i| (i % 253) as u8).collect();
        let big_cid = net.serve_file(&peers[2], &big);
        let missing = crate::content::cid_of_file(b"nobody serves this");
        net.schedule_want(&peers[0], Duration::ZERO, seeded, WantType::WantHave);
        net.schedule_want(&peers[3], Duration::from_millis(50), seeded, WantType::WantHave);
        net.schedule_want(&peers[4], Duration::ZERO, big_cid, WantType::WantHave);
        net.schedule_want(&peers[5], Duration::ZERO, missing, WantType::WantHave);

        let (summary, events) = run(&net, &quick(800, 300, 12));
        assert_eq!(summary.want_have, 4);
        assert_eq!(summary.unique_cids, 3);
        let f = fetches(&events);
        assert_eq!(f.len(), 3);
        let by = |c: Cid| f.iter().find(|r| r.cid == c).unwrap();
        assert_eq!(by(seeded).status, FetchStatus::Complete);
        assert_eq!(by(big_cid).status, FetchStatus::Complete);
        assert_eq!(by(big_cid).blocks, 4);
        assert_eq!(by(missing).status, FetchStatus::Timeout);
        assert!((by(missing).duration - 0.8).abs() < 0.25, "{}", by(missing).duration);

        let files: Vec<&FileReport> = events
            .iter()
            .filter_map(|e| match e {
                MonitorEvent::File(r) => Some(r),
                _ => None,
            })
            .collect();
        assert_eq!(files.len(), 2);
        let img = files.iter().find(|r| r.cid == seeded).unwrap();
        assert_eq!(img.mime, "image/png");
        assert_eq!(img.size, image.len() as u64);
        assert_eq!(img.nsfw_score, Some(0.9));
        assert_eq!(summary.nsfw_flagged, 1);
        assert_eq!(summary.files_classified + summary.files_unknown, summary.files_total);
    }

    #[test]
    fn tampered_blocks_are_never_counted() {
        let mut net = SimContentNetwork::with_random_peers(4, 2);
        let peers = net.peers().to_vec();
        let data = b"tamper target".repeat(100);
        let cid = net.serve_file(&peers[1], &data);
        net.set_tamper(&peers[1], true);
        net.schedule_want(&peers[0], Duration::ZERO, cid, WantType::WantHave);
        let (_, events) = run(&net, &quick(400, 100, 4));
        let f = fetches(&events);
        assert_eq!(f[0].status, FetchStatus::Timeout);
        assert_eq!(f[0].blocks, 0);
        assert!(f[0].rejected_blocks > 0);

        net.serve_file(&peers[2], &data);
        let (_, events) = run(&net, &quick(400, 100, 4));
        assert_eq!(fetches(&events)[0].status, FetchStatus::Complete);
    }

    #[test]
    fn connection_count_stays_in_band_under_churn() {
        let mut net = SimContentNetwork::with_random_peers(600, 3);
        let peers = net.peers().to_vec();
        for p in peers.iter().step_by(3) {
            net.set_drop_after(p, Duration::from_millis(150));
        }
        for p in peers.iter().skip(1).step_by(10) {
            net.set_dialable(p, false);
        }
        let config = quick(200, 1200, 200);
        let (summary, _) = run(&net, &config);
        let (lo, hi) = config.connection_band();
        assert!(summary.disconnects > 0);
        assert!(summary.connection_errors > 0);
        let (min, max) = (summary.connections_min.unwrap(), summary.connections_max.unwrap());
        assert!(min >= lo && max <= hi, "{min}..{max} outside {lo}..{hi}");
    }

    #[test]
    fn empty_pool_is_fatal() {
        let mut net = SimContentNetwork::with_random_peers(3, 4);
        for p in net.peers().to_vec() {
            net.set_dialable(&p, false);
        }
        let err = monitor(&net, &quick(100, 500, 3), None, io::sink()).unwrap_err();
        assert!(matches!(err, MonitorError::BootstrapExhausted));
        let err = monitor(&SimContentNetwork::new(), &quick(100, 500, 3), None, io::sink()).unwrap_err();
        assert!(matches!(err, MonitorError::BootstrapExhausted));
    }

    #[test]
    fn log_lines_are_tagged() {
        let line = serde_json::to_string(&MonitorEvent::Fetch(FetchResult {
            cid: crate::content::cid_of_file(b""),
            status: FetchStatus::Timeout,
            bytes_retrieved: 0,
            duration: 15.0,
            blocks: 0,
            rejected_blocks: 0,
            error: None,
        }))
        .unwrap();
        assert!(line.starts_with(r#"{"type":"fetch","#));
        assert!(line.contains(r#""status":"timeout""#));
    }
}
