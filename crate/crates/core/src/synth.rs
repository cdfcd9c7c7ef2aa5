//! Constructive generators for snapshots, verdicts and edge lists with
//! prescribed counts. Every generator is deterministic in its inputs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::{IpAddr, Ipv4Addr};

use chrono::{DateTime, TimeDelta, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{is_public_ip, IpSet};
use crate::crawler::{CrawlSnapshot, PeerSnapshot};
use crate::intel::{verdict_map, Category, IntelRecord, IntelVerdict, Jarm, Service, VerdictMap};
use crate::kad::{Multiaddr, PeerId, Protocol};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("inner region {mask:#05b} holds {inner} items but the outer region only {outer}")]
    RegionsDoNotFit { mask: u8, inner: usize, outer: usize },
    #[error("{value:?} needs {count} distinct IPs but the pool has {pool}")]
    RankExceedsPool { value: String, count: usize, pool: usize },
    #[error("fraction {fraction} is not a whole number of {degree} neighbors")]
    FractionNotRepresentable { fraction: f64, degree: usize },
}

/// Hands out distinct public IPv4 addresses in ascending order.
#[derive(Clone, Debug)]
pub struct IpAllocator {
    next: u32,
}

impl IpAllocator {
    pub fn new(start: Ipv4Addr) -> Self {
        IpAllocator { next: start.into() }
    }

    pub fn take_n(&mut self, n: usize) -> Vec<IpAddr> {
        self.by_ref().take(n).collect()
    }
}

impl Default for IpAllocator {
    fn default() -> Self {
        Self::new(Ipv4Addr::new(11, 0, 0, 1))
    }
}

impl Iterator for IpAllocator {
    type Item = IpAddr;

    fn next(&mut self) -> Option<IpAddr> {
        loop {
            let ip = IpAddr::V4(Ipv4Addr::from(self.next));
            self.next = self.next.checked_add(1)?;
            if is_public_ip(&ip) {
                return Some(ip);
            }
        }
    }
}

/// Exclusive region sizes of a three-set Venn diagram.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VennRegions {
    /// In exactly one set: A, B, C.
    pub only: [usize; 3],
    /// In exactly two sets: AB, AC, BC.
    pub pair_only: [usize; 3],
    pub triple: usize,
}

impl VennRegions {
    /// Size of the region whose membership mask is `mask` (bit i = set i).
    pub fn count(&self, mask: u8) -> usize {
        match mask {
            0b001 => self.only[0],
            0b010 => self.only[1],
            0b100 => self.only[2],
            0b011 => self.pair_only[0],
            0b101 => self.pair_only[1],
            0b110 => self.pair_only[2],
            0b111 => self.triple,
            _ => 0,
        }
    }

    pub fn totals(&self) -> [usize; 3] {
        [0, 1, 2].map(|i| (1..8u8).filter(|m| m & (1 << i) != 0).map(|m| self.count(m)).sum())
    }

    /// Inclusive pairwise intersections AB, AC, BC.
    pub fn pairwise(&self) -> [usize; 3] {
        [0, 1, 2].map(|p| self.pair_only[p] + self.triple)
    }

    pub fn union(&self) -> usize {
        (1..8u8).map(|m| self.count(m)).sum()
    }

    pub fn check_within(&self, outer: &VennRegions) -> Result<(), SynthError> {
        for mask in 1..8u8 {
            let (inner, outer) = (self.count(mask), outer.count(mask));
            if inner > outer {
                return Err(SynthError::RegionsDoNotFit { mask, inner, outer });
            }
        }
        Ok(())
    }
}

/// IP overlap of three crawls.
pub const CRAWL_OVERLAP: VennRegions = VennRegions {
    only: [36308, 30246, 82321],
    pair_only: [5564, 3305, 6347],
    triple: 16783,
};

/// Overlap of the malicious IPs of the same three crawls.
pub const MALICIOUS_OVERLAP: VennRegions = VennRegions {
    only: [16932, 13415, 15843],
    pair_only: [3512, 2290, 3636],
    triple: 5127,
};

/// Malicious IPs per crawl when each crawl is classified on its own day.
pub const MALICIOUS_PER_CRAWL: [usize; 3] = [29313, 27201, 31855];

pub const UNREACHABLE_PER_CRAWL: [f64; 3] = [0.50, 0.61, 0.49];

pub const STORM_AGENT: &str = "storm";
pub const STORM_PEERS_FIRST_CRAWL: usize = 2289;

pub const TOP_JARMS: [(&str, usize); 5] = [
    ("2ad2ad0002ad2ad00042d42d0000008aec5bb03750a1d7eddfa29fb2d1deea", 2070),
    ("2ad2ad16d2ad2ad22c2ad2ad2ad2adfd9c9d14e4f4f67f94f0359f8b28f532", 1378),
    ("15d3fd16d29d29d00042d43d000000fe02290512647416dcf0a400ccbc0b6b", 577),
    ("15d3fd16d29d29d00042d43d0000009ec686233a4398bea334ba5e62e34a01", 562),
    ("15d3fd16d21d21d00042d43d000000fe02290512647416dcf0a400ccbc0b6b", 489),
];

pub const EMOTET_JARM: &str = "15d3fd16d29d29d00042d43d0000009ec686233a4398bea334ba5e62e34a01";
pub const EMOTET_MALICIOUS_IPS: usize = 68;

pub const TOP_SINKHOLED_URLS: [(&str, usize); 5] = [
    ("differentia.ru", 38681),
    ("disorderstatus.ru", 15504),
    ("atomictrivia.ru", 7049),
    ("amnsreiuojy.ru", 5662),
    ("restlesz.su", 2180),
];

/// Distinct `.xyz` domains among sinkholed requests.
pub const XYZ_DOMAINS: usize = 11227;

pub const TOP_CAMPAIGNS: [(&str, usize); 6] = [
    ("tinba", 30019),
    ("conflicker", 22650),
    ("nymaim", 22228),
    ("andromeda", 6403),
    ("ranbyus", 4845),
    ("mirai", 3750),
];

pub const TOP_PORTS: [(u16, usize); 10] = [
    (21, 1272),
    (22, 16941),
    (80, 11512),
    (443, 6631),
    (3389, 2389),
    (4001, 1397),
    (5001, 2361),
    (7547, 1761),
    (8080, 3320),
    (8081, 2232),
];

/// Service name, its usual port, and IP count.
pub const TOP_SERVICES: [(&str, u16, usize); 10] = [
    ("Apache httpd", 80, 3835),
    ("Chromecast", 8008, 346),
    ("MS IIS", 80, 412),
    ("MySQL", 3306, 393),
    ("OpenSSH", 22, 17217),
    ("PPTP", 1723, 397),
    ("Postfix smtpd", 25, 473),
    ("RDP", 3389, 2357),
    ("mDNS", 5353, 1230),
    ("nginx", 80, 8733),
];

/// Operating systems as percentage shares of hosts reporting one.
pub const OS_SHARES: [(&str, f64); 5] = [
    ("Ubuntu", 69.0),
    ("Windows", 19.0),
    ("Asus-WRT", 5.5),
    ("Debian", 4.5),
    ("DSM", 2.0),
];

/// Hosts reporting an operating system in [`intel_fixture`].
pub const OS_HOSTS: usize = 2000;

/// Allocates fresh IPs for every region, keyed by membership mask.
pub fn venn_ips(regions: &VennRegions, alloc: &mut IpAllocator) -> BTreeMap<u8, Vec<IpAddr>> {
    (1..8u8).map(|m| (m, alloc.take_n(regions.count(m)))).collect()
}

/// The three sets whose Venn decomposition is exactly `regions`.
pub fn venn_sets(regions: &VennRegions, labels: [&str; 3], alloc: &mut IpAllocator) -> [IpSet; 3] {
    sets_from_regions(&venn_ips(regions, alloc), labels)
}

fn sets_from_regions(by_mask: &BTreeMap<u8, Vec<IpAddr>>, labels: [&str; 3]) -> [IpSet; 3] {
    [0, 1, 2].map(|i| {
        let ips = by_mask
            .iter()
            .filter(|(m, _)| *m & (1 << i) != 0)
            .flat_map(|(_, ips)| ips.iter().copied());
        IpSet::from_ips(labels[i], ips)
    })
}

/// Three sets shaped by `outer` with a marked subset shaped by `inner`.
#[derive(Clone, Debug)]
pub struct NestedVenn {
    pub sets: [IpSet; 3],
    pub marked: BTreeSet<IpAddr>,
}

pub fn nested_venn(
    outer: &VennRegions,
    inner: &VennRegions,
    labels: [&str; 3],
    alloc: &mut IpAllocator,
) -> Result<NestedVenn, SynthError> {
    inner.check_within(outer)?;
    let by_mask = venn_ips(outer, alloc);
    let marked = by_mask
        .iter()
        .flat_map(|(m, ips)| ips[..inner.count(*m)].iter().copied())
        .collect();
    Ok(NestedVenn {
        sets: sets_from_regions(&by_mask, labels),
        marked,
    })
}

fn fixture_record(source: &str, category: Category) -> IntelRecord {
    let mut r = IntelRecord::new(source, category);
    r.observed_at = fixture_epoch();
    r
}

fn fixture_epoch() -> DateTime<Utc> {
    DateTime::from_timestamp(1_656_633_600, 0).expect("valid timestamp")
}

/// A verdict for every IP in `ips`; those in `malicious` carry one record.
pub fn verdicts_for<'a>(ips: impl IntoIterator<Item = &'a IpAddr>, malicious: &BTreeSet<IpAddr>) -> VerdictMap {
    verdict_map(ips.into_iter().map(|ip| {
        if malicious.contains(ip) {
            IntelVerdict::from_records(*ip, vec![fixture_record("fixture", Category::Malware)])
        } else {
            IntelVerdict::benign(*ip)
        }
    }))
}

/// Verdicts for `ips` with exactly `malicious` of them, chosen by `seed`,
/// marked malicious.
pub fn partition_verdicts(ips: &IpSet, malicious: usize, seed: u64) -> VerdictMap {
    let mut all: Vec<IpAddr> = ips.ips.iter().copied().collect();
    all.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let chosen: BTreeSet<IpAddr> = all.into_iter().take(malicious).collect();
    verdicts_for(&ips.ips, &chosen)
}

/// Shape of a generated snapshot.
#[derive(Clone, Debug)]
pub struct SnapshotProfile {
    pub label: String,
    pub unreachable_fraction: f64,
    /// Agents pinned to exactly this many reachable peers.
    pub agents: Vec<(String, usize)>,
    /// Adds peers and addresses that IP extraction must ignore: private
    /// and loopback addresses, relay circuits, multi-homed and co-located
    /// peers.
    pub decoys: bool,
    pub seed: u64,
}

impl SnapshotProfile {
    pub fn new(label: impl Into<String>, seed: u64) -> Self {
        SnapshotProfile {
            label: label.into(),
            unreachable_fraction: 0.0,
            agents: Vec::new(),
            decoys: true,
            seed,
        }
    }
}

const FILLER_AGENTS: [&str; 6] = [
    "go-ipfs/0.8.0/48f94e2",
    "go-ipfs/0.8.0/ce693d7",
    "go-ipfs/0.9.0/179d1d1",
    "go-ipfs/0.7.0/",
    "hydra-booster/0.7.4",
    "go-ipfs/0.12.0/",
];

fn tcp(ip: IpAddr) -> Multiaddr {
    let p = match ip {
        IpAddr::V4(v) => Protocol::Ip4(v),
        IpAddr::V6(v) => Protocol::Ip6(v),
    };
    Multiaddr::new(vec![p, Protocol::Tcp(4001)])
}

/// A snapshot whose public IP set is exactly `ips`.
///
/// Every 20th peer is multi-homed on two of the IPs, every 25th IP is
/// shared by a second peer, every 10th peer also advertises a private
/// address, and one peer in 100 extra is reachable only through a relay.
pub fn snapshot_from_ips(ips: &[IpAddr], profile: &SnapshotProfile) -> CrawlSnapshot {
    let mut rng = ChaCha20Rng::seed_from_u64(profile.seed);
    let mut peers: Vec<PeerSnapshot> = Vec::with_capacity(ips.len() + ips.len() / 20);
    let mut i = 0;
    while i < ips.len() {
        let mut addrs = vec![tcp(ips[i])];
        i += 1;
        if profile.decoys {
            if peers.len() % 20 == 19 && i < ips.len() {
                addrs.push(tcp(ips[i]));
                i += 1;
            }
            if peers.len() % 10 == 3 {
                addrs.push(tcp(IpAddr::V4(Ipv4Addr::new(192, 168, rng.random(), rng.random()))));
                addrs.push(tcp(IpAddr::V4(Ipv4Addr::LOCALHOST)));
            }
        }
        peers.push(PeerSnapshot {
            peer_id: PeerId::random(&mut rng),
            multiaddresses: addrs,
            agent_version: String::new(),
            reachable: true,
        });
        if profile.decoys && i % 25 == 0 {
            peers.push(PeerSnapshot {
                peer_id: PeerId::random(&mut rng),
                multiaddresses: vec![tcp(ips[i - 1])],
                agent_version: String::new(),
                reachable: true,
            });
        }
    }
    if profile.decoys {
        let relay_peer = PeerId::random(&mut rng);
        let relay_ip = IpAddr::V4(Ipv4Addr::new(198, 51, 100, 7));
        for _ in 0..ips.len() / 100 {
            let addr = tcp(relay_ip)
                .with(Protocol::P2p(relay_peer.clone()))
                .with(Protocol::P2pCircuit);
            peers.push(PeerSnapshot {
                peer_id: PeerId::random(&mut rng),
                multiaddresses: vec![addr],
                agent_version: String::new(),
                reachable: true,
            });
        }
    }
    peers.shuffle(&mut rng);
    let unreachable = (profile.unreachable_fraction * peers.len() as f64).round() as usize;
    let mut pinned = profile.agents.iter().flat_map(|(a, n)| std::iter::repeat_n(a.as_str(), *n));
    for (idx, p) in peers.iter_mut().enumerate() {
        if idx < unreachable {
            p.reachable = false;
            continue;
        }
        p.agent_version = match pinned.next() {
            Some(a) => a.to_string(),
            None => FILLER_AGENTS[rng.random_range(0..FILLER_AGENTS.len())].to_string(),
        };
    }
    let n = peers.len();
    let edges = (0..n)
        .flat_map(|s| (1..=2).map(move |d| (s, (s + d) % n)))
        .filter(|(s, t)| s != t)
        .map(|(s, t)| (peers[s].peer_id.clone(), peers[t].peer_id.clone()))
        .collect();
    let started_at = fixture_epoch();
    let mut snap = CrawlSnapshot {
        started_at,
        finished_at: started_at + TimeDelta::minutes(30),
        peers,
        edges,
    };
    snap.normalize();
    snap
}

/// Three crawls with the crawl and malicious overlaps above, and the
/// per-day classifications of each crawl.
#[derive(Clone, Debug)]
pub struct CrawlFixture {
    pub sets: [IpSet; 3],
    pub snapshots: Vec<CrawlSnapshot>,
    /// IPs malicious under a single month-wide classification.
    pub malicious: BTreeSet<IpAddr>,
    /// Verdicts for every crawled IP under that classification.
    pub verdicts: VerdictMap,
    /// Verdicts of each crawl classified on its own day.
    pub per_crawl: Vec<VerdictMap>,
}

pub fn crawl_fixture(seed: u64) -> CrawlFixture {
    let labels = ["Crawl 1", "Crawl 2", "Crawl 3"];
    let nested = nested_venn(&CRAWL_OVERLAP, &MALICIOUS_OVERLAP, labels, &mut IpAllocator::default())
        .expect("malicious overlap fits the crawl overlap");
    let snapshots = (0..3)
        .map(|i| {
            let ips: Vec<IpAddr> = nested.sets[i].ips.iter().copied().collect();
            let mut profile = SnapshotProfile::new(labels[i], seed.wrapping_add(i as u64));
            profile.unreachable_fraction = UNREACHABLE_PER_CRAWL[i];
            if i == 0 {
                profile.agents = vec![(STORM_AGENT.to_string(), STORM_PEERS_FIRST_CRAWL)];
            }
            snapshot_from_ips(&ips, &profile)
        })
        .collect();
    let all: BTreeSet<IpAddr> = nested.sets.iter().flat_map(|s| s.ips.iter().copied()).collect();
    let verdicts = verdicts_for(&all, &nested.marked);
    let per_crawl = (0..3)
        .map(|i| partition_verdicts(&nested.sets[i], MALICIOUS_PER_CRAWL[i], seed.wrapping_add(100 + i as u64)))
        .collect();
    CrawlFixture {
        sets: nested.sets,
        snapshots,
        malicious: nested.marked,
        verdicts,
        per_crawl,
    }
}

/// Gives each value in `ranking` to exactly its count of distinct IPs of
/// `pool`. Consecutive values start where the previous one stopped, so IPs
/// collect several values.
pub fn assign_ranked<V: std::fmt::Debug>(
    pool: &[IpAddr],
    ranking: &[(V, usize)],
    mut apply: impl FnMut(IpAddr, &V),
) -> Result<(), SynthError> {
    let mut offset = 0;
    for (value, count) in ranking {
        if *count > pool.len() {
            return Err(SynthError::RankExceedsPool {
                value: format!("{value:?}"),
                count: *count,
                pool: pool.len(),
            });
        }
        for i in 0..*count {
            apply(pool[(offset + i) % pool.len()], value);
        }
        offset = (offset + count) % pool.len().max(1);
    }
    Ok(())
}

/// Percentage shares turned into counts over `hosts`.
pub fn shares_to_counts<'a>(shares: &[(&'a str, f64)], hosts: usize) -> Vec<(&'a str, usize)> {
    shares
        .iter()
        .map(|(v, s)| (*v, (s / 100.0 * hosts as f64).round() as usize))
        .collect()
}

/// Verdicts for `malicious` whose records reproduce the ranked JARM,
/// sinkhole, campaign, port, service and OS tables above. Each IP carries a
/// baseline malware record, one sinkhole record per URL, one botnet record
/// per campaign and at most one host record with its JARM, ports, services
/// and OS. `seed` only permutes which IPs receive which values.
pub fn intel_fixture(malicious: &[IpAddr], seed: u64) -> Result<VerdictMap, SynthError> {
    let mut pool = malicious.to_vec();
    pool.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let mut records: HashMap<IpAddr, Vec<IntelRecord>> = pool
        .iter()
        .map(|ip| (*ip, vec![fixture_record("fixture", Category::Malware)]))
        .collect();
    let mut hosts: HashMap<IpAddr, IntelRecord> = HashMap::new();

    assign_ranked(&pool, &TOP_SINKHOLED_URLS, |ip, url| {
        let mut r = fixture_record("fixture", Category::SinkholeHit);
        r.sinkholed_url = Some((*url).to_string());
        records.get_mut(&ip).expect("pool ip").push(r);
    })?;
    let xyz: Vec<(String, usize)> = (0..XYZ_DOMAINS).map(|i| (format!("x{i:05}.xyz"), 1)).collect();
    assign_ranked(&pool, &xyz, |ip, domain| {
        let mut r = fixture_record("fixture", Category::SinkholeHit);
        r.sinkholed_url = Some(domain.clone());
        records.get_mut(&ip).expect("pool ip").push(r);
    })?;
    assign_ranked(&pool, &TOP_CAMPAIGNS, |ip, campaign| {
        let mut r = fixture_record("fixture", Category::Botnet);
        r.campaign = Some((*campaign).to_string());
        records.get_mut(&ip).expect("pool ip").push(r);
    })?;

    fn host_record(hosts: &mut HashMap<IpAddr, IntelRecord>, ip: IpAddr) -> &mut IntelRecord {
        hosts
            .entry(ip)
            .or_insert_with(|| fixture_record("fixture-hosts", Category::Other))
    }
    assign_ranked(&pool, &TOP_JARMS, |ip, jarm| {
        host_record(&mut hosts, ip).jarm = Some(jarm.parse::<Jarm>().expect("valid JARM"));
    })?;
    assign_ranked(&pool, &TOP_PORTS, |ip, port| {
        host_record(&mut hosts, ip).open_ports.get_or_insert_with(Vec::new).push(*port);
    })?;
    let services: Vec<((&str, u16), usize)> = TOP_SERVICES.iter().map(|(n, p, c)| ((*n, *p), *c)).collect();
    assign_ranked(&pool, &services, |ip, (name, port)| {
        host_record(&mut hosts, ip).services.get_or_insert_with(Vec::new).push(Service {
            port: *port,
            name: (*name).to_string(),
        });
    })?;
    assign_ranked(&pool, &shares_to_counts(&OS_SHARES, OS_HOSTS), |ip, os| {
        host_record(&mut hosts, ip).os = Some((*os).to_string());
    })?;
    for (ip, r) in hosts {
        records.get_mut(&ip).expect("pool ip").push(r);
    }
    Ok(verdict_map(records.into_iter().map(|(ip, rs)| IntelVerdict::from_records(ip, rs))))
}

/// A crawl-graph edge list with IPs and verdicts, the input of
/// neighbor-maliciousness analysis.
#[derive(Clone, Debug, Default)]
pub struct EdgeFixture {
    pub edges: Vec<(PeerId, PeerId)>,
    pub peer_ips: HashMap<PeerId, Vec<IpAddr>>,
    pub verdicts: VerdictMap,
}

/// `nodes` peers with random out-degree up to 30, about 10% multi-homed and
/// 5% sharing an IP with another peer, a third of IPs malicious, some IPs
/// without verdicts and occasional self and duplicate edges.
pub fn random_edge_fixture(nodes: usize, seed: u64) -> EdgeFixture {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut alloc = IpAllocator::new(Ipv4Addr::new(20, 0, 0, 1));
    let peers: Vec<PeerId> = (0..nodes).map(|_| PeerId::random(&mut rng)).collect();
    let mut peer_ips: HashMap<PeerId, Vec<IpAddr>> = HashMap::new();
    let mut all_ips: Vec<IpAddr> = Vec::new();
    for p in &peers {
        let mut ips = Vec::new();
        if !all_ips.is_empty() && rng.random_bool(0.05) {
            ips.push(all_ips[rng.random_range(0..all_ips.len())]);
        } else {
            ips.push(alloc.next().expect("address space"));
        }
        if rng.random_bool(0.1) {
            ips.push(alloc.next().expect("address space"));
        }
        all_ips.extend(ips.iter().copied());
        peer_ips.insert(p.clone(), ips);
    }
    all_ips.sort();
    all_ips.dedup();
    let mut verdicts = VerdictMap::new();
    for ip in &all_ips {
        if rng.random_bool(0.05) {
            continue;
        }
        let v = if rng.random_bool(1.0 / 3.0) {
            IntelVerdict::from_records(*ip, vec![fixture_record("fixture", Category::Malware)])
        } else {
            IntelVerdict::benign(*ip)
        };
        verdicts.insert(*ip, v);
    }
    let mut edges = Vec::new();
    for p in &peers {
        for _ in 0..rng.random_range(0..=30) {
            edges.push((p.clone(), peers[rng.random_range(0..nodes)].clone()));
        }
    }
    EdgeFixture {
        edges,
        peer_ips,
        verdicts,
    }
}

/// Sources whose neighbor sets have exactly the given malicious fractions.
///
/// Every source has `degree` distinct neighbors drawn from a shared pool of
/// leaf peers that report no neighbors of their own. Each fraction times
/// `degree` must be a whole number. Half of the edges are reported twice,
/// as by two overlapping crawls.
pub fn malice_fixture(malicious_sources: &[f64], benign_sources: &[f64], degree: usize) -> Result<EdgeFixture, SynthError> {
    let counts = |fractions: &[f64]| -> Result<Vec<usize>, SynthError> {
        fractions
            .iter()
            .map(|&f| {
                let exact = f * degree as f64;
                let m = exact.round();
                if (exact - m).abs() > 1e-6 || m < 0.0 || m > degree as f64 {
                    Err(SynthError::FractionNotRepresentable { fraction: f, degree })
                } else {
                    Ok(m as usize)
                }
            })
            .collect()
    };
    let mal_counts = counts(malicious_sources)?;
    let ben_counts = counts(benign_sources)?;
    let max_mal = mal_counts.iter().chain(&ben_counts).copied().max().unwrap_or(0);

    let mut rng = ChaCha20Rng::seed_from_u64(degree as u64);
    let mut alloc = IpAllocator::new(Ipv4Addr::new(30, 0, 0, 1));
    let mut fx = EdgeFixture::default();
    let mut add_peer = |fx: &mut EdgeFixture, malicious: bool| -> PeerId {
        let id = PeerId::random(&mut rng);
        let ip = alloc.next().expect("address space");
        fx.peer_ips.insert(id.clone(), vec![ip]);
        let v = if malicious {
            IntelVerdict::from_records(ip, vec![fixture_record("fixture", Category::Malware)])
        } else {
            IntelVerdict::benign(ip)
        };
        fx.verdicts.insert(ip, v);
        id
    };
    let bad_leaves: Vec<PeerId> = (0..max_mal).map(|_| add_peer(&mut fx, true)).collect();
    let good_leaves: Vec<PeerId> = (0..degree).map(|_| add_peer(&mut fx, false)).collect();
    let sources = mal_counts.iter().map(|c| (true, *c)).chain(ben_counts.iter().map(|c| (false, *c)));
    for (n, (malicious, bad)) in sources.enumerate() {
        let src = add_peer(&mut fx, malicious);
        let neighbors = (0..bad)
            .map(|i| &bad_leaves[(n + i) % bad_leaves.len()])
            .chain((0..degree - bad).map(|i| &good_leaves[(n + i) % good_leaves.len()]));
        for (j, dst) in neighbors.enumerate() {
            fx.edges.push((src.clone(), dst.clone()));
            if j % 2 == 0 {
                fx.edges.push((src.clone(), dst.clone()));
            }
        }
    }
    Ok(fx)
}

/// Neighbor fractions with malicious median 0.07 and mean ≈ 0.095, benign
/// median 0.07 and mean ≈ 0.092.
pub fn tuned_malice_fractions() -> (Vec<f64>, Vec<f64>) {
    let side = |high: f64| -> Vec<f64> {
        let mut v = vec![0.05; 25];
        v.push(0.07);
        v.extend(std::iter::repeat_n(high, 25));
        v
    };
    (side(0.14), side(0.135))
}

pub const TUNED_MALICE_DEGREE: usize = 200;

pub fn tuned_malice_fixture() -> EdgeFixture {
    let (mal, ben) = tuned_malice_fractions();
    malice_fixture(&mal, &ben, TUNED_MALICE_DEGREE).expect("fractions are multiples of 1/200")
}
