//! Statistics computed from raw crawl snapshots: public IP extraction, Venn
//! intersections across crawls, agent histograms and unreachable fractions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crawler::{CrawlSnapshot, PeerSnapshot};
use crate::kad::{PeerId, Protocol};

/// A labelled set of public IP addresses. Every distinct IP counts as a node.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IpSet {
    pub label: String,
    pub ips: BTreeSet<IpAddr>,
}

impl IpSet {
    pub fn new(label: impl Into<String>) -> Self {
        IpSet {
            label: label.into(),
            ips: BTreeSet::new(),
        }
    }

    pub fn from_ips(label: impl Into<String>, ips: impl IntoIterator<Item = IpAddr>) -> Self {
        IpSet {
            label: label.into(),
            ips: ips.into_iter().filter(|ip| is_public_ip(ip)).map(canonical_ip).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ips.is_empty()
    }

    pub fn contains(&self, ip: &IpAddr) -> bool {
        self.ips.contains(ip)
    }
}

/// Maps IPv4-mapped IPv6 addresses to plain IPv4.
pub fn canonical_ip(ip: IpAddr) -> IpAddr {
    match ip {
        IpAddr::V6(v6) => match v6.to_ipv4_mapped() {
            Some(v4) => IpAddr::V4(v4),
            None => IpAddr::V6(v6),
        },
        v4 => v4,
    }
}

/// False for private, loopback, link-local, unspecified, multicast and
/// carrier-grade NAT ranges.
pub fn is_public_ip(ip: &IpAddr) -> bool {
    match canonical_ip(*ip) {
        IpAddr::V4(v4) => is_public_v4(v4),
        IpAddr::V6(v6) => is_public_v6(v6),
    }
}

fn is_public_v4(ip: Ipv4Addr) -> bool {
    let o = ip.octets();
    !(ip.is_private()
        || ip.is_loopback()
        || ip.is_link_local()
        || ip.is_unspecified()
        || ip.is_broadcast()
        || ip.is_multicast()
        || o[0] == 0
        // Carrier-grade NAT 100.64.0.0/10.
        || (o[0] == 100 && (o[1] & 0xc0) == 64)
        // Reserved 240.0.0.0/4.
        || o[0] >= 240)
}

fn is_public_v6(ip: Ipv6Addr) -> bool {
    let s = ip.segments();
    !(ip.is_loopback()
        || ip.is_unspecified()
        || ip.is_multicast()
        // Unique local fc00::/7.
        || (s[0] & 0xfe00) == 0xfc00
        // Link-local fe80::/10.
        || (s[0] & 0xffc0) == 0xfe80)
}

/// Public IPs a peer advertises outside relay circuits, deduplicated in
/// order of appearance.
pub fn peer_public_ips(peer: &PeerSnapshot) -> Vec<IpAddr> {
    let mut out = Vec::new();
    for addr in peer.multiaddresses.iter().filter(|a| !a.is_relayed()) {
        for component in addr.components() {
            let ip = match component {
                Protocol::Ip4(v4) => IpAddr::V4(*v4),
                Protocol::Ip6(v6) => IpAddr::V6(*v6),
                _ => continue,
            };
            let ip = canonical_ip(ip);
            if is_public_ip(&ip) && !out.contains(&ip) {
                out.push(ip);
            }
        }
    }
    out
}

/// Collects every public IP advertised in the snapshot. Relayed addresses are
/// discarded entirely because the IP they carry belongs to the relay.
pub fn extract_ips(snapshot: &CrawlSnapshot, label: impl Into<String>) -> IpSet {
    IpSet::from_ips(label, snapshot.peers.iter().flat_map(peer_public_ips))
}

/// Peer to public IPs over all given snapshots; peers without one are left
/// out.
pub fn peer_ip_map<'a>(snapshots: impl IntoIterator<Item = &'a CrawlSnapshot>) -> HashMap<PeerId, Vec<IpAddr>> {
    let mut map: HashMap<PeerId, Vec<IpAddr>> = HashMap::new();
    for snap in snapshots {
        for peer in &snap.peers {
            for ip in peer_public_ips(peer) {
                let ips = map.entry(peer.peer_id.clone()).or_default();
                if !ips.contains(&ip) {
                    ips.push(ip);
                }
            }
        }
    }
    map
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("intersection needs 2 or 3 sets, got {0}")]
    Arity(usize),
    #[error("snapshot has no peers")]
    EmptySnapshot,
}

/// Venn decomposition of two or three IP sets.
///
/// `regions` maps a membership mask (bit i set = in set i) to the number of
/// IPs in exactly those sets. `totals`, `pairwise` and `triple` hold the
/// inclusive counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub labels: Vec<String>,
    pub totals: Vec<usize>,
    pub regions: BTreeMap<u8, usize>,
    /// Inclusive pairwise intersections keyed "i&j".
    pub pairwise: BTreeMap<String, usize>,
    pub triple: Option<usize>,
    pub union: usize,
}

impl IntersectionReport {
    /// Count of IPs in exactly the sets named by `members` (indices).
    pub fn exclusive(&self, members: &[usize]) -> usize {
        let mask = members.iter().fold(0u8, |m, &i| m | (1 << i));
        self.regions.get(&mask).copied().unwrap_or(0)
    }

    pub fn pair(&self, i: usize, j: usize) -> usize {
        let (a, b) = (i.min(j), i.max(j));
        self.pairwise.get(&format!("{a}&{b}")).copied().unwrap_or(0)
    }
}

pub fn intersect_report(sets: &[IpSet]) -> Result<IntersectionReport, AnalyticsError> {
    if !(2..=3).contains(&sets.len()) {
        return Err(AnalyticsError::Arity(sets.len()));
    }
    let mut membership: HashMap<&IpAddr, u8> = HashMap::new();
    for (i, set) in sets.iter().enumerate() {
        for ip in &set.ips {
            *membership.entry(ip).or_default() |= 1 << i;
        }
    }
    let full = (1u8 << sets.len()) - 1;
    let mut regions: BTreeMap<u8, usize> = (1..=full).map(|m| (m, 0)).collect();
    for mask in membership.values() {
        *regions.get_mut(mask).expect("mask in range") += 1;
    }
    let inclusive = |want: u8| -> usize {
        regions
            .iter()
            .filter(|(m, _)| *m & want == want)
            .map(|(_, c)| c)
            .sum()
    };
    let mut pairwise = BTreeMap::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            pairwise.insert(format!("{i}&{j}"), inclusive((1 << i) | (1 << j)));
        }
    }
    Ok(IntersectionReport {
        labels: sets.iter().map(|s| s.label.clone()).collect(),
        totals: sets.iter().map(IpSet::len).collect(),
        triple: (sets.len() == 3).then(|| inclusive(0b111)),
        union: membership.len(),
        regions,
        pairwise,
    })
}

/// Collapses everything after `name/major.minor` into `*.*`, e.g.
/// `go-ipfs/0.8.0/48f94e2` becomes `go-ipfs/0.8.0/*.*`. Agents without a
/// version segment and a suffix are returned unchanged.
pub fn merge_agent_label(agent: &str) -> String {
    let mut parts = agent.splitn(3, '/');
    let (Some(name), Some(version), Some(rest)) = (parts.next(), parts.next(), parts.next()) else {
        return agent.to_string();
    };
    if rest.is_empty() || !version.chars().any(|c| c.is_ascii_digit()) {
        return agent.to_string();
    }
    format!("{name}/{version}/*.*")
}

/// Counts agents over reachable peers with a non-empty agent, sorted by
/// descending count then label. `top_n = None` keeps every label.
pub fn agent_histogram(
    snapshot: &CrawlSnapshot,
    top_n: Option<usize>,
    merge_subversions: bool,
) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for peer in snapshot.peers.iter().filter(|p| p.reachable && !p.agent_version.is_empty()) {
        let label = if merge_subversions {
            merge_agent_label(&peer.agent_version)
        } else {
            peer.agent_version.clone()
        };
        *counts.entry(label).or_default() += 1;
    }
    let mut out: Vec<_> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(n) = top_n {
        out.truncate(n);
    }
    out
}

pub fn unreachable_fraction(snapshot: &CrawlSnapshot) -> Result<f64, AnalyticsError> {
    if snapshot.peers.is_empty() {
        return Err(AnalyticsError::EmptySnapshot);
    }
    let unreachable = snapshot.peers.iter().filter(|p| !p.reachable).count();
    Ok(unreachable as f64 / snapshot.peers.len() as f64)
}
