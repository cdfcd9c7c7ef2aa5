//! Threat intelligence on crawled IPs: normalized provider records, the
//! at-least-one-record verdict rule, and the statistics built on verdicts.

mod cache;
mod http;
mod provider;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::IpSet;
use crate::kad::PeerId;

pub use cache::{CacheError, IntelCache, Resolution, DEFAULT_TTL};
pub use http::{SpamhausClient, VirusTotalClient};
pub use provider::{query_provider, FixtureProvider, IntelProvider, ProviderError, RetryPolicy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    Malware,
    Spam,
    SinkholeHit,
    Botnet,
    Phishing,
    Other,
}

/// A JARM TLS fingerprint: exactly 62 lowercase hex characters.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Jarm(String);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid JARM {0:?}: expected 62 lowercase hex characters")]
pub struct InvalidJarm(pub String);

impl Jarm {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Jarm {
    type Error = InvalidJarm;

    fn try_from(s: String) -> Result<Self, InvalidJarm> {
        if s.len() == 62 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            Ok(Jarm(s))
        } else {
            Err(InvalidJarm(s))
        }
    }
}

impl FromStr for Jarm {
    type Err = InvalidJarm;

    fn from_str(s: &str) -> Result<Self, InvalidJarm> {
        Jarm::try_from(s.to_string())
    }
}

impl From<Jarm> for String {
    fn from(j: Jarm) -> String {
        j.0
    }
}

impl fmt::Display for Jarm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Jarm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jarm({})", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Service {
    pub port: u16,
    pub name: String,
}

/// One adverse observation about an IP from one provider.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntelRecord {
    pub source: String,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub campaign: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sinkholed_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jarm: Option<Jarm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open_ports: Option<Vec<u16>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub services: Option<Vec<Service>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub os: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub country: Option<String>,
    pub observed_at: DateTime<Utc>,
}

impl IntelRecord {
    pub fn new(source: impl Into<String>, category: Category) -> Self {
        IntelRecord {
            source: source.into(),
            category,
            campaign: None,
            sinkholed_url: None,
            jarm: None,
            open_ports: None,
            services: None,
            os: None,
            country: None,
            observed_at: DateTime::<Utc>::UNIX_EPOCH,
        }
    }
}

/// Verdict for one IP. Malicious exactly when at least one record exists.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntelVerdict {
    pub ip: IpAddr,
    pub malicious: bool,
    pub records: Vec<IntelRecord>,
}

impl IntelVerdict {
    pub fn from_records(ip: IpAddr, records: Vec<IntelRecord>) -> Self {
        IntelVerdict {
            ip,
            malicious: !records.is_empty(),
            records,
        }
    }

    pub fn benign(ip: IpAddr) -> Self {
        Self::from_records(ip, Vec::new())
    }

    pub fn add_record(&mut self, record: IntelRecord) {
        self.records.push(record);
        self.malicious = true;
    }
}

pub type VerdictMap = BTreeMap<IpAddr, IntelVerdict>;

pub fn verdict_map(verdicts: impl IntoIterator<Item = IntelVerdict>) -> VerdictMap {
    verdicts.into_iter().map(|v| (v.ip, v)).collect()
}

/// Concatenates every provider's records; records from different providers
/// are all kept even when they disagree.
pub fn aggregate(ip: IpAddr, per_provider: &[Vec<IntelRecord>]) -> IntelVerdict {
    IntelVerdict::from_records(ip, per_provider.iter().flatten().cloned().collect())
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IntelError {
    #[error("{} ips have no verdict", .0.len())]
    MissingVerdicts(Vec<IpAddr>),
    #[error("unknown attribute {0:?}; expected port, service or os")]
    UnknownAttribute(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub malicious: IpSet,
    pub benign: IpSet,
}

pub fn classify_snapshot(ips: &IpSet, verdicts: &VerdictMap) -> Result<Classification, IntelError> {
    let missing: Vec<IpAddr> = ips.ips.iter().filter(|ip| !verdicts.contains_key(ip)).copied().collect();
    if !missing.is_empty() {
        return Err(IntelError::MissingVerdicts(missing));
    }
    let mut malicious = IpSet::new(format!("{} malicious", ips.label));
    let mut benign = IpSet::new(format!("{} benign", ips.label));
    for ip in &ips.ips {
        if verdicts[ip].malicious {
            malicious.ips.insert(*ip);
        } else {
            benign.ips.insert(*ip);
        }
    }
    Ok(Classification { malicious, benign })
}

/// Sorts `(label, count)` by count descending, then label ascending.
fn ranked<K: Ord>(counts: HashMap<K, usize>) -> Vec<(K, usize)> {
    let mut out: Vec<_> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Counts IPs per distinct value; each IP counts once per value it shows.
fn count_ips<'a, K, F, I>(verdicts: impl IntoIterator<Item = &'a IntelVerdict>, values: F) -> HashMap<K, usize>
where
    K: Eq + std::hash::Hash + 'a,
    F: Fn(&'a IntelRecord) -> I,
    I: IntoIterator<Item = K>,
{
    let mut per_ip: HashMap<IpAddr, HashSet<K>> = HashMap::new();
    for v in verdicts {
        let set = per_ip.entry(v.ip).or_default();
        for r in &v.records {
            set.extend(values(r));
        }
    }
    let mut counts = HashMap::new();
    for set in per_ip.into_values() {
        for k in set {
            *counts.entry(k).or_default() += 1;
        }
    }
    counts
}

/// JARM clusters of at least `min_size` IPs. An IP seen with two JARMs
/// counts towards both.
pub fn jarm_clusters<'a>(verdicts: impl IntoIterator<Item = &'a IntelVerdict>, min_size: usize) -> Vec<(String, usize)> {
    let counts = count_ips(verdicts, |r| r.jarm.as_ref().map(|j| j.as_str().to_string()));
    ranked(counts).into_iter().filter(|(_, c)| *c >= min_size).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinkholeStats {
    /// Sinkholed URL and the number of distinct IPs that requested it.
    pub url_counts: Vec<(String, usize)>,
    /// Top-level domain and the number of distinct domains under it.
    pub tld_counts: Vec<(String, usize)>,
}

/// Host part of a URL or bare domain, lowercased.
pub fn url_domain(url: &str) -> Option<String> {
    let rest = url.trim().split_once("://").map_or(url.trim(), |(_, r)| r);
    let host = rest.split(['/', '?', '#']).next()?;
    let host = host.rsplit_once('@').map_or(host, |(_, h)| h);
    let host = host.split(':').next()?.trim_end_matches('.');
    (!host.is_empty()).then(|| host.to_ascii_lowercase())
}

/// The final label of a domain.
pub fn top_level_domain(domain: &str) -> Option<&str> {
    domain.rsplit('.').next().filter(|t| !t.is_empty() && *t != domain)
}

pub fn sinkhole_stats<'a>(verdicts: impl IntoIterator<Item = &'a IntelVerdict> + Clone) -> SinkholeStats {
    let url_counts = ranked(count_ips(verdicts.clone(), |r| r.sinkholed_url.clone()));
    let mut domains: BTreeSet<String> = BTreeSet::new();
    for v in verdicts {
        for r in &v.records {
            if let Some(d) = r.sinkholed_url.as_deref().and_then(url_domain) {
                domains.insert(d);
            }
        }
    }
    let mut tlds: HashMap<String, usize> = HashMap::new();
    for d in &domains {
        if let Some(t) = top_level_domain(d) {
            *tlds.entry(t.to_string()).or_default() += 1;
        }
    }
    SinkholeStats {
        url_counts,
        tld_counts: ranked(tlds),
    }
}

/// IPs per malware campaign; an IP in two campaigns counts for both.
pub fn campaign_stats<'a>(verdicts: impl IntoIterator<Item = &'a IntelVerdict>) -> Vec<(String, usize)> {
    ranked(count_ips(verdicts, |r| r.campaign.clone()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Port,
    Service,
    Os,
}

impl FromStr for Attribute {
    type Err = IntelError;

    fn from_str(s: &str) -> Result<Self, IntelError> {
        match s.to_ascii_lowercase().as_str() {
            "port" | "ports" => Ok(Attribute::Port),
            "service" | "services" => Ok(Attribute::Service),
            "os" => Ok(Attribute::Os),
            _ => Err(IntelError::UnknownAttribute(s.to_string())),
        }
    }
}

/// IPs per attribute value, top `top_n` (all when `None`).
pub fn attribute_histogram<'a>(
    verdicts: impl IntoIterator<Item = &'a IntelVerdict>,
    attribute: &str,
    top_n: Option<usize>,
) -> Result<Vec<(String, usize)>, IntelError> {
    let attribute: Attribute = attribute.parse()?;
    let counts = count_ips(verdicts, move |r| -> Vec<String> {
        match attribute {
            Attribute::Port => r.open_ports.iter().flatten().map(u16::to_string).collect(),
            Attribute::Service => r.services.iter().flatten().map(|s| s.name.clone()).collect(),
            Attribute::Os => r.os.iter().cloned().collect(),
        }
    });
    let mut out = ranked(counts);
    if let Some(n) = top_n {
        out.truncate(n);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MaliceSummary {
    pub malicious_nodes: usize,
    pub malicious_median: f64,
    pub malicious_mean: f64,
    pub benign_nodes: usize,
    pub benign_median: f64,
    pub benign_mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NeighborMalice {
    /// Source IP and the malicious share of its distinct neighbor IPs.
    pub per_node: Vec<(IpAddr, f64)>,
    pub summary: MaliceSummary,
}

/// For every source IP, the fraction of its neighbor IPs that are malicious,
/// over the union of neighbors reported across all given edges.
///
/// Nodes are IPs: a peer with several IPs contributes each of them. A source
/// never counts itself as a neighbor. IPs without a verdict are benign.
/// Sources with no neighbors are left out of both lists and summaries.
pub fn neighbor_malice(
    edges: &[(PeerId, PeerId)],
    peer_ips: &HashMap<PeerId, Vec<IpAddr>>,
    verdicts: &VerdictMap,
) -> NeighborMalice {
    let mut neighbors: BTreeMap<IpAddr, BTreeSet<IpAddr>> = BTreeMap::new();
    for (source, target) in edges {
        let (Some(src_ips), Some(dst_ips)) = (peer_ips.get(source), peer_ips.get(target)) else {
            continue;
        };
        for s in src_ips {
            let set = neighbors.entry(*s).or_default();
            set.extend(dst_ips.iter().filter(|d| *d != s));
        }
    }
    let is_malicious = |ip: &IpAddr| verdicts.get(ip).is_some_and(|v| v.malicious);
    let mut per_node = Vec::new();
    let mut mal = Vec::new();
    let mut ben = Vec::new();
    for (ip, set) in neighbors {
        if set.is_empty() {
            continue;
        }
        let fraction = set.iter().filter(|n| is_malicious(n)).count() as f64 / set.len() as f64;
        per_node.push((ip, fraction));
        if is_malicious(&ip) {
            mal.push(fraction);
        } else {
            ben.push(fraction);
        }
    }
    let (malicious_mean, benign_mean) = (mean(&mal), mean(&ben));
    NeighborMalice {
        per_node,
        summary: MaliceSummary {
            malicious_nodes: mal.len(),
            malicious_median: median(&mut mal),
            malicious_mean,
            benign_nodes: ben.len(),
            benign_median: median(&mut ben),
            benign_mean,
        },
    }
}

/// Median; the mean of the two middle values for even lengths, 0 when empty.
pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOP_JARM: &str = "2ad2ad0002ad2ad00042d42d0000008aec5bb03750a1d7eddfa29fb2d1deea";

    fn ip(n: u32) -> IpAddr {
        IpAddr::V4(std::net::Ipv4Addr::from(0x5102_0000 + n))
    }

    fn rec(source: &str) -> IntelRecord {
        IntelRecord::new(source, Category::Malware)
    }

    #[test]
    fn jarm_validation() {
        assert!(TOP_JARM.parse::<Jarm>().is_ok());
        assert!(TOP_JARM.to_uppercase().parse::<Jarm>().is_err());
        assert!(TOP_JARM[..61].parse::<Jarm>().is_err());
        assert!(format!("{}g", &TOP_JARM[..61]).parse::<Jarm>().is_err());
        let bad = r#"{"source":"x","category":"malware","jarm":"abc","observed_at":"2021-05-01T00:00:00Z"}"#;
        assert!(serde_json::from_str::<IntelRecord>(bad).is_err());
    }

    #[test]
    fn record_field_names_are_verbatim() {
        let mut r = rec("fixture");
        r.category = Category::SinkholeHit;
        r.sinkholed_url = Some("differentia.ru".into());
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["category"], "sinkhole-hit");
        assert_eq!(v["sinkholed_url"], "differentia.ru");
        assert_eq!(serde_json::from_value::<IntelRecord>(v).unwrap(), r);
    }

    #[test]
    fn aggregation_rule() {
        assert!(!aggregate(ip(1), &[vec![], vec![]]).malicious);
        let v = aggregate(ip(1), &[vec![rec("a")], vec![]]);
        assert!(v.malicious);
        assert_eq!(v.records.len(), 1);

        let mut a = rec("vt");
        a.jarm = Some(TOP_JARM.parse().unwrap());
        let mut b = rec("spamhaus");
        b.jarm = Some("15d3fd16d29d29d00042d43d000000fe02290512647416dcf0a400ccbc0b6b".parse().unwrap());
        let v = aggregate(ip(1), &[vec![a.clone()], vec![b.clone()]]);
        assert_eq!(v.records, vec![a, b]);
    }

    #[test]
    fn classification_requires_every_verdict() {
        let set = IpSet::from_ips("c1", [ip(1), ip(2), ip(3)]);
        let mut verdicts = verdict_map([IntelVerdict::benign(ip(1)), IntelVerdict::from_records(ip(2), vec![rec("x")])]);
        assert_eq!(classify_snapshot(&set, &verdicts), Err(IntelError::MissingVerdicts(vec![ip(3)])));
        verdicts.insert(ip(3), IntelVerdict::benign(ip(3)));
        let c = classify_snapshot(&set, &verdicts).unwrap();
        assert_eq!((c.malicious.len(), c.benign.len()), (1, 2));
    }

    #[test]
    fn jarm_dual_count_and_min_size() {
        let j1: Jarm = TOP_JARM.parse().unwrap();
        let j2: Jarm = "15d3fd16d29d29d00042d43d0000009ec686233a4398bea334ba5e62e34a01".parse().unwrap();
        let mut r1 = rec("a");
        r1.jarm = Some(j1.clone());
        let mut r2 = rec("b");
        r2.jarm = Some(j2.clone());
        let verdicts = [
            IntelVerdict::from_records(ip(1), vec![r1.clone(), r2.clone()]),
            IntelVerdict::from_records(ip(2), vec![r1.clone(), r1.clone()]),
        ];
        let c = jarm_clusters(&verdicts, 1);
        assert_eq!(c, vec![(j1.to_string(), 2), (j2.to_string(), 1)]);
        assert_eq!(jarm_clusters(&verdicts, 2).len(), 1);
        assert!(jarm_clusters(&[IntelVerdict::from_records(ip(3), vec![rec("a")])], 1).is_empty());
    }

    #[test]
    fn domain_and_tld_extraction() {
        assert_eq!(url_domain("http://Differentia.RU/gate.php").as_deref(), Some("differentia.ru"));
        assert_eq!(url_domain("abc.xyz:8080").as_deref(), Some("abc.xyz"));
        assert_eq!(top_level_domain("a.b.co.uk"), Some("uk"));
        assert_eq!(top_level_domain("localhost"), None);
    }

    #[test]
    fn sinkhole_counts_unique_ips_and_distinct_domains() {
        let mk = |url: &str| {
            let mut r = rec("s");
            r.category = Category::SinkholeHit;
            r.sinkholed_url = Some(url.into());
            r
        };
        let verdicts = [
            IntelVerdict::from_records(ip(1), vec![mk("differentia.ru"), mk("differentia.ru"), mk("a.xyz")]),
            IntelVerdict::from_records(ip(2), vec![mk("differentia.ru"), mk("b.xyz")]),
            IntelVerdict::from_records(ip(3), vec![rec("no-url")]),
        ];
        let s = sinkhole_stats(&verdicts);
        assert_eq!(s.url_counts[0], ("differentia.ru".into(), 2));
        assert_eq!(s.tld_counts, vec![("xyz".into(), 2), ("ru".into(), 1)]);
    }

    #[test]
    fn campaigns_count_each_ip_once_per_campaign() {
        let mk = |c: &str| {
            let mut r = rec("s");
            r.campaign = Some(c.into());
            r
        };
        let verdicts = [
            IntelVerdict::from_records(ip(1), vec![mk("tinba"), mk("mirai"), mk("tinba")]),
            IntelVerdict::from_records(ip(2), vec![mk("tinba")]),
        ];
        assert_eq!(campaign_stats(&verdicts), vec![("tinba".into(), 2), ("mirai".into(), 1)]);
        assert!(campaign_stats(&[IntelVerdict::benign(ip(9))]).is_empty());
    }

    #[test]
    fn attribute_histograms() {
        let mut r = rec("shodan-like");
        r.open_ports = Some(vec![22, 80]);
        r.services = Some(vec![Service { port: 22, name: "OpenSSH".into() }]);
        r.os = Some("Ubuntu".into());
        let verdicts = [
            IntelVerdict::from_records(ip(1), vec![r.clone(), r.clone()]),
            IntelVerdict::from_records(ip(2), vec![r]),
        ];
        assert_eq!(
            attribute_histogram(&verdicts, "port", None).unwrap(),
            vec![("22".into(), 2), ("80".into(), 2)]
        );
        assert_eq!(attribute_histogram(&verdicts, "service", Some(1)).unwrap(), vec![("OpenSSH".into(), 2)]);
        assert_eq!(attribute_histogram(&verdicts, "os", None).unwrap(), vec![("Ubuntu".into(), 2)]);
        assert_eq!(
            attribute_histogram(&verdicts, "asn", None),
            Err(IntelError::UnknownAttribute("asn".into()))
        );
    }

    fn pid(n: u32) -> PeerId {
        let mut k = [0u8; 32];
        k[..4].copy_from_slice(&n.to_be_bytes());
        PeerId::from_ed25519_public(&k)
    }

    #[test]
    fn neighbor_fraction_direct_count() {
        let edges: Vec<_> = (1..=4).map(|n| (pid(0), pid(n))).collect();
        let peer_ips: HashMap<_, _> = (0..=4).map(|n| (pid(n), vec![ip(n)])).collect();
        let verdicts = verdict_map([
            IntelVerdict::from_records(ip(1), vec![rec("x")]),
            IntelVerdict::from_records(ip(2), vec![rec("x")]),
        ]);
        let r = neighbor_malice(&edges, &peer_ips, &verdicts);
        assert_eq!(r.per_node, vec![(ip(0), 0.5)]);
        assert_eq!(r.summary.benign_nodes, 1);
        assert_eq!(r.summary.benign_median, 0.5);
        assert_eq!(r.summary.malicious_nodes, 0);
    }

    #[test]
    fn isolated_nodes_are_excluded() {
        let peer_ips: HashMap<_, _> = (0..3).map(|n| (pid(n), vec![ip(n)])).collect();
        let r = neighbor_malice(&[], &peer_ips, &VerdictMap::new());
        assert!(r.per_node.is_empty());
        assert_eq!(r.summary, MaliceSummary::default());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut []), 0.0);
    }

    fn arb_verdicts() -> impl Strategy<Value = Vec<IntelVerdict>> {
        let record = (0u8..4, 0u8..3, proptest::option::of(0u16..4)).prop_map(|(c, u, p)| {
            let mut r = IntelRecord::new("p", Category::Botnet);
            r.campaign = Some(format!("camp{c}"));
            r.sinkholed_url = Some(format!("d{u}.xyz"));
            r.open_ports = p.map(|p| vec![p]);
            r
        });
        proptest::collection::vec((0u32..40, proptest::collection::vec(record, 0..3)), 0..30).prop_map(|items| {
            let mut m = VerdictMap::new();
            for (n, recs) in items {
                let v = m.entry(ip(n)).or_insert_with(|| IntelVerdict::benign(ip(n)));
                for r in recs {
                    v.add_record(r);
                }
            }
            m.into_values().collect()
        })
    }

    proptest! {
        #[test]
        fn adding_a_record_never_clears_malice(mut v in arb_verdicts(), extra in 0usize..100) {
            if v.is_empty() { return Ok(()); }
            let i = extra % v.len();
            v[i].add_record(rec("late"));
            prop_assert!(v[i].malicious);
        }

        #[test]
        fn classification_partitions(v in arb_verdicts()) {
            let set = IpSet::from_ips("c", v.iter().map(|x| x.ip));
            let c = classify_snapshot(&set, &verdict_map(v.clone())).unwrap();
            prop_assert!(c.malicious.ips.is_disjoint(&c.benign.ips));
            prop_assert_eq!(c.malicious.len() + c.benign.len(), set.len());
        }

        #[test]
        fn statistics_are_order_independent(v in arb_verdicts()) {
            let mut rev = v.clone();
            rev.reverse();
            prop_assert_eq!(campaign_stats(&v), campaign_stats(&rev));
            prop_assert_eq!(sinkhole_stats(&v), sinkhole_stats(&rev));
            prop_assert_eq!(jarm_clusters(&v, 1), jarm_clusters(&rev, 1));
            prop_assert_eq!(attribute_histogram(&v, "port", None), attribute_histogram(&rev, "port", None));
        }
    }
}
