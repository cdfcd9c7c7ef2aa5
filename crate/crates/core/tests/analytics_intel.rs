use std::collections::{BTreeSet, HashMap};
use std::net::{IpAddr, Ipv4Addr};

use chrono::{TimeDelta, Utc};
use proptest::prelude::*;

use observatory::analytics::{agent_histogram, intersect_report, IpSet};
use observatory::crawler::{CrawlSnapshot, PeerSnapshot};
use observatory::intel::{
    attribute_histogram, campaign_stats, classify_snapshot, jarm_clusters, sinkhole_stats, verdict_map, Category,
    FixtureProvider, IntelCache, IntelRecord, IntelVerdict, RetryPolicy, VerdictMap,
};
use observatory::PeerId;

fn ip(n: u8) -> IpAddr {
    IpAddr::V4(Ipv4Addr::new(11, 0, 0, n))
}

fn arb_set(label: &'static str) -> impl Strategy<Value = IpSet> {
    proptest::collection::btree_set(any::<u8>(), 0..60).prop_map(move |s| IpSet::from_ips(label, s.into_iter().map(ip)))
}

fn arb_record() -> impl Strategy<Value = IntelRecord> {
    (
        0usize..3,
        proptest::option::of(prop::sample::select(vec!["tinba", "mirai", "nymaim"])),
        proptest::option::of(prop::sample::select(vec!["http://a.ru/x", "http://b.xyz/", "https://c.su/p"])),
        proptest::option::of(proptest::collection::vec(prop::sample::select(vec![22u16, 80, 443]), 0..3)),
        proptest::option::of(prop::sample::select(vec!["Ubuntu", "Windows"])),
    )
        .prop_map(|(cat, campaign, url, ports, os)| {
            let mut r = IntelRecord::new("fixture", [Category::Malware, Category::SinkholeHit, Category::Botnet][cat]);
            r.campaign = campaign.map(String::from);
            r.sinkholed_url = url.map(String::from);
            r.open_ports = ports;
            r.os = os.map(String::from);
            r
        })
}

fn arb_verdicts() -> impl Strategy<Value = Vec<IntelVerdict>> {
    proptest::collection::btree_map(any::<u8>(), proptest::collection::vec(arb_record(), 0..3), 0..40).prop_map(|m| {
        m.into_iter().map(|(n, records)| IntelVerdict::from_records(ip(n), records)).collect()
    })
}

fn reach_snapshot(agents: &[(bool, String)]) -> CrawlSnapshot {
    let mut snap = CrawlSnapshot::empty();
    for (i, (reachable, agent)) in agents.iter().enumerate() {
        snap.peers.push(PeerSnapshot {
            peer_id: PeerId::from_ed25519_public(&[i as u8 + 1; 32]),
            multiaddresses: vec![format!("/ip4/11.1.0.{}/tcp/4001", i + 1).parse().unwrap()],
            agent_version: agent.clone(),
            reachable: *reachable,
        });
    }
    snap
}

proptest! {
    #[test]
    fn venn_regions_recompose_to_the_union(a in arb_set("a"), b in arb_set("b"), c in arb_set("c")) {
        let r = intersect_report(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let union: BTreeSet<IpAddr> = a.ips.iter().chain(&b.ips).chain(&c.ips).copied().collect();
        prop_assert_eq!(r.regions.values().sum::<usize>(), union.len());
        prop_assert_eq!(r.union, union.len());
        prop_assert_eq!(r.pair(0, 1), a.ips.intersection(&b.ips).count());
    }

    #[test]
    fn agent_histogram_counts_every_reachable_agent(
        agents in proptest::collection::vec((any::<bool>(), prop::sample::select(vec!["", "kubo/0.14.0", "kubo/0.15.1/x", "storm"]).prop_map(String::from)), 0..40),
        merge in any::<bool>(),
    ) {
        let snap = reach_snapshot(&agents);
        let expected = agents.iter().filter(|(r, a)| *r && !a.is_empty()).count();
        let total: usize = agent_histogram(&snap, None, merge).iter().map(|(_, n)| n).sum();
        prop_assert_eq!(total, expected);
    }

    #[test]
    fn classification_partitions_its_input(verdicts in arb_verdicts()) {
        let map: VerdictMap = verdict_map(verdicts.clone());
        let set = IpSet::from_ips("s", map.keys().copied());
        let c = classify_snapshot(&set, &map).unwrap();
        prop_assert!(c.malicious.ips.is_disjoint(&c.benign.ips));
        let joined: BTreeSet<IpAddr> = c.malicious.ips.union(&c.benign.ips).copied().collect();
        prop_assert_eq!(joined, set.ips);
    }

    #[test]
    fn statistics_ignore_input_order(verdicts in arb_verdicts(), rotate in 0usize..40) {
        let mut shuffled = verdicts.clone();
        if !shuffled.is_empty() {
            let k = rotate % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
        }
        prop_assert_eq!(jarm_clusters(&verdicts, 1), jarm_clusters(&shuffled, 1));
        prop_assert_eq!(campaign_stats(&verdicts), campaign_stats(&shuffled));
        prop_assert_eq!(sinkhole_stats(&verdicts), sinkhole_stats(&shuffled));
        prop_assert_eq!(
            attribute_histogram(&verdicts, "ports", None).unwrap(),
            attribute_histogram(&shuffled, "ports", None).unwrap()
        );
    }
}

#[test]
fn fresh_cache_entries_are_never_refetched() {
    let records: HashMap<IpAddr, Vec<IntelRecord>> =
        [(ip(1), vec![IntelRecord::new("f", Category::Spam)])].into_iter().collect();
    let provider = FixtureProvider::new("f", records);
    let cache = IntelCache::in_memory(TimeDelta::hours(24));
    let ips = [ip(1), ip(2), ip(3)];
    let now = Utc::now();
    let first = cache.resolve(&ips, &[&provider], &RetryPolicy::default(), 2, now);
    assert_eq!(first.verdicts.len(), 3);
    assert_eq!(provider.calls(), 3);
    let second = cache.resolve(&ips, &[&provider], &RetryPolicy::default(), 2, now + TimeDelta::hours(23));
    assert_eq!(provider.calls(), 3);
    assert_eq!(second.verdicts, first.verdicts);
    cache.resolve(&ips, &[&provider], &RetryPolicy::default(), 2, now + TimeDelta::hours(25));
    assert_eq!(provider.calls(), 6);
}
