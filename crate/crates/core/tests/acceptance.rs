//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::net::{IpAddr, Ipv4Addr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::Utc;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::Value;

use observatory::analytics::{extract_ips, intersect_report, IpSet};
use observatory::blocklist::{bloom_params, Blocklist, BloomBlocklist, ConnectionGate, GatedTransport, HEADER_LEN};
use observatory::content::monitor::read_events;
use observatory::content::{cid_of_file, monitor, FetchStatus, MonitorConfig, MonitorEvent, WantType};
use observatory::crawler::{crawl, CrawlConfig, CrawlSnapshot};
use observatory::intel::{campaign_stats, classify_snapshot, jarm_clusters, neighbor_malice, sinkhole_stats, VerdictMap};
use observatory::kad::{KeyTable, DEFAULT_POOL_SIZE};
use observatory::netsim::{coverage, generate_network, ChurnModel, SimContentNetwork, SimNetwork, SimTransport};
use observatory::synth::{crawl_fixture, intel_fixture, random_edge_fixture, tuned_malice_fixture, EdgeFixture};
use observatory::{common_prefix_len, KadKey, PeerId};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn sim_crawl(net: &SimNetwork, keys: &KeyTable) -> (CrawlSnapshot, SimTransport) {
    let sim = SimTransport::new(Arc::new(net.clone()));
    let config = CrawlConfig {
        bootstrap_peers: net.bootstrap(3),
        public_addresses_only: false,
        ..Default::default()
    };
    let snap = crawl(&config, &sim, keys).expect("bootstrap reachable");
    (snap, sim)
}

fn crawler_coverage() -> Outcome {
    let began = Instant::now();
    let keys = KeyTable::build(1, 1 << 16).unwrap();
    let net = generate_network(1000, 20, 11);
    let (snap, _) = sim_crawl(&net, &keys);
    let full = coverage(&net, &snap);
    ensure!(full.discovered_fraction == 1.0, "static network: discovered {}", full.discovered_fraction);

    let mut masked = net.clone();
    masked.set_undialable_fraction(0.5, 12);
    let (snap, _) = sim_crawl(&masked, &keys);
    let half = coverage(&masked, &snap);
    ensure!(
        (half.reachable_fraction - 0.50).abs() <= 0.01,
        "masked network: reachable {}",
        half.reachable_fraction
    );
    ensure!(half.discovered_fraction >= 0.99, "masked network: discovered {}", half.discovered_fraction);
    let elapsed = began.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "discovered 1.000; masked reachable {:.3}, discovered {:.3}; {:.1}s",
        half.reachable_fraction,
        half.discovered_fraction,
        elapsed.as_secs_f64()
    ))
}

fn exact_cpl() -> Outcome {
    let table = KeyTable::build(7, DEFAULT_POOL_SIZE).unwrap();
    ensure!(table.pool_size() == 1 << 18, "pool {}", table.pool_size());
    let mut rng = ChaCha20Rng::seed_from_u64(8);
    let mut misses = 0;
    for _ in 0..10_000 {
        let mut target = [0u8; 32];
        rng.fill_bytes(&mut target);
        let target = KadKey(target);
        let cpl = rng.random_range(0..=15);
        match table.find_query_key(&target, cpl) {
            Ok(key) => {
                let got = common_prefix_len(&observatory::kad_key(key), &target);
                ensure!(got == cpl, "asked for cpl {cpl}, got {got}");
            }
            Err(_) => misses += 1,
        }
    }
    ensure!(misses == 0, "{misses} NoKeyForPrefix");
    Ok("10000 queries exact, 0 misses".into())
}

fn classify(set: &IpSet, verdicts: &VerdictMap) -> (usize, usize) {
    let c = classify_snapshot(set, verdicts).expect("every IP has a verdict");
    (c.malicious.len(), c.benign.len())
}

fn analytics_fixtures() -> Outcome {
    let began = Instant::now();
    let fx = crawl_fixture(3);
    let sets: Vec<IpSet> = fx.snapshots.iter().zip(["Crawl 1", "Crawl 2", "Crawl 3"]).map(|(s, l)| extract_ips(s, l)).collect();
    let overlap = intersect_report(&sets).unwrap();
    let pairs = [overlap.pair(0, 1), overlap.pair(0, 2), overlap.pair(1, 2)];
    ensure!(pairs == [22347, 20088, 23130], "pairwise {pairs:?}");
    ensure!(overlap.triple == Some(16783), "triple {:?}", overlap.triple);

    let partitions: Vec<(usize, usize)> = sets.iter().zip(&fx.per_crawl).map(|(s, v)| classify(s, v)).collect();
    ensure!(
        partitions == [(29313, 32647), (27201, 31739), (31855, 76901)],
        "partitions {partitions:?}"
    );

    let malicious: Vec<IpSet> = sets
        .iter()
        .map(|s| {
            let c = classify_snapshot(s, &fx.verdicts).unwrap();
            IpSet::from_ips(s.label.clone(), c.malicious.ips)
        })
        .collect();
    let mal_overlap = intersect_report(&malicious).unwrap();
    ensure!(mal_overlap.triple == Some(5127), "malicious triple {:?}", mal_overlap.triple);

    let pool: Vec<IpAddr> = fx.malicious.iter().copied().collect();
    let intel = intel_fixture(&pool, 4).unwrap();
    let jarms = jarm_clusters(intel.values(), 1);
    ensure!(
        jarms.first().is_some_and(|(j, n)| j.ends_with("deea") && *n == 2070),
        "top jarm {:?}",
        jarms.first()
    );
    let urls = sinkhole_stats(intel.values()).url_counts;
    ensure!(
        urls.first().is_some_and(|(u, n)| u == "differentia.ru" && *n == 38681),
        "top url {:?}",
        urls.first()
    );
    let campaigns = campaign_stats(intel.values());
    ensure!(
        campaigns.first().is_some_and(|(c, n)| c == "tinba" && *n == 30019),
        "top campaign {:?}",
        campaigns.first()
    );
    let elapsed = began.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("all counts exact; {:.1}s", elapsed.as_secs_f64()))
}

/// Summary recomputed with plain vectors and linear scans.
fn brute_force_malice(fx: &EdgeFixture) -> (Vec<(IpAddr, f64)>, [f64; 4], [usize; 2]) {
    let mut sources: Vec<IpAddr> = Vec::new();
    let mut neighbors: Vec<Vec<IpAddr>> = Vec::new();
    for (s, t) in &fx.edges {
        let (Some(src), Some(dst)) = (fx.peer_ips.get(s), fx.peer_ips.get(t)) else {
            continue;
        };
        for a in src {
            let idx = match sources.iter().position(|x| x == a) {
                Some(i) => i,
                None => {
                    sources.push(*a);
                    neighbors.push(Vec::new());
                    sources.len() - 1
                }
            };
            for b in dst {
                if b != a && !neighbors[idx].contains(b) {
                    neighbors[idx].push(*b);
                }
            }
        }
    }
    let bad = |ip: &IpAddr| fx.verdicts.get(ip).map(|v| v.malicious).unwrap_or(false);
    let mut rows: Vec<(IpAddr, f64)> = Vec::new();
    for (ip, ns) in sources.iter().zip(&neighbors) {
        if !ns.is_empty() {
            rows.push((*ip, ns.iter().filter(|n| bad(n)).count() as f64 / ns.len() as f64));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let stats = |mut v: Vec<f64>| -> (f64, f64) {
        if v.is_empty() {
            return (0.0, 0.0);
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = v.len() / 2;
        let median = if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 };
        (median, mean)
    };
    let mal: Vec<f64> = rows.iter().filter(|(ip, _)| bad(ip)).map(|r| r.1).collect();
    let ben: Vec<f64> = rows.iter().filter(|(ip, _)| !bad(ip)).map(|r| r.1).collect();
    let counts = [mal.len(), ben.len()];
    let (mm, ma) = stats(mal);
    let (bm, ba) = stats(ben);
    (rows, [mm, ma, bm, ba], counts)
}

fn neighbor_malice_oracle() -> Outcome {
    for seed in 0..100 {
        let fx = random_edge_fixture(500, seed);
        let got = neighbor_malice(&fx.edges, &fx.peer_ips, &fx.verdicts);
        let (rows, stats, counts) = brute_force_malice(&fx);
        let s = &got.summary;
        ensure!(got.per_node == rows, "seed {seed}: per-node fractions differ");
        ensure!(
            [s.malicious_nodes, s.benign_nodes] == counts,
            "seed {seed}: node counts {:?} vs {counts:?}",
            [s.malicious_nodes, s.benign_nodes]
        );
        let lib = [s.malicious_median, s.malicious_mean, s.benign_median, s.benign_mean];
        ensure!(lib == stats, "seed {seed}: summary {lib:?} vs oracle {stats:?}");
    }
    let tuned = tuned_malice_fixture();
    let s = neighbor_malice(&tuned.edges, &tuned.peer_ips, &tuned.verdicts).summary;
    ensure!((s.malicious_median - 0.07).abs() < 1e-9, "malicious median {}", s.malicious_median);
    ensure!((s.benign_median - 0.07).abs() < 1e-9, "benign median {}", s.benign_median);
    ensure!((s.malicious_mean - 0.095).abs() <= 0.001, "malicious mean {}", s.malicious_mean);
    ensure!((s.benign_mean - 0.092).abs() <= 0.001, "benign mean {}", s.benign_mean);
    Ok(format!(
        "100 fixtures match; tuned median {:.3}, means {:.4}/{:.4}",
        s.malicious_median, s.malicious_mean, s.benign_mean
    ))
}

fn random_public_v4<R: Rng>(rng: &mut R) -> u32 {
    loop {
        let v: u32 = rng.random();
        if (0x0b00_0000..0xdf00_0000).contains(&v) {
            return v;
        }
    }
}

fn blocklist_correctness() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(21);
    let mut entries: Vec<u32> = Vec::with_capacity(32_000);
    let mut seen = HashSet::new();
    while entries.len() < 32_000 {
        let v = random_public_v4(&mut rng);
        if seen.insert(v) {
            entries.push(v);
        }
    }
    let list = Blocklist::build(entries.iter().map(|&v| IpAddr::V4(Ipv4Addr::from(v))), Utc::now());
    ensure!(list.payload_len() == 128_000, "payload {}", list.payload_len());
    let blob = list.serialize();
    ensure!(blob.len() == HEADER_LEN + 128_000 + 4, "blob {}", blob.len());
    let back = Blocklist::deserialize(&blob).map_err(|e| e.to_string())?;
    ensure!(back.serialize() == blob, "round trip differs");

    for i in 0..100_000 {
        let q = if i % 2 == 0 { entries[rng.random_range(0..entries.len())] } else { random_public_v4(&mut rng) };
        let oracle = entries.iter().any(|&e| e == q);
        ensure!(list.contains(IpAddr::V4(Ipv4Addr::from(q))) == oracle, "query {q} disagrees");
    }

    for trial in 0..2_000 {
        let mut bad = blob.clone();
        let at = rng.random_range(0..HEADER_LEN);
        bad[at] ^= rng.random_range(1..=255u8);
        ensure!(Blocklist::deserialize(&bad).is_err(), "trial {trial}: mutated header byte {at} accepted");
    }
    for len in 0..HEADER_LEN + 4 {
        ensure!(Blocklist::deserialize(&blob[..len]).is_err(), "truncation to {len} accepted");
    }
    let mut garbage = vec![0u8; 64];
    for _ in 0..1_000 {
        rng.fill_bytes(&mut garbage);
        ensure!(Blocklist::deserialize(&garbage).is_err(), "random bytes accepted");
    }
    Ok(format!("10^5 queries agree; blob {} bytes; fuzzed headers rejected", blob.len()))
}

fn bloom_behavior() -> Outcome {
    let params = bloom_params(32_000, 1e-5).map_err(|e| e.to_string())?;
    let kib = params.size_bytes() as f64 / 1024.0;
    ensure!((kib - 93.6).abs() <= 0.936, "size {kib:.2} KiB");

    let mut rng = ChaCha20Rng::seed_from_u64(33);
    let mut members = HashSet::new();
    while members.len() < 32_000 {
        members.insert(random_public_v4(&mut rng));
    }
    let bloom = BloomBlocklist::build(members.iter().map(|&v| IpAddr::V4(Ipv4Addr::from(v))), 1e-5, 5)
        .map_err(|e| e.to_string())?;
    let false_negatives = members.iter().filter(|&&v| !bloom.contains(IpAddr::V4(Ipv4Addr::from(v)))).count();
    ensure!(false_negatives == 0, "{false_negatives} false negatives");

    let mut probes = 0u64;
    let mut hits = 0u64;
    while probes < 1_000_000 {
        let v = random_public_v4(&mut rng);
        if members.contains(&v) {
            continue;
        }
        probes += 1;
        hits += u64::from(bloom.contains(IpAddr::V4(Ipv4Addr::from(v))));
    }
    let fpr = hits as f64 / probes as f64;
    ensure!((0.5e-5..=2e-5).contains(&fpr), "fpr {fpr:e} ({hits} of {probes})");
    Ok(format!("{kib:.2} KiB, m={} k={}, fpr {fpr:.1e}", params.m_bits, params.k))
}

fn gate_efficacy() -> Outcome {
    let keys = KeyTable::build(1, 1 << 16).unwrap();
    let net = generate_network(1000, 20, 41);
    let boot: HashSet<PeerId> = net.bootstrap(3).into_iter().map(|b| b.0).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    let mut candidates: Vec<&PeerId> = net.nodes.iter().map(|n| &n.peer_id).filter(|p| !boot.contains(p)).collect();
    let mut listed: HashSet<PeerId> = HashSet::new();
    while listed.len() < 100 {
        let i = rng.random_range(0..candidates.len());
        listed.insert(candidates.swap_remove(i).clone());
    }
    let listed_ips = net.nodes.iter().filter(|n| listed.contains(&n.peer_id)).flat_map(|n| n.addresses.iter().filter_map(|a| a.ip()));
    let list = Blocklist::build(listed_ips, Utc::now());
    ensure!(list.len() == 100, "blocklist has {} entries", list.len());

    let (baseline, _) = sim_crawl(&net, &keys);
    let gate = Arc::new(ConnectionGate::new(Arc::new(list)));
    let sim = SimTransport::new(Arc::new(net.clone()));
    let log = sim.log().clone();
    let gated = GatedTransport::new(sim, gate.clone());
    let config = CrawlConfig {
        bootstrap_peers: net.bootstrap(3),
        public_addresses_only: false,
        ..Default::default()
    };
    let snap = crawl(&config, &gated, &keys).map_err(|e| e.to_string())?;

    let sessions: u32 = listed.iter().map(|p| log.session_count(p)).sum();
    ensure!(sessions == 0, "{sessions} sessions with listed nodes");
    let unlisted = |s: &CrawlSnapshot| s.peers.iter().filter(|p| !listed.contains(&p.peer_id)).count();
    let (before, after) = (unlisted(&baseline), unlisted(&snap));
    let loss = 1.0 - after as f64 / before as f64;
    ensure!(loss < 0.01, "discovery loss {loss:.4} ({after} of {before})");
    Ok(format!("0 sessions to 100 listed nodes; unlisted discovered {after}/{before}; {} denied dials", gate.denied()))
}

fn xorshift(len: usize, seed: u32) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + 4);
    let mut x = seed;
    while out.len() < len {
        x ^= x << 13;
        x ^= x >> 17;
        x ^= x << 5;
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.truncate(len);
    out
}

fn cid_compatibility() -> Outcome {
    let vectors: Vec<Value> = serde_json::from_str(include_str!("data/cid_vectors.json")).map_err(|e| e.to_string())?;
    ensure!(vectors.len() >= 10, "only {} vectors", vectors.len());
    let mut crossed = false;
    for v in &vectors {
        let len = v["size"].as_u64().unwrap() as usize;
        let data = match v["kind"].as_str().unwrap() {
            "text" => v["text"].as_str().unwrap().as_bytes().to_vec(),
            "zeros" => vec![0; len],
            "xorshift" => xorshift(len, v["seed"].as_u64().unwrap() as u32),
            k => return Err(format!("unknown recipe {k}")),
        };
        crossed |= data.len() > 174 * 262_144;
        let cid = cid_of_file(&data).to_string();
        ensure!(cid == v["cid"].as_str().unwrap(), "{}: {cid} != {}", v["name"], v["cid"]);
    }
    ensure!(crossed, "no vector crosses 174 links");
    Ok(format!("{} vectors match, one beyond 174 links", vectors.len()))
}

fn monitor_contract() -> Outcome {
    let net = generate_network(40, 20, 51);
    let dht = SimTransport::new(Arc::new(net.clone()));
    let mut content = SimContentNetwork::from_network(&net, Some(dht.log().clone()));
    let peers = content.peers().to_vec();
    let mut rng = ChaCha20Rng::seed_from_u64(52);
    let mut seeded = BTreeMap::new();
    for i in 0..6 {
        let len = [1_000, 40_000, 262_144, 300_000, 900_000, 5][i];
        let mut data = vec![0u8; len];
        rng.fill_bytes(&mut data);
        let cid = content.serve_file(&peers[i], &data);
        seeded.insert(cid, data.len() as u64);
        content.schedule_want(&peers[(i + 7) % peers.len()], Duration::from_millis(50 * i as u64), cid, WantType::WantHave);
    }
    let mut unseeded = BTreeSet::new();
    for i in 0..3 {
        let cid = cid_of_file(format!("nobody serves {i}").as_bytes());
        unseeded.insert(cid);
        content.schedule_want(&peers[20 + i], Duration::from_millis(100), cid, WantType::WantHave);
    }
    let config = MonitorConfig {
        target_connections: peers.len(),
        duration: Duration::from_secs(2),
        ..Default::default()
    };
    let mut log = Vec::new();
    monitor(&content, &config, None, &mut log).map_err(|e| e.to_string())?;
    let events = read_events(std::str::from_utf8(&log).unwrap()).map_err(|e| e.to_string())?;
    let fetches: HashMap<_, _> = events
        .iter()
        .filter_map(|e| match e {
            MonitorEvent::Fetch(f) => Some((f.cid, f)),
            _ => None,
        })
        .collect();
    let files: HashMap<_, _> = events
        .iter()
        .filter_map(|e| match e {
            MonitorEvent::File(r) => Some((r.cid, r.size)),
            _ => None,
        })
        .collect();
    for (cid, size) in &seeded {
        let f = fetches.get(cid).ok_or_else(|| format!("{cid} never fetched"))?;
        ensure!(f.status == FetchStatus::Complete, "{cid}: {:?}", f.status);
        ensure!(f.rejected_blocks == 0, "{cid}: {} blocks failed verification", f.rejected_blocks);
        ensure!(files.get(cid) == Some(size), "{cid}: reassembled {:?} of {size} bytes", files.get(cid));
        ensure!(f.duration <= 15.0, "{cid}: took {}s", f.duration);
    }
    let mut worst: f64 = 0.0;
    for cid in &unseeded {
        let f = fetches.get(cid).ok_or_else(|| format!("{cid} never attempted"))?;
        ensure!(f.status == FetchStatus::Timeout, "{cid}: {:?}", f.status);
        worst = worst.max((f.duration - 15.0).abs());
        ensure!((f.duration - 15.0).abs() <= 0.5, "{cid}: timed out after {}s", f.duration);
    }
    ensure!(content.provider_lookups() == 0, "{} provider lookups", content.provider_lookups());
    Ok(format!(
        "{} seeded complete, {} unseeded timed out within {worst:.3}s of 15s, 0 provider lookups",
        seeded.len(),
        unseeded.len()
    ))
}

fn churn_calibration() -> Outcome {
    let model = ChurnModel::default();
    let mut rng = ChaCha20Rng::seed_from_u64(61);
    let n = 100_000;
    let short = (0..n).filter(|_| model.sample_session(&mut rng) < 8.0).count();
    let p = short as f64 / n as f64;
    ensure!((p - 0.876).abs() <= 0.02, "P(<8h) = {p}");
    Ok(format!("P(<8h) = {p:.4}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("crawler coverage", crawler_coverage),
        ("exact cpl", exact_cpl),
        ("analytics fixtures", analytics_fixtures),
        ("neighbor maliciousness", neighbor_malice_oracle),
        ("blocklist correctness", blocklist_correctness),
        ("bloom sizing and behavior", bloom_behavior),
        ("gate efficacy", gate_efficacy),
        ("cid compatibility", cid_compatibility),
        ("monitor contract", monitor_contract),
        ("churn model", churn_calibration),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let began = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = began.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.1}s): {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
