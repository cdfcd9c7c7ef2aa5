//! Blocklists of malicious IPs: a sorted list with binary-search membership,
//! a Bloom-filter alternative, signed publication behind a mutable pointer,
//! and connection gating.
//!
//! Serialized list layout, all integers big-endian:
//!
//! | offset | size | field                        |
//! |--------|------|------------------------------|
//! | 0      | 4    | magic `OBSB`                 |
//! | 4      | 1    | format version (1)           |
//! | 5      | 8    | created_at, unix seconds     |
//! | 13     | 4    | IPv4 entry count `n4`        |
//! | 17     | 4    | IPv6 entry count `n6`        |
//! | 21     | 4·n4 | IPv4 entries, ascending      |
//! | …      | 16·n6| IPv6 entries, ascending      |
//! | …      | 4    | CRC32 of all preceding bytes |

mod bloom;
mod gate;
mod pin;
mod pointer;

use std::cell::Cell;
use std::cmp::Ordering;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::analytics::canonical_ip;
use crate::intel::VerdictMap;

pub use bloom::{bloom_params, BloomBlocklist, BloomParams, DomainError, BLOOM_MAGIC};
pub use gate::{ConnectionGate, GateDecision, GateLogEntry, GatedTransport, IpFilter};
pub use pin::{pin_blob, IPFS_API_ENV};
pub use pointer::{
    name_key, publish, signing_key_from_hex, signing_key_to_hex, PointerError, PointerRecord, Published, Resolver,
    DEFAULT_PUBLISH_INTERVAL, DEFAULT_VALIDITY,
};

pub const MAGIC: &[u8; 4] = b"OBSB";
pub const FORMAT_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 21;
pub const TRAILER_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlocklistError {
    #[error("malformed blocklist: {0}")]
    Format(String),
    #[error("blocklist checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
}

/// Sorted, duplicate-free IPv4 entries plus an IPv6 extension section.
/// Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Blocklist {
    format_version: u8,
    created_at: DateTime<Utc>,
    entries: Vec<u32>,
    ipv6: Vec<u128>,
}

fn search<T: Ord>(sorted: &[T], needle: &T, comparisons: &Cell<u32>) -> bool {
    let (mut lo, mut hi) = (0, sorted.len());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        comparisons.set(comparisons.get() + 1);
        match sorted[mid].cmp(needle) {
            Ordering::Equal => return true,
            Ordering::Less => lo = mid + 1,
            Ordering::Greater => hi = mid,
        }
    }
    false
}

impl Blocklist {
    /// Builds a list from IPs, dropping duplicates. IPv4-mapped IPv6
    /// addresses are stored as IPv4.
    pub fn build(ips: impl IntoIterator<Item = IpAddr>, created_at: DateTime<Utc>) -> Self {
        let mut entries = Vec::new();
        let mut ipv6 = Vec::new();
        for ip in ips {
            match canonical_ip(ip) {
                IpAddr::V4(v4) => entries.push(u32::from(v4)),
                IpAddr::V6(v6) => ipv6.push(u128::from(v6)),
            }
        }
        entries.sort_unstable();
        entries.dedup();
        ipv6.sort_unstable();
        ipv6.dedup();
        Blocklist {
            format_version: FORMAT_VERSION,
            created_at: DateTime::from_timestamp(created_at.timestamp(), 0).expect("in range"),
            entries,
            ipv6,
        }
    }

    /// Lists every IP whose verdict is malicious.
    pub fn from_verdicts(verdicts: &VerdictMap, created_at: DateTime<Utc>) -> Self {
        Self::build(verdicts.values().filter(|v| v.malicious).map(|v| v.ip), created_at)
    }

    pub fn format_version(&self) -> u8 {
        self.format_version
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn ipv4_entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn ipv6_entries(&self) -> &[u128] {
        &self.ipv6
    }

    pub fn len(&self) -> usize {
        self.entries.len() + self.ipv6.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ips(&self) -> impl Iterator<Item = IpAddr> + '_ {
        self.entries
            .iter()
            .map(|&v| IpAddr::V4(Ipv4Addr::from(v)))
            .chain(self.ipv6.iter().map(|&v| IpAddr::V6(Ipv6Addr::from(v))))
    }

    pub fn contains(&self, ip: IpAddr) -> bool {
        self.contains_counted(ip).0
    }

    /// Membership plus the number of key comparisons the binary search made.
    pub fn contains_counted(&self, ip: IpAddr) -> (bool, u32) {
        let count = Cell::new(0);
        let found = match canonical_ip(ip) {
            IpAddr::V4(v4) => search(&self.entries, &u32::from(v4), &count),
            IpAddr::V6(v6) => search(&self.ipv6, &u128::from(v6), &count),
        };
        (found, count.get())
    }

    /// Size of the entry region in bytes.
    pub fn payload_len(&self) -> usize {
        4 * self.entries.len() + 16 * self.ipv6.len()
    }

    pub fn serialized_len(&self) -> usize {
        HEADER_LEN + self.payload_len() + TRAILER_LEN
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(MAGIC);
        out.push(self.format_version);
        out.extend_from_slice(&(self.created_at.timestamp() as u64).to_be_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_be_bytes());
        out.extend_from_slice(&(self.ipv6.len() as u32).to_be_bytes());
        for e in &self.entries {
            out.extend_from_slice(&e.to_be_bytes());
        }
        for e in &self.ipv6 {
            out.extend_from_slice(&e.to_be_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_be_bytes());
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, BlocklistError> {
        let fmt = |m: String| BlocklistError::Format(m);
        if bytes.len() < HEADER_LEN + TRAILER_LEN {
            return Err(fmt(format!("{} bytes is shorter than header and checksum", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(fmt("bad magic".into()));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(fmt(format!("unsupported version {}", bytes[4])));
        }
        let secs = u64::from_be_bytes(bytes[5..13].try_into().unwrap());
        let n4 = u32::from_be_bytes(bytes[13..17].try_into().unwrap()) as usize;
        let n6 = u32::from_be_bytes(bytes[17..21].try_into().unwrap()) as usize;
        let expected = n4
            .checked_mul(4)
            .and_then(|a| n6.checked_mul(16).and_then(|b| a.checked_add(b)))
            .and_then(|p| p.checked_add(HEADER_LEN + TRAILER_LEN));
        if expected != Some(bytes.len()) {
            return Err(fmt(format!(
                "length {} does not match {n4} IPv4 and {n6} IPv6 entries",
                bytes.len()
            )));
        }
        let body = &bytes[..bytes.len() - TRAILER_LEN];
        let stored = u32::from_be_bytes(bytes[bytes.len() - TRAILER_LEN..].try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(BlocklistError::Checksum { stored, computed });
        }
        let created_at = i64::try_from(secs)
            .ok()
            .and_then(|s| DateTime::from_timestamp(s, 0))
            .ok_or_else(|| fmt(format!("created_at {secs} out of range")))?;
        let v4_region = &body[HEADER_LEN..HEADER_LEN + 4 * n4];
        let entries: Vec<u32> = v4_region
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes(c.try_into().unwrap()))
            .collect();
        let ipv6: Vec<u128> = body[HEADER_LEN + 4 * n4..]
            .chunks_exact(16)
            .map(|c| u128::from_be_bytes(c.try_into().unwrap()))
            .collect();
        if entries.windows(2).any(|w| w[0] >= w[1]) || ipv6.windows(2).any(|w| w[0] >= w[1]) {
            return Err(fmt("entries are not strictly ascending".into()));
        }
        Ok(Blocklist {
            format_version: FORMAT_VERSION,
            created_at,
            entries,
            ipv6,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn t0() -> DateTime<Utc> {
        DateTime::from_timestamp(1_620_000_000, 0).unwrap()
    }

    fn v4(s: &str) -> IpAddr {
        s.parse().unwrap()
    }

    #[test]
    fn empty_list_is_header_only() {
        let b = Blocklist::build([], t0());
        assert_eq!(b.payload_len(), 0);
        assert_eq!(b.serialize().len(), HEADER_LEN + TRAILER_LEN);
        assert!(!b.contains(v4("1.2.3.4")));
    }

    #[test]
    fn dedup_and_sort() {
        let b = Blocklist::build([v4("1.2.3.4"), v4("1.2.3.4"), v4("0.0.0.1")], t0());
        assert_eq!(b.ipv4_entries(), &[1, 0x0102_0304]);
        assert_eq!(b.payload_len(), 8);
        let raw = b.serialize();
        assert_eq!(&raw[HEADER_LEN..HEADER_LEN + 8], &[0, 0, 0, 1, 1, 2, 3, 4]);
    }

    #[test]
    fn header_layout_is_exact() {
        let b = Blocklist::build([v4("10.0.0.1"), "2001:db8::1".parse().unwrap()], t0());
        let raw = b.serialize();
        assert_eq!(&raw[..4], b"OBSB");
        assert_eq!(raw[4], 1);
        assert_eq!(u64::from_be_bytes(raw[5..13].try_into().unwrap()), 1_620_000_000);
        assert_eq!(u32::from_be_bytes(raw[13..17].try_into().unwrap()), 1);
        assert_eq!(u32::from_be_bytes(raw[17..21].try_into().unwrap()), 1);
        assert_eq!(raw.len(), HEADER_LEN + 4 + 16 + TRAILER_LEN);
        let crc = crc32fast::hash(&raw[..raw.len() - 4]);
        assert_eq!(&raw[raw.len() - 4..], &crc.to_be_bytes());
    }

    #[test]
    fn mapped_ipv6_counts_as_ipv4() {
        let b = Blocklist::build(["::ffff:81.2.69.1".parse().unwrap()], t0());
        assert_eq!(b.ipv4_entries().len(), 1);
        assert!(b.contains(v4("81.2.69.1")));
    }

    #[test]
    fn large_list_round_trip_and_linear_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(32000);
        let ips: Vec<IpAddr> = (0..32000).map(|_| IpAddr::V4(Ipv4Addr::from(rng.random::<u32>()))).collect();
        let b = Blocklist::build(ips.iter().copied(), t0());
        let n = b.ipv4_entries().len();
        assert_eq!(b.payload_len(), 4 * n);
        let back = Blocklist::deserialize(&b.serialize()).unwrap();
        assert_eq!(back, b);
        let bound = (n as f64).log2().ceil() as u32 + 1;
        for ip in &ips {
            let (hit, cmp) = b.contains_counted(*ip);
            assert!(hit && cmp <= bound);
        }
        let set: Vec<u32> = b.ipv4_entries().to_vec();
        for _ in 0..100_000 {
            let q: u32 = if rng.random_bool(0.1) {
                set[rng.random_range(0..set.len())]
            } else {
                rng.random()
            };
            let (hit, cmp) = b.contains_counted(IpAddr::V4(Ipv4Addr::from(q)));
            assert_eq!(hit, set.iter().any(|&e| e == q));
            assert!(cmp <= bound);
        }
    }

    #[test]
    fn faults_are_classified() {
        let b = Blocklist::build([v4("1.1.1.1"), v4("8.8.8.8")], t0());
        let raw = b.serialize();
        assert!(matches!(Blocklist::deserialize(&raw[..raw.len() - 1]), Err(BlocklistError::Format(_))));
        let mut bad = raw.clone();
        bad[HEADER_LEN + 2] ^= 0x40;
        assert!(matches!(Blocklist::deserialize(&bad), Err(BlocklistError::Checksum { .. })));
        let mut bad = raw.clone();
        bad[0] = b'X';
        assert!(matches!(Blocklist::deserialize(&bad), Err(BlocklistError::Format(_))));
    }

    proptest! {
        #[test]
        fn contains_matches_set_membership(
            set in proptest::collection::vec(any::<u32>(), 0..64),
            probes in proptest::collection::vec(any::<u32>(), 0..64),
        ) {
            let b = Blocklist::build(set.iter().map(|&v| IpAddr::V4(Ipv4Addr::from(v))), t0());
            for x in set.iter().chain(&probes) {
                prop_assert_eq!(b.contains(IpAddr::V4(Ipv4Addr::from(*x))), set.contains(x));
            }
        }

        #[test]
        fn every_header_mutation_is_rejected(
            set in proptest::collection::vec(any::<u32>(), 0..16),
            pos in 0usize..HEADER_LEN,
            flip in 1u8..=255,
        ) {
            let b = Blocklist::build(set.iter().map(|&v| IpAddr::V4(Ipv4Addr::from(v))), t0());
            let mut raw = b.serialize();
            prop_assert_eq!(Blocklist::deserialize(&raw).unwrap(), b);
            raw[pos] ^= flip;
            prop_assert!(Blocklist::deserialize(&raw).is_err());
        }
    }
}
