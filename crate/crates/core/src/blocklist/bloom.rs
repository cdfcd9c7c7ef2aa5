use std::f64::consts::LN_2;
use std::net::IpAddr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::BlocklistError;
use crate::analytics::canonical_ip;

/// Serialized filter layout, big-endian: magic `OBSF`, u8 version, u64 m,
/// u32 k, u64 n_target, f64 p_target (IEEE bits), u64 hash_seed, the bitset
/// as ⌈m/8⌉ bytes (bit i is bit i%8 of byte i/8), then CRC32 of everything
/// before it.
pub const BLOOM_MAGIC: &[u8; 4] = b"OBSF";
const BLOOM_VERSION: u8 = 1;
const BLOOM_HEADER_LEN: usize = 41;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BloomParams {
    pub m_bits: u64,
    pub k: u32,
}

impl BloomParams {
    pub fn size_bytes(&self) -> u64 {
        self.m_bits.div_ceil(8)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("Bloom parameters out of domain: n={n}, p={p} (need n >= 1 and 0 < p < 1)")]
pub struct DomainError {
    pub n: u64,
    pub p: f64,
}

/// Optimal bit count and hash count for `n` items at false-positive rate
/// `p`: m = ⌈−n·ln p / (ln 2)²⌉, k = max(1, round(m/n · ln 2)).
pub fn bloom_params(n: u64, p: f64) -> Result<BloomParams, DomainError> {
    if n == 0 || !(p > 0.0 && p < 1.0) {
        return Err(DomainError { n, p });
    }
    let m = (-(n as f64) * p.ln() / (LN_2 * LN_2)).ceil() as u64;
    let k = ((m as f64 / n as f64) * LN_2).round().max(1.0) as u32;
    Ok(BloomParams { m_bits: m, k })
}

/// A Bloom filter over IPs. Never reports a false negative.
#[derive(Clone, Debug, PartialEq)]
pub struct BloomBlocklist {
    m: u64,
    k: u32,
    bits: Vec<u8>,
    n_target: u64,
    p_target: f64,
    hash_seed: u64,
}

fn ip_bytes(ip: IpAddr) -> Vec<u8> {
    match canonical_ip(ip) {
        IpAddr::V4(v) => v.octets().to_vec(),
        IpAddr::V6(v) => v.octets().to_vec(),
    }
}

impl BloomBlocklist {
    /// An empty filter sized for `n_target` items at rate `p_target`.
    pub fn with_capacity(n_target: u64, p_target: f64, hash_seed: u64) -> Result<Self, DomainError> {
        let params = bloom_params(n_target, p_target)?;
        Ok(BloomBlocklist {
            m: params.m_bits,
            k: params.k,
            bits: vec![0; params.size_bytes() as usize],
            n_target,
            p_target,
            hash_seed,
        })
    }

    /// A filter sized for exactly the distinct `ips` given (at least one).
    pub fn build(ips: impl IntoIterator<Item = IpAddr>, p: f64, hash_seed: u64) -> Result<Self, DomainError> {
        let mut ips: Vec<IpAddr> = ips.into_iter().map(canonical_ip).collect();
        ips.sort_unstable();
        ips.dedup();
        let mut filter = Self::with_capacity((ips.len() as u64).max(1), p, hash_seed)?;
        for ip in ips {
            filter.insert(ip);
        }
        Ok(filter)
    }

    /// Double hashing over one SHA-256 of seed and address.
    fn indexes(&self, ip: IpAddr) -> impl Iterator<Item = u64> {
        let mut h = Sha256::new();
        h.update(self.hash_seed.to_be_bytes());
        h.update(ip_bytes(ip));
        let d = h.finalize();
        let h1 = u64::from_be_bytes(d[..8].try_into().unwrap());
        let h2 = u64::from_be_bytes(d[8..16].try_into().unwrap()) | 1;
        let m = self.m;
        (0..u64::from(self.k)).map(move |i| h1.wrapping_add(i.wrapping_mul(h2)) % m)
    }

    pub fn insert(&mut self, ip: IpAddr) {
        let idx: Vec<u64> = self.indexes(ip).collect();
        for i in idx {
            self.bits[(i / 8) as usize] |= 1 << (i % 8);
        }
    }

    pub fn contains(&self, ip: IpAddr) -> bool {
        self.indexes(ip).all(|i| self.bits[(i / 8) as usize] & (1 << (i % 8)) != 0)
    }

    pub fn m_bits(&self) -> u64 {
        self.m
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn n_target(&self) -> u64 {
        self.n_target
    }

    pub fn p_target(&self) -> f64 {
        self.p_target
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    /// Bitset size in bytes.
    pub fn size_bytes(&self) -> usize {
        self.bits.len()
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BLOOM_HEADER_LEN + self.bits.len() + 4);
        out.extend_from_slice(BLOOM_MAGIC);
        out.push(BLOOM_VERSION);
        out.extend_from_slice(&self.m.to_be_bytes());
        out.extend_from_slice(&self.k.to_be_bytes());
        out.extend_from_slice(&self.n_target.to_be_bytes());
        out.extend_from_slice(&self.p_target.to_bits().to_be_bytes());
        out.extend_from_slice(&self.hash_seed.to_be_bytes());
        out.extend_from_slice(&self.bits);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_be_bytes());
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, BlocklistError> {
        let fmt = |m: &str| BlocklistError::Format(format!("Bloom filter: {m}"));
        if bytes.len() < BLOOM_HEADER_LEN + 4 {
            return Err(fmt("truncated header"));
        }
        if &bytes[..4] != BLOOM_MAGIC {
            return Err(fmt("bad magic"));
        }
        if bytes[4] != BLOOM_VERSION {
            return Err(fmt("unsupported version"));
        }
        let u64_at = |o: usize| u64::from_be_bytes(bytes[o..o + 8].try_into().unwrap());
        let m = u64_at(5);
        let k = u32::from_be_bytes(bytes[13..17].try_into().unwrap());
        let n_target = u64_at(17);
        let p_target = f64::from_bits(u64_at(25));
        let hash_seed = u64_at(33);
        if m == 0 || k == 0 {
            return Err(fmt("m and k must be positive"));
        }
        if m.div_ceil(8).checked_add((BLOOM_HEADER_LEN + 4) as u64) != Some(bytes.len() as u64) {
            return Err(fmt("length does not match m"));
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_be_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(BlocklistError::Checksum { stored, computed });
        }
        let bits = body[BLOOM_HEADER_LEN..].to_vec();
        Ok(BloomBlocklist {
            m,
            k,
            bits,
            n_target,
            p_target,
            hash_seed,
        })
    }
}
