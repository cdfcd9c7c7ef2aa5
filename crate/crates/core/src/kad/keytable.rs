use std::fs;
use std::io;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use super::{kad_key, KadKey};

/// Default number of candidate keys (2^18).
pub const DEFAULT_POOL_SIZE: usize = 1 << 18;

/// Bits subtracted from `log2(pool_size)` to get the guaranteed lookup depth.
/// With the default pool this guarantees exact-CPL keys through bucket 15.
const SAFETY_MARGIN: u32 = 3;

const FILE_MAGIC: &[u8; 4] = b"OBSK";
const FILE_VERSION: u8 = 1;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("no precomputed key with common prefix length {cpl} to the target")]
pub struct NoKeyForPrefix {
    pub cpl: u32,
}

#[derive(Debug, Error)]
pub enum KeyTableError {
    #[error("pool size must be at least 2, got {0}")]
    PoolTooSmall(usize),
    #[error("key table file: {0}")]
    Io(#[from] io::Error),
    #[error("key table file is malformed: {0}")]
    Format(String),
}

/// Random candidate keys indexed by the prefix of their Kademlia hash.
///
/// Building draws candidates from a seeded stream until every hash prefix of
/// `max_cpl_guarantee + 1` bits holds its quota, so a key with any exact
/// common prefix length up to the guarantee exists for every possible target.
/// Immutable once built.
#[derive(Clone)]
pub struct KeyTable {
    seed: u64,
    max_cpl_guarantee: u32,
    // Sorted by hash.
    entries: Vec<(KadKey, [u8; 32])>,
}

impl KeyTable {
    pub fn build(seed: u64, pool_size: usize) -> Result<Self, KeyTableError> {
        if pool_size < 2 {
            return Err(KeyTableError::PoolTooSmall(pool_size));
        }
        let guarantee = pool_size.ilog2().saturating_sub(SAFETY_MARGIN);
        let depth = guarantee + 1;
        let buckets = 1usize << depth;
        let quota = pool_size / buckets;
        let extra = pool_size % buckets;
        let capacity = |b: usize| quota + usize::from(b < extra);

        let mut fill = vec![0usize; buckets];
        let mut unfilled = buckets;
        let mut entries = Vec::with_capacity(pool_size);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        while unfilled > 0 {
            let mut candidate = [0u8; 32];
            rng.fill_bytes(&mut candidate);
            let hash = kad_key(&candidate);
            let b = prefix_bits(&hash, depth) as usize;
            if fill[b] < capacity(b) {
                fill[b] += 1;
                if fill[b] == capacity(b) {
                    unfilled -= 1;
                }
                entries.push((hash, candidate));
            }
        }
        entries.sort_unstable();
        Ok(KeyTable {
            seed,
            max_cpl_guarantee: guarantee,
            entries,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn pool_size(&self) -> usize {
        self.entries.len()
    }

    /// Deepest common prefix length for which [`find_query_key`] always succeeds.
    ///
    /// [`find_query_key`]: KeyTable::find_query_key
    pub fn max_cpl_guarantee(&self) -> u32 {
        self.max_cpl_guarantee
    }

    /// Returns a candidate whose hash shares exactly `cpl` leading bits with
    /// `target`. Beyond the guarantee a lookup may still succeed by chance.
    pub fn find_query_key(&self, target: &KadKey, cpl: u32) -> Result<&[u8; 32], NoKeyForPrefix> {
        if cpl >= 256 {
            return Err(NoKeyForPrefix { cpl });
        }
        // Wanted hash prefix: target's first `cpl` bits, then the flipped bit.
        let mut lower = [0u8; 32];
        let full = (cpl / 8) as usize;
        lower[..full].copy_from_slice(&target.0[..full]);
        let rem = cpl % 8;
        let keep = if rem == 0 { 0 } else { 0xffu8 << (8 - rem) };
        let flip = 0x80u8 >> rem;
        lower[full] = (target.0[full] & keep) | (!target.0[full] & flip);
        let lower = KadKey(lower);

        let idx = self.entries.partition_point(|(h, _)| *h < lower);
        match self.entries.get(idx) {
            Some((hash, key)) if super::common_prefix_len(hash, &lower) > cpl => Ok(key),
            _ => Err(NoKeyForPrefix { cpl }),
        }
    }

    /// Persists the table as the seed, guarantee and raw candidates; hashes are
    /// recomputed on load.
    pub fn save(&self, path: &Path) -> Result<(), KeyTableError> {
        let mut out = Vec::with_capacity(17 + 32 * self.entries.len());
        out.extend_from_slice(FILE_MAGIC);
        out.push(FILE_VERSION);
        out.extend_from_slice(&self.seed.to_be_bytes());
        out.extend_from_slice(&self.max_cpl_guarantee.to_be_bytes());
        for (_, key) in &self.entries {
            out.extend_from_slice(key);
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, KeyTableError> {
        let data = fs::read(path)?;
        if data.len() < 17 || &data[..4] != FILE_MAGIC {
            return Err(KeyTableError::Format("bad magic".into()));
        }
        if data[4] != FILE_VERSION {
            return Err(KeyTableError::Format(format!("unsupported version {}", data[4])));
        }
        let seed = u64::from_be_bytes(data[5..13].try_into().unwrap());
        let max_cpl_guarantee = u32::from_be_bytes(data[13..17].try_into().unwrap());
        let body = &data[17..];
        if body.len() % 32 != 0 || body.len() < 64 {
            return Err(KeyTableError::Format("truncated candidate list".into()));
        }
        let mut entries: Vec<_> = body
            .chunks_exact(32)
            .map(|c| {
                let key: [u8; 32] = c.try_into().unwrap();
                (kad_key(&key), key)
            })
            .collect();
        entries.sort_unstable();
        Ok(KeyTable {
            seed,
            max_cpl_guarantee,
            entries,
        })
    }

    /// Loads the table from `path` if it exists, otherwise builds and saves it.
    pub fn load_or_build(path: &Path, seed: u64, pool_size: usize) -> Result<Self, KeyTableError> {
        if path.exists() {
            let table = Self::load(path)?;
            if table.seed == seed && table.pool_size() == pool_size {
                return Ok(table);
            }
            log::warn!("key table at {} has different parameters; rebuilding", path.display());
        }
        let table = Self::build(seed, pool_size)?;
        table.save(path)?;
        Ok(table)
    }
}

fn prefix_bits(key: &KadKey, depth: u32) -> u64 {
    let head = u64::from_be_bytes(key.0[..8].try_into().unwrap());
    head >> (64 - depth)
}
