//! Kademlia identity math and the minimal DHT surface used by the crawler and
//! provider lookups.

mod keytable;
mod multiaddr;
pub mod tcp;
mod transport;
pub mod wire;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use keytable::{KeyTable, KeyTableError, NoKeyForPrefix, DEFAULT_POOL_SIZE};
pub use multiaddr::{Multiaddr, MultiaddrError, Protocol};
pub use transport::{
    DialError, IdentifyInfo, PeerInfo, PeerSession, ProvidersResponse, RpcError, Transport,
};

/// Multihash code for the identity "hash".
const MH_IDENTITY: u8 = 0x00;
/// Multihash code for sha2-256.
pub(crate) const MH_SHA2_256: u8 = 0x12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PeerIdError {
    #[error("peer id is empty")]
    Empty,
    #[error("peer id is not valid base58: {0}")]
    Base58(String),
}

/// A multihash-encoded peer identifier.
///
/// Compared by raw bytes; the base58 form is used only at I/O boundaries.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PeerId(Vec<u8>);

impl PeerId {
    pub fn from_bytes(bytes: impl Into<Vec<u8>>) -> Result<Self, PeerIdError> {
        let bytes = bytes.into();
        if bytes.is_empty() {
            return Err(PeerIdError::Empty);
        }
        Ok(PeerId(bytes))
    }

    /// Peer id of an Ed25519 public key: the identity multihash of the
    /// protobuf-encoded libp2p `PublicKey { Type: Ed25519, Data: key }`.
    pub fn from_ed25519_public(key: &[u8; 32]) -> Self {
        let mut encoded = Vec::with_capacity(36);
        encoded.extend_from_slice(&[0x08, 0x01, 0x12, 0x20]);
        encoded.extend_from_slice(key);
        let mut bytes = Vec::with_capacity(38);
        bytes.push(MH_IDENTITY);
        bytes.push(encoded.len() as u8);
        bytes.extend_from_slice(&encoded);
        PeerId(bytes)
    }

    /// Peer id for an arbitrary random Ed25519-shaped key.
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        Self::from_ed25519_public(&key)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_base58(&self) -> String {
        bs58::encode(&self.0).into_string()
    }

    pub fn kad_key(&self) -> KadKey {
        kad_key(&self.0)
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_base58())
    }
}

impl fmt::Debug for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PeerId({})", self.to_base58())
    }
}

impl FromStr for PeerId {
    type Err = PeerIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = bs58::decode(s)
            .into_vec()
            .map_err(|e| PeerIdError::Base58(e.to_string()))?;
        PeerId::from_bytes(bytes)
    }
}

impl Serialize for PeerId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_base58())
    }
}

impl<'de> Deserialize<'de> for PeerId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A point in the 256-bit Kademlia key space.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KadKey(pub [u8; 32]);

impl KadKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// XOR distance, ordered as a big-endian 256-bit integer.
    pub fn distance(&self, other: &KadKey) -> Distance {
        let mut d = [0u8; 32];
        for (i, b) in d.iter_mut().enumerate() {
            *b = self.0[i] ^ other.0[i];
        }
        Distance(d)
    }

    pub fn common_prefix_len(&self, other: &KadKey) -> u32 {
        common_prefix_len(self, other)
    }

    /// Value of bit `i`, counting from the most significant bit.
    pub fn bit(&self, i: u32) -> bool {
        let byte = self.0[(i / 8) as usize];
        byte & (0x80 >> (i % 8)) != 0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 64 {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, b) in out.iter_mut().enumerate() {
            *b = u8::from_str_radix(s.get(2 * i..2 * i + 2)?, 16).ok()?;
        }
        Some(KadKey(out))
    }
}

impl fmt::Debug for KadKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KadKey({})", self.to_hex())
    }
}

/// XOR distance between two keys.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Distance(pub [u8; 32]);

/// Maps bytes (a peer id, a content multihash) into the key space.
pub fn kad_key(bytes: &[u8]) -> KadKey {
    KadKey(Sha256::digest(bytes).into())
}

/// Number of leading bits on which `a` and `b` agree; 256 iff they are equal.
pub fn common_prefix_len(a: &KadKey, b: &KadKey) -> u32 {
    for i in 0..32 {
        let x = a.0[i] ^ b.0[i];
        if x != 0 {
            return i as u32 * 8 + x.leading_zeros();
        }
    }
    256
}
