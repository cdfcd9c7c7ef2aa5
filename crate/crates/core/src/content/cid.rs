use std::fmt;
use std::str::FromStr;

use data_encoding::BASE32_NOPAD;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kad::MH_SHA2_256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Codec {
    DagPb,
    Raw,
}

impl Codec {
    pub fn code(self) -> u64 {
        match self {
            Codec::DagPb => 0x70,
            Codec::Raw => 0x55,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0x70 => Some(Codec::DagPb),
            0x55 => Some(Codec::Raw),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CidError {
    #[error("invalid CID text: {0}")]
    Text(String),
    #[error("invalid CID bytes: {0}")]
    Bytes(String),
    #[error("unsupported CID: {0}")]
    Unsupported(String),
}

/// A sha2-256 content identifier, version 0 (dag-pb only) or 1.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cid {
    version: u8,
    codec: Codec,
    digest: [u8; 32],
}

pub(crate) fn put_uvarint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

pub(crate) fn take_uvarint(buf: &mut &[u8]) -> Option<u64> {
    let mut value = 0u64;
    for (i, &b) in buf.iter().enumerate().take(10) {
        value |= u64::from(b & 0x7f) << (7 * i);
        if b & 0x80 == 0 {
            *buf = &buf[i + 1..];
            return Some(value);
        }
    }
    None
}

impl Cid {
    pub fn v0(digest: [u8; 32]) -> Self {
        Cid {
            version: 0,
            codec: Codec::DagPb,
            digest,
        }
    }

    pub fn v1(codec: Codec, digest: [u8; 32]) -> Self {
        Cid {
            version: 1,
            codec,
            digest,
        }
    }

    /// CID of a block, hashing `data` with sha2-256.
    pub fn of_block(version: u8, codec: Codec, data: &[u8]) -> Self {
        let digest: [u8; 32] = Sha256::digest(data).into();
        if version == 0 && codec == Codec::DagPb {
            Cid::v0(digest)
        } else {
            Cid::v1(codec, digest)
        }
    }

    pub fn version(&self) -> u8 {
        self.version
    }

    pub fn codec(&self) -> Codec {
        self.codec
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.digest
    }

    /// True when `data` hashes to this CID.
    pub fn verifies(&self, data: &[u8]) -> bool {
        Sha256::digest(data).as_slice() == self.digest
    }

    /// The sha2-256 multihash; also the DHT key for provider records.
    pub fn multihash(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(34);
        out.push(MH_SHA2_256);
        out.push(32);
        out.extend_from_slice(&self.digest);
        out
    }

    pub fn to_v1(&self) -> Cid {
        Cid::v1(self.codec, self.digest)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        if self.version == 0 {
            return self.multihash();
        }
        let mut out = Vec::with_capacity(36);
        put_uvarint(&mut out, 1);
        put_uvarint(&mut out, self.codec.code());
        out.extend_from_slice(&self.multihash());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CidError> {
        if bytes.len() == 34 && bytes[0] == MH_SHA2_256 && bytes[1] == 32 {
            return Ok(Cid::v0(bytes[2..].try_into().unwrap()));
        }
        let mut buf = bytes;
        let version = take_uvarint(&mut buf).ok_or_else(|| CidError::Bytes("truncated version".into()))?;
        if version != 1 {
            return Err(CidError::Unsupported(format!("version {version}")));
        }
        let codec = take_uvarint(&mut buf).ok_or_else(|| CidError::Bytes("truncated codec".into()))?;
        let codec = Codec::from_code(codec).ok_or_else(|| CidError::Unsupported(format!("codec 0x{codec:x}")))?;
        let digest = Self::parse_multihash(buf)?;
        Ok(Cid::v1(codec, digest))
    }

    fn parse_multihash(mut buf: &[u8]) -> Result<[u8; 32], CidError> {
        let code = take_uvarint(&mut buf).ok_or_else(|| CidError::Bytes("truncated multihash".into()))?;
        let len = take_uvarint(&mut buf).ok_or_else(|| CidError::Bytes("truncated multihash".into()))?;
        if code != u64::from(MH_SHA2_256) || len != 32 {
            return Err(CidError::Unsupported(format!("multihash 0x{code:x}/{len}")));
        }
        buf.try_into()
            .map_err(|_| CidError::Bytes(format!("digest is {} bytes, expected 32", buf.len())))
    }

    /// Rebuilds a CID from a Bitswap block prefix (version, codec, multihash
    /// code and length) and the block's data.
    pub fn from_prefix(prefix: &[u8], data: &[u8]) -> Result<Self, CidError> {
        let mut buf = prefix;
        let mut next = |what: &str| take_uvarint(&mut buf).ok_or_else(|| CidError::Bytes(format!("prefix: truncated {what}")));
        let version = next("version")?;
        let codec = next("codec")?;
        let mh = next("multihash code")?;
        let len = next("digest length")?;
        if mh != u64::from(MH_SHA2_256) || len != 32 {
            return Err(CidError::Unsupported(format!("multihash 0x{mh:x}/{len}")));
        }
        let codec = Codec::from_code(codec).ok_or_else(|| CidError::Unsupported(format!("codec 0x{codec:x}")))?;
        match version {
            0 if codec == Codec::DagPb => Ok(Cid::of_block(0, codec, data)),
            1 => Ok(Cid::of_block(1, codec, data)),
            v => Err(CidError::Unsupported(format!("version {v}"))),
        }
    }

    pub fn prefix(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4);
        put_uvarint(&mut out, u64::from(self.version));
        put_uvarint(&mut out, self.codec.code());
        put_uvarint(&mut out, u64::from(MH_SHA2_256));
        put_uvarint(&mut out, 32);
        out
    }
}

impl fmt::Display for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.version == 0 {
            f.write_str(&bs58::encode(self.multihash()).into_string())
        } else {
            write!(f, "b{}", BASE32_NOPAD.encode(&self.to_bytes()).to_ascii_lowercase())
        }
    }
}

impl fmt::Debug for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cid({self})")
    }
}

impl FromStr for Cid {
    type Err = CidError;

    fn from_str(s: &str) -> Result<Self, CidError> {
        if s.len() == 46 && s.starts_with("Qm") {
            let raw = bs58::decode(s).into_vec().map_err(|e| CidError::Text(e.to_string()))?;
            return Cid::from_bytes(&raw);
        }
        let Some(body) = s.strip_prefix('b') else {
            return Err(CidError::Text(format!("unsupported multibase in {s:?}")));
        };
        let raw = BASE32_NOPAD
            .decode(body.to_ascii_uppercase().as_bytes())
            .map_err(|e| CidError::Text(e.to_string()))?;
        let cid = Cid::from_bytes(&raw)?;
        if cid.version == 0 {
            return Err(CidError::Text("v0 CID inside base32 text".into()));
        }
        Ok(cid)
    }
}

impl Serialize for Cid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
