//! Signed, sequence-numbered pointers to the current blocklist blob, in the
//! manner of IPNS records.

use std::collections::HashMap;

use chrono::{DateTime, TimeDelta, Utc};
use data_encoding::HEXLOWER;
use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Blocklist, BlocklistError};
use crate::content::{cid_of_file, Cid};

pub const DEFAULT_VALIDITY: TimeDelta = TimeDelta::hours(48);
pub const DEFAULT_PUBLISH_INTERVAL: TimeDelta = TimeDelta::hours(24);

const DOMAIN: &[u8] = b"observatory-blocklist-pointer/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointerRecord {
    /// Hex SHA-256 of the public key.
    pub name_key: String,
    /// Hex Ed25519 public key.
    pub public_key: String,
    pub content_id: Cid,
    pub sequence: u64,
    pub validity: DateTime<Utc>,
    /// Hex Ed25519 signature over the canonical encoding of
    /// `(content_id, sequence, validity)`.
    pub signature: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PointerError {
    #[error("pointer signature does not verify: {0}")]
    SignatureInvalid(String),
    #[error("pointer expired at {0}")]
    Expired(DateTime<Utc>),
    #[error("pointer sequence {got} is older than the accepted {seen}")]
    StaleSequence { seen: u64, got: u64 },
    #[error("fetched blob does not hash to {0}")]
    ContentMismatch(Cid),
    #[error("blob {cid} could not be fetched: {message}")]
    Fetch { cid: Cid, message: String },
    #[error(transparent)]
    Blob(#[from] BlocklistError),
}

pub fn name_key(key: &VerifyingKey) -> String {
    HEXLOWER.encode(&Sha256::digest(key.as_bytes()))
}

/// Canonical signed bytes: domain tag, length-prefixed binary CID, sequence
/// and validity (unix seconds), integers big-endian.
fn signed_bytes(content_id: &Cid, sequence: u64, validity: DateTime<Utc>) -> Vec<u8> {
    let cid = content_id.to_bytes();
    let mut out = Vec::with_capacity(DOMAIN.len() + cid.len() + 18);
    out.extend_from_slice(DOMAIN);
    out.extend_from_slice(&(cid.len() as u16).to_be_bytes());
    out.extend_from_slice(&cid);
    out.extend_from_slice(&sequence.to_be_bytes());
    out.extend_from_slice(&validity.timestamp().to_be_bytes());
    out
}

#[derive(Clone, Debug)]
pub struct Published {
    pub blob: Vec<u8>,
    pub content_id: Cid,
    pub record: PointerRecord,
}

/// Serializes `blocklist`, addresses it by its UnixFS CID and signs a pointer
/// valid until `now + validity`.
pub fn publish(
    blocklist: &Blocklist,
    key: &SigningKey,
    sequence: u64,
    now: DateTime<Utc>,
    validity: TimeDelta,
) -> Published {
    let blob = blocklist.serialize();
    let content_id = cid_of_file(&blob);
    let validity = DateTime::from_timestamp((now + validity).timestamp(), 0).expect("in range");
    let signature = key.sign(&signed_bytes(&content_id, sequence, validity));
    let public = key.verifying_key();
    Published {
        blob,
        content_id,
        record: PointerRecord {
            name_key: name_key(&public),
            public_key: HEXLOWER.encode(public.as_bytes()),
            content_id,
            sequence,
            validity,
            signature: HEXLOWER.encode(&signature.to_bytes()),
        },
    }
}

impl PointerRecord {
    /// Checks that the embedded key hashes to `expected_name` and signed
    /// this record.
    pub fn verify(&self, expected_name: &str) -> Result<(), PointerError> {
        let bad = |m: &str| PointerError::SignatureInvalid(m.to_string());
        let pk: [u8; 32] = HEXLOWER
            .decode(self.public_key.as_bytes())
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| bad("public key is not 32 hex bytes"))?;
        let pk = VerifyingKey::from_bytes(&pk).map_err(|e| bad(&e.to_string()))?;
        if name_key(&pk) != expected_name || self.name_key != expected_name {
            return Err(bad("record is not for the expected name"));
        }
        let sig: [u8; 64] = HEXLOWER
            .decode(self.signature.as_bytes())
            .ok()
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| bad("signature is not 64 hex bytes"))?;
        pk.verify_strict(
            &signed_bytes(&self.content_id, self.sequence, self.validity),
            &Signature::from_bytes(&sig),
        )
        .map_err(|e| bad(&e.to_string()))
    }
}

/// Resolves pointers while remembering the highest sequence accepted per
/// name, so content never moves backwards.
#[derive(Debug, Default)]
pub struct Resolver {
    accepted: HashMap<String, u64>,
}

impl Resolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_sequence(&self, name: &str) -> Option<u64> {
        self.accepted.get(name).copied()
    }

    /// Verifies `record`, fetches its blob, checks the blob's CID and
    /// returns the decoded blocklist.
    pub fn resolve(
        &mut self,
        record: &PointerRecord,
        expected_name: &str,
        fetch: impl FnOnce(&Cid) -> Result<Vec<u8>, String>,
        now: DateTime<Utc>,
    ) -> Result<Blocklist, PointerError> {
        record.verify(expected_name)?;
        if now >= record.validity {
            return Err(PointerError::Expired(record.validity));
        }
        if let Some(seen) = self.last_sequence(expected_name) {
            if record.sequence < seen {
                return Err(PointerError::StaleSequence {
                    seen,
                    got: record.sequence,
                });
            }
        }
        let blob = fetch(&record.content_id).map_err(|message| PointerError::Fetch {
            cid: record.content_id,
            message,
        })?;
        if cid_of_file(&blob) != record.content_id {
            return Err(PointerError::ContentMismatch(record.content_id));
        }
        let list = Blocklist::deserialize(&blob)?;
        self.accepted.insert(expected_name.to_string(), record.sequence);
        Ok(list)
    }
}

pub fn signing_key_from_hex(hex: &str) -> Option<SigningKey> {
    let raw: [u8; 32] = HEXLOWER.decode(hex.trim().as_bytes()).ok()?.try_into().ok()?;
    Some(SigningKey::from_bytes(&raw))
}

pub fn signing_key_to_hex(key: &SigningKey) -> String {
    HEXLOWER.encode(&key.to_bytes())
}
