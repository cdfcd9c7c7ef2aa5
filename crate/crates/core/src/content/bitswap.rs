//! Bitswap 1.2.0 messages.

use prost::Message as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cid::Cid;

pub const BITSWAP_PROTOCOL: &str = "/ipfs/bitswap/1.2.0";

pub mod pb {
    #[derive(Clone, PartialEq, prost::Message)]
    pub struct Message {
        #[prost(message, optional, tag = "1")]
        pub wantlist: Option<Wantlist>,
        #[prost(bytes = "vec", repeated, tag = "2")]
        pub blocks: Vec<Vec<u8>>,
        #[prost(message, repeated, tag = "3")]
        pub payload: Vec<Block>,
        #[prost(message, repeated, tag = "4")]
        pub block_presences: Vec<BlockPresence>,
        #[prost(int32, tag = "5")]
        pub pending_bytes: i32,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct Wantlist {
        #[prost(message, repeated, tag = "1")]
        pub entries: Vec<Entry>,
        #[prost(bool, tag = "2")]
        pub full: bool,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct Entry {
        #[prost(bytes = "vec", tag = "1")]
        pub block: Vec<u8>,
        #[prost(int32, tag = "2")]
        pub priority: i32,
        #[prost(bool, tag = "3")]
        pub cancel: bool,
        #[prost(enumeration = "WantType", tag = "4")]
        pub want_type: i32,
        #[prost(bool, tag = "5")]
        pub send_dont_have: bool,
    }

    #[derive(Clone, Copy, Debug, PartialEq, Eq, prost::Enumeration)]
    #[repr(i32)]
    pub enum WantType {
        Block = 0,
        Have = 1,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct Block {
        #[prost(bytes = "vec", tag = "1")]
        pub prefix: Vec<u8>,
        #[prost(bytes = "vec", tag = "2")]
        pub data: Vec<u8>,
    }

    #[derive(Clone, Copy, Debug, PartialEq, Eq, prost::Enumeration)]
    #[repr(i32)]
    pub enum BlockPresenceType {
        Have = 0,
        DontHave = 1,
    }

    #[derive(Clone, PartialEq, prost::Message)]
    pub struct BlockPresence {
        #[prost(bytes = "vec", tag = "1")]
        pub cid: Vec<u8>,
        #[prost(enumeration = "BlockPresenceType", tag = "2")]
        pub r#type: i32,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WantType {
    WantHave,
    WantBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Presence {
    Have,
    DontHave,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WantEntry {
    pub cid: Cid,
    pub want_type: WantType,
    pub cancel: bool,
    pub priority: i32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPayload {
    pub prefix: Vec<u8>,
    pub data: Vec<u8>,
}

impl BlockPayload {
    /// The CID this block hashes to under its prefix.
    pub fn cid(&self) -> Result<Cid, DecodeError> {
        Cid::from_prefix(&self.prefix, &self.data).map_err(|e| DecodeError(e.to_string()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BitswapMessage {
    pub wantlist: Vec<WantEntry>,
    pub full: bool,
    pub blocks: Vec<BlockPayload>,
    pub presences: Vec<(Cid, Presence)>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("undecodable Bitswap message: {0}")]
pub struct DecodeError(pub String);

fn cid_field(raw: &[u8]) -> Result<Cid, DecodeError> {
    Cid::from_bytes(raw).map_err(|e| DecodeError(e.to_string()))
}

/// Decodes one Bitswap message body (without its length prefix). Unknown
/// fields are skipped; CIDs and enum values must be valid.
pub fn decode_bitswap_message(bytes: &[u8]) -> Result<BitswapMessage, DecodeError> {
    let msg = pb::Message::decode(bytes).map_err(|e| DecodeError(e.to_string()))?;
    let mut out = BitswapMessage::default();
    if let Some(wl) = msg.wantlist {
        out.full = wl.full;
        for e in wl.entries {
            let want_type = match pb::WantType::try_from(e.want_type) {
                Ok(pb::WantType::Have) => WantType::WantHave,
                Ok(pb::WantType::Block) => WantType::WantBlock,
                Err(_) => return Err(DecodeError(format!("want type {}", e.want_type))),
            };
            out.wantlist.push(WantEntry {
                cid: cid_field(&e.block)?,
                want_type,
                cancel: e.cancel,
                priority: e.priority,
            });
        }
    }
    for data in msg.blocks {
        out.blocks.push(BlockPayload {
            prefix: Cid::of_block(0, super::cid::Codec::DagPb, &data).prefix(),
            data,
        });
    }
    for b in msg.payload {
        out.blocks.push(BlockPayload {
            prefix: b.prefix,
            data: b.data,
        });
    }
    for p in msg.block_presences {
        let presence = match pb::BlockPresenceType::try_from(p.r#type) {
            Ok(pb::BlockPresenceType::Have) => Presence::Have,
            Ok(pb::BlockPresenceType::DontHave) => Presence::DontHave,
            Err(_) => return Err(DecodeError(format!("presence type {}", p.r#type))),
        };
        out.presences.push((cid_field(&p.cid)?, presence));
    }
    Ok(out)
}

pub fn encode_bitswap_message(msg: &BitswapMessage) -> Vec<u8> {
    let wantlist = (!msg.wantlist.is_empty() || msg.full).then(|| pb::Wantlist {
        entries: msg
            .wantlist
            .iter()
            .map(|w| pb::Entry {
                block: w.cid.to_bytes(),
                priority: w.priority,
                cancel: w.cancel,
                want_type: match w.want_type {
                    WantType::WantHave => pb::WantType::Have,
                    WantType::WantBlock => pb::WantType::Block,
                } as i32,
                send_dont_have: false,
            })
            .collect(),
        full: msg.full,
    });
    pb::Message {
        wantlist,
        blocks: Vec::new(),
        payload: msg
            .blocks
            .iter()
            .map(|b| pb::Block {
                prefix: b.prefix.clone(),
                data: b.data.clone(),
            })
            .collect(),
        block_presences: msg
            .presences
            .iter()
            .map(|(cid, p)| pb::BlockPresence {
                cid: cid.to_bytes(),
                r#type: match p {
                    Presence::Have => pb::BlockPresenceType::Have,
                    Presence::DontHave => pb::BlockPresenceType::DontHave,
                } as i32,
            })
            .collect(),
        pending_bytes: 0,
    }
    .encode_to_vec()
}

impl BitswapMessage {
    pub fn want(cid: Cid, want_type: WantType) -> Self {
        BitswapMessage {
            wantlist: vec![WantEntry {
                cid,
                want_type,
                cancel: false,
                priority: 1,
            }],
            ..Default::default()
        }
    }

    pub fn block(cid: &Cid, data: Vec<u8>) -> Self {
        BitswapMessage {
            blocks: vec![BlockPayload {
                prefix: cid.prefix(),
                data,
            }],
            ..Default::default()
        }
    }

    pub fn presence(cid: Cid, presence: Presence) -> Self {
        BitswapMessage {
            presences: vec![(cid, presence)],
            ..Default::default()
        }
    }
}
