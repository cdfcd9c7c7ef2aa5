//! UnixFS file DAGs in the legacy `ipfs add` layout: 256 KiB chunks, dag-pb
//! leaves, balanced tree of width 174, CIDv0.

use std::collections::HashMap;

use prost::Message;
use thiserror::Error;

use super::cid::{put_uvarint, take_uvarint, Cid, Codec};

pub const DEFAULT_CHUNK_SIZE: usize = 262_144;
pub const MAX_LINKS: usize = 174;

/// Splits `data` into fixed-size chunks; the last may be short.
///
/// # Panics
/// If `chunk_size` is zero.
pub fn chunk_file(data: &[u8], chunk_size: usize) -> Vec<&[u8]> {
    assert!(chunk_size >= 1, "chunk size must be positive");
    data.chunks(chunk_size).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, prost::Enumeration)]
#[repr(i32)]
pub enum DataType {
    Raw = 0,
    Directory = 1,
    File = 2,
    Metadata = 3,
    Symlink = 4,
    HamtShard = 5,
}

#[derive(Clone, PartialEq, prost::Message)]
pub struct UnixfsData {
    #[prost(enumeration = "DataType", required, tag = "1")]
    pub r#type: i32,
    #[prost(bytes = "vec", optional, tag = "2")]
    pub data: Option<Vec<u8>>,
    #[prost(uint64, optional, tag = "3")]
    pub filesize: Option<u64>,
    #[prost(uint64, repeated, packed = "false", tag = "4")]
    pub blocksizes: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PbLink {
    pub hash: Cid,
    pub name: Option<String>,
    pub tsize: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PbNode {
    pub links: Vec<PbLink>,
    pub data: Option<Vec<u8>>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DagError {
    #[error("malformed dag-pb node: {0}")]
    Node(String),
    #[error("malformed UnixFS data: {0}")]
    Unixfs(String),
    #[error("block {0} missing")]
    Missing(Cid),
    #[error("block {0} does not hash to its CID")]
    HashMismatch(Cid),
}

fn put_bytes_field(out: &mut Vec<u8>, tag: u64, bytes: &[u8]) {
    put_uvarint(out, tag << 3 | 2);
    put_uvarint(out, bytes.len() as u64);
    out.extend_from_slice(bytes);
}

impl PbNode {
    /// Canonical dag-pb encoding: links first, then data.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for link in &self.links {
            let mut l = Vec::new();
            put_bytes_field(&mut l, 1, &link.hash.to_bytes());
            if let Some(name) = &link.name {
                put_bytes_field(&mut l, 2, name.as_bytes());
            }
            if let Some(t) = link.tsize {
                put_uvarint(&mut l, 3 << 3);
                put_uvarint(&mut l, t);
            }
            put_bytes_field(&mut out, 2, &l);
        }
        if let Some(d) = &self.data {
            put_bytes_field(&mut out, 1, d);
        }
        out
    }

    pub fn decode(mut buf: &[u8]) -> Result<Self, DagError> {
        let err = |m: &str| DagError::Node(m.to_string());
        let mut node = PbNode::default();
        while !buf.is_empty() {
            let key = take_uvarint(&mut buf).ok_or_else(|| err("truncated key"))?;
            if key & 7 != 2 {
                return Err(err("unexpected wire type"));
            }
            let body = take_len(&mut buf).ok_or_else(|| err("truncated field"))?;
            match key >> 3 {
                1 => node.data = Some(body.to_vec()),
                2 => node.links.push(decode_link(body)?),
                _ => return Err(err("unknown field")),
            }
        }
        Ok(node)
    }
}

fn take_len<'a>(buf: &mut &'a [u8]) -> Option<&'a [u8]> {
    let len = usize::try_from(take_uvarint(buf)?).ok()?;
    if len > buf.len() {
        return None;
    }
    let (body, rest) = buf.split_at(len);
    *buf = rest;
    Some(body)
}

fn decode_link(mut buf: &[u8]) -> Result<PbLink, DagError> {
    let err = |m: &str| DagError::Node(m.to_string());
    let (mut hash, mut name, mut tsize) = (None, None, None);
    while !buf.is_empty() {
        let key = take_uvarint(&mut buf).ok_or_else(|| err("truncated link key"))?;
        match (key >> 3, key & 7) {
            (1, 2) => {
                let b = take_len(&mut buf).ok_or_else(|| err("truncated link hash"))?;
                hash = Some(Cid::from_bytes(b).map_err(|e| DagError::Node(e.to_string()))?);
            }
            (2, 2) => {
                let b = take_len(&mut buf).ok_or_else(|| err("truncated link name"))?;
                name = Some(String::from_utf8(b.to_vec()).map_err(|_| err("link name is not UTF-8"))?);
            }
            (3, 0) => tsize = Some(take_uvarint(&mut buf).ok_or_else(|| err("truncated tsize"))?),
            _ => return Err(err("unexpected link field")),
        }
    }
    Ok(PbLink {
        hash: hash.ok_or_else(|| err("link without hash"))?,
        name,
        tsize,
    })
}

/// A file DAG: the root CID and every block keyed by CID.
#[derive(Clone, Debug, Default)]
pub struct Dag {
    pub root: Option<Cid>,
    pub blocks: HashMap<Cid, Vec<u8>>,
}

struct Built {
    cid: Cid,
    file_size: u64,
    cumulative: u64,
}

fn store(node: &PbNode, blocks: Option<&mut HashMap<Cid, Vec<u8>>>) -> (Cid, u64) {
    let bytes = node.encode();
    let cid = Cid::of_block(0, Codec::DagPb, &bytes);
    let len = bytes.len() as u64;
    if let Some(b) = blocks {
        b.insert(cid, bytes);
    }
    (cid, len)
}

fn leaf(chunk: &[u8], blocks: Option<&mut HashMap<Cid, Vec<u8>>>) -> Built {
    let data = UnixfsData {
        r#type: DataType::File as i32,
        data: (!chunk.is_empty()).then(|| chunk.to_vec()),
        filesize: Some(chunk.len() as u64),
        blocksizes: Vec::new(),
    };
    let node = PbNode {
        links: Vec::new(),
        data: Some(data.encode_to_vec()),
    };
    let (cid, len) = store(&node, blocks);
    Built {
        cid,
        file_size: chunk.len() as u64,
        cumulative: len,
    }
}

fn parent(children: &[Built], blocks: Option<&mut HashMap<Cid, Vec<u8>>>) -> Built {
    let file_size = children.iter().map(|c| c.file_size).sum();
    let data = UnixfsData {
        r#type: DataType::File as i32,
        data: None,
        filesize: Some(file_size),
        blocksizes: children.iter().map(|c| c.file_size).collect(),
    };
    let node = PbNode {
        links: children
            .iter()
            .map(|c| PbLink {
                hash: c.cid,
                name: Some(String::new()),
                tsize: Some(c.cumulative),
            })
            .collect(),
        data: Some(data.encode_to_vec()),
    };
    let (cid, len) = store(&node, blocks);
    Built {
        cid,
        file_size,
        cumulative: len + children.iter().map(|c| c.cumulative).sum::<u64>(),
    }
}

fn build(data: &[u8], mut blocks: Option<&mut HashMap<Cid, Vec<u8>>>) -> Cid {
    let mut layer: Vec<Built> = if data.is_empty() {
        vec![leaf(&[], blocks.as_deref_mut())]
    } else {
        chunk_file(data, DEFAULT_CHUNK_SIZE)
            .into_iter()
            .map(|c| leaf(c, blocks.as_deref_mut()))
            .collect()
    };
    while layer.len() > 1 {
        layer = layer
            .chunks(MAX_LINKS)
            .map(|group| parent(group, blocks.as_deref_mut()))
            .collect();
    }
    layer[0].cid
}

/// Root CID of `data` as the reference implementation's default add
/// computes it.
pub fn cid_of_file(data: &[u8]) -> Cid {
    build(data, None)
}

/// Builds the DAG for `data`, keeping every block.
pub fn build_dag(data: &[u8]) -> Dag {
    let mut blocks = HashMap::new();
    let root = build(data, Some(&mut blocks));
    Dag {
        root: Some(root),
        blocks,
    }
}

/// What a block contributes to file reassembly.
#[derive(Debug, PartialEq, Eq)]
pub enum BlockContent {
    /// File bytes held directly by this block.
    Bytes(Vec<u8>),
    /// Children to be read in order.
    Links(Vec<Cid>),
    /// A UnixFS node other than a file (directory, symlink, ...).
    Other(DataType, Vec<PbLink>),
}

/// Interprets one verified block as part of a UnixFS file.
pub fn block_content(cid: &Cid, block: &[u8]) -> Result<BlockContent, DagError> {
    if cid.codec() == Codec::Raw {
        return Ok(BlockContent::Bytes(block.to_vec()));
    }
    let node = PbNode::decode(block)?;
    let raw = node.data.as_deref().unwrap_or_default();
    let fs = UnixfsData::decode(raw).map_err(|e| DagError::Unixfs(e.to_string()))?;
    let kind = DataType::try_from(fs.r#type).map_err(|_| DagError::Unixfs(format!("type {}", fs.r#type)))?;
    match kind {
        DataType::File | DataType::Raw if node.links.is_empty() => Ok(BlockContent::Bytes(fs.data.unwrap_or_default())),
        DataType::File | DataType::Raw => {
            if fs.data.as_ref().is_some_and(|d| !d.is_empty()) {
                return Err(DagError::Unixfs("inline data alongside links is unsupported".into()));
            }
            Ok(BlockContent::Links(node.links.into_iter().map(|l| l.hash).collect()))
        }
        other => Ok(BlockContent::Other(other, node.links)),
    }
}

/// Reassembles a file from a complete block store, verifying every hash.
pub fn assemble(root: &Cid, blocks: &HashMap<Cid, Vec<u8>>) -> Result<Vec<u8>, DagError> {
    let mut out = Vec::new();
    let mut stack = vec![*root];
    while let Some(cid) = stack.pop() {
        let block = blocks.get(&cid).ok_or(DagError::Missing(cid))?;
        if !cid.verifies(block) {
            return Err(DagError::HashMismatch(cid));
        }
        match block_content(&cid, block)? {
            BlockContent::Bytes(b) => out.extend_from_slice(&b),
            BlockContent::Links(children) => stack.extend(children.into_iter().rev()),
            BlockContent::Other(kind, _) => return Err(DagError::Unixfs(format!("{kind:?} is not a file"))),
        }
    }
    Ok(out)
}
