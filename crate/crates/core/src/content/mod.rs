//! Content plane: CIDs, UnixFS DAGs, Bitswap messages, want-list monitoring,
//! content classification and provider audits.

pub mod bitswap;
pub mod cid;
pub mod classify;
pub mod monitor;
pub mod providers;
pub mod unixfs;

pub use bitswap::{decode_bitswap_message, encode_bitswap_message, BitswapMessage, DecodeError, WantType};
pub use cid::{Cid, CidError, Codec};
pub use classify::{nsfw_classify, sniff_mime, FixedScore, NsfwClassifier, NsfwError};
pub use monitor::{
    monitor, ContentNetwork, FetchResult, FetchStatus, FileReport, MonitorConfig, MonitorError, MonitorEvent,
    MonitorSummary, WantEvent,
};
pub use providers::{find_providers, payload_sets, torrent_audit, AuditReport, LookupStatus, ProviderLookup};
pub use unixfs::{assemble, build_dag, chunk_file, cid_of_file, Dag, DagError, DEFAULT_CHUNK_SIZE};
