//! Enumeration, profiling and hardening toolkit for Kademlia-based IPFS-style
//! networks.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`kad`]: identity math, the precomputed query-key table, multiaddresses
//!   and the FIND_NODE / identify wire protocol.
//! - [`crawler`]: breadth-first network enumeration producing crawl snapshots.
//! - [`netsim`]: an in-memory Kademlia network with churn, used both as an
//!   offline transport and as a brute-force oracle.
//! - [`analytics`]: IP extraction and set analytics over snapshots.
//! - [`intel`]: threat-intelligence providers, verdicts and statistics.
//! - [`blocklist`]: sorted-IP and Bloom blocklists, signed publication and
//!   connection gating.
//! - [`content`]: CIDs, UnixFS DAG building, Bitswap decoding, monitoring and
//!   provider audits.
//! - [`synth`]: constructive generators for datasets with prescribed marginals.
//! - [`cli`]: the `observatory` command line.

pub mod analytics;
pub mod blocklist;
pub mod cli;
pub mod content;
pub mod crawler;
pub mod intel;
pub mod kad;
pub mod netsim;
pub(crate) mod serde_secs;
pub mod synth;

pub use kad::{common_prefix_len, kad_key, KadKey, Multiaddr, PeerId};
