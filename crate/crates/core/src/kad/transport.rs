use std::net::IpAddr;

use thiserror::Error;

use super::{Multiaddr, PeerId};

/// A peer as reported in a DHT response.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeerInfo {
    pub id: PeerId,
    pub addrs: Vec<Multiaddr>,
}

/// The remote's self-reported identity record.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdentifyInfo {
    /// May be empty; advertising it is up to the node operator.
    pub agent_version: String,
    pub protocol_version: String,
    pub listen_addrs: Vec<Multiaddr>,
    pub protocols: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProvidersResponse {
    pub providers: Vec<PeerInfo>,
    pub closer_peers: Vec<PeerInfo>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RpcError {
    #[error("no response within the deadline")]
    Timeout,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("session disconnected")]
    Disconnected,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DialError {
    #[error("peer unreachable: {0}")]
    Unreachable(String),
    #[error("no usable address")]
    NoUsableAddress,
    #[error("dial timed out")]
    Timeout,
    #[error("connection to {0} denied by gate")]
    Gated(IpAddr),
}

/// An established, protocol-negotiated session with one peer.
///
/// Owned by a single worker; calls are synchronous.
pub trait PeerSession: Send {
    fn remote(&self) -> &PeerId;

    /// Sends FIND_NODE for `key` and returns the decoded closer peers.
    fn find_node(&mut self, key: &[u8]) -> Result<Vec<PeerInfo>, RpcError>;

    fn identify(&mut self) -> Result<IdentifyInfo, RpcError>;

    /// Sends GET_PROVIDERS for a content multihash.
    fn get_providers(&mut self, key: &[u8]) -> Result<ProvidersResponse, RpcError>;
}

/// Dials peers. Shared by all crawl workers.
pub trait Transport: Send + Sync {
    type Session: PeerSession;

    fn dial(&self, peer: &PeerId, addrs: &[Multiaddr]) -> Result<Self::Session, DialError>;
}

impl<T: Transport + ?Sized> Transport for &T {
    type Session = T::Session;

    fn dial(&self, peer: &PeerId, addrs: &[Multiaddr]) -> Result<Self::Session, DialError> {
        (**self).dial(peer, addrs)
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    type Session = T::Session;

    fn dial(&self, peer: &PeerId, addrs: &[Multiaddr]) -> Result<Self::Session, DialError> {
        (**self).dial(peer, addrs)
    }
}
