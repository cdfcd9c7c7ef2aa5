//! Plain-TCP transport speaking the framed wire protocol.
//!
//! Every RPC opens a fresh connection (one stream per request, as libp2p does
//! over a muxer) and negotiates the protocol with multistream-select. There is
//! no security handshake or stream muxer, so this reaches peers served by
//! [`crate::netsim::wire_server`] or any endpoint speaking the same framing.

use std::io;
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use super::wire::{self, Identify, KadMessage};
use super::{DialError, IdentifyInfo, Multiaddr, PeerId, PeerInfo, PeerSession, ProvidersResponse, RpcError, Transport};

#[derive(Clone, Debug)]
pub struct TcpTransport {
    pub dial_timeout: Duration,
    pub rpc_timeout: Duration,
    pub kad_protocol: String,
    pub identify_protocol: String,
}

impl Default for TcpTransport {
    fn default() -> Self {
        TcpTransport {
            dial_timeout: Duration::from_secs(10),
            rpc_timeout: Duration::from_secs(10),
            kad_protocol: wire::DEFAULT_KAD_PROTOCOL.into(),
            identify_protocol: wire::DEFAULT_IDENTIFY_PROTOCOL.into(),
        }
    }
}

pub struct TcpSession {
    peer: PeerId,
    addr: SocketAddr,
    transport: TcpTransport,
}

impl Transport for TcpTransport {
    type Session = TcpSession;

    fn dial(&self, peer: &PeerId, addrs: &[Multiaddr]) -> Result<TcpSession, DialError> {
        let mut last = DialError::NoUsableAddress;
        for addr in addrs.iter().filter_map(Multiaddr::tcp_socket) {
            match TcpStream::connect_timeout(&addr, self.dial_timeout) {
                Ok(_) => {
                    return Ok(TcpSession {
                        peer: peer.clone(),
                        addr,
                        transport: self.clone(),
                    })
                }
                Err(e) if is_timeout(&e) => last = DialError::Timeout,
                Err(e) => last = DialError::Unreachable(e.to_string()),
            }
        }
        Err(last)
    }
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock)
}

fn rpc_error(e: io::Error) -> RpcError {
    match e.kind() {
        io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => RpcError::Timeout,
        io::ErrorKind::InvalidData | io::ErrorKind::Unsupported => RpcError::Protocol(e.to_string()),
        _ => RpcError::Disconnected,
    }
}

impl TcpSession {
    fn open(&self, protocol: &str) -> Result<TcpStream, RpcError> {
        let mut stream =
            TcpStream::connect_timeout(&self.addr, self.transport.dial_timeout).map_err(rpc_error)?;
        stream
            .set_read_timeout(Some(self.transport.rpc_timeout))
            .and_then(|_| stream.set_write_timeout(Some(self.transport.rpc_timeout)))
            .map_err(rpc_error)?;
        wire::negotiate_outbound(&mut stream, protocol).map_err(rpc_error)?;
        Ok(stream)
    }

    fn kad_request(&self, request: KadMessage) -> Result<KadMessage, RpcError> {
        let mut stream = self.open(&self.transport.kad_protocol)?;
        wire::write_message(&mut stream, &request).map_err(rpc_error)?;
        let response: KadMessage = wire::read_message(&mut stream).map_err(rpc_error)?;
        if response.r#type != request.r#type {
            return Err(RpcError::Protocol(format!(
                "response type {} does not match request type {}",
                response.r#type, request.r#type
            )));
        }
        Ok(response)
    }
}

impl PeerSession for TcpSession {
    fn remote(&self) -> &PeerId {
        &self.peer
    }

    fn find_node(&mut self, key: &[u8]) -> Result<Vec<PeerInfo>, RpcError> {
        let response = self.kad_request(KadMessage::find_node(key))?;
        wire::decode_peers(&response.closer_peers).map_err(RpcError::Protocol)
    }

    fn identify(&mut self) -> Result<IdentifyInfo, RpcError> {
        let mut stream = self.open(&self.transport.identify_protocol)?;
        let msg: Identify = wire::read_message(&mut stream).map_err(rpc_error)?;
        Ok(msg.into())
    }

    fn get_providers(&mut self, key: &[u8]) -> Result<ProvidersResponse, RpcError> {
        let response = self.kad_request(KadMessage::get_providers(key))?;
        wire::decode_providers(&response).map_err(RpcError::Protocol)
    }
}
