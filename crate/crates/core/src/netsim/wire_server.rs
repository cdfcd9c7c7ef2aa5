//! Serves a sim network over loopback TCP with the real framing, so the TCP
//! transport and the crawler can be exercised end to end.
//!
//! Each dialable node gets its own listener; node addresses are rewritten to
//! `/ip4/127.0.0.1/tcp/<port>`. Undialable nodes get a port with nothing
//! listening, and unresponsive nodes accept connections but never answer.

use std::io;
use std::net::{Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use prost::Message;

use super::transport::{find_node_response, get_providers_response, identify_response};
use super::{SimNetwork, SimNode};
use crate::kad::wire::{self, Identify, KadMessage, KadPeer, MessageType};
use crate::kad::{Multiaddr, PeerId, Protocol};

pub struct WireCluster {
    net: Arc<SimNetwork>,
    stop: Arc<AtomicBool>,
    listeners: Vec<(SocketAddr, JoinHandle<()>)>,
}

impl WireCluster {
    /// Binds one loopback listener per node and starts serving.
    pub fn start(net: &SimNetwork) -> io::Result<Self> {
        let mut bound = Vec::with_capacity(net.len());
        for _ in &net.nodes {
            bound.push(TcpListener::bind((Ipv4Addr::LOCALHOST, 0))?);
        }
        let mut remapped = net.clone();
        for (node, listener) in remapped.nodes.iter_mut().zip(&bound) {
            let port = listener.local_addr()?.port();
            node.addresses = vec![Multiaddr::new(vec![Protocol::Ip4(Ipv4Addr::LOCALHOST), Protocol::Tcp(port)])];
        }
        let net = Arc::new(remapped);
        let stop = Arc::new(AtomicBool::new(false));
        let mut listeners = Vec::new();
        for (idx, listener) in bound.into_iter().enumerate() {
            if !net.nodes[idx].dialable {
                // Dropping the listener leaves a refused port behind.
                continue;
            }
            let addr = listener.local_addr()?;
            let net = Arc::clone(&net);
            let stop = Arc::clone(&stop);
            let handle = thread::spawn(move || accept_loop(listener, net, idx, stop));
            listeners.push((addr, handle));
        }
        Ok(WireCluster { net, stop, listeners })
    }

    /// The served network with loopback addresses.
    pub fn network(&self) -> &Arc<SimNetwork> {
        &self.net
    }

    pub fn bootstrap(&self, count: usize) -> Vec<(PeerId, Multiaddr)> {
        self.net.bootstrap(count)
    }
}

impl Drop for WireCluster {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for (addr, _) in &self.listeners {
            // Wake the blocking accept.
            let _ = TcpStream::connect_timeout(addr, Duration::from_millis(200));
        }
        for (_, handle) in self.listeners.drain(..) {
            let _ = handle.join();
        }
    }
}

fn accept_loop(listener: TcpListener, net: Arc<SimNetwork>, idx: usize, stop: Arc<AtomicBool>) {
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        let net = Arc::clone(&net);
        thread::spawn(move || {
            let node = &net.nodes[idx];
            if !node.responsive {
                // Hold the connection open without answering.
                let _ = stream.set_read_timeout(Some(Duration::from_secs(30)));
                let mut sink = [0u8; 256];
                let mut s = &stream;
                while matches!(io::Read::read(&mut s, &mut sink), Ok(n) if n > 0) {}
                return;
            }
            if let Err(e) = serve_stream(stream, &net, node) {
                log::debug!("wire server for {}: {e}", node.peer_id);
            }
        });
    }
}

fn serve_stream(mut stream: TcpStream, net: &SimNetwork, node: &SimNode) -> io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let protocol = wire::negotiate_inbound(
        &mut stream,
        &[wire::DEFAULT_KAD_PROTOCOL, wire::DEFAULT_IDENTIFY_PROTOCOL],
    )?;
    if protocol == wire::DEFAULT_IDENTIFY_PROTOCOL {
        let msg = Identify::from(&identify_response(node));
        return wire::write_message(&mut stream, &msg);
    }
    let request: KadMessage = wire::read_message(&mut stream)?;
    let response = match MessageType::try_from(request.r#type) {
        Ok(MessageType::FindNode) => KadMessage {
            r#type: request.r#type,
            key: request.key.clone(),
            closer_peers: find_node_response(net, node, &request.key)
                .iter()
                .map(KadPeer::from)
                .collect(),
            ..Default::default()
        },
        Ok(MessageType::GetProviders) => {
            let resp = get_providers_response(net, node, &request.key);
            KadMessage {
                r#type: request.r#type,
                key: request.key.clone(),
                closer_peers: resp.closer_peers.iter().map(KadPeer::from).collect(),
                provider_peers: resp.providers.iter().map(KadPeer::from).collect(),
                ..Default::default()
            }
        }
        _ => {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("unsupported message type {}", request.r#type),
            ))
        }
    };
    debug_assert!(response.encoded_len() <= wire::MAX_MESSAGE_SIZE);
    wire::write_message(&mut stream, &response)
}
