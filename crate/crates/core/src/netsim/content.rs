//! In-memory Bitswap peers: block stores, scheduled want broadcasts, and
//! fault injection (undialable peers, dropped connections, tampered blocks).

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::{SessionLog, SimNetwork};
use crate::content::bitswap::{decode_bitswap_message, encode_bitswap_message, BitswapMessage, Presence, WantType};
use crate::content::monitor::{ContentNetwork, Inbound};
use crate::content::{build_dag, Cid};
use crate::kad::{DialError, PeerId, RpcError};

#[derive(Debug, Default)]
struct SimContentPeer {
    dialable: bool,
    blocks: HashMap<Cid, Vec<u8>>,
    wants: Vec<(Duration, Cid, WantType)>,
    tamper: bool,
    drop_after: Option<Duration>,
}

#[derive(Debug)]
struct Link {
    since: Instant,
    delivered: usize,
}

#[derive(Default)]
pub struct SimContentNetwork {
    peers: HashMap<PeerId, SimContentPeer>,
    order: Vec<PeerId>,
    links: Mutex<HashMap<PeerId, Link>>,
    started: OnceLock<Instant>,
    dht_log: Option<Arc<SessionLog>>,
    requests: AtomicU64,
    dials: AtomicU64,
}

impl SimContentNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    /// `n` dialable peers with seeded random identities.
    pub fn with_random_peers(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut net = Self::new();
        for _ in 0..n {
            net.add_peer(PeerId::random(&mut rng));
        }
        net
    }

    /// One content peer per DHT node, inheriting dialability. `dht_log` is
    /// the audit log of the DHT transport over the same network.
    pub fn from_network(net: &SimNetwork, dht_log: Option<Arc<SessionLog>>) -> Self {
        let mut out = Self::new();
        for node in &net.nodes {
            out.add_peer(node.peer_id.clone());
            out.peer_mut(&node.peer_id).dialable = node.dialable;
        }
        out.dht_log = dht_log;
        out
    }

    pub fn add_peer(&mut self, id: PeerId) {
        if !self.peers.contains_key(&id) {
            self.order.push(id.clone());
            self.peers.insert(
                id,
                SimContentPeer {
                    dialable: true,
                    ..Default::default()
                },
            );
        }
    }

    fn peer_mut(&mut self, id: &PeerId) -> &mut SimContentPeer {
        self.peers.get_mut(id).expect("unknown sim content peer")
    }

    pub fn peers(&self) -> &[PeerId] {
        &self.order
    }

    /// Stores the full DAG of `data` at `peer` and returns its root.
    pub fn serve_file(&mut self, peer: &PeerId, data: &[u8]) -> Cid {
        let dag = build_dag(data);
        self.peer_mut(peer).blocks.extend(dag.blocks);
        dag.root.expect("non-empty dag")
    }

    /// `peer` broadcasts a want for `cid` once `at` has elapsed since the
    /// first connection to the network; peers connecting later receive it
    /// immediately, as a full want list on connect.
    pub fn schedule_want(&mut self, peer: &PeerId, at: Duration, cid: Cid, want_type: WantType) {
        let wants = &mut self.peer_mut(peer).wants;
        wants.push((at, cid, want_type));
        wants.sort_by_key(|w| w.0);
    }

    /// Makes `peer` serve every block with one flipped byte.
    pub fn set_tamper(&mut self, peer: &PeerId, tamper: bool) {
        self.peer_mut(peer).tamper = tamper;
    }

    pub fn set_dialable(&mut self, peer: &PeerId, dialable: bool) {
        self.peer_mut(peer).dialable = dialable;
    }

    /// Closes every connection to `peer` once it is `after` old.
    pub fn set_drop_after(&mut self, peer: &PeerId, after: Duration) {
        self.peer_mut(peer).drop_after = Some(after);
    }

    pub fn connected_count(&self) -> usize {
        self.links.lock().unwrap().len()
    }

    pub fn total_dials(&self) -> u64 {
        self.dials.load(Ordering::Relaxed)
    }

    pub fn total_requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    /// Provider lookups issued against the DHT side of this network.
    pub fn provider_lookups(&self) -> u64 {
        self.dht_log.as_ref().map_or(0, |l| l.get_providers_calls())
    }

    fn elapsed(&self) -> Duration {
        self.started.get().map_or(Duration::ZERO, |s| s.elapsed())
    }

    fn answer(&self, peer: &SimContentPeer, msg: BitswapMessage) -> BitswapMessage {
        let mut reply = BitswapMessage::default();
        for want in msg.wantlist.iter().filter(|w| !w.cancel) {
            match (peer.blocks.get(&want.cid), want.want_type) {
                (Some(_), WantType::WantHave) => reply.presences.push((want.cid, Presence::Have)),
                (Some(data), WantType::WantBlock) => {
                    let mut data = data.clone();
                    if peer.tamper {
                        let i = data.len() / 2;
                        if let Some(b) = data.get_mut(i) {
                            *b ^= 0x5a;
                        } else {
                            data.push(0);
                        }
                    }
                    reply.blocks.extend(BitswapMessage::block(&want.cid, data).blocks);
                }
                (None, _) => reply.presences.push((want.cid, Presence::DontHave)),
            }
        }
        reply
    }
}

impl ContentNetwork for SimContentNetwork {
    fn candidates(&self) -> Vec<PeerId> {
        self.order.clone()
    }

    fn connect(&self, peer: &PeerId) -> Result<(), DialError> {
        self.dials.fetch_add(1, Ordering::Relaxed);
        let p = self
            .peers
            .get(peer)
            .ok_or_else(|| DialError::Unreachable(format!("{peer} is not in the network")))?;
        if !p.dialable {
            return Err(DialError::Unreachable(format!("{peer} refuses connections")));
        }
        self.started.get_or_init(Instant::now);
        self.links.lock().unwrap().insert(
            peer.clone(),
            Link {
                since: Instant::now(),
                delivered: 0,
            },
        );
        Ok(())
    }

    fn disconnect(&self, peer: &PeerId) {
        self.links.lock().unwrap().remove(peer);
    }

    fn poll(&self) -> Inbound {
        let elapsed = self.elapsed();
        let mut out = Inbound::default();
        let mut links = self.links.lock().unwrap();
        links.retain(|id, link| {
            let peer = &self.peers[id];
            if peer.drop_after.is_some_and(|d| link.since.elapsed() >= d) {
                out.dropped.push(id.clone());
                return false;
            }
            let due = peer.wants[link.delivered..].iter().take_while(|w| w.0 <= elapsed).count();
            if due > 0 {
                let mut msg = BitswapMessage::default();
                for (_, cid, want_type) in &peer.wants[link.delivered..link.delivered + due] {
                    msg.wantlist.extend(BitswapMessage::want(*cid, *want_type).wantlist);
                }
                link.delivered += due;
                out.messages.push((id.clone(), encode_bitswap_message(&msg)));
            }
            true
        });
        out
    }

    fn request(&self, peer: &PeerId, message: &[u8], _timeout: Duration) -> Result<Vec<u8>, RpcError> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        if !self.links.lock().unwrap().contains_key(peer) {
            return Err(RpcError::Disconnected);
        }
        let msg = decode_bitswap_message(message).map_err(|e| RpcError::Protocol(e.to_string()))?;
        Ok(encode_bitswap_message(&self.answer(&self.peers[peer], msg)))
    }
}
