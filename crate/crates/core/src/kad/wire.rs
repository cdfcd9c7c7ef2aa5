//! Wire encoding of the Kademlia FIND_NODE / GET_PROVIDERS exchange and the
//! identify record: length-delimited protobuf messages negotiated with
//! multistream-select.

use std::io::{self, Read, Write};

use prost::Message;

use super::{IdentifyInfo, Multiaddr, PeerId, PeerInfo, ProvidersResponse};

pub const DEFAULT_KAD_PROTOCOL: &str = "/ipfs/kad/1.0.0";
pub const DEFAULT_IDENTIFY_PROTOCOL: &str = "/ipfs/id/1.0.0";
pub const MULTISTREAM_PROTOCOL: &str = "/multistream/1.0.0";

/// Upper bound on a single framed message.
pub const MAX_MESSAGE_SIZE: usize = 4 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, prost::Enumeration)]
#[repr(i32)]
pub enum MessageType {
    PutValue = 0,
    GetValue = 1,
    AddProvider = 2,
    GetProviders = 3,
    FindNode = 4,
    Ping = 5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, prost::Enumeration)]
#[repr(i32)]
pub enum ConnectionType {
    NotConnected = 0,
    Connected = 1,
    CanConnect = 2,
    CannotConnect = 3,
}

#[derive(Clone, PartialEq, prost::Message)]
pub struct KadPeer {
    #[prost(bytes = "vec", tag = "1")]
    pub id: Vec<u8>,
    #[prost(bytes = "vec", repeated, tag = "2")]
    pub addrs: Vec<Vec<u8>>,
    #[prost(enumeration = "ConnectionType", tag = "3")]
    pub connection: i32,
}

/// The DHT message (`dht.proto`). Value records are not used here.
#[derive(Clone, PartialEq, prost::Message)]
pub struct KadMessage {
    #[prost(enumeration = "MessageType", tag = "1")]
    pub r#type: i32,
    #[prost(int32, tag = "10")]
    pub cluster_level_raw: i32,
    #[prost(bytes = "vec", tag = "2")]
    pub key: Vec<u8>,
    #[prost(message, repeated, tag = "8")]
    pub closer_peers: Vec<KadPeer>,
    #[prost(message, repeated, tag = "9")]
    pub provider_peers: Vec<KadPeer>,
}

#[derive(Clone, PartialEq, prost::Message)]
pub struct Identify {
    #[prost(string, optional, tag = "5")]
    pub protocol_version: Option<String>,
    #[prost(string, optional, tag = "6")]
    pub agent_version: Option<String>,
    #[prost(bytes = "vec", optional, tag = "1")]
    pub public_key: Option<Vec<u8>>,
    #[prost(bytes = "vec", repeated, tag = "2")]
    pub listen_addrs: Vec<Vec<u8>>,
    #[prost(bytes = "vec", optional, tag = "4")]
    pub observed_addr: Option<Vec<u8>>,
    #[prost(string, repeated, tag = "3")]
    pub protocols: Vec<String>,
}

impl KadMessage {
    pub fn find_node(key: &[u8]) -> Self {
        KadMessage {
            r#type: MessageType::FindNode as i32,
            key: key.to_vec(),
            ..Default::default()
        }
    }

    pub fn get_providers(key: &[u8]) -> Self {
        KadMessage {
            r#type: MessageType::GetProviders as i32,
            key: key.to_vec(),
            ..Default::default()
        }
    }
}

impl From<&PeerInfo> for KadPeer {
    fn from(p: &PeerInfo) -> Self {
        KadPeer {
            id: p.id.as_bytes().to_vec(),
            addrs: p.addrs.iter().map(Multiaddr::to_bytes).collect(),
            connection: ConnectionType::NotConnected as i32,
        }
    }
}

/// Decodes a wire peer. Addresses that fail to decode are dropped rather than
/// failing the whole response.
pub fn decode_peer(p: &KadPeer) -> Result<PeerInfo, String> {
    let id = PeerId::from_bytes(p.id.clone()).map_err(|e| e.to_string())?;
    let addrs = p
        .addrs
        .iter()
        .filter_map(|raw| Multiaddr::from_bytes(raw).ok())
        .collect();
    Ok(PeerInfo { id, addrs })
}

pub fn decode_peers(peers: &[KadPeer]) -> Result<Vec<PeerInfo>, String> {
    peers.iter().map(decode_peer).collect()
}

pub fn decode_providers(msg: &KadMessage) -> Result<ProvidersResponse, String> {
    Ok(ProvidersResponse {
        providers: decode_peers(&msg.provider_peers)?,
        closer_peers: decode_peers(&msg.closer_peers)?,
    })
}

impl From<&IdentifyInfo> for Identify {
    fn from(info: &IdentifyInfo) -> Self {
        Identify {
            protocol_version: Some(info.protocol_version.clone()),
            agent_version: Some(info.agent_version.clone()),
            public_key: None,
            listen_addrs: info.listen_addrs.iter().map(Multiaddr::to_bytes).collect(),
            observed_addr: None,
            protocols: info.protocols.clone(),
        }
    }
}

impl From<Identify> for IdentifyInfo {
    fn from(msg: Identify) -> Self {
        IdentifyInfo {
            agent_version: msg.agent_version.unwrap_or_default(),
            protocol_version: msg.protocol_version.unwrap_or_default(),
            listen_addrs: msg
                .listen_addrs
                .iter()
                .filter_map(|raw| Multiaddr::from_bytes(raw).ok())
                .collect(),
            protocols: msg.protocols,
        }
    }
}

fn read_uvarint<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut value = 0u64;
    for shift in (0..64).step_by(7) {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        value |= u64::from(byte[0] & 0x7f) << shift;
        if byte[0] & 0x80 == 0 {
            return Ok(value);
        }
    }
    Err(io::Error::new(io::ErrorKind::InvalidData, "varint overflow"))
}

/// Writes `payload` prefixed with its unsigned-varint length.
pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(payload.len() + 5);
    prost::encoding::encode_varint(payload.len() as u64, &mut buf);
    buf.extend_from_slice(payload);
    w.write_all(&buf)?;
    w.flush()
}

pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Vec<u8>> {
    let len = read_uvarint(r)? as usize;
    if len > MAX_MESSAGE_SIZE {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds limit"),
        ));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn write_message<W: Write, M: Message>(w: &mut W, msg: &M) -> io::Result<()> {
    write_frame(w, &msg.encode_to_vec())
}

pub fn read_message<R: Read, M: Message + Default>(r: &mut R) -> io::Result<M> {
    let frame = read_frame(r)?;
    M::decode(frame.as_slice()).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

fn write_line<W: Write>(w: &mut W, line: &str) -> io::Result<()> {
    write_frame(w, format!("{line}\n").as_bytes())
}

fn read_line<R: Read>(r: &mut R) -> io::Result<String> {
    let frame = read_frame(r)?;
    let text = String::from_utf8(frame)
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "non-utf8 multistream line"))?;
    text.strip_suffix('\n')
        .map(str::to_string)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "multistream line without newline"))
}

/// Dialer side of multistream-select for a single protocol.
pub fn negotiate_outbound<S: Read + Write>(stream: &mut S, protocol: &str) -> io::Result<()> {
    write_line(stream, MULTISTREAM_PROTOCOL)?;
    write_line(stream, protocol)?;
    let header = read_line(stream)?;
    if header != MULTISTREAM_PROTOCOL {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unexpected multistream header {header:?}"),
        ));
    }
    match read_line(stream)? {
        p if p == protocol => Ok(()),
        p if p == "na" => Err(io::Error::new(
            io::ErrorKind::Unsupported,
            format!("remote does not support {protocol}"),
        )),
        other => Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unexpected protocol echo {other:?}"),
        )),
    }
}

/// Listener side: answers proposals until one in `supported` is accepted.
pub fn negotiate_inbound<S: Read + Write>(stream: &mut S, supported: &[&str]) -> io::Result<String> {
    let header = read_line(stream)?;
    if header != MULTISTREAM_PROTOCOL {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "missing multistream header"));
    }
    write_line(stream, MULTISTREAM_PROTOCOL)?;
    loop {
        let proposal = read_line(stream)?;
        if supported.contains(&proposal.as_str()) {
            write_line(stream, &proposal)?;
            return Ok(proposal);
        }
        write_line(stream, "na")?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn find_node_request_bytes() {
        // type=FIND_NODE(4), key="k"
        let bytes = KadMessage::find_node(b"k").encode_to_vec();
        assert_eq!(bytes, vec![0x08, 0x04, 0x12, 0x01, b'k']);
    }

    #[test]
    fn kad_response_round_trip_drops_bad_addresses() {
        let id = PeerId::from_ed25519_public(&[1; 32]);
        let addr: Multiaddr = "/ip4/203.0.113.9/tcp/4001".parse().unwrap();
        let mut peer = KadPeer::from(&PeerInfo {
            id: id.clone(),
            addrs: vec![addr.clone()],
        });
        peer.addrs.push(vec![0xff, 0xff, 0xff]);
        let msg = KadMessage {
            r#type: MessageType::FindNode as i32,
            closer_peers: vec![peer],
            ..Default::default()
        };
        let decoded = KadMessage::decode(msg.encode_to_vec().as_slice()).unwrap();
        assert_eq!(
            decode_peers(&decoded.closer_peers).unwrap(),
            vec![PeerInfo { id, addrs: vec![addr] }]
        );

        let empty_id = KadPeer::default();
        assert!(decode_peer(&empty_id).is_err());
    }

    #[test]
    fn identify_round_trip_keeps_relay_address() {
        let relay: Multiaddr = format!(
            "/ip4/198.51.100.7/tcp/4001/p2p/{}/p2p-circuit",
            PeerId::from_ed25519_public(&[2; 32])
        )
        .parse()
        .unwrap();
        let info = IdentifyInfo {
            agent_version: "storm".into(),
            protocol_version: "ipfs/0.1.0".into(),
            listen_addrs: vec![relay],
            protocols: vec![DEFAULT_KAD_PROTOCOL.into()],
        };
        let bytes = Identify::from(&info).encode_to_vec();
        let back: IdentifyInfo = Identify::decode(bytes.as_slice()).unwrap().into();
        assert_eq!(back, info);
    }

    #[test]
    fn frames_round_trip_and_reject_oversize() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"hello").unwrap();
        assert_eq!(buf[0], 5);
        assert_eq!(read_frame(&mut Cursor::new(&buf)).unwrap(), b"hello");

        let mut huge = Vec::new();
        prost::encoding::encode_varint(MAX_MESSAGE_SIZE as u64 + 1, &mut huge);
        assert!(read_frame(&mut Cursor::new(huge)).is_err());
    }

    /// In-memory duplex: reads from a scripted input, records writes.
    struct Duplex {
        input: Cursor<Vec<u8>>,
        output: Vec<u8>,
    }

    impl Read for Duplex {
        fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
            self.input.read(buf)
        }
    }

    impl Write for Duplex {
        fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
            self.output.write(buf)
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn multistream_dialer_accepts_echo_and_rejects_na() {
        let mut script = Vec::new();
        write_line(&mut script, MULTISTREAM_PROTOCOL).unwrap();
        write_line(&mut script, DEFAULT_KAD_PROTOCOL).unwrap();
        let mut s = Duplex { input: Cursor::new(script), output: Vec::new() };
        negotiate_outbound(&mut s, DEFAULT_KAD_PROTOCOL).unwrap();
        let mut expected = Vec::new();
        write_line(&mut expected, MULTISTREAM_PROTOCOL).unwrap();
        write_line(&mut expected, DEFAULT_KAD_PROTOCOL).unwrap();
        assert_eq!(s.output, expected);

        let mut script = Vec::new();
        write_line(&mut script, MULTISTREAM_PROTOCOL).unwrap();
        write_line(&mut script, "na").unwrap();
        let mut s = Duplex { input: Cursor::new(script), output: Vec::new() };
        let err = negotiate_outbound(&mut s, DEFAULT_KAD_PROTOCOL).unwrap_err();
        assert_eq!(err.kind(), io::ErrorKind::Unsupported);
    }

    #[test]
    fn multistream_listener_skips_unsupported_proposals() {
        let mut script = Vec::new();
        write_line(&mut script, MULTISTREAM_PROTOCOL).unwrap();
        write_line(&mut script, "/meshsub/1.1.0").unwrap();
        write_line(&mut script, DEFAULT_IDENTIFY_PROTOCOL).unwrap();
        let mut s = Duplex { input: Cursor::new(script), output: Vec::new() };
        let chosen = negotiate_inbound(&mut s, &[DEFAULT_KAD_PROTOCOL, DEFAULT_IDENTIFY_PROTOCOL]).unwrap();
        assert_eq!(chosen, DEFAULT_IDENTIFY_PROTOCOL);
        let mut expected = Vec::new();
        write_line(&mut expected, MULTISTREAM_PROTOCOL).unwrap();
        write_line(&mut expected, "na").unwrap();
        write_line(&mut expected, DEFAULT_IDENTIFY_PROTOCOL).unwrap();
        assert_eq!(s.output, expected);
    }
}
