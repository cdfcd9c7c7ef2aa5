use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::PeerId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MultiaddrError {
    #[error("multiaddress must start with '/': {0:?}")]
    MissingLeadingSlash(String),
    #[error("unknown protocol {0:?}")]
    UnknownProtocol(String),
    #[error("unknown protocol code {0}")]
    UnknownCode(u64),
    #[error("protocol {0} is missing its value")]
    MissingValue(&'static str),
    #[error("invalid value {value:?} for protocol {protocol}")]
    InvalidValue { protocol: &'static str, value: String },
    #[error("truncated binary multiaddress")]
    Truncated,
}

/// One component of a multiaddress.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Ip4(Ipv4Addr),
    Ip6(Ipv6Addr),
    Tcp(u16),
    Udp(u16),
    Dns(String),
    Dns4(String),
    Dns6(String),
    Dnsaddr(String),
    P2p(PeerId),
    P2pCircuit,
    Quic,
    QuicV1,
    Tls,
    Noise,
    Ws,
    Wss,
    WebTransport,
    Http,
}

impl Protocol {
    fn name(&self) -> &'static str {
        match self {
            Protocol::Ip4(_) => "ip4",
            Protocol::Ip6(_) => "ip6",
            Protocol::Tcp(_) => "tcp",
            Protocol::Udp(_) => "udp",
            Protocol::Dns(_) => "dns",
            Protocol::Dns4(_) => "dns4",
            Protocol::Dns6(_) => "dns6",
            Protocol::Dnsaddr(_) => "dnsaddr",
            Protocol::P2p(_) => "p2p",
            Protocol::P2pCircuit => "p2p-circuit",
            Protocol::Quic => "quic",
            Protocol::QuicV1 => "quic-v1",
            Protocol::Tls => "tls",
            Protocol::Noise => "noise",
            Protocol::Ws => "ws",
            Protocol::Wss => "wss",
            Protocol::WebTransport => "webtransport",
            Protocol::Http => "http",
        }
    }

    fn code(&self) -> u64 {
        match self {
            Protocol::Ip4(_) => 4,
            Protocol::Tcp(_) => 6,
            Protocol::Ip6(_) => 41,
            Protocol::Dns(_) => 53,
            Protocol::Dns4(_) => 54,
            Protocol::Dns6(_) => 55,
            Protocol::Dnsaddr(_) => 56,
            Protocol::Udp(_) => 273,
            Protocol::P2pCircuit => 290,
            Protocol::P2p(_) => 421,
            Protocol::Tls => 448,
            Protocol::Noise => 454,
            Protocol::Quic => 460,
            Protocol::QuicV1 => 461,
            Protocol::WebTransport => 465,
            Protocol::Ws => 477,
            Protocol::Wss => 478,
            Protocol::Http => 480,
        }
    }
}

/// A self-describing network address, e.g. `/ip4/1.2.3.4/tcp/4001/p2p/12D3…`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Multiaddr(Vec<Protocol>);

impl Multiaddr {
    pub fn new(components: Vec<Protocol>) -> Self {
        Multiaddr(components)
    }

    pub fn components(&self) -> &[Protocol] {
        &self.0
    }

    pub fn push(&mut self, p: Protocol) {
        self.0.push(p);
    }

    pub fn with(mut self, p: Protocol) -> Self {
        self.0.push(p);
        self
    }

    /// First IP component, if any.
    pub fn ip(&self) -> Option<IpAddr> {
        self.0.iter().find_map(|p| match p {
            Protocol::Ip4(a) => Some(IpAddr::V4(*a)),
            Protocol::Ip6(a) => Some(IpAddr::V6(*a)),
            _ => None,
        })
    }

    /// Whether the address routes through a relay (`p2p-circuit`).
    pub fn is_relayed(&self) -> bool {
        self.0.contains(&Protocol::P2pCircuit)
    }

    /// The trailing `/p2p/<id>` component, if present.
    pub fn peer_id(&self) -> Option<&PeerId> {
        match self.0.last() {
            Some(Protocol::P2p(id)) => Some(id),
            _ => None,
        }
    }

    /// The address with any trailing `/p2p/<id>` removed.
    pub fn without_peer_id(&self) -> Multiaddr {
        let mut out = self.clone();
        if matches!(out.0.last(), Some(Protocol::P2p(_))) {
            out.0.pop();
        }
        out
    }

    /// `ip{4,6}/tcp` prefix as a socket address, ignoring relayed addresses.
    pub fn tcp_socket(&self) -> Option<SocketAddr> {
        if self.is_relayed() {
            return None;
        }
        match self.0.as_slice() {
            [Protocol::Ip4(a), Protocol::Tcp(port), ..] => Some(SocketAddr::new((*a).into(), *port)),
            [Protocol::Ip6(a), Protocol::Tcp(port), ..] => Some(SocketAddr::new((*a).into(), *port)),
            _ => None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for p in &self.0 {
            prost::encoding::encode_varint(p.code(), &mut out);
            match p {
                Protocol::Ip4(a) => out.extend_from_slice(&a.octets()),
                Protocol::Ip6(a) => out.extend_from_slice(&a.octets()),
                Protocol::Tcp(port) | Protocol::Udp(port) => out.extend_from_slice(&port.to_be_bytes()),
                Protocol::Dns(s) | Protocol::Dns4(s) | Protocol::Dns6(s) | Protocol::Dnsaddr(s) => {
                    prost::encoding::encode_varint(s.len() as u64, &mut out);
                    out.extend_from_slice(s.as_bytes());
                }
                Protocol::P2p(id) => {
                    prost::encoding::encode_varint(id.as_bytes().len() as u64, &mut out);
                    out.extend_from_slice(id.as_bytes());
                }
                _ => {}
            }
        }
        out
    }

    pub fn from_bytes(mut buf: &[u8]) -> Result<Self, MultiaddrError> {
        fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8], MultiaddrError> {
            if buf.len() < n {
                return Err(MultiaddrError::Truncated);
            }
            let (head, tail) = buf.split_at(n);
            *buf = tail;
            Ok(head)
        }
        fn varint(buf: &mut &[u8]) -> Result<u64, MultiaddrError> {
            prost::encoding::decode_varint(buf).map_err(|_| MultiaddrError::Truncated)
        }
        fn text(buf: &mut &[u8], protocol: &'static str) -> Result<String, MultiaddrError> {
            let len = varint(buf)? as usize;
            let raw = take(buf, len)?;
            String::from_utf8(raw.to_vec()).map_err(|_| MultiaddrError::InvalidValue {
                protocol,
                value: format!("{raw:?}"),
            })
        }

        let mut out = Vec::new();
        while !buf.is_empty() {
            let code = varint(&mut buf)?;
            let p = match code {
                4 => Protocol::Ip4(<[u8; 4]>::try_from(take(&mut buf, 4)?).unwrap().into()),
                41 => Protocol::Ip6(<[u8; 16]>::try_from(take(&mut buf, 16)?).unwrap().into()),
                6 => Protocol::Tcp(u16::from_be_bytes(take(&mut buf, 2)?.try_into().unwrap())),
                273 => Protocol::Udp(u16::from_be_bytes(take(&mut buf, 2)?.try_into().unwrap())),
                53 => Protocol::Dns(text(&mut buf, "dns")?),
                54 => Protocol::Dns4(text(&mut buf, "dns4")?),
                55 => Protocol::Dns6(text(&mut buf, "dns6")?),
                56 => Protocol::Dnsaddr(text(&mut buf, "dnsaddr")?),
                421 => {
                    let len = varint(&mut buf)? as usize;
                    let raw = take(&mut buf, len)?;
                    Protocol::P2p(PeerId::from_bytes(raw).map_err(|_| MultiaddrError::InvalidValue {
                        protocol: "p2p",
                        value: String::new(),
                    })?)
                }
                290 => Protocol::P2pCircuit,
                448 => Protocol::Tls,
                454 => Protocol::Noise,
                460 => Protocol::Quic,
                461 => Protocol::QuicV1,
                465 => Protocol::WebTransport,
                477 => Protocol::Ws,
                478 => Protocol::Wss,
                480 => Protocol::Http,
                other => return Err(MultiaddrError::UnknownCode(other)),
            };
            out.push(p);
        }
        Ok(Multiaddr(out))
    }
}

impl fmt::Display for Multiaddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            write!(f, "/{}", p.name())?;
            match p {
                Protocol::Ip4(a) => write!(f, "/{a}")?,
                Protocol::Ip6(a) => write!(f, "/{a}")?,
                Protocol::Tcp(port) | Protocol::Udp(port) => write!(f, "/{port}")?,
                Protocol::Dns(s) | Protocol::Dns4(s) | Protocol::Dns6(s) | Protocol::Dnsaddr(s) => {
                    write!(f, "/{s}")?
                }
                Protocol::P2p(id) => write!(f, "/{id}")?,
                _ => {}
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Multiaddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Multiaddr({self})")
    }
}

impl FromStr for Multiaddr {
    type Err = MultiaddrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s
            .strip_prefix('/')
            .ok_or_else(|| MultiaddrError::MissingLeadingSlash(s.to_string()))?;
        let mut parts = rest.split('/').peekable();
        let mut out = Vec::new();
        while let Some(name) = parts.next() {
            if name.is_empty() && parts.peek().is_none() {
                break; // tolerate a trailing slash
            }
            let mut value = |protocol: &'static str| parts.next().ok_or(MultiaddrError::MissingValue(protocol));
            let invalid = |protocol: &'static str, v: &str| MultiaddrError::InvalidValue {
                protocol,
                value: v.to_string(),
            };
            let p = match name {
                "ip4" => {
                    let v = value("ip4")?;
                    Protocol::Ip4(v.parse().map_err(|_| invalid("ip4", v))?)
                }
                "ip6" => {
                    let v = value("ip6")?;
                    Protocol::Ip6(v.parse().map_err(|_| invalid("ip6", v))?)
                }
                "tcp" => {
                    let v = value("tcp")?;
                    Protocol::Tcp(v.parse().map_err(|_| invalid("tcp", v))?)
                }
                "udp" => {
                    let v = value("udp")?;
                    Protocol::Udp(v.parse().map_err(|_| invalid("udp", v))?)
                }
                "dns" | "dns4" | "dns6" | "dnsaddr" => {
                    let v = value("dns")?;
                    if v.is_empty() {
                        return Err(invalid("dns", v));
                    }
                    let v = v.to_string();
                    match name {
                        "dns" => Protocol::Dns(v),
                        "dns4" => Protocol::Dns4(v),
                        "dns6" => Protocol::Dns6(v),
                        _ => Protocol::Dnsaddr(v),
                    }
                }
                // `ipfs` is the legacy name of `p2p`.
                "p2p" | "ipfs" => {
                    let v = value("p2p")?;
                    Protocol::P2p(v.parse().map_err(|_| invalid("p2p", v))?)
                }
                "p2p-circuit" => Protocol::P2pCircuit,
                "quic" => Protocol::Quic,
                "quic-v1" => Protocol::QuicV1,
                "tls" => Protocol::Tls,
                "noise" => Protocol::Noise,
                "ws" => Protocol::Ws,
                "wss" => Protocol::Wss,
                "webtransport" => Protocol::WebTransport,
                "http" => Protocol::Http,
                other => return Err(MultiaddrError::UnknownProtocol(other.to_string())),
            };
            out.push(p);
        }
        Ok(Multiaddr(out))
    }
}

impl Serialize for Multiaddr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Multiaddr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
