use std::fmt;

use crate::engine::SimTime;
use crate::{fmt_route, NodeId};

/// Route request. `route` is the accumulated route, starting at the source.
#[derive(Debug, Clone, PartialEq)]
pub struct Rreq {
    pub source: NodeId,
    pub target: NodeId,
    pub id: u32,
    pub route: Vec<NodeId>,
    /// Remaining hops; decremented by every receiver.
    pub hop_limit: u32,
    /// False for the one-hop Ring Zero query.
    pub propagating: bool,
}

/// Route reply. Travels from `replier` back to `route[0]` over the reverse
/// of the part of `route` that precedes the replier.
#[derive(Debug, Clone, PartialEq)]
pub struct Rrep {
    /// Full source-to-target route being returned.
    pub route: Vec<NodeId>,
    pub replier: NodeId,
    /// `(source, id)` of the request this reply answers. Gratuitous replies
    /// carry id 0 and never match a pending request.
    pub for_rreq: (NodeId, u32),
    pub gratuitous: bool,
    /// Index in `route` of the node currently holding the reply.
    pub at: usize,
}

impl Rrep {
    pub fn new(route: Vec<NodeId>, replier: NodeId, for_rreq: (NodeId, u32), gratuitous: bool) -> Self {
        let at = route
            .iter()
            .position(|&n| n == replier)
            .expect("replier must be on the returned route");
        Rrep {
            route,
            replier,
            for_rreq,
            gratuitous,
            at,
        }
    }

    pub fn source(&self) -> NodeId {
        self.route[0]
    }

    pub fn target(&self) -> NodeId {
        *self.route.last().expect("non-empty route")
    }

    pub fn hops(&self) -> usize {
        self.route.len() - 1
    }

    /// Hops the reply travels from replier to source.
    pub fn return_hops(&self) -> usize {
        self.route
            .iter()
            .position(|&n| n == self.replier)
            .unwrap_or(0)
    }

    pub fn next_hop(&self) -> Option<NodeId> {
        self.at.checked_sub(1).map(|i| self.route[i])
    }
}

/// Route error, source-routed back to the source of the failed packet.
#[derive(Debug, Clone, PartialEq)]
pub struct Rerr {
    pub broken: (NodeId, NodeId),
    pub destination: NodeId,
    /// Reporting node first, original source last.
    pub path: Vec<NodeId>,
    pub at: usize,
}

impl Rerr {
    pub fn next_hop(&self) -> Option<NodeId> {
        self.path.get(self.at + 1).copied()
    }
}

/// Application data carried over an explicit source route.
#[derive(Debug, Clone, PartialEq)]
pub struct Data {
    pub route: Vec<NodeId>,
    /// Index in `route` of the node currently holding the packet.
    pub cursor: usize,
    pub ttl: u32,
    pub flow: u32,
    pub seq: u32,
    pub origin_time: SimTime,
    /// Hops actually traversed, including any before a salvage.
    pub hops_taken: u32,
    /// Re-routed once by an intermediate node; not salvaged again.
    pub salvaged: bool,
}

impl Data {
    pub fn source(&self) -> NodeId {
        self.route[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.route.last().expect("routed packet")
    }

    pub fn next_hop(&self) -> Option<NodeId> {
        self.route.get(self.cursor + 1).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Packet {
    Rreq(Rreq),
    Rrep(Rrep),
    Rerr(Rerr),
    Data(Data),
}

pub const CONTROL_HEADER_BYTES: u32 = 12;
pub const DATA_HEADER_BYTES: u32 = 12;
pub const ADDRESS_BYTES: u32 = 4;

impl Packet {
    pub fn is_control(&self) -> bool {
        !matches!(self, Packet::Data(_))
    }

    /// Size on the air: fixed header plus four bytes per carried address,
    /// plus the payload for data.
    pub fn size_bytes(&self, payload_bytes: u32) -> u32 {
        let addrs = |n: usize| n as u32 * ADDRESS_BYTES;
        match self {
            Packet::Rreq(q) => CONTROL_HEADER_BYTES + addrs(q.route.len()),
            Packet::Rrep(p) => CONTROL_HEADER_BYTES + addrs(p.route.len()),
            Packet::Rerr(e) => CONTROL_HEADER_BYTES + addrs(e.path.len()),
            Packet::Data(d) => DATA_HEADER_BYTES + addrs(d.route.len()) + payload_bytes,
        }
    }

}

impl fmt::Display for Packet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Packet::Rreq(q) => write!(
                f,
                "RREQ src={} id={} target={} hl={} route={}",
                q.source,
                q.id,
                q.target,
                q.hop_limit,
                fmt_route(&q.route)
            ),
            Packet::Rrep(p) => write!(
                f,
                "{} src={} id={} by={} route={}",
                super::classify_rrep(p).label(),
                p.for_rreq.0,
                p.for_rreq.1,
                p.replier,
                fmt_route(&p.route)
            ),
            Packet::Rerr(e) => write!(
                f,
                "RERR link={}>{} to={}",
                e.broken.0, e.broken.1, e.destination
            ),
            Packet::Data(d) => write!(
                f,
                "DATA flow={} seq={} route={} at={}",
                d.flow,
                d.seq,
                fmt_route(&d.route),
                d.cursor
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn sizes_grow_with_route_length() {
        let short = Packet::Rreq(Rreq {
            source: NodeId(0),
            target: NodeId(5),
            id: 1,
            route: ids(&[0]),
            hop_limit: 1,
            propagating: false,
        });
        assert_eq!(short.size_bytes(64), 16);
        let data = Packet::Data(Data {
            route: ids(&[0, 1, 2]),
            cursor: 0,
            ttl: 64,
            flow: 0,
            seq: 0,
            origin_time: SimTime::ZERO,
            hops_taken: 0,
            salvaged: false,
        });
        assert_eq!(data.size_bytes(64), 12 + 12 + 64);
    }

    #[test]
    fn rrep_walks_back_to_source() {
        let mut p = Rrep::new(ids(&[0, 1, 4, 9]), NodeId(4), (NodeId(0), 3), false);
        assert_eq!(p.return_hops(), 2);
        assert_eq!(p.next_hop(), Some(NodeId(1)));
        p.at = 1;
        assert_eq!(p.next_hop(), Some(NodeId(0)));
        p.at = 0;
        assert_eq!(p.next_hop(), None);
    }
}
