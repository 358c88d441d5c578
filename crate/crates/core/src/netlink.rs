//! Simplified shared wireless medium.
//!
//! Unit-disk reception decided at transmission start, carrier sense at the
//! sender only, per-receiver collisions when two transmissions overlap in
//! time at a node that hears both, half-duplex radios, a two-band interface
//! queue, and acknowledged unicast with a bounded number of attempts.

use std::collections::VecDeque;

use crate::dsr::Packet;
use crate::engine::SimTime;
use crate::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub radio_range: f64,
    pub bandwidth_bps: u64,
    pub propagation_delay: SimTime,
    /// Transmission attempts per unicast frame before the link is declared broken.
    pub max_mac_retries: u32,
    pub ifq_capacity: usize,
    pub backoff_max: SimTime,
    pub ack_window: SimTime,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            radio_range: 250.0,
            bandwidth_bps: 2_000_000,
            propagation_delay: SimTime::from_micros(1),
            max_mac_retries: 3,
            ifq_capacity: 50,
            backoff_max: SimTime::from_millis(2),
            ack_window: SimTime::from_millis(1),
        }
    }
}

impl LinkConfig {
    pub fn airtime(&self, size_bytes: u32) -> SimTime {
        SimTime::from_nanos(u64::from(size_bytes) * 8 * 1_000_000_000 / self.bandwidth_bps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dest {
    Unicast(NodeId),
    Broadcast,
}

impl std::fmt::Display for Dest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Dest::Unicast(n) => write!(f, "{n}"),
            Dest::Broadcast => f.write_str("*"),
        }
    }
}

/// A packet bound for a next hop, as held by the interface queue and MAC.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub packet: Packet,
    pub dest: Dest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub src: NodeId,
    pub dst: Dest,
    pub payload: Packet,
    pub size: u32,
    pub tx_start: SimTime,
    pub tx_end: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Enqueue {
    Accepted,
    /// The incoming packet did not fit.
    Rejected(Outgoing),
    /// The incoming control packet took the place of the newest queued data.
    Displaced(Outgoing),
}

/// Interface queue with routing control ahead of data, FIFO within a band.
#[derive(Debug, Clone)]
pub struct InterfaceQueue {
    control: VecDeque<Outgoing>,
    data: VecDeque<Outgoing>,
    capacity: usize,
}

impl InterfaceQueue {
    pub fn new(capacity: usize) -> Self {
        InterfaceQueue {
            control: VecDeque::new(),
            data: VecDeque::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.control.len() + self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn enqueue(&mut self, out: Outgoing) -> Enqueue {
        let control = out.packet.is_control();
        let result = if self.len() < self.capacity {
            if control {
                self.control.push_back(out);
            } else {
                self.data.push_back(out);
            }
            Enqueue::Accepted
        } else if control {
            match self.data.pop_back() {
                Some(victim) => {
                    self.control.push_back(out);
                    Enqueue::Displaced(victim)
                }
                None => Enqueue::Rejected(out),
            }
        } else {
            Enqueue::Rejected(out)
        };
        assert!(self.len() <= self.capacity, "interface queue over capacity");
        result
    }

    pub fn dequeue(&mut self) -> Option<Outgoing> {
        self.control.pop_front().or_else(|| self.data.pop_front())
    }

    /// Remove every queued packet addressed to `next_hop`.
    pub fn take_for(&mut self, next_hop: NodeId) -> Vec<Outgoing> {
        let mut out = Vec::new();
        for band in [&mut self.control, &mut self.data] {
            let (taken, kept): (Vec<_>, Vec<_>) = band
                .drain(..)
                .partition(|o| o.dest == Dest::Unicast(next_hop));
            *band = kept.into();
            out.extend(taken);
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &Outgoing> {
        self.control.iter().chain(self.data.iter())
    }
}

/// A frame on the air together with who can hear it.
#[derive(Debug, Clone)]
pub struct Transmission {
    pub id: u64,
    pub frame: Frame,
    /// Nodes in range of the sender at `tx_start`, in id order.
    pub receivers: Vec<NodeId>,
    hears: Vec<bool>,
    corrupted: Vec<bool>,
}

impl Transmission {
    pub fn corrupted_at(&self, node: NodeId) -> bool {
        self.corrupted[node.index()]
    }

    pub fn hears(&self, node: NodeId) -> bool {
        self.hears[node.index()]
    }

    /// Receivers that got the frame intact.
    pub fn clean_receivers(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.receivers
            .iter()
            .copied()
            .filter(|r| !self.corrupted[r.index()])
    }
}

/// Active transmissions and the collision bookkeeping between them.
#[derive(Debug, Clone)]
pub struct Medium {
    n_nodes: usize,
    active: Vec<Transmission>,
    next_id: u64,
}

impl Medium {
    pub fn new(n_nodes: usize) -> Self {
        Medium {
            n_nodes,
            active: Vec::new(),
            next_id: 0,
        }
    }

    /// Latest end time of any ongoing transmission `node` can hear or is
    /// sending itself.
    pub fn busy_until(&self, node: NodeId, now: SimTime) -> Option<SimTime> {
        self.active
            .iter()
            .filter(|t| t.frame.tx_end > now && (t.frame.src == node || t.hears(node)))
            .map(|t| t.frame.tx_end)
            .max()
    }

    /// Put `frame` on the air. Returns its id and the `(receiver, other
    /// transmission id)` pairs that collided as a result.
    pub fn begin(&mut self, frame: Frame, receivers: Vec<NodeId>) -> (u64, Vec<(NodeId, u64)>) {
        let now = frame.tx_start;
        let id = self.next_id;
        self.next_id += 1;
        let mut hears = vec![false; self.n_nodes];
        for r in &receivers {
            hears[r.index()] = true;
        }
        let mut tx = Transmission {
            id,
            frame,
            receivers,
            hears,
            corrupted: vec![false; self.n_nodes],
        };
        let mut collisions = Vec::new();
        for other in self.active.iter_mut().filter(|t| t.frame.tx_end > now) {
            for &r in &tx.receivers {
                if other.hears(r) {
                    // r hears both: both frames lost at r
                    tx.corrupted[r.index()] = true;
                    if !other.corrupted[r.index()] {
                        other.corrupted[r.index()] = true;
                    }
                    collisions.push((r, other.id));
                } else if other.frame.src == r {
                    // r is busy sending
                    tx.corrupted[r.index()] = true;
                }
            }
            let src = tx.frame.src;
            if other.hears(src) {
                other.corrupted[src.index()] = true;
            }
        }
        self.active.push(tx);
        (id, collisions)
    }

    /// Take the transmission off the air. Every begun transmission must be
    /// finished exactly once.
    pub fn finish(&mut self, id: u64) -> Transmission {
        let pos = self
            .active
            .iter()
            .position(|t| t.id == id)
            .expect("finishing unknown transmission");
        self.active.swap_remove(pos)
    }

    pub fn active(&self) -> &[Transmission] {
        &self.active
    }
}

/// MAC state of one node.
#[derive(Debug, Clone, Default)]
pub struct MacState {
    /// Frame being contended for, transmitted or retried.
    pub current: Option<Outgoing>,
    pub attempts: u32,
    /// An attempt or transmission event is outstanding.
    pub engaged: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsr::{Data, Rerr};

    fn data(seq: u32) -> Outgoing {
        Outgoing {
            packet: Packet::Data(Data {
                route: vec![NodeId(0), NodeId(1)],
                cursor: 0,
                ttl: 64,
                flow: 0,
                seq,
                origin_time: SimTime::ZERO,
                hops_taken: 0,
                salvaged: false,
            }),
            dest: Dest::Unicast(NodeId(1)),
        }
    }

    fn control() -> Outgoing {
        Outgoing {
            packet: Packet::Rerr(Rerr {
                broken: (NodeId(1), NodeId(2)),
                destination: NodeId(0),
                path: vec![NodeId(1), NodeId(0)],
                at: 0,
            }),
            dest: Dest::Unicast(NodeId(0)),
        }
    }

    fn frame(src: u32, start_us: u64, end_us: u64) -> Frame {
        Frame {
            src: NodeId(src),
            dst: Dest::Broadcast,
            payload: data(0).packet,
            size: 100,
            tx_start: SimTime::from_micros(start_us),
            tx_end: SimTime::from_micros(end_us),
        }
    }

    #[test]
    fn airtime_matches_bandwidth() {
        let cfg = LinkConfig::default();
        assert_eq!(cfg.airtime(250), SimTime::from_millis(1));
    }

    #[test]
    fn full_queue_drops_data_but_control_displaces_newest_data() {
        let mut q = InterfaceQueue::new(2);
        assert_eq!(q.enqueue(data(1)), Enqueue::Accepted);
        assert_eq!(q.enqueue(data(2)), Enqueue::Accepted);
        assert!(matches!(q.enqueue(data(3)), Enqueue::Rejected(_)));
        match q.enqueue(control()) {
            Enqueue::Displaced(Outgoing { packet: Packet::Data(d), .. }) => assert_eq!(d.seq, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(q.dequeue().unwrap().packet.is_control());
        assert!(matches!(q.dequeue().unwrap().packet, Packet::Data(ref d) if d.seq == 1));
        assert!(q.dequeue().is_none());
    }

    #[test]
    fn control_goes_first() {
        let mut q = InterfaceQueue::new(10);
        q.enqueue(data(1));
        q.enqueue(control());
        assert!(q.dequeue().unwrap().packet.is_control());
    }

    #[test]
    fn overlapping_frames_collide_only_where_both_are_heard() {
        // 0 and 2 transmit at once; 1 hears both, 3 hears only 2.
        let mut m = Medium::new(4);
        let (a, c0) = m.begin(frame(0, 0, 400), vec![NodeId(1)]);
        assert!(c0.is_empty());
        let (b, c1) = m.begin(frame(2, 100, 500), vec![NodeId(1), NodeId(3)]);
        assert_eq!(c1, vec![(NodeId(1), a)]);
        let ta = m.finish(a);
        let tb = m.finish(b);
        assert!(ta.corrupted_at(NodeId(1)));
        assert!(tb.corrupted_at(NodeId(1)));
        assert_eq!(tb.clean_receivers().collect::<Vec<_>>(), vec![NodeId(3)]);
    }

    #[test]
    fn carrier_sense_and_expiry() {
        let mut m = Medium::new(3);
        m.begin(frame(0, 0, 400), vec![NodeId(1)]);
        assert_eq!(m.busy_until(NodeId(1), SimTime::from_micros(10)), Some(SimTime::from_micros(400)));
        assert_eq!(m.busy_until(NodeId(2), SimTime::from_micros(10)), None);
        // a frame starting exactly at the end does not overlap
        let (_, c) = m.begin(frame(2, 400, 600), vec![NodeId(1)]);
        assert!(c.is_empty());
    }

    #[test]
    fn sender_cannot_receive_while_transmitting() {
        let mut m = Medium::new(3);
        let (a, _) = m.begin(frame(0, 0, 400), vec![NodeId(1)]);
        let (b, _) = m.begin(frame(1, 10, 300), vec![NodeId(0), NodeId(2)]);
        let tb = m.finish(b);
        let ta = m.finish(a);
        assert!(tb.corrupted_at(NodeId(0)));
        assert!(!tb.corrupted_at(NodeId(2)));
        assert!(ta.corrupted_at(NodeId(1)));
    }
}
