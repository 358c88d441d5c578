//! Dynamic Source Routing with its native optimisations: two-phase route
//! discovery (Ring Zero then flood), path caching including overheard
//! routes, length-proportional reply deferral, route errors and salvaging,
//! gratuitous replies, and a send buffer for packets awaiting a route.
//!
//! This module holds per-node protocol state and the pure decisions taken
//! on each packet. [`crate::world::World`] applies those decisions by
//! scheduling events and handing packets to the MAC.

pub mod cache;
pub mod packet;
pub mod send_buffer;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::engine::{EventHandle, SimTime};
use crate::suppress::{candidate_reply_length, HrMode, SuppressDecision, SuppressionTable};
use crate::NodeId;

pub use cache::{is_loop_free, CachedRoute, RouteCache};
pub use packet::{Data, Packet, Rerr, Rreq, Rrep};
pub use send_buffer::{Buffered, SendBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    Dsr,
    /// DSR with non-optimal route suppression.
    DsrS,
}

impl Protocol {
    pub fn label(self) -> &'static str {
        match self {
            Protocol::Dsr => "dsr",
            Protocol::DsrS => "dsr+s",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "dsr" => Ok(Protocol::Dsr),
            "dsr+s" => Ok(Protocol::DsrS),
            other => Err(format!("expected dsr|dsr+s, got {other:?}")),
        }
    }
}

/// Protocol timers and limits.
#[derive(Debug, Clone, PartialEq)]
pub struct DsrConfig {
    pub ring_zero: bool,
    pub ring_zero_timeout: SimTime,
    /// Reply deferral per hop of the returned route.
    pub delay_unit: SimTime,
    /// Upper bound of the uniform delay before rebroadcasting a request.
    pub rreq_jitter: SimTime,
    pub send_buffer_timeout: SimTime,
    pub send_buffer_capacity: usize,
    pub max_discovery_retries: u32,
    pub discovery_backoff_initial: SimTime,
    pub discovery_backoff_cap: SimTime,
    pub data_ttl: u32,
    /// Hop limit of propagating requests.
    pub network_diameter_limit: u32,
    /// Minimum spacing of gratuitous replies for the same shortcut.
    pub gratuitous_holdoff: SimTime,
    pub record_ttl: SimTime,
    pub hr_mode: HrMode,
}

impl Default for DsrConfig {
    fn default() -> Self {
        DsrConfig {
            ring_zero: true,
            ring_zero_timeout: SimTime::from_millis(30),
            delay_unit: SimTime::from_millis(2),
            rreq_jitter: SimTime::from_millis(50),
            send_buffer_timeout: SimTime::from_secs(30),
            send_buffer_capacity: 64,
            max_discovery_retries: 8,
            discovery_backoff_initial: SimTime::from_millis(500),
            discovery_backoff_cap: SimTime::from_secs(10),
            data_ttl: 64,
            network_diameter_limit: 16,
            gratuitous_holdoff: SimTime::from_secs(1),
            record_ttl: SimTime::from_secs(10),
            hr_mode: HrMode::Full,
        }
    }
}

impl DsrConfig {
    /// Wait after the `attempt`-th flood (0-based) before trying again.
    pub fn discovery_backoff(&self, attempt: u32) -> SimTime {
        let factor = 1u64 << attempt.min(20);
        let t = SimTime::from_nanos(self.discovery_backoff_initial.as_nanos().saturating_mul(factor));
        t.min(self.discovery_backoff_cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RrepClass {
    Cached,
    Target,
    Gratuitous,
}

impl RrepClass {
    pub fn label(self) -> &'static str {
        match self {
            RrepClass::Cached => "RREP-CACHED",
            RrepClass::Target => "RREP-TARGET",
            RrepClass::Gratuitous => "RREP-GRAT",
        }
    }
}

/// Class fixed when the reply is created; forwarded hops keep it.
pub fn classify_rrep(rrep: &Rrep) -> RrepClass {
    if rrep.gratuitous {
        RrepClass::Gratuitous
    } else if rrep.replier == rrep.target() {
        RrepClass::Target
    } else {
        RrepClass::Cached
    }
}

/// Deferral before sending a cached reply carrying a `route_len_hops` route:
/// `route_len_hops * delay_unit` plus uniform jitter in `[0, delay_unit)`.
pub fn reply_storm_delay<R: Rng + ?Sized>(
    route_len_hops: usize,
    delay_unit: SimTime,
    rng: &mut R,
) -> SimTime {
    debug_assert!(route_len_hops >= 1);
    let unit = delay_unit.as_nanos();
    let jitter = if unit == 0 { 0 } else { rng.gen_range(0..unit) };
    SimTime::from_nanos(route_len_hops as u64 * unit + jitter)
}

/// Join the accumulated request route, the replying node and its cached
/// path (which starts at the replying node). `None` if a node would repeat.
pub fn splice(accumulated: &[NodeId], cached_from_node: &[NodeId]) -> Option<Vec<NodeId>> {
    let mut route = Vec::with_capacity(accumulated.len() + cached_from_node.len());
    route.extend_from_slice(accumulated);
    route.extend_from_slice(cached_from_node);
    is_loop_free(&route).then_some(route)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscoveryPhase {
    RingZero,
    Flood,
}

/// A route discovery in progress at its source.
#[derive(Debug, Clone)]
pub struct Discovery {
    pub target: NodeId,
    pub started: SimTime,
    pub rreq_id: u32,
    pub phase: DiscoveryPhase,
    /// Floods sent so far.
    pub floods: u32,
    pub timer: Option<EventHandle>,
}

/// A cached reply waiting out its reply-storm deferral.
#[derive(Debug, Clone)]
pub struct PendingReply {
    pub rrep: Rrep,
    pub handle: EventHandle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscardReason {
    Duplicate,
    HopLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RreqOutcome {
    Discard(DiscardReason),
    TargetReply(Rrep),
    /// Send `rrep` after `delay` unless cancelled.
    CachedReply {
        rrep: Rrep,
        delay: SimTime,
        /// Set when the suppression check allowed the reply.
        checked: Option<(u32, u32)>,
    },
    Suppressed { h_r: Option<u32>, h_s: u32 },
    /// Forward this (already extended) request.
    Rebroadcast(Rreq),
}

/// Per-node DSR state.
#[derive(Debug, Clone)]
pub struct RoutingState {
    pub id: NodeId,
    pub cache: RouteCache,
    pub send_buffer: SendBuffer,
    seen: HashSet<(NodeId, u32)>,
    next_rreq_id: u32,
    pub discoveries: BTreeMap<NodeId, Discovery>,
    pub pending_replies: BTreeMap<(NodeId, u32), PendingReply>,
    pub records: SuppressionTable,
    gratuitous_sent: BTreeMap<(NodeId, NodeId, NodeId), SimTime>,
}

impl RoutingState {
    pub fn new(id: NodeId, cfg: &DsrConfig) -> Self {
        RoutingState {
            id,
            cache: RouteCache::new(id),
            send_buffer: SendBuffer::new(cfg.send_buffer_capacity),
            seen: HashSet::new(),
            next_rreq_id: 1,
            discoveries: BTreeMap::new(),
            pending_replies: BTreeMap::new(),
            records: SuppressionTable::new(cfg.record_ttl),
            gratuitous_sent: BTreeMap::new(),
        }
    }

    pub fn has_seen(&self, source: NodeId, id: u32) -> bool {
        self.seen.contains(&(source, id))
    }

    pub fn mark_seen(&mut self, source: NodeId, id: u32) -> bool {
        self.seen.insert((source, id))
    }

    /// Build a fresh request originated by this node.
    pub fn new_rreq(&mut self, target: NodeId, propagating: bool, cfg: &DsrConfig) -> Rreq {
        let id = self.next_rreq_id;
        self.next_rreq_id += 1;
        self.mark_seen(self.id, id);
        Rreq {
            source: self.id,
            target,
            id,
            route: vec![self.id],
            hop_limit: if propagating { cfg.network_diameter_limit } else { 1 },
            propagating,
        }
    }

    /// Loop-free reply this node could send for `rreq` from its cache.
    pub fn cached_reply_route(&self, rreq: &Rreq) -> Option<Vec<NodeId>> {
        let cached = self.cache.lookup(rreq.target)?;
        splice(&rreq.route, &cached.path)
    }

    /// Route request processing at a node that received it off the medium.
    pub fn handle_rreq<R: Rng + ?Sized>(
        &mut self,
        rreq: &Rreq,
        protocol: Protocol,
        cfg: &DsrConfig,
        now: SimTime,
        rng: &mut R,
    ) -> RreqOutcome {
        if !self.mark_seen(rreq.source, rreq.id) || rreq.route.contains(&self.id) {
            return RreqOutcome::Discard(DiscardReason::Duplicate);
        }
        if rreq.target == self.id {
            let mut route = rreq.route.clone();
            route.push(self.id);
            return RreqOutcome::TargetReply(Rrep::new(
                route,
                self.id,
                (rreq.source, rreq.id),
                false,
            ));
        }
        let candidate = self.cached_reply_route(rreq);
        let mut checked = None;
        if protocol == Protocol::DsrS {
            let h_r = candidate.as_ref().map(|r| {
                let suffix_hops = r.len() - rreq.route.len() - 1;
                candidate_reply_length(cfg.hr_mode, rreq.route.len(), suffix_hops)
            });
            match self.records.decide(rreq, h_r, now) {
                SuppressDecision::PassThrough => {}
                SuppressDecision::Reply { h_r, h_s } => checked = Some((h_r, h_s)),
                SuppressDecision::Discard { h_r, h_s } => {
                    return RreqOutcome::Suppressed { h_r, h_s };
                }
            }
        }
        if let Some(route) = candidate {
            let hops = route.len() - 1;
            let rrep = Rrep::new(route, self.id, (rreq.source, rreq.id), false);
            let delay = reply_storm_delay(hops, cfg.delay_unit, rng);
            return RreqOutcome::CachedReply { rrep, delay, checked };
        }
        if rreq.hop_limit <= 1 {
            return RreqOutcome::Discard(DiscardReason::HopLimit);
        }
        let mut fwd = rreq.clone();
        fwd.hop_limit -= 1;
        fwd.route.push(self.id);
        RreqOutcome::Rebroadcast(fwd)
    }

    /// Learn from a route this node appears on at index `idx`: the path
    /// forward to the end and the reversed path back to the start.
    pub fn learn_on_route(&mut self, route: &[NodeId], idx: usize, now: SimTime) {
        debug_assert_eq!(route[idx], self.id);
        if idx + 1 < route.len() {
            self.cache.insert(&route[idx..], now);
        }
        if idx > 0 {
            let back: Vec<NodeId> = route[..=idx].iter().rev().copied().collect();
            self.cache.insert(&back, now);
        }
    }

    /// Learn from an overheard packet carrying `route`. Only a node that
    /// appears on the route can use it; anyone else learns nothing.
    pub fn cache_overheard(&mut self, route: &[NodeId], now: SimTime) {
        if let Some(idx) = route.iter().position(|&n| n == self.id) {
            self.learn_on_route(route, idx, now);
        }
    }

    /// Pending cached replies made moot by overheard data from the same
    /// source to the same target on a strictly shorter route.
    pub fn replies_beaten_by(&self, data: &Data) -> Vec<(NodeId, u32)> {
        self.pending_replies
            .iter()
            .filter(|(_, p)| {
                p.rrep.source() == data.source()
                    && p.rrep.target() == data.destination()
                    && data.route.len() < p.rrep.route.len()
            })
            .map(|(k, _)| *k)
            .collect()
    }

    /// Shortcut visible from overheard data: this node appears on the route
    /// more than one hop past the transmitter, so the hops in between can be
    /// skipped. Returns the shortened route for a gratuitous reply, subject
    /// to the holdoff.
    pub fn gratuitous_shortcut(
        &mut self,
        data: &Data,
        now: SimTime,
        holdoff: SimTime,
    ) -> Option<Vec<NodeId>> {
        let j = data.route.iter().position(|&n| n == self.id)?;
        if j <= data.cursor + 1 {
            return None;
        }
        let tx = data.route[data.cursor];
        let key = (data.source(), data.destination(), tx);
        if let Some(&last) = self.gratuitous_sent.get(&key) {
            if now < last + holdoff {
                return None;
            }
        }
        self.gratuitous_sent.insert(key, now);
        let mut route = data.route[..=data.cursor].to_vec();
        route.extend_from_slice(&data.route[j..]);
        Some(route)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RngStream;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    fn flood(source: u32, target: u32, id: u32, route: &[u32], hop_limit: u32) -> Rreq {
        Rreq {
            source: NodeId(source),
            target: NodeId(target),
            id,
            route: ids(route),
            hop_limit,
            propagating: true,
        }
    }

    fn rng() -> RngStream {
        RngStream::new(1, "jitter")
    }

    #[test]
    fn target_replies_with_accumulated_route() {
        let cfg = DsrConfig::default();
        let mut n = RoutingState::new(NodeId(9), &cfg);
        let out = n.handle_rreq(&flood(0, 9, 1, &[0, 3, 5], 10), Protocol::Dsr, &cfg, SimTime::ZERO, &mut rng());
        match out {
            RreqOutcome::TargetReply(p) => {
                assert_eq!(p.route, ids(&[0, 3, 5, 9]));
                assert_eq!(classify_rrep(&p), RrepClass::Target);
                assert_eq!(p.next_hop(), Some(NodeId(5)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_are_discarded() {
        let cfg = DsrConfig::default();
        let mut n = RoutingState::new(NodeId(4), &cfg);
        let q = flood(0, 9, 1, &[0], 10);
        assert!(matches!(
            n.handle_rreq(&q, Protocol::Dsr, &cfg, SimTime::ZERO, &mut rng()),
            RreqOutcome::Rebroadcast(_)
        ));
        assert_eq!(
            n.handle_rreq(&q, Protocol::Dsr, &cfg, SimTime::ZERO, &mut rng()),
            RreqOutcome::Discard(DiscardReason::Duplicate)
        );
    }

    #[test]
    fn rebroadcast_appends_self_and_spends_a_hop() {
        let cfg = DsrConfig::default();
        let mut n = RoutingState::new(NodeId(4), &cfg);
        match n.handle_rreq(&flood(0, 9, 1, &[0, 2], 5), Protocol::Dsr, &cfg, SimTime::ZERO, &mut rng()) {
            RreqOutcome::Rebroadcast(f) => {
                assert_eq!(f.route, ids(&[0, 2, 4]));
                assert_eq!(f.hop_limit, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ring_zero_request_is_not_propagated() {
        let cfg = DsrConfig::default();
        let mut src = RoutingState::new(NodeId(0), &cfg);
        let rz = src.new_rreq(NodeId(9), false, &cfg);
        assert_eq!(rz.hop_limit, 1);
        let mut n = RoutingState::new(NodeId(4), &cfg);
        assert_eq!(
            n.handle_rreq(&rz, Protocol::Dsr, &cfg, SimTime::ZERO, &mut rng()),
            RreqOutcome::Discard(DiscardReason::HopLimit)
        );
    }

    #[test]
    fn cached_reply_splices_and_defers() {
        let cfg = DsrConfig::default();
        let mut n = RoutingState::new(NodeId(4), &cfg);
        n.cache.insert(&ids(&[4, 7, 9]), SimTime::ZERO);
        match n.handle_rreq(&flood(0, 9, 1, &[0, 2], 10), Protocol::Dsr, &cfg, SimTime::ZERO, &mut rng()) {
            RreqOutcome::CachedReply { rrep, delay, checked } => {
                assert_eq!(rrep.route, ids(&[0, 2, 4, 7, 9]));
                assert_eq!(classify_rrep(&rrep), RrepClass::Cached);
                assert!(delay >= SimTime::from_millis(8) && delay < SimTime::from_millis(10));
                assert_eq!(checked, None);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn loop_forming_splice_falls_through_to_rebroadcast() {
        let cfg = DsrConfig::default();
        let mut n = RoutingState::new(NodeId(4), &cfg);
        n.cache.insert(&ids(&[4, 2, 9]), SimTime::ZERO);
        assert!(matches!(
            n.handle_rreq(&flood(0, 9, 1, &[0, 2], 10), Protocol::Dsr, &cfg, SimTime::ZERO, &mut rng()),
            RreqOutcome::Rebroadcast(_)
        ));
    }

    #[test]
    fn reply_delay_formula() {
        struct Zero;
        impl rand::RngCore for Zero {
            fn next_u32(&mut self) -> u32 {
                0
            }
            fn next_u64(&mut self) -> u64 {
                0
            }
            fn fill_bytes(&mut self, d: &mut [u8]) {
                d.fill(0)
            }
            fn try_fill_bytes(&mut self, d: &mut [u8]) -> Result<(), rand::Error> {
                d.fill(0);
                Ok(())
            }
        }
        let unit = SimTime::from_millis(2);
        assert_eq!(reply_storm_delay(1, unit, &mut Zero), unit);
        let mut r = rng();
        for hops in 1..10 {
            let d = reply_storm_delay(hops, unit, &mut r);
            assert!(d >= unit * hops as u64 && d < unit * (hops as u64 + 1));
        }
    }

    #[test]
    fn overheard_routes_are_learned_only_on_the_route() {
        let cfg = DsrConfig::default();
        // D=3 overhears B=1 sending the reply A-B-X (0-1-9) back to A.
        let mut d = RoutingState::new(NodeId(3), &cfg);
        d.cache_overheard(&ids(&[0, 1, 9]), SimTime::ZERO);
        assert!(d.cache.is_empty());

        let mut on = RoutingState::new(NodeId(5), &cfg);
        on.cache_overheard(&ids(&[0, 2, 5, 8]), SimTime::ZERO);
        assert_eq!(on.cache.lookup(NodeId(8)).unwrap().path, ids(&[5, 8]));
        assert_eq!(on.cache.lookup(NodeId(0)).unwrap().path, ids(&[5, 2, 0]));
    }

    #[test]
    fn shortcut_produces_gratuitous_route_once_per_holdoff() {
        let cfg = DsrConfig::default();
        let mut n = RoutingState::new(NodeId(7), &cfg);
        let data = Data {
            route: ids(&[0, 2, 5, 7, 9]),
            cursor: 1,
            ttl: 60,
            flow: 0,
            seq: 0,
            origin_time: SimTime::ZERO,
            hops_taken: 1,
            salvaged: false,
        };
        let hold = cfg.gratuitous_holdoff;
        assert_eq!(n.gratuitous_shortcut(&data, SimTime::ZERO, hold), Some(ids(&[0, 2, 7, 9])));
        assert_eq!(n.gratuitous_shortcut(&data, SimTime::from_millis(10), hold), None);
        let mut next_hop = RoutingState::new(NodeId(5), &cfg);
        assert_eq!(next_hop.gratuitous_shortcut(&data, SimTime::ZERO, hold), None);
    }

    #[test]
    fn backoff_doubles_then_caps() {
        let cfg = DsrConfig::default();
        let secs: Vec<f64> = (0..7).map(|a| cfg.discovery_backoff(a).as_secs_f64()).collect();
        assert_eq!(secs, vec![0.5, 1.0, 2.0, 4.0, 8.0, 10.0, 10.0]);
    }
}
