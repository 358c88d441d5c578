//! One simulation run: nodes, medium, protocol state and the event loop.
//!
//! A [`World`] is built from a mobility trace and a flow list, optionally
//! primed with cached routes, then driven to the end of the trace with
//! [`World::run`]. Everything a run produces lands in its [`RunResult`].

use std::collections::BTreeSet;

use rand::Rng;

use crate::dsr::{
    is_loop_free, splice, Buffered, Data, Discovery, DiscoveryPhase, DsrConfig, Packet, PendingReply,
    Protocol, RoutingState, Rerr, Rrep, RreqOutcome,
};
use crate::engine::{EventLog, EventQueue, RngStream, SimTime};
use crate::metrics::{path_optimality, shortest_hops, DropReason, MetricsLedger, TxClass};
use crate::mobility::{within, WaypointTrace};
use crate::netlink::{Dest, Enqueue, Frame, InterfaceQueue, LinkConfig, MacState, Medium, Outgoing};
use crate::suppress::OverhearOutcome;
use crate::workload::Flow;
use crate::{fmt_route, NodeId};

/// Which event-log lines a run keeps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogMode {
    Off,
    Full,
    Only(Vec<&'static str>),
}

/// Log kinds needed to audit the suppression invariant after a run.
pub const AUDIT_KINDS: &[&str] = &["RECORD", "RREP-CACHED", "SUPPRESS"];

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub dsr: DsrConfig,
    pub link: LinkConfig,
    pub seed: u64,
    pub log: LogMode,
}

impl RunConfig {
    pub fn new(protocol: Protocol, seed: u64) -> Self {
        RunConfig {
            protocol,
            dsr: DsrConfig::default(),
            link: LinkConfig::default(),
            seed,
            log: LogMode::Off,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub ledger: MetricsLedger,
    /// `sent == delivered + drops` held at the end of the run.
    pub conserved: bool,
    pub log: Vec<String>,
    pub events_fired: u64,
}

impl RunResult {
    pub fn log_text(&self) -> String {
        let mut s = String::new();
        for l in &self.log {
            s.push_str(l);
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone)]
enum Action {
    Originate { flow: usize, k: u64 },
    MacAttempt(NodeId),
    TxEnd { node: NodeId, tx: u64 },
    Receive { node: NodeId, from: NodeId, packet: Packet, overheard: bool },
    DiscoveryTimer { node: NodeId, dst: NodeId, rreq_id: u32 },
    SendReply { node: NodeId, key: (NodeId, u32) },
    ForwardRreq { node: NodeId, rreq: crate::dsr::Rreq },
    BufferExpire(NodeId),
}

struct Node {
    dsr: RoutingState,
    ifq: InterfaceQueue,
    mac: MacState,
    backoff: RngStream,
    jitter: RngStream,
}

pub struct World {
    cfg: RunConfig,
    trace: WaypointTrace,
    flows: Vec<Flow>,
    queue: EventQueue<Action>,
    nodes: Vec<Node>,
    medium: Medium,
    ledger: MetricsLedger,
    log: EventLog,
}

impl World {
    pub fn new(cfg: RunConfig, trace: WaypointTrace, flows: Vec<Flow>) -> Self {
        let n = trace.n_nodes();
        for f in &flows {
            assert!(f.src.index() < n && f.dst.index() < n, "flow endpoint outside the network");
            assert_ne!(f.src, f.dst, "flow to itself");
        }
        let nodes = (0..n as u32)
            .map(NodeId)
            .map(|id| Node {
                dsr: RoutingState::new(id, &cfg.dsr),
                ifq: InterfaceQueue::new(cfg.link.ifq_capacity),
                mac: MacState::default(),
                backoff: RngStream::for_node(cfg.seed, "mac-backoff", id),
                jitter: RngStream::for_node(cfg.seed, "jitter", id),
            })
            .collect();
        let log = match &cfg.log {
            LogMode::Off => EventLog::disabled(),
            LogMode::Full => EventLog::enabled(),
            LogMode::Only(kinds) => EventLog::only(kinds),
        };
        let mut queue = EventQueue::new();
        for (i, f) in flows.iter().enumerate() {
            queue.schedule(f.origination(0), Action::Originate { flow: i, k: 0 });
        }
        World {
            cfg,
            medium: Medium::new(n),
            trace,
            flows,
            queue,
            nodes,
            ledger: MetricsLedger::default(),
            log,
        }
    }

    /// Put a route into `route[0]`'s cache before the run starts.
    pub fn seed_route(&mut self, route: &[NodeId]) {
        let owner = route[0];
        self.nodes[owner.index()].dsr.cache.insert(route, SimTime::ZERO);
    }

    pub fn routing(&self, node: NodeId) -> &RoutingState {
        &self.nodes[node.index()].dsr
    }

    /// Run to the end of the trace, account for packets still in the
    /// network, and return what was measured.
    pub fn run(mut self) -> RunResult {
        let t_end = SimTime::from_secs_f64(self.trace.duration());
        while let Some((t, action)) = self.queue.pop_due(t_end) {
            self.dispatch(t, action);
        }
        self.queue.finish(t_end);
        self.census(t_end);
        RunResult {
            conserved: self.ledger.conserved(),
            ledger: self.ledger,
            events_fired: self.queue.fired(),
            log: self.log.into_lines(),
        }
    }

    fn dispatch(&mut self, now: SimTime, action: Action) {
        match action {
            Action::Originate { flow, k } => self.originate(now, flow, k),
            Action::MacAttempt(node) => self.mac_attempt(now, node),
            Action::TxEnd { node, tx } => self.tx_end(now, node, tx),
            Action::Receive { node, from, packet, overheard } => {
                if overheard {
                    self.overhear(now, node, from, packet)
                } else {
                    self.receive(now, node, from, packet)
                }
            }
            Action::DiscoveryTimer { node, dst, rreq_id } => self.discovery_timer(now, node, dst, rreq_id),
            Action::SendReply { node, key } => self.send_cached_reply(now, node, key),
            Action::ForwardRreq { node, rreq } => {
                self.log.record(now, node, "RREQ", || {
                    format!("{} {} {} {}", rreq.source, rreq.id, rreq.hop_limit, fmt_route(&rreq.route))
                });
                self.enqueue(now, node, Outgoing { packet: Packet::Rreq(rreq), dest: Dest::Broadcast });
            }
            Action::BufferExpire(node) => {
                let timeout = self.cfg.dsr.send_buffer_timeout;
                let expired = self.nodes[node.index()].dsr.send_buffer.expire(now, timeout);
                for b in expired {
                    self.drop_data(now, node, &b.data, DropReason::Timeout);
                }
            }
        }
    }

    // ---- traffic and route discovery at the source ----

    fn originate(&mut self, now: SimTime, flow: usize, k: u64) {
        let f = &self.flows[flow];
        let (src, dst) = (f.src, f.dst);
        if k + 1 < f.packet_count() {
            let next = f.origination(k + 1);
            self.queue.schedule(next, Action::Originate { flow, k: k + 1 });
        }
        let data = Data {
            route: Vec::new(),
            cursor: 0,
            ttl: self.cfg.dsr.data_ttl,
            flow: flow as u32,
            seq: k as u32,
            origin_time: now,
            hops_taken: 0,
            salvaged: false,
        };
        self.ledger.sent += 1;
        self.log.record(now, src, "ORIGINATE", || format!("{} {} {}", flow, k, dst));
        if self.nodes[src.index()].dsr.cache.lookup(dst).is_some() {
            self.ledger.cache_hits += 1;
        } else {
            self.ledger.cache_misses += 1;
        }
        self.dispatch_from_source(now, src, data, dst);
    }

    /// Send over a cached route if there is one, otherwise buffer and make
    /// sure a discovery is running.
    fn dispatch_from_source(&mut self, now: SimTime, src: NodeId, mut data: Data, dst: NodeId) {
        let node = &mut self.nodes[src.index()];
        if let Some(r) = node.dsr.cache.lookup(dst) {
            data.route = r.path.clone();
            data.cursor = 0;
            if node.dsr.discoveries.contains_key(&dst) {
                self.resolve_discovery(now, src, dst, None);
            }
            self.send_data(now, src, data);
            return;
        }
        let entry = Buffered { data, destination: dst, enqueued: now };
        match node.dsr.send_buffer.push(entry) {
            Ok(()) => {
                let at = now + self.cfg.dsr.send_buffer_timeout;
                self.queue.schedule(at, Action::BufferExpire(src));
            }
            Err(b) => {
                self.drop_data(now, src, &b.data, DropReason::RtrQueueFull);
                return;
            }
        }
        if !self.nodes[src.index()].dsr.discoveries.contains_key(&dst) {
            self.start_discovery(now, src, dst);
        }
    }

    fn start_discovery(&mut self, now: SimTime, src: NodeId, dst: NodeId) {
        if self.cfg.dsr.ring_zero {
            let cfg = &self.cfg.dsr;
            let dsr = &mut self.nodes[src.index()].dsr;
            let rreq = dsr.new_rreq(dst, false, cfg);
            let id = rreq.id;
            let timer = self.queue.schedule_in(
                cfg.ring_zero_timeout,
                Action::DiscoveryTimer { node: src, dst, rreq_id: id },
            );
            dsr.discoveries.insert(
                dst,
                Discovery {
                    target: dst,
                    started: now,
                    rreq_id: id,
                    phase: DiscoveryPhase::RingZero,
                    floods: 0,
                    timer: Some(timer),
                },
            );
            self.broadcast_rreq(now, src, rreq);
        } else {
            self.nodes[src.index()].dsr.discoveries.insert(
                dst,
                Discovery {
                    target: dst,
                    started: now,
                    rreq_id: 0,
                    phase: DiscoveryPhase::Flood,
                    floods: 0,
                    timer: None,
                },
            );
            self.flood(now, src, dst);
        }
    }

    fn flood(&mut self, now: SimTime, src: NodeId, dst: NodeId) {
        let cfg = &self.cfg.dsr;
        let dsr = &mut self.nodes[src.index()].dsr;
        let rreq = dsr.new_rreq(dst, true, cfg);
        let d = dsr.discoveries.get_mut(&dst).expect("flood without discovery");
        d.rreq_id = rreq.id;
        d.phase = DiscoveryPhase::Flood;
        d.floods += 1;
        let wait = cfg.discovery_backoff(d.floods - 1);
        d.timer = Some(self.queue.schedule_in(
            wait,
            Action::DiscoveryTimer { node: src, dst, rreq_id: rreq.id },
        ));
        self.broadcast_rreq(now, src, rreq);
    }

    fn broadcast_rreq(&mut self, now: SimTime, node: NodeId, rreq: crate::dsr::Rreq) {
        self.log.record(now, node, "RREQ", || {
            format!("{} {} {} {}", rreq.source, rreq.id, rreq.hop_limit, fmt_route(&rreq.route))
        });
        self.enqueue(now, node, Outgoing { packet: Packet::Rreq(rreq), dest: Dest::Broadcast });
    }

    fn discovery_timer(&mut self, now: SimTime, node: NodeId, dst: NodeId, rreq_id: u32) {
        let dsr = &mut self.nodes[node.index()].dsr;
        let Some(d) = dsr.discoveries.get(&dst) else { return };
        if d.rreq_id != rreq_id {
            return;
        }
        if !dsr.send_buffer.has_packets_for(dst) {
            dsr.discoveries.remove(&dst);
            return;
        }
        match d.phase {
            DiscoveryPhase::RingZero => self.flood(now, node, dst),
            DiscoveryPhase::Flood if d.floods > self.cfg.dsr.max_discovery_retries => {
                dsr.discoveries.remove(&dst);
                for b in dsr.send_buffer.take_for(dst) {
                    self.drop_data(now, node, &b.data, DropReason::NoRoute);
                }
            }
            DiscoveryPhase::Flood => self.flood(now, node, dst),
        }
    }

    /// Close a pending discovery and send everything buffered for `dst`.
    /// `reply_hops` is set when a route reply answered it.
    fn resolve_discovery(&mut self, now: SimTime, src: NodeId, dst: NodeId, reply_hops: Option<usize>) {
        let dsr = &mut self.nodes[src.index()].dsr;
        if let Some(d) = dsr.discoveries.remove(&dst) {
            if let Some(t) = d.timer {
                self.queue.cancel(t);
            }
            if let Some(h) = reply_hops {
                self.ledger.discovery_latency.push((now - d.started).as_secs_f64());
                self.ledger.first_rrep_hops.push(h as u32);
            }
        }
        let waiting = self.nodes[src.index()].dsr.send_buffer.take_for(dst);
        for b in waiting {
            self.dispatch_from_source(now, src, b.data, b.destination);
        }
    }

    // ---- packet handling ----

    fn receive(&mut self, now: SimTime, node: NodeId, from: NodeId, packet: Packet) {
        self.log.record(now, node, "RX", || format!("{from} {packet}"));
        match packet {
            Packet::Rreq(rreq) => self.handle_rreq(now, node, rreq),
            Packet::Rrep(mut rrep) => {
                rrep.at -= 1;
                debug_assert_eq!(rrep.route[rrep.at], node);
                self.nodes[node.index()].dsr.learn_on_route(&rrep.route, rrep.at, now);
                if rrep.at == 0 {
                    self.rrep_at_source(now, node, &rrep);
                } else {
                    self.send_unicast(now, node, Packet::Rrep(rrep));
                }
            }
            Packet::Rerr(mut rerr) => {
                rerr.at += 1;
                let (a, b) = rerr.broken;
                self.nodes[node.index()].dsr.cache.remove_link(a, b);
                if rerr.at + 1 < rerr.path.len() {
                    self.send_unicast(now, node, Packet::Rerr(rerr));
                }
            }
            Packet::Data(mut data) => {
                data.cursor += 1;
                data.hops_taken += 1;
                if data.route.get(data.cursor) != Some(&node) {
                    self.drop_data(now, node, &data, DropReason::RoutingLoop);
                    return;
                }
                self.nodes[node.index()].dsr.learn_on_route(&data.route, data.cursor, now);
                if data.cursor + 1 == data.route.len() {
                    self.deliver(now, node, &data);
                    return;
                }
                if data.ttl <= 1 {
                    self.drop_data(now, node, &data, DropReason::TtlExpired);
                    return;
                }
                data.ttl -= 1;
                self.send_data(now, node, data);
            }
        }
    }

    fn handle_rreq(&mut self, now: SimTime, node: NodeId, rreq: crate::dsr::Rreq) {
        let n = &mut self.nodes[node.index()];
        let outcome = n.dsr.handle_rreq(&rreq, self.cfg.protocol, &self.cfg.dsr, now, &mut n.jitter);
        match outcome {
            RreqOutcome::Discard(_) => {}
            RreqOutcome::TargetReply(rrep) => {
                n.dsr.learn_on_route(&rrep.route, rrep.at, now);
                self.log.record(now, node, "RREP-TARGET", || describe_reply(&rrep));
                self.send_unicast(now, node, Packet::Rrep(rrep));
            }
            RreqOutcome::CachedReply { rrep, delay, .. } => {
                let key = (rreq.source, rreq.id);
                let handle = self.queue.schedule_in(delay, Action::SendReply { node, key });
                n.dsr.pending_replies.insert(key, PendingReply { rrep, handle });
            }
            RreqOutcome::Suppressed { h_r, h_s } => {
                self.ledger.suppressions += 1;
                self.log.record(now, node, "SUPPRESS", || {
                    let h_r = h_r.map_or_else(|| "-".to_string(), |h| h.to_string());
                    format!("{} {} {} {}", rreq.source, rreq.id, h_r, h_s)
                });
            }
            RreqOutcome::Rebroadcast(fwd) => {
                let max = self.cfg.dsr.rreq_jitter.as_nanos();
                let wait = if max == 0 { 0 } else { n.jitter.gen_range(0..max) };
                self.queue
                    .schedule_in(SimTime::from_nanos(wait), Action::ForwardRreq { node, rreq: fwd });
            }
        }
    }

    fn send_cached_reply(&mut self, now: SimTime, node: NodeId, key: (NodeId, u32)) {
        let Some(p) = self.nodes[node.index()].dsr.pending_replies.remove(&key) else {
            return;
        };
        let rrep = p.rrep;
        self.log.record(now, node, "RREP-CACHED", || describe_reply(&rrep));
        self.send_unicast(now, node, Packet::Rrep(rrep));
    }

    fn rrep_at_source(&mut self, now: SimTime, node: NodeId, rrep: &Rrep) {
        let pending: Vec<NodeId> = {
            let dsr = &self.nodes[node.index()].dsr;
            dsr.discoveries
                .keys()
                .copied()
                .filter(|d| dsr.cache.lookup(*d).is_some())
                .collect()
        };
        let target = rrep.target();
        let hops = (!rrep.gratuitous).then(|| rrep.return_hops());
        for dst in pending {
            self.resolve_discovery(now, node, dst, hops);
        }
        if self.nodes[node.index()].dsr.send_buffer.has_packets_for(target) {
            self.resolve_discovery(now, node, target, None);
        }
    }

    fn deliver(&mut self, now: SimTime, node: NodeId, data: &Data) {
        self.ledger.delivered += 1;
        self.ledger.e2e_delay.push((now - data.origin_time).as_secs_f64());
        let positions = self.trace.positions_at(data.origin_time.as_secs_f64());
        let optimal = shortest_hops(&positions, self.cfg.link.radio_range, data.source(), node);
        if optimal.is_none() {
            self.ledger.path_anomalies += 1;
        }
        let extra = path_optimality(data.hops_taken, optimal);
        self.ledger.record_extra_hops(extra);
        self.log.record(now, node, "DELIVER", || {
            format!("{} {} {} {}", data.flow, data.seq, data.hops_taken, extra)
        });
    }

    fn overhear(&mut self, now: SimTime, node: NodeId, from: NodeId, packet: Packet) {
        self.log.record(now, node, "OVERHEAR", || format!("{from} {packet}"));
        match &packet {
            Packet::Rrep(rrep) => {
                let protocol = self.cfg.protocol;
                let dsr = &mut self.nodes[node.index()].dsr;
                if protocol == Protocol::DsrS && !rrep.gratuitous {
                    let seen = dsr.has_seen(rrep.for_rreq.0, rrep.for_rreq.1);
                    match dsr.records.on_overhear_rrep(rrep, seen, now) {
                        Ok(OverhearOutcome::Created(rec) | OverhearOutcome::Updated(rec)) => {
                            self.ledger.records += 1;
                            self.log.record(now, node, "RECORD", || {
                                format!("{} {} {}", rec.rreq_source, rec.rreq_id, rec.best_overheard_len)
                            });
                        }
                        Ok(_) => {}
                        Err(e) => {
                            self.log.record(now, node, "MALFORMED", || e.to_string());
                            return;
                        }
                    }
                }
                self.nodes[node.index()].dsr.cache_overheard(&rrep.route, now);
            }
            Packet::Data(data) => {
                let holdoff = self.cfg.dsr.gratuitous_holdoff;
                let dsr = &mut self.nodes[node.index()].dsr;
                dsr.cache_overheard(&data.route, now);
                for key in dsr.replies_beaten_by(data) {
                    if let Some(p) = dsr.pending_replies.remove(&key) {
                        self.queue.cancel(p.handle);
                        self.log.record(now, node, "CANCEL", || format!("{} {}", key.0, key.1));
                    }
                }
                if let Some(route) = dsr.gratuitous_shortcut(data, now, holdoff) {
                    let rrep = Rrep::new(route, node, (data.source(), 0), true);
                    self.log.record(now, node, "RREP-GRAT", || describe_reply(&rrep));
                    self.send_unicast(now, node, Packet::Rrep(rrep));
                }
            }
            Packet::Rreq(_) | Packet::Rerr(_) => {}
        }
    }

    // ---- link layer ----

    fn send_data(&mut self, now: SimTime, node: NodeId, data: Data) {
        self.send_unicast(now, node, Packet::Data(data));
    }

    fn send_unicast(&mut self, now: SimTime, node: NodeId, packet: Packet) {
        let next = match &packet {
            Packet::Rrep(p) => p.next_hop(),
            Packet::Rerr(e) => e.next_hop(),
            Packet::Data(d) => d.next_hop(),
            Packet::Rreq(_) => None,
        }
        .expect("unicast packet without a next hop");
        self.enqueue(now, node, Outgoing { packet, dest: Dest::Unicast(next) });
    }

    fn enqueue(&mut self, now: SimTime, node: NodeId, out: Outgoing) {
        let n = &mut self.nodes[node.index()];
        match n.ifq.enqueue(out) {
            Enqueue::Accepted => {}
            Enqueue::Rejected(o) | Enqueue::Displaced(o) => self.lose(now, node, o.packet, DropReason::IfqFull),
        }
        let n = &mut self.nodes[node.index()];
        if !n.mac.engaged {
            n.mac.engaged = true;
            self.queue.schedule(now, Action::MacAttempt(node));
        }
    }

    fn backoff(&mut self, node: NodeId) -> SimTime {
        let max = self.cfg.link.backoff_max.as_nanos();
        SimTime::from_nanos(self.nodes[node.index()].backoff.gen_range(0..=max))
    }

    fn mac_attempt(&mut self, now: SimTime, node: NodeId) {
        let n = &mut self.nodes[node.index()];
        if n.mac.current.is_none() {
            match n.ifq.dequeue() {
                Some(o) => {
                    n.mac.current = Some(o);
                    n.mac.attempts = 0;
                }
                None => {
                    n.mac.engaged = false;
                    return;
                }
            }
        }
        if let Some(busy_end) = self.medium.busy_until(node, now) {
            let at = busy_end + self.backoff(node);
            self.queue.schedule(at, Action::MacAttempt(node));
            return;
        }
        let out = self.nodes[node.index()].mac.current.clone().expect("frame to send");
        let size = out.packet.size_bytes(self.payload_bytes(&out.packet));
        let tx_end = now + self.cfg.link.airtime(size);
        let positions = self.trace.positions_at(now.as_secs_f64());
        let range = self.cfg.link.radio_range;
        let receivers: Vec<NodeId> = (0..positions.len())
            .filter(|&v| v != node.index() && within(positions[node.index()], positions[v], range))
            .map(|v| NodeId(v as u32))
            .collect();
        let first = self.nodes[node.index()].mac.attempts == 0;
        self.nodes[node.index()].mac.attempts += 1;
        if first {
            self.ledger.count_tx(TxClass::of(&out.packet));
        }
        let dest = out.dest;
        let frame = Frame { src: node, dst: dest, payload: out.packet, size, tx_start: now, tx_end };
        let (id, collisions) = self.medium.begin(frame, receivers);
        if self.log.is_enabled() {
            let attempt = self.nodes[node.index()].mac.attempts;
            let frame = &self.medium.active().last().expect("just begun").frame;
            let detail = format!("#{id} {dest} {attempt} {}", frame.payload);
            self.log.record(now, node, "TX", || detail);
            for (r, other) in collisions {
                self.log.record(now, r, "COLLISION", || format!("#{id} #{other}"));
            }
        }
        self.queue.schedule(tx_end, Action::TxEnd { node, tx: id });
    }

    fn payload_bytes(&self, packet: &Packet) -> u32 {
        match packet {
            Packet::Data(d) => self.flows[d.flow as usize].payload,
            _ => 0,
        }
    }

    fn tx_end(&mut self, now: SimTime, node: NodeId, id: u64) {
        let tx = self.medium.finish(id);
        let arrive = now + self.cfg.link.propagation_delay;
        let mut delivered = true;
        if let Dest::Unicast(d) = tx.frame.dst {
            delivered = tx.hears(d) && !tx.corrupted_at(d);
        }
        for r in tx.clean_receivers() {
            let overheard = match tx.frame.dst {
                Dest::Broadcast => false,
                Dest::Unicast(d) => r != d,
            };
            if !overheard && !delivered {
                continue;
            }
            self.queue.schedule(
                arrive,
                Action::Receive { node: r, from: node, packet: tx.frame.payload.clone(), overheard },
            );
        }
        let max_attempts = self.cfg.link.max_mac_retries;
        let n = &mut self.nodes[node.index()];
        if delivered {
            n.mac.current = None;
            n.mac.attempts = 0;
            self.queue.schedule(now, Action::MacAttempt(node));
        } else if n.mac.attempts >= max_attempts {
            let failed = n.mac.current.take().expect("frame in flight");
            n.mac.attempts = 0;
            let Dest::Unicast(next) = failed.dest else { unreachable!("broadcasts always succeed") };
            self.link_broken(now, node, next, failed);
            self.queue.schedule(now, Action::MacAttempt(node));
        } else {
            let at = now + self.cfg.link.ack_window + self.backoff(node);
            self.queue.schedule(at, Action::MacAttempt(node));
        }
    }

    /// The MAC gave up on `node -> next`. Purge the link, report it to the
    /// sources of affected data, and salvage what can be salvaged.
    fn link_broken(&mut self, now: SimTime, node: NodeId, next: NodeId, failed: Outgoing) {
        self.log.record(now, node, "LINKBREAK", || format!("{next}"));
        let n = &mut self.nodes[node.index()];
        n.dsr.cache.remove_link(node, next);
        let mut affected = vec![failed];
        affected.extend(n.ifq.take_for(next));
        let mut notified = BTreeSet::new();
        for out in affected {
            match out.packet {
                Packet::Data(data) => {
                    let source = data.source();
                    if source != node && notified.insert(source) {
                        let mut path: Vec<NodeId> = data.route[..=data.cursor].to_vec();
                        path.reverse();
                        let rerr = Rerr { broken: (node, next), destination: source, path, at: 0 };
                        self.log.record(now, node, "RERR", || format!("{}>{} {}", node, next, source));
                        self.send_unicast(now, node, Packet::Rerr(rerr));
                    }
                    self.salvage(now, node, data);
                }
                other => self.lose(now, node, other, DropReason::MacCallback),
            }
        }
    }

    fn salvage(&mut self, now: SimTime, node: NodeId, mut data: Data) {
        let dst = data.destination();
        if data.source() == node {
            data.route.clear();
            data.cursor = 0;
            self.dispatch_from_source(now, node, data, dst);
            return;
        }
        if data.salvaged {
            self.drop_data(now, node, &data, DropReason::MacCallback);
            return;
        }
        let alt = self.nodes[node.index()].dsr.cache.lookup(dst).map(|r| r.path.clone());
        let rerouted = alt.and_then(|alt| splice(&data.route[..data.cursor], &alt));
        match rerouted {
            Some(route) => {
                debug_assert!(is_loop_free(&route));
                self.log.record(now, node, "SALVAGE", || fmt_route(&route));
                data.route = route;
                data.salvaged = true;
                self.send_data(now, node, data);
            }
            None => self.drop_data(now, node, &data, DropReason::NoRoute),
        }
    }

    /// A packet leaves the network without being delivered.
    fn lose(&mut self, now: SimTime, node: NodeId, packet: Packet, reason: DropReason) {
        match packet {
            Packet::Data(d) => self.drop_data(now, node, &d, reason),
            other => {
                self.ledger.control_drops += 1;
                self.log.record(now, node, "DROP", || format!("{} {}", reason.tag(), other));
            }
        }
    }

    fn drop_data(&mut self, now: SimTime, node: NodeId, data: &Data, reason: DropReason) {
        self.ledger.drop_packet(reason);
        self.log.record(now, node, "DROP", || {
            format!("{} DATA flow={} seq={}", reason.tag(), data.flow, data.seq)
        });
    }

    /// Data still buffered, queued, on the air or in propagation at the end.
    fn census(&mut self, t_end: SimTime) {
        let mut residue = 0u64;
        for n in &self.nodes {
            residue += n.dsr.send_buffer.len() as u64;
            residue += n.ifq.iter().filter(|o| !o.packet.is_control()).count() as u64;
            if matches!(&n.mac.current, Some(o) if !o.packet.is_control()) {
                residue += 1;
            }
        }
        residue += self
            .queue
            .residue()
            .filter(|a| {
                matches!(a, Action::Receive { packet: Packet::Data(_), overheard: false, .. })
            })
            .count() as u64;
        for _ in 0..residue {
            self.ledger.drop_packet(DropReason::SimulationEnd);
        }
        if residue > 0 {
            self.log.record(t_end, NodeId(0), "END", || format!("{residue} in flight"));
        }
    }
}

/// `S ID hops route` for a reply being initiated.
fn describe_reply(rrep: &Rrep) -> String {
    format!("{} {} {} {}", rrep.source(), rrep.for_rreq.1, rrep.hops(), fmt_route(&rrep.route))
}
