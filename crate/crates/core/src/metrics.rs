//! Per-run ledgers and cross-run summaries.

use std::collections::VecDeque;
use std::fmt;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dsr::{classify_rrep, Packet, RrepClass};
use crate::mobility::{within, Point};
use crate::NodeId;

/// Routing-layer transmission classes. Forwarded replies keep the class of
/// the node that created them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TxClass {
    Rreq,
    CachedRrep,
    TargetRrep,
    GratuitousRrep,
    Rerr,
    Data,
}

impl TxClass {
    pub const ALL: [TxClass; 6] = [
        TxClass::Rreq,
        TxClass::CachedRrep,
        TxClass::TargetRrep,
        TxClass::GratuitousRrep,
        TxClass::Rerr,
        TxClass::Data,
    ];

    pub fn of(packet: &Packet) -> TxClass {
        match packet {
            Packet::Rreq(_) => TxClass::Rreq,
            Packet::Rrep(p) => match classify_rrep(p) {
                RrepClass::Cached => TxClass::CachedRrep,
                RrepClass::Target => TxClass::TargetRrep,
                RrepClass::Gratuitous => TxClass::GratuitousRrep,
            },
            Packet::Rerr(_) => TxClass::Rerr,
            Packet::Data(_) => TxClass::Data,
        }
    }

    /// Short label used in the composition output.
    pub fn short(self) -> &'static str {
        match self {
            TxClass::Rreq => "RREQ",
            TxClass::CachedRrep => "CREP",
            TxClass::TargetRrep => "TREP",
            TxClass::GratuitousRrep => "GREP",
            TxClass::Rerr => "RERR",
            TxClass::Data => "DATA",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Reasons a data packet is dropped, in the order of the drop summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    NoRoute,
    TtlExpired,
    RtrQueueFull,
    Timeout,
    RoutingLoop,
    IfqFull,
    /// Address resolution is not modelled; always zero.
    ArpFull,
    MacCallback,
    SimulationEnd,
}

impl DropReason {
    pub const ALL: [DropReason; 9] = [
        DropReason::NoRoute,
        DropReason::TtlExpired,
        DropReason::RtrQueueFull,
        DropReason::Timeout,
        DropReason::RoutingLoop,
        DropReason::IfqFull,
        DropReason::ArpFull,
        DropReason::MacCallback,
        DropReason::SimulationEnd,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DropReason::NoRoute => "No Route",
            DropReason::TtlExpired => "TTL Expired",
            DropReason::RtrQueueFull => "RTR Queue Full",
            DropReason::Timeout => "Timeout",
            DropReason::RoutingLoop => "Routing Loop",
            DropReason::IfqFull => "IFQ Full",
            DropReason::ArpFull => "ARP Full",
            DropReason::MacCallback => "MAC Callback",
            DropReason::SimulationEnd => "Simulation End",
        }
    }

    /// Compact form for event-log lines.
    pub fn tag(self) -> &'static str {
        match self {
            DropReason::NoRoute => "NoRoute",
            DropReason::TtlExpired => "TtlExpired",
            DropReason::RtrQueueFull => "RtrQueueFull",
            DropReason::Timeout => "Timeout",
            DropReason::RoutingLoop => "RoutingLoop",
            DropReason::IfqFull => "IfqFull",
            DropReason::ArpFull => "ArpFull",
            DropReason::MacCallback => "MacCallback",
            DropReason::SimulationEnd => "SimulationEnd",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Extra-hop buckets `0, 1, 2, 3, >3`.
pub const PATH_BUCKETS: usize = 5;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLedger {
    tx: [u64; 6],
    pub sent: u64,
    pub delivered: u64,
    drops: [u64; 9],
    /// Control packets lost at the MAC or interface queue.
    pub control_drops: u64,
    pub discovery_latency: Vec<f64>,
    pub e2e_delay: Vec<f64>,
    pub first_rrep_hops: Vec<u32>,
    pub path_extra: [u64; PATH_BUCKETS],
    /// Deliveries whose optimal length could not be established.
    pub path_anomalies: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub suppressions: u64,
    pub records: u64,
}

impl MetricsLedger {
    pub fn count_tx(&mut self, class: TxClass) {
        self.tx[class.index()] += 1;
    }

    pub fn tx(&self, class: TxClass) -> u64 {
        self.tx[class.index()]
    }

    pub fn drop_packet(&mut self, reason: DropReason) {
        self.drops[reason.index()] += 1;
    }

    pub fn drops(&self, reason: DropReason) -> u64 {
        self.drops[reason.index()]
    }

    pub fn total_drops(&self) -> u64 {
        self.drops.iter().sum()
    }

    /// `sent == delivered + all drops`.
    pub fn conserved(&self) -> bool {
        self.sent == self.delivered + self.total_drops()
    }

    pub fn record_extra_hops(&mut self, extra: u32) {
        let b = (extra as usize).min(PATH_BUCKETS - 1);
        self.path_extra[b] += 1;
    }

    /// Requests plus every reply initiated for a request.
    pub fn discovery_overhead(&self) -> u64 {
        self.tx(TxClass::Rreq) + self.tx(TxClass::CachedRrep) + self.tx(TxClass::TargetRrep)
    }

    /// Discovery plus maintenance (route errors and gratuitous replies).
    pub fn total_overhead(&self) -> u64 {
        self.discovery_overhead() + self.tx(TxClass::Rerr) + self.tx(TxClass::GratuitousRrep)
    }

    /// Percentage of sent packets delivered.
    pub fn delivery_ratio(&self) -> Option<f64> {
        (self.sent > 0).then(|| self.delivered as f64 / self.sent as f64 * 100.0)
    }

    pub fn cache_hit_rate(&self) -> Option<f64> {
        let n = self.cache_hits + self.cache_misses;
        (n > 0).then(|| self.cache_hits as f64 / n as f64)
    }

    pub fn path_fraction(&self, bucket: usize) -> Option<f64> {
        let n: u64 = self.path_extra.iter().sum();
        (n > 0).then(|| self.path_extra[bucket] as f64 / n as f64)
    }
}

/// Overhead per delivered data packet: `(discovery, total)`. `None` when
/// nothing was delivered.
pub fn normalized_overhead(ledger: &MetricsLedger) -> Option<(f64, f64)> {
    (ledger.delivered > 0).then(|| {
        let d = ledger.delivered as f64;
        (ledger.discovery_overhead() as f64 / d, ledger.total_overhead() as f64 / d)
    })
}

/// Fewest hops between `src` and `dst` in the unit-disk graph over
/// `positions`, by breadth-first search.
pub fn shortest_hops(positions: &[Point], radio_range: f64, src: NodeId, dst: NodeId) -> Option<u32> {
    let n = positions.len();
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    dist[src.index()] = 0;
    queue.push_back(src.index());
    while let Some(u) = queue.pop_front() {
        if u == dst.index() {
            return Some(dist[u]);
        }
        for v in 0..n {
            if dist[v] == u32::MAX && v != u && within(positions[u], positions[v], radio_range) {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    None
}

/// Extra hops taken versus the optimum, clamped at zero. `None` optimum
/// (no path in the snapshot) counts as zero.
pub fn path_optimality(actual_hops: u32, optimal: Option<u32>) -> u32 {
    optimal.map_or(0, |o| actual_hops.saturating_sub(o))
}

/// Mean and 95% confidence half-width over runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStat {
    pub mean: f64,
    /// `None` with fewer than two runs.
    pub half_width_95: Option<f64>,
    pub n_runs: usize,
}

/// Student-t interval: `t(0.975, n-1) * s / sqrt(n)`.
pub fn summarize(samples: &[f64]) -> Option<SummaryStat> {
    let n = samples.len();
    if n == 0 {
        return None;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let half_width_95 = (n >= 2).then(|| {
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("valid degrees of freedom")
            .inverse_cdf(0.975);
        t * var.sqrt() / (n as f64).sqrt()
    });
    Some(SummaryStat {
        mean,
        half_width_95,
        n_runs: n,
    })
}

fn mean_of(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Named per-run scalar extracted from a ledger.
pub struct MetricDef {
    pub name: &'static str,
    pub extract: fn(&MetricsLedger) -> Option<f64>,
}

macro_rules! metric {
    ($name:expr, $f:expr) => {
        MetricDef {
            name: $name,
            extract: $f,
        }
    };
}

/// Every metric emitted per (protocol, pause time), in output order.
pub const METRICS: &[MetricDef] = &[
    metric!("rreq", |l| Some(l.tx(TxClass::Rreq) as f64)),
    metric!("cached_rrep", |l| Some(l.tx(TxClass::CachedRrep) as f64)),
    metric!("target_rrep", |l| Some(l.tx(TxClass::TargetRrep) as f64)),
    metric!("gratuitous_rrep", |l| Some(l.tx(TxClass::GratuitousRrep) as f64)),
    metric!("rerr", |l| Some(l.tx(TxClass::Rerr) as f64)),
    metric!("data_tx", |l| Some(l.tx(TxClass::Data) as f64)),
    metric!("discovery_overhead", |l| Some(l.discovery_overhead() as f64)),
    metric!("total_overhead", |l| Some(l.total_overhead() as f64)),
    metric!("norm_discovery_overhead", |l| normalized_overhead(l).map(|x| x.0)),
    metric!("norm_total_overhead", |l| normalized_overhead(l).map(|x| x.1)),
    metric!("discovery_latency_ms", |l| mean_of(l.discovery_latency.iter().map(|s| s * 1e3))),
    metric!("e2e_delay_ms", |l| mean_of(l.e2e_delay.iter().map(|s| s * 1e3))),
    metric!("first_rrep_hops", |l| mean_of(l.first_rrep_hops.iter().map(|&h| f64::from(h)))),
    metric!("delivery_ratio", |l| l.delivery_ratio()),
    metric!("sent", |l| Some(l.sent as f64)),
    metric!("delivered", |l| Some(l.delivered as f64)),
    metric!("dropped", |l| Some(l.total_drops() as f64)),
    metric!("cache_hit_rate", |l| l.cache_hit_rate()),
    metric!("path_extra_0", |l| l.path_fraction(0)),
    metric!("path_extra_1", |l| l.path_fraction(1)),
    metric!("path_extra_2", |l| l.path_fraction(2)),
    metric!("path_extra_3", |l| l.path_fraction(3)),
    metric!("path_extra_gt3", |l| l.path_fraction(4)),
    metric!("suppressions", |l| Some(l.suppressions as f64)),
];

pub fn metric(name: &str) -> Option<&'static MetricDef> {
    METRICS.iter().find(|m| m.name == name)
}

/// Summary of one named metric over several runs; runs where the metric is
/// undefined are skipped.
pub fn summarize_metric(runs: &[&MetricsLedger], name: &str) -> Option<SummaryStat> {
    let def = metric(name)?;
    let samples: Vec<f64> = runs.iter().filter_map(|l| (def.extract)(l)).collect();
    summarize(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsr::Rrep;

    #[test]
    fn classification_follows_the_replier() {
        let ids = |v: &[u32]| v.iter().map(|&i| NodeId(i)).collect::<Vec<_>>();
        let target = Rrep::new(ids(&[0, 1, 2]), NodeId(2), (NodeId(0), 1), false);
        let cached = Rrep::new(ids(&[0, 1, 2]), NodeId(1), (NodeId(0), 1), false);
        let grat = Rrep::new(ids(&[0, 1, 2]), NodeId(1), (NodeId(0), 0), true);
        assert_eq!(TxClass::of(&Packet::Rrep(target)), TxClass::TargetRrep);
        assert_eq!(TxClass::of(&Packet::Rrep(cached)), TxClass::CachedRrep);
        assert_eq!(TxClass::of(&Packet::Rrep(grat)), TxClass::GratuitousRrep);
    }

    #[test]
    fn overhead_accounting() {
        let mut l = MetricsLedger::default();
        assert_eq!(normalized_overhead(&l), None);
        l.delivered = 10;
        assert_eq!(normalized_overhead(&l), Some((0.0, 0.0)));
        for (c, k) in [(TxClass::Rreq, 5), (TxClass::CachedRrep, 7), (TxClass::TargetRrep, 2),
                       (TxClass::Rerr, 3), (TxClass::GratuitousRrep, 1), (TxClass::Data, 40)] {
            for _ in 0..k {
                l.count_tx(c);
            }
        }
        assert_eq!(l.discovery_overhead(), 14);
        assert_eq!(l.total_overhead(), 18);
        assert_eq!(normalized_overhead(&l), Some((1.4, 1.8)));
    }

    #[test]
    fn conservation_identity() {
        let mut l = MetricsLedger { sent: 5, delivered: 3, ..Default::default() };
        assert!(!l.conserved());
        l.drop_packet(DropReason::NoRoute);
        l.drop_packet(DropReason::SimulationEnd);
        assert!(l.conserved());
        assert_eq!(l.drops(DropReason::ArpFull), 0);
    }

    #[test]
    fn bfs_on_a_line() {
        let pts: Vec<Point> = (0..5).map(|i| Point::new(i as f64 * 200.0, 0.0)).collect();
        assert_eq!(shortest_hops(&pts, 250.0, NodeId(0), NodeId(4)), Some(4));
        assert_eq!(shortest_hops(&pts, 450.0, NodeId(0), NodeId(4)), Some(2));
        assert_eq!(shortest_hops(&pts, 100.0, NodeId(0), NodeId(4)), None);
        assert_eq!(path_optimality(3, Some(2)), 1);
        assert_eq!(path_optimality(1, Some(1)), 0);
        assert_eq!(path_optimality(1, Some(2)), 0);
        assert_eq!(path_optimality(4, None), 0);
    }

    #[test]
    fn buckets_saturate() {
        let mut l = MetricsLedger::default();
        for e in [0, 0, 1, 2, 3, 4, 9] {
            l.record_extra_hops(e);
        }
        assert_eq!(l.path_extra, [2, 1, 1, 1, 2]);
    }

    #[test]
    fn summary_statistics() {
        let s = summarize(&[4.0, 4.0, 4.0]).unwrap();
        assert_eq!(s.mean, 4.0);
        assert_eq!(s.half_width_95, Some(0.0));
        let one = summarize(&[2.0]).unwrap();
        assert_eq!(one.half_width_95, None);
        // 1..=5: mean 3, s = sqrt(2.5), t(0.975, 4) = 2.776445
        let s = summarize(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let expected = 2.776_445_105_2 * 2.5f64.sqrt() / 5f64.sqrt();
        assert!((s.half_width_95.unwrap() - expected).abs() < 1e-6);
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn delivery_ratio_is_a_percentage() {
        let l = MetricsLedger { sent: 8, delivered: 6, ..Default::default() };
        assert_eq!(l.delivery_ratio(), Some(75.0));
        assert_eq!(MetricsLedger::default().delivery_ratio(), None);
    }
}
