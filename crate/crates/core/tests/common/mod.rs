#![allow(dead_code)]

use dsr_sim::dsr::Protocol;
use dsr_sim::mobility::{Point, Waypoint, WaypointTrace};
use dsr_sim::workload::Flow;
use dsr_sim::world::{LogMode, RunConfig, RunResult, World};
use dsr_sim::NodeId;

pub const A: u32 = 0;
pub const B: u32 = 1;
pub const C: u32 = 2;
pub const D: u32 = 3;
pub const X: u32 = 4;
pub const E: u32 = 5;
pub const F: u32 = 6;

pub fn ids(v: &[u32]) -> Vec<NodeId> {
    v.iter().map(|&i| NodeId(i)).collect()
}

pub fn parked(side: f64, at: &[(f64, f64)], duration: f64) -> WaypointTrace {
    let pts: Vec<Point> = at.iter().map(|&(x, y)| Point::new(x, y)).collect();
    WaypointTrace::stationary(side, side, &pts, duration).unwrap()
}

/// A single packet from `src` to `dst` at time `t`.
pub fn one_packet(src: u32, dst: u32, t: f64, payload: u32) -> Flow {
    Flow {
        src: NodeId(src),
        dst: NodeId(dst),
        rate: 1.0,
        payload,
        start: t,
        stop: t,
    }
}

pub struct Setup {
    pub trace: WaypointTrace,
    pub flows: Vec<Flow>,
    pub seeded: Vec<Vec<u32>>,
}

impl Setup {
    pub fn run(&self, protocol: Protocol, seed: u64, tweak: impl FnOnce(&mut RunConfig)) -> RunResult {
        let mut cfg = RunConfig::new(protocol, seed);
        cfg.log = LogMode::Full;
        tweak(&mut cfg);
        let mut world = World::new(cfg, self.trace.clone(), self.flows.clone());
        for r in &self.seeded {
            world.seed_route(&ids(r));
        }
        world.run()
    }
}

/// Four nodes in a diamond A-B-D / A-C-D with the target X next to B and D
/// only. B and D already hold one-hop routes to X.
pub fn figure_1a(payload: u32) -> Setup {
    Setup {
        trace: parked(
            500.0,
            &[(0.0, 150.0), (150.0, 300.0), (150.0, 0.0), (300.0, 150.0), (320.0, 350.0)],
            2.0,
        ),
        flows: vec![one_packet(A, X, 0.5, payload)],
        seeded: vec![vec![B, X], vec![D, X]],
    }
}

/// Figure 1(a) with Ring Zero off, as the micro-oracle runs it.
pub fn run_figure_1a(protocol: Protocol, seed: u64) -> RunResult {
    figure_1a(FIGURE_1A_PAYLOAD).run(protocol, seed, |c| c.dsr.ring_zero = false)
}

pub const FIGURE_1A_PAYLOAD: u32 = 64;

/// The request reaches D over A-C-E, a longer path than the reply A-B.
pub fn figure_1b() -> Setup {
    Setup {
        trace: parked(
            500.0,
            &[
                (0.0, 200.0),
                (150.0, 380.0),
                (150.0, 50.0),
                (360.0, 290.0),
                (280.0, 470.0),
                (350.0, 50.0),
            ],
            2.0,
        ),
        flows: vec![one_packet(A, X, 0.5, 64)],
        seeded: vec![vec![B, X], vec![D, X]],
    }
}

/// D is next to A but loses A's request to a simultaneous broadcast from E,
/// which starts its own discovery for F at the same instant.
pub fn figure_1c() -> Setup {
    Setup {
        trace: parked(
            500.0,
            &[
                (0.0, 200.0),
                (100.0, 350.0),
                (100.0, 50.0),
                (200.0, 200.0),
                (300.0, 380.0),
                (400.0, 200.0),
                (480.0, 0.0),
            ],
            2.0,
        ),
        flows: vec![one_packet(A, X, 0.5, 64), one_packet(E, F, 0.5, 64)],
        seeded: vec![vec![B, X], vec![D, X]],
    }
}

/// When the request is sent (t = 0.5 s), D is in range of B and is about to
/// cross into C's range. It enters C's range 7 ms later.
pub fn figure_1d() -> Setup {
    let still = |x: f64, y: f64| {
        vec![Waypoint { pos: Point::new(x, y), arrival: 0.0, pause_until: 4.0, leg_speed: 20.0 }]
    };
    // Unit vector from C towards D's start.
    let (ux, uy) = (0.6, 0.8);
    let c = (150.0, 50.0);
    let start = Point::new(c.0 + 250.14 * ux, c.1 + 250.14 * uy);
    let end = Point::new(c.0 + 200.0 * ux, c.1 + 200.0 * uy);
    let d = vec![
        Waypoint { pos: start, arrival: 0.0, pause_until: 0.5, leg_speed: 20.0 },
        Waypoint {
            pos: end,
            arrival: 0.5 + start.distance(end) / 20.0,
            pause_until: 4.0,
            leg_speed: 20.0,
        },
    ];
    let nodes = vec![still(0.0, 200.0), still(150.0, 380.0), still(c.0, c.1), d, still(260.0, 450.0)];
    Setup {
        trace: WaypointTrace::from_waypoints(500.0, 500.0, 20.0, 4.0, nodes).unwrap(),
        flows: vec![one_packet(A, X, 0.5, 64)],
        seeded: vec![vec![B, X], vec![D, X]],
    }
}

/// `(time, node, detail)` of every log line of one kind.
pub fn entries<'a>(result: &'a RunResult, kind: &str) -> Vec<(&'a str, u32, &'a str)> {
    result
        .log
        .iter()
        .filter_map(|l| {
            let mut c = l.splitn(4, '\t');
            let (t, n, k, d) = (c.next()?, c.next()?, c.next()?, c.next()?);
            (k == kind).then(|| (t, n.parse().unwrap(), d))
        })
        .collect()
}

pub fn count(result: &RunResult, kind: &str, node: u32) -> usize {
    entries(result, kind).iter().filter(|e| e.1 == node).count()
}

/// Index of the first log line matching `pred`.
pub fn position(result: &RunResult, pred: impl Fn(&str) -> bool) -> Option<usize> {
    result.log.iter().position(|l| pred(l))
}
