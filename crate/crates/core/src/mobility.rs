//! Random waypoint movement and continuous position lookup.
//!
//! A node starts at a uniformly drawn point, pauses for `pause_time`, then
//! travels in a straight line to a new uniform destination at a uniform
//! speed in `(min_speed, max_speed]`, pauses again, and so on until the
//! trace covers the whole run.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::NodeId;

/// Lower bound on leg speed; avoids the random waypoint speed-decay
/// degenerate case where legs at near-zero speed never finish.
pub const DEFAULT_MIN_SPEED: f64 = 0.1;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// One stop of a node's itinerary.
///
/// The node reaches `pos` at `arrival`, stays there until `pause_until`,
/// then leaves for the next waypoint at `leg_speed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub pos: Point,
    pub arrival: f64,
    pub pause_until: f64,
    pub leg_speed: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("space must have positive width and height, got {0} x {1}")]
    ZeroArea(f64, f64),
    #[error("at least one node is required")]
    NoNodes,
    #[error("invalid speed range: min {min} max {max}")]
    InvalidSpeed { min: f64, max: f64 },
    #[error("duration must be positive, got {0}")]
    InvalidDuration(f64),
    #[error("pause time must be non-negative, got {0}")]
    InvalidPause(f64),
    #[error("node {node}: {reason}")]
    InvalidWaypoint { node: usize, reason: String },
}

/// Parameters of a random waypoint trace.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointParams {
    pub width: f64,
    pub height: f64,
    pub n_nodes: usize,
    pub max_speed: f64,
    pub min_speed: f64,
    pub pause_time: f64,
    pub duration: f64,
}

impl WaypointParams {
    fn validate(&self) -> Result<(), MobilityError> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(MobilityError::ZeroArea(self.width, self.height));
        }
        if self.n_nodes == 0 {
            return Err(MobilityError::NoNodes);
        }
        if !(self.min_speed > 0.0 && self.max_speed > self.min_speed) {
            return Err(MobilityError::InvalidSpeed {
                min: self.min_speed,
                max: self.max_speed,
            });
        }
        if !(self.duration > 0.0) {
            return Err(MobilityError::InvalidDuration(self.duration));
        }
        if !(self.pause_time >= 0.0) {
            return Err(MobilityError::InvalidPause(self.pause_time));
        }
        Ok(())
    }
}

/// Per-node waypoint lists covering `[0, duration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointTrace {
    width: f64,
    height: f64,
    max_speed: f64,
    duration: f64,
    nodes: Vec<Vec<Waypoint>>,
}

impl WaypointTrace {
    /// Draw a random waypoint trace. Nodes are generated in id order from
    /// the single stream `rng`.
    pub fn generate<R: Rng + ?Sized>(
        params: &WaypointParams,
        rng: &mut R,
    ) -> Result<Self, MobilityError> {
        params.validate()?;
        let p = params;
        let mut nodes = Vec::with_capacity(p.n_nodes);
        for _ in 0..p.n_nodes {
            let mut pos = uniform_point(rng, p.width, p.height);
            let mut speed = draw_speed(rng, p.min_speed, p.max_speed);
            let mut list = vec![Waypoint {
                pos,
                arrival: 0.0,
                pause_until: p.pause_time,
                leg_speed: speed,
            }];
            let mut depart = p.pause_time;
            while depart < p.duration {
                let dest = loop {
                    let d = uniform_point(rng, p.width, p.height);
                    if d.distance(pos) > 1e-6 {
                        break d;
                    }
                };
                let arrival = depart + dest.distance(pos) / speed;
                speed = draw_speed(rng, p.min_speed, p.max_speed);
                list.push(Waypoint {
                    pos: dest,
                    arrival,
                    pause_until: arrival + p.pause_time,
                    leg_speed: speed,
                });
                pos = dest;
                depart = arrival + p.pause_time;
            }
            nodes.push(list);
        }
        Ok(WaypointTrace {
            width: p.width,
            height: p.height,
            max_speed: p.max_speed,
            duration: p.duration,
            nodes,
        })
    }

    /// Every node parked at a fixed point for the whole run.
    pub fn stationary(
        width: f64,
        height: f64,
        positions: &[Point],
        duration: f64,
    ) -> Result<Self, MobilityError> {
        let nodes = positions
            .iter()
            .map(|&pos| {
                vec![Waypoint {
                    pos,
                    arrival: 0.0,
                    pause_until: duration,
                    leg_speed: DEFAULT_MIN_SPEED,
                }]
            })
            .collect();
        Self::from_waypoints(width, height, DEFAULT_MIN_SPEED, duration, nodes)
    }

    /// Build a scripted trace, checking every waypoint invariant.
    pub fn from_waypoints(
        width: f64,
        height: f64,
        max_speed: f64,
        duration: f64,
        nodes: Vec<Vec<Waypoint>>,
    ) -> Result<Self, MobilityError> {
        if !(width > 0.0 && height > 0.0) {
            return Err(MobilityError::ZeroArea(width, height));
        }
        if nodes.is_empty() {
            return Err(MobilityError::NoNodes);
        }
        if !(duration > 0.0) {
            return Err(MobilityError::InvalidDuration(duration));
        }
        for (node, list) in nodes.iter().enumerate() {
            let bad = |reason: &str| MobilityError::InvalidWaypoint {
                node,
                reason: reason.to_string(),
            };
            let first = list.first().ok_or_else(|| bad("empty itinerary"))?;
            if first.arrival != 0.0 {
                return Err(bad("first waypoint must arrive at t=0"));
            }
            let last = list.last().expect("non-empty");
            if last.pause_until + TIME_EPS < duration {
                return Err(bad("itinerary ends before the run does"));
            }
            for w in list {
                if !(0.0..=width).contains(&w.pos.x) || !(0.0..=height).contains(&w.pos.y) {
                    return Err(bad("waypoint outside the space"));
                }
                if !(w.leg_speed > 0.0 && w.leg_speed <= max_speed + 1e-12) {
                    return Err(bad("leg speed outside (0, max_speed]"));
                }
                if w.pause_until < w.arrival {
                    return Err(bad("pause ends before arrival"));
                }
            }
            for pair in list.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if b.arrival <= a.arrival || b.arrival < a.pause_until {
                    return Err(bad("arrival times must strictly increase"));
                }
                let needed = a.pos.distance(b.pos) / a.leg_speed;
                if (b.arrival - a.pause_until) + 1e-6 < needed {
                    return Err(bad("leg is faster than its declared speed"));
                }
            }
        }
        Ok(WaypointTrace {
            width,
            height,
            max_speed,
            duration,
            nodes,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn space(&self) -> (f64, f64) {
        (self.width, self.height)
    }

    pub fn max_speed(&self) -> f64 {
        self.max_speed
    }

    pub fn waypoints(&self, node: NodeId) -> &[Waypoint] {
        &self.nodes[node.index()]
    }

    /// Position of `node` at time `t` (seconds).
    ///
    /// Panics when `t` lies outside `[0, duration]`.
    pub fn position_at(&self, node: NodeId, t: f64) -> Point {
        assert!(
            t >= -TIME_EPS && t <= self.duration + TIME_EPS,
            "position query at t={} outside run window [0, {}]",
            t,
            self.duration
        );
        let list = &self.nodes[node.index()];
        let idx = list.partition_point(|w| w.arrival <= t).saturating_sub(1);
        let w = list[idx];
        if t <= w.pause_until {
            return w.pos;
        }
        match list.get(idx + 1) {
            Some(next) => {
                let span = next.arrival - w.pause_until;
                let f = ((t - w.pause_until) / span).clamp(0.0, 1.0);
                Point::new(
                    w.pos.x + (next.pos.x - w.pos.x) * f,
                    w.pos.y + (next.pos.y - w.pos.y) * f,
                )
            }
            None => w.pos,
        }
    }

    pub fn positions_at(&self, t: f64) -> Vec<Point> {
        (0..self.nodes.len())
            .map(|i| self.position_at(NodeId(i as u32), t))
            .collect()
    }

    /// Closed-disk range test: distance exactly `radio_range` counts.
    pub fn in_range(&self, a: NodeId, b: NodeId, t: f64, radio_range: f64) -> bool {
        debug_assert_ne!(a, b);
        let pa = self.position_at(a, t);
        let pb = self.position_at(b, t);
        within(pa, pb, radio_range)
    }

    /// Tab-separated export, one line per waypoint:
    /// `node, arrival_time, x, y, pause_until, speed`.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for (node, list) in self.nodes.iter().enumerate() {
            for w in list {
                let _ = writeln!(
                    out,
                    "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                    node, w.arrival, w.pos.x, w.pos.y, w.pause_until, w.leg_speed
                );
            }
        }
        out
    }
}

pub(crate) fn within(a: Point, b: Point, radio_range: f64) -> bool {
    a.distance_sq(b) <= radio_range * radio_range
}

fn uniform_point<R: Rng + ?Sized>(rng: &mut R, width: f64, height: f64) -> Point {
    Point::new(rng.gen::<f64>() * width, rng.gen::<f64>() * height)
}

/// Uniform in `(min, max]`.
fn draw_speed<R: Rng + ?Sized>(rng: &mut R, min: f64, max: f64) -> f64 {
    max - rng.gen::<f64>() * (max - min)
}
