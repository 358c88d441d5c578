//! Deterministic discrete-event MANET simulator for Dynamic Source Routing
//! (DSR) and DSR with non-optimal route suppression (DSR+S).
//!
//! The crate is organised bottom-up:
//!
//! - [`engine`]: integer-nanosecond clock, event queue, seeded random streams
//! - [`mobility`]: random waypoint traces and unit-disk connectivity
//! - [`netlink`]: a shared-medium MAC with carrier sense, collisions,
//!   retransmission and promiscuous overhearing
//! - [`dsr`]: route discovery, route cache, reply-storm deferral, route
//!   maintenance and the send buffer
//! - [`suppress`]: query state extracted from overheard route replies and
//!   the suppression decision applied to propagating route requests
//! - [`workload`]: CBR flows over random source/destination pairs
//! - [`metrics`]: per-run ledgers and cross-run summaries
//! - [`world`]: one simulation run wiring all of the above together
//! - [`runner`]: configuration, experiment matrices and CSV output
//!
//! The `book/` directory at the repository root walks through the same
//! material with runnable snippets; they are compiled as doc-tests.

pub mod dsr;
pub mod engine;
pub mod metrics;
pub mod mobility;
pub mod netlink;
pub mod runner;
pub mod suppress;
pub mod workload;
pub mod world;

use std::fmt;

/// Identifier of a mobile node; nodes are numbered `0..n_nodes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

/// Render a node list as `a-b-c`.
pub(crate) fn fmt_route(route: &[NodeId]) -> String {
    let mut s = String::with_capacity(route.len() * 3);
    for (i, n) in route.iter().enumerate() {
        if i > 0 {
            s.push('-');
        }
        s.push_str(&n.0.to_string());
    }
    s
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/mobility.md")]
    mod mobility {}
    #[doc = include_str!("../../../book/src/medium.md")]
    mod medium {}
    #[doc = include_str!("../../../book/src/dsr.md")]
    mod dsr {}
    #[doc = include_str!("../../../book/src/suppression.md")]
    mod suppression {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
