//! Constant-bit-rate flows over random source/destination pairs.

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use crate::engine::SimTime;
use crate::NodeId;

/// Flows start at a uniform time within this window.
pub const START_STAGGER_SECS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub src: NodeId,
    pub dst: NodeId,
    /// Packets per second.
    pub rate: f64,
    pub payload: u32,
    pub start: f64,
    pub stop: f64,
}

impl Flow {
    /// Packets originated over the flow's lifetime: one at `start` and one
    /// every `1/rate` seconds up to and including `stop`.
    pub fn packet_count(&self) -> u64 {
        ((self.stop - self.start) * self.rate + 1e-9).floor() as u64 + 1
    }

    /// Origination time of the `k`-th packet.
    pub fn origination(&self, k: u64) -> SimTime {
        let t = (self.start + k as f64 / self.rate).min(self.stop);
        SimTime::from_secs_f64(t)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("n_sources ({n_sources}) exceeds n_nodes ({n_nodes})")]
    TooManySources { n_sources: usize, n_nodes: usize },
    #[error("at least two nodes are needed for a flow")]
    TooFewNodes,
    #[error("rate must be positive, got {0}")]
    BadRate(f64),
}

/// Pick `n_sources` distinct sources uniformly, each with a uniform
/// destination other than itself.
pub fn build_flows<R: Rng + ?Sized>(
    n_sources: usize,
    n_nodes: usize,
    rate: f64,
    payload: u32,
    duration: f64,
    rng: &mut R,
) -> Result<Vec<Flow>, WorkloadError> {
    if n_sources > n_nodes {
        return Err(WorkloadError::TooManySources { n_sources, n_nodes });
    }
    if !(rate > 0.0) {
        return Err(WorkloadError::BadRate(rate));
    }
    if n_sources == 0 {
        return Ok(Vec::new());
    }
    if n_nodes < 2 {
        return Err(WorkloadError::TooFewNodes);
    }
    let stagger = START_STAGGER_SECS.min(duration);
    let sources = sample(rng, n_nodes, n_sources).into_vec();
    Ok(sources
        .into_iter()
        .map(|s| {
            let mut d = rng.gen_range(0..n_nodes - 1);
            if d >= s {
                d += 1;
            }
            let start = rng.gen_range(0.0..=stagger);
            Flow {
                src: NodeId(s as u32),
                dst: NodeId(d as u32),
                rate,
                payload,
                start,
                stop: duration,
            }
        })
        .collect())
}

/// One `src<TAB>dst<TAB>rate<TAB>start<TAB>stop` line per flow.
pub fn export(flows: &[Flow]) -> String {
    let mut out = String::new();
    for f in flows {
        out.push_str(&format!(
            "{}\t{}\t{:.6}\t{:.9}\t{:.9}\n",
            f.src, f.dst, f.rate, f.start, f.stop
        ));
    }
    out
}
