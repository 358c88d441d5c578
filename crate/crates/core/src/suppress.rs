//! Non-optimal route suppression.
//!
//! Route requests flood outward hop by hop while cached replies travel back
//! toward the source, so a node near the source can overhear a reply for a
//! request it has not received yet. The overheard reply tells it who asked
//! (`S`, the head of the returned route), which request it was (`ID`) and
//! how long the route already on its way to the source is (`H_s`). When the
//! request later arrives, the node answers only if it can offer a strictly
//! shorter route; otherwise it neither answers nor forwards the request.
//!
//! The decision applies only to propagating requests and never at the
//! request's target.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::dsr::packet::{Rreq, Rrep};
use crate::engine::SimTime;
use crate::NodeId;

/// How the candidate reply length `H_r` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HrMode {
    /// Full source-to-target length of the reply this node would send.
    #[default]
    Full,
    /// Only the cached suffix from this node to the target.
    SuffixOnly,
}

impl FromStr for HrMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(HrMode::Full),
            "suffix-only" => Ok(HrMode::SuffixOnly),
            other => Err(format!("expected full|suffix-only, got {other:?}")),
        }
    }
}

impl fmt::Display for HrMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HrMode::Full => "full",
            HrMode::SuffixOnly => "suffix-only",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuppressionRecord {
    pub rreq_source: NodeId,
    pub rreq_id: u32,
    /// Hop length of the best returned route overheard so far (`H_s`).
    pub best_overheard_len: u32,
    pub recorded_time: SimTime,
}

/// `(S, ID, H_s)` as carried by a reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryState {
    pub source: NodeId,
    pub id: u32,
    pub hops: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SuppressError {
    #[error("malformed reply: returned route has {0} node(s)")]
    MalformedRoute(usize),
}

pub fn extract_query_state(rrep: &Rrep) -> Result<QueryState, SuppressError> {
    if rrep.route.len() < 2 {
        return Err(SuppressError::MalformedRoute(rrep.route.len()));
    }
    Ok(QueryState {
        source: rrep.route[0],
        id: rrep.for_rreq.1,
        hops: (rrep.route.len() - 1) as u32,
    })
}

/// Length `H_r` of the reply a node would return, given the accumulated
/// request route (node count, excluding the replying node) and the hop
/// count of its cached suffix to the target.
pub fn candidate_reply_length(mode: HrMode, accumulated_nodes: usize, suffix_hops: usize) -> u32 {
    match mode {
        HrMode::Full => (accumulated_nodes + suffix_hops) as u32,
        HrMode::SuffixOnly => suffix_hops as u32,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverhearOutcome {
    /// The request was already seen; normal DSR behaviour applies.
    Ignored,
    Created(SuppressionRecord),
    Updated(SuppressionRecord),
    /// A record exists with an equal or shorter route.
    Unchanged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuppressDecision {
    /// No record: handle the request exactly as plain DSR would.
    PassThrough,
    /// Strictly shorter route available: send a cached reply.
    Reply { h_r: u32, h_s: u32 },
    /// Neither reply nor forward.
    Discard { h_r: Option<u32>, h_s: u32 },
}

#[derive(Debug, Clone)]
pub struct SuppressionTable {
    records: BTreeMap<(NodeId, u32), SuppressionRecord>,
    ttl: SimTime,
}

impl SuppressionTable {
    pub fn new(ttl: SimTime) -> Self {
        SuppressionTable {
            records: BTreeMap::new(),
            ttl,
        }
    }

    fn live(&self, rec: &SuppressionRecord, now: SimTime) -> bool {
        now < rec.recorded_time + self.ttl
    }

    /// Process an overheard, non-gratuitous reply. `already_seen` is whether
    /// the node's duplicate table holds the reply's `(S, ID)`.
    pub fn on_overhear_rrep(
        &mut self,
        rrep: &Rrep,
        already_seen: bool,
        now: SimTime,
    ) -> Result<OverhearOutcome, SuppressError> {
        let q = extract_query_state(rrep)?;
        if rrep.gratuitous || already_seen {
            return Ok(OverhearOutcome::Ignored);
        }
        if self.records.len() > 256 {
            let ttl = self.ttl;
            self.records.retain(|_, r| now < r.recorded_time + ttl);
        }
        let key = (q.source, q.id);
        let fresh = SuppressionRecord {
            rreq_source: q.source,
            rreq_id: q.id,
            best_overheard_len: q.hops,
            recorded_time: now,
        };
        match self.records.get(&key).copied() {
            Some(old) if self.live(&old, now) => {
                if q.hops < old.best_overheard_len {
                    let updated = SuppressionRecord {
                        best_overheard_len: q.hops,
                        ..old
                    };
                    self.records.insert(key, updated);
                    Ok(OverhearOutcome::Updated(updated))
                } else {
                    Ok(OverhearOutcome::Unchanged)
                }
            }
            _ => {
                self.records.insert(key, fresh);
                Ok(OverhearOutcome::Created(fresh))
            }
        }
    }

    pub fn get(&self, source: NodeId, id: u32, now: SimTime) -> Option<&SuppressionRecord> {
        self.records
            .get(&(source, id))
            .filter(|r| self.live(r, now))
    }

    /// Decide how to treat a request given the reply length `h_r` this node
    /// could offer (`None` when it has no loop-free route to the target).
    pub fn decide(&self, rreq: &Rreq, h_r: Option<u32>, now: SimTime) -> SuppressDecision {
        if !rreq.propagating {
            return SuppressDecision::PassThrough;
        }
        let Some(rec) = self.get(rreq.source, rreq.id, now) else {
            return SuppressDecision::PassThrough;
        };
        let h_s = rec.best_overheard_len;
        match h_r {
            Some(h_r) if h_r < h_s => SuppressDecision::Reply { h_r, h_s },
            _ => SuppressDecision::Discard { h_r, h_s },
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// A cached reply initiated by a node that held a record saying an equal or
/// shorter route was already returned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub line: usize,
    pub node: String,
    pub source: String,
    pub id: String,
    pub reply_len: u32,
    pub recorded_len: u32,
}

/// Scan an event log for cached replies that break the suppression
/// invariant. Reads `RECORD S ID H_s` and `RREP-CACHED S ID H_r route`
/// entries; records are considered held for `record_ttl` after the time of
/// their most recent `RECORD` line.
pub fn audit_log<'a, I>(lines: I, record_ttl: SimTime) -> Vec<Violation>
where
    I: IntoIterator<Item = &'a str>,
{
    // (node, S, ID) -> (H_s, created)
    let mut held: BTreeMap<(String, String, String), (u32, SimTime)> = BTreeMap::new();
    let mut out = Vec::new();
    for (lineno, line) in lines.into_iter().enumerate() {
        let mut cols = line.splitn(4, '\t');
        let (Some(t), Some(node), Some(kind), Some(detail)) =
            (cols.next(), cols.next(), cols.next(), cols.next())
        else {
            continue;
        };
        if kind != "RECORD" && kind != "RREP-CACHED" {
            continue;
        }
        let Some(t) = parse_time(t) else { continue };
        let f: Vec<&str> = detail.split(' ').collect();
        if f.len() < 3 {
            continue;
        }
        let Ok(len) = f[2].parse::<u32>() else { continue };
        let key = (node.to_string(), f[0].to_string(), f[1].to_string());
        if kind == "RECORD" {
            match held.get_mut(&key) {
                Some((h_s, created)) if t < *created + record_ttl => *h_s = (*h_s).min(len),
                _ => {
                    held.insert(key, (len, t));
                }
            }
        } else if let Some(&(h_s, created)) = held.get(&key) {
            if t < created + record_ttl && len >= h_s {
                out.push(Violation {
                    line: lineno + 1,
                    node: key.0,
                    source: key.1,
                    id: key.2,
                    reply_len: len,
                    recorded_len: h_s,
                });
            }
        }
    }
    out
}

/// Parse `secs.nanos` as written by the event log.
pub fn parse_time(s: &str) -> Option<SimTime> {
    let (secs, frac) = s.split_once('.').unwrap_or((s, "0"));
    let secs: u64 = secs.parse().ok()?;
    let mut frac = frac.to_string();
    if frac.len() > 9 {
        return None;
    }
    while frac.len() < 9 {
        frac.push('0');
    }
    let nanos: u64 = frac.parse().ok()?;
    Some(SimTime::from_nanos(secs * 1_000_000_000 + nanos))
}
