//! The four overhearing scenarios of Figure 1, each run under DSR and DSR+S
//! with Ring Zero off.

mod common;

use common::*;
use dsr_sim::dsr::Protocol;
use dsr_sim::world::RunResult;
use dsr_sim::NodeId;

const SEED: u64 = 1;

fn both(setup: &Setup) -> (RunResult, RunResult) {
    let dsr = setup.run(Protocol::Dsr, SEED, |c| c.dsr.ring_zero = false);
    let dsr_s = setup.run(Protocol::DsrS, SEED, |c| c.dsr.ring_zero = false);
    (dsr, dsr_s)
}

/// B's cached reply is on the air before D first receives the request.
fn reply_precedes_request(r: &RunResult, relay: u32) -> bool {
    let reply = position(r, |l| l.contains("\tRREP-CACHED\t") && l.split('\t').nth(1) == Some("1"));
    let request = position(r, |l| {
        let c: Vec<&str> = l.split('\t').collect();
        c[1] == D.to_string() && c[2] == "RX" && c[3].starts_with(&format!("{relay} RREQ"))
    });
    matches!((reply, request), (Some(a), Some(b)) if a < b)
}

fn check_suppressed(dsr: &RunResult, dsr_s: &RunResult, h_r: u32) {
    assert!(count(dsr, "RREP-CACHED", D) >= 1, "DSR: D should answer from its cache");
    assert_eq!(count(dsr_s, "RREP-CACHED", D), 0);
    let sup = entries(dsr_s, "SUPPRESS");
    assert_eq!(sup.len(), 1, "{sup:?}");
    assert_eq!(sup[0].1, D);
    assert_eq!(sup[0].2, format!("{A} 1 {h_r} 2"));
    assert!(dsr.conserved && dsr_s.conserved);
}

#[test]
fn figure_1a_suppresses_the_longer_cached_reply() {
    let (dsr, dsr_s) = both(&figure_1a(FIGURE_1A_PAYLOAD));
    assert!(reply_precedes_request(&dsr_s, C));
    // D records H_s = 2 from the overheard A-B-X reply.
    assert!(entries(&dsr_s, "RECORD").iter().any(|e| e.1 == D && e.2 == "0 1 2"));
    // H_r = |A-C-D| + 1 = 3.
    check_suppressed(&dsr, &dsr_s, 3);
    // Only D's reply is missing; the source still gets B's route.
    assert_eq!(count(&dsr_s, "DELIVER", X), 1);
}

#[test]
fn figure_1b_longer_request_path() {
    let (dsr, dsr_s) = both(&figure_1b());
    assert!(reply_precedes_request(&dsr_s, E));
    check_suppressed(&dsr, &dsr_s, 4);
}

#[test]
fn figure_1c_request_lost_to_collision() {
    let (dsr, dsr_s) = both(&figure_1c());
    let lost = entries(&dsr_s, "COLLISION");
    assert!(lost.iter().any(|e| e.1 == D && e.0 == "0.500000000"), "{lost:?}");
    assert!(!dsr_s.log.iter().any(|l| l.contains(&format!("\t{D}\tRX\t{A} RREQ src={A} "))));
    assert!(reply_precedes_request(&dsr_s, C));
    check_suppressed(&dsr, &dsr_s, 3);
}

#[test]
fn figure_1d_mobility_brings_d_into_range() {
    let setup = figure_1d();
    let at = |t: f64| setup.trace.in_range(NodeId(D), NodeId(C), t, 250.0);
    assert!(!at(0.5) && at(0.508));
    let (dsr, dsr_s) = both(&setup);
    assert!(reply_precedes_request(&dsr_s, C));
    check_suppressed(&dsr, &dsr_s, 3);
}

#[test]
fn figure_1a_with_ring_zero_on_never_floods() {
    // B answers the one-hop query, so nobody rebroadcasts and nothing is
    // suppressed.
    let setup = figure_1a(FIGURE_1A_PAYLOAD);
    for protocol in [Protocol::Dsr, Protocol::DsrS] {
        let r = setup.run(protocol, SEED, |_| {});
        let floods = entries(&r, "RREQ").iter().filter(|e| e.2.split(' ').nth(2) != Some("1")).count();
        assert_eq!(floods, 0);
        assert!(entries(&r, "SUPPRESS").is_empty());
        assert_eq!(count(&r, "DELIVER", X), 1);
    }
}
