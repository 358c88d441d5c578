//! Discrete-event kernel: simulated clock, time-ordered event queue, seeded
//! random streams and the optional event log.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Mul, Sub};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::NodeId;

/// Simulated time as an integer count of nanoseconds.
///
/// Used both for instants and for spans between them. Integer time keeps
/// event ordering independent of floating-point rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    /// Rounds to the nearest nanosecond. Negative or NaN input maps to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_nan() || s <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime((s * 1e9).round() as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl Mul<u64> for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: u64) -> SimTime {
        SimTime(self.0 * rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:09}", self.0 / 1_000_000_000, self.0 % 1_000_000_000)
    }
}

/// Handle returned by [`EventQueue::schedule`]; used to cancel the event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

/// A scheduled action with its firing time and insertion sequence number.
#[derive(Debug)]
pub struct Event<A> {
    pub fire_time: SimTime,
    pub sequence: u64,
    pub action: A,
}

impl<A> PartialEq for Event<A> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_time == other.fire_time && self.sequence == other.sequence
    }
}

impl<A> Eq for Event<A> {}

impl<A> PartialOrd for Event<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for Event<A> {
    // BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_time
            .cmp(&self.fire_time)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

/// Time-ordered event queue with FIFO tie-breaking and cancellation.
#[derive(Debug)]
pub struct EventQueue<A> {
    heap: BinaryHeap<Event<A>>,
    now: SimTime,
    next_seq: u64,
    cancelled: HashSet<u64>,
    fired: u64,
}

impl<A> Default for EventQueue<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> EventQueue<A> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_seq: 0,
            cancelled: HashSet::new(),
            fired: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events executed so far.
    pub fn fired(&self) -> u64 {
        self.fired
    }

    /// Enqueue `action` to fire at `at`.
    ///
    /// Scheduling in the past is a programming error and aborts the run.
    pub fn schedule(&mut self, at: SimTime, action: A) -> EventHandle {
        assert!(
            at >= self.now,
            "event scheduled in the past: at={} now={}",
            at,
            self.now
        );
        let sequence = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event {
            fire_time: at,
            sequence,
            action,
        });
        EventHandle(sequence)
    }

    pub fn schedule_in(&mut self, delay: SimTime, action: A) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, action)
    }

    /// Cancel a pending event. Cancelling an event that already fired has
    /// no effect on execution.
    pub fn cancel(&mut self, handle: EventHandle) {
        if handle.0 < self.next_seq {
            self.cancelled.insert(handle.0);
        }
    }

    /// Pop the next live event with `fire_time <= t_end`, advancing the clock.
    pub fn pop_due(&mut self, t_end: SimTime) -> Option<(SimTime, A)> {
        loop {
            let due = matches!(self.heap.peek(), Some(ev) if ev.fire_time <= t_end);
            if !due {
                return None;
            }
            let ev = self.heap.pop().expect("peeked");
            if self.cancelled.remove(&ev.sequence) {
                continue;
            }
            debug_assert!(ev.fire_time >= self.now);
            self.now = ev.fire_time;
            self.fired += 1;
            return Some((ev.fire_time, ev.action));
        }
    }

    /// Set the clock to `t_end` once all due events are processed.
    pub fn finish(&mut self, t_end: SimTime) {
        assert!(t_end >= self.now, "cannot move the clock backwards");
        self.now = t_end;
    }

    /// Events still queued and not cancelled (end-of-run residue).
    pub fn residue(&self) -> impl Iterator<Item = &A> {
        self.heap
            .iter()
            .filter(|ev| !self.cancelled.contains(&ev.sequence))
            .map(|ev| &ev.action)
    }

    /// Drive the queue to `t_end`, handing every due event to `handler`.
    /// Returns the final clock, which always equals `t_end`.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> SimTime
    where
        F: FnMut(&mut Self, SimTime, A),
    {
        while let Some((t, action)) = self.pop_due(t_end) {
            handler(self, t, action);
        }
        self.finish(t_end);
        self.now
    }
}

/// Seeded random stream keyed by `(master_seed, label, node)`.
///
/// Each consumer gets its own stream, so adding draws in one place never
/// shifts the sequence seen by another.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

const GLOBAL_STREAM: u64 = u64::MAX;

impl RngStream {
    pub fn new(master_seed: u64, label: &str) -> Self {
        Self::keyed(master_seed, label, GLOBAL_STREAM)
    }

    pub fn for_node(master_seed: u64, label: &str, node: NodeId) -> Self {
        Self::keyed(master_seed, label, u64::from(node.0))
    }

    fn keyed(master_seed: u64, label: &str, sub: u64) -> Self {
        let mut key = splitmix64(master_seed);
        key = splitmix64(key ^ fnv1a(label.as_bytes()));
        key = splitmix64(key ^ sub);
        RngStream {
            rng: ChaCha8Rng::seed_from_u64(key),
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Optional run log: one `time<TAB>node<TAB>kind<TAB>detail` line per entry.
#[derive(Debug, Default, Clone)]
pub struct EventLog {
    lines: Option<Vec<String>>,
    /// When set, only these kinds are kept.
    kinds: Option<Vec<&'static str>>,
}

impl EventLog {
    pub fn disabled() -> Self {
        EventLog {
            lines: None,
            kinds: None,
        }
    }

    pub fn enabled() -> Self {
        EventLog {
            lines: Some(Vec::new()),
            kinds: None,
        }
    }

    /// Log only entries of the given kinds.
    pub fn only(kinds: &[&'static str]) -> Self {
        EventLog {
            lines: Some(Vec::new()),
            kinds: Some(kinds.to_vec()),
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.lines.is_some()
    }

    /// `detail` is only evaluated when logging is on.
    pub fn record<F>(&mut self, t: SimTime, node: NodeId, kind: &str, detail: F)
    where
        F: FnOnce() -> String,
    {
        if let Some(lines) = self.lines.as_mut() {
            if let Some(kinds) = &self.kinds {
                if !kinds.contains(&kind) {
                    return;
                }
            }
            lines.push(format!("{}\t{}\t{}\t{}", t, node, kind, detail()));
        }
    }

    pub fn lines(&self) -> &[String] {
        self.lines.as_deref().unwrap_or(&[])
    }

    pub fn into_lines(self) -> Vec<String> {
        self.lines.unwrap_or_default()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in self.lines() {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn earlier_event_fires_first() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_secs(5), "A");
        q.schedule(SimTime::from_secs(3), "B");
        let mut order = Vec::new();
        q.run_until(SimTime::from_secs(10), |_, _, a| order.push(a));
        assert_eq!(order, vec!["B", "A"]);
    }

    #[test]
    fn ties_fire_in_insertion_order() {
        let mut q = EventQueue::new();
        let t = SimTime::from_millis(7);
        for i in 0..5 {
            q.schedule(t, i);
        }
        let mut order = Vec::new();
        q.run_until(t, |q, _, a| {
            order.push(a);
            if a == 0 {
                // scheduled "now" goes behind everything already queued at t
                q.schedule(q.now(), 99);
            }
        });
        assert_eq!(order, vec![0, 1, 2, 3, 4, 99]);
    }

    #[test]
    fn cancelled_event_never_runs() {
        let mut q = EventQueue::new();
        let h = q.schedule(SimTime::from_secs(1), "gone");
        q.schedule(SimTime::from_secs(2), "kept");
        q.cancel(h);
        let mut seen = Vec::new();
        q.run_until(SimTime::from_secs(3), |_, _, a| seen.push(a));
        assert_eq!(seen, vec!["kept"]);
        assert_eq!(q.fired(), 1);
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut q: EventQueue<()> = EventQueue::new();
        let end = q.run_until(SimTime::from_secs(500), |_, _, _| unreachable!());
        assert_eq!(end, SimTime::from_secs(500));
        assert_eq!(q.fired(), 0);
    }

    #[test]
    fn residue_excludes_cancelled_and_fired() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_secs(1), 1);
        let h = q.schedule(SimTime::from_secs(9), 2);
        q.schedule(SimTime::from_secs(9), 3);
        q.cancel(h);
        q.run_until(SimTime::from_secs(5), |_, _, _| {});
        let left: Vec<_> = q.residue().copied().collect();
        assert_eq!(left, vec![3]);
    }

    #[test]
    #[should_panic(expected = "scheduled in the past")]
    fn scheduling_in_the_past_aborts() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_secs(2), ());
        q.run_until(SimTime::from_secs(2), |q, _, _| {
            q.schedule(SimTime::from_secs(1), ());
        });
    }

    #[test]
    fn time_renders_as_seconds() {
        assert_eq!(SimTime::from_millis(1500).to_string(), "1.500000000");
        assert_eq!(SimTime::from_secs_f64(0.030).as_nanos(), 30_000_000);
    }

    #[test]
    fn streams_are_reproducible_and_label_separated() {
        let draw = |s: &mut RngStream| (0..4).map(|_| s.gen::<u64>()).collect::<Vec<_>>();
        let a1 = draw(&mut RngStream::new(7, "mobility"));
        let a2 = draw(&mut RngStream::new(7, "mobility"));
        let b = draw(&mut RngStream::new(7, "traffic"));
        let c = draw(&mut RngStream::new(8, "mobility"));
        let n0 = draw(&mut RngStream::for_node(7, "mobility", NodeId(0)));
        assert_eq!(a1, a2);
        assert_ne!(a1, b);
        assert_ne!(a1, c);
        assert_ne!(a1, n0);
    }

    #[test]
    fn disabled_log_skips_formatting() {
        let mut log = EventLog::disabled();
        log.record(SimTime::ZERO, NodeId(1), "TX", || panic!("formatted"));
        assert!(log.lines().is_empty());

        let mut log = EventLog::enabled();
        log.record(SimTime::from_millis(1), NodeId(3), "TX", || "x".into());
        assert_eq!(log.lines(), ["0.001000000\t3\tTX\tx"]);
    }
}
