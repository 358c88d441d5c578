//! Configuration, experiment matrices and CSV output.
//!
//! A [`ScenarioConfig`] is read from a flat `key = value` file and then
//! overridden key by key. [`run_matrix`] expands it into one run per
//! (protocol, pause time, seed), runs them in parallel and returns the
//! results in a fixed order; [`write_outputs`] turns those into CSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::dsr::{DsrConfig, Protocol};
use crate::engine::{RngStream, SimTime};
use crate::metrics::{summarize_metric, DropReason, MetricsLedger, TxClass, METRICS};
use crate::mobility::{WaypointParams, WaypointTrace, DEFAULT_MIN_SPEED};
use crate::netlink::LinkConfig;
use crate::suppress::HrMode;
use crate::workload::{build_flows, export, Flow};
use crate::world::{LogMode, RunConfig, RunResult, World};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write output to {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl ConfigError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Output { .. } => 3,
            _ => 2,
        }
    }

    fn invalid(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_nodes: usize,
    pub width: f64,
    pub height: f64,
    pub duration: f64,
    pub pause_times: Vec<f64>,
    pub max_speed: f64,
    pub n_sources: usize,
    pub rate: f64,
    pub payload: u32,
    pub seeds: Vec<u64>,
    pub protocols: Vec<Protocol>,
    pub ring_zero: bool,
    pub radio_range: f64,
    pub bandwidth: u64,
    pub max_mac_retries: u32,
    pub ifq_capacity: usize,
    pub h_r_mode: HrMode,
    /// Upper bound of the random wait before rebroadcasting a request, s.
    pub rreq_jitter: f64,
    /// Cached-reply deferral per hop, s.
    pub delay_unit: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_nodes: 100,
            width: 1342.0,
            height: 1342.0,
            duration: 500.0,
            pause_times: vec![0.0, 100.0, 200.0, 300.0, 400.0, 500.0],
            max_speed: 20.0,
            n_sources: 40,
            rate: 2.0,
            payload: 64,
            seeds: vec![1, 2, 3, 4, 5],
            protocols: vec![Protocol::Dsr, Protocol::DsrS],
            ring_zero: true,
            radio_range: 250.0,
            bandwidth: 2_000_000,
            max_mac_retries: 3,
            ifq_capacity: 50,
            h_r_mode: HrMode::Full,
            rreq_jitter: DsrConfig::default().rreq_jitter.as_secs_f64(),
            delay_unit: DsrConfig::default().delay_unit.as_secs_f64(),
        }
    }
}

/// Every key accepted in a config file or as a `--key value` override.
pub const KEYS: &[&str] = &[
    "n_nodes",
    "space",
    "duration",
    "pause_times",
    "max_speed",
    "n_sources",
    "rate",
    "payload",
    "seeds",
    "protocol",
    "ring_zero",
    "radio_range",
    "bandwidth",
    "max_mac_retries",
    "ifq_capacity",
    "h_r_mode",
    "rreq_jitter",
    "delay_unit",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .trim()
        .parse()
        .map_err(|_| ConfigError::invalid(key, format!("cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::invalid(key, "must be positive"))
    }
}

impl ScenarioConfig {
    /// The reduced matrix used for trend checks: 50 nodes, 20 sources,
    /// 300 s, pause times 0/150/300. The space is shrunk to 949 m so that
    /// node density matches 100 nodes in 1342 m.
    pub fn desk_scale() -> Self {
        ScenarioConfig {
            n_nodes: 50,
            width: 949.0,
            height: 949.0,
            duration: 300.0,
            pause_times: vec![0.0, 150.0, 300.0],
            n_sources: 20,
            ..ScenarioConfig::default()
        }
    }

    /// Apply one `key = value` setting. Keys may use `-` in place of `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        match k {
            "n_nodes" => self.n_nodes = parse(k, value)?,
            "space" => {
                let dims: Vec<f64> = value
                    .split(|c| c == ',' || c == 'x')
                    .map(|s| parse(k, s))
                    .collect::<Result<_, _>>()?;
                match dims[..] {
                    [s] => (self.width, self.height) = (s, s),
                    [w, h] => (self.width, self.height) = (w, h),
                    _ => return Err(ConfigError::invalid(k, "expected W,H or a single side")),
                }
            }
            "duration" => self.duration = parse(k, value)?,
            "pause_times" => self.pause_times = parse_list(k, value)?,
            "max_speed" => self.max_speed = parse(k, value)?,
            "n_sources" => self.n_sources = parse(k, value)?,
            "rate" => self.rate = parse(k, value)?,
            "payload" => self.payload = parse(k, value)?,
            "seeds" => self.seeds = parse_list(k, value)?,
            "protocol" | "protocols" => {
                self.protocols = value
                    .split(',')
                    .map(|s| s.parse().map_err(|e: String| ConfigError::invalid(k, e)))
                    .collect::<Result<_, _>>()?
            }
            "ring_zero" => self.ring_zero = parse(k, value)?,
            "radio_range" => self.radio_range = parse(k, value)?,
            "bandwidth" => self.bandwidth = parse(k, value)?,
            "max_mac_retries" => self.max_mac_retries = parse(k, value)?,
            "ifq_capacity" => self.ifq_capacity = parse(k, value)?,
            "h_r_mode" => self.h_r_mode = value.trim().parse().map_err(|e: String| ConfigError::invalid(k, e))?,
            "rreq_jitter" => self.rreq_jitter = parse(k, value)?,
            "delay_unit" => self.delay_unit = parse(k, value)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Parse `key = value` lines; `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::invalid(line, "expected key = value"))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_nodes == 0 {
            return Err(ConfigError::invalid("n_nodes", "must be positive"));
        }
        positive("space", self.width)?;
        positive("space", self.height)?;
        positive("duration", self.duration)?;
        positive("max_speed", self.max_speed)?;
        if self.max_speed <= DEFAULT_MIN_SPEED {
            return Err(ConfigError::invalid("max_speed", format!("must exceed {DEFAULT_MIN_SPEED}")));
        }
        positive("rate", self.rate)?;
        positive("radio_range", self.radio_range)?;
        if self.n_sources > self.n_nodes {
            return Err(ConfigError::invalid("n_sources", "exceeds n_nodes"));
        }
        if self.n_sources > 0 && self.n_nodes < 2 {
            return Err(ConfigError::invalid("n_nodes", "flows need at least two nodes"));
        }
        if self.payload == 0 {
            return Err(ConfigError::invalid("payload", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::invalid("seeds", "must not be empty"));
        }
        if self.pause_times.is_empty() {
            return Err(ConfigError::invalid("pause_times", "must not be empty"));
        }
        if self.pause_times.iter().any(|&p| !(0.0..=self.duration).contains(&p)) {
            return Err(ConfigError::invalid("pause_times", "must lie within [0, duration]"));
        }
        if self.protocols.is_empty() {
            return Err(ConfigError::invalid("protocol", "must not be empty"));
        }
        if self.bandwidth == 0 {
            return Err(ConfigError::invalid("bandwidth", "must be positive"));
        }
        if self.max_mac_retries == 0 {
            return Err(ConfigError::invalid("max_mac_retries", "must be positive"));
        }
        if self.ifq_capacity == 0 {
            return Err(ConfigError::invalid("ifq_capacity", "must be positive"));
        }
        for (key, v) in [("rreq_jitter", self.rreq_jitter), ("delay_unit", self.delay_unit)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::invalid(key, "must be a non-negative number of seconds"));
            }
        }
        Ok(())
    }

    pub fn dsr_config(&self) -> DsrConfig {
        DsrConfig {
            ring_zero: self.ring_zero,
            hr_mode: self.h_r_mode,
            rreq_jitter: SimTime::from_secs_f64(self.rreq_jitter),
            delay_unit: SimTime::from_secs_f64(self.delay_unit),
            ..DsrConfig::default()
        }
    }

    pub fn link_config(&self) -> LinkConfig {
        LinkConfig {
            radio_range: self.radio_range,
            bandwidth_bps: self.bandwidth,
            max_mac_retries: self.max_mac_retries,
            ifq_capacity: self.ifq_capacity,
            ..LinkConfig::default()
        }
    }
}

/// Mobility trace and flows for one (seed, pause time). Independent of the
/// protocol under test.
pub fn build_scenario(cfg: &ScenarioConfig, seed: u64, pause_time: f64) -> (WaypointTrace, Vec<Flow>) {
    let params = WaypointParams {
        width: cfg.width,
        height: cfg.height,
        n_nodes: cfg.n_nodes,
        max_speed: cfg.max_speed,
        min_speed: DEFAULT_MIN_SPEED,
        pause_time,
        duration: cfg.duration,
    };
    let trace = WaypointTrace::generate(&params, &mut RngStream::new(seed, "mobility"))
        .expect("validated configuration");
    let flows = build_flows(
        cfg.n_sources,
        cfg.n_nodes,
        cfg.rate,
        cfg.payload,
        cfg.duration,
        &mut RngStream::new(seed, "traffic"),
    )
    .expect("validated configuration");
    (trace, flows)
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub protocol: Protocol,
    pub pause_time: f64,
    pub seed: u64,
    pub result: RunResult,
}

/// Run every (protocol, pause time, seed) combination. Results come back
/// ordered by protocol, then pause time, then seed, whatever the thread
/// scheduling.
pub fn run_matrix(cfg: &ScenarioConfig, log: LogMode) -> Vec<RunRecord> {
    let mut jobs = Vec::new();
    for &protocol in &cfg.protocols {
        for &pause_time in &cfg.pause_times {
            for &seed in &cfg.seeds {
                jobs.push((protocol, pause_time, seed));
            }
        }
    }
    jobs
        .into_par_iter()
        .map(|(protocol, pause_time, seed)| {
            let (trace, flows) = build_scenario(cfg, seed, pause_time);
            let run_cfg = RunConfig {
                protocol,
                dsr: cfg.dsr_config(),
                link: cfg.link_config(),
                seed,
                log: log.clone(),
            };
            RunRecord {
                protocol,
                pause_time,
                seed,
                result: World::new(run_cfg, trace, flows).run(),
            }
        })
        .collect()
}

/// Ledgers grouped by (protocol, pause time).
pub fn group(records: &[RunRecord]) -> BTreeMap<(Protocol, PauseKey), Vec<&MetricsLedger>> {
    let mut out: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for r in records {
        out.entry((r.protocol, PauseKey(r.pause_time)))
            .or_default()
            .push(&r.result.ledger);
    }
    out
}

/// Pause time usable as an ordered map key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauseKey(pub f64);

impl Eq for PauseKey {}

impl PartialOrd for PauseKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PauseKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

fn pause(v: f64) -> String {
    format!("{v:.1}")
}

/// `protocol,pause_time,metric,mean,ci95,n`
pub fn metrics_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("protocol,pause_time,metric,mean,ci95,n\n");
    for ((protocol, p), ledgers) in group(records) {
        for m in METRICS {
            let Some(s) = summarize_metric(&ledgers, m.name) else {
                let _ = writeln!(out, "{},{},{},,,0", protocol, pause(p.0), m.name);
                continue;
            };
            let ci = s.half_width_95.map(num).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{},{}", protocol, pause(p.0), m.name, num(s.mean), ci, s.n_runs);
        }
    }
    out
}

fn min_pause(records: &[RunRecord]) -> Option<f64> {
    records.iter().map(|r| r.pause_time).min_by(f64::total_cmp)
}

/// `protocol,reason,count`: drops summed over all seeds at the smallest
/// pause time, one row per reason plus a total.
pub fn drops_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("protocol,reason,count\n");
    let Some(p0) = min_pause(records) else { return out };
    let mut by_protocol: BTreeMap<Protocol, MetricsLedger> = BTreeMap::new();
    for r in records.iter().filter(|r| r.pause_time == p0) {
        let acc = by_protocol.entry(r.protocol).or_default();
        for reason in DropReason::ALL {
            for _ in 0..r.result.ledger.drops(reason) {
                acc.drop_packet(reason);
            }
        }
    }
    for (protocol, l) in by_protocol {
        for reason in DropReason::ALL {
            let _ = writeln!(out, "{},{},{}", protocol, reason.label(), l.drops(reason));
        }
        let _ = writeln!(out, "{},Total,{}", protocol, l.total_drops());
    }
    out
}

/// Routing-overhead classes in composition order.
pub const COMPOSITION: [TxClass; 5] = [
    TxClass::Rreq,
    TxClass::CachedRrep,
    TxClass::TargetRrep,
    TxClass::GratuitousRrep,
    TxClass::Rerr,
];

/// `protocol,pause_time,kind,count`: mean transmissions per run.
pub fn composition_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("protocol,pause_time,kind,count\n");
    for ((protocol, p), ledgers) in group(records) {
        for class in COMPOSITION {
            let mean = ledgers.iter().map(|l| l.tx(class) as f64).sum::<f64>() / ledgers.len() as f64;
            let _ = writeln!(out, "{},{},{},{}", protocol, pause(p.0), class.short(), num(mean));
        }
    }
    out
}

/// Pooled cache hit rate per protocol over the runs at the smallest pause
/// time.
pub fn cache_hit_rates(records: &[RunRecord]) -> BTreeMap<Protocol, Option<f64>> {
    let mut acc: BTreeMap<Protocol, (u64, u64)> = BTreeMap::new();
    if let Some(p0) = min_pause(records) {
        for r in records.iter().filter(|r| r.pause_time == p0) {
            let e = acc.entry(r.protocol).or_default();
            e.0 += r.result.ledger.cache_hits;
            e.1 += r.result.ledger.cache_hits + r.result.ledger.cache_misses;
        }
    }
    acc.into_iter()
        .map(|(p, (h, n))| (p, (n > 0).then(|| h as f64 / n as f64)))
        .collect()
}

/// `protocol,n_nodes,cache_hit_rate`
pub fn cache_hit_csv(records: &[RunRecord], n_nodes: usize) -> String {
    let mut out = String::from("protocol,n_nodes,cache_hit_rate\n");
    for (protocol, rate) in cache_hit_rates(records) {
        let _ = writeln!(out, "{},{},{}", protocol, n_nodes, rate.map(num).unwrap_or_default());
    }
    out
}

fn run_stem(r: &RunRecord) -> String {
    let proto = match r.protocol {
        Protocol::Dsr => "dsr",
        Protocol::DsrS => "dsr_s",
    };
    format!("{}_p{}_s{}", proto, r.pause_time, r.seed)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), ConfigError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| ConfigError::Output { path, source })
}

/// Write every CSV, plus per-run event logs when they were recorded and
/// scenario exports when asked for.
pub fn write_outputs(
    cfg: &ScenarioConfig,
    records: &[RunRecord],
    out: &Path,
    export_scenarios: bool,
) -> Result<(), ConfigError> {
    let mkdir = |p: &Path| {
        fs::create_dir_all(p).map_err(|source| ConfigError::Output {
            path: p.to_path_buf(),
            source,
        })
    };
    mkdir(out)?;
    write(out, "metrics.csv", &metrics_csv(records))?;
    write(out, "drops.csv", &drops_csv(records))?;
    write(out, "composition.csv", &composition_csv(records))?;
    write(out, "cache_hit.csv", &cache_hit_csv(records, cfg.n_nodes))?;
    if records.iter().any(|r| !r.result.log.is_empty()) {
        let logs = out.join("logs");
        mkdir(&logs)?;
        for r in records {
            write(&logs, &format!("{}.log", run_stem(r)), &r.result.log_text())?;
        }
    }
    if export_scenarios {
        let dir = out.join("scenarios");
        mkdir(&dir)?;
        let mut done = Vec::new();
        for r in records {
            if done.contains(&(r.seed, PauseKey(r.pause_time))) {
                continue;
            }
            done.push((r.seed, PauseKey(r.pause_time)));
            let (trace, flows) = build_scenario(cfg, r.seed, r.pause_time);
            let stem = format!("p{}_s{}", r.pause_time, r.seed);
            write(&dir, &format!("{stem}.trace"), &trace.export())?;
            write(&dir, &format!("{stem}.flows"), &export(&flows))?;
        }
    }
    Ok(())
}

/// Runs whose packet accounting did not balance.
pub fn unbalanced(records: &[RunRecord]) -> Vec<&RunRecord> {
    records.iter().filter(|r| !r.result.conserved).collect()
}
