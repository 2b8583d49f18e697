//! Evaluation indicators computed from event logs and ground truth:
//! estimation accuracy over time, detection time, false-alarm
//! percentage, gap percentiles and penetration-rate sweeps.
//!
//! All functions are pure post-processing over `(EventLog, truth)`;
//! sweeps and method comparisons fan runs out over a thread pool and
//! sort the results by their keys, so the output is independent of the
//! parallelism degree.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::decision::Method;
use crate::trafficsim::{run, EventLog, Payload, ScenarioConfig, ScenarioTruth};

/// Accuracy sampling cadence in seconds.
pub const SAMPLE_INTERVAL: f64 = 60.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("ground truth has no affected segments")]
    NoAffectedSegments,
    #[error("log contains no gap observations")]
    NoGapObservations,
    #[error("penetration rate {0} out of [0,1]")]
    RateOutOfRange(f64),
    #[error("metrics io error: {0}")]
    Io(String),
}

/// Fraction of equipped vehicles on affected segments whose current
/// decision matches the ground-truth cause, sampled over time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AccuracySeries {
    pub samples: Vec<(f64, f64)>,
}

impl AccuracySeries {
    pub fn final_value(&self) -> f64 {
        self.samples.last().map(|(_, f)| *f).unwrap_or(0.0)
    }
}

/// The three indicators plus gap percentile for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub scenario_id: String,
    pub method: Method,
    pub seed: u64,
    pub accuracy: AccuracySeries,
    pub final_accuracy: f64,
    pub detection_time: Option<f64>,
    pub false_alarm_pct: f64,
    pub gap_p85: Option<f64>,
}

/// Replayed per-vehicle state at a point in the log.
#[derive(Default)]
struct Replay {
    equipped: BTreeSet<u64>,
    present: BTreeMap<u64, u32>,
    latest_decision: BTreeMap<u64, crate::evidence::Cause>,
}

impl Replay {
    fn apply(&mut self, r: &crate::trafficsim::LogRecord) {
        let vid = r.vehicle.0;
        match &r.payload {
            Payload::Arrive { equipped } => {
                if *equipped {
                    self.equipped.insert(vid);
                }
                self.present.insert(vid, r.segment.0);
            }
            Payload::Enter => {
                self.present.insert(vid, r.segment.0);
            }
            Payload::Depart => {
                self.present.remove(&vid);
            }
            Payload::Decision { cause, .. } => {
                self.latest_decision.insert(vid, cause.0);
            }
            _ => {}
        }
    }
}

/// Samples accuracy every [`SAMPLE_INTERVAL`] seconds. The denominator
/// is the equipped vehicles standing on event-affected segments at the
/// sample time; a vehicle with no decision counts as inaccurate.
pub fn accuracy_series(
    log: &EventLog,
    truth: &ScenarioTruth,
) -> Result<AccuracySeries, MetricsError> {
    if truth.events.iter().all(|e| e.affected.is_empty()) {
        return Err(MetricsError::NoAffectedSegments);
    }
    let affected_kind: BTreeMap<u32, crate::evidence::Cause> = truth
        .events
        .iter()
        .flat_map(|ev| ev.affected.iter().map(|s| (s.0, ev.kind)))
        .collect();

    let n_samples = (truth.horizon / SAMPLE_INTERVAL).floor() as usize;
    let mut samples = Vec::with_capacity(n_samples + 1);
    let mut replay = Replay::default();
    let mut records = log.records().iter().peekable();
    for k in 0..=n_samples {
        let t = k as f64 * SAMPLE_INTERVAL;
        while let Some(r) = records.peek() {
            if r.time <= t {
                replay.apply(records.next().unwrap());
            } else {
                break;
            }
        }
        let mut denom = 0usize;
        let mut accurate = 0usize;
        for (&vid, seg) in &replay.present {
            if !replay.equipped.contains(&vid) {
                continue;
            }
            let Some(kind) = affected_kind.get(seg) else {
                continue;
            };
            denom += 1;
            if replay.latest_decision.get(&vid) == Some(kind) {
                accurate += 1;
            }
        }
        let fraction = if denom == 0 {
            0.0
        } else {
            accurate as f64 / denom as f64
        };
        samples.push((t, fraction));
    }
    Ok(AccuracySeries { samples })
}

/// Earliest time a correct collective decision is recorded on an
/// affected segment: a cooperative decision record for VP/BF/DAT, an RP
/// emission for BP. Times before the event start never count.
pub fn detection_time(log: &EventLog, truth: &ScenarioTruth) -> Option<f64> {
    for r in log.records() {
        for ev in &truth.events {
            if r.time < ev.start || !ev.affected.contains(&r.segment) {
                continue;
            }
            let correct = match &r.payload {
                Payload::Decision { method, cause, .. } => {
                    method.0.is_cooperative() && cause.0 == ev.kind
                }
                Payload::Rp { cause, .. } => cause.0 == ev.kind,
                _ => false,
            };
            if correct {
                return Some(r.time);
            }
        }
    }
    None
}

/// Per-segment congestion windows: the event span stretched by measured
/// queue persistence (congested beacon-stats after the event end).
fn congestion_windows(log: &EventLog, truth: &ScenarioTruth) -> BTreeMap<u32, Vec<(f64, f64)>> {
    let mut last_congested: BTreeMap<u32, f64> = BTreeMap::new();
    for r in log.records() {
        if let Payload::BeaconStats { travel_time, .. } = &r.payload {
            let seg = r.segment.0 as usize;
            if let Some(ff) = truth.freeflow_tt.get(seg) {
                if *travel_time > truth.threshold_factor * ff {
                    last_congested.insert(r.segment.0, r.time);
                }
            }
        }
    }
    let mut windows: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
    for ev in &truth.events {
        for seg in &ev.upstream {
            let mut end = ev.end;
            if let Some(&tau) = last_congested.get(&seg.0) {
                if tau > end {
                    end = tau;
                }
            }
            windows.entry(seg.0).or_default().push((ev.start, end));
        }
    }
    windows
}

/// Percentage of method initiations that fall outside every true
/// congestion window on their segment. Zero initiations count as zero.
pub fn false_alarm_rate(log: &EventLog, truth: &ScenarioTruth) -> f64 {
    let windows = congestion_windows(log, truth);
    let mut initiations = 0usize;
    let mut false_alarms = 0usize;
    for r in log.records() {
        let is_initiation = match &r.payload {
            Payload::ReportSent { initiation, .. } => *initiation,
            Payload::Rq { origin, .. } => *origin == r.vehicle.0,
            _ => false,
        };
        if !is_initiation {
            continue;
        }
        initiations += 1;
        let covered = windows
            .get(&r.segment.0)
            .map(|ws| ws.iter().any(|(a, b)| r.time >= *a && r.time <= *b))
            .unwrap_or(false);
        if !covered {
            false_alarms += 1;
        }
    }
    if initiations == 0 {
        0.0
    } else {
        100.0 * false_alarms as f64 / initiations as f64
    }
}

/// Nearest-rank percentile over all gap observations in the log.
pub fn gap_percentile(log: &EventLog, q: f64) -> Result<f64, MetricsError> {
    let mut gaps: Vec<f64> = log
        .records()
        .iter()
        .filter_map(|r| match &r.payload {
            Payload::BeaconStats { gap: Some(g), .. } => Some(*g),
            _ => None,
        })
        .collect();
    if gaps.is_empty() {
        return Err(MetricsError::NoGapObservations);
    }
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((q / 100.0) * gaps.len() as f64).ceil() as usize;
    Ok(gaps[rank.clamp(1, gaps.len()) - 1])
}

/// All indicators for one run. Scenarios without events yield an empty
/// accuracy series rather than an error.
pub fn compute_run_metrics(log: &EventLog, truth: &ScenarioTruth, seed: u64) -> RunMetrics {
    let accuracy = accuracy_series(log, truth).unwrap_or_default();
    RunMetrics {
        scenario_id: log.scenario_id.clone(),
        method: log.method.unwrap_or(Method::Vp),
        seed,
        final_accuracy: accuracy.final_value(),
        detection_time: detection_time(log, truth),
        false_alarm_pct: false_alarm_rate(log, truth),
        gap_p85: gap_percentile(log, 85.0).ok(),
        accuracy,
    }
}

fn run_with(scenario: &ScenarioConfig, method: Method, rate: Option<f64>, seed: u64) -> RunMetrics {
    let mut cfg = scenario.clone();
    cfg.method.method = method;
    if let Some(r) = rate {
        cfg.comms.penetration = r;
    }
    let truth = cfg.truth();
    let log = run(&cfg, seed);
    compute_run_metrics(&log, &truth, seed)
}

/// One sweep point: a penetration rate, a seed, and the run's metrics.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub rate: f64,
    pub seed: u64,
    pub metrics: RunMetrics,
}

/// Runs the full (rate x seed) cross product of a scenario with the
/// given method. Rows come back sorted by (rate, seed) regardless of
/// scheduling.
pub fn penetration_sweep(
    scenario: &ScenarioConfig,
    rates: &[f64],
    seeds: &[u64],
    method: Method,
) -> Result<Vec<SweepRow>, MetricsError> {
    for &r in rates {
        if !(0.0..=1.0).contains(&r) {
            return Err(MetricsError::RateOutOfRange(r));
        }
    }
    let grid: Vec<(f64, u64)> = rates
        .iter()
        .flat_map(|&r| seeds.iter().map(move |&s| (r, s)))
        .collect();
    let mut rows: Vec<SweepRow> = grid
        .par_iter()
        .map(|&(rate, seed)| SweepRow {
            rate,
            seed,
            metrics: run_with(scenario, method, Some(rate), seed),
        })
        .collect();
    rows.sort_by(|a, b| a.rate.partial_cmp(&b.rate).unwrap().then(a.seed.cmp(&b.seed)));
    Ok(rows)
}

/// Runs every (method, seed) pair of a comparison battery; results are
/// sorted by (method, seed).
pub fn compare_methods(
    scenario: &ScenarioConfig,
    methods: &[Method],
    seeds: &[u64],
) -> Vec<RunMetrics> {
    let grid: Vec<(Method, u64)> = methods
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();
    let mut rows: Vec<RunMetrics> = grid
        .par_iter()
        .map(|&(m, seed)| run_with(scenario, m, None, seed))
        .collect();
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.seed.cmp(&b.seed)));
    rows
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub fn stddev(values: &[f64]) -> f64 {
    match mean(values.iter().copied()) {
        Some(m) if values.len() > 1 => {
            let var =
                values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
            var.sqrt()
        }
        _ => 0.0,
    }
}

/// Per-method aggregate over a comparison battery.
#[derive(Clone, Debug)]
pub struct MethodSummary {
    pub scenario_id: String,
    pub method: Method,
    pub runs: usize,
    pub mean_detection_time: Option<f64>,
    pub mean_false_alarm_pct: f64,
    pub mean_final_accuracy: f64,
    pub std_final_accuracy: f64,
    /// Relative improvement in mean final accuracy over the BP baseline,
    /// in percent; zero for BP itself, absent when BP was not run.
    pub improvement_vs_bp_pct: Option<f64>,
}

pub fn summarize(rows: &[RunMetrics]) -> Vec<MethodSummary> {
    let mut by_method: BTreeMap<Method, Vec<&RunMetrics>> = BTreeMap::new();
    for r in rows {
        by_method.entry(r.method).or_default().push(r);
    }
    let bp_accuracy = by_method
        .get(&Method::Bp)
        .and_then(|rs| mean(rs.iter().map(|r| r.final_accuracy)));
    by_method
        .into_iter()
        .map(|(method, rs)| {
            let finals: Vec<f64> = rs.iter().map(|r| r.final_accuracy).collect();
            let mean_final = mean(finals.iter().copied()).unwrap_or(0.0);
            let improvement = match (method, bp_accuracy) {
                (Method::Bp, Some(_)) => Some(0.0),
                (_, Some(bp)) if bp > 0.0 => Some(100.0 * (mean_final - bp) / bp),
                _ => None,
            };
            MethodSummary {
                scenario_id: rs
                    .first()
                    .map(|r| r.scenario_id.clone())
                    .unwrap_or_default(),
                method,
                runs: rs.len(),
                mean_detection_time: mean(rs.iter().filter_map(|r| r.detection_time)),
                mean_false_alarm_pct: mean(rs.iter().map(|r| r.false_alarm_pct)).unwrap_or(0.0),
                mean_final_accuracy: mean_final,
                std_final_accuracy: stddev(&finals),
                improvement_vs_bp_pct: improvement,
            }
        })
        .collect()
}

fn io_err(e: impl std::fmt::Display) -> MetricsError {
    MetricsError::Io(e.to_string())
}

/// `accuracy.csv`: one row per sample per run.
pub fn write_accuracy_csv<W: Write>(w: W, rows: &[RunMetrics]) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", "method", "scenario", "seed", "fraction"])
        .map_err(io_err)?;
    for r in rows {
        for (t, f) in &r.accuracy.samples {
            out.write_record([
                t.to_string(),
                r.method.name().to_string(),
                r.scenario_id.clone(),
                r.seed.to_string(),
                f.to_string(),
            ])
            .map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

/// `summary.csv`: one row per method.
pub fn write_summary_csv<W: Write>(w: W, summaries: &[MethodSummary]) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "method",
        "scenario",
        "mean-detection-time",
        "mean-false-alarm-pct",
        "mean-final-accuracy",
        "improvement-vs-BP-pct",
    ])
    .map_err(io_err)?;
    for s in summaries {
        out.write_record([
            s.method.name().to_string(),
            s.scenario_id.clone(),
            s.mean_detection_time.map(|v| v.to_string()).unwrap_or_default(),
            s.mean_false_alarm_pct.to_string(),
            s.mean_final_accuracy.to_string(),
            s.improvement_vs_bp_pct
                .map(|v| v.to_string())
                .unwrap_or_default(),
        ])
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// `sweep.csv`: one row per (rate, seed) plus mean/stddev rows per rate.
pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "rate",
        "seed",
        "method",
        "scenario",
        "final-accuracy",
        "detection-time",
        "false-alarm-pct",
    ])
    .map_err(io_err)?;
    let mut by_rate: BTreeMap<String, Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        by_rate.entry(format!("{}", r.rate)).or_default().push(r);
        out.write_record([
            r.rate.to_string(),
            r.seed.to_string(),
            r.metrics.method.name().to_string(),
            r.metrics.scenario_id.clone(),
            r.metrics.final_accuracy.to_string(),
            r.metrics
                .detection_time
                .map(|v| v.to_string())
                .unwrap_or_default(),
            r.metrics.false_alarm_pct.to_string(),
        ])
        .map_err(io_err)?;
    }
    for (rate, rs) in by_rate {
        let finals: Vec<f64> = rs.iter().map(|r| r.metrics.final_accuracy).collect();
        let mean_det = mean(rs.iter().filter_map(|r| r.metrics.detection_time));
        let fa = mean(rs.iter().map(|r| r.metrics.false_alarm_pct)).unwrap_or(0.0);
        out.write_record([
            rate.clone(),
            "mean".to_string(),
            rs[0].metrics.method.name().to_string(),
            rs[0].metrics.scenario_id.clone(),
            mean(finals.iter().copied()).unwrap_or(0.0).to_string(),
            mean_det.map(|v| v.to_string()).unwrap_or_default(),
            fa.to_string(),
        ])
        .map_err(io_err)?;
        out.write_record([
            rate,
            "stddev".to_string(),
            rs[0].metrics.method.name().to_string(),
            rs[0].metrics.scenario_id.clone(),
            stddev(&finals).to_string(),
            String::new(),
            String::new(),
        ])
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
