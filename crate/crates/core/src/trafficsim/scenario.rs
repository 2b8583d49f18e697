//! Scenario files: structured plain text (TOML) with sections
//! `[network]`, `[demand]`, `[[events]]`, `[comms]`, `[classifier]` and
//! `[method]`. Loading validates every invariant and resolves the
//! optional rule book relative to the scenario file.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::decision::Method;
use crate::evidence::{Cause, CombinationRule, MASS_TOL};
use crate::ids::SegmentId;
use crate::rules::RuleBook;

use super::network::{RoadNetwork, Topology};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug)]
pub struct NetworkSpec {
    pub topology: Topology,
    pub rows: u32,
    pub cols: u32,
    pub segment_length: f64,
    pub free_flow_speed: f64,
}

impl NetworkSpec {
    pub fn build(&self) -> RoadNetwork {
        RoadNetwork::new(self.rows, self.cols, self.segment_length, self.free_flow_speed)
    }
}

#[derive(Clone, Debug)]
pub struct DemandSpec {
    /// Poisson arrival rate per entry segment, vehicles per second.
    pub arrival_rate: f64,
    /// Simulated horizon in seconds.
    pub horizon: f64,
}

#[derive(Clone, Debug)]
pub struct CommsSpec {
    pub penetration: f64,
    pub radio_range: f64,
    pub beacon_interval: f64,
    /// Cadence of beacon-stats log records; equals the beacon interval
    /// for strict-cadence runs, coarser for long batch runs.
    pub stats_log_interval: f64,
    /// Leader gaps beyond this are not observable.
    pub gap_sensing_range: f64,
}

#[derive(Clone, Debug)]
pub struct ClassifierSpec {
    pub ignorance: f64,
    /// Band the top cause's probability is drawn from.
    pub top_band: (f64, f64),
    /// Band used when the drawn top cause differs from the truth.
    pub wrong_top_band: (f64, f64),
    /// Probability that SpecialEvent ranks second under Incident or
    /// Workzone truths.
    pub se_second_bias: f64,
    /// Probability that the true cause ranks second when the top draw
    /// missed it (top-2 accuracy exceeding top-1 accuracy).
    pub truth_second_bias: f64,
    /// Row-stochastic confusion matrix, row = true cause.
    pub confusion: [[f64; 5]; 5],
    /// Governs the spurious cause when no event is active.
    pub none_row: [f64; 5],
}

#[derive(Clone, Debug)]
pub struct MethodSpec {
    pub method: Method,
    pub combination: CombinationRule,
    /// Congestion when observed travel time exceeds factor x free-flow.
    pub threshold_factor: f64,
    /// Spurious-trigger probability per segment entry.
    pub spontaneous_rate: f64,
    /// BP retention duration in seconds.
    pub retention: f64,
    /// beta-DAT fixed waiting period in seconds.
    pub beta: f64,
    /// When set, beta adapts to twice the link journey time at onset.
    pub beta_adaptive: bool,
    /// Reports older than this are dropped before deciding.
    pub report_horizon: f64,
    /// Congested vehicles repeat their report at this cadence; zero
    /// disables re-broadcast.
    pub rebroadcast_interval: f64,
    /// Radius of the impact region around an event, metres.
    pub impact_radius: f64,
    pub rulebook: Option<RuleBook>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventPosition {
    Beginning,
    Middle,
    End,
}

impl EventPosition {
    pub fn fraction(self) -> f64 {
        match self {
            EventPosition::Beginning => 0.1,
            EventPosition::Middle => 0.5,
            EventPosition::End => 0.9,
        }
    }
}

/// A ground-truth congestion source injected into the world.
#[derive(Clone, Debug)]
pub struct GroundTruthEvent {
    pub kind: Cause,
    pub segment: SegmentId,
    pub position: EventPosition,
    pub start: f64,
    pub duration: f64,
    /// Incident/workzone severity: vehicles stopped on the lane.
    pub stopped_vehicles: u32,
    /// Weather severity: global speed cap factor.
    pub speed_factor: f64,
    /// Weather severity: global desired-gap multiplier.
    pub gap_factor: f64,
    /// Special-event severity: extra Poisson ingress at the event
    /// segment, vehicles per second.
    pub ingress_rate: f64,
    /// Recurrent severity: multiplier on the base arrival rate.
    pub demand_multiplier: f64,
}

impl GroundTruthEvent {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn active_at(&self, t: f64) -> bool {
        t >= self.start && t < self.end()
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub id: String,
    pub network: NetworkSpec,
    pub demand: DemandSpec,
    pub comms: CommsSpec,
    pub classifier: ClassifierSpec,
    pub method: MethodSpec,
    pub events: Vec<GroundTruthEvent>,
}

// ---------------------------------------------------------------------------
// raw (serde) layer

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    id: Option<String>,
    network: RawNetwork,
    demand: RawDemand,
    comms: Option<RawComms>,
    classifier: Option<RawClassifier>,
    method: Option<RawMethod>,
    #[serde(default)]
    events: Vec<RawEvent>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    topology: Option<String>,
    segments: u32,
    rows: Option<u32>,
    segment_length: Option<f64>,
    free_flow_speed: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDemand {
    arrival_rate: f64,
    horizon: f64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawComms {
    penetration: Option<f64>,
    radio_range: Option<f64>,
    beacon_interval: Option<f64>,
    stats_log_interval: Option<f64>,
    gap_sensing_range: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawClassifier {
    ignorance: Option<f64>,
    top_band: Option<[f64; 2]>,
    wrong_top_band: Option<[f64; 2]>,
    se_second_bias: Option<f64>,
    truth_second_bias: Option<f64>,
    confusion: Option<Vec<Vec<f64>>>,
    none_row: Option<Vec<f64>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMethod {
    method: Option<String>,
    combination: Option<String>,
    threshold_factor: Option<f64>,
    spontaneous_rate: Option<f64>,
    retention: Option<f64>,
    beta: Option<f64>,
    beta_adaptive: Option<bool>,
    report_horizon: Option<f64>,
    rebroadcast_interval: Option<f64>,
    impact_radius: Option<f64>,
    rulebook: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    kind: String,
    segment: u32,
    position: Option<String>,
    start: f64,
    duration: f64,
    stopped_vehicles: Option<u32>,
    speed_factor: Option<f64>,
    gap_factor: Option<f64>,
    ingress_rate: Option<f64>,
    demand_multiplier: Option<f64>,
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

/// The default confusion matrix: mostly-correct classification with a
/// pronounced incident/workzone <-> recurrent confusion, which the mined
/// correction rules later exploit.
pub fn default_confusion() -> [[f64; 5]; 5] {
    [
        [0.62, 0.03, 0.03, 0.07, 0.25], // truth I
        [0.03, 0.62, 0.03, 0.07, 0.25], // truth Wo
        [0.04, 0.04, 0.78, 0.04, 0.10], // truth We
        [0.05, 0.05, 0.04, 0.76, 0.10], // truth SE
        [0.06, 0.06, 0.04, 0.04, 0.80], // truth Re
    ]
}

/// Loads and validates a scenario from TOML text. `id_fallback` is used
/// when the file carries no `id` key; `base_dir` resolves the rule book.
pub fn load_scenario_str(
    text: &str,
    id_fallback: &str,
    base_dir: Option<&Path>,
) -> Result<ScenarioConfig, ScenarioError> {
    let raw: RawScenario =
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;

    // network
    let topology = match raw.network.topology.as_deref().unwrap_or("corridor") {
        "corridor" => Topology::Corridor,
        "grid" => Topology::Grid,
        other => return Err(invalid(format!("unknown topology `{other}`"))),
    };
    let rows = match topology {
        Topology::Corridor => 1,
        Topology::Grid => raw.network.rows.unwrap_or(2),
    };
    if rows == 0 || raw.network.segments == 0 {
        return Err(invalid("network needs at least one row and one segment"));
    }
    let segment_length = raw.network.segment_length.unwrap_or(250.0);
    let free_flow_speed = raw.network.free_flow_speed.unwrap_or(13.9);
    if segment_length <= 0.0 {
        return Err(invalid(format!("segment length {segment_length} must be > 0")));
    }
    if free_flow_speed <= 0.0 {
        return Err(invalid(format!(
            "free-flow speed {free_flow_speed} must be > 0"
        )));
    }
    let network = NetworkSpec {
        topology,
        rows,
        cols: raw.network.segments,
        segment_length,
        free_flow_speed,
    };

    // demand
    if raw.demand.arrival_rate < 0.0 {
        return Err(invalid("arrival_rate must be >= 0"));
    }
    if raw.demand.horizon <= 0.0 {
        return Err(invalid("horizon must be > 0"));
    }
    let demand = DemandSpec {
        arrival_rate: raw.demand.arrival_rate,
        horizon: raw.demand.horizon,
    };

    // comms
    let rc = raw.comms.unwrap_or_default();
    let penetration = rc.penetration.unwrap_or(1.0);
    if !(0.0..=1.0).contains(&penetration) {
        return Err(invalid(format!("penetration out of range: {penetration}")));
    }
    let beacon_interval = rc.beacon_interval.unwrap_or(0.1);
    if beacon_interval <= 0.0 {
        return Err(invalid("beacon_interval must be > 0"));
    }
    let stats_log_interval = rc.stats_log_interval.unwrap_or(beacon_interval.max(1.0));
    if stats_log_interval + MASS_TOL < beacon_interval {
        return Err(invalid("stats_log_interval must be >= beacon_interval"));
    }
    let comms = CommsSpec {
        penetration,
        radio_range: rc.radio_range.unwrap_or(300.0),
        beacon_interval,
        stats_log_interval,
        gap_sensing_range: rc.gap_sensing_range.unwrap_or(60.0),
    };
    if comms.radio_range <= 0.0 || comms.gap_sensing_range <= 0.0 {
        return Err(invalid("radio_range and gap_sensing_range must be > 0"));
    }
    if demand.arrival_rate * beacon_interval > 1.0 {
        return Err(invalid(
            "arrival_rate too high for the beacon interval (expect at most one arrival per tick)",
        ));
    }

    // classifier
    let rcl = raw.classifier.unwrap_or_default();
    let band = |v: Option<[f64; 2]>, fallback: (f64, f64), name: &str| {
        let (lo, hi) = v.map(|b| (b[0], b[1])).unwrap_or(fallback);
        if !(0.21..=0.95).contains(&lo) || hi < lo || hi > 0.95 {
            return Err(invalid(format!(
                "{name} [{lo}, {hi}] must satisfy 0.21 <= lo <= hi <= 0.95"
            )));
        }
        Ok((lo, hi))
    };
    let top_band = band(rcl.top_band, (0.3, 0.7), "top_band")?;
    let wrong_top_band = band(rcl.wrong_top_band, top_band, "wrong_top_band")?;
    let parse_row = |row: &[f64], what: &str| -> Result<[f64; 5], ScenarioError> {
        if row.len() != 5 {
            return Err(invalid(format!("{what} must have 5 entries")));
        }
        let mut out = [0.0; 5];
        out.copy_from_slice(row);
        if out.iter().any(|p| *p < 0.0) {
            return Err(invalid(format!("{what} has a negative entry")));
        }
        Ok(out)
    };
    let confusion = match &rcl.confusion {
        None => default_confusion(),
        Some(rows_) => {
            if rows_.len() != 5 {
                return Err(invalid("confusion matrix must have 5 rows"));
            }
            let mut m = [[0.0; 5]; 5];
            for (i, row) in rows_.iter().enumerate() {
                m[i] = parse_row(row, &format!("confusion row {}", i + 1))?;
            }
            m
        }
    };
    for (i, row) in confusion.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(invalid(format!("confusion row {} sums to {sum}", i + 1)));
        }
    }
    let none_row = match &rcl.none_row {
        None => [0.2; 5],
        Some(row) => {
            let r = parse_row(row, "none_row")?;
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > MASS_TOL {
                return Err(invalid(format!("none_row sums to {sum}")));
            }
            r
        }
    };
    let ignorance = rcl.ignorance.unwrap_or(0.1);
    if !(0.0..1.0).contains(&ignorance) {
        return Err(invalid(format!("ignorance {ignorance} out of [0,1)")));
    }
    let se_second_bias = rcl.se_second_bias.unwrap_or(0.9);
    if !(0.0..=1.0).contains(&se_second_bias) {
        return Err(invalid("se_second_bias out of [0,1]"));
    }
    let truth_second_bias = rcl.truth_second_bias.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&truth_second_bias) {
        return Err(invalid("truth_second_bias out of [0,1]"));
    }
    let classifier = ClassifierSpec {
        ignorance,
        top_band,
        wrong_top_band,
        se_second_bias,
        truth_second_bias,
        confusion,
        none_row,
    };

    // method
    let rm = raw.method.unwrap_or_default();
    let method: Method = rm
        .method
        .as_deref()
        .unwrap_or("vp")
        .parse()
        .map_err(|e| invalid(format!("{e}")))?;
    let combination: CombinationRule = rm
        .combination
        .as_deref()
        .unwrap_or("conjunctive")
        .parse()
        .map_err(|_| invalid("combination must be `conjunctive` or `dempster`"))?;
    let rulebook = match &rm.rulebook {
        None => None,
        Some(rel) => {
            let path = match base_dir {
                Some(dir) => dir.join(rel),
                None => Path::new(rel).to_path_buf(),
            };
            Some(
                RuleBook::read_csv_path(&path)
                    .map_err(|e| invalid(format!("rulebook {}: {e}", path.display())))?,
            )
        }
    };
    let method = MethodSpec {
        method,
        combination,
        threshold_factor: rm.threshold_factor.unwrap_or(2.0),
        spontaneous_rate: rm.spontaneous_rate.unwrap_or(0.005),
        retention: rm.retention.unwrap_or(480.0),
        beta: rm.beta.unwrap_or(240.0),
        beta_adaptive: rm.beta_adaptive.unwrap_or(false),
        report_horizon: rm.report_horizon.unwrap_or(600.0),
        rebroadcast_interval: rm.rebroadcast_interval.unwrap_or(60.0),
        impact_radius: rm.impact_radius.unwrap_or(300.0),
        rulebook,
    };
    if method.threshold_factor <= 1.0 {
        return Err(invalid("threshold_factor must exceed 1"));
    }
    if !(0.0..=1.0).contains(&method.spontaneous_rate) {
        return Err(invalid("spontaneous_rate out of [0,1]"));
    }
    if method.retention < 0.0 || method.beta < 0.0 || method.report_horizon <= 0.0 {
        return Err(invalid("durations must be non-negative (report_horizon > 0)"));
    }

    // events
    let n_segments = (network.rows * network.cols) as u32;
    let mut events = Vec::with_capacity(raw.events.len());
    for (i, ev) in raw.events.iter().enumerate() {
        let kind: Cause = ev
            .kind
            .parse()
            .map_err(|e| invalid(format!("event {}: {e}", i + 1)))?;
        if ev.segment >= n_segments {
            return Err(invalid(format!(
                "event {}: segment {} outside the network",
                i + 1,
                ev.segment
            )));
        }
        let position = match ev.position.as_deref().unwrap_or("beginning") {
            "beginning" => EventPosition::Beginning,
            "middle" => EventPosition::Middle,
            "end" => EventPosition::End,
            other => return Err(invalid(format!("event {}: unknown position `{other}`", i + 1))),
        };
        if ev.start < 0.0 || ev.duration <= 0.0 {
            return Err(invalid(format!(
                "event {}: start must be >= 0 and duration > 0",
                i + 1
            )));
        }
        let speed_factor = ev.speed_factor.unwrap_or(0.55);
        let gap_factor = ev.gap_factor.unwrap_or(2.0);
        if !(0.05..=1.0).contains(&speed_factor) || gap_factor < 1.0 {
            return Err(invalid(format!(
                "event {}: speed_factor in [0.05,1], gap_factor >= 1",
                i + 1
            )));
        }
        let ingress_rate = ev.ingress_rate.unwrap_or(0.2);
        if ingress_rate < 0.0 || ingress_rate * comms.beacon_interval > 1.0 {
            return Err(invalid(format!("event {}: ingress_rate out of range", i + 1)));
        }
        events.push(GroundTruthEvent {
            kind,
            segment: SegmentId(ev.segment),
            position,
            start: ev.start,
            duration: ev.duration,
            stopped_vehicles: ev.stopped_vehicles.unwrap_or(3),
            speed_factor,
            gap_factor,
            ingress_rate,
            demand_multiplier: ev.demand_multiplier.unwrap_or(2.0),
        });
    }

    Ok(ScenarioConfig {
        id: raw.id.unwrap_or_else(|| id_fallback.to_string()),
        network,
        demand,
        comms,
        classifier,
        method,
        events,
    })
}

/// Loads a scenario file; the id falls back to the file stem and the
/// rule book is resolved relative to the file's directory.
pub fn load_scenario<P: AsRef<Path>>(path: P) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "scenario".to_string());
    load_scenario_str(&text, &stem, path.parent())
}

impl ScenarioConfig {
    /// Strips all ground-truth events; used for baseline comparison runs.
    pub fn without_events(&self) -> ScenarioConfig {
        let mut c = self.clone();
        c.events.clear();
        c
    }

    /// The ground-truth view handed to the metrics layer.
    pub fn truth(&self) -> ScenarioTruth {
        let net = self.network.build();
        let events = self
            .events
            .iter()
            .map(|ev| {
                let seg = net.segment(ev.segment);
                let point = seg.position(ev.position.fraction() * seg.length);
                let affected = if ev.kind == Cause::Weather {
                    net.segments().iter().map(|s| s.id).collect()
                } else {
                    net.segments()
                        .iter()
                        .filter(|s| {
                            s.id == ev.segment || {
                                // distance from the event point to the segment span
                                let dy = s.origin.1 - point.1;
                                let dx = if point.0 < s.origin.0 {
                                    s.origin.0 - point.0
                                } else if point.0 > s.origin.0 + s.length {
                                    point.0 - (s.origin.0 + s.length)
                                } else {
                                    0.0
                                };
                                (dx * dx + dy * dy).sqrt() <= self.method.impact_radius
                            }
                        })
                        .map(|s| s.id)
                        .collect()
                };
                let upstream = net
                    .segments()
                    .iter()
                    .filter(|s| {
                        ev.kind == Cause::Weather
                            || net.is_upstream_of_or_same(s.id, ev.segment)
                    })
                    .map(|s| s.id)
                    .collect();
                TruthEvent {
                    kind: ev.kind,
                    segment: ev.segment,
                    start: ev.start,
                    end: ev.end(),
                    affected,
                    upstream,
                }
            })
            .collect();
        ScenarioTruth {
            horizon: self.demand.horizon,
            threshold_factor: self.method.threshold_factor,
            freeflow_tt: net.segments().iter().map(|s| s.free_flow_tt()).collect(),
            events,
        }
    }
}

/// One event as the metrics layer sees it.
#[derive(Clone, Debug)]
pub struct TruthEvent {
    pub kind: Cause,
    pub segment: SegmentId,
    pub start: f64,
    pub end: f64,
    /// Segments inside the impact region (all segments for weather).
    pub affected: Vec<SegmentId>,
    /// Segments whose congestion the event can explain: itself plus
    /// everything upstream of it.
    pub upstream: Vec<SegmentId>,
}

/// Ground truth plus the scenario facts metrics need.
#[derive(Clone, Debug)]
pub struct ScenarioTruth {
    pub horizon: f64,
    pub threshold_factor: f64,
    /// Free-flow travel time per segment, indexed by segment id.
    pub freeflow_tt: Vec<f64>,
    pub events: Vec<TruthEvent>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [network]
        segments = 10

        [demand]
        arrival_rate = 0.1
        horizon = 600.0
    "#;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let cfg = load_scenario_str(MINIMAL, "mini", None).unwrap();
        assert_eq!(cfg.id, "mini");
        assert_eq!(cfg.network.cols, 10);
        assert_eq!(cfg.network.rows, 1);
        assert_eq!(cfg.comms.penetration, 1.0);
        assert_eq!(cfg.comms.radio_range, 300.0);
        assert_eq!(cfg.comms.beacon_interval, 0.1);
        assert_eq!(cfg.method.threshold_factor, 2.0);
        assert_eq!(cfg.method.method, Method::Vp);
        assert!(cfg.events.is_empty());
    }

    #[test]
    fn bad_confusion_row_is_named() {
        let text = format!(
            "{MINIMAL}\n[classifier]\nconfusion = [\n [0.2,0.2,0.2,0.2,0.2],\n [0.2,0.2,0.2,0.2,0.1],\n [0.2,0.2,0.2,0.2,0.2],\n [0.2,0.2,0.2,0.2,0.2],\n [0.2,0.2,0.2,0.2,0.2]]\n"
        );
        let err = load_scenario_str(&text, "x", None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2 sums to 0.9"), "{msg}");
    }

    #[test]
    fn penetration_out_of_range_is_rejected() {
        let text = format!("{MINIMAL}\n[comms]\npenetration = 1.5\n");
        let err = load_scenario_str(&text, "x", None).unwrap_err();
        assert!(err.to_string().contains("penetration out of range"));
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = load_scenario_str("[network]\nsegments = \"ten\"", "x", None).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)));
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn events_are_validated() {
        let text = format!(
            "{MINIMAL}\n[[events]]\nkind = \"I\"\nsegment = 99\nstart = 10.0\nduration = 10.0\n"
        );
        let err = load_scenario_str(&text, "x", None).unwrap_err();
        assert!(err.to_string().contains("outside the network"));

        let text = format!(
            "{MINIMAL}\n[[events]]\nkind = \"XX\"\nsegment = 1\nstart = 10.0\nduration = 10.0\n"
        );
        assert!(load_scenario_str(&text, "x", None).is_err());
    }

    #[test]
    fn truth_marks_impact_region_and_upstream() {
        let text = format!(
            "{MINIMAL}\n[[events]]\nkind = \"I\"\nsegment = 5\nposition = \"beginning\"\nstart = 100.0\nduration = 200.0\n"
        );
        let cfg = load_scenario_str(&text, "x", None).unwrap();
        let truth = cfg.truth();
        let ev = &truth.events[0];
        // event point x = 5*250 + 25 = 1275; radius 300 reaches 975..1575
        let affected: Vec<u32> = ev.affected.iter().map(|s| s.0).collect();
        assert_eq!(affected, vec![3, 4, 5, 6]);
        let upstream: Vec<u32> = ev.upstream.iter().map(|s| s.0).collect();
        assert_eq!(upstream, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(ev.end, 300.0);
    }

    #[test]
    fn weather_truth_covers_all_segments() {
        let text = format!(
            "{MINIMAL}\n[[events]]\nkind = \"We\"\nsegment = 2\nstart = 1.0\nduration = 2.0\n"
        );
        let truth = load_scenario_str(&text, "x", None).unwrap().truth();
        assert_eq!(truth.events[0].affected.len(), 10);
        assert_eq!(truth.events[0].upstream.len(), 10);
    }
}
