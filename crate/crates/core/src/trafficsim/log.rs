//! Append-only simulation log and its CSV export.
//!
//! One CSV row per record with the fixed schema
//! `time,vehicle,kind,segment,payload`, payload being a small JSON
//! object. Metadata (scenario, seed, method) rides in `#` comment lines
//! ahead of the header so a log file is self-describing.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::Method;
use crate::evidence::Cause;
use crate::ids::{SegmentId, VehicleId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordKind {
    Arrive,
    Enter,
    Depart,
    BeaconStats,
    CongestionDetected,
    ReportSent,
    ReportReceived,
    Decision,
    Rq,
    Rp,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Arrive => "arrive",
            RecordKind::Enter => "enter",
            RecordKind::Depart => "depart",
            RecordKind::BeaconStats => "beacon-stats",
            RecordKind::CongestionDetected => "congestion-detected",
            RecordKind::ReportSent => "report-sent",
            RecordKind::ReportReceived => "report-received",
            RecordKind::Decision => "decision",
            RecordKind::Rq => "rq",
            RecordKind::Rp => "rp",
        }
    }
}

/// Typed payload of one record; the variant determines the record kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "k")]
pub enum Payload {
    #[serde(rename = "arrive")]
    Arrive { equipped: bool },
    #[serde(rename = "enter")]
    Enter,
    #[serde(rename = "depart")]
    Depart,
    #[serde(rename = "beacon-stats")]
    BeaconStats {
        travel_time: f64,
        speed: f64,
        demand: u32,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        gap: Option<f64>,
    },
    #[serde(rename = "congestion-detected")]
    CongestionDetected { observed: f64, free_flow: f64 },
    #[serde(rename = "report-sent")]
    ReportSent {
        cause: CauseCode,
        second: CauseCode,
        confidence: f64,
        initiation: bool,
    },
    #[serde(rename = "report-received")]
    ReportReceived { from: u64 },
    #[serde(rename = "decision")]
    Decision {
        method: MethodCode,
        cause: CauseCode,
        confidence: f64,
    },
    #[serde(rename = "rq")]
    Rq {
        cause: CauseCode,
        created_at: f64,
        origin: u64,
    },
    #[serde(rename = "rp")]
    Rp {
        cause: CauseCode,
        origin: u64,
        rq_created_at: f64,
    },
}

impl Payload {
    pub fn kind(&self) -> RecordKind {
        match self {
            Payload::Arrive { .. } => RecordKind::Arrive,
            Payload::Enter => RecordKind::Enter,
            Payload::Depart => RecordKind::Depart,
            Payload::BeaconStats { .. } => RecordKind::BeaconStats,
            Payload::CongestionDetected { .. } => RecordKind::CongestionDetected,
            Payload::ReportSent { .. } => RecordKind::ReportSent,
            Payload::ReportReceived { .. } => RecordKind::ReportReceived,
            Payload::Decision { .. } => RecordKind::Decision,
            Payload::Rq { .. } => RecordKind::Rq,
            Payload::Rp { .. } => RecordKind::Rp,
        }
    }
}

/// Cause wrapper serializing as the short code ("I", "Wo", ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CauseCode(#[serde(with = "cause_code")] pub Cause);

mod cause_code {
    use super::Cause;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(c: &Cause, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(c.code())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Cause, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Method wrapper serializing as the display name ("BP", "beta-DAT", ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodCode(#[serde(with = "method_code")] pub Method);

mod method_code {
    use super::Method;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Method, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(m.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Method, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub time: f64,
    pub vehicle: VehicleId,
    pub segment: SegmentId,
    pub payload: Payload,
}

impl LogRecord {
    pub fn kind(&self) -> RecordKind {
        self.payload.kind()
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log io error: {0}")]
    Io(String),
    #[error("log parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },
}

/// The complete, time-ordered record of one simulation run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    pub scenario_id: String,
    pub seed: u64,
    pub method: Option<Method>,
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn new(scenario_id: String, seed: u64, method: Method) -> EventLog {
        EventLog {
            scenario_id,
            seed,
            method: Some(method),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: LogRecord) {
        debug_assert!(
            self.records
                .last()
                .map(|r| r.time <= record.time)
                .unwrap_or(true),
            "log timestamps must be non-decreasing"
        );
        self.records.push(record);
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), LogError> {
        let io = |e: std::io::Error| LogError::Io(e.to_string());
        writeln!(w, "# scenario={}", self.scenario_id).map_err(io)?;
        writeln!(w, "# seed={}", self.seed).map_err(io)?;
        if let Some(m) = self.method {
            writeln!(w, "# method={}", m.name()).map_err(io)?;
        }
        writeln!(w, "time,vehicle,kind,segment,payload").map_err(io)?;
        let mut out = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(w);
        for r in &self.records {
            let payload = serde_json::to_string(&r.payload)
                .map_err(|e| LogError::Io(e.to_string()))?;
            out.write_record([
                r.time.to_string(),
                r.vehicle.0.to_string(),
                r.kind().as_str().to_string(),
                r.segment.0.to_string(),
                payload,
            ])
            .map_err(|e| LogError::Io(e.to_string()))?;
        }
        out.flush().map_err(|e| LogError::Io(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<EventLog, LogError> {
        let mut log = EventLog::default();
        let mut body = String::new();
        for line in BufReader::new(reader).lines() {
            let line = line.map_err(|e| LogError::Io(e.to_string()))?;
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((key, value)) = rest.trim().split_once('=') {
                    match key {
                        "scenario" => log.scenario_id = value.to_string(),
                        "seed" => log.seed = value.parse().unwrap_or(0),
                        "method" => log.method = value.parse().ok(),
                        _ => {}
                    }
                }
                continue;
            }
            body.push_str(&line);
            body.push('\n');
        }
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        for (idx, rec) in rdr.records().enumerate() {
            let row = idx + 2;
            let rec = rec.map_err(|e| LogError::Parse {
                row,
                msg: e.to_string(),
            })?;
            let field = |i: usize, what: &str| {
                rec.get(i).ok_or_else(|| LogError::Parse {
                    row,
                    msg: format!("missing {what}"),
                })
            };
            let time: f64 = field(0, "time")?.parse().map_err(|_| LogError::Parse {
                row,
                msg: "bad time".into(),
            })?;
            let vehicle: u64 = field(1, "vehicle")?.parse().map_err(|_| LogError::Parse {
                row,
                msg: "bad vehicle".into(),
            })?;
            let segment: u32 = field(3, "segment")?.parse().map_err(|_| LogError::Parse {
                row,
                msg: "bad segment".into(),
            })?;
            let payload: Payload =
                serde_json::from_str(field(4, "payload")?).map_err(|e| LogError::Parse {
                    row,
                    msg: e.to_string(),
                })?;
            if payload.kind().as_str() != field(2, "kind")? {
                return Err(LogError::Parse {
                    row,
                    msg: "kind column does not match payload".into(),
                });
            }
            log.records.push(LogRecord {
                time,
                vehicle: VehicleId(vehicle),
                segment: SegmentId(segment),
                payload,
            });
        }
        Ok(log)
    }
}
