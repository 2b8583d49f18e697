//! Per-vehicle decision procedures mapping collected reports on a road
//! segment to a cause decision.
//!
//! Five methods are compared: the BP baseline (a retain-then-propagate
//! state machine over RQ/RP messages), the voting procedure VP, belief
//! fusion BF (combine all report masses, pignistic, argmax), DAT (BF
//! followed by mined correction rules) and beta-DAT (DAT behind a
//! waiting gate, handled by the simulator via [`beta_gate`]).

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::evidence::{
    self, combine_all, mass_from_cause_vector, pignistic, Cause, CauseVector, CombinationRule,
    EvidenceError, MassFunction,
};
use crate::ids::{SegmentId, VehicleId};
use crate::rules::RuleBook;

/// The decision method under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Bp,
    Vp,
    Bf,
    Dat,
    BetaDat,
}

pub const ALL_METHODS: [Method; 5] = [
    Method::Bp,
    Method::Vp,
    Method::Bf,
    Method::Dat,
    Method::BetaDat,
];

impl Method {
    /// True for methods that fuse broadcast reports (everything but BP).
    pub fn is_cooperative(self) -> bool {
        self != Method::Bp
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Bp => "BP",
            Method::Vp => "VP",
            Method::Bf => "BF",
            Method::Dat => "DAT",
            Method::BetaDat => "beta-DAT",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = DecisionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "bp" => Ok(Method::Bp),
            "vp" => Ok(Method::Vp),
            "bf" => Ok(Method::Bf),
            "dat" => Ok(Method::Dat),
            "beta-dat" | "betadat" | "bdat" => Ok(Method::BetaDat),
            other => Err(DecisionError::UnknownMethod(other.to_string())),
        }
    }
}

/// A broadcast congestion report: the sender's probability vector plus
/// the mass function derived from it, so each method reads what it needs.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub sender: VehicleId,
    pub segment: SegmentId,
    pub time: f64,
    pub vector: CauseVector,
    pub mass: MassFunction,
}

impl Report {
    /// Derives the mass function with the run's ignorance parameter.
    pub fn new(
        sender: VehicleId,
        segment: SegmentId,
        time: f64,
        vector: CauseVector,
        ignorance: f64,
    ) -> Result<Report, EvidenceError> {
        let mass = mass_from_cause_vector(&vector, ignorance)?;
        Ok(Report {
            sender,
            segment,
            time,
            vector,
            mass,
        })
    }
}

/// The outcome of running a decision method over a report collection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub cause: Cause,
    /// Winning vote share (VP), winning BetP (BF/DAT), or 1.0 (BP).
    pub confidence: f64,
    pub method: Method,
    pub decided_at: f64,
    pub segment: SegmentId,
}

impl Decision {
    /// A BP adoption: the propagated cause is carried as total knowledge.
    pub fn bp(cause: Cause, decided_at: f64, segment: SegmentId) -> Decision {
        Decision {
            cause,
            confidence: 1.0,
            method: Method::Bp,
            decided_at,
            segment,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DecisionError {
    #[error("no votes: report list is empty")]
    NoVotes,
    #[error("reports span multiple segments ({0} and {1})")]
    MixedSegments(SegmentId, SegmentId),
    #[error("total conflict among reports from {senders:?}")]
    TotalConflict { senders: Vec<VehicleId> },
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
}

fn check_reports(reports: &[Report]) -> Result<(SegmentId, f64), DecisionError> {
    let first = reports.first().ok_or(DecisionError::NoVotes)?;
    let mut latest = first.time;
    for r in reports {
        if r.segment != first.segment {
            return Err(DecisionError::MixedSegments(first.segment, r.segment));
        }
        latest = latest.max(r.time);
    }
    Ok((first.segment, latest))
}

/// Voting procedure: count each report's top cause, highest count wins,
/// ties break toward the lower canonical index.
pub fn vp_decide(reports: &[Report]) -> Result<Decision, DecisionError> {
    let (segment, decided_at) = check_reports(reports)?;
    let mut counts = [0usize; 5];
    for r in reports {
        counts[r.vector.argmax().index()] += 1;
    }
    let best = counts.iter().copied().max().unwrap();
    let cause = evidence::ALL_CAUSES
        .into_iter()
        .find(|c| counts[c.index()] == best)
        .unwrap();
    Ok(Decision {
        cause,
        confidence: best as f64 / reports.len() as f64,
        method: Method::Vp,
        decided_at,
        segment,
    })
}

fn fused_betp(
    reports: &[Report],
    rule: CombinationRule,
) -> Result<CauseVector, DecisionError> {
    let masses: Vec<MassFunction> = reports.iter().map(|r| r.mass.clone()).collect();
    let total_conflict = |prefix_len: usize| DecisionError::TotalConflict {
        senders: reports
            .iter()
            .take(prefix_len)
            .map(|r| r.sender)
            .collect(),
    };
    let combined = combine_all(&masses, rule).map_err(|e| match e {
        EvidenceError::TotalConflict { prefix_len } => total_conflict(prefix_len),
        other => DecisionError::Evidence(other),
    })?;
    pignistic(&combined).map_err(|e| match e {
        EvidenceError::NoSurvivingBelief => total_conflict(reports.len()),
        other => DecisionError::Evidence(other),
    })
}

/// Belief fusion: combine all report masses, take the pignistic argmax.
pub fn bf_decide(reports: &[Report], rule: CombinationRule) -> Result<Decision, DecisionError> {
    let (segment, decided_at) = check_reports(reports)?;
    let betp = fused_betp(reports, rule)?;
    let cause = betp.argmax();
    Ok(Decision {
        cause,
        confidence: betp.get(cause),
        method: Method::Bf,
        decided_at,
        segment,
    })
}

/// DAT: belief fusion corrected by mined rules.
///
/// A correction rule {g, l} -> {l} applies when the fused winner is g
/// and l appears among the distinct top causes of the collected reports;
/// the first applicable rule in book order flips the decision to l with
/// confidence BetP(l), at most once. Plain association rules never flip.
/// With no applicable rule the result is exactly the BF decision.
pub fn dat_decide(
    reports: &[Report],
    rulebook: &RuleBook,
    rule: CombinationRule,
) -> Result<Decision, DecisionError> {
    let (segment, decided_at) = check_reports(reports)?;
    let betp = fused_betp(reports, rule)?;
    let winner = betp.argmax();

    let mut tops_present = [false; 5];
    for r in reports {
        tops_present[r.vector.argmax().index()] = true;
    }

    for r in rulebook.rules() {
        let (Some(guess), Some(label)) = (r.correction_guess(), r.correction_label()) else {
            continue;
        };
        if guess == winner && tops_present[label.index()] {
            return Ok(Decision {
                cause: label,
                confidence: betp.get(label),
                method: Method::Dat,
                decided_at,
                segment,
            });
        }
    }

    Ok(Decision {
        cause: winner,
        confidence: betp.get(winner),
        method: Method::Bf,
        decided_at,
        segment,
    })
}

/// Waiting-gate configuration for beta-DAT.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BetaGateConfig {
    /// Fixed waiting period in seconds.
    Fixed { beta: f64 },
    /// Beta adapts to twice the estimated link journey time at onset
    /// (half the four-journey-time upper bound).
    Adaptive { link_journey_time: f64 },
}

impl BetaGateConfig {
    pub fn effective_beta(&self) -> f64 {
        match *self {
            BetaGateConfig::Fixed { beta } => beta,
            BetaGateConfig::Adaptive { link_journey_time } => 2.0 * link_journey_time,
        }
    }
}

/// True once the waiting period since congestion onset has elapsed.
/// Beta zero reduces beta-DAT to DAT.
pub fn beta_gate(now: f64, congestion_onset: f64, cfg: &BetaGateConfig) -> bool {
    now - congestion_onset >= cfg.effective_beta()
}

/// Event Request: created by a detecting vehicle and propagated backwards.
#[derive(Clone, Debug, PartialEq)]
pub struct RqMessage {
    pub origin: VehicleId,
    pub segment: SegmentId,
    pub cause: Cause,
    pub created_at: f64,
}

/// Event Response: propagated to adjacent segments after retention,
/// carrying the cause with total knowledge.
#[derive(Clone, Debug, PartialEq)]
pub struct RpMessage {
    pub origin: VehicleId,
    pub segment: SegmentId,
    pub cause: Cause,
    pub emitted_at: f64,
    /// Creation time of the RQ this response answers.
    pub rq_created_at: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BpMessage {
    Rq(RqMessage),
    Rp(RpMessage),
}

/// What one BP vehicle observed this step.
#[derive(Clone, Debug, PartialEq)]
pub enum BpObservation {
    /// Own travel time crossed the threshold and the classifier ran.
    CongestionClassified { cause: Cause },
    /// An RQ arrived from another vehicle.
    RqReceived(RqMessage),
}

#[derive(Clone, Debug, PartialEq, Default)]
pub enum BpPhase {
    #[default]
    Idle,
    RqRetained {
        rq: RqMessage,
    },
    RpPropagated {
        cause: Cause,
    },
}

/// Per-segment BP state machine for one vehicle.
#[derive(Clone, Debug, PartialEq)]
pub struct BpState {
    pub phase: BpPhase,
    /// Minimum duration an RQ is retained before the RP goes out.
    pub retention: f64,
}

impl BpState {
    pub fn idle(retention: f64) -> BpState {
        BpState {
            phase: BpPhase::Idle,
            retention,
        }
    }
}

/// One step of the BP automaton.
#[derive(Clone, Debug, PartialEq)]
pub struct BpStepOutcome {
    pub state: BpState,
    pub messages: Vec<BpMessage>,
    /// Observations dropped because they concerned another segment.
    pub ignored: usize,
}

/// Advances the BP state machine for the vehicle's current segment.
///
/// Rule 3: the first classification or received RQ is retained (a
/// received RQ is re-propagated backwards once). Rule 4: once the
/// retention duration has elapsed since the RQ was created, the RP goes
/// out and the state is final for this segment episode. Further RQs
/// while retaining are de-duplicated.
pub fn bp_step(
    state: &BpState,
    vehicle: VehicleId,
    segment: SegmentId,
    observations: &[BpObservation],
    now: f64,
) -> BpStepOutcome {
    let mut phase = state.phase.clone();
    let mut messages = Vec::new();
    let mut ignored = 0;

    for obs in observations {
        match (&phase, obs) {
            (BpPhase::Idle, BpObservation::CongestionClassified { cause }) => {
                let rq = RqMessage {
                    origin: vehicle,
                    segment,
                    cause: *cause,
                    created_at: now,
                };
                messages.push(BpMessage::Rq(rq.clone()));
                phase = BpPhase::RqRetained { rq };
            }
            (BpPhase::Idle, BpObservation::RqReceived(rq)) => {
                if rq.segment == segment {
                    messages.push(BpMessage::Rq(rq.clone()));
                    phase = BpPhase::RqRetained { rq: rq.clone() };
                } else {
                    ignored += 1;
                }
            }
            // already retaining or done: duplicates carry nothing new
            _ => {}
        }
    }

    if let BpPhase::RqRetained { rq } = &phase {
        if now - rq.created_at >= state.retention {
            messages.push(BpMessage::Rp(RpMessage {
                origin: vehicle,
                segment: rq.segment,
                cause: rq.cause,
                emitted_at: now,
                rq_created_at: rq.created_at,
            }));
            phase = BpPhase::RpPropagated { cause: rq.cause };
        }
    }

    BpStepOutcome {
        state: BpState {
            phase,
            retention: state.retention,
        },
        messages,
        ignored,
    }
}
