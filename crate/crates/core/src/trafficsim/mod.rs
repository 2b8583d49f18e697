//! Deterministic discrete-event simulation of connected vehicles on a
//! segmented road network.
//!
//! One run advances a world in beacon-interval ticks: vehicles follow a
//! simplified car-following rule, ground-truth events inject congestion,
//! a surrogate classifier turns each detection into a cause vector, and
//! the configured decision method runs over range-limited broadcasts.
//! Everything observable ends up in an append-only [`EventLog`] that is
//! bit-identical for identical (scenario, seed) pairs.
//!
//! Determinism is seed-derived rather than stream-ordered wherever
//! possible: penetration draws, classifier noise, route choices and
//! spurious triggers are keyed on (seed, vehicle, counter) through a
//! splitmix hash, so the same vehicle behaves identically whatever the
//! method or penetration rate under test. Only the arrival process uses
//! a sequential stream, and its draw schedule is fixed by the scenario.

mod classifier;
mod log;
mod network;
mod scenario;
mod world;

pub use classifier::classify_surrogate;
pub use log::{CauseCode, EventLog, LogError, LogRecord, MethodCode, Payload, RecordKind};
pub use network::{RoadNetwork, Segment, Topology};
pub use scenario::{
    load_scenario, load_scenario_str, ClassifierSpec, CommsSpec, DemandSpec, EventPosition,
    GroundTruthEvent, MethodSpec, NetworkSpec, ScenarioConfig, ScenarioError, ScenarioTruth,
    TruthEvent,
};
pub use world::{detect_excessive_congestion, run, SimError, World, VEHICLE_LENGTH};
