//! Cooperative estimation of the cause of urban traffic congestion.
//!
//! The crate has five parts:
//!
//! - [`evidence`] — belief functions over the fixed five-cause frame:
//!   mass validation, conjunctive and Dempster combination, conflict,
//!   the pignistic transform, and mass construction from classifier
//!   probability vectors.
//! - [`rules`] — association-rule mining (Apriori restricted to the
//!   two-item transactions vehicles produce), including the supervised
//!   variant that mines correction rules from mispredictions.
//! - [`decision`] — the five per-vehicle decision methods compared here:
//!   BP (back-propagation baseline), VP (voting), BF (belief fusion),
//!   DAT (BF plus mined rules) and beta-DAT (time-gated DAT).
//! - [`trafficsim`] — a deterministic discrete-event simulation of
//!   vehicles on a segmented road network with range-limited broadcast,
//!   ground-truth event injection and a surrogate classifier.
//! - [`metrics`] — accuracy series, detection time, false-alarm rate,
//!   gap percentiles and penetration sweeps computed from event logs.

pub mod decision;
pub mod evidence;
pub mod ids;
pub mod metrics;
pub mod rules;
pub mod trafficsim;
