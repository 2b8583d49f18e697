//! The simulation world: car-following mobility, ground-truth event
//! injection, range-limited broadcast and the per-vehicle decision
//! machinery, advanced one beacon tick at a time.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decision::{
    beta_gate, bf_decide, bp_step, dat_decide, vp_decide, BetaGateConfig, BpMessage,
    BpObservation, BpState, Decision, Method, Report, RpMessage,
};
use crate::evidence::Cause;
use crate::ids::{SegmentId, VehicleId};
use crate::rules::RuleBook;
use thiserror::Error;

use super::classifier::classify_surrogate;
use super::log::{CauseCode, EventLog, LogRecord, MethodCode, Payload};
use super::network::RoadNetwork;
use super::scenario::ScenarioConfig;

pub const VEHICLE_LENGTH: f64 = 4.5;
/// Standstill gap in metres.
const MIN_GAP: f64 = 2.0;
/// Time headway of the car-following rule, seconds.
const HEADWAY: f64 = 1.0;
const BLOCKER_SPACING: f64 = 7.0;
/// A spawn is deferred while another vehicle sits this close to entry.
const ENTRY_CLEARANCE: f64 = 7.0;

const SALT_PENETRATION: u64 = 0x7065_6e65;
const SALT_CLASSIFIER: u64 = 0x636c_6173;
const SALT_NOISE: u64 = 0x6e6f_6973;
const SALT_ROUTE: u64 = 0x726f_7574;
const SALT_ARRIVALS: u64 = 0x6172_7276;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of seed/id/counter tuples; behaviour drawn from
/// it is independent of everything else that happened in the run.
fn mix(parts: &[u64]) -> u64 {
    let mut h = 0u64;
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("vehicle {0} is not equipped and cannot transmit")]
    UnequippedSender(VehicleId),
    #[error("unknown vehicle {0}")]
    UnknownVehicle(VehicleId),
}

/// One detection episode on the current segment.
#[derive(Clone, Debug)]
struct Trigger {
    onset: f64,
    vector: crate::evidence::CauseVector,
    /// Waiting period before cooperation (beta-DAT only; zero otherwise).
    beta: f64,
    initiated: bool,
    last_broadcast: f64,
}

#[derive(Clone, Debug)]
struct Vehicle {
    id: u64,
    equipped: bool,
    blocker: bool,
    segment: SegmentId,
    offset: f64,
    speed: f64,
    v_mult: f64,
    route: Vec<SegmentId>,
    route_idx: usize,
    entered_network_at: f64,
    segment_entered_at: f64,
    distance: f64,
    entry_count: u64,
    classify_count: u64,
    gap: Option<f64>,
    trigger: Option<Trigger>,
    spurious_at: Option<f64>,
    collected: BTreeMap<SegmentId, Vec<Report>>,
    decisions: BTreeMap<SegmentId, Decision>,
    bp_state: BpState,
    bp_inbox: Vec<BpInboxItem>,
    rp_adopted: BTreeSet<SegmentId>,
    rp_relayed: BTreeSet<(u64, u32)>,
}

impl Vehicle {
    fn next_segment(&self) -> Option<SegmentId> {
        self.route.get(self.route_idx + 1).copied()
    }
}

#[derive(Clone, Debug)]
enum BpInboxItem {
    Rq(crate::decision::RqMessage),
    RelayRp(RpMessage),
}

enum Outgoing {
    Report { sender: u64, report: Report },
    Bp { sender: u64, msg: BpMessage },
}

struct EventState {
    started: bool,
    ended: bool,
    blockers: Vec<u64>,
}

pub struct World {
    cfg: ScenarioConfig,
    net: RoadNetwork,
    seed: u64,
    tick: u64,
    ticks_total: u64,
    dt: f64,
    stats_every: u64,
    vehicles: BTreeMap<u64, Vehicle>,
    next_vehicle: u64,
    arrivals_rng: ChaCha8Rng,
    pending_entries: BTreeMap<u32, u32>,
    event_state: Vec<EventState>,
    /// Current (speed factor, gap factor) from active weather events.
    weather: (f64, f64),
    /// Positions snapshot (x, y, id, equipped), sorted by (x, id).
    snapshot: Vec<(f64, f64, u64, bool)>,
    log: EventLog,
}

impl World {
    pub fn new(cfg: ScenarioConfig, seed: u64) -> World {
        let net = cfg.network.build();
        let dt = cfg.comms.beacon_interval;
        let ticks_total = (cfg.demand.horizon / dt).round() as u64;
        let stats_every = (cfg.comms.stats_log_interval / dt).round().max(1.0) as u64;
        let event_state = cfg
            .events
            .iter()
            .map(|_| EventState {
                started: false,
                ended: false,
                blockers: Vec::new(),
            })
            .collect();
        let log = EventLog::new(cfg.id.clone(), seed, cfg.method.method);
        World {
            net,
            seed,
            tick: 0,
            ticks_total,
            dt,
            stats_every,
            vehicles: BTreeMap::new(),
            next_vehicle: 0,
            arrivals_rng: ChaCha8Rng::seed_from_u64(mix(&[seed, SALT_ARRIVALS])),
            pending_entries: BTreeMap::new(),
            event_state,
            weather: (1.0, 1.0),
            snapshot: Vec::new(),
            log,
            cfg,
        }
    }

    pub fn now(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn finished(&self) -> bool {
        self.tick > self.ticks_total
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    /// Advances the world by one beacon tick.
    pub fn step(&mut self) {
        let t = self.now();
        self.update_events(t);
        self.move_vehicles(t);
        self.spawn_arrivals(t);
        self.build_snapshot();
        if self.tick % self.stats_every == 0 {
            self.log_beacon_stats(t);
        }
        self.run_methods(t);
        self.tick += 1;
    }

    fn push_log(&mut self, time: f64, vehicle: u64, segment: SegmentId, payload: Payload) {
        self.log.push(LogRecord {
            time,
            vehicle: VehicleId(vehicle),
            segment,
            payload,
        });
    }

    // -- events ------------------------------------------------------------

    fn update_events(&mut self, t: f64) {
        for i in 0..self.cfg.events.len() {
            let ev = self.cfg.events[i].clone();
            if !self.event_state[i].started && t >= ev.start {
                self.event_state[i].started = true;
                if matches!(ev.kind, Cause::Incident | Cause::Workzone) {
                    let seg = self.net.segment(ev.segment);
                    let head = ev.position.fraction() * seg.length;
                    let mut blockers = Vec::new();
                    for k in 0..ev.stopped_vehicles {
                        let offset = (head - k as f64 * BLOCKER_SPACING).max(1.0);
                        let id = self.spawn_blocker(ev.segment, offset, t);
                        blockers.push(id);
                    }
                    self.event_state[i].blockers = blockers;
                }
            }
            if self.event_state[i].started && !self.event_state[i].ended && t >= ev.end() {
                self.event_state[i].ended = true;
                let blockers = std::mem::take(&mut self.event_state[i].blockers);
                for id in blockers {
                    if let Some(v) = self.vehicles.remove(&id) {
                        self.push_log(t, id, v.segment, Payload::Depart);
                    }
                }
            }
        }
        // weather factors from currently active weather events
        let mut speed = 1.0f64;
        let mut gap = 1.0f64;
        for (i, ev) in self.cfg.events.iter().enumerate() {
            if ev.kind == Cause::Weather && self.event_state[i].started && !self.event_state[i].ended
            {
                speed = speed.min(ev.speed_factor);
                gap = gap.max(ev.gap_factor);
            }
        }
        self.weather = (speed, gap);
    }

    /// The active event, if any, that explains congestion on `segment`:
    /// weather is global, other events cover themselves and everything
    /// upstream (their queue side).
    fn truth_for(&self, segment: SegmentId, t: f64) -> Option<Cause> {
        self.cfg.events.iter().find_map(|ev| {
            let covers = ev.kind == Cause::Weather
                || self.net.is_upstream_of_or_same(segment, ev.segment);
            (ev.active_at(t) && covers).then_some(ev.kind)
        })
    }

    // -- vehicles ----------------------------------------------------------

    fn spawn_blocker(&mut self, segment: SegmentId, offset: f64, t: f64) -> u64 {
        let id = self.next_vehicle;
        self.next_vehicle += 1;
        self.vehicles.insert(
            id,
            Vehicle {
                id,
                equipped: false,
                blocker: true,
                segment,
                offset,
                speed: 0.0,
                v_mult: 1.0,
                route: vec![segment],
                route_idx: 0,
                entered_network_at: t,
                segment_entered_at: t,
                distance: 0.0,
                entry_count: 0,
                classify_count: 0,
                gap: None,
                trigger: None,
                spurious_at: None,
                collected: BTreeMap::new(),
                decisions: BTreeMap::new(),
                bp_state: BpState::idle(self.cfg.method.retention),
                bp_inbox: Vec::new(),
                rp_adopted: BTreeSet::new(),
                rp_relayed: BTreeSet::new(),
            },
        );
        self.push_log(t, id, segment, Payload::Arrive { equipped: false });
        id
    }

    fn draw_route(&self, id: u64, from: SegmentId) -> (Vec<SegmentId>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[self.seed, SALT_ROUTE, id]));
        let v_mult = 0.9 + 0.2 * rng.gen::<f64>();
        let mut route = vec![from];
        let mut current = from;
        loop {
            let options = &self.net.segment(current).downstream;
            if options.is_empty() {
                break;
            }
            let next = if options.len() == 1 {
                options[0]
            } else if rng.gen::<f64>() < 0.7 {
                options[0] // straight ahead is listed first
            } else {
                options[1 + rng.gen_range(0..options.len() - 1)]
            };
            route.push(next);
            current = next;
        }
        (route, v_mult)
    }

    fn draw_spurious(&self, id: u64, entry_count: u64, t: f64) -> Option<f64> {
        let u = unit_f64(mix(&[self.seed, SALT_NOISE, id, entry_count]));
        (u < self.cfg.method.spontaneous_rate)
            .then(|| t + 5.0 + 10.0 * unit_f64(mix(&[self.seed, SALT_NOISE, id, entry_count, 1])))
    }

    fn spawn_vehicle(&mut self, segment: SegmentId, t: f64) {
        let id = self.next_vehicle;
        self.next_vehicle += 1;
        let equipped =
            unit_f64(mix(&[self.seed, SALT_PENETRATION, id])) < self.cfg.comms.penetration;
        let (route, v_mult) = self.draw_route(id, segment);
        let spurious_at = self.draw_spurious(id, 0, t);
        self.vehicles.insert(
            id,
            Vehicle {
                id,
                equipped,
                blocker: false,
                segment,
                offset: 0.0,
                speed: self.net.segment(segment).free_flow_speed * v_mult * self.weather.0,
                v_mult,
                route,
                route_idx: 0,
                entered_network_at: t,
                segment_entered_at: t,
                distance: 0.0,
                entry_count: 0,
                classify_count: 0,
                gap: None,
                trigger: None,
                spurious_at,
                collected: BTreeMap::new(),
                decisions: BTreeMap::new(),
                bp_state: BpState::idle(self.cfg.method.retention),
                bp_inbox: Vec::new(),
                rp_adopted: BTreeSet::new(),
                rp_relayed: BTreeSet::new(),
            },
        );
        self.push_log(t, id, segment, Payload::Arrive { equipped });
    }

    fn entry_clear(&self, segment: SegmentId) -> bool {
        self.vehicles
            .values()
            .filter(|v| v.segment == segment)
            .all(|v| v.offset > ENTRY_CLEARANCE)
    }

    fn spawn_arrivals(&mut self, t: f64) {
        // recurrent events scale the base demand while active
        let mut rate = self.cfg.demand.arrival_rate;
        for (i, ev) in self.cfg.events.iter().enumerate() {
            if ev.kind == Cause::Recurrent && self.event_state[i].started && !self.event_state[i].ended
            {
                rate *= ev.demand_multiplier;
            }
        }
        for entry in self.net.entry_segments() {
            let u: f64 = self.arrivals_rng.gen();
            if u < rate * self.dt {
                *self.pending_entries.entry(entry.0).or_insert(0) += 1;
            }
        }
        // special events feed extra demand straight into their segment
        for (i, ev) in self.cfg.events.iter().enumerate() {
            if ev.kind == Cause::SpecialEvent
                && self.event_state[i].started
                && !self.event_state[i].ended
            {
                let u: f64 = self.arrivals_rng.gen();
                if u < ev.ingress_rate * self.dt {
                    *self.pending_entries.entry(ev.segment.0).or_insert(0) += 1;
                }
            }
        }
        let pending: Vec<u32> = self
            .pending_entries
            .iter()
            .filter(|(_, n)| **n > 0)
            .map(|(s, _)| *s)
            .collect();
        for seg in pending {
            if self.entry_clear(SegmentId(seg)) {
                self.spawn_vehicle(SegmentId(seg), t);
                *self.pending_entries.get_mut(&seg).unwrap() -= 1;
            }
        }
    }

    // -- mobility ----------------------------------------------------------

    fn move_vehicles(&mut self, t: f64) {
        if self.vehicles.is_empty() {
            return;
        }
        let (weather_speed, weather_gap) = self.weather;
        let mut occupancy: BTreeMap<u32, Vec<(u64, f64)>> = BTreeMap::new();
        for v in self.vehicles.values() {
            occupancy
                .entry(v.segment.0)
                .or_default()
                .push((v.id, v.offset));
        }
        for list in occupancy.values_mut() {
            list.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        }

        let mut rear_after: Vec<Option<f64>> = vec![None; self.net.len()];
        let mut departed: Vec<u64> = Vec::new();
        let mut entered: Vec<(u64, SegmentId)> = Vec::new();

        for seg_id in self.net.downstream_first() {
            let Some(list) = occupancy.get(&seg_id.0) else {
                continue;
            };
            let seg_len = self.net.segment(seg_id).length;
            let free_flow = self.net.segment(seg_id).free_flow_speed;
            let mut prev: Option<(SegmentId, f64)> = None;
            for &(vid, old_offset) in list {
                let (blocker, v_mult, next_seg) = {
                    let v = &self.vehicles[&vid];
                    (v.blocker, v.v_mult, v.next_segment())
                };
                if blocker {
                    let settle = old_offset.min(seg_len);
                    rear_after[seg_id.0 as usize] = Some(
                        rear_after[seg_id.0 as usize].map_or(settle, |r| r.min(settle)),
                    );
                    prev = Some((seg_id, settle));
                    continue;
                }

                let lead_gap = match prev {
                    Some((ls, lo)) if ls == seg_id => Some(lo - VEHICLE_LENGTH - old_offset),
                    Some((ls, lo)) if Some(ls) == next_seg => {
                        Some(seg_len - old_offset + lo - VEHICLE_LENGTH)
                    }
                    _ => next_seg.and_then(|ns| {
                        rear_after[ns.0 as usize]
                            .map(|r| seg_len - old_offset + r - VEHICLE_LENGTH)
                    }),
                };
                // weather scales the whole desired gap, so the equilibrium
                // following distance is gap_factor * (standstill + headway)
                let vmax = v_mult * free_flow * weather_speed;
                let v_des = match lead_gap {
                    Some(g) => vmax.min(((g / weather_gap - MIN_GAP) / HEADWAY).max(0.0)),
                    None => vmax,
                };
                let mut new_off = old_offset + v_des * self.dt;
                if let Some((ls, lo)) = prev {
                    if ls == seg_id {
                        new_off = new_off.min(lo - VEHICLE_LENGTH - 0.1);
                    }
                }
                new_off = new_off.max(old_offset);

                let mut final_seg = seg_id;
                let mut final_off = new_off;
                let mut depart = false;
                if new_off >= seg_len {
                    match next_seg {
                        None => depart = true,
                        Some(ns) => {
                            let allowed = rear_after[ns.0 as usize]
                                .map(|r| r - VEHICLE_LENGTH - 0.1)
                                .unwrap_or(f64::MAX);
                            if allowed <= 0.05 {
                                // target entry occupied: hold at the end
                                final_off = seg_len - 0.05;
                            } else {
                                final_seg = ns;
                                final_off = (new_off - seg_len).min(allowed).max(0.0);
                            }
                        }
                    }
                }

                let moved = if depart {
                    seg_len - old_offset
                } else if final_seg == seg_id {
                    final_off - old_offset
                } else {
                    (seg_len - old_offset) + final_off
                };

                {
                    let v = self.vehicles.get_mut(&vid).unwrap();
                    v.speed = moved / self.dt;
                    v.distance += moved;
                    v.gap = lead_gap.filter(|g| *g <= self.cfg.comms.gap_sensing_range && *g >= 0.0);
                    if !depart {
                        v.segment = final_seg;
                        v.offset = final_off;
                    }
                }
                if depart {
                    departed.push(vid);
                } else {
                    rear_after[final_seg.0 as usize] = Some(
                        rear_after[final_seg.0 as usize].map_or(final_off, |r| r.min(final_off)),
                    );
                    prev = Some((final_seg, final_off));
                    if final_seg != seg_id {
                        entered.push((vid, final_seg));
                    }
                }
            }
        }

        for (vid, seg) in entered {
            let retention = self.cfg.method.retention;
            let (entry_count, spurious_at) = {
                let v = self.vehicles.get_mut(&vid).unwrap();
                v.route_idx += 1;
                v.segment_entered_at = t;
                v.entry_count += 1;
                v.trigger = None;
                v.bp_state = BpState::idle(retention);
                (v.entry_count, v.id)
            };
            let spurious = self.draw_spurious(spurious_at, entry_count, t);
            self.vehicles.get_mut(&vid).unwrap().spurious_at = spurious;
            self.push_log(t, vid, seg, Payload::Enter);
        }
        for vid in departed {
            if let Some(v) = self.vehicles.remove(&vid) {
                self.push_log(t, vid, v.segment, Payload::Depart);
            }
        }
    }

    // -- communication -----------------------------------------------------

    fn build_snapshot(&mut self) {
        self.snapshot.clear();
        for v in self.vehicles.values() {
            let (x, y) = self.net.segment(v.segment).position(v.offset);
            self.snapshot.push((x, y, v.id, v.equipped));
        }
        self.snapshot
            .sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.2.cmp(&b.2)));
    }

    /// Equipped vehicles within radio range of the sender, in id order.
    /// The broadcast contract: same-tick, lossless, equipped-only.
    pub fn recipients_in_range(&self, sender: VehicleId) -> Result<Vec<VehicleId>, SimError> {
        let v = self
            .vehicles
            .get(&sender.0)
            .ok_or(SimError::UnknownVehicle(sender))?;
        if !v.equipped {
            return Err(SimError::UnequippedSender(sender));
        }
        let (sx, sy) = self.net.segment(v.segment).position(v.offset);
        let range = self.cfg.comms.radio_range;
        let lo = self
            .snapshot
            .partition_point(|&(x, _, _, _)| x < sx - range);
        let mut out = Vec::new();
        for &(x, y, id, equipped) in &self.snapshot[lo..] {
            if x > sx + range {
                break;
            }
            if !equipped || id == sender.0 {
                continue;
            }
            let (dx, dy) = (x - sx, y - sy);
            if (dx * dx + dy * dy).sqrt() <= range {
                out.push(VehicleId(id));
            }
        }
        out.sort();
        Ok(out)
    }

    fn count_equipped_in_range(&self, vid: u64) -> u32 {
        self.recipients_in_range(VehicleId(vid))
            .map(|r| r.len() as u32)
            .unwrap_or(0)
    }

    fn log_beacon_stats(&mut self, t: f64) {
        let ids: Vec<u64> = self
            .vehicles
            .values()
            .filter(|v| v.equipped && !v.blocker)
            .map(|v| v.id)
            .collect();
        for id in ids {
            let demand = self.count_equipped_in_range(id);
            let v = &self.vehicles[&id];
            let elapsed = t - v.entered_network_at;
            let trajectory_speed = if elapsed > 0.0 {
                v.distance / elapsed
            } else {
                v.speed
            };
            let payload = Payload::BeaconStats {
                travel_time: t - v.segment_entered_at,
                speed: trajectory_speed,
                demand,
                gap: v.gap,
            };
            let seg = v.segment;
            self.push_log(t, id, seg, payload);
        }
    }

    // -- detection and decisions --------------------------------------------

    fn run_methods(&mut self, t: f64) {
        let method = self.cfg.method.method;
        let ids: Vec<u64> = self
            .vehicles
            .values()
            .filter(|v| v.equipped && !v.blocker)
            .map(|v| v.id)
            .collect();
        let mut outbox: Vec<Outgoing> = Vec::new();

        for id in ids {
            let seg_id = self.vehicles[&id].segment;
            let free_flow_tt = self.net.segment(seg_id).free_flow_tt();
            let threshold = self.cfg.method.threshold_factor * free_flow_tt;
            let travel_time = t - self.vehicles[&id].segment_entered_at;
            let congested_now = travel_time > threshold;

            // trigger a new detection episode
            if self.vehicles[&id].trigger.is_none() {
                let spurious_due = self.vehicles[&id]
                    .spurious_at
                    .map_or(false, |st| t >= st);
                if congested_now || spurious_due {
                    let truth = self.truth_for(seg_id, t);
                    let k = self.vehicles[&id].classify_count;
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(mix(&[self.seed, SALT_CLASSIFIER, id, k]));
                    let vector = classify_surrogate(truth, &self.cfg.classifier, &mut rng);
                    let beta = if method == Method::BetaDat {
                        if self.cfg.method.beta_adaptive {
                            BetaGateConfig::Adaptive {
                                link_journey_time: travel_time.max(free_flow_tt),
                            }
                            .effective_beta()
                        } else {
                            self.cfg.method.beta
                        }
                    } else {
                        0.0
                    };
                    {
                        let v = self.vehicles.get_mut(&id).unwrap();
                        v.classify_count += 1;
                        v.spurious_at = None;
                        v.trigger = Some(Trigger {
                            onset: t,
                            vector,
                            beta,
                            initiated: false,
                            last_broadcast: f64::NEG_INFINITY,
                        });
                    }
                    self.push_log(
                        t,
                        id,
                        seg_id,
                        Payload::CongestionDetected {
                            observed: travel_time,
                            free_flow: free_flow_tt,
                        },
                    );
                }
            }

            // initiation, gating and re-broadcast
            let mut bp_obs: Vec<BpObservation> = Vec::new();
            let rebroadcast = self.cfg.method.rebroadcast_interval;
            if let Some(trig) = self.vehicles.get_mut(&id).and_then(|v| v.trigger.as_mut()) {
                match method {
                    Method::Bp => {
                        if !trig.initiated {
                            trig.initiated = true;
                            bp_obs.push(BpObservation::CongestionClassified {
                                cause: trig.vector.argmax(),
                            });
                        }
                    }
                    Method::Vp | Method::Bf | Method::Dat | Method::BetaDat => {
                        let gate_open = method != Method::BetaDat
                            || beta_gate(t, trig.onset, &BetaGateConfig::Fixed { beta: trig.beta });
                        if !trig.initiated {
                            if gate_open {
                                if method == Method::BetaDat && !congested_now {
                                    // condition dissipated while waiting
                                    self.vehicles.get_mut(&id).unwrap().trigger = None;
                                } else {
                                    trig.initiated = true;
                                    trig.last_broadcast = t;
                                    let report = Report::new(
                                        VehicleId(id),
                                        seg_id,
                                        t,
                                        trig.vector,
                                        self.cfg.classifier.ignorance,
                                    )
                                    .expect("surrogate vectors are valid");
                                    outbox.push(Outgoing::Report { sender: id, report });
                                }
                            }
                        } else if rebroadcast > 0.0
                            && congested_now
                            && t - trig.last_broadcast >= rebroadcast
                        {
                            trig.last_broadcast = t;
                            let report = Report::new(
                                VehicleId(id),
                                seg_id,
                                t,
                                trig.vector,
                                self.cfg.classifier.ignorance,
                            )
                            .expect("surrogate vectors are valid");
                            outbox.push(Outgoing::Report { sender: id, report });
                        }
                    }
                }
            }

            // BP automaton: drain the inbox and step
            if method == Method::Bp {
                let inbox = std::mem::take(&mut self.vehicles.get_mut(&id).unwrap().bp_inbox);
                let mut relays: Vec<RpMessage> = Vec::new();
                for item in inbox {
                    match item {
                        BpInboxItem::Rq(rq) => bp_obs.push(BpObservation::RqReceived(rq)),
                        BpInboxItem::RelayRp(rp) => relays.push(rp),
                    }
                }
                let state = self.vehicles[&id].bp_state.clone();
                let outcome = bp_step(&state, VehicleId(id), seg_id, &bp_obs, t);
                self.vehicles.get_mut(&id).unwrap().bp_state = outcome.state;
                for msg in outcome.messages {
                    match &msg {
                        BpMessage::Rq(rq) => {
                            self.push_log(
                                t,
                                id,
                                rq.segment,
                                Payload::Rq {
                                    cause: CauseCode(rq.cause),
                                    created_at: rq.created_at,
                                    origin: rq.origin.0,
                                },
                            );
                        }
                        BpMessage::Rp(rp) => {
                            self.push_log(
                                t,
                                id,
                                rp.segment,
                                Payload::Rp {
                                    cause: CauseCode(rp.cause),
                                    origin: rp.origin.0,
                                    rq_created_at: rp.rq_created_at,
                                },
                            );
                            self.adopt_rp(id, rp.clone(), t);
                        }
                    }
                    outbox.push(Outgoing::Bp { sender: id, msg });
                }
                for rp in relays {
                    self.push_log(
                        t,
                        id,
                        rp.segment,
                        Payload::Rp {
                            cause: CauseCode(rp.cause),
                            origin: rp.origin.0,
                            rq_created_at: rp.rq_created_at,
                        },
                    );
                    outbox.push(Outgoing::Bp {
                        sender: id,
                        msg: BpMessage::Rp(rp),
                    });
                }
            }
        }

        // deliver everything queued this tick
        for out in outbox {
            match out {
                Outgoing::Report { sender, report } => self.deliver_report(sender, report, t),
                Outgoing::Bp { sender, msg } => self.deliver_bp(sender, msg, t),
            }
        }
    }

    fn adopt_rp(&mut self, vid: u64, rp: RpMessage, t: f64) {
        let adopted = {
            let v = self.vehicles.get_mut(&vid).unwrap();
            if v.rp_adopted.contains(&rp.segment) {
                false
            } else {
                v.rp_adopted.insert(rp.segment);
                v.decisions
                    .insert(rp.segment, Decision::bp(rp.cause, t, rp.segment));
                true
            }
        };
        if adopted {
            self.push_log(
                t,
                vid,
                rp.segment,
                Payload::Decision {
                    method: MethodCode(Method::Bp),
                    cause: CauseCode(rp.cause),
                    confidence: 1.0,
                },
            );
        }
    }

    fn deliver_report(&mut self, sender: u64, report: Report, t: f64) {
        let (top, second) = report.vector.top_two();
        let initiation = report.time == t
            && self.vehicles[&sender]
                .collected
                .get(&report.segment)
                .map_or(true, |list| list.iter().all(|r| r.sender.0 != sender));
        self.push_log(
            t,
            sender,
            report.segment,
            Payload::ReportSent {
                cause: CauseCode(top),
                second: CauseCode(second),
                confidence: report.vector.get(top),
                initiation,
            },
        );
        let recipients = self
            .recipients_in_range(VehicleId(sender))
            .expect("sender is equipped");
        self.ingest_report(sender, &report, t);
        for r in recipients {
            self.push_log(
                t,
                r.0,
                report.segment,
                Payload::ReportReceived { from: sender },
            );
            self.ingest_report(r.0, &report, t);
        }
    }

    /// Adds a report to a vehicle's collection (latest per sender wins),
    /// prunes by the retention horizon and recomputes the decision.
    fn ingest_report(&mut self, vid: u64, report: &Report, t: f64) {
        let method = self.cfg.method.method;
        let horizon = self.cfg.method.report_horizon;
        let combination = self.cfg.method.combination;
        let decision = {
            let v = self.vehicles.get_mut(&vid).unwrap();
            let list = v.collected.entry(report.segment).or_default();
            let before = list.len();
            let mut refreshed_same = false;
            list.retain(|r| {
                if r.sender == report.sender {
                    refreshed_same = r.vector == report.vector;
                    false
                } else {
                    true
                }
            });
            let replaced = list.len() < before;
            list.push(report.clone());
            let len_before_prune = list.len();
            list.retain(|r| t - r.time <= horizon);
            let pruned = list.len() < len_before_prune;
            if replaced && refreshed_same && !pruned && v.decisions.contains_key(&report.segment) {
                // pure refresh: evidence set unchanged
                return;
            }
            let list = &v.collected[&report.segment];
            match method {
                Method::Vp => vp_decide(list),
                Method::Bf => bf_decide(list, combination),
                Method::Dat | Method::BetaDat => dat_decide(
                    list,
                    self.cfg.method.rulebook.as_ref().unwrap_or(empty_rulebook()),
                    combination,
                ),
                Method::Bp => unreachable!("BP does not ingest reports"),
            }
        };
        let Ok(decision) = decision else {
            return;
        };
        let v = self.vehicles.get_mut(&vid).unwrap();
        let changed = v
            .decisions
            .get(&report.segment)
            .map_or(true, |prev| prev.cause != decision.cause);
        v.decisions.insert(report.segment, decision);
        if changed {
            self.push_log(
                t,
                vid,
                report.segment,
                Payload::Decision {
                    method: MethodCode(method),
                    cause: CauseCode(decision.cause),
                    confidence: decision.confidence,
                },
            );
        }
    }

    fn deliver_bp(&mut self, sender: u64, msg: BpMessage, t: f64) {
        let recipients = self
            .recipients_in_range(VehicleId(sender))
            .expect("sender is equipped");
        match msg {
            BpMessage::Rq(rq) => {
                for r in recipients {
                    self.vehicles
                        .get_mut(&r.0)
                        .unwrap()
                        .bp_inbox
                        .push(BpInboxItem::Rq(rq.clone()));
                }
            }
            BpMessage::Rp(rp) => {
                for r in recipients {
                    self.adopt_rp(r.0, rp.clone(), t);
                    let v = self.vehicles.get_mut(&r.0).unwrap();
                    // vehicles on or adjacent to the RP's segment carry it on once
                    let seg = v.segment;
                    let adjacent = seg == rp.segment
                        || self.net.segment(rp.segment).upstream.contains(&seg)
                        || self.net.segment(rp.segment).downstream.contains(&seg);
                    let key = (rp.origin.0, rp.segment.0);
                    if adjacent && !v.rp_relayed.contains(&key) {
                        v.rp_relayed.insert(key);
                        v.bp_inbox.push(BpInboxItem::RelayRp(rp.clone()));
                    }
                }
            }
        }
    }
}

fn empty_rulebook() -> &'static RuleBook {
    static EMPTY: std::sync::OnceLock<RuleBook> = std::sync::OnceLock::new();
    EMPTY.get_or_init(RuleBook::empty)
}

/// Travel-time congestion test: observed strictly above factor x free-flow.
pub fn detect_excessive_congestion(observed_tt: f64, free_flow_tt: f64, factor: f64) -> bool {
    observed_tt > factor * free_flow_tt
}

/// Runs a scenario to its horizon and returns the complete log.
/// Bit-identical for identical (scenario, seed).
pub fn run(scenario: &ScenarioConfig, seed: u64) -> EventLog {
    let mut world = World::new(scenario.clone(), seed);
    while !world.finished() {
        world.step();
    }
    world.into_log()
}
