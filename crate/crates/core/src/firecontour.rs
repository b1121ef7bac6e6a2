//! City-administration fire application and the fire contour algorithm (FCA).
//!
//! A sensor close to the fire reports alarms more often than a distant one.
//! The FCA inverts a rate model to turn per-sensor alarm rates into distance
//! estimates, then places a contour around the rate-weighted centroid of the
//! reporters.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AppId, NodeId, OverlayId, PeerId, Position, TaskId};
use crate::overlaynet::{GroupState, OverlayError, OverlayTable};
use crate::simkernel::{SimDuration, SimTime};
use crate::wirecodec::SenMLRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContourError {
    #[error("rate model parameters must be finite and positive (lambda_max={lambda_max}, range={range})")]
    BadParams { lambda_max: f64, range: f64 },
    #[error("distance {0} is negative or not finite")]
    BadDistance(f64),
    #[error("rate {rate} exceeds the model maximum {lambda_max}")]
    RateAboveMax { rate: f64, lambda_max: f64 },
    #[error("observation window must be positive")]
    EmptyWindow,
    #[error("{0} observations with a positive rate, need at least 3")]
    TooFewReports(usize),
    #[error("no position known for {0}")]
    UnknownPosition(NodeId),
    #[error("sector count must be positive")]
    NoSectors,
}

/// Parameters of the linear rate model: peak rate (1/s) and cutoff range (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub lambda_max: f64,
    pub range: f64,
}

impl RateParams {
    pub fn new(lambda_max: f64, range: f64) -> Result<Self, ContourError> {
        let p = RateParams { lambda_max, range };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ContourError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.lambda_max) && ok(self.range) {
            Ok(())
        } else {
            Err(ContourError::BadParams {
                lambda_max: self.lambda_max,
                range: self.range,
            })
        }
    }
}

/// Maps distance to an expected alarm rate and back.
pub trait RateModel {
    fn max_rate(&self) -> f64;
    fn expected_rate(&self, distance: f64) -> Result<f64, ContourError>;
    fn distance_for(&self, rate: f64) -> Result<f64, ContourError>;

    /// Like [`RateModel::distance_for`], but noisy rates above the maximum
    /// map to distance zero.
    fn distance_for_clamped(&self, rate: f64) -> f64 {
        self.distance_for(rate.clamp(0.0, self.max_rate()))
            .expect("clamped rate is in range")
    }
}

/// `rate = lambda_max * max(0, 1 - d / range)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearRateModel {
    pub params: RateParams,
}

impl LinearRateModel {
    pub fn new(params: RateParams) -> Result<Self, ContourError> {
        params.validate()?;
        Ok(LinearRateModel { params })
    }
}

impl RateModel for LinearRateModel {
    fn max_rate(&self) -> f64 {
        self.params.lambda_max
    }

    fn expected_rate(&self, distance: f64) -> Result<f64, ContourError> {
        rate_model(distance, &self.params)
    }

    fn distance_for(&self, rate: f64) -> Result<f64, ContourError> {
        distance_for_rate(rate, &self.params)
    }
}

pub fn rate_model(distance: f64, params: &RateParams) -> Result<f64, ContourError> {
    params.validate()?;
    if !(distance.is_finite() && distance >= 0.0) {
        return Err(ContourError::BadDistance(distance));
    }
    Ok(params.lambda_max * (1.0 - distance / params.range).max(0.0))
}

fn distance_for_rate(rate: f64, params: &RateParams) -> Result<f64, ContourError> {
    params.validate()?;
    if !(rate.is_finite() && rate >= 0.0) || rate > params.lambda_max {
        return Err(ContourError::RateAboveMax {
            rate,
            lambda_max: params.lambda_max,
        });
    }
    Ok(params.range * (1.0 - rate / params.lambda_max))
}

/// Inverse of [`rate_model`]. A zero rate maps to `range`, read as "at or
/// beyond range".
pub fn estimate_distance(obs: &RateObservation, params: &RateParams) -> Result<f64, ContourError> {
    distance_for_rate(obs.rate, params)
}

/// Alarm count of one sensor over a window ending at the observation time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateObservation {
    pub node: NodeId,
    #[serde(with = "crate::vruntime::millis", rename = "window_ms")]
    pub window: SimDuration,
    pub notification_count: u64,
    /// Notifications per second.
    pub rate: f64,
}

impl RateObservation {
    pub fn new(
        node: NodeId,
        window: SimDuration,
        notification_count: u64,
    ) -> Result<Self, ContourError> {
        if window.is_zero() {
            return Err(ContourError::EmptyWindow);
        }
        Ok(RateObservation {
            node,
            window,
            notification_count,
            rate: notification_count as f64 / window.as_secs_f64(),
        })
    }
}

/// Counts reports in `(now - window, now]`.
pub fn observe(
    node: NodeId,
    report_times: &[SimTime],
    now: SimTime,
    window: SimDuration,
) -> Result<RateObservation, ContourError> {
    let start = now.as_micros().saturating_sub(window.as_micros());
    let count = report_times
        .iter()
        .filter(|t| t.as_micros() > start && **t <= now)
        .count();
    RateObservation::new(node, window, count as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourPoint {
    /// Radians in `[0, 2π)`, counter-clockwise from +x.
    pub angle: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourEstimate {
    pub origin: Position,
    pub distances: BTreeMap<NodeId, f64>,
    /// One point per sector, ordered by angle.
    pub contour: Vec<ContourPoint>,
    pub confidence: f64,
}

fn sector_of(angle: f64, sectors: usize) -> usize {
    let a = angle.rem_euclid(TAU);
    ((a / TAU * sectors as f64).floor() as usize).min(sectors - 1)
}

/// Runs the FCA over one set of observations.
///
/// Each sensor's distance estimate is assigned to the angular sector it falls
/// in as seen from the origin; a sector's radius is the mean estimate of its
/// sensors. Empty sectors are filled by linear interpolation between the
/// nearest populated sectors on either side, wrapping around.
pub fn compute_contour(
    observations: &[RateObservation],
    positions: &BTreeMap<NodeId, Position>,
    model: &dyn RateModel,
    sectors: usize,
) -> Result<ContourEstimate, ContourError> {
    if sectors == 0 {
        return Err(ContourError::NoSectors);
    }
    let mut located = Vec::with_capacity(observations.len());
    for obs in observations {
        let pos = positions
            .get(&obs.node)
            .ok_or_else(|| ContourError::UnknownPosition(obs.node.clone()))?;
        located.push((obs, *pos));
    }
    let positive: Vec<_> = located.iter().filter(|(o, _)| o.rate > 0.0).collect();
    if positive.len() < 3 {
        return Err(ContourError::TooFewReports(positive.len()));
    }

    let total: f64 = positive.iter().map(|(o, _)| o.rate).sum();
    let origin = Position::new(
        positive.iter().map(|(o, p)| o.rate * p.x).sum::<f64>() / total,
        positive.iter().map(|(o, p)| o.rate * p.y).sum::<f64>() / total,
    );

    let mut distances = BTreeMap::new();
    let mut buckets = vec![(0.0, 0usize); sectors];
    for (obs, pos) in &located {
        let d = model.distance_for_clamped(obs.rate);
        distances.insert(obs.node.clone(), d);
        let angle = (pos.y - origin.y).atan2(pos.x - origin.x);
        let b = &mut buckets[sector_of(angle, sectors)];
        b.0 += d;
        b.1 += 1;
    }

    let filled: Vec<Option<f64>> = buckets
        .iter()
        .map(|&(sum, n)| (n > 0).then(|| sum / n as f64))
        .collect();
    let width = TAU / sectors as f64;
    let contour = (0..sectors)
        .map(|k| ContourPoint {
            angle: (k as f64 + 0.5) * width,
            radius: filled[k].unwrap_or_else(|| interpolate(&filled, k)),
        })
        .collect();

    Ok(ContourEstimate {
        origin,
        distances,
        contour,
        confidence: positive.len() as f64 / located.len() as f64,
    })
}

fn interpolate(filled: &[Option<f64>], k: usize) -> f64 {
    let n = filled.len();
    let prev = (1..n).find_map(|step| filled[(k + n - step) % n].map(|v| (step, v)));
    let next = (1..n).find_map(|step| filled[(k + step) % n].map(|v| (step, v)));
    match (prev, next) {
        (Some((a, va)), Some((b, vb))) => va + (vb - va) * a as f64 / (a + b) as f64,
        _ => unreachable!("at least one sector is populated"),
    }
}

/// `node,rate,estimated_distance_m` rows for offline plotting.
pub fn contour_csv(observations: &[RateObservation], estimate: &ContourEstimate) -> String {
    let mut out = String::from("node,rate,estimated_distance_m\n");
    for obs in observations {
        let d = estimate
            .distances
            .get(&obs.node)
            .copied()
            .unwrap_or(f64::NAN);
        out.push_str(&format!("{},{},{}\n", obs.node, obs.rate, d));
    }
    out
}

/// A fire alarm delivered to the application over Di.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FireEvent {
    pub reporter: NodeId,
    pub task_id: TaskId,
    pub reading: SenMLRecord,
    pub received_at: SimTime,
}

/// Group message multicast to overlay members.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FireNotification {
    pub round: u64,
    pub overlay_id: OverlayId,
    pub reporter: NodeId,
    pub alarm_task: TaskId,
    pub reading: f64,
    /// Rate observation window the peers should use, simulated ms.
    pub window_ms: f64,
}

/// A member's direct reply: rate observations of the sensors it manages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourReply {
    pub round: u64,
    pub peer: PeerId,
    pub observations: Vec<RateObservation>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FireError {
    #[error("overlay {0} is not ready")]
    OverlayNotReady(OverlayId),
    #[error(transparent)]
    Overlay(#[from] OverlayError),
    #[error("unknown round {0}")]
    UnknownRound(u64),
    #[error("{peer} is not expected to reply in round {round}")]
    UnexpectedReply { round: u64, peer: PeerId },
    #[error("round {round} still waits for {missing} replies")]
    IncompleteRound { round: u64, missing: usize },
}

/// One notify/collect exchange triggered by a fire event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FireRound {
    pub round: u64,
    pub reporter: NodeId,
    pub reporter_peer: PeerId,
    pub sent_at: SimTime,
    pub expected: BTreeSet<PeerId>,
    pub replies: BTreeMap<PeerId, (SimTime, Vec<RateObservation>)>,
}

impl FireRound {
    pub fn is_complete(&self) -> bool {
        self.expected.iter().all(|p| self.replies.contains_key(p))
    }

    /// Multicast send to last reply.
    pub fn fnd(&self) -> Result<SimDuration, FireError> {
        if !self.is_complete() {
            return Err(FireError::IncompleteRound {
                round: self.round,
                missing: self.expected.len() - self.replies.len(),
            });
        }
        let last = self
            .replies
            .values()
            .map(|(t, _)| *t)
            .max()
            .unwrap_or(self.sent_at);
        Ok(last.since(self.sent_at))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FireAction {
    /// Multicast `notification` to `recipients`.
    Notify {
        recipients: Vec<PeerId>,
        notification: FireNotification,
    },
    /// A round for this reporter started less than one debounce window ago.
    Debounced,
}

/// A finished round with the contour it produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundOutcome {
    pub round: FireRound,
    pub fnd: SimDuration,
    pub observations: Vec<RateObservation>,
    pub contour: Result<ContourEstimate, ContourError>,
}

/// The fire application, run by the overlay's rendezvous.
#[derive(Clone, Debug)]
pub struct FireContourApp {
    pub app_id: AppId,
    pub overlay_id: OverlayId,
    pub rendezvous: PeerId,
    model: LinearRateModel,
    window: SimDuration,
    debounce: SimDuration,
    sectors: usize,
    positions: BTreeMap<NodeId, Position>,
    alarms: BTreeMap<NodeId, Vec<SimTime>>,
    last_round: BTreeMap<NodeId, SimTime>,
    open: BTreeMap<u64, FireRound>,
    next_round: u64,
}

impl FireContourApp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        app_id: AppId,
        overlay_id: OverlayId,
        rendezvous: PeerId,
        model: LinearRateModel,
        window: SimDuration,
        debounce: SimDuration,
        sectors: usize,
        positions: BTreeMap<NodeId, Position>,
    ) -> Self {
        FireContourApp {
            app_id,
            overlay_id,
            rendezvous,
            model,
            window,
            debounce,
            sectors,
            positions,
            alarms: BTreeMap::new(),
            last_round: BTreeMap::new(),
            open: BTreeMap::new(),
            next_round: 0,
        }
    }

    pub fn window(&self) -> SimDuration {
        self.window
    }

    pub fn model(&self) -> &LinearRateModel {
        &self.model
    }

    pub fn sectors(&self) -> usize {
        self.sectors
    }

    pub fn positions(&self) -> &BTreeMap<NodeId, Position> {
        &self.positions
    }

    pub fn open_rounds(&self) -> impl Iterator<Item = &FireRound> {
        self.open.values()
    }

    pub fn alarm_times(&self, node: &NodeId) -> &[SimTime] {
        self.alarms.get(node).map_or(&[], Vec::as_slice)
    }

    /// Logs the alarm and, unless debounced, opens a round over the overlay.
    /// Every member except `reporter_peer` is expected to reply; the
    /// reporter's own rate comes from this application's alarm log.
    pub fn on_fire_event(
        &mut self,
        ev: &FireEvent,
        reporter_peer: &PeerId,
        overlays: &OverlayTable,
    ) -> Result<FireAction, FireError> {
        self.log_alarm(ev);
        let group = overlays
            .group(&self.overlay_id)
            .ok_or_else(|| FireError::OverlayNotReady(self.overlay_id.clone()))?;
        if group.state == GroupState::Forming {
            return Err(FireError::OverlayNotReady(self.overlay_id.clone()));
        }
        if self.debounced(ev) {
            return Ok(FireAction::Debounced);
        }
        let recipients = overlays.multicast(&self.overlay_id, &self.rendezvous)?;
        Ok(self.open_round(ev, reporter_peer, recipients))
    }

    /// Same as [`on_fire_event`](Self::on_fire_event) without an overlay:
    /// the application asks each of `peers` directly, skipping the reporter's.
    pub fn on_fire_event_direct(
        &mut self,
        ev: &FireEvent,
        reporter_peer: &PeerId,
        peers: &[PeerId],
    ) -> FireAction {
        self.log_alarm(ev);
        if self.debounced(ev) {
            return FireAction::Debounced;
        }
        let recipients = peers
            .iter()
            .filter(|p| *p != reporter_peer)
            .cloned()
            .collect();
        self.open_round(ev, reporter_peer, recipients)
    }

    fn log_alarm(&mut self, ev: &FireEvent) {
        self.alarms
            .entry(ev.reporter.clone())
            .or_default()
            .push(ev.received_at);
    }

    fn debounced(&self, ev: &FireEvent) -> bool {
        self.last_round
            .get(&ev.reporter)
            .is_some_and(|last| ev.received_at.since(*last) < self.debounce)
    }

    fn open_round(
        &mut self,
        ev: &FireEvent,
        reporter_peer: &PeerId,
        recipients: Vec<PeerId>,
    ) -> FireAction {
        let round = self.next_round;
        self.next_round += 1;
        self.last_round.insert(ev.reporter.clone(), ev.received_at);
        self.open.insert(
            round,
            FireRound {
                round,
                reporter: ev.reporter.clone(),
                reporter_peer: reporter_peer.clone(),
                sent_at: ev.received_at,
                expected: recipients
                    .iter()
                    .filter(|p| *p != reporter_peer)
                    .cloned()
                    .collect(),
                replies: BTreeMap::new(),
            },
        );
        FireAction::Notify {
            recipients,
            notification: FireNotification {
                round,
                overlay_id: self.overlay_id.clone(),
                reporter: ev.reporter.clone(),
                alarm_task: ev.task_id.clone(),
                reading: ev.reading.value,
                window_ms: self.window.as_millis_f64(),
            },
        }
    }

    /// Moves the round's start to the moment the multicast actually left.
    pub fn mark_sent(&mut self, round: u64, at: SimTime) -> Result<(), FireError> {
        self.open
            .get_mut(&round)
            .ok_or(FireError::UnknownRound(round))?
            .sent_at = at;
        Ok(())
    }

    /// Records a reply. Returns the outcome once the last expected reply is in.
    pub fn on_reply(
        &mut self,
        reply: ContourReply,
        at: SimTime,
    ) -> Result<Option<RoundOutcome>, FireError> {
        let entry = self
            .open
            .get_mut(&reply.round)
            .ok_or(FireError::UnknownRound(reply.round))?;
        if !entry.expected.contains(&reply.peer) || entry.replies.contains_key(&reply.peer) {
            return Err(FireError::UnexpectedReply {
                round: reply.round,
                peer: reply.peer,
            });
        }
        entry.replies.insert(reply.peer, (at, reply.observations));
        if !entry.is_complete() {
            return Ok(None);
        }
        let round = self.open.remove(&reply.round).expect("round is open");
        let fnd = round.fnd()?;
        let mut observations: Vec<RateObservation> = round
            .replies
            .values()
            .flat_map(|(_, o)| o.iter().cloned())
            .collect();
        if !observations.iter().any(|o| o.node == round.reporter) {
            observations.push(
                observe(
                    round.reporter.clone(),
                    self.alarm_times(&round.reporter),
                    at,
                    self.window,
                )
                .expect("window is positive"),
            );
        }
        observations.sort_by(|a, b| a.node.cmp(&b.node));
        let contour = compute_contour(&observations, &self.positions, &self.model, self.sectors);
        Ok(Some(RoundOutcome {
            round,
            fnd,
            observations,
            contour,
        }))
    }
}
