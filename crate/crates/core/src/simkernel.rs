//! Deterministic discrete-event core.
//!
//! A [`Kernel`] owns the virtual clock, a totally ordered event queue, one
//! mailbox per registered node and the link model. Nothing advances the clock
//! except dispatching an event (or [`Kernel::run_until`] reaching its horizon),
//! so every delay measured on top of it is reproducible from the seed alone.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::fmt;
use std::ops::{Add, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::NodeId;

/// Microseconds since simulation start.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1_000_000.0
    }

    /// Elapsed time since `earlier`, zero if `earlier` is in the future.
    pub fn since(self, earlier: SimTime) -> SimDuration {
        SimDuration(self.0.saturating_sub(earlier.0))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}ms", self.as_millis_f64())
    }
}

/// Non-negative span of virtual time, in microseconds.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimDuration(u64);

impl SimDuration {
    pub const ZERO: SimDuration = SimDuration(0);

    pub const fn from_micros(us: u64) -> Self {
        SimDuration(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimDuration(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimDuration(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond; negative and non-finite inputs
    /// clamp to zero.
    pub fn from_millis_f64(ms: f64) -> Self {
        if ms.is_finite() && ms > 0.0 {
            SimDuration((ms * 1_000.0).round() as u64)
        } else {
            SimDuration::ZERO
        }
    }

    pub fn from_secs_f64(s: f64) -> Self {
        Self::from_millis_f64(s * 1_000.0)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1_000_000.0
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Add<SimDuration> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Add for SimDuration {
    type Output = SimDuration;

    fn add(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimDuration;

    fn sub(self, rhs: SimTime) -> SimDuration {
        self.since(rhs)
    }
}

/// Per-hop delay model shared by every link of a simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub propagation: SimDuration,
    pub processing: SimDuration,
    /// Paid once by the first request on each ordered (sender, receiver) pair.
    pub session_setup: SimDuration,
    /// Upper bound of the uniform jitter added to every hop.
    pub jitter_max: SimDuration,
    pub jitter_seed: u64,
}

impl LinkModel {
    pub fn zero() -> Self {
        LinkModel {
            propagation: SimDuration::ZERO,
            processing: SimDuration::ZERO,
            session_setup: SimDuration::ZERO,
            jitter_max: SimDuration::ZERO,
            jitter_seed: 0,
        }
    }

    /// Lower bound on any hop latency.
    pub fn min_delay(&self) -> SimDuration {
        self.propagation + self.processing
    }
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel::zero()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(u64);

impl EventId {
    pub const fn as_u64(self) -> u64 {
        self.0
    }
}

/// A dispatched (or pending) event. `sequence` doubles as the event id and
/// orders events that share a `fire_at`.
#[derive(Clone, Debug, PartialEq)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub target: NodeId,
    pub payload: P,
    pub sequence: u64,
}

impl<P> Event<P> {
    pub fn id(&self) -> EventId {
        EventId(self.sequence)
    }
}

/// One line of the dispatch trace used for determinism checks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub id: EventId,
    pub fire_at: SimTime,
    pub target: NodeId,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("event scheduled at {at} but the clock is already at {now}")]
    PastTime { at: SimTime, now: SimTime },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("link {from} -> {to} is down")]
    LinkDown { from: NodeId, to: NodeId },
    #[error("node {0} registered twice")]
    DuplicateNode(NodeId),
}

pub type Result<T, E = KernelError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Exchange {
    Request,
    Response,
}

/// The event loop. Generic over the payload so higher layers choose their
/// own envelope type.
pub struct Kernel<P> {
    clock: SimTime,
    next_sequence: u64,
    queue: BinaryHeap<Reverse<(SimTime, u64)>>,
    pending: HashMap<u64, Event<P>>,
    nodes: BTreeSet<NodeId>,
    mailboxes: BTreeMap<NodeId, VecDeque<Event<P>>>,
    down: BTreeSet<(NodeId, NodeId)>,
    sessions: BTreeSet<(NodeId, NodeId)>,
    link: LinkModel,
    rng: ChaCha8Rng,
    trace: Vec<TraceEntry>,
}

impl<P> Kernel<P> {
    pub fn new(link: LinkModel) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(link.jitter_seed);
        Kernel {
            clock: SimTime::ZERO,
            next_sequence: 0,
            queue: BinaryHeap::new(),
            pending: HashMap::new(),
            nodes: BTreeSet::new(),
            mailboxes: BTreeMap::new(),
            down: BTreeSet::new(),
            sessions: BTreeSet::new(),
            link,
            rng,
            trace: Vec::new(),
        }
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    pub fn link(&self) -> &LinkModel {
        &self.link
    }

    pub fn add_node(&mut self, id: NodeId) -> Result<()> {
        if !self.nodes.insert(id.clone()) {
            return Err(KernelError::DuplicateNode(id));
        }
        self.mailboxes.insert(id, VecDeque::new());
        Ok(())
    }

    pub fn has_node(&self, id: &NodeId) -> bool {
        self.nodes.contains(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.iter()
    }

    /// Marks the directed link `from -> to` as down (or back up).
    pub fn set_link_down(&mut self, from: &NodeId, to: &NodeId, down: bool) {
        let key = (from.clone(), to.clone());
        if down {
            self.down.insert(key);
        } else {
            self.down.remove(&key);
        }
    }

    pub fn schedule(&mut self, fire_at: SimTime, target: NodeId, payload: P) -> Result<EventId> {
        if fire_at < self.clock {
            return Err(KernelError::PastTime {
                at: fire_at,
                now: self.clock,
            });
        }
        if !self.nodes.contains(&target) {
            return Err(KernelError::UnknownNode(target));
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Reverse((fire_at, sequence)));
        self.pending.insert(
            sequence,
            Event {
                fire_at,
                target,
                payload,
                sequence,
            },
        );
        Ok(EventId(sequence))
    }

    /// Schedules `payload` at `clock + delay` on `target`.
    pub fn schedule_in(
        &mut self,
        delay: SimDuration,
        target: NodeId,
        payload: P,
    ) -> Result<EventId> {
        self.schedule(self.clock + delay, target, payload)
    }

    /// Sends a request over the network. The first request on an ordered pair
    /// pays the session setup cost; later ones reuse the session.
    pub fn send(&mut self, from: &NodeId, to: &NodeId, msg: P) -> Result<SimTime> {
        self.transmit(from, to, msg, Exchange::Request)
    }

    /// Sends a response. Responses ride on the requester's session and never
    /// pay setup.
    pub fn send_response(&mut self, from: &NodeId, to: &NodeId, msg: P) -> Result<SimTime> {
        self.transmit(from, to, msg, Exchange::Response)
    }

    /// Latency the next request on `from -> to` would see, excluding jitter.
    pub fn nominal_delay(&self, from: &NodeId, to: &NodeId) -> SimDuration {
        let setup = if self.sessions.contains(&(from.clone(), to.clone())) {
            SimDuration::ZERO
        } else {
            self.link.session_setup
        };
        self.link.min_delay() + setup
    }

    fn transmit(
        &mut self,
        from: &NodeId,
        to: &NodeId,
        msg: P,
        exchange: Exchange,
    ) -> Result<SimTime> {
        for id in [from, to] {
            if !self.nodes.contains(id) {
                return Err(KernelError::UnknownNode(id.clone()));
            }
        }
        if self.down.contains(&(from.clone(), to.clone())) {
            return Err(KernelError::LinkDown {
                from: from.clone(),
                to: to.clone(),
            });
        }
        let mut delay = self.link.min_delay();
        if exchange == Exchange::Request && self.sessions.insert((from.clone(), to.clone())) {
            delay = delay + self.link.session_setup;
        }
        if !self.link.jitter_max.is_zero() {
            let jitter = self.rng.random_range(0..=self.link.jitter_max.as_micros());
            delay = delay + SimDuration::from_micros(jitter);
        }
        let at = self.clock + delay;
        self.schedule(at, to.clone(), msg)?;
        Ok(at)
    }

    pub fn has_session(&self, from: &NodeId, to: &NodeId) -> bool {
        self.sessions.contains(&(from.clone(), to.clone()))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Fire time of the earliest pending event.
    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse((t, _))| *t)
    }

    /// Pops the next event due at or before `until`, advancing the clock to
    /// its fire time.
    pub fn step(&mut self, until: SimTime) -> Option<Event<P>> {
        let Reverse((fire_at, sequence)) = *self.queue.peek()?;
        if fire_at > until {
            return None;
        }
        self.queue.pop();
        let event = self
            .pending
            .remove(&sequence)
            .expect("queued event has a pending entry");
        debug_assert!(fire_at >= self.clock);
        self.clock = fire_at;
        self.trace.push(TraceEntry {
            id: event.id(),
            fire_at,
            target: event.target.clone(),
        });
        Some(event)
    }

    /// Dispatches every event due at or before `t` into its target's mailbox
    /// and leaves the clock at `t`.
    pub fn run_until(&mut self, t: SimTime) -> usize {
        let mut dispatched = 0;
        while let Some(event) = self.step(t) {
            self.mailboxes
                .get_mut(&event.target)
                .expect("targets are registered nodes")
                .push_back(event);
            dispatched += 1;
        }
        self.advance_to(t);
        dispatched
    }

    /// Moves the clock forward to `t` without dispatching. No-op if `t` is
    /// behind the clock.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.clock {
            self.clock = t;
        }
    }

    pub fn take_mailbox(&mut self, node: &NodeId) -> Vec<Event<P>> {
        self.mailboxes
            .get_mut(node)
            .map(|mb| mb.drain(..).collect())
            .unwrap_or_default()
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }
}
