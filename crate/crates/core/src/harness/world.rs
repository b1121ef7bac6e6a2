//! One iteration of a scenario: every layer wired onto a fresh kernel.
//!
//! All traffic is CoAP-subset framed and tagged with the channel it travels
//! on. Type A samples reach their agent over Gi; agents push SenML batches to
//! applications over Di; deployment, control and overlay traffic rides on
//! Ci. Hops internal to a node (PDi/PCi on a Type B host) are logged with
//! zero latency.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::firecontour::{
    observe, ContourEstimate, ContourReply, FireAction, FireContourApp, FireEvent,
    FireNotification, LinearRateModel, RateObservation, RateParams,
};
use crate::ids::{AppId, NodeId, OverlayId, PeerId, Position, TaskId};
use crate::overlaynet::{
    OverlayAdvertisement, OverlayGroup, OverlayMessage, OverlayMsgKind, OverlayTable,
};
use crate::physnode::{NodeKind, PhysicalLayer};
use crate::registry::Registry;
use crate::sensoragent::{
    ci_request, ci_response, execute_pci, ChannelKind, CiPlan, ControlAction, ControlCommand,
    NativeFrame, NativeReport, PciCall, PciOutcome, SensorAgent,
};
use crate::simkernel::{Kernel, SimDuration, SimTime};
use crate::vruntime::VirtualRuntime;
use crate::wirecodec::{
    accept_data_message, content_format, decode_message, encode_message, Code, Message,
};

use super::config::{iteration_seed, ConfigError, ScenarioConfig};
use super::metrics::{measure_fnd, measure_hpd, measure_ocd, Exchange, MetricSample, OverlayTrace};

/// One frame on the message log. `seq` is its index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub seq: u64,
    #[serde(rename = "sent_at_us")]
    pub sent_at: SimTime,
    #[serde(rename = "delivered_at_us")]
    pub delivered_at: Option<SimTime>,
    pub from: NodeId,
    pub to: NodeId,
    pub channel: ChannelKind,
    pub code: String,
    pub response: bool,
    pub mid: u16,
    pub uri: String,
    pub content_format: Option<u16>,
    pub senml: bool,
    pub overlay_kind: Option<OverlayMsgKind>,
    pub overlay_id: Option<OverlayId>,
    /// Sensing node whose samples the frame carries.
    pub origin: Option<NodeId>,
    /// Frame this one was produced from.
    pub cause: Option<u64>,
    pub len: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Discovery,
    Join,
    TaskDelivery,
    FirstData,
    Ready,
    Active,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickEntry {
    pub task_id: TaskId,
    pub priority: u32,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourInput {
    pub node: NodeId,
    pub position: Option<Position>,
    pub window_ms: f64,
    pub notification_count: u64,
    pub rate: f64,
}

/// Everything needed to recompute a round's contour offline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FireRoundLog {
    pub app_id: AppId,
    pub round: u64,
    pub reporter: NodeId,
    #[serde(rename = "sent_at_us")]
    pub sent_at: SimTime,
    #[serde(rename = "completed_at_us")]
    pub completed_at: SimTime,
    pub fnd_ms: f64,
    pub replies: usize,
    pub params: RateParams,
    pub sectors: usize,
    pub inputs: Vec<ContourInput>,
    pub estimate: Option<ContourEstimate>,
    pub error: Option<String>,
}

impl FireRoundLog {
    pub fn observations(&self) -> Vec<RateObservation> {
        self.inputs
            .iter()
            .map(|i| RateObservation {
                node: i.node.clone(),
                window: SimDuration::from_millis_f64(i.window_ms),
                notification_count: i.notification_count,
                rate: i.rate,
            })
            .collect()
    }

    pub fn positions(&self) -> BTreeMap<NodeId, Position> {
        self.inputs
            .iter()
            .filter_map(|i| i.position.map(|p| (i.node.clone(), p)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Tick {
        #[serde(rename = "at_us")]
        at: SimTime,
        node: NodeId,
        emitted: Vec<TickEntry>,
    },
    Lifecycle {
        #[serde(rename = "at_us")]
        at: SimTime,
        overlay_id: OverlayId,
        peer: PeerId,
        stage: Stage,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    FireRound(FireRoundLog),
    Command {
        #[serde(rename = "at_us")]
        at: SimTime,
        from: NodeId,
        target: NodeId,
        command: String,
        code: String,
    },
    Dropped {
        #[serde(rename = "at_us")]
        at: SimTime,
        node: NodeId,
        reason: String,
    },
}

#[derive(Clone, Debug)]
pub enum Packet {
    Frame {
        seq: u64,
        channel: ChannelKind,
        bytes: Vec<u8>,
    },
    Timer(Timer),
}

#[derive(Clone, Debug)]
pub enum Timer {
    Tick,
    AppStart(usize),
    Discovery(usize),
    Script(usize),
    Transmit(Box<Outgoing>),
}

#[derive(Clone, Debug, Default)]
struct Meta {
    overlay: Option<(OverlayMsgKind, OverlayId)>,
    origin: Option<NodeId>,
    cause: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct Outgoing {
    from: NodeId,
    to: NodeId,
    channel: ChannelKind,
    message: Message,
    response: bool,
    meta: Meta,
}

#[derive(Clone, Debug)]
enum Pending {
    GiData,
    DiPost {
        series: String,
        sent_at: SimTime,
    },
    Pci {
        requester: NodeId,
        request: Message,
        target: NodeId,
        call: PciCall,
        cause: u64,
    },
    Advertise {
        app: usize,
        peer: PeerId,
    },
    JoinAck {
        app: usize,
        peer: PeerId,
    },
    Deploy {
        app: usize,
        peer: PeerId,
        node: NodeId,
        task: TaskId,
    },
    Round {
        app: usize,
    },
    Script(usize),
}

#[derive(Debug, Default)]
struct AppState {
    started_at: Option<SimTime>,
    discovered: bool,
    /// Sensor to the peer (agent host) that manages it.
    sensors: BTreeMap<NodeId, PeerId>,
    peers: Vec<PeerId>,
    awaiting: usize,
    ready_at: Option<SimTime>,
    first_data: BTreeSet<PeerId>,
    fire: Option<FireContourApp>,
}

/// Result of one iteration.
#[derive(Clone, Debug)]
pub struct IterationOutcome {
    pub iteration: usize,
    pub seed: u64,
    pub baseline: bool,
    pub horizon: SimTime,
    pub samples: Vec<MetricSample>,
    pub messages: Vec<MessageRecord>,
    pub events: Vec<LogEvent>,
    pub groups: Vec<OverlayGroup>,
    /// Every sample a virtual sensor reported, before any network hop.
    pub emitted: BTreeMap<(NodeId, TaskId), Vec<(SimTime, f64)>>,
    /// Base names each application received data from.
    pub received_from: BTreeMap<AppId, BTreeSet<NodeId>>,
    pub kinds: BTreeMap<NodeId, NodeKind>,
    /// Session and membership tables were empty when the iteration started.
    pub fresh_at_start: bool,
    pub deploy_failures: usize,
    /// Overlays that never reached `Ready`.
    pub never_ready: Vec<OverlayId>,
}

impl IterationOutcome {
    pub fn fire_rounds(&self) -> impl Iterator<Item = &FireRoundLog> {
        self.events.iter().filter_map(|e| match e {
            LogEvent::FireRound(r) => Some(r),
            _ => None,
        })
    }
}

/// Simulation state of one iteration.
pub struct World<'a> {
    cfg: &'a ScenarioConfig,
    iteration: usize,
    seed: u64,
    baseline: bool,
    kernel: Kernel<Packet>,
    phys: PhysicalLayer,
    runtime: VirtualRuntime,
    registry: Registry,
    overlays: OverlayTable,
    agents: BTreeMap<NodeId, SensorAgent>,
    host_of: BTreeMap<NodeId, NodeId>,
    app_at: BTreeMap<NodeId, usize>,
    apps: Vec<AppState>,
    mids: BTreeMap<NodeId, u16>,
    pending: BTreeMap<(NodeId, u16), Pending>,
    ticks: BTreeSet<(NodeId, SimTime)>,
    messages: Vec<MessageRecord>,
    events: Vec<LogEvent>,
    samples: Vec<MetricSample>,
    emitted: BTreeMap<(NodeId, TaskId), Vec<(SimTime, f64)>>,
    received_from: BTreeMap<AppId, BTreeSet<NodeId>>,
    fresh_at_start: bool,
    deploy_failures: usize,
}

fn ms(v: f64) -> SimDuration {
    SimDuration::from_millis_f64(v)
}

fn token(mid: u16) -> Vec<u8> {
    mid.to_be_bytes().to_vec()
}

impl<'a> World<'a> {
    pub fn new(
        cfg: &'a ScenarioConfig,
        iteration: usize,
        baseline: bool,
    ) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let seed = iteration_seed(cfg.seed, iteration);
        let phys = cfg.physical_layer()?;
        let registry = cfg.registry()?;
        let mut kernel = Kernel::new(cfg.link_model(seed ^ 0x6A09_E667_F3BC_C908));
        let mut runtime = VirtualRuntime::new(seed);
        for node in phys.nodes() {
            kernel
                .add_node(node.id.clone())
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if node.kind != NodeKind::Gto {
                runtime.add_node(node.id.clone(), node.max_tasks);
            }
        }
        let mut agents = BTreeMap::new();
        let mut host_of = BTreeMap::new();
        for binding in cfg.bindings() {
            for n in &binding.managed {
                host_of.insert(n.clone(), binding.host.clone());
            }
            let agent = SensorAgent::new(binding, &phys)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            agents.insert(agent.host().clone(), agent);
        }
        let mut app_at = BTreeMap::new();
        for (i, app) in cfg.applications.iter().enumerate() {
            kernel
                .add_node(app.endpoint.clone())
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            app_at.insert(app.endpoint.clone(), i);
        }
        let ineligible = phys
            .nodes()
            .filter(|n| n.kind == NodeKind::TypeA)
            .map(|n| n.id.clone());
        let overlays = OverlayTable::new(ineligible);
        let fresh_at_start = kernel.session_count() == 0 && overlays.groups().next().is_none();

        let mut world = World {
            cfg,
            iteration,
            seed,
            baseline,
            kernel,
            phys,
            runtime,
            registry,
            overlays,
            agents,
            host_of,
            app_at,
            apps: cfg
                .applications
                .iter()
                .map(|_| AppState::default())
                .collect(),
            mids: BTreeMap::new(),
            pending: BTreeMap::new(),
            ticks: BTreeSet::new(),
            messages: Vec::new(),
            events: Vec::new(),
            samples: Vec::new(),
            emitted: BTreeMap::new(),
            received_from: BTreeMap::new(),
            fresh_at_start,
            deploy_failures: 0,
        };
        for (i, app) in cfg.applications.iter().enumerate() {
            world.timer(
                SimTime::ZERO + ms(app.start_ms),
                app.endpoint.clone(),
                Timer::AppStart(i),
            );
        }
        for (i, c) in cfg.control.iter().enumerate() {
            world.timer(
                SimTime::ZERO + ms(c.at_ms),
                c.from.clone(),
                Timer::Script(i),
            );
        }
        Ok(world)
    }

    /// Runs to the configured horizon.
    pub fn run(mut self) -> IterationOutcome {
        let horizon = SimTime::ZERO + ms(self.cfg.duration_ms);
        while let Some(event) = self.kernel.step(horizon) {
            match event.payload {
                Packet::Frame {
                    seq,
                    channel,
                    bytes,
                } => self.deliver(event.target, seq, channel, &bytes),
                Packet::Timer(t) => self.on_timer(event.target, t),
            }
        }
        self.kernel.advance_to(horizon);
        let never_ready = self
            .cfg
            .applications
            .iter()
            .zip(&self.apps)
            .filter(|(_, s)| s.ready_at.is_none())
            .map(|(a, _)| a.overlay_id.clone())
            .collect();
        IterationOutcome {
            iteration: self.iteration,
            seed: self.seed,
            baseline: self.baseline,
            horizon,
            samples: self.samples,
            messages: self.messages,
            events: self.events,
            groups: self.overlays.groups().cloned().collect(),
            emitted: self.emitted,
            received_from: self.received_from,
            kinds: self.phys.nodes().map(|n| (n.id.clone(), n.kind)).collect(),
            fresh_at_start: self.fresh_at_start,
            deploy_failures: self.deploy_failures,
            never_ready,
        }
    }

    fn now(&self) -> SimTime {
        self.kernel.clock()
    }

    fn timer(&mut self, at: SimTime, node: NodeId, t: Timer) {
        self.kernel
            .schedule(at, node, Packet::Timer(t))
            .expect("timers target registered nodes at or after the clock");
    }

    fn drop_event(&mut self, node: &NodeId, reason: impl Into<String>) {
        let reason = reason.into();
        tracing::debug!(%node, %reason, "dropped");
        self.events.push(LogEvent::Dropped {
            at: self.now(),
            node: node.clone(),
            reason,
        });
    }

    fn next_mid(&mut self, node: &NodeId) -> u16 {
        if let Some(agent) = self.agents.get_mut(node) {
            return agent.next_message_id();
        }
        let c = self.mids.entry(node.clone()).or_insert(0);
        let mid = *c;
        *c = c.wrapping_add(1);
        mid
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        from: &NodeId,
        to: &NodeId,
        channel: ChannelKind,
        msg: &Message,
        response: bool,
        meta: Meta,
        len: usize,
    ) -> u64 {
        let seq = self.messages.len() as u64;
        let (overlay_kind, overlay_id) = meta
            .overlay
            .map_or((None, None), |(k, id)| (Some(k), Some(id)));
        self.messages.push(MessageRecord {
            seq,
            sent_at: self.now(),
            delivered_at: None,
            from: from.clone(),
            to: to.clone(),
            channel,
            code: msg.code.to_string(),
            response,
            mid: msg.message_id,
            uri: msg.uri(),
            content_format: msg.content_format,
            senml: msg.content_format == Some(content_format::SENML_JSON),
            overlay_kind,
            overlay_id,
            origin: meta.origin,
            cause: meta.cause,
            len,
        });
        seq
    }

    fn send(
        &mut self,
        from: &NodeId,
        to: &NodeId,
        channel: ChannelKind,
        msg: &Message,
        response: bool,
        meta: Meta,
    ) -> u64 {
        let bytes = encode_message(msg).expect("harness builds well-formed messages");
        let seq = self.record(from, to, channel, msg, response, meta, bytes.len());
        let packet = Packet::Frame {
            seq,
            channel,
            bytes,
        };
        let sent = if response {
            self.kernel.send_response(from, to, packet)
        } else {
            self.kernel.send(from, to, packet)
        };
        if let Err(err) = sent {
            self.drop_event(from, format!("send to {to} failed: {err}"));
        }
        seq
    }

    /// A hop inside one node: logged, delivered at once.
    fn internal(&mut self, node: &NodeId, channel: ChannelKind, msg: &Message, meta: Meta) -> u64 {
        let seq = self.record(
            node,
            node,
            channel,
            msg,
            !msg.is_request(),
            meta,
            msg.payload.len(),
        );
        self.messages[seq as usize].delivered_at = Some(self.now());
        seq
    }

    fn send_after(&mut self, delay: SimDuration, out: Outgoing) {
        if delay.is_zero() {
            self.send(
                &out.from,
                &out.to,
                out.channel,
                &out.message,
                out.response,
                out.meta,
            );
        } else {
            let from = out.from.clone();
            self.timer(self.now() + delay, from, Timer::Transmit(Box::new(out)));
        }
    }

    fn overlay_delay(&self) -> SimDuration {
        ms(self.cfg.costs.overlay_processing_ms)
    }

    fn schedule_tick(&mut self, node: &NodeId) {
        if let Some(due) = self.runtime.next_due(node) {
            if self.ticks.insert((node.clone(), due)) {
                self.timer(due, node.clone(), Timer::Tick);
            }
        }
    }

    fn apply_outcome(&mut self, node: &NodeId, outcome: &PciOutcome) {
        if let Some((task, at)) = &outcome.activate {
            self.runtime
                .activate(node, task, *at)
                .expect("task was just deployed");
            self.schedule_tick(node);
        }
    }

    fn on_timer(&mut self, node: NodeId, timer: Timer) {
        match timer {
            Timer::Tick => self.on_tick(node),
            Timer::AppStart(app) => self.on_app_start(app),
            Timer::Discovery(app) => self.on_discovery(app),
            Timer::Script(i) => self.on_script(i),
            Timer::Transmit(out) => {
                let out = *out;
                self.send(
                    &out.from,
                    &out.to,
                    out.channel,
                    &out.message,
                    out.response,
                    out.meta,
                );
            }
        }
    }

    fn on_tick(&mut self, node: NodeId) {
        let now = self.now();
        self.ticks.remove(&(node.clone(), now));
        let emissions = self.runtime.tick(&node, now, &self.phys);
        self.schedule_tick(&node);
        if emissions.is_empty() {
            return;
        }
        for e in &emissions {
            self.emitted
                .entry((node.clone(), e.task_id.clone()))
                .or_default()
                .push((now, e.record.value));
        }
        self.events.push(LogEvent::Tick {
            at: now,
            node: node.clone(),
            emitted: emissions
                .iter()
                .map(|e| TickEntry {
                    task_id: e.task_id.clone(),
                    priority: e.priority,
                    value: e.record.value,
                })
                .collect(),
        });
        let Some(host) = self.host_of.get(&node).cloned() else {
            self.drop_event(&node, "no agent manages this node");
            return;
        };
        let frame = NativeFrame::Reports(
            emissions
                .into_iter()
                .map(|e| NativeReport {
                    task_id: e.task_id,
                    record: e.record,
                })
                .collect(),
        );
        let bytes = self.agents[&host].dialect().encode(&frame);
        let mid = self.next_mid(&node);
        let msg = Message::request(Code::POST, mid)
            .with_token(token(mid))
            .with_path(["pdi"])
            .with_payload(content_format::OCTET_STREAM, bytes.clone());
        let meta = Meta {
            origin: Some(node.clone()),
            ..Meta::default()
        };
        if host == node {
            let seq = self.internal(&node, ChannelKind::PDi, &msg, meta);
            self.ingest(&host, &node, &bytes, seq);
        } else {
            self.pending.insert((node.clone(), mid), Pending::GiData);
            self.send(&node, &host, ChannelKind::Gi, &msg, false, meta);
        }
    }

    /// Agent on `host` turns a native report frame into Di POSTs.
    fn ingest(&mut self, host: &NodeId, from: &NodeId, bytes: &[u8], cause: u64) {
        let agent = self.agents.get_mut(host).expect("host runs an agent");
        let posts = match agent.ingest_pdi(from, bytes) {
            Ok(p) => p,
            Err(err) => return self.drop_event(host, err.to_string()),
        };
        let now = self.now();
        for post in posts {
            self.pending.insert(
                (host.clone(), post.message.message_id),
                Pending::DiPost {
                    series: format!("{host}->{}", post.to),
                    sent_at: now,
                },
            );
            let meta = Meta {
                origin: Some(post.origin.clone()),
                cause: Some(cause),
                ..Meta::default()
            };
            self.send(host, &post.to, ChannelKind::Di, &post.message, false, meta);
        }
    }

    fn on_app_start(&mut self, app: usize) {
        let cfg = &self.cfg.applications[app];
        let now = self.now();
        self.apps[app].started_at = Some(now);
        let delay = if self.baseline {
            SimDuration::ZERO
        } else {
            ms(self.cfg.costs.overlay_setup_ms)
        };
        tracing::debug!(app = %cfg.app_id, "overlay creation started");
        self.timer(now + delay, cfg.endpoint.clone(), Timer::Discovery(app));
    }

    fn on_discovery(&mut self, app: usize) {
        let cfg = &self.cfg.applications[app];
        let now = self.now();
        let endpoint = cfg.endpoint.clone();
        let mut positions = BTreeMap::new();
        let mut sensors = BTreeMap::new();
        for d in self.registry.query(&cfg.candidates) {
            if d.kind == NodeKind::Gto {
                continue;
            }
            if let Some(host) = self.host_of.get(&d.node_id) {
                sensors.insert(d.node_id.clone(), host.clone());
                positions.insert(d.node_id.clone(), d.position);
            }
        }
        let peers: Vec<PeerId> = sensors
            .values()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for peer in &peers {
            self.events.push(LogEvent::Lifecycle {
                at: now,
                overlay_id: cfg.overlay_id.clone(),
                peer: peer.clone(),
                stage: Stage::Discovery,
                detail: None,
            });
        }
        if let Some(fire) = &cfg.fire {
            let debounce = cfg
                .task(&fire.alarm_task)
                .map(|t| ms(t.period_ms))
                .unwrap_or(SimDuration::ZERO);
            self.apps[app].fire = Some(FireContourApp::new(
                cfg.app_id.clone(),
                cfg.overlay_id.clone(),
                endpoint.clone(),
                LinearRateModel::new(fire.rate).expect("validated"),
                ms(fire.window_ms),
                debounce,
                fire.sectors,
                positions,
            ));
        }
        let state = &mut self.apps[app];
        state.discovered = true;
        state.sensors = sensors;
        state.peers = peers.clone();

        if self.baseline {
            let targets: Vec<(NodeId, PeerId)> =
                self.apps[app].sensors.clone().into_iter().collect();
            self.apps[app].awaiting = targets.len() * cfg.tasks.len();
            for (sensor, peer) in targets {
                for t in &cfg.tasks {
                    self.send_deploy(app, &peer, &sensor, &t.task_id);
                }
            }
        } else {
            let adv = OverlayAdvertisement {
                overlay_id: cfg.overlay_id.clone(),
                service_name: cfg.service_name.clone(),
                rendezvous: endpoint.clone(),
                created_at: self.apps[app].started_at.unwrap_or(now),
            };
            if let Err(err) = self.overlays.open(&adv) {
                return self.drop_event(&endpoint, err.to_string());
            }
            self.apps[app].awaiting = peers.len();
            let body = serde_json::to_vec(&adv).expect("advertisement serializes");
            for peer in peers {
                self.send_overlay_request(
                    app,
                    &peer,
                    OverlayMsgKind::Advertise,
                    "advertise",
                    body.clone(),
                    |peer| Pending::Advertise { app, peer },
                );
            }
        }
        self.check_ready(app);
    }

    fn send_overlay_request(
        &mut self,
        app: usize,
        peer: &PeerId,
        kind: OverlayMsgKind,
        leaf: &str,
        body: Vec<u8>,
        pending: impl FnOnce(PeerId) -> Pending,
    ) {
        let cfg = &self.cfg.applications[app];
        let endpoint = cfg.endpoint.clone();
        let overlay_id = cfg.overlay_id.clone();
        let mid = self.next_mid(&endpoint);
        let om = OverlayMessage::new(kind, overlay_id.clone(), endpoint.clone(), body);
        let msg = Message::request(Code::POST, mid)
            .with_token(token(mid))
            .with_path(["overlays", overlay_id.as_str(), leaf])
            .with_payload(content_format::OCTET_STREAM, om.encode());
        self.pending
            .insert((endpoint.clone(), mid), pending(peer.clone()));
        let delay = self.overlay_delay();
        self.send_after(
            delay,
            Outgoing {
                from: endpoint,
                to: peer.clone(),
                channel: ChannelKind::Ci,
                message: msg,
                response: false,
                meta: Meta {
                    overlay: Some((kind, overlay_id)),
                    ..Meta::default()
                },
            },
        );
    }

    fn send_deploy(&mut self, app: usize, peer: &PeerId, sensor: &NodeId, task: &TaskId) {
        let cfg = &self.cfg.applications[app];
        let endpoint = cfg.endpoint.clone();
        let tc = cfg.task(task).expect("task belongs to the application");
        let cmd = ControlCommand::new(
            sensor.clone(),
            ControlAction::DeployTask {
                task: cfg.app_task(tc),
                start_at_ms: cfg.task_start_ms,
            },
        );
        let uri = self.agents[peer]
            .uri_for(ChannelKind::Ci, sensor)
            .expect("Ci has a public URI");
        let mid = self.next_mid(&endpoint);
        let msg = ci_request(mid, uri, &cmd);
        self.pending.insert(
            (endpoint.clone(), mid),
            Pending::Deploy {
                app,
                peer: peer.clone(),
                node: sensor.clone(),
                task: task.clone(),
            },
        );
        self.send(
            &endpoint,
            peer,
            ChannelKind::Ci,
            &msg,
            false,
            Meta::default(),
        );
    }

    fn check_ready(&mut self, app: usize) {
        let state = &self.apps[app];
        if !state.discovered || state.awaiting > 0 || state.ready_at.is_some() {
            return;
        }
        let cfg = &self.cfg.applications[app];
        let now = self.now();
        let started = state.started_at.unwrap_or(now);
        if !self.baseline {
            let joined = self
                .overlays
                .group(&cfg.overlay_id)
                .is_some_and(|g| !g.members.is_empty());
            if !joined {
                return self.drop_event(
                    &cfg.endpoint.clone(),
                    format!("overlay {} has no members", cfg.overlay_id),
                );
            }
            self.overlays
                .mark_ready(&cfg.overlay_id)
                .expect("group is forming");
        }
        self.apps[app].ready_at = Some(now);
        self.events.push(LogEvent::Lifecycle {
            at: now,
            overlay_id: cfg.overlay_id.clone(),
            peer: cfg.endpoint.clone(),
            stage: Stage::Ready,
            detail: None,
        });
        if !self.baseline {
            let trace = OverlayTrace {
                overlay_id: cfg.overlay_id.clone(),
                started_at: started,
                ready_at: Some(now),
            };
            self.samples
                .push(measure_ocd(&trace, self.iteration).expect("ready_at is set"));
        }
    }

    fn on_script(&mut self, i: usize) {
        let sc = &self.cfg.control[i];
        let target = sc.command.target.clone();
        let Some(host) = self.host_of.get(&target).cloned() else {
            return self.drop_event(&sc.from.clone(), format!("no agent manages {target}"));
        };
        let uri = self.agents[&host]
            .uri_for(ChannelKind::Ci, &target)
            .expect("Ci has a public URI");
        let from = sc.from.clone();
        let mid = self.next_mid(&from);
        let msg = ci_request(mid, uri, &sc.command);
        self.pending.insert((from.clone(), mid), Pending::Script(i));
        self.send(&from, &host, ChannelKind::Ci, &msg, false, Meta::default());
    }

    fn deliver(&mut self, to: NodeId, seq: u64, channel: ChannelKind, bytes: &[u8]) {
        let now = self.now();
        self.messages[seq as usize].delivered_at = Some(now);
        let from = self.messages[seq as usize].from.clone();
        let msg = match decode_message(bytes) {
            Ok(m) => m,
            Err(err) => return self.drop_event(&to, format!("undecodable frame {seq}: {err}")),
        };
        if msg.is_request() {
            self.on_request(&from, &to, channel, seq, msg);
        } else {
            self.on_response(&from, &to, seq, msg);
        }
    }

    fn respond(
        &mut self,
        from: &NodeId,
        to: &NodeId,
        channel: ChannelKind,
        resp: Message,
        cause: u64,
    ) {
        let meta = Meta {
            cause: Some(cause),
            ..Meta::default()
        };
        self.send(from, to, channel, &resp, true, meta);
    }

    fn on_request(
        &mut self,
        from: &NodeId,
        to: &NodeId,
        channel: ChannelKind,
        seq: u64,
        msg: Message,
    ) {
        match channel {
            ChannelKind::Gi => self.on_gi_request(from, to, seq, msg),
            ChannelKind::Di => self.on_data(from, to, seq, msg),
            ChannelKind::Ci => {
                let path: Vec<&str> = msg.uri_path.iter().map(String::as_str).collect();
                match path.as_slice() {
                    ["agents", _, "nodes", _, "ci"] => self.on_ci(from, to, seq, msg),
                    ["agents", _, "fca"] => self.on_direct_fca(from, to, seq, msg),
                    ["overlays", _, _] => self.on_overlay_request(from, to, seq, msg),
                    _ => self.respond(
                        to,
                        from,
                        ChannelKind::Ci,
                        ci_response(&msg, Code::NOT_FOUND, "no such resource"),
                        seq,
                    ),
                }
            }
            ChannelKind::PDi | ChannelKind::PCi => {
                self.drop_event(to, "proprietary frame on the network")
            }
        }
    }

    fn on_gi_request(&mut self, from: &NodeId, to: &NodeId, seq: u64, msg: Message) {
        let kind = self.phys.node(to).map(|n| n.kind).ok();
        if kind == Some(NodeKind::TypeA) {
            // Native control call arriving at the Type A node.
            let Some(dialect) = self.host_of.get(to).map(|h| self.agents[h].dialect()) else {
                return self.drop_event(to, "no agent manages this node");
            };
            let call = match dialect.decode(&msg.payload) {
                Ok(NativeFrame::Call(call)) => call,
                Ok(_) => return self.drop_event(to, "unexpected native frame"),
                Err(err) => return self.drop_event(to, err.to_string()),
            };
            let now = self.now();
            let outcome = execute_pci(&mut self.runtime, to, &call, now);
            self.apply_outcome(to, &outcome);
            let resp = Message::response_to(&msg, Code::CHANGED).with_payload(
                content_format::OCTET_STREAM,
                dialect.encode(&NativeFrame::Reply(outcome.reply)),
            );
            self.respond(to, from, ChannelKind::Gi, resp, seq);
        } else if self.agents.contains_key(to) {
            self.respond(
                to,
                from,
                ChannelKind::Gi,
                Message::response_to(&msg, Code::CHANGED),
                seq,
            );
            self.ingest(to, from, &msg.payload, seq);
        } else {
            self.drop_event(to, "Gi frame for a node without an agent");
        }
    }

    fn on_ci(&mut self, requester: &NodeId, host: &NodeId, seq: u64, msg: Message) {
        let Some(agent) = self.agents.get(host) else {
            return self.respond(
                host,
                requester,
                ChannelKind::Ci,
                ci_response(&msg, Code::NOT_FOUND, "no agent"),
                seq,
            );
        };
        let plan = match agent.handle_ci(&msg) {
            Ok((_, plan)) => plan,
            Err(code) => {
                return self.respond(
                    host,
                    requester,
                    ChannelKind::Ci,
                    ci_response(&msg, code, ""),
                    seq,
                )
            }
        };
        match plan {
            CiPlan::Join { .. } => {
                self.respond(
                    host,
                    requester,
                    ChannelKind::Ci,
                    ci_response(&msg, Code::CHANGED, ""),
                    seq,
                );
            }
            CiPlan::Pci {
                target,
                call,
                via_gi: false,
            } => {
                let pci = Message::request(Code::POST, 0).with_path(["pci"]);
                self.internal(
                    host,
                    ChannelKind::PCi,
                    &pci,
                    Meta {
                        cause: Some(seq),
                        ..Meta::default()
                    },
                );
                let now = self.now();
                let outcome = execute_pci(&mut self.runtime, &target, &call, now);
                self.apply_outcome(&target, &outcome);
                let agent = self.agents.get_mut(host).expect("checked above");
                let resp = agent.finish_ci(requester, &msg, &target, &call, &outcome.reply);
                self.respond(host, requester, ChannelKind::Ci, resp, seq);
            }
            CiPlan::Pci {
                target,
                call,
                via_gi: true,
            } => {
                let bytes = agent.dialect().encode(&NativeFrame::Call(call.clone()));
                let mid = self.next_mid(host);
                let gi = Message::request(Code::POST, mid)
                    .with_token(token(mid))
                    .with_path(["pci"])
                    .with_payload(content_format::OCTET_STREAM, bytes);
                self.pending.insert(
                    (host.clone(), mid),
                    Pending::Pci {
                        requester: requester.clone(),
                        request: msg,
                        target: target.clone(),
                        call,
                        cause: seq,
                    },
                );
                let meta = Meta {
                    cause: Some(seq),
                    ..Meta::default()
                };
                self.send(host, &target, ChannelKind::Gi, &gi, false, meta);
            }
        }
    }

    fn on_data(&mut self, from: &NodeId, endpoint: &NodeId, seq: u64, msg: Message) {
        let Some(&app) = self.app_at.get(endpoint) else {
            return self.respond(
                endpoint,
                from,
                ChannelKind::Di,
                Message::response_to(&msg, Code::NOT_FOUND),
                seq,
            );
        };
        let batch = match accept_data_message(&msg) {
            Ok(Some(b)) => b,
            Ok(None) => {
                return self.respond(
                    endpoint,
                    from,
                    ChannelKind::Di,
                    Message::response_to(&msg, Code::BAD_REQUEST),
                    seq,
                )
            }
            Err(code) => {
                return self.respond(
                    endpoint,
                    from,
                    ChannelKind::Di,
                    Message::response_to(&msg, code),
                    seq,
                )
            }
        };
        self.respond(
            endpoint,
            from,
            ChannelKind::Di,
            Message::response_to(&msg, Code::CREATED),
            seq,
        );

        let cfg = &self.cfg.applications[app];
        let now = self.now();
        self.received_from
            .entry(cfg.app_id.clone())
            .or_default()
            .extend(
                batch
                    .records
                    .iter()
                    .map(|r| NodeId::new(r.base_name.clone())),
            );

        if !self.baseline
            && self
                .overlays
                .group(&cfg.overlay_id)
                .is_some_and(|g| g.is_member(from))
        {
            if self.apps[app].first_data.insert(from.clone()) {
                self.events.push(LogEvent::Lifecycle {
                    at: now,
                    overlay_id: cfg.overlay_id.clone(),
                    peer: from.clone(),
                    stage: Stage::FirstData,
                    detail: None,
                });
            }
            if self.overlays.mark_active(&cfg.overlay_id).is_ok() {
                self.events.push(LogEvent::Lifecycle {
                    at: now,
                    overlay_id: cfg.overlay_id.clone(),
                    peer: endpoint.clone(),
                    stage: Stage::Active,
                    detail: None,
                });
            }
        }

        let task = match msg.uri_path.as_slice() {
            [a, _, t, task] if a == "apps" && t == "tasks" => TaskId::new(task.clone()),
            _ => return,
        };
        let is_alarm = cfg.fire.as_ref().is_some_and(|f| f.alarm_task == task);
        if is_alarm {
            for record in batch.records {
                let ev = FireEvent {
                    reporter: NodeId::new(record.base_name.clone()),
                    task_id: task.clone(),
                    reading: record,
                    received_at: now,
                };
                self.on_fire_event(app, ev, from);
            }
        }
    }

    fn on_fire_event(&mut self, app: usize, ev: FireEvent, reporter_peer: &PeerId) {
        let cfg = &self.cfg.applications[app];
        let endpoint = cfg.endpoint.clone();
        let state = &mut self.apps[app];
        let Some(fire) = state.fire.as_mut() else {
            return;
        };
        let action = if self.baseline {
            fire.on_fire_event_direct(&ev, reporter_peer, &state.peers)
        } else {
            match fire.on_fire_event(&ev, reporter_peer, &self.overlays) {
                Ok(a) => a,
                Err(err) => return self.drop_event(&endpoint, err.to_string()),
            }
        };
        let FireAction::Notify {
            recipients,
            notification,
        } = action
        else {
            return;
        };
        let body = serde_json::to_vec(&notification).expect("notification serializes");
        for peer in recipients {
            if self.baseline {
                let agent_id = self.agents[&peer].id().clone();
                let mid = self.next_mid(&endpoint);
                let msg = Message::request(Code::POST, mid)
                    .with_token(token(mid))
                    .with_path(["agents", agent_id.as_str(), "fca"])
                    .with_payload(content_format::JSON, body.clone());
                self.pending
                    .insert((endpoint.clone(), mid), Pending::Round { app });
                self.send(
                    &endpoint,
                    &peer,
                    ChannelKind::Ci,
                    &msg,
                    false,
                    Meta::default(),
                );
            } else {
                self.send_overlay_request(
                    app,
                    &peer,
                    OverlayMsgKind::GroupMulticast,
                    "notify",
                    body.clone(),
                    |_| Pending::Round { app },
                );
            }
        }
    }

    /// Rate observations `peer` holds for the alarm task of `n`.
    fn observe_at(&self, peer: &PeerId, n: &FireNotification) -> Vec<RateObservation> {
        let agent = &self.agents[peer];
        let window = ms(n.window_ms);
        agent
            .binding()
            .managed
            .iter()
            .filter(|node| agent.route(node, &n.alarm_task).is_some())
            .filter_map(|node| {
                observe(
                    node.clone(),
                    agent.report_times(node, &n.alarm_task),
                    self.now(),
                    window,
                )
                .ok()
            })
            .collect()
    }

    fn on_overlay_request(&mut self, rendezvous: &NodeId, peer: &NodeId, seq: u64, msg: Message) {
        let om = match OverlayMessage::decode(&msg.payload) {
            Ok(om) => om,
            Err(err) => {
                return self.respond(
                    peer,
                    rendezvous,
                    ChannelKind::Ci,
                    ci_response(&msg, Code::BAD_REQUEST, &err.to_string()),
                    seq,
                )
            }
        };
        let overlay_id = om.overlay_id.clone();
        let reply = |kind: OverlayMsgKind, body: Vec<u8>| {
            Message::response_to(&msg, Code::CONTENT).with_payload(
                content_format::OCTET_STREAM,
                OverlayMessage::new(kind, overlay_id.clone(), peer.clone(), body).encode(),
            )
        };
        match om.kind {
            OverlayMsgKind::Advertise => {
                if let Err(err) = self.overlays.record_advertisement(&overlay_id, peer) {
                    return self.respond(
                        peer,
                        rendezvous,
                        ChannelKind::Ci,
                        ci_response(&msg, Code::NOT_FOUND, &err.to_string()),
                        seq,
                    );
                }
                let resp = reply(OverlayMsgKind::JoinRequest, Vec::new());
                self.send_overlay_response(
                    peer,
                    rendezvous,
                    resp,
                    OverlayMsgKind::JoinRequest,
                    overlay_id,
                    seq,
                    SimDuration::ZERO,
                );
            }
            OverlayMsgKind::JoinAck => {
                self.events.push(LogEvent::Lifecycle {
                    at: self.now(),
                    overlay_id,
                    peer: peer.clone(),
                    stage: Stage::Join,
                    detail: None,
                });
                self.respond(
                    peer,
                    rendezvous,
                    ChannelKind::Ci,
                    Message::response_to(&msg, Code::CHANGED),
                    seq,
                );
            }
            OverlayMsgKind::GroupMulticast => {
                let n: FireNotification = match serde_json::from_slice(&om.payload) {
                    Ok(n) => n,
                    Err(err) => {
                        return self.respond(
                            peer,
                            rendezvous,
                            ChannelKind::Ci,
                            ci_response(&msg, Code::BAD_REQUEST, &err.to_string()),
                            seq,
                        )
                    }
                };
                if self.agents[peer].manages(&n.reporter) {
                    // The reporter's own peer already delivered its data.
                    return self.respond(
                        peer,
                        rendezvous,
                        ChannelKind::Ci,
                        Message::response_to(&msg, Code::CHANGED),
                        seq,
                    );
                }
                if let Err(err) = self.overlays.direct_reply(&overlay_id, peer) {
                    return self.respond(
                        peer,
                        rendezvous,
                        ChannelKind::Ci,
                        ci_response(&msg, Code::NOT_FOUND, &err.to_string()),
                        seq,
                    );
                }
                let body = ContourReply {
                    round: n.round,
                    peer: peer.clone(),
                    observations: self.observe_at(peer, &n),
                };
                let resp = reply(
                    OverlayMsgKind::DirectReply,
                    serde_json::to_vec(&body).expect("reply serializes"),
                );
                let compute = ms(self.cfg.costs.fca_compute_ms);
                self.send_overlay_response(
                    peer,
                    rendezvous,
                    resp,
                    OverlayMsgKind::DirectReply,
                    overlay_id,
                    seq,
                    compute,
                );
            }
            OverlayMsgKind::JoinRequest | OverlayMsgKind::DirectReply => {
                self.respond(
                    peer,
                    rendezvous,
                    ChannelKind::Ci,
                    ci_response(&msg, Code::BAD_REQUEST, "not a request kind"),
                    seq,
                );
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn send_overlay_response(
        &mut self,
        from: &NodeId,
        to: &NodeId,
        resp: Message,
        kind: OverlayMsgKind,
        overlay_id: OverlayId,
        cause: u64,
        extra: SimDuration,
    ) {
        let delay = extra + self.overlay_delay();
        self.send_after(
            delay,
            Outgoing {
                from: from.clone(),
                to: to.clone(),
                channel: ChannelKind::Ci,
                message: resp,
                response: true,
                meta: Meta {
                    overlay: Some((kind, overlay_id)),
                    cause: Some(cause),
                    ..Meta::default()
                },
            },
        );
    }

    fn on_direct_fca(&mut self, requester: &NodeId, peer: &NodeId, seq: u64, msg: Message) {
        let n: FireNotification = match serde_json::from_slice(&msg.payload) {
            Ok(n) => n,
            Err(err) => {
                return self.respond(
                    peer,
                    requester,
                    ChannelKind::Ci,
                    ci_response(&msg, Code::BAD_REQUEST, &err.to_string()),
                    seq,
                )
            }
        };
        if !self.agents.contains_key(peer) {
            return self.respond(
                peer,
                requester,
                ChannelKind::Ci,
                ci_response(&msg, Code::NOT_FOUND, "no agent"),
                seq,
            );
        }
        let body = ContourReply {
            round: n.round,
            peer: peer.clone(),
            observations: self.observe_at(peer, &n),
        };
        let resp = Message::response_to(&msg, Code::CONTENT).with_payload(
            content_format::JSON,
            serde_json::to_vec(&body).expect("reply serializes"),
        );
        let compute = ms(self.cfg.costs.fca_compute_ms);
        self.send_after(
            compute,
            Outgoing {
                from: peer.clone(),
                to: requester.clone(),
                channel: ChannelKind::Ci,
                message: resp,
                response: true,
                meta: Meta {
                    cause: Some(seq),
                    ..Meta::default()
                },
            },
        );
    }

    fn on_response(&mut self, from: &NodeId, to: &NodeId, seq: u64, msg: Message) {
        let Some(pending) = self.pending.remove(&(to.clone(), msg.message_id)) else {
            return self.drop_event(
                to,
                format!("unsolicited response {} from {from}", msg.message_id),
            );
        };
        let now = self.now();
        match pending {
            Pending::GiData => {}
            Pending::DiPost { series, sent_at } => {
                if msg.code == Code::CREATED {
                    let ex = Exchange {
                        sent_at,
                        response_at: Some(now),
                    };
                    self.samples
                        .push(measure_hpd(&ex, self.iteration, series).expect("response arrived"));
                } else {
                    self.drop_event(to, format!("Di POST refused with {}", msg.code));
                }
            }
            Pending::Pci {
                requester,
                request,
                target,
                call,
                cause,
            } => {
                let agent = self
                    .agents
                    .get_mut(to)
                    .expect("pending PCi calls belong to agents");
                let reply = match agent.dialect().decode(&msg.payload) {
                    Ok(NativeFrame::Reply(r)) => r,
                    _ => return self.drop_event(to, "bad native reply"),
                };
                let resp = agent.finish_ci(&requester, &request, &target, &call, &reply);
                self.respond(to, &requester, ChannelKind::Ci, resp, cause);
                let _ = seq;
            }
            Pending::Advertise { app, peer } => {
                let cfg = &self.cfg.applications[app];
                let accepted = OverlayMessage::decode(&msg.payload).is_ok_and(|om| {
                    om.kind == OverlayMsgKind::JoinRequest && om.overlay_id == cfg.overlay_id
                });
                if !accepted {
                    self.apps[app].awaiting -= 1;
                    self.drop_event(to, format!("{peer} declined {}", cfg.overlay_id));
                    return self.check_ready(app);
                }
                match self.overlays.join(&cfg.overlay_id, &peer) {
                    Ok(ack) => {
                        let body = serde_json::to_vec(&ack).expect("ack serializes");
                        self.send_overlay_request(
                            app,
                            &peer,
                            OverlayMsgKind::JoinAck,
                            "join",
                            body,
                            |peer| Pending::JoinAck { app, peer },
                        );
                    }
                    Err(err) => {
                        self.apps[app].awaiting -= 1;
                        self.drop_event(to, err.to_string());
                        self.check_ready(app);
                    }
                }
            }
            Pending::JoinAck { app, peer } => {
                let cfg = &self.cfg.applications[app];
                let sensors: Vec<NodeId> = self.apps[app]
                    .sensors
                    .iter()
                    .filter(|(_, p)| **p == peer)
                    .map(|(s, _)| s.clone())
                    .collect();
                let tasks: Vec<TaskId> = cfg.tasks.iter().map(|t| t.task_id.clone()).collect();
                self.apps[app].awaiting += sensors.len() * tasks.len();
                self.apps[app].awaiting -= 1;
                for s in &sensors {
                    for t in &tasks {
                        self.send_deploy(app, &peer, s, t);
                    }
                }
                self.check_ready(app);
            }
            Pending::Deploy {
                app,
                peer,
                node,
                task,
            } => {
                self.apps[app].awaiting -= 1;
                let overlay_id = self.cfg.applications[app].overlay_id.clone();
                if msg.code.is_success() {
                    self.events.push(LogEvent::Lifecycle {
                        at: now,
                        overlay_id,
                        peer,
                        stage: Stage::TaskDelivery,
                        detail: Some(format!("{node}/{task}")),
                    });
                } else {
                    self.deploy_failures += 1;
                    let reason = String::from_utf8_lossy(&msg.payload).into_owned();
                    self.drop_event(
                        to,
                        format!("deploy {task} on {node} failed with {}: {reason}", msg.code),
                    );
                }
                self.check_ready(app);
            }
            Pending::Round { app } => self.on_round_reply(app, from, msg),
            Pending::Script(i) => {
                let sc = &self.cfg.control[i];
                self.events.push(LogEvent::Command {
                    at: now,
                    from: sc.from.clone(),
                    target: sc.command.target.clone(),
                    command: String::from_utf8(sc.command.to_json()).expect("JSON is UTF-8"),
                    code: msg.code.to_string(),
                });
            }
        }
    }

    fn on_round_reply(&mut self, app: usize, from: &NodeId, msg: Message) {
        let endpoint = self.cfg.applications[app].endpoint.clone();
        if msg.payload.is_empty() {
            // Acknowledgement from the reporter's own peer.
            return;
        }
        let body = if self.baseline {
            msg.payload.clone()
        } else {
            match OverlayMessage::decode(&msg.payload) {
                Ok(om) if om.kind == OverlayMsgKind::DirectReply => {
                    if let Err(err) = self.overlays.direct_reply(&om.overlay_id, from) {
                        return self.drop_event(&endpoint, err.to_string());
                    }
                    om.payload
                }
                _ => return self.drop_event(&endpoint, "malformed direct reply"),
            }
        };
        let reply: ContourReply = match serde_json::from_slice(&body) {
            Ok(r) => r,
            Err(err) => return self.drop_event(&endpoint, err.to_string()),
        };
        let now = self.now();
        let fire = self.apps[app]
            .fire
            .as_mut()
            .expect("rounds belong to fire apps");
        let outcome = match fire.on_reply(reply, now) {
            Ok(Some(o)) => o,
            Ok(None) => return,
            Err(err) => return self.drop_event(&endpoint, err.to_string()),
        };
        let context = format!(
            "{}/{}",
            self.cfg.applications[app].overlay_id, outcome.round.reporter
        );
        let sample =
            measure_fnd(&outcome.round, self.iteration, context).expect("round is complete");
        let positions = fire.positions();
        let inputs = outcome
            .observations
            .iter()
            .map(|o| ContourInput {
                node: o.node.clone(),
                position: positions.get(&o.node).copied(),
                window_ms: o.window.as_millis_f64(),
                notification_count: o.notification_count,
                rate: o.rate,
            })
            .collect();
        let log = FireRoundLog {
            app_id: fire.app_id.clone(),
            round: outcome.round.round,
            reporter: outcome.round.reporter.clone(),
            sent_at: outcome.round.sent_at,
            completed_at: now,
            fnd_ms: sample.value_ms,
            replies: outcome.round.replies.len(),
            params: fire.model().params,
            sectors: fire.sectors(),
            inputs,
            error: outcome.contour.as_ref().err().map(|e| e.to_string()),
            estimate: outcome.contour.ok(),
        };
        self.samples.push(sample);
        self.events.push(LogEvent::FireRound(log));
    }
}

/// Runs one iteration on a fresh world.
pub fn run_iteration(
    cfg: &ScenarioConfig,
    iteration: usize,
    baseline: bool,
) -> Result<IterationOutcome, ConfigError> {
    Ok(World::new(cfg, iteration, baseline)?.run())
}
