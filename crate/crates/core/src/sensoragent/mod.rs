//! Virtual sensor access layer.
//!
//! A [`SensorAgent`] runs on a Type B sensor or a GTO node. Towards
//! applications it speaks the standardized Di (data) and Ci (control)
//! interfaces; towards the nodes it manages it speaks their proprietary
//! dialect over PDi/PCi, reaching Type A nodes through Gi.

mod control;
mod dialect;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use control::{ControlAction, ControlCommand, MalformedCommand, Verb};
pub use dialect::{Dialect, DialectError, NativeFrame, NativeReport, PciCall, PciReply};

use crate::ids::{AgentId, AppId, NodeId, OverlayId, PeerId, TaskId};
use crate::physnode::{NodeKind, PhysicalLayer};
use crate::simkernel::{SimDuration, SimTime};
use crate::vruntime::{RuntimeError, VirtualRuntime};
use crate::wirecodec::{content_format, senml_post, Code, MeasurementBatch, Message, SenMLRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    Di,
    Ci,
    PDi,
    PCi,
    Gi,
}

impl ChannelKind {
    /// Standardized channels have public URIs; proprietary ones do not.
    pub fn is_standard(self) -> bool {
        matches!(self, ChannelKind::Di | ChannelKind::Ci)
    }

    /// Data/control path discipline: Di requests carry only SenML-JSON,
    /// Ci never does.
    pub fn admits(self, m: &Message) -> bool {
        let senml = m.content_format == Some(content_format::SENML_JSON);
        match self {
            ChannelKind::Di => m.payload.is_empty() || senml,
            ChannelKind::Ci => !senml,
            ChannelKind::PDi | ChannelKind::PCi | ChannelKind::Gi => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentBinding {
    pub agent_id: AgentId,
    pub host: NodeId,
    pub managed: BTreeSet<NodeId>,
    pub dialect: Dialect,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("node {0} is not managed by this agent")]
    UnmanagedNode(NodeId),
    #[error(transparent)]
    Dialect(#[from] DialectError),
    #[error("{0:?} has no public URI")]
    ProprietaryChannel(ChannelKind),
    #[error("agent host {0} is a Type A node")]
    HostIsTypeA(NodeId),
    #[error("invalid binding: {0}")]
    InvalidBinding(String),
    #[error("unexpected native frame on PDi")]
    UnexpectedFrame,
}

/// Where Di data for one (node, task) goes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Route {
    pub app_id: AppId,
    pub endpoint: NodeId,
}

/// A Di POST ready to be sent to an application endpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct DiPost {
    pub to: NodeId,
    pub app_id: AppId,
    pub task_id: TaskId,
    pub origin: NodeId,
    pub message: Message,
}

/// What a Ci request turns into.
#[derive(Clone, Debug, PartialEq)]
pub enum CiPlan {
    /// Run `call` on `target`'s native control interface. Type A targets are
    /// reached over Gi.
    Pci {
        target: NodeId,
        call: PciCall,
        via_gi: bool,
    },
    Join {
        overlay_id: OverlayId,
        rendezvous: PeerId,
    },
}

/// Result of executing a native control call on a node.
#[derive(Clone, Debug, PartialEq)]
pub struct PciOutcome {
    pub reply: PciReply,
    /// Set for a successful deployment: when the new task should start.
    pub activate: Option<(TaskId, SimTime)>,
}

/// Executes a native control call against the node's task table.
pub fn execute_pci(
    runtime: &mut VirtualRuntime,
    node: &NodeId,
    call: &PciCall,
    now: SimTime,
) -> PciOutcome {
    let result = match call {
        PciCall::SetPriority { task_id, priority } => runtime
            .set_priority(node, task_id, *priority)
            .map(|()| (Code::CHANGED, None)),
        PciCall::SetPeriod { task_id, period } => runtime
            .set_period(node, task_id, *period)
            .map(|()| (Code::CHANGED, None)),
        PciCall::RemoveTask { task_id } => runtime
            .remove_task(node, task_id)
            .map(|_| (Code::CHANGED, None)),
        PciCall::DeployTask { task, start_at } => {
            let start = start_at.map_or(now, |s| s.max(now));
            runtime
                .deploy_task(node, task.clone())
                .map(|_| (Code::CREATED, Some((task.task_id.clone(), start))))
        }
    };
    match result {
        Ok((code, activate)) => PciOutcome {
            reply: PciReply {
                code,
                reason: String::new(),
            },
            activate,
        },
        Err(err) => {
            let code = match err {
                RuntimeError::UnknownNode(_) | RuntimeError::UnknownTask { .. } => Code::NOT_FOUND,
                RuntimeError::CapacityExceeded { .. }
                | RuntimeError::DuplicateTask { .. }
                | RuntimeError::ZeroPeriod => Code::BAD_REQUEST,
            };
            PciOutcome {
                reply: PciReply {
                    code,
                    reason: err.to_string(),
                },
                activate: None,
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct SensorAgent {
    binding: AgentBinding,
    routes: BTreeMap<(NodeId, TaskId), Route>,
    reports: BTreeMap<(NodeId, TaskId), Vec<SimTime>>,
    unrouted: u64,
    next_mid: u16,
}

impl SensorAgent {
    pub fn new(binding: AgentBinding, phys: &PhysicalLayer) -> Result<Self, AgentError> {
        let host = phys
            .node(&binding.host)
            .map_err(|_| AgentError::InvalidBinding(format!("unknown host {}", binding.host)))?;
        if host.kind == NodeKind::TypeA {
            return Err(AgentError::HostIsTypeA(binding.host.clone()));
        }
        for id in &binding.managed {
            let node = phys
                .node(id)
                .map_err(|_| AgentError::InvalidBinding(format!("unknown managed node {id}")))?;
            let ok = match node.kind {
                NodeKind::TypeA => node.gto_ref.as_ref() == Some(&binding.host),
                _ => *id == binding.host,
            };
            if !ok {
                return Err(AgentError::InvalidBinding(format!(
                    "{id} cannot be managed from {}",
                    binding.host
                )));
            }
        }
        Ok(SensorAgent {
            binding,
            routes: BTreeMap::new(),
            reports: BTreeMap::new(),
            unrouted: 0,
            next_mid: 0,
        })
    }

    pub fn id(&self) -> &AgentId {
        &self.binding.agent_id
    }

    pub fn host(&self) -> &NodeId {
        &self.binding.host
    }

    pub fn binding(&self) -> &AgentBinding {
        &self.binding
    }

    pub fn dialect(&self) -> Dialect {
        self.binding.dialect
    }

    pub fn manages(&self, node: &NodeId) -> bool {
        self.binding.managed.contains(node)
    }

    /// Message id for the next request this agent originates. The token
    /// mirrors the id.
    pub fn next_message_id(&mut self) -> u16 {
        let mid = self.next_mid;
        self.next_mid = self.next_mid.wrapping_add(1);
        mid
    }

    /// `agents/<agent>/nodes/<node>/di|ci`.
    pub fn uri_for(&self, channel: ChannelKind, node: &NodeId) -> Result<Vec<String>, AgentError> {
        let leaf = match channel {
            ChannelKind::Di => "di",
            ChannelKind::Ci => "ci",
            other => return Err(AgentError::ProprietaryChannel(other)),
        };
        Ok(vec![
            "agents".into(),
            self.binding.agent_id.to_string(),
            "nodes".into(),
            node.to_string(),
            leaf.into(),
        ])
    }

    pub fn add_route(&mut self, node: NodeId, task: TaskId, route: Route) {
        self.routes.insert((node, task), route);
    }

    pub fn route(&self, node: &NodeId, task: &TaskId) -> Option<&Route> {
        self.routes.get(&(node.clone(), task.clone()))
    }

    /// Reports received and dropped because no application subscribed.
    pub fn unrouted(&self) -> u64 {
        self.unrouted
    }

    /// Sample times of every report received from `(node, task)`.
    pub fn report_times(&self, node: &NodeId, task: &TaskId) -> &[SimTime] {
        self.reports
            .get(&(node.clone(), task.clone()))
            .map_or(&[], Vec::as_slice)
    }

    /// Translates a native report frame from a managed node into one
    /// SenML-JSON POST per subscribed application.
    pub fn ingest_pdi(&mut self, from: &NodeId, bytes: &[u8]) -> Result<Vec<DiPost>, AgentError> {
        if !self.manages(from) {
            return Err(AgentError::UnmanagedNode(from.clone()));
        }
        let NativeFrame::Reports(reports) = self.binding.dialect.decode(bytes)? else {
            return Err(AgentError::UnexpectedFrame);
        };
        let mut groups: BTreeMap<(NodeId, AppId, TaskId), Vec<SenMLRecord>> = BTreeMap::new();
        for report in reports {
            let key = (from.clone(), report.task_id.clone());
            self.reports
                .entry(key.clone())
                .or_default()
                .push(SimTime::from_micros(
                    (report.record.time * 1e6).round() as u64
                ));
            let Some(route) = self.routes.get(&key) else {
                self.unrouted += 1;
                continue;
            };
            groups
                .entry((route.endpoint.clone(), route.app_id.clone(), report.task_id))
                .or_default()
                .push(report.record);
        }
        let mut posts = Vec::with_capacity(groups.len());
        for ((to, app_id, task_id), records) in groups {
            let mid = self.next_message_id();
            let message = senml_post(
                mid,
                mid.to_be_bytes().to_vec(),
                data_uri(&app_id, &task_id),
                &MeasurementBatch::new(records),
            )
            .expect("sampled records are finite and named");
            posts.push(DiPost {
                to,
                app_id,
                task_id,
                origin: from.clone(),
                message,
            });
        }
        Ok(posts)
    }

    /// Decodes and validates a Ci request. The error is the response code.
    pub fn handle_ci(&self, request: &Message) -> Result<(ControlCommand, CiPlan), Code> {
        let cmd = ControlCommand::from_json(&request.payload).map_err(|_| Code::BAD_REQUEST)?;
        if !self.manages(&cmd.target) {
            return Err(Code::NOT_FOUND);
        }
        let via_gi = cmd.target != self.binding.host;
        let call = match &cmd.action {
            ControlAction::JoinOverlay {
                overlay_id,
                rendezvous,
            } => {
                let plan = CiPlan::Join {
                    overlay_id: overlay_id.clone(),
                    rendezvous: rendezvous.clone(),
                };
                return Ok((cmd, plan));
            }
            ControlAction::SetPriority { task_id, priority } => PciCall::SetPriority {
                task_id: task_id.clone(),
                priority: *priority,
            },
            ControlAction::SetPeriod { task_id, period_ms } => PciCall::SetPeriod {
                task_id: task_id.clone(),
                period: SimDuration::from_millis_f64(*period_ms),
            },
            ControlAction::DeployTask { task, start_at_ms } => PciCall::DeployTask {
                task: task.clone(),
                start_at: start_at_ms.map(|ms| SimTime::ZERO + SimDuration::from_millis_f64(ms)),
            },
            ControlAction::RemoveTask { task_id } => PciCall::RemoveTask {
                task_id: task_id.clone(),
            },
        };
        let plan = CiPlan::Pci {
            target: cmd.target.clone(),
            call,
            via_gi,
        };
        Ok((cmd, plan))
    }

    /// Applies the routing side effects of a completed control call and
    /// builds the Ci response for `requester`.
    pub fn finish_ci(
        &mut self,
        requester: &NodeId,
        request: &Message,
        target: &NodeId,
        call: &PciCall,
        reply: &PciReply,
    ) -> Message {
        if reply.code.is_success() {
            match call {
                PciCall::DeployTask { task, .. } => self.add_route(
                    target.clone(),
                    task.task_id.clone(),
                    Route {
                        app_id: task.app_id.clone(),
                        endpoint: requester.clone(),
                    },
                ),
                PciCall::RemoveTask { task_id } => {
                    self.routes.remove(&(target.clone(), task_id.clone()));
                }
                _ => {}
            }
        }
        ci_response(request, reply.code, &reply.reason)
    }

    /// Runs a Ci request to completion in-process, without network hops.
    pub fn handle_ci_local(
        &mut self,
        requester: &NodeId,
        request: &Message,
        runtime: &mut VirtualRuntime,
        now: SimTime,
    ) -> Message {
        match self.handle_ci(request) {
            Err(code) => ci_response(request, code, ""),
            Ok((_, CiPlan::Join { .. })) => ci_response(request, Code::CHANGED, ""),
            Ok((_, CiPlan::Pci { target, call, .. })) => {
                let outcome = execute_pci(runtime, &target, &call, now);
                if let Some((task, at)) = &outcome.activate {
                    runtime
                        .activate(&target, task, *at)
                        .expect("task was just deployed");
                }
                self.finish_ci(requester, request, &target, &call, &outcome.reply)
            }
        }
    }
}

/// Application-side resource receiving one task's data: `apps/<app>/tasks/<task>`.
pub fn data_uri(app: &AppId, task: &TaskId) -> Vec<String> {
    vec![
        "apps".into(),
        app.to_string(),
        "tasks".into(),
        task.to_string(),
    ]
}

/// Builds a Ci request carrying `cmd`.
pub fn ci_request(message_id: u16, uri_path: Vec<String>, cmd: &ControlCommand) -> Message {
    Message::request(Code::POST, message_id)
        .with_token(message_id.to_be_bytes().to_vec())
        .with_path(uri_path)
        .with_payload(content_format::JSON, cmd.to_json())
}

/// Ci response with an optional JSON `{"reason"}` body.
pub fn ci_response(request: &Message, code: Code, reason: &str) -> Message {
    let resp = Message::response_to(request, code);
    if reason.is_empty() {
        resp
    } else {
        let body = serde_json::json!({ "reason": reason });
        resp.with_payload(content_format::JSON, body.to_string().into_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::Position;
    use crate::physnode::{Environment, PhysicalNode, TEMPERATURE};
    use crate::vruntime::{AppTask, ReportCondition};
    use crate::wirecodec::{decode_senml, MsgType};

    fn phys() -> PhysicalLayer {
        PhysicalLayer::new(
            vec![
                PhysicalNode::new("gto-1", NodeKind::Gto, Position::new(0.0, 0.0)),
                PhysicalNode::new("gto-2", NodeKind::Gto, Position::new(50.0, 0.0)),
                PhysicalNode::new("sensor-01", NodeKind::TypeA, Position::new(1.0, 0.0))
                    .with_gto("gto-1")
                    .with_max_tasks(3),
                PhysicalNode::new("sensor-02", NodeKind::TypeA, Position::new(2.0, 0.0))
                    .with_gto("gto-1")
                    .with_max_tasks(3),
                PhysicalNode::new("sensor-03", NodeKind::TypeA, Position::new(3.0, 0.0))
                    .with_gto("gto-2"),
                PhysicalNode::new("smart-1", NodeKind::TypeB, Position::new(9.0, 9.0)),
            ],
            Environment::calm(20.0),
        )
        .unwrap()
    }

    fn agent(dialect: Dialect) -> SensorAgent {
        SensorAgent::new(
            AgentBinding {
                agent_id: "agentX".into(),
                host: "gto-1".into(),
                managed: ["sensor-01".into(), "sensor-02".into()].into(),
                dialect,
            },
            &phys(),
        )
        .unwrap()
    }

    fn runtime() -> VirtualRuntime {
        let mut rt = VirtualRuntime::new(1);
        for n in phys().nodes() {
            rt.add_node(n.id.clone(), n.max_tasks);
        }
        rt
    }

    fn task(id: &str, app: &str, priority: u32) -> AppTask {
        AppTask {
            task_id: id.into(),
            app_id: app.into(),
            quantity: TEMPERATURE.into(),
            period: SimDuration::from_secs(1),
            priority,
            report_condition: ReportCondition::Always,
        }
    }

    fn cmd(target: &str, action: ControlAction) -> Message {
        ci_request(
            1,
            vec!["agents".into(), "agentX".into()],
            &ControlCommand::new(target, action),
        )
    }

    #[test]
    fn uri_scheme() {
        let a = agent(Dialect::KeyValue);
        let n3 = NodeId::new("n3");
        assert_eq!(
            a.uri_for(ChannelKind::Di, &n3).unwrap().join("/"),
            "agents/agentX/nodes/n3/di"
        );
        assert_eq!(
            a.uri_for(ChannelKind::Ci, &n3).unwrap().join("/"),
            "agents/agentX/nodes/n3/ci"
        );
        assert_eq!(
            a.uri_for(ChannelKind::Di, &n3),
            a.uri_for(ChannelKind::Di, &n3)
        );
        for ch in [ChannelKind::PDi, ChannelKind::PCi, ChannelKind::Gi] {
            assert_eq!(a.uri_for(ch, &n3), Err(AgentError::ProprietaryChannel(ch)));
        }
    }

    #[test]
    fn binding_validation() {
        let p = phys();
        let bad_host = AgentBinding {
            agent_id: "a".into(),
            host: "sensor-01".into(),
            managed: BTreeSet::new(),
            dialect: Dialect::KeyValue,
        };
        assert!(matches!(
            SensorAgent::new(bad_host, &p),
            Err(AgentError::HostIsTypeA(_))
        ));
        let foreign = AgentBinding {
            agent_id: "a".into(),
            host: "gto-1".into(),
            managed: ["sensor-03".into()].into(),
            dialect: Dialect::KeyValue,
        };
        assert!(matches!(
            SensorAgent::new(foreign, &p),
            Err(AgentError::InvalidBinding(_))
        ));
        let smart = AgentBinding {
            agent_id: "b".into(),
            host: "smart-1".into(),
            managed: ["smart-1".into()].into(),
            dialect: Dialect::CompactBinary,
        };
        assert!(SensorAgent::new(smart, &p).is_ok());
    }

    #[test]
    fn fire_reading_becomes_senml_post_to_the_application() {
        let mut a = agent(Dialect::KeyValue);
        a.add_route(
            "sensor-01".into(),
            "fire-alarm".into(),
            Route {
                app_id: "city".into(),
                endpoint: "city-admin".into(),
            },
        );
        let record = SenMLRecord::new("sensor-01", TEMPERATURE, "Cel", 212.5, 31.0);
        let frame = NativeFrame::Reports(vec![NativeReport {
            task_id: "fire-alarm".into(),
            record: record.clone(),
        }]);
        let posts = a
            .ingest_pdi(&"sensor-01".into(), &Dialect::KeyValue.encode(&frame))
            .unwrap();
        assert_eq!(posts.len(), 1);
        let post = &posts[0];
        assert_eq!(post.to, NodeId::new("city-admin"));
        assert_eq!(post.message.code, Code::POST);
        assert_eq!(
            post.message.content_format,
            Some(content_format::SENML_JSON)
        );
        assert_eq!(
            decode_senml(&post.message.payload).unwrap().records,
            [record]
        );
        assert!(ChannelKind::Di.admits(&post.message));
        assert!(!ChannelKind::Ci.admits(&post.message));
        assert_eq!(
            a.report_times(&"sensor-01".into(), &"fire-alarm".into()),
            [SimTime::from_secs(31)]
        );
    }

    #[test]
    fn reports_split_per_application() {
        let mut a = agent(Dialect::CompactBinary);
        for (task, app, ep) in [
            ("t1", "city", "city-admin"),
            ("t2", "home", "home-app"),
            ("t3", "city", "city-admin"),
        ] {
            a.add_route(
                "sensor-02".into(),
                task.into(),
                Route {
                    app_id: app.into(),
                    endpoint: ep.into(),
                },
            );
        }
        let frame = NativeFrame::Reports(
            ["t1", "t2", "t3", "unsubscribed"]
                .iter()
                .map(|t| NativeReport {
                    task_id: (*t).into(),
                    record: SenMLRecord::new("sensor-02", TEMPERATURE, "Cel", 20.0, 1.0),
                })
                .collect(),
        );
        let posts = a
            .ingest_pdi(&"sensor-02".into(), &Dialect::CompactBinary.encode(&frame))
            .unwrap();
        let summary: Vec<_> = posts
            .iter()
            .map(|p| (p.to.to_string(), p.task_id.to_string()))
            .collect();
        assert_eq!(
            summary,
            [
                ("city-admin".to_string(), "t1".to_string()),
                ("city-admin".to_string(), "t3".to_string()),
                ("home-app".to_string(), "t2".to_string())
            ]
        );
        assert_eq!(posts[0].message.uri(), "apps/city/tasks/t1");
        assert_eq!(a.unrouted(), 1);
    }

    #[test]
    fn unmanaged_or_garbled_pdi() {
        let mut a = agent(Dialect::KeyValue);
        assert_eq!(
            a.ingest_pdi(&"sensor-03".into(), b"op=report"),
            Err(AgentError::UnmanagedNode("sensor-03".into()))
        );
        assert!(matches!(
            a.ingest_pdi(&"sensor-01".into(), b"\xff"),
            Err(AgentError::Dialect(_))
        ));
        let call = Dialect::KeyValue.encode(&NativeFrame::Call(PciCall::RemoveTask {
            task_id: "t".into(),
        }));
        assert_eq!(
            a.ingest_pdi(&"sensor-01".into(), &call),
            Err(AgentError::UnexpectedFrame)
        );
    }

    #[test]
    fn set_priority_on_sensor_02_reorders_emissions() {
        let mut a = agent(Dialect::KeyValue);
        let mut rt = runtime();
        let p = phys();
        let app = NodeId::new("city-admin");
        for (id, prio) in [("city-alarm", 0), ("home-temp", 1), ("city-temp", 2)] {
            let resp = a.handle_ci_local(
                &app,
                &cmd(
                    "sensor-02",
                    ControlAction::DeployTask {
                        task: task(id, "city", prio),
                        start_at_ms: None,
                    },
                ),
                &mut rt,
                SimTime::ZERO,
            );
            assert_eq!(resp.code, Code::CREATED);
            assert_eq!(resp.msg_type, MsgType::Acknowledgement);
        }
        let order = |rt: &mut VirtualRuntime, s: u64| -> Vec<String> {
            rt.tick(&"sensor-02".into(), SimTime::from_secs(s), &p)
                .into_iter()
                .map(|e| e.task_id.to_string())
                .collect()
        };
        assert_eq!(order(&mut rt, 1), ["city-alarm", "home-temp", "city-temp"]);

        let resp = a.handle_ci_local(
            &app,
            &cmd(
                "sensor-02",
                ControlAction::SetPriority {
                    task_id: "city-temp".into(),
                    priority: 0,
                },
            ),
            &mut rt,
            SimTime::from_secs(1),
        );
        assert_eq!(resp.code, Code::CHANGED);
        assert_eq!(order(&mut rt, 2), ["city-alarm", "city-temp", "home-temp"]);
    }

    #[test]
    fn ci_error_mapping() {
        let mut a = agent(Dialect::KeyValue);
        let mut rt = runtime();
        let app = NodeId::new("city-admin");
        let unknown = a.handle_ci_local(
            &app,
            &cmd(
                "sensor-01",
                ControlAction::SetPriority {
                    task_id: "ghost".into(),
                    priority: 1,
                },
            ),
            &mut rt,
            SimTime::ZERO,
        );
        assert_eq!(unknown.code, Code::NOT_FOUND);

        // sensor-03 belongs to another agent.
        let foreign = a.handle_ci_local(
            &app,
            &cmd(
                "sensor-03",
                ControlAction::RemoveTask {
                    task_id: "t".into(),
                },
            ),
            &mut rt,
            SimTime::ZERO,
        );
        assert_eq!(foreign.code, Code::NOT_FOUND);

        let mut garbage = cmd(
            "sensor-01",
            ControlAction::RemoveTask {
                task_id: "t".into(),
            },
        );
        garbage.payload = b"{".to_vec();
        assert_eq!(
            a.handle_ci_local(&app, &garbage, &mut rt, SimTime::ZERO)
                .code,
            Code::BAD_REQUEST
        );

        // sensor-03's capacity is the Type A default of 2; sensor-01 allows 3.
        for i in 0..3 {
            let r = a.handle_ci_local(
                &app,
                &cmd(
                    "sensor-01",
                    ControlAction::DeployTask {
                        task: task(&format!("t{i}"), "city", 1),
                        start_at_ms: None,
                    },
                ),
                &mut rt,
                SimTime::ZERO,
            );
            assert_eq!(r.code, Code::CREATED);
        }
        let full = a.handle_ci_local(
            &app,
            &cmd(
                "sensor-01",
                ControlAction::DeployTask {
                    task: task("t9", "city", 1),
                    start_at_ms: None,
                },
            ),
            &mut rt,
            SimTime::ZERO,
        );
        assert_eq!(full.code.class(), 4);
        assert_eq!(full.code, Code::BAD_REQUEST);
        assert!(!full.payload.is_empty());
    }

    #[test]
    fn plans_route_type_a_targets_over_gi() {
        let a = agent(Dialect::KeyValue);
        let (_, plan) = a
            .handle_ci(&cmd(
                "sensor-01",
                ControlAction::SetPeriod {
                    task_id: "t".into(),
                    period_ms: 500.0,
                },
            ))
            .unwrap();
        assert_eq!(
            plan,
            CiPlan::Pci {
                target: "sensor-01".into(),
                call: PciCall::SetPeriod {
                    task_id: "t".into(),
                    period: SimDuration::from_millis(500)
                },
                via_gi: true,
            }
        );
        let (_, join) = a
            .handle_ci(&cmd(
                "sensor-01",
                ControlAction::JoinOverlay {
                    overlay_id: "fire".into(),
                    rendezvous: "city-admin".into(),
                },
            ))
            .unwrap();
        assert!(matches!(join, CiPlan::Join { .. }));
    }

    #[test]
    fn deploy_routes_data_to_the_requester() {
        let mut a = agent(Dialect::KeyValue);
        let mut rt = runtime();
        a.handle_ci_local(
            &"home-app".into(),
            &cmd(
                "sensor-01",
                ControlAction::DeployTask {
                    task: task("home-temp", "home", 1),
                    start_at_ms: Some(5000.0),
                },
            ),
            &mut rt,
            SimTime::ZERO,
        );
        assert_eq!(
            a.route(&"sensor-01".into(), &"home-temp".into()),
            Some(&Route {
                app_id: "home".into(),
                endpoint: "home-app".into()
            })
        );
        assert_eq!(
            rt.next_due(&"sensor-01".into()),
            Some(SimTime::from_secs(6))
        );
        a.handle_ci_local(
            &"home-app".into(),
            &cmd(
                "sensor-01",
                ControlAction::RemoveTask {
                    task_id: "home-temp".into(),
                },
            ),
            &mut rt,
            SimTime::from_secs(7),
        );
        assert!(a.route(&"sensor-01".into(), &"home-temp".into()).is_none());
    }
}
