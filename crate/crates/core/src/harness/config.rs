//! Scenario files: JSON, validated in full before anything runs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::firecontour::RateParams;
use crate::ids::{AgentId, AppId, NodeId, OverlayId, Position, TaskId};
use crate::physnode::{Environment, Fire, NodeKind, PhysicalLayer, PhysicalNode, TEMPERATURE};
use crate::registry::{Criteria, Registry, SensorDescriptor};
use crate::sensoragent::{AgentBinding, ControlCommand, Dialect, SensorAgent};
use crate::simkernel::{LinkModel, SimDuration, SimTime};
use crate::vruntime::{AppTask, ReportCondition};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario is not valid JSON for the schema: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Per-hop link parameters, in simulated milliseconds.
///
/// The defaults are a calibration: one hop costs 9.48 ms, so a request and
/// its response take 18.96 ms once the session exists. They place outputs
/// near familiar LAN numbers and carry no claim about real networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    pub propagation_ms: f64,
    pub processing_ms: f64,
    pub session_setup_ms: f64,
    pub jitter_max_ms: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            propagation_ms: 8.0,
            processing_ms: 1.48,
            session_setup_ms: 40.0,
            jitter_max_ms: 0.0,
        }
    }
}

/// Software costs outside the link model, in simulated milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostConfig {
    /// Added before every overlay message leaves its sender.
    pub overlay_processing_ms: f64,
    /// Local work at the rendezvous before discovery starts.
    pub overlay_setup_ms: f64,
    /// Time a peer spends computing its contour reply.
    pub fca_compute_ms: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            overlay_processing_ms: 0.31,
            overlay_setup_ms: 0.0,
            fca_compute_ms: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FireConfig {
    pub origin: Position,
    pub start_ms: f64,
    pub intensity: f64,
    pub falloff_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub ambient_temp: f64,
    #[serde(default)]
    pub fire: Option<FireConfig>,
}

fn temperature_only() -> BTreeSet<String> {
    [TEMPERATURE.to_string()].into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: NodeId,
    pub kind: NodeKind,
    pub position: Position,
    #[serde(default)]
    pub gto: Option<NodeId>,
    #[serde(default)]
    pub max_tasks: Option<usize>,
    #[serde(default = "default_owner")]
    pub owner: String,
    /// Ignored for GTO nodes, which do not sense.
    #[serde(default = "temperature_only")]
    pub quantities: BTreeSet<String>,
}

fn default_owner() -> String {
    "city".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub agent_id: AgentId,
    pub host: NodeId,
    pub dialect: Dialect,
}

fn default_quantity() -> String {
    TEMPERATURE.into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub task_id: TaskId,
    #[serde(default = "default_quantity")]
    pub quantity: String,
    pub period_ms: f64,
    pub priority: u32,
    #[serde(default = "always")]
    pub report_condition: ReportCondition,
}

fn always() -> ReportCondition {
    ReportCondition::Always
}

fn default_sectors() -> usize {
    8
}

/// Fire contour settings of an application.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FireAppConfig {
    /// Task whose reports are fire notifications.
    pub alarm_task: TaskId,
    pub window_ms: f64,
    pub rate: RateParams,
    #[serde(default = "default_sectors")]
    pub sectors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub app_id: AppId,
    /// Network node the application runs on. It is also the overlay's
    /// rendezvous.
    pub endpoint: NodeId,
    pub overlay_id: OverlayId,
    pub service_name: String,
    /// Registry query selecting the sensors the overlay is built over.
    #[serde(default)]
    pub candidates: Criteria,
    pub tasks: Vec<TaskConfig>,
    /// When overlay creation starts.
    #[serde(default)]
    pub start_ms: f64,
    /// Earliest activation of deployed tasks. Defaults to delivery time.
    #[serde(default)]
    pub task_start_ms: Option<f64>,
    #[serde(default)]
    pub fire: Option<FireAppConfig>,
}

impl AppConfig {
    pub fn app_task(&self, t: &TaskConfig) -> AppTask {
        AppTask {
            task_id: t.task_id.clone(),
            app_id: self.app_id.clone(),
            quantity: t.quantity.clone(),
            period: SimDuration::from_millis_f64(t.period_ms),
            priority: t.priority,
            report_condition: t.report_condition.clone(),
        }
    }

    pub fn task(&self, id: &TaskId) -> Option<&TaskConfig> {
        self.tasks.iter().find(|t| &t.task_id == id)
    }
}

/// A control command an application sends at a fixed time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedCommand {
    pub at_ms: f64,
    pub from: NodeId,
    pub command: ControlCommand,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default = "one")]
    pub iterations: usize,
    /// Simulated length of each iteration.
    pub duration_ms: f64,
    #[serde(default)]
    pub baseline_mode: bool,
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub costs: CostConfig,
    pub environment: EnvironmentConfig,
    pub nodes: Vec<NodeConfig>,
    pub agents: Vec<AgentConfig>,
    pub applications: Vec<AppConfig>,
    #[serde(default)]
    pub control: Vec<ScriptedCommand>,
}

fn ms_time(ms: f64) -> SimTime {
    SimTime::ZERO + SimDuration::from_millis_f64(ms)
}

fn check_ms(what: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "{what} must be a finite, non-negative number of ms (got {v})"
        )))
    }
}

fn check_positive(what: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{what} must be positive (got {v})")))
    }
}

impl ScenarioConfig {
    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn link_model(&self, jitter_seed: u64) -> LinkModel {
        LinkModel {
            propagation: SimDuration::from_millis_f64(self.link.propagation_ms),
            processing: SimDuration::from_millis_f64(self.link.processing_ms),
            session_setup: SimDuration::from_millis_f64(self.link.session_setup_ms),
            jitter_max: SimDuration::from_millis_f64(self.link.jitter_max_ms),
            jitter_seed,
        }
    }

    pub fn environment(&self) -> Environment {
        Environment {
            ambient_temp: self.environment.ambient_temp,
            fire: self.environment.fire.as_ref().map(|f| Fire {
                origin: f.origin,
                start: ms_time(f.start_ms),
                intensity: f.intensity,
                falloff_radius: f.falloff_radius,
            }),
        }
    }

    pub fn physical_layer(&self) -> Result<PhysicalLayer, ConfigError> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| {
                let mut p = PhysicalNode::new(n.id.clone(), n.kind, n.position);
                p.gto_ref = n.gto.clone();
                if let Some(max) = n.max_tasks {
                    p = p.with_max_tasks(max);
                }
                p
            })
            .collect();
        PhysicalLayer::new(nodes, self.environment()).map_err(|e| invalid(e.to_string()))
    }

    /// One binding per agent: the host manages itself when it senses, plus
    /// every Type A node that names it as GTO.
    pub fn bindings(&self) -> Vec<AgentBinding> {
        self.agents
            .iter()
            .map(|a| {
                let managed = self
                    .nodes
                    .iter()
                    .filter(|n| match n.kind {
                        NodeKind::TypeA => n.gto.as_ref() == Some(&a.host),
                        NodeKind::TypeB => n.id == a.host,
                        NodeKind::Gto => false,
                    })
                    .map(|n| n.id.clone())
                    .collect();
                AgentBinding {
                    agent_id: a.agent_id.clone(),
                    host: a.host.clone(),
                    managed,
                    dialect: a.dialect,
                }
            })
            .collect()
    }

    /// Sensing node to the agent that manages it.
    pub fn agent_for_node(&self) -> BTreeMap<NodeId, AgentId> {
        self.bindings()
            .into_iter()
            .flat_map(|b| {
                let id = b.agent_id.clone();
                b.managed.into_iter().map(move |n| (n, id.clone()))
            })
            .collect()
    }

    pub fn registry(&self) -> Result<Registry, ConfigError> {
        let agent_of = self.agent_for_node();
        let hosted: BTreeMap<&NodeId, &AgentId> =
            self.agents.iter().map(|a| (&a.host, &a.agent_id)).collect();
        let mut reg = Registry::new();
        for n in &self.nodes {
            let agent = match n.kind {
                NodeKind::Gto => hosted.get(&n.id).map(|a| (*a).clone()),
                _ => agent_of.get(&n.id).cloned(),
            };
            let Some(agent) = agent else {
                if n.kind == NodeKind::Gto {
                    continue;
                }
                return Err(invalid(format!(
                    "sensor {} is not managed by any agent",
                    n.id
                )));
            };
            let quantities = if n.kind == NodeKind::Gto {
                BTreeSet::new()
            } else {
                n.quantities.clone()
            };
            reg.register(SensorDescriptor {
                node_id: n.id.clone(),
                kind: n.kind,
                quantities,
                position: n.position,
                agent,
                owner: n.owner.clone(),
            })
            .map_err(|e| invalid(e.to_string()))?;
        }
        Ok(reg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.name.trim().is_empty() {
            return Err(invalid("name is empty"));
        }
        if self.iterations == 0 {
            return Err(invalid("iterations must be at least 1"));
        }
        check_positive("duration_ms", self.duration_ms)?;
        check_ms("link.propagation_ms", self.link.propagation_ms)?;
        check_ms("link.processing_ms", self.link.processing_ms)?;
        check_ms("link.session_setup_ms", self.link.session_setup_ms)?;
        check_ms("link.jitter_max_ms", self.link.jitter_max_ms)?;
        check_ms(
            "costs.overlay_processing_ms",
            self.costs.overlay_processing_ms,
        )?;
        check_ms("costs.overlay_setup_ms", self.costs.overlay_setup_ms)?;
        check_ms("costs.fca_compute_ms", self.costs.fca_compute_ms)?;
        if !self.environment.ambient_temp.is_finite() {
            return Err(invalid("ambient_temp must be finite"));
        }
        if let Some(f) = &self.environment.fire {
            check_ms("fire.start_ms", f.start_ms)?;
            check_positive("fire.falloff_radius", f.falloff_radius)?;
            if !(f.intensity.is_finite() && f.intensity >= 0.0) {
                return Err(invalid("fire.intensity must be non-negative"));
            }
        }

        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if n.id.as_str().is_empty() || !ids.insert(&n.id) {
                return Err(invalid(format!(
                    "node id {:?} is empty or repeated",
                    n.id.as_str()
                )));
            }
        }
        let phys = self.physical_layer()?;

        let mut agent_ids = BTreeSet::new();
        let mut hosts = BTreeSet::new();
        for a in &self.agents {
            if !agent_ids.insert(&a.agent_id) || !hosts.insert(&a.host) {
                return Err(invalid(format!(
                    "agent {} or its host {} is repeated",
                    a.agent_id, a.host
                )));
            }
        }
        for b in self.bindings() {
            SensorAgent::new(b, &phys).map_err(|e| invalid(e.to_string()))?;
        }
        let registry = self.registry()?;

        let mut app_ids = BTreeSet::new();
        let mut endpoints = BTreeSet::new();
        let mut overlays = BTreeSet::new();
        let mut task_ids = BTreeSet::new();
        for app in &self.applications {
            if !app_ids.insert(&app.app_id) {
                return Err(invalid(format!("application {} is repeated", app.app_id)));
            }
            if ids.contains(&app.endpoint) || !endpoints.insert(&app.endpoint) {
                return Err(invalid(format!(
                    "endpoint {} clashes with another node",
                    app.endpoint
                )));
            }
            if !overlays.insert(&app.overlay_id) {
                return Err(invalid(format!("overlay {} is repeated", app.overlay_id)));
            }
            if app.service_name.trim().is_empty() {
                return Err(invalid(format!(
                    "overlay {} has no service name",
                    app.overlay_id
                )));
            }
            if app.tasks.is_empty() {
                return Err(invalid(format!("application {} has no tasks", app.app_id)));
            }
            check_ms("start_ms", app.start_ms)?;
            if let Some(t) = app.task_start_ms {
                check_ms("task_start_ms", t)?;
            }
            for t in &app.tasks {
                if !task_ids.insert(&t.task_id) {
                    return Err(invalid(format!("task id {} is used twice", t.task_id)));
                }
                check_positive("period_ms", t.period_ms)?;
                if let ReportCondition::Proportional { span, baseline } = t.report_condition {
                    if !(span.is_finite() && span > 0.0 && baseline.is_finite()) {
                        return Err(invalid(format!(
                            "task {} has a degenerate report condition",
                            t.task_id
                        )));
                    }
                }
            }
            if registry
                .query(&app.candidates)
                .iter()
                .all(|d| d.kind == NodeKind::Gto)
            {
                return Err(invalid(format!(
                    "application {} matches no sensors",
                    app.app_id
                )));
            }
            if let Some(fire) = &app.fire {
                if app.task(&fire.alarm_task).is_none() {
                    return Err(invalid(format!(
                        "alarm task {} is not a task of {}",
                        fire.alarm_task, app.app_id
                    )));
                }
                check_positive("fire.window_ms", fire.window_ms)?;
                fire.rate.validate().map_err(|e| invalid(e.to_string()))?;
                if fire.sectors == 0 {
                    return Err(invalid("fire.sectors must be positive"));
                }
            }
        }
        for c in &self.control {
            check_ms("control.at_ms", c.at_ms)?;
            if !endpoints.contains(&c.from) {
                return Err(invalid(format!(
                    "control command sender {} is not an application",
                    c.from
                )));
            }
            if !ids.contains(&c.command.target) {
                return Err(invalid(format!(
                    "control command targets unknown node {}",
                    c.command.target
                )));
            }
        }
        Ok(())
    }
}

/// Seed of one iteration, derived with a SplitMix64 step.
pub fn iteration_seed(seed: u64, iteration: usize) -> u64 {
    let mut z = seed.wrapping_add((iteration as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SMALL: &str = r#"{
        "name": "small",
        "seed": 7,
        "duration_ms": 5000,
        "environment": { "ambient_temp": 20 },
        "nodes": [
            { "id": "gto-01", "kind": "Gto", "position": { "x": 0, "y": 0 } },
            { "id": "sensor-01", "kind": "TypeA", "position": { "x": 10, "y": 0 }, "gto": "gto-01" }
        ],
        "agents": [ { "agent_id": "agent-01", "host": "gto-01", "dialect": "key_value" } ],
        "applications": [ {
            "app_id": "city", "endpoint": "city-admin", "overlay_id": "o", "service_name": "svc",
            "tasks": [ { "task_id": "t", "period_ms": 1000, "priority": 0 } ]
        } ]
    }"#;

    #[test]
    fn minimal_scenario_validates_with_defaults() {
        let cfg = ScenarioConfig::from_json(SMALL).unwrap();
        assert_eq!(cfg.iterations, 1);
        assert_eq!(cfg.link, LinkConfig::default());
        let back = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.registry().unwrap().len(), 2);
    }

    fn mutate(f: impl FnOnce(&mut serde_json::Value)) -> Result<ScenarioConfig, ConfigError> {
        let mut v: serde_json::Value = serde_json::from_str(SMALL).unwrap();
        f(&mut v);
        ScenarioConfig::from_json(&v.to_string())
    }

    #[test]
    fn schema_violations_are_rejected() {
        type Mutation = Box<dyn FnOnce(&mut serde_json::Value)>;
        let cases: Vec<Mutation> = vec![
            Box::new(|v| v["iterations"] = 0.into()),
            Box::new(|v| v["duration_ms"] = (-1).into()),
            Box::new(|v| v["surprise"] = true.into()),
            Box::new(|v| v["nodes"][1]["gto"] = "nowhere".into()),
            Box::new(|v| v["applications"][0]["endpoint"] = "gto-01".into()),
            Box::new(|v| v["applications"][0]["tasks"][0]["period_ms"] = 0.into()),
            Box::new(|v| v["agents"][0]["host"] = "sensor-01".into()),
            Box::new(|v| v["agents"] = serde_json::json!([])),
            Box::new(|v| v["link"] = serde_json::json!({ "propagation_ms": -3 })),
            Box::new(
                |v| v["applications"][0]["fire"] = serde_json::json!({ "alarm_task": "missing", "window_ms": 1000, "rate": { "lambda_max": 1, "range": 10 } }),
            ),
            Box::new(|v| {
                v["applications"][0]["candidates"] = serde_json::json!({ "owner": "nobody" })
            }),
        ];
        for (i, case) in cases.into_iter().enumerate() {
            assert!(mutate(case).is_err(), "case {i} should fail");
        }
    }

    #[test]
    fn iteration_seeds_differ() {
        let seeds: BTreeSet<u64> = (0..100).map(|i| iteration_seed(7, i)).collect();
        assert_eq!(seeds.len(), 100);
    }
}
