//! Virtual sensor layer: each application task deployed on a node becomes a
//! virtual sensor with its own schedule, priority and report condition.
//!
//! Samples due in the same virtual instant are emitted in ascending priority
//! number (ties by task id). Priority never delays a task past its period, so
//! low-priority applications are not starved.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AppId, NodeId, TaskId};
use crate::physnode::PhysicalLayer;
use crate::simkernel::{SimDuration, SimTime};
use crate::wirecodec::SenMLRecord;

/// Serializes a [`SimDuration`] as fractional milliseconds.
pub(crate) mod millis {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::simkernel::SimDuration;

    pub fn serialize<S: Serializer>(d: &SimDuration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_millis_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SimDuration, D::Error> {
        let ms = f64::deserialize(d)?;
        if !ms.is_finite() || ms < 0.0 {
            return Err(serde::de::Error::custom(
                "duration must be a finite, non-negative number of ms",
            ));
        }
        Ok(SimDuration::from_millis_f64(ms))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportCondition {
    Always,
    ThresholdAbove(f64),
    /// Reports with probability `clamp((reading - baseline) / span, 0, 1)`.
    /// Over many ticks the report count is Poisson-like with a rate that
    /// falls linearly with the reading's excess over `baseline`.
    Proportional {
        baseline: f64,
        span: f64,
    },
}

impl ReportCondition {
    /// Probability that a reading is reported.
    pub fn report_probability(&self, reading: f64) -> f64 {
        match *self {
            ReportCondition::Always => 1.0,
            ReportCondition::ThresholdAbove(limit) => {
                if reading > limit {
                    1.0
                } else {
                    0.0
                }
            }
            ReportCondition::Proportional { baseline, span } => {
                if span > 0.0 {
                    ((reading - baseline) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
        }
    }

    /// Lowest reading that can ever be reported, if any.
    pub fn threshold(&self) -> Option<f64> {
        match *self {
            ReportCondition::Always => None,
            ReportCondition::ThresholdAbove(limit) => Some(limit),
            ReportCondition::Proportional { baseline, .. } => Some(baseline),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppTask {
    pub task_id: TaskId,
    pub app_id: AppId,
    pub quantity: String,
    #[serde(rename = "period_ms", with = "millis")]
    pub period: SimDuration,
    /// Lower number runs first.
    pub priority: u32,
    pub report_condition: ReportCondition,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VsId(u64);

impl VsId {
    pub const fn as_u64(self) -> u64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VsState {
    Deployed,
    Running,
    Suspended,
}

#[derive(Clone, Debug)]
pub struct VirtualSensor {
    pub vs_id: VsId,
    pub host_node: NodeId,
    pub task: AppTask,
    pub state: VsState,
    next_due: Option<SimTime>,
    rng: ChaCha8Rng,
}

impl VirtualSensor {
    pub fn next_due(&self) -> Option<SimTime> {
        self.next_due
    }
}

/// One reported sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Emission {
    pub vs_id: VsId,
    pub task_id: TaskId,
    pub app_id: AppId,
    pub priority: u32,
    pub record: SenMLRecord,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {node} already runs {max} tasks")]
    CapacityExceeded { node: NodeId, max: usize },
    #[error("task {task} already deployed on {node}")]
    DuplicateTask { node: NodeId, task: TaskId },
    #[error("unknown task {task} on {node}")]
    UnknownTask { node: NodeId, task: TaskId },
    #[error("task period must be positive")]
    ZeroPeriod,
}

#[derive(Clone, Debug)]
struct NodeTasks {
    max_tasks: usize,
    sensors: BTreeMap<TaskId, VirtualSensor>,
}

/// Per-node task tables for every node of a simulation.
#[derive(Clone, Debug)]
pub struct VirtualRuntime {
    seed: u64,
    next_vs: u64,
    nodes: BTreeMap<NodeId, NodeTasks>,
}

/// FNV-1a, used to derive independent per-task random streams.
fn fnv1a(seed: u64, parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for part in parts {
        for b in part.as_bytes().iter().chain(std::iter::once(&0xFF)) {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

impl VirtualRuntime {
    pub fn new(seed: u64) -> Self {
        VirtualRuntime {
            seed,
            next_vs: 0,
            nodes: BTreeMap::new(),
        }
    }

    pub fn add_node(&mut self, node: NodeId, max_tasks: usize) {
        self.nodes.entry(node).or_insert(NodeTasks {
            max_tasks,
            sensors: BTreeMap::new(),
        });
    }

    fn node_mut(&mut self, node: &NodeId) -> Result<&mut NodeTasks, RuntimeError> {
        self.nodes
            .get_mut(node)
            .ok_or_else(|| RuntimeError::UnknownNode(node.clone()))
    }

    fn sensor_mut(
        &mut self,
        node: &NodeId,
        task: &TaskId,
    ) -> Result<&mut VirtualSensor, RuntimeError> {
        self.node_mut(node)?
            .sensors
            .get_mut(task)
            .ok_or_else(|| RuntimeError::UnknownTask {
                node: node.clone(),
                task: task.clone(),
            })
    }

    /// Creates a virtual sensor in the `Deployed` state. It produces nothing
    /// until [`activate`](Self::activate) is called.
    pub fn deploy_task(&mut self, node: &NodeId, task: AppTask) -> Result<VsId, RuntimeError> {
        if task.period.is_zero() {
            return Err(RuntimeError::ZeroPeriod);
        }
        let seed = self.seed;
        let vs_id = VsId(self.next_vs);
        let tasks = self.node_mut(node)?;
        if tasks.sensors.contains_key(&task.task_id) {
            return Err(RuntimeError::DuplicateTask {
                node: node.clone(),
                task: task.task_id,
            });
        }
        if tasks.sensors.len() >= tasks.max_tasks {
            return Err(RuntimeError::CapacityExceeded {
                node: node.clone(),
                max: tasks.max_tasks,
            });
        }
        let rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, &[node.as_str(), task.task_id.as_str()]));
        tasks.sensors.insert(
            task.task_id.clone(),
            VirtualSensor {
                vs_id,
                host_node: node.clone(),
                task,
                state: VsState::Deployed,
                next_due: None,
                rng,
            },
        );
        self.next_vs += 1;
        Ok(vs_id)
    }

    /// Starts (or resumes) a task; its first sample is due one period later.
    pub fn activate(
        &mut self,
        node: &NodeId,
        task: &TaskId,
        at: SimTime,
    ) -> Result<SimTime, RuntimeError> {
        let vs = self.sensor_mut(node, task)?;
        let due = at + vs.task.period;
        vs.state = VsState::Running;
        vs.next_due = Some(due);
        Ok(due)
    }

    pub fn suspend(&mut self, node: &NodeId, task: &TaskId) -> Result<(), RuntimeError> {
        let vs = self.sensor_mut(node, task)?;
        vs.state = VsState::Suspended;
        vs.next_due = None;
        Ok(())
    }

    /// Samples every running task due at or before `at`, in ascending
    /// priority order, and reschedules each at `at + period`. Unknown nodes
    /// yield nothing.
    pub fn tick(&mut self, node: &NodeId, at: SimTime, phys: &PhysicalLayer) -> Vec<Emission> {
        let Some(tasks) = self.nodes.get_mut(node) else {
            return Vec::new();
        };
        let mut due: Vec<&mut VirtualSensor> = tasks
            .sensors
            .values_mut()
            .filter(|vs| vs.state == VsState::Running && vs.next_due.is_some_and(|d| d <= at))
            .collect();
        due.sort_by(|a, b| {
            (a.task.priority, &a.task.task_id).cmp(&(b.task.priority, &b.task.task_id))
        });

        let mut out = Vec::with_capacity(due.len());
        for vs in due {
            vs.next_due = Some(at + vs.task.period);
            let record = match phys.sample(node, &vs.task.quantity, at) {
                Ok(r) => r,
                Err(err) => {
                    tracing::warn!(%node, task = %vs.task.task_id, %err, "sample failed");
                    continue;
                }
            };
            // One draw per sample keeps each task's random stream independent
            // of its reading history.
            let draw: f64 = vs.rng.random();
            if draw < vs.task.report_condition.report_probability(record.value) {
                out.push(Emission {
                    vs_id: vs.vs_id,
                    task_id: vs.task.task_id.clone(),
                    app_id: vs.task.app_id.clone(),
                    priority: vs.task.priority,
                    record,
                });
            }
        }
        out
    }

    /// Earliest pending sample time on `node`.
    pub fn next_due(&self, node: &NodeId) -> Option<SimTime> {
        self.nodes
            .get(node)?
            .sensors
            .values()
            .filter(|vs| vs.state == VsState::Running)
            .filter_map(|vs| vs.next_due)
            .min()
    }

    /// Takes effect from the next tick.
    pub fn set_priority(
        &mut self,
        node: &NodeId,
        task: &TaskId,
        priority: u32,
    ) -> Result<(), RuntimeError> {
        self.sensor_mut(node, task)?.task.priority = priority;
        Ok(())
    }

    /// The already scheduled sample keeps its time; the new period applies
    /// after it.
    pub fn set_period(
        &mut self,
        node: &NodeId,
        task: &TaskId,
        period: SimDuration,
    ) -> Result<(), RuntimeError> {
        if period.is_zero() {
            return Err(RuntimeError::ZeroPeriod);
        }
        self.sensor_mut(node, task)?.task.period = period;
        Ok(())
    }

    pub fn remove_task(
        &mut self,
        node: &NodeId,
        task: &TaskId,
    ) -> Result<VirtualSensor, RuntimeError> {
        self.node_mut(node)?
            .sensors
            .remove(task)
            .ok_or_else(|| RuntimeError::UnknownTask {
                node: node.clone(),
                task: task.clone(),
            })
    }

    pub fn sensor(&self, node: &NodeId, task: &TaskId) -> Option<&VirtualSensor> {
        self.nodes.get(node)?.sensors.get(task)
    }

    pub fn sensors(&self, node: &NodeId) -> impl Iterator<Item = &VirtualSensor> {
        self.nodes
            .get(node)
            .into_iter()
            .flat_map(|t| t.sensors.values())
    }

    pub fn task_count(&self, node: &NodeId) -> usize {
        self.nodes.get(node).map_or(0, |t| t.sensors.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::Position;
    use crate::physnode::{Environment, Fire, NodeKind, PhysicalNode, TEMPERATURE};

    fn phys(ambient: f64) -> PhysicalLayer {
        PhysicalLayer::new(
            vec![PhysicalNode::new(
                "n1",
                NodeKind::TypeB,
                Position::new(0.0, 0.0),
            )],
            Environment::calm(ambient),
        )
        .unwrap()
    }

    fn task(id: &str, priority: u32) -> AppTask {
        AppTask {
            task_id: id.into(),
            app_id: "app".into(),
            quantity: TEMPERATURE.into(),
            period: SimDuration::from_secs(1),
            priority,
            report_condition: ReportCondition::Always,
        }
    }

    fn runtime(max: usize) -> (VirtualRuntime, NodeId) {
        let mut rt = VirtualRuntime::new(7);
        let n = NodeId::new("n1");
        rt.add_node(n.clone(), max);
        (rt, n)
    }

    fn start_all(rt: &mut VirtualRuntime, n: &NodeId) {
        let ids: Vec<_> = rt.sensors(n).map(|vs| vs.task.task_id.clone()).collect();
        for id in ids {
            rt.activate(n, &id, SimTime::ZERO).unwrap();
        }
    }

    #[test]
    fn three_tasks_three_virtual_sensors() {
        let (mut rt, n) = runtime(3);
        let ids: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|t| rt.deploy_task(&n, task(t, 1)).unwrap())
            .collect();
        assert_eq!(rt.task_count(&n), 3);
        assert!(ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2]);
        assert!(rt.sensors(&n).all(|vs| vs.state == VsState::Deployed));
    }

    #[test]
    fn capacity_and_duplicates() {
        let (mut rt, n) = runtime(1);
        rt.deploy_task(&n, task("a", 0)).unwrap();
        assert!(matches!(
            rt.deploy_task(&n, task("a", 0)),
            Err(RuntimeError::DuplicateTask { .. })
        ));
        assert!(matches!(
            rt.deploy_task(&n, task("b", 0)),
            Err(RuntimeError::CapacityExceeded { max: 1, .. })
        ));
        assert!(matches!(
            rt.deploy_task(&"zz".into(), task("b", 0)),
            Err(RuntimeError::UnknownNode(_))
        ));
    }

    #[test]
    fn deployed_tasks_are_silent_until_activated() {
        let (mut rt, n) = runtime(2);
        rt.deploy_task(&n, task("a", 0)).unwrap();
        let p = phys(20.0);
        assert!(rt.tick(&n, SimTime::from_secs(5), &p).is_empty());
        let due = rt.activate(&n, &"a".into(), SimTime::from_secs(5)).unwrap();
        assert_eq!(due, SimTime::from_secs(6));
        assert!(rt.tick(&n, SimTime::from_secs(5), &p).is_empty());
        assert_eq!(rt.tick(&n, SimTime::from_secs(6), &p).len(), 1);
        assert_eq!(rt.next_due(&n), Some(SimTime::from_secs(7)));
    }

    #[test]
    fn emission_follows_priority_then_task_id() {
        let (mut rt, n) = runtime(4);
        rt.deploy_task(&n, task("z", 5)).unwrap();
        rt.deploy_task(&n, task("y", 0)).unwrap();
        rt.deploy_task(&n, task("b", 5)).unwrap();
        start_all(&mut rt, &n);
        let order: Vec<_> = rt
            .tick(&n, SimTime::from_secs(1), &phys(20.0))
            .into_iter()
            .map(|e| e.task_id.to_string())
            .collect();
        assert_eq!(order, ["y", "b", "z"]);
    }

    #[test]
    fn threshold_not_met_drops_sample() {
        let (mut rt, n) = runtime(2);
        let mut t = task("alarm", 0);
        t.report_condition = ReportCondition::ThresholdAbove(45.0);
        rt.deploy_task(&n, t).unwrap();
        start_all(&mut rt, &n);
        assert!(rt.tick(&n, SimTime::from_secs(1), &phys(20.0)).is_empty());
        assert_eq!(rt.tick(&n, SimTime::from_secs(2), &phys(50.0)).len(), 1);
    }

    #[test]
    fn set_priority_reorders_next_tick_and_is_idempotent() {
        let (mut rt, n) = runtime(2);
        rt.deploy_task(&n, task("a", 1)).unwrap();
        rt.deploy_task(&n, task("b", 2)).unwrap();
        start_all(&mut rt, &n);
        let p = phys(20.0);
        let ids = |v: Vec<Emission>| {
            v.into_iter()
                .map(|e| e.task_id.to_string())
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(rt.tick(&n, SimTime::from_secs(1), &p)), ["a", "b"]);
        rt.set_priority(&n, &"b".into(), 2).unwrap();
        assert_eq!(ids(rt.tick(&n, SimTime::from_secs(2), &p)), ["a", "b"]);
        rt.set_priority(&n, &"b".into(), 0).unwrap();
        assert_eq!(ids(rt.tick(&n, SimTime::from_secs(3), &p)), ["b", "a"]);
        assert!(matches!(
            rt.set_priority(&n, &"nope".into(), 0),
            Err(RuntimeError::UnknownTask { .. })
        ));
    }

    #[test]
    fn remove_twice_and_remove_last() {
        let (mut rt, n) = runtime(2);
        rt.deploy_task(&n, task("a", 1)).unwrap();
        rt.remove_task(&n, &"a".into()).unwrap();
        assert_eq!(rt.task_count(&n), 0);
        assert!(matches!(
            rt.remove_task(&n, &"a".into()),
            Err(RuntimeError::UnknownTask { .. })
        ));
    }

    #[test]
    fn set_period_applies_after_pending_sample() {
        let (mut rt, n) = runtime(1);
        rt.deploy_task(&n, task("a", 0)).unwrap();
        start_all(&mut rt, &n);
        rt.set_period(&n, &"a".into(), SimDuration::from_secs(3))
            .unwrap();
        assert_eq!(rt.next_due(&n), Some(SimTime::from_secs(1)));
        rt.tick(&n, SimTime::from_secs(1), &phys(20.0));
        assert_eq!(rt.next_due(&n), Some(SimTime::from_secs(4)));
        assert_eq!(
            rt.set_period(&n, &"a".into(), SimDuration::ZERO),
            Err(RuntimeError::ZeroPeriod)
        );
    }

    #[test]
    fn suspended_tasks_do_not_sample() {
        let (mut rt, n) = runtime(1);
        rt.deploy_task(&n, task("a", 0)).unwrap();
        start_all(&mut rt, &n);
        rt.suspend(&n, &"a".into()).unwrap();
        assert_eq!(rt.next_due(&n), None);
        assert!(rt.tick(&n, SimTime::from_secs(1), &phys(20.0)).is_empty());
    }

    #[test]
    fn proportional_report_rate_tracks_reading() {
        // p = (reading - 20) / 400; at d = 250 of R = 500 the rise is 200 -> p = 0.5.
        let layer = PhysicalLayer::new(
            vec![PhysicalNode::new(
                "n1",
                NodeKind::TypeB,
                Position::new(250.0, 0.0),
            )],
            Environment {
                ambient_temp: 20.0,
                fire: Some(Fire {
                    origin: Position::new(0.0, 0.0),
                    start: SimTime::ZERO,
                    intensity: 400.0,
                    falloff_radius: 500.0,
                }),
            },
        )
        .unwrap();
        let (mut rt, n) = runtime(1);
        let mut t = task("alarm", 0);
        t.report_condition = ReportCondition::Proportional {
            baseline: 20.0,
            span: 400.0,
        };
        rt.deploy_task(&n, t).unwrap();
        start_all(&mut rt, &n);
        let reports: usize = (1..=4000)
            .map(|s| rt.tick(&n, SimTime::from_secs(s), &layer).len())
            .sum();
        let frac = reports as f64 / 4000.0;
        assert!((frac - 0.5).abs() < 0.03, "observed {frac}");
    }

    #[test]
    fn condition_probabilities() {
        let c = ReportCondition::Proportional {
            baseline: 20.0,
            span: 100.0,
        };
        assert_eq!(c.report_probability(10.0), 0.0);
        assert_eq!(c.report_probability(70.0), 0.5);
        assert_eq!(c.report_probability(500.0), 1.0);
        assert_eq!(
            ReportCondition::ThresholdAbove(45.0).report_probability(45.0),
            0.0
        );
        assert_eq!(c.threshold(), Some(20.0));
    }
}
