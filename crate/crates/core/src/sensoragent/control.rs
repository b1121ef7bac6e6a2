//! Control documents carried on Ci: `{"verb": ..., "target": ..., "args": {...}}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{NodeId, OverlayId, PeerId, TaskId};
use crate::vruntime::AppTask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verb {
    SetPriority,
    SetPeriod,
    DeployTask,
    RemoveTask,
    JoinOverlay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verb", content = "args")]
pub enum ControlAction {
    SetPriority {
        task_id: TaskId,
        priority: u32,
    },
    SetPeriod {
        task_id: TaskId,
        period_ms: f64,
    },
    DeployTask {
        task: AppTask,
        /// Earliest activation time, simulated ms. Defaults to delivery time.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start_at_ms: Option<f64>,
    },
    RemoveTask {
        task_id: TaskId,
    },
    JoinOverlay {
        overlay_id: OverlayId,
        rendezvous: PeerId,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub target: NodeId,
    #[serde(flatten)]
    pub action: ControlAction,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("malformed control command: {0}")]
pub struct MalformedCommand(pub String);

impl ControlCommand {
    pub fn new(target: impl Into<NodeId>, action: ControlAction) -> Self {
        ControlCommand {
            target: target.into(),
            action,
        }
    }

    pub fn verb(&self) -> Verb {
        match self.action {
            ControlAction::SetPriority { .. } => Verb::SetPriority,
            ControlAction::SetPeriod { .. } => Verb::SetPeriod,
            ControlAction::DeployTask { .. } => Verb::DeployTask,
            ControlAction::RemoveTask { .. } => Verb::RemoveTask,
            ControlAction::JoinOverlay { .. } => Verb::JoinOverlay,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("control commands always serialize")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, MalformedCommand> {
        let cmd: ControlCommand =
            serde_json::from_slice(bytes).map_err(|e| MalformedCommand(e.to_string()))?;
        if let ControlAction::SetPeriod { period_ms, .. } = cmd.action {
            if !(period_ms.is_finite() && period_ms > 0.0) {
                return Err(MalformedCommand("period_ms must be positive".into()));
            }
        }
        Ok(cmd)
    }
}
