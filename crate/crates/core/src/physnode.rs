//! Physical layer: constrained (Type A) and capable (Type B) sensors, GTO
//! nodes, and the temperature field they sample.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{NodeId, Position};
use crate::simkernel::{Kernel, KernelError, SimTime};
use crate::wirecodec::SenMLRecord;

pub const TEMPERATURE: &str = "temperature";
pub const CELSIUS: &str = "Cel";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    /// Legacy, resource-constrained sensor. Reaches overlays only through a GTO.
    TypeA,
    /// Smart IP sensor able to host an agent and join overlays itself.
    TypeB,
    /// Gateway/sink that joins overlays on behalf of Type A sensors.
    Gto,
}

impl NodeKind {
    pub fn can_host_agent(self) -> bool {
        self != NodeKind::TypeA
    }

    pub fn default_max_tasks(self) -> usize {
        match self {
            NodeKind::TypeA => 2,
            NodeKind::TypeB | NodeKind::Gto => 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub position: Position,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gto_ref: Option<NodeId>,
    pub max_tasks: usize,
}

impl PhysicalNode {
    pub fn new(id: impl Into<NodeId>, kind: NodeKind, position: Position) -> Self {
        PhysicalNode {
            id: id.into(),
            kind,
            position,
            gto_ref: None,
            max_tasks: kind.default_max_tasks(),
        }
    }

    pub fn with_gto(mut self, gto: impl Into<NodeId>) -> Self {
        self.gto_ref = Some(gto.into());
        self
    }

    pub fn with_max_tasks(mut self, max_tasks: usize) -> Self {
        self.max_tasks = max_tasks;
        self
    }
}

/// A static fire with linear temperature falloff around its origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fire {
    pub origin: Position,
    pub start: SimTime,
    /// Temperature rise at the origin, °C.
    pub intensity: f64,
    /// Distance at which the rise reaches zero, meters.
    pub falloff_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub ambient_temp: f64,
    #[serde(default)]
    pub fire: Option<Fire>,
}

impl Environment {
    pub fn calm(ambient_temp: f64) -> Self {
        Environment {
            ambient_temp,
            fire: None,
        }
    }

    /// `ambient + intensity * max(0, 1 - d/R)` once the fire has started.
    pub fn temperature_at(&self, at: &Position, t: SimTime) -> f64 {
        match &self.fire {
            Some(fire) if t >= fire.start => {
                let d = fire.origin.distance_to(at);
                self.ambient_temp + fire.intensity * (1.0 - d / fire.falloff_radius).max(0.0)
            }
            _ => self.ambient_temp,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("quantity {0:?} is not sensed")]
    UnknownQuantity(String),
    #[error("node {0} is not a Type A sensor")]
    NotTypeA(NodeId),
    #[error("Type A node {0} has no reachable GTO")]
    NoGto(NodeId),
    #[error("invalid roster: {0}")]
    InvalidRoster(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// The node roster plus the environment it sits in.
#[derive(Clone, Debug)]
pub struct PhysicalLayer {
    nodes: BTreeMap<NodeId, PhysicalNode>,
    env: Environment,
}

impl PhysicalLayer {
    /// Validates the roster: unique ids, `gto_ref` set exactly on Type A
    /// nodes and pointing at a Gto or Type B node, `max_tasks >= 1`.
    pub fn new(nodes: Vec<PhysicalNode>, env: Environment) -> Result<Self, PhysError> {
        let mut map = BTreeMap::new();
        for node in nodes {
            if node.max_tasks == 0 {
                return Err(PhysError::InvalidRoster(format!(
                    "{} has max_tasks 0",
                    node.id
                )));
            }
            let id = node.id.clone();
            if map.insert(id.clone(), node).is_some() {
                return Err(PhysError::InvalidRoster(format!("duplicate node {id}")));
            }
        }
        for node in map.values() {
            match (&node.kind, &node.gto_ref) {
                (NodeKind::TypeA, None) => {
                    return Err(PhysError::InvalidRoster(format!(
                        "Type A node {} has no gto_ref",
                        node.id
                    )))
                }
                (NodeKind::TypeA, Some(gto)) => match map.get(gto) {
                    Some(g) if g.kind.can_host_agent() => {}
                    _ => {
                        return Err(PhysError::InvalidRoster(format!(
                            "{} delegates to {gto}, which is not a Gto or Type B node",
                            node.id
                        )))
                    }
                },
                (_, Some(_)) => {
                    return Err(PhysError::InvalidRoster(format!(
                        "{} is not Type A but has a gto_ref",
                        node.id
                    )))
                }
                (_, None) => {}
            }
        }
        if let Some(fire) = &env.fire {
            if fire.falloff_radius.is_nan()
                || fire.falloff_radius <= 0.0
                || fire.intensity.is_nan()
                || fire.intensity < 0.0
            {
                return Err(PhysError::InvalidRoster(
                    "fire needs falloff_radius > 0 and intensity >= 0".into(),
                ));
            }
        }
        Ok(PhysicalLayer { nodes: map, env })
    }

    pub fn node(&self, id: &NodeId) -> Result<&PhysicalNode, PhysError> {
        self.nodes
            .get(id)
            .ok_or_else(|| PhysError::UnknownNode(id.clone()))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &PhysicalNode> {
        self.nodes.values()
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn sample(
        &self,
        node: &NodeId,
        quantity: &str,
        at: SimTime,
    ) -> Result<SenMLRecord, PhysError> {
        let n = self.node(node)?;
        if quantity != TEMPERATURE {
            return Err(PhysError::UnknownQuantity(quantity.to_owned()));
        }
        Ok(SenMLRecord::new(
            node.as_str(),
            TEMPERATURE,
            CELSIUS,
            self.env.temperature_at(&n.position, at),
            at.as_secs_f64(),
        ))
    }

    /// The GTO a Type A node delegates to.
    pub fn gto_of(&self, node: &NodeId) -> Result<&NodeId, PhysError> {
        let n = self.node(node)?;
        if n.kind != NodeKind::TypeA {
            return Err(PhysError::NotTypeA(node.clone()));
        }
        match &n.gto_ref {
            Some(gto) if self.nodes.contains_key(gto) => Ok(gto),
            _ => Err(PhysError::NoGto(node.clone())),
        }
    }

    /// Forwards `msg` from a Type A node to its GTO over the network.
    pub fn delegate_to_gto<P>(
        &self,
        kernel: &mut Kernel<P>,
        node: &NodeId,
        msg: P,
    ) -> Result<(NodeId, SimTime), PhysError> {
        let gto = self.gto_of(node)?.clone();
        if !kernel.has_node(&gto) {
            return Err(PhysError::NoGto(node.clone()));
        }
        let at = kernel.send(node, &gto, msg)?;
        Ok((gto, at))
    }
}
