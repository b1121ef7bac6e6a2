//! Registration server: the static sensor repository applications query
//! while discovering overlay candidates.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AgentId, NodeId, Position};
use crate::physnode::NodeKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorDescriptor {
    pub node_id: NodeId,
    pub kind: NodeKind,
    #[serde(default)]
    pub quantities: BTreeSet<String>,
    pub position: Position,
    pub agent: AgentId,
    pub owner: String,
}

/// Axis-aligned rectangle, bounds inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: Position,
    pub max: Position,
}

impl Region {
    pub fn contains(&self, p: &Position) -> bool {
        (self.min.x..=self.max.x).contains(&p.x) && (self.min.y..=self.max.y).contains(&p.y)
    }
}

/// Conjunction of optional filters; the default matches everything.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    #[serde(default)]
    pub quantity: Option<String>,
    #[serde(default)]
    pub kind: Option<NodeKind>,
    #[serde(default)]
    pub region: Option<Region>,
    #[serde(default)]
    pub owner: Option<String>,
}

impl Criteria {
    pub fn matches(&self, d: &SensorDescriptor) -> bool {
        self.quantity
            .as_ref()
            .is_none_or(|q| d.quantities.contains(q))
            && self.kind.is_none_or(|k| d.kind == k)
            && self.region.is_none_or(|r| r.contains(&d.position))
            && self.owner.as_ref().is_none_or(|o| &d.owner == o)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegistrationId(u64);

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("node {0} is already registered")]
    DuplicateRegistration(NodeId),
    #[error("descriptor for {node} is invalid: {reason}")]
    InvalidDescriptor { node: NodeId, reason: &'static str },
    #[error("roster I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("roster JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, Default)]
pub struct Registry {
    entries: BTreeMap<NodeId, (RegistrationId, SensorDescriptor)>,
    next_id: u64,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, d: SensorDescriptor) -> Result<RegistrationId, RegistryError> {
        if d.kind != NodeKind::Gto && d.quantities.is_empty() {
            return Err(RegistryError::InvalidDescriptor {
                node: d.node_id,
                reason: "sensors must declare at least one quantity",
            });
        }
        if d.agent.as_str().is_empty() {
            return Err(RegistryError::InvalidDescriptor {
                node: d.node_id,
                reason: "agent id is empty",
            });
        }
        if self.entries.contains_key(&d.node_id) {
            return Err(RegistryError::DuplicateRegistration(d.node_id));
        }
        let id = RegistrationId(self.next_id);
        self.next_id += 1;
        self.entries.insert(d.node_id.clone(), (id, d));
        Ok(id)
    }

    pub fn get(&self, node: &NodeId) -> Option<&SensorDescriptor> {
        self.entries.get(node).map(|(_, d)| d)
    }

    /// Matching descriptors ordered by node id.
    pub fn query(&self, criteria: &Criteria) -> Vec<&SensorDescriptor> {
        self.entries
            .values()
            .map(|(_, d)| d)
            .filter(|d| criteria.matches(d))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> Result<String, RegistryError> {
        let all: Vec<_> = self.entries.values().map(|(_, d)| d).collect();
        Ok(serde_json::to_string_pretty(&all)?)
    }

    pub fn from_json(json: &str) -> Result<Self, RegistryError> {
        let descriptors: Vec<SensorDescriptor> = serde_json::from_str(json)?;
        let mut reg = Registry::new();
        for d in descriptors {
            reg.register(d)?;
        }
        Ok(reg)
    }

    pub fn save(&self, path: &Path) -> Result<(), RegistryError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc(id: &str, x: f64, y: f64, owner: &str) -> SensorDescriptor {
        SensorDescriptor {
            node_id: id.into(),
            kind: NodeKind::TypeA,
            quantities: ["temperature".to_string()].into(),
            position: Position::new(x, y),
            agent: "agent-1".into(),
            owner: owner.into(),
        }
    }

    #[test]
    fn register_then_get() {
        let mut reg = Registry::new();
        let d = desc("s1", 1.0, 2.0, "city");
        reg.register(d.clone()).unwrap();
        assert_eq!(reg.get(&"s1".into()), Some(&d));
    }

    #[test]
    fn duplicate_is_rejected() {
        let mut reg = Registry::new();
        reg.register(desc("s1", 0.0, 0.0, "city")).unwrap();
        assert!(matches!(
            reg.register(desc("s1", 5.0, 0.0, "city")),
            Err(RegistryError::DuplicateRegistration(_))
        ));
    }

    #[test]
    fn six_sensors_query_all() {
        let mut reg = Registry::new();
        for i in 1..=6 {
            reg.register(desc(&format!("sensor-0{i}"), i as f64, 0.0, "city"))
                .unwrap();
        }
        let all = reg.query(&Criteria::default());
        assert_eq!(all.len(), 6);
        assert!(all.windows(2).all(|w| w[0].node_id < w[1].node_id));
    }

    #[test]
    fn no_match_is_empty() {
        let mut reg = Registry::new();
        reg.register(desc("s1", 0.0, 0.0, "city")).unwrap();
        let q = Criteria {
            quantity: Some("humidity".into()),
            ..Criteria::default()
        };
        assert!(reg.query(&q).is_empty());
    }

    #[test]
    fn region_is_inclusive() {
        let r = Region {
            min: Position::new(0.0, 0.0),
            max: Position::new(10.0, 10.0),
        };
        assert!(r.contains(&Position::new(10.0, 0.0)));
        assert!(!r.contains(&Position::new(10.000001, 0.0)));
    }

    #[test]
    fn descriptors_must_name_quantities_and_agent() {
        let mut reg = Registry::new();
        let mut d = desc("s1", 0.0, 0.0, "city");
        d.quantities.clear();
        assert!(matches!(
            reg.register(d),
            Err(RegistryError::InvalidDescriptor { .. })
        ));
        let mut gto = desc("g1", 0.0, 0.0, "city");
        gto.kind = NodeKind::Gto;
        gto.quantities.clear();
        assert!(reg.register(gto).is_ok());
        let mut no_agent = desc("s2", 0.0, 0.0, "city");
        no_agent.agent = "".into();
        assert!(reg.register(no_agent).is_err());
    }

    #[test]
    fn json_snapshot_round_trip() {
        let mut reg = Registry::new();
        reg.register(desc("s1", 0.5, -2.0, "homeowner-3")).unwrap();
        reg.register(desc("s2", 7.0, 1.0, "city")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roster.json");
        reg.save(&path).unwrap();
        let back = Registry::load(&path).unwrap();
        assert_eq!(
            back.query(&Criteria::default()),
            reg.query(&Criteria::default())
        );
    }
}
