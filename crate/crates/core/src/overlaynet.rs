//! Application-specific overlays.
//!
//! A rendezvous peer advertises a group, edge peers join by replying to the
//! advertisement, and the rendezvous fans group messages out to members.
//! Members answer with direct replies that reach only the addressee. Type A
//! nodes are never members; their GTO joins on their behalf.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{NodeId, OverlayId, PeerId};
use crate::simkernel::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum OverlayMsgKind {
    Advertise = 1,
    JoinRequest = 2,
    JoinAck = 3,
    GroupMulticast = 4,
    DirectReply = 5,
}

impl OverlayMsgKind {
    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            1 => OverlayMsgKind::Advertise,
            2 => OverlayMsgKind::JoinRequest,
            3 => OverlayMsgKind::JoinAck,
            4 => OverlayMsgKind::GroupMulticast,
            5 => OverlayMsgKind::DirectReply,
            _ => return None,
        })
    }
}

/// Overlay protocol unit. Wire form: one kind tag byte, the overlay id and
/// sender as u16-length-prefixed UTF-8, then the opaque payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverlayMessage {
    pub kind: OverlayMsgKind,
    pub overlay_id: OverlayId,
    pub sender: PeerId,
    pub payload: Vec<u8>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OverlayWireError {
    #[error("overlay message truncated")]
    Truncated,
    #[error("unknown overlay message kind {0}")]
    UnknownKind(u8),
    #[error("overlay message field is not UTF-8")]
    BadUtf8,
}

impl OverlayMessage {
    pub fn new(
        kind: OverlayMsgKind,
        overlay_id: OverlayId,
        sender: PeerId,
        payload: Vec<u8>,
    ) -> Self {
        OverlayMessage {
            kind,
            overlay_id,
            sender,
            payload,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload.len() + 32);
        out.push(self.kind as u8);
        for s in [self.overlay_id.as_str(), self.sender.as_str()] {
            out.extend_from_slice(&(s.len() as u16).to_be_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, OverlayWireError> {
        let (&tag, mut rest) = bytes.split_first().ok_or(OverlayWireError::Truncated)?;
        let kind = OverlayMsgKind::from_tag(tag).ok_or(OverlayWireError::UnknownKind(tag))?;
        let mut field = || -> Result<String, OverlayWireError> {
            if rest.len() < 2 {
                return Err(OverlayWireError::Truncated);
            }
            let len = u16::from_be_bytes([rest[0], rest[1]]) as usize;
            let s = rest.get(2..2 + len).ok_or(OverlayWireError::Truncated)?;
            let s = std::str::from_utf8(s)
                .map_err(|_| OverlayWireError::BadUtf8)?
                .to_owned();
            rest = &rest[2 + len..];
            Ok(s)
        };
        let overlay_id = OverlayId::new(field()?);
        let sender = PeerId::new(field()?);
        Ok(OverlayMessage {
            kind,
            overlay_id,
            sender,
            payload: rest.to_vec(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayAdvertisement {
    pub overlay_id: OverlayId,
    pub service_name: String,
    pub rendezvous: PeerId,
    pub created_at: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupState {
    Forming,
    Ready,
    Active,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayGroup {
    pub overlay_id: OverlayId,
    pub service_name: String,
    pub rendezvous: PeerId,
    /// Join order.
    pub members: Vec<PeerId>,
    pub state: GroupState,
    pub created_at: SimTime,
}

impl OverlayGroup {
    pub fn is_member(&self, peer: &PeerId) -> bool {
        self.members.contains(peer)
    }

    /// Members plus the rendezvous.
    pub fn is_participant(&self, peer: &PeerId) -> bool {
        *peer == self.rendezvous || self.is_member(peer)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinAck {
    pub overlay_id: OverlayId,
    pub peer: PeerId,
    pub member_count: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OverlayError {
    #[error("no candidate peers")]
    NoCandidates,
    #[error("every candidate declined")]
    AllDeclined,
    #[error("unknown overlay {0}")]
    UnknownOverlay(OverlayId),
    #[error("overlay {0} already exists")]
    DuplicateOverlay(OverlayId),
    #[error("service name is empty")]
    EmptyServiceName,
    #[error("{peer} is already a member of {overlay}")]
    AlreadyMember { overlay: OverlayId, peer: PeerId },
    #[error("{peer} is not a member of {overlay}")]
    NotMember { overlay: OverlayId, peer: PeerId },
    #[error("{0} cannot join overlays directly")]
    Ineligible(PeerId),
    #[error("overlay {0} is not ready")]
    NotReady(OverlayId),
    #[error("overlay {overlay} cannot move from {from:?} to {to:?}")]
    InvalidTransition {
        overlay: OverlayId,
        from: GroupState,
        to: GroupState,
    },
}

/// Membership and lifecycle state of every overlay in a simulation. Each
/// group is logically owned by its rendezvous.
#[derive(Clone, Debug, Default)]
pub struct OverlayTable {
    groups: BTreeMap<OverlayId, OverlayGroup>,
    advertised: BTreeSet<(PeerId, OverlayId)>,
    ineligible: BTreeSet<NodeId>,
}

impl OverlayTable {
    /// `ineligible` lists nodes that may never become members (Type A).
    pub fn new(ineligible: impl IntoIterator<Item = NodeId>) -> Self {
        OverlayTable {
            groups: BTreeMap::new(),
            advertised: BTreeSet::new(),
            ineligible: ineligible.into_iter().collect(),
        }
    }

    pub fn group(&self, id: &OverlayId) -> Option<&OverlayGroup> {
        self.groups.get(id)
    }

    pub fn groups(&self) -> impl Iterator<Item = &OverlayGroup> {
        self.groups.values()
    }

    /// Overlays `peer` currently belongs to.
    pub fn memberships(&self, peer: &PeerId) -> Vec<&OverlayId> {
        self.groups
            .values()
            .filter(|g| g.is_member(peer))
            .map(|g| &g.overlay_id)
            .collect()
    }

    fn group_mut(&mut self, id: &OverlayId) -> Result<&mut OverlayGroup, OverlayError> {
        self.groups
            .get_mut(id)
            .ok_or_else(|| OverlayError::UnknownOverlay(id.clone()))
    }

    /// Creates the group in `Forming` state.
    pub fn open(&mut self, adv: &OverlayAdvertisement) -> Result<(), OverlayError> {
        if adv.service_name.is_empty() {
            return Err(OverlayError::EmptyServiceName);
        }
        if self.groups.contains_key(&adv.overlay_id) {
            return Err(OverlayError::DuplicateOverlay(adv.overlay_id.clone()));
        }
        self.groups.insert(
            adv.overlay_id.clone(),
            OverlayGroup {
                overlay_id: adv.overlay_id.clone(),
                service_name: adv.service_name.clone(),
                rendezvous: adv.rendezvous.clone(),
                members: Vec::new(),
                state: GroupState::Forming,
                created_at: adv.created_at,
            },
        );
        Ok(())
    }

    /// Notes that `peer` received the advertisement of `overlay`.
    pub fn record_advertisement(
        &mut self,
        overlay: &OverlayId,
        peer: &PeerId,
    ) -> Result<(), OverlayError> {
        if !self.groups.contains_key(overlay) {
            return Err(OverlayError::UnknownOverlay(overlay.clone()));
        }
        self.advertised.insert((peer.clone(), overlay.clone()));
        Ok(())
    }

    pub fn has_advertisement(&self, overlay: &OverlayId, peer: &PeerId) -> bool {
        self.advertised.contains(&(peer.clone(), overlay.clone()))
    }

    pub fn join(&mut self, overlay: &OverlayId, peer: &PeerId) -> Result<JoinAck, OverlayError> {
        if self.ineligible.contains(peer) {
            return Err(OverlayError::Ineligible(peer.clone()));
        }
        if !self.has_advertisement(overlay, peer) {
            return Err(OverlayError::UnknownOverlay(overlay.clone()));
        }
        let group = self.group_mut(overlay)?;
        if group.is_participant(peer) {
            return Err(OverlayError::AlreadyMember {
                overlay: overlay.clone(),
                peer: peer.clone(),
            });
        }
        group.members.push(peer.clone());
        Ok(JoinAck {
            overlay_id: overlay.clone(),
            peer: peer.clone(),
            member_count: group.members.len(),
        })
    }

    fn transition(
        &mut self,
        overlay: &OverlayId,
        from: GroupState,
        to: GroupState,
    ) -> Result<(), OverlayError> {
        let group = self.group_mut(overlay)?;
        if group.state != from {
            return Err(OverlayError::InvalidTransition {
                overlay: overlay.clone(),
                from: group.state,
                to,
            });
        }
        group.state = to;
        Ok(())
    }

    pub fn mark_ready(&mut self, overlay: &OverlayId) -> Result<(), OverlayError> {
        self.transition(overlay, GroupState::Forming, GroupState::Ready)
    }

    pub fn mark_active(&mut self, overlay: &OverlayId) -> Result<(), OverlayError> {
        self.transition(overlay, GroupState::Ready, GroupState::Active)
    }

    /// Recipients of a group message from `sender`: every member but the
    /// sender itself.
    pub fn multicast(
        &self,
        overlay: &OverlayId,
        sender: &PeerId,
    ) -> Result<Vec<PeerId>, OverlayError> {
        let group = self
            .groups
            .get(overlay)
            .ok_or_else(|| OverlayError::UnknownOverlay(overlay.clone()))?;
        if !group.is_participant(sender) {
            return Err(OverlayError::NotMember {
                overlay: overlay.clone(),
                peer: sender.clone(),
            });
        }
        if group.state == GroupState::Forming {
            return Err(OverlayError::NotReady(overlay.clone()));
        }
        Ok(group
            .members
            .iter()
            .filter(|m| *m != sender)
            .cloned()
            .collect())
    }

    /// Validates a member's reply to the rendezvous.
    pub fn direct_reply(&self, overlay: &OverlayId, from: &PeerId) -> Result<PeerId, OverlayError> {
        let group = self
            .groups
            .get(overlay)
            .ok_or_else(|| OverlayError::UnknownOverlay(overlay.clone()))?;
        if !group.is_member(from) {
            return Err(OverlayError::NotMember {
                overlay: overlay.clone(),
                peer: from.clone(),
            });
        }
        Ok(group.rendezvous.clone())
    }

    /// Validates member-to-member unicast inside one overlay.
    pub fn unicast(
        &self,
        overlay: &OverlayId,
        from: &PeerId,
        to: &PeerId,
    ) -> Result<(), OverlayError> {
        let group = self
            .groups
            .get(overlay)
            .ok_or_else(|| OverlayError::UnknownOverlay(overlay.clone()))?;
        for p in [from, to] {
            if !group.is_participant(p) {
                return Err(OverlayError::NotMember {
                    overlay: overlay.clone(),
                    peer: p.clone(),
                });
            }
        }
        Ok(())
    }

    /// Runs advertisement and join for every candidate in-process and
    /// returns the group in `Ready` state. `accept` decides whether a
    /// candidate answers the advertisement.
    pub fn create_overlay(
        &mut self,
        adv: OverlayAdvertisement,
        candidates: &[PeerId],
        mut accept: impl FnMut(&PeerId) -> bool,
    ) -> Result<&OverlayGroup, OverlayError> {
        if candidates.is_empty() {
            return Err(OverlayError::NoCandidates);
        }
        self.open(&adv)?;
        let id = adv.overlay_id;
        for peer in candidates {
            self.record_advertisement(&id, peer)?;
            if self.ineligible.contains(peer) || !accept(peer) {
                continue;
            }
            match self.join(&id, peer) {
                Ok(_) | Err(OverlayError::AlreadyMember { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        if self.groups[&id].members.is_empty() {
            self.groups.remove(&id);
            return Err(OverlayError::AllDeclined);
        }
        self.mark_ready(&id)?;
        Ok(&self.groups[&id])
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn adv(id: &str) -> OverlayAdvertisement {
        OverlayAdvertisement {
            overlay_id: id.into(),
            service_name: "fire contour service".into(),
            rendezvous: "city-admin".into(),
            created_at: SimTime::ZERO,
        }
    }

    fn peers(n: usize) -> Vec<PeerId> {
        (1..=n).map(|i| PeerId::new(format!("gto-0{i}"))).collect()
    }

    #[test]
    fn six_accepting_candidates_make_a_ready_group() {
        let mut t = OverlayTable::new([]);
        let g = t.create_overlay(adv("fire"), &peers(6), |_| true).unwrap();
        assert_eq!(g.members.len(), 6);
        assert_eq!(g.state, GroupState::Ready);
    }

    #[test]
    fn no_candidates_or_all_declined() {
        let mut t = OverlayTable::new([]);
        assert_eq!(
            t.create_overlay(adv("a"), &[], |_| true).unwrap_err(),
            OverlayError::NoCandidates
        );
        assert_eq!(
            t.create_overlay(adv("b"), &peers(3), |_| false)
                .unwrap_err(),
            OverlayError::AllDeclined
        );
        assert!(t.group(&"b".into()).is_none());
    }

    #[test]
    fn join_rules() {
        let mut t = OverlayTable::new([NodeId::new("sensor-01")]);
        let id = OverlayId::new("fire");
        t.open(&adv("fire")).unwrap();
        let p = PeerId::new("gto-01");
        assert_eq!(
            t.join(&id, &p),
            Err(OverlayError::UnknownOverlay(id.clone()))
        );
        t.record_advertisement(&id, &p).unwrap();
        assert_eq!(t.join(&id, &p).unwrap().member_count, 1);
        assert!(matches!(
            t.join(&id, &p),
            Err(OverlayError::AlreadyMember { .. })
        ));

        let a = PeerId::new("sensor-01");
        t.record_advertisement(&id, &a).unwrap();
        assert_eq!(t.join(&id, &a), Err(OverlayError::Ineligible(a)));

        let rdv = PeerId::new("city-admin");
        t.record_advertisement(&id, &rdv).unwrap();
        assert!(matches!(
            t.join(&id, &rdv),
            Err(OverlayError::AlreadyMember { .. })
        ));
    }

    #[test]
    fn multicast_reaches_members_but_not_sender() {
        let mut t = OverlayTable::new([]);
        t.create_overlay(adv("fire"), &peers(5), |_| true).unwrap();
        let id = OverlayId::new("fire");
        assert_eq!(t.multicast(&id, &"city-admin".into()).unwrap().len(), 5);
        let from_member = t.multicast(&id, &"gto-03".into()).unwrap();
        assert_eq!(from_member.len(), 4);
        assert!(!from_member.contains(&"gto-03".into()));
        assert!(matches!(
            t.multicast(&id, &"stranger".into()),
            Err(OverlayError::NotMember { .. })
        ));
        assert!(matches!(
            t.multicast(&"nope".into(), &"city-admin".into()),
            Err(OverlayError::UnknownOverlay(_))
        ));
    }

    #[test]
    fn multicast_requires_ready() {
        let mut t = OverlayTable::new([]);
        t.open(&adv("fire")).unwrap();
        assert_eq!(
            t.multicast(&"fire".into(), &"city-admin".into()),
            Err(OverlayError::NotReady("fire".into()))
        );
    }

    #[test]
    fn overlays_do_not_share_recipients() {
        let mut t = OverlayTable::new([]);
        t.create_overlay(adv("a"), &peers(3), |_| true).unwrap();
        let mut b = adv("b");
        b.rendezvous = "home-app".into();
        let others: Vec<PeerId> = ["gto-07", "gto-08"].map(PeerId::new).to_vec();
        t.create_overlay(b, &others, |_| true).unwrap();
        let to_a = t.multicast(&"a".into(), &"city-admin".into()).unwrap();
        assert!(to_a.iter().all(|p| !others.contains(p)));
    }

    #[test]
    fn direct_reply_goes_to_rendezvous_only() {
        let mut t = OverlayTable::new([]);
        t.create_overlay(adv("fire"), &peers(2), |_| true).unwrap();
        assert_eq!(
            t.direct_reply(&"fire".into(), &"gto-01".into()),
            Ok("city-admin".into())
        );
        assert!(matches!(
            t.direct_reply(&"fire".into(), &"x".into()),
            Err(OverlayError::NotMember { .. })
        ));
        assert!(t
            .unicast(&"fire".into(), &"gto-01".into(), &"gto-02".into())
            .is_ok());
        assert!(t
            .unicast(&"fire".into(), &"gto-01".into(), &"x".into())
            .is_err());
    }

    #[test]
    fn lifecycle_only_moves_forward() {
        let mut t = OverlayTable::new([]);
        t.open(&adv("fire")).unwrap();
        let id = OverlayId::new("fire");
        assert!(matches!(
            t.mark_active(&id),
            Err(OverlayError::InvalidTransition { .. })
        ));
        t.mark_ready(&id).unwrap();
        assert!(matches!(
            t.mark_ready(&id),
            Err(OverlayError::InvalidTransition { .. })
        ));
        t.mark_active(&id).unwrap();
        assert_eq!(t.group(&id).unwrap().state, GroupState::Active);
    }

    #[test]
    fn peer_in_two_overlays() {
        let mut t = OverlayTable::new([]);
        t.create_overlay(adv("a"), &peers(2), |_| true).unwrap();
        let mut b = adv("b");
        b.rendezvous = "home-app".into();
        t.create_overlay(b, &peers(1), |_| true).unwrap();
        assert_eq!(t.memberships(&"gto-01".into()).len(), 2);
    }

    #[test]
    fn wire_tags_are_fixed() {
        let m = OverlayMessage::new(
            OverlayMsgKind::DirectReply,
            "f".into(),
            "g".into(),
            b"{}".to_vec(),
        );
        assert_eq!(m.encode(), [5, 0, 1, b'f', 0, 1, b'g', b'{', b'}']);
        assert_eq!(
            OverlayMessage::decode(&[9, 0, 0, 0, 0]),
            Err(OverlayWireError::UnknownKind(9))
        );
        assert_eq!(
            OverlayMessage::decode(&[]),
            Err(OverlayWireError::Truncated)
        );
        assert_eq!(
            OverlayMessage::decode(&[1, 0, 5, b'a']),
            Err(OverlayWireError::Truncated)
        );
    }

    proptest! {
        #[test]
        fn wire_round_trip(tag in 1u8..=5, id in ".{0,20}", sender in ".{0,20}", payload in prop::collection::vec(any::<u8>(), 0..64)) {
            let m = OverlayMessage::new(OverlayMsgKind::from_tag(tag).unwrap(), id.into(), sender.into(), payload);
            prop_assert_eq!(OverlayMessage::decode(&m.encode()).unwrap(), m);
        }

        #[test]
        fn type_a_nodes_never_become_members(n_type_a in 1usize..5, n_gto in 0usize..5) {
            let type_a: Vec<NodeId> = (0..n_type_a).map(|i| NodeId::new(format!("a{i}"))).collect();
            let mut candidates: Vec<PeerId> = (0..n_gto).map(|i| PeerId::new(format!("g{i}"))).collect();
            candidates.extend(type_a.iter().cloned());
            let mut t = OverlayTable::new(type_a.clone());
            match t.create_overlay(adv("x"), &candidates, |_| true) {
                Ok(g) => prop_assert!(g.members.iter().all(|m| !type_a.contains(m))),
                Err(e) => prop_assert_eq!(e, OverlayError::AllDeclined),
            }
        }
    }
}
