//! Trace checks run after every iteration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ids::{AppId, NodeId, OverlayId, PeerId};
use crate::overlaynet::OverlayMsgKind;
use crate::physnode::NodeKind;
use crate::sensoragent::ChannelKind;
use crate::simkernel::SimTime;

use super::config::ScenarioConfig;
use super::metrics::MetricKind;
use super::world::{IterationOutcome, LogEvent, MessageRecord, Stage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub name: String,
    pub checked: usize,
    pub violations: Vec<String>,
}

impl InvariantResult {
    fn new(name: &str) -> Self {
        InvariantResult {
            name: name.to_owned(),
            checked: 0,
            violations: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.violations.push(msg());
        }
    }
}

pub fn check_all(cfg: &ScenarioConfig, out: &IterationOutcome) -> Vec<InvariantResult> {
    let mut results = vec![
        path_separation(out),
        overlay_leakage(cfg, out),
        type_a_never_member(out),
        gi_delegation(out),
        priority_order(out),
        fresh_state(out),
        hpd_traceability(out),
        heterogeneity(out),
    ];
    if !out.baseline {
        results.push(lifecycle_order(out));
    }
    if cfg.link.session_setup_ms > 0.0 && cfg.link.jitter_max_ms == 0.0 {
        results.push(first_sample_spike(out));
    }
    results
}

/// Ci never carries SenML; Di requests always do.
pub fn path_separation(out: &IterationOutcome) -> InvariantResult {
    let mut r = InvariantResult::new("path_separation");
    for m in &out.messages {
        match m.channel {
            ChannelKind::Di if !m.response => {
                r.check(m.senml, || format!("Di request #{} is not SenML", m.seq))
            }
            ChannelKind::Di => {}
            other => r.check(!m.senml, || format!("SenML on {other:?} in #{}", m.seq)),
        }
    }
    r
}

/// Overlay traffic reaches only participants of its overlay, and Di data
/// reaches only the application the task belongs to.
pub fn overlay_leakage(cfg: &ScenarioConfig, out: &IterationOutcome) -> InvariantResult {
    let mut r = InvariantResult::new("overlay_leakage");
    let participants: BTreeMap<&OverlayId, BTreeSet<&PeerId>> = out
        .groups
        .iter()
        .map(|g| {
            (
                &g.overlay_id,
                g.members.iter().chain([&g.rendezvous]).collect(),
            )
        })
        .collect();
    let app_of: BTreeMap<&NodeId, &AppId> = cfg
        .applications
        .iter()
        .map(|a| (&a.endpoint, &a.app_id))
        .collect();
    for m in &out.messages {
        if let (Some(kind), Some(id)) = (m.overlay_kind, &m.overlay_id) {
            if matches!(
                kind,
                OverlayMsgKind::GroupMulticast | OverlayMsgKind::DirectReply
            ) {
                let ok = participants
                    .get(id)
                    .is_some_and(|p| p.contains(&m.to) && p.contains(&m.from));
                r.check(ok, || {
                    format!(
                        "{kind:?} #{} for {id} between {} and {}",
                        m.seq, m.from, m.to
                    )
                });
            }
        }
        if m.channel == ChannelKind::Di && !m.response {
            let target = app_of.get(&m.to).map(|a| a.as_str());
            let uri_app = m
                .uri
                .strip_prefix("apps/")
                .and_then(|u| u.split('/').next());
            r.check(target.is_some() && target == uri_app, || {
                format!("Di #{} to {} addressed {}", m.seq, m.to, m.uri)
            });
        }
    }
    r
}

pub fn type_a_never_member(out: &IterationOutcome) -> InvariantResult {
    let mut r = InvariantResult::new("type_a_never_member");
    for g in &out.groups {
        for p in &g.members {
            let kind = out.kinds.get(p);
            r.check(kind != Some(&NodeKind::TypeA), || {
                format!("{p} is a Type A member of {}", g.overlay_id)
            });
        }
    }
    r
}

/// Type A nodes talk only Gi, and only with their agent host. Their data
/// reaches applications through a Gi frame that the host turned into Di.
pub fn gi_delegation(out: &IterationOutcome) -> InvariantResult {
    let mut r = InvariantResult::new("gi_delegation");
    let is_a = |n: &NodeId| out.kinds.get(n) == Some(&NodeKind::TypeA);
    for m in &out.messages {
        if is_a(&m.from) || is_a(&m.to) {
            r.check(m.channel == ChannelKind::Gi, || {
                format!(
                    "#{} between {} and {} on {:?}",
                    m.seq, m.from, m.to, m.channel
                )
            });
        }
        if m.channel == ChannelKind::Di && !m.response {
            if let Some(origin) = m.origin.as_ref().filter(|o| is_a(o)) {
                let cause: Option<&MessageRecord> =
                    m.cause.and_then(|c| out.messages.get(c as usize));
                let ok = cause.is_some_and(|c| {
                    c.channel == ChannelKind::Gi && &c.from == origin && c.to == m.from
                });
                r.check(ok, || format!("Di #{} for {origin} has no Gi cause", m.seq));
            }
        }
    }
    r
}

/// Within one tick, emissions come out in priority order.
pub fn priority_order(out: &IterationOutcome) -> InvariantResult {
    let mut r = InvariantResult::new("priority_order");
    for e in &out.events {
        if let LogEvent::Tick { at, node, emitted } = e {
            let ok = emitted.windows(2).all(|w| w[0].priority <= w[1].priority);
            r.check(ok, || format!("tick of {node} at {at} out of order"));
        }
    }
    r
}

pub fn fresh_state(out: &IterationOutcome) -> InvariantResult {
    let mut r = InvariantResult::new("fresh_state");
    r.check(out.fresh_at_start, || {
        format!("iteration {} started with state", out.iteration)
    });
    r
}

/// One HPD sample per acknowledged Di POST, each stamped when the 2.01
/// reached the sender.
pub fn hpd_traceability(out: &IterationOutcome) -> InvariantResult {
    let mut r = InvariantResult::new("hpd_traceability");
    let mut acks: BTreeMap<(String, SimTime), usize> = BTreeMap::new();
    for m in &out.messages {
        if m.channel == ChannelKind::Di && m.response && m.code == "2.01" {
            if let Some(at) = m.delivered_at {
                *acks
                    .entry((format!("{}->{}", m.to, m.from), at))
                    .or_default() += 1;
            }
        }
    }
    let hpd: Vec<_> = out
        .samples
        .iter()
        .filter(|s| s.kind == MetricKind::Hpd)
        .collect();
    let total: usize = acks.values().sum();
    r.check(hpd.len() == total, || {
        format!("{} HPD samples for {total} acknowledged POSTs", hpd.len())
    });
    for s in hpd {
        let left = acks.get_mut(&(s.context.clone(), s.at));
        let ok = match left {
            Some(n) if *n > 0 => {
                *n -= 1;
                true
            }
            _ => false,
        };
        r.check(ok, || {
            format!("HPD sample {} at {} has no matching 2.01", s.context, s.at)
        });
    }
    r
}

/// When both sensor kinds produce data, both reach applications.
pub fn heterogeneity(out: &IterationOutcome) -> InvariantResult {
    let mut r = InvariantResult::new("heterogeneity");
    let emitting: BTreeSet<NodeKind> = out
        .emitted
        .keys()
        .filter_map(|(n, _)| out.kinds.get(n).copied())
        .collect();
    if emitting.contains(&NodeKind::TypeA) && emitting.contains(&NodeKind::TypeB) {
        let received: BTreeSet<NodeKind> = out
            .received_from
            .values()
            .flatten()
            .filter_map(|n| out.kinds.get(n).copied())
            .collect();
        for kind in [NodeKind::TypeA, NodeKind::TypeB] {
            r.check(received.contains(&kind), || {
                format!("no data from any {kind:?} node")
            });
        }
    }
    r
}

/// Per overlay and member: discovery, then join, then every task delivery,
/// then the first data, each strictly later in virtual time.
pub fn lifecycle_order(out: &IterationOutcome) -> InvariantResult {
    let mut r = InvariantResult::new("lifecycle_order");
    let mut seen: BTreeMap<(&OverlayId, &PeerId), BTreeMap<Stage, Vec<SimTime>>> = BTreeMap::new();
    for e in &out.events {
        if let LogEvent::Lifecycle {
            at,
            overlay_id,
            peer,
            stage,
            ..
        } = e
        {
            seen.entry((overlay_id, peer))
                .or_default()
                .entry(*stage)
                .or_default()
                .push(*at);
        }
    }
    for g in &out.groups {
        for member in &g.members {
            let stages = seen.get(&(&g.overlay_id, member));
            let first = |s: Stage| {
                stages
                    .and_then(|m| m.get(&s))
                    .and_then(|v| v.iter().min().copied())
            };
            let last = |s: Stage| {
                stages
                    .and_then(|m| m.get(&s))
                    .and_then(|v| v.iter().max().copied())
            };
            let ctx = format!("{}/{member}", g.overlay_id);
            let (Some(disc), Some(join)) = (first(Stage::Discovery), first(Stage::Join)) else {
                r.check(false, || format!("{ctx}: missing discovery or join"));
                continue;
            };
            r.check(disc < join, || {
                format!("{ctx}: join at {join} not after discovery at {disc}")
            });
            if let Some(delivery) = first(Stage::TaskDelivery) {
                r.check(join < delivery, || {
                    format!("{ctx}: delivery at {delivery} not after join")
                });
            }
            if let Some(data) = first(Stage::FirstData) {
                let delivered = last(Stage::TaskDelivery);
                r.check(delivered.is_some_and(|d| d < data), || {
                    format!("{ctx}: first data at {data} before all tasks were delivered")
                });
            }
        }
    }
    r
}

/// In every HPD series the first sample exceeds all later ones.
pub fn first_sample_spike(out: &IterationOutcome) -> InvariantResult {
    let mut r = InvariantResult::new("first_sample_spike");
    let mut series: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in out.samples.iter().filter(|s| s.kind == MetricKind::Hpd) {
        series.entry(&s.context).or_default().push(s.value_ms);
    }
    for (ctx, values) in series {
        if let Some((first, rest)) = values.split_first() {
            r.check(rest.iter().all(|v| first > v), || {
                format!("{ctx}: first sample {first} ms is not the maximum")
            });
        }
    }
    r
}
