//! HPD, OCD and FND samples and the overhead formula.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::firecontour::FireRound;
use crate::ids::OverlayId;
use crate::simkernel::{SimDuration, SimTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    /// Di POST to its 2.01, at the sender.
    #[serde(rename = "HPD")]
    Hpd,
    /// Overlay creation start to `Ready`.
    #[serde(rename = "OCD")]
    Ocd,
    /// Fire notification multicast to the last reply.
    #[serde(rename = "FND")]
    Fnd,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Hpd => "HPD",
            MetricKind::Ocd => "OCD",
            MetricKind::Fnd => "FND",
        })
    }
}

/// One measured delay, in simulated milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub kind: MetricKind,
    pub iteration: usize,
    pub context: String,
    pub value_ms: f64,
    /// When the measurement completed.
    pub at: SimTime,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("request never got a response")]
    NoResponse,
    #[error("overlay {0} never became ready")]
    NeverReady(OverlayId),
    #[error("round {round} still waits for {missing} replies")]
    IncompleteRound { round: u64, missing: usize },
    #[error("baseline mean must be positive")]
    ZeroBaseline,
}

/// A request as seen by its sender.
#[derive(Clone, Debug, PartialEq)]
pub struct Exchange {
    pub sent_at: SimTime,
    pub response_at: Option<SimTime>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverlayTrace {
    pub overlay_id: OverlayId,
    pub started_at: SimTime,
    pub ready_at: Option<SimTime>,
}

fn sample(
    kind: MetricKind,
    iteration: usize,
    context: String,
    d: SimDuration,
    at: SimTime,
) -> MetricSample {
    MetricSample {
        kind,
        iteration,
        context,
        value_ms: d.as_millis_f64(),
        at,
    }
}

pub fn measure_hpd(
    ex: &Exchange,
    iteration: usize,
    context: impl Into<String>,
) -> Result<MetricSample, MetricError> {
    let done = ex.response_at.ok_or(MetricError::NoResponse)?;
    Ok(sample(
        MetricKind::Hpd,
        iteration,
        context.into(),
        done.since(ex.sent_at),
        done,
    ))
}

pub fn measure_ocd(trace: &OverlayTrace, iteration: usize) -> Result<MetricSample, MetricError> {
    let ready = trace
        .ready_at
        .ok_or_else(|| MetricError::NeverReady(trace.overlay_id.clone()))?;
    Ok(sample(
        MetricKind::Ocd,
        iteration,
        trace.overlay_id.to_string(),
        ready.since(trace.started_at),
        ready,
    ))
}

pub fn measure_fnd(
    round: &FireRound,
    iteration: usize,
    context: impl Into<String>,
) -> Result<MetricSample, MetricError> {
    let fnd = round.fnd().map_err(|_| MetricError::IncompleteRound {
        round: round.round,
        missing: round.expected.len() - round.replies.len(),
    })?;
    Ok(sample(
        MetricKind::Fnd,
        iteration,
        context.into(),
        fnd,
        round.sent_at + fnd,
    ))
}

/// `100 * (fnd - hpd) / hpd`.
pub fn overhead_pct(fnd_mean_ms: f64, hpd_mean_ms: f64) -> Result<f64, MetricError> {
    if !(hpd_mean_ms.is_finite() && hpd_mean_ms > 0.0) {
        return Err(MetricError::ZeroBaseline);
    }
    Ok(100.0 * (fnd_mean_ms - hpd_mean_ms) / hpd_mean_ms)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

pub fn summarize(samples: &[MetricSample], kind: MetricKind) -> Option<Summary> {
    let values: Vec<f64> = samples
        .iter()
        .filter(|s| s.kind == kind)
        .map(|s| s.value_ms)
        .collect();
    Some(Summary {
        count: values.len(),
        mean_ms: mean(&values)?,
        min_ms: values.iter().copied().fold(f64::INFINITY, f64::min),
        max_ms: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use super::*;
    use crate::ids::PeerId;

    #[test]
    fn overhead_examples() {
        let pct = overhead_pct(19.58, 18.96).unwrap();
        assert!((pct - 3.27).abs() < 0.005, "{pct}");
        assert_eq!(overhead_pct(7.5, 7.5).unwrap(), 0.0);
        assert_eq!(overhead_pct(15.0, 10.0).unwrap(), 50.0);
        assert_eq!(overhead_pct(1.0, 0.0), Err(MetricError::ZeroBaseline));
    }

    #[test]
    fn hpd_examples() {
        let first = Exchange {
            sent_at: SimTime::from_millis(100),
            response_at: Some(SimTime::from_millis(118)),
        };
        assert_eq!(measure_hpd(&first, 0, "g").unwrap().value_ms, 18.0);
        let lost = Exchange {
            sent_at: SimTime::ZERO,
            response_at: None,
        };
        assert_eq!(measure_hpd(&lost, 0, "g"), Err(MetricError::NoResponse));
        let flat = vec![18.96; 50];
        assert!((mean(&flat).unwrap() - 18.96).abs() < 1e-12);
        assert_eq!(mean(&[]), None);
    }

    #[test]
    fn ocd_requires_ready() {
        let mut t = OverlayTrace {
            overlay_id: "o".into(),
            started_at: SimTime::from_millis(5),
            ready_at: None,
        };
        assert_eq!(measure_ocd(&t, 0), Err(MetricError::NeverReady("o".into())));
        t.ready_at = Some(SimTime::from_millis(2000));
        assert_eq!(measure_ocd(&t, 0).unwrap().value_ms, 1995.0);
    }

    #[test]
    fn fnd_of_a_symmetric_round_is_two_hops_plus_compute() {
        let d = SimDuration::from_millis(9);
        let c = SimDuration::from_millis(2);
        let sent = SimTime::from_secs(1);
        let peers: Vec<PeerId> = (1..=5).map(|i| PeerId::new(format!("p{i}"))).collect();
        let mut round = FireRound {
            round: 0,
            reporter: "s".into(),
            reporter_peer: "p0".into(),
            sent_at: sent,
            expected: peers.iter().cloned().collect::<BTreeSet<_>>(),
            replies: BTreeMap::new(),
        };
        for p in &peers[..4] {
            round.replies.insert(p.clone(), (sent + d + c + d, vec![]));
        }
        assert_eq!(
            measure_fnd(&round, 0, "x"),
            Err(MetricError::IncompleteRound {
                round: 0,
                missing: 1
            })
        );
        round
            .replies
            .insert(peers[4].clone(), (sent + d + c + d, vec![]));
        assert_eq!(measure_fnd(&round, 0, "x").unwrap().value_ms, 20.0);
    }
}
