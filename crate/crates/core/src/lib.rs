//! Deterministic, desk-scale WSN virtualization.

pub mod firecontour;
pub mod harness;
pub mod ids;
pub mod overlaynet;
pub mod physnode;
pub mod registry;
pub mod sensoragent;
pub mod simkernel;
pub mod vruntime;
pub mod wirecodec;

pub use firecontour::{
    compute_contour, estimate_distance, rate_model, ContourEstimate, LinearRateModel, RateParams,
};
pub use harness::{
    run_scenario, Comparison, MetricKind, MetricSample, OutputFormat, RunReport, ScenarioConfig,
};
pub use ids::{AgentId, AppId, NodeId, OverlayId, PeerId, Position, TaskId};
pub use physnode::NodeKind;
pub use simkernel::{SimDuration, SimTime};
pub use wirecodec::{decode_message, encode_message, Code, Message};
