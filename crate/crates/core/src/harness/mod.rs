//! Scenario runner: builds a world from a config, runs iterations on fresh
//! state, collects HPD/OCD/FND samples and checks invariants.

pub mod config;
pub mod invariants;
pub mod metrics;
pub mod report;
pub mod world;

pub use config::{ConfigError, ScenarioConfig};
pub use invariants::{check_all, InvariantResult};
pub use metrics::{
    mean, measure_fnd, measure_hpd, measure_ocd, overhead_pct, MetricError, MetricKind,
    MetricSample, Summary,
};
pub use report::{
    contour_from_log, metrics_csv, run_scenario, write_comparison, write_outputs, Comparison,
    ContourRecord, Mode, OutputFormat, ReportError, RunReport, ScenarioRun, TIME_BASE,
};
pub use world::{run_iteration, FireRoundLog, IterationOutcome, LogEvent, MessageRecord, Stage};
