//! Run reports and output files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::firecontour::{compute_contour, ContourEstimate, LinearRateModel};
use crate::ids::{AppId, NodeId, OverlayId};

use super::config::{ConfigError, ScenarioConfig};
use super::invariants::{check_all, InvariantResult};
use super::metrics::{overhead_pct, summarize, MetricKind, MetricSample, Summary};
use super::world::{run_iteration, FireRoundLog, IterationOutcome, LogEvent, MessageRecord};

/// Every duration in a report is virtual time.
pub const TIME_BASE: &str = "simulated";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write outputs: {0}")]
    Io(#[from] io::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("event log line {line}: {source}")]
    BadLine {
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Virtualized,
    Baseline,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantSummary {
    pub name: String,
    pub checked: usize,
    pub violations: usize,
    /// A few of the violations, for the log.
    pub examples: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub mode: Mode,
    pub time_base: String,
    pub iterations: usize,
    pub summaries: BTreeMap<MetricKind, Summary>,
    /// HPD without the first exchange of each series.
    pub hpd_steady: Option<Summary>,
    /// Mean FND against steady-state mean HPD.
    pub overhead_vs_hpd_pct: Option<f64>,
    pub fire_rounds: usize,
    pub deploy_failures: usize,
    pub never_ready: Vec<OverlayId>,
    pub invariants: Vec<InvariantSummary>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.invariants.iter().all(|i| i.violations == 0)
    }

    pub fn mean(&self, kind: MetricKind) -> Option<f64> {
        self.summaries.get(&kind).map(|s| s.mean_ms)
    }
}

/// Virtualized and baseline runs of one scenario on one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub seed: u64,
    pub time_base: String,
    pub hpd_steady_ms: Option<f64>,
    pub fnd_virtualized_ms: Option<f64>,
    pub fnd_baseline_ms: Option<f64>,
    /// Virtualized FND against the measured baseline FND.
    pub overhead_vs_baseline_pct: Option<f64>,
    /// Virtualized FND against steady HPD, the usual approximation of the
    /// baseline.
    pub overhead_vs_hpd_pct: Option<f64>,
}

impl Comparison {
    pub fn new(virtualized: &RunReport, baseline: &RunReport) -> Self {
        let hpd = virtualized.hpd_steady.as_ref().map(|s| s.mean_ms);
        let fv = virtualized.mean(MetricKind::Fnd);
        let fb = baseline.mean(MetricKind::Fnd);
        Comparison {
            scenario: virtualized.scenario.clone(),
            seed: virtualized.seed,
            time_base: TIME_BASE.to_owned(),
            hpd_steady_ms: hpd,
            fnd_virtualized_ms: fv,
            fnd_baseline_ms: fb,
            overhead_vs_baseline_pct: fv.zip(fb).and_then(|(v, b)| overhead_pct(v, b).ok()),
            overhead_vs_hpd_pct: fv.zip(hpd).and_then(|(v, h)| overhead_pct(v, h).ok()),
        }
    }
}

/// A full run: every iteration plus the aggregate report.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub report: RunReport,
    pub outcomes: Vec<IterationOutcome>,
}

impl ScenarioRun {
    pub fn samples(&self) -> impl Iterator<Item = &MetricSample> {
        self.outcomes.iter().flat_map(|o| &o.samples)
    }
}

fn steady_hpd(samples: &[MetricSample]) -> Vec<MetricSample> {
    let mut seen: BTreeMap<(usize, &str), ()> = BTreeMap::new();
    samples
        .iter()
        .filter(|s| s.kind == MetricKind::Hpd)
        .filter(|s| seen.insert((s.iteration, &s.context), ()).is_some())
        .cloned()
        .collect()
}

fn aggregate(results: impl IntoIterator<Item = InvariantResult>) -> Vec<InvariantSummary> {
    let mut by_name: BTreeMap<String, InvariantSummary> = BTreeMap::new();
    for r in results {
        let entry = by_name
            .entry(r.name.clone())
            .or_insert_with(|| InvariantSummary {
                name: r.name.clone(),
                checked: 0,
                violations: 0,
                examples: Vec::new(),
            });
        entry.checked += r.checked;
        entry.violations += r.violations.len();
        let room = 5usize.saturating_sub(entry.examples.len());
        entry.examples.extend(r.violations.into_iter().take(room));
    }
    by_name.into_values().collect()
}

/// Runs every iteration of `cfg` in the given mode, each on fresh state.
pub fn run_scenario(cfg: &ScenarioConfig, baseline: bool) -> Result<ScenarioRun, ConfigError> {
    let mut outcomes = Vec::with_capacity(cfg.iterations);
    let mut checks = Vec::new();
    for i in 0..cfg.iterations {
        let out = run_iteration(cfg, i, baseline)?;
        let results = check_all(cfg, &out);
        for c in results.iter().filter(|c| !c.passed()) {
            tracing::warn!(iteration = i, invariant = %c.name, violations = c.violations.len(), "invariant violated");
        }
        checks.extend(results);
        outcomes.push(out);
    }
    let samples: Vec<MetricSample> = outcomes
        .iter()
        .flat_map(|o| o.samples.iter().cloned())
        .collect();
    let summaries = [MetricKind::Hpd, MetricKind::Ocd, MetricKind::Fnd]
        .into_iter()
        .filter_map(|k| summarize(&samples, k).map(|s| (k, s)))
        .collect::<BTreeMap<_, _>>();
    let hpd_steady = summarize(&steady_hpd(&samples), MetricKind::Hpd);
    let overhead = summaries
        .get(&MetricKind::Fnd)
        .zip(hpd_steady.as_ref())
        .and_then(|(f, h)| overhead_pct(f.mean_ms, h.mean_ms).ok());
    let report = RunReport {
        scenario: cfg.name.clone(),
        seed: cfg.seed,
        mode: if baseline {
            Mode::Baseline
        } else {
            Mode::Virtualized
        },
        time_base: TIME_BASE.to_owned(),
        iterations: cfg.iterations,
        summaries,
        hpd_steady,
        overhead_vs_hpd_pct: overhead,
        fire_rounds: outcomes.iter().map(|o| o.fire_rounds().count()).sum(),
        deploy_failures: outcomes.iter().map(|o| o.deploy_failures).sum(),
        never_ready: outcomes
            .iter()
            .flat_map(|o| o.never_ready.iter().cloned())
            .collect(),
        invariants: aggregate(checks),
    };
    Ok(ScenarioRun { report, outcomes })
}

#[derive(Serialize, Deserialize)]
struct CsvRow<'a> {
    kind: MetricKind,
    iteration: usize,
    context: &'a str,
    value_ms: f64,
}

/// Metrics as CSV: `kind,iteration,context,value_ms`.
pub fn metrics_csv(samples: &[MetricSample]) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in samples {
        w.serialize(CsvRow {
            kind: s.kind,
            iteration: s.iteration,
            context: &s.context,
            value_ms: s.value_ms,
        })?;
    }
    w.flush()?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

#[derive(Serialize, Deserialize)]
struct Line<T> {
    iteration: usize,
    #[serde(flatten)]
    entry: T,
}

fn jsonl<'a, T: Serialize + 'a>(
    items: impl IntoIterator<Item = (usize, &'a T)>,
) -> Result<Vec<u8>, ReportError> {
    let mut out = Vec::new();
    for (iteration, entry) in items {
        serde_json::to_writer(&mut out, &Line { iteration, entry })?;
        out.push(b'\n');
    }
    Ok(out)
}

/// One line per log event, tagged with its iteration.
pub fn event_log(outcomes: &[IterationOutcome]) -> Result<Vec<u8>, ReportError> {
    jsonl::<LogEvent>(
        outcomes
            .iter()
            .flat_map(|o| o.events.iter().map(move |e| (o.iteration, e))),
    )
}

pub fn message_log(outcomes: &[IterationOutcome]) -> Result<Vec<u8>, ReportError> {
    jsonl::<MessageRecord>(
        outcomes
            .iter()
            .flat_map(|o| o.messages.iter().map(move |m| (o.iteration, m))),
    )
}

/// A contour recomputed from a logged round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourRecord {
    pub iteration: usize,
    pub app_id: AppId,
    pub round: u64,
    pub reporter: NodeId,
    pub fnd_ms: f64,
    pub estimate: Option<ContourEstimate>,
    pub error: Option<String>,
}

fn recompute(iteration: usize, log: &FireRoundLog) -> ContourRecord {
    let result = LinearRateModel::new(log.params)
        .map_err(|e| e.to_string())
        .and_then(|m| {
            compute_contour(&log.observations(), &log.positions(), &m, log.sectors)
                .map_err(|e| e.to_string())
        });
    let (estimate, error) = match result {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e)),
    };
    ContourRecord {
        iteration,
        app_id: log.app_id.clone(),
        round: log.round,
        reporter: log.reporter.clone(),
        fnd_ms: log.fnd_ms,
        estimate,
        error,
    }
}

/// Recomputes every fire round found in an event log.
pub fn contour_from_log(reader: impl BufRead) -> Result<Vec<ContourRecord>, ReportError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line<LogEvent> =
            serde_json::from_str(&line).map_err(|source| ReportError::BadLine {
                line: i + 1,
                source,
            })?;
        if let LogEvent::FireRound(r) = &parsed.entry {
            out.push(recompute(parsed.iteration, r));
        }
    }
    Ok(out)
}

fn contours(outcomes: &[IterationOutcome]) -> Vec<ContourRecord> {
    outcomes
        .iter()
        .flat_map(|o| o.fire_rounds().map(move |r| recompute(o.iteration, r)))
        .collect()
}

#[derive(Serialize)]
struct ContourCsvRow<'a> {
    iteration: usize,
    round: u64,
    reporter: &'a str,
    node: &'a str,
    rate: f64,
    estimated_distance_m: Option<f64>,
}

fn contour_csv(outcomes: &[IterationOutcome]) -> Result<Vec<u8>, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for o in outcomes {
        for r in o.fire_rounds() {
            for input in &r.inputs {
                w.serialize(ContourCsvRow {
                    iteration: o.iteration,
                    round: r.round,
                    reporter: r.reporter.as_str(),
                    node: input.node.as_str(),
                    rate: input.rate,
                    estimated_distance_m: r
                        .estimate
                        .as_ref()
                        .and_then(|e| e.distances.get(&input.node).copied()),
                })?;
            }
        }
    }
    w.flush()?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, ReportError> {
    let path = dir.join(name);
    let mut f = fs::File::create(&path)?;
    f.write_all(bytes)?;
    Ok(path)
}

fn pretty<T: Serialize>(v: &T) -> Result<Vec<u8>, ReportError> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes metrics, logs, contours and the report into `dir`.
pub fn write_outputs(
    run: &ScenarioRun,
    dir: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir)?;
    let samples: Vec<MetricSample> = run.samples().cloned().collect();
    let mut written = vec![match format {
        OutputFormat::Csv => write_file(dir, "metrics.csv", &metrics_csv(&samples)?)?,
        OutputFormat::Json => write_file(dir, "metrics.json", &pretty(&samples)?)?,
    }];
    written.push(write_file(dir, "events.jsonl", &event_log(&run.outcomes)?)?);
    written.push(write_file(
        dir,
        "messages.jsonl",
        &message_log(&run.outcomes)?,
    )?);
    written.push(write_file(
        dir,
        "contour.json",
        &pretty(&contours(&run.outcomes))?,
    )?);
    written.push(write_file(
        dir,
        "contour.csv",
        &contour_csv(&run.outcomes)?,
    )?);
    written.push(write_file(dir, "report.json", &pretty(&run.report)?)?);
    Ok(written)
}

pub fn write_comparison(cmp: &Comparison, dir: &Path) -> Result<PathBuf, ReportError> {
    fs::create_dir_all(dir)?;
    write_file(dir, "comparison.json", &pretty(cmp)?)
}
