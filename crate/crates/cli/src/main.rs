use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use vsn_core::harness::{
    contour_from_log, run_scenario, write_comparison, write_outputs, Comparison, ConfigError,
    RunReport,
};
use vsn_core::{MetricKind, OutputFormat, ScenarioConfig};

const EXIT_VIOLATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(
    name = "vsn",
    version,
    about = "Discrete-event WSN virtualization simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write metrics, logs and contours.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario iteration count.
        #[arg(long)]
        iterations: Option<usize>,
        /// Also run the no-overlay baseline and compare the two.
        #[arg(long)]
        baseline: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Recompute fire contours from an event log.
    Contour {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    ScenarioConfig::load(path)
}

fn print_report(r: &RunReport) {
    println!(
        "{} ({:?}, seed {}, {} iteration(s), times {})",
        r.scenario, r.mode, r.seed, r.iterations, r.time_base
    );
    for kind in [MetricKind::Hpd, MetricKind::Ocd, MetricKind::Fnd] {
        if let Some(s) = r.summaries.get(&kind) {
            println!(
                "  {kind}: n={} mean={:.3} ms min={:.3} max={:.3}",
                s.count, s.mean_ms, s.min_ms, s.max_ms
            );
        }
    }
    if let Some(s) = &r.hpd_steady {
        println!("  HPD steady: mean={:.3} ms", s.mean_ms);
    }
    if let Some(o) = r.overhead_vs_hpd_pct {
        println!("  FND overhead vs HPD: {o:.2}%");
    }
    println!(
        "  fire rounds: {}, deploy failures: {}",
        r.fire_rounds, r.deploy_failures
    );
    for inv in &r.invariants {
        let status = if inv.violations == 0 {
            "ok"
        } else {
            "VIOLATED"
        };
        println!(
            "  invariant {}: {status} ({} checks, {} violations)",
            inv.name, inv.checked, inv.violations
        );
        for e in &inv.examples {
            println!("    {e}");
        }
    }
}

fn run(
    scenario: &Path,
    seed: Option<u64>,
    iterations: Option<usize>,
    baseline: bool,
    out: &Path,
    format: OutputFormat,
) -> anyhow::Result<bool> {
    let mut cfg = load(scenario)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(n) = iterations {
        cfg.iterations = n;
    }
    cfg.validate()?;

    let primary = run_scenario(&cfg, cfg.baseline_mode)?;
    write_outputs(&primary, out, format)?;
    print_report(&primary.report);
    let mut passed = primary.report.passed();

    if baseline && !cfg.baseline_mode {
        let base = run_scenario(&cfg, true)?;
        write_outputs(&base, &out.join("baseline"), format)?;
        print_report(&base.report);
        passed &= base.report.passed();
        let cmp = Comparison::new(&primary.report, &base.report);
        write_comparison(&cmp, out)?;
        match cmp.overhead_vs_baseline_pct {
            Some(o) => println!("FND overhead vs baseline: {o:.2}% (simulated)"),
            None => println!("FND overhead vs baseline: not available (no completed fire rounds)"),
        }
    }
    println!("outputs written to {}", out.display());
    Ok(passed)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_env("VSN_LOG").unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            iterations,
            baseline,
            out,
            format,
        } => run(&scenario, seed, iterations, baseline, &out, format.into()),
        Command::Validate { scenario } => load(&scenario)
            .map(|cfg| {
                println!(
                    "{}: ok ({} nodes, {} applications)",
                    cfg.name,
                    cfg.nodes.len(),
                    cfg.applications.len()
                );
                true
            })
            .map_err(Into::into),
        Command::Contour { input, out } => (|| {
            let file =
                File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let records = contour_from_log(BufReader::new(file))?;
            let mut bytes = serde_json::to_vec_pretty(&records)?;
            bytes.push(b'\n');
            std::fs::write(&out, bytes).with_context(|| format!("writing {}", out.display()))?;
            println!("{} contour(s) written to {}", records.len(), out.display());
            Ok(true)
        })(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VIOLATION),
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_VIOLATION)
            }
        }
    }
}
