mod common;

use vsn_core::harness::report::{contour_from_log, event_log, message_log};
use vsn_core::harness::{check_all, run_iteration, run_scenario, write_outputs, LogEvent, Stage};
use vsn_core::{MetricKind, NodeKind, OutputFormat};

#[test]
fn shipped_scenarios_pass_every_invariant_in_both_modes() {
    for name in ["fire.json", "mixed.json"] {
        let cfg = common::scenario(name);
        for baseline in [false, true] {
            let run = run_scenario(&cfg, baseline).unwrap();
            for inv in &run.report.invariants {
                assert_eq!(inv.violations, 0, "{name} baseline={baseline}: {inv:?}");
            }
            assert_eq!(run.report.deploy_failures, 0);
            assert!(run.report.fire_rounds > 0, "{name}: no fire rounds");
        }
    }
}

#[test]
fn calibrated_links_give_the_expected_steady_delays() {
    let cfg = common::scenario("fire.json");
    let virt = run_scenario(&cfg, false).unwrap().report;
    let base = run_scenario(&cfg, true).unwrap().report;
    assert!((virt.hpd_steady.as_ref().unwrap().mean_ms - 18.96).abs() < 1e-9);
    assert!((virt.mean(MetricKind::Fnd).unwrap() - 19.58).abs() < 1e-9);
    assert!((base.mean(MetricKind::Fnd).unwrap() - 18.96).abs() < 1e-9);
    assert!(virt.summaries.contains_key(&MetricKind::Ocd));
    assert!(!base.summaries.contains_key(&MetricKind::Ocd));
}

#[test]
fn iterations_start_fresh_and_differ_only_by_seed() {
    let mut cfg = common::scenario("mixed.json");
    cfg.iterations = 3;
    let run = run_scenario(&cfg, false).unwrap();
    assert_eq!(run.outcomes.len(), 3);
    assert!(run.outcomes.iter().all(|o| o.fresh_at_start));
    let seeds: Vec<u64> = run.outcomes.iter().map(|o| o.seed).collect();
    assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2]);
    // Jittered links: OCD varies between iterations.
    let ocd: Vec<f64> = run
        .samples()
        .filter(|s| s.kind == MetricKind::Ocd)
        .map(|s| s.value_ms)
        .collect();
    assert!(ocd.iter().any(|v| *v != ocd[0]));
}

#[test]
fn type_a_nodes_never_join_and_type_b_nodes_do() {
    let cfg = common::scenario("mixed.json");
    let out = run_iteration(&cfg, 0, false).unwrap();
    for g in &out.groups {
        for m in &g.members {
            assert_ne!(out.kinds[m], NodeKind::TypeA);
        }
    }
    let fire = out
        .groups
        .iter()
        .find(|g| g.overlay_id.as_str() == "fire-contour")
        .unwrap();
    assert!(fire.members.iter().any(|m| out.kinds[m] == NodeKind::TypeB));
    let home = out
        .groups
        .iter()
        .find(|g| g.overlay_id.as_str() == "home-monitoring")
        .unwrap();
    assert!(
        home.members.len() < fire.members.len(),
        "home overlay should be an owner subset"
    );
}

#[test]
fn every_overlay_member_goes_through_all_stages() {
    let cfg = common::scenario("fire.json");
    let out = run_iteration(&cfg, 0, false).unwrap();
    for g in &out.groups {
        for m in &g.members {
            let stages: Vec<Stage> = out
                .events
                .iter()
                .filter_map(|e| match e {
                    LogEvent::Lifecycle {
                        overlay_id,
                        peer,
                        stage,
                        ..
                    } if overlay_id == &g.overlay_id && peer == m => Some(*stage),
                    _ => None,
                })
                .collect();
            for s in [
                Stage::Discovery,
                Stage::Join,
                Stage::TaskDelivery,
                Stage::FirstData,
            ] {
                assert!(stages.contains(&s), "{}/{m} missing {s:?}", g.overlay_id);
            }
        }
    }
}

#[test]
fn invariants_catch_a_tampered_trace() {
    let cfg = common::scenario("fire.json");
    let mut out = run_iteration(&cfg, 0, false).unwrap();
    let di = out
        .messages
        .iter_mut()
        .find(|m| m.channel == vsn_core::sensoragent::ChannelKind::Di)
        .unwrap();
    di.senml = false;
    let hpd = out
        .samples
        .iter()
        .position(|s| s.kind == MetricKind::Hpd)
        .unwrap();
    out.samples.remove(hpd);
    let failed: Vec<String> = check_all(&cfg, &out)
        .into_iter()
        .filter(|r| !r.passed())
        .map(|r| r.name)
        .collect();
    assert!(failed.contains(&"path_separation".to_string()));
    assert!(failed.contains(&"hpd_traceability".to_string()));
}

#[test]
fn outputs_are_written_and_contours_recompute_from_the_log() {
    let cfg = common::scenario("fire.json");
    let run = run_scenario(&cfg, false).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&run, dir.path(), OutputFormat::Csv).unwrap();
    for f in [
        "metrics.csv",
        "events.jsonl",
        "messages.jsonl",
        "contour.json",
        "contour.csv",
        "report.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(csv.starts_with("kind,iteration,context,value_ms\n"));
    assert!(!message_log(&run.outcomes).unwrap().is_empty());

    let log = event_log(&run.outcomes).unwrap();
    let records = contour_from_log(&log[..]).unwrap();
    let logged: Vec<_> = run.outcomes[0].fire_rounds().collect();
    assert_eq!(records.len(), logged.len());
    for (r, l) in records.iter().zip(logged) {
        assert_eq!(r.estimate, l.estimate, "round {}", l.round);
    }
}

#[test]
fn json_format_writes_metrics_json() {
    let mut cfg = common::scenario("mixed.json");
    cfg.iterations = 1;
    let run = run_scenario(&cfg, false).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&run, dir.path(), OutputFormat::Json).unwrap();
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), run.samples().count());
}
