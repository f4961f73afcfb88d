use situ_core::eval::scenario::run_scenario_with;
use situ_core::eval::{bundled, score_trace};
use situ_core::session::{EventLog, RecordedFixture};
use situ_core::tools::SystemVariant;

fn golden(name: &str, variant: SystemVariant) -> String {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data/golden")
        .join(bundled::golden_log_name(name, variant));
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn fixture_replay_reproduces_every_golden_log() {
    for name in bundled::SCENARIO_NAMES {
        let scenario = bundled::scenario(name).unwrap();
        let scene = bundled::scene(&scenario.scene).unwrap();
        for variant in SystemVariant::ALL {
            let text = golden(name, variant);
            let log = EventLog::from_ndjson(&text).unwrap();
            let fixture = RecordedFixture::from_log(&log);
            assert_eq!(fixture.turn_count(), scenario.turns.len(), "{name}/{variant}");
            let run = run_scenario_with(&scenario, &scene, Box::new(fixture), &scenario.runtime_config(variant)).unwrap();
            assert_eq!(run.log.to_ndjson(), text, "{name}/{variant}");
            assert_eq!(run.trace.backend, "fixture");
        }
    }
}

#[test]
fn golden_logs_parse_and_score() {
    for name in bundled::SCENARIO_NAMES {
        let annotations = bundled::annotations(name).unwrap();
        for variant in SystemVariant::ALL {
            let run = bundled::run(name, variant).unwrap();
            let report = score_trace(&run.trace, &annotations).unwrap();
            for c in &report.categories {
                for v in [c.accuracy, c.precision, c.recall].into_iter().flatten() {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
            for m in [report.accuracy, report.precision, report.recall].into_iter().flatten() {
                assert!(m.std >= 0.0);
            }
        }
    }
}
