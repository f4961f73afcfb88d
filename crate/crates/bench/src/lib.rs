//! Inputs shared by the benchmarks under `benches/`.

use situ_core::eval::{bundled, AnnotationFile, DecisionTrace};
use situ_core::geometry::{GazeTarget, Point3, RigidTransform};
use situ_core::simworld::default_camera;
use situ_core::tools::SystemVariant;
use situ_core::view_memory::{CapturedView, FixtureScorer, ViewStore};

/// A store of `n` views on a ring around the head, with a scorer whose
/// peak sits at `n / 2`.
pub fn ring_store(n: usize) -> (ViewStore, FixtureScorer) {
    let mut store = ViewStore::new(true);
    let mut scorer = FixtureScorer::default();
    for i in 0..n {
        let a = i as f64 / n as f64 * std::f64::consts::TAU;
        let target = GazeTarget::new(Point3::new(1.5 * a.sin(), 0.0, 1.5 * a.cos())).expect("ring target");
        let frame_id = format!("f{i}");
        let view = CapturedView {
            frame_id: frame_id.clone(),
            bytes: (i as u32).to_le_bytes().to_vec(),
            pose: RigidTransform::identity(),
            camera: default_camera(),
            t_ms: i as u64 * 100,
        };
        store.push(view, target);
        let d = i.abs_diff(n / 2) as f64;
        scorer.scores.insert(frame_id, 1.0 / (1.0 + d));
    }
    (store, scorer)
}

/// The decision trace and annotations of a bundled full-variant run.
pub fn scored_run(name: &str) -> (DecisionTrace, AnnotationFile) {
    let run = bundled::run(name, SystemVariant::Full).expect("bundled scenario runs");
    (run.trace, bundled::annotations(name).expect("bundled annotations"))
}
