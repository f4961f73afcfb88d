//! Memory of anchored viewpoints: sweep-and-save, concurrent relevance
//! scoring with argmax retrieval, and direct vision queries.

mod persist;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{CameraModel, GazeTarget, RigidTransform};
use crate::session::{Session, SessionError, SessionEvent};

pub use persist::{load_store, save_store, MANIFEST_FILE};

/// Upper bound on simultaneous relevance evaluations.
pub const MAX_SCORING_WORKERS: usize = 8;

#[derive(Debug, Error)]
pub enum ViewError {
    #[error("look_around needs at least one target")]
    EmptyTargetList,
    #[error("motion to target {0} did not complete")]
    MotionTimeout(usize),
    #[error("view store is empty; run look_around first")]
    EmptyStore,
    #[error("no camera frame available yet")]
    NoFrameAvailable,
    #[error("corrupt store record at {0}")]
    CorruptRecord(String),
    #[error("frame blob missing for '{0}'")]
    MissingFrame(String),
    #[error("store I/O at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Session(#[from] SessionError),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("scorer failed: {0}")]
pub struct ScorerError(pub String);

/// Relevance of a stored frame to a free-text query, in [0, 1].
/// Implementations are called from several threads at once.
pub trait RelevanceScorer: Sync {
    fn score(&self, frame_id: &str, query: &str) -> Result<f64, ScorerError>;
}

/// Returns pre-recorded scores keyed by frame id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixtureScorer {
    pub scores: BTreeMap<String, f64>,
}

impl RelevanceScorer for FixtureScorer {
    fn score(&self, frame_id: &str, _query: &str) -> Result<f64, ScorerError> {
        self.scores
            .get(frame_id)
            .copied()
            .ok_or_else(|| ScorerError(format!("no recorded score for '{frame_id}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub frame_id: String,
    /// Hex SHA-256 of the frame bytes.
    pub frame_hash: String,
    pub pose: RigidTransform,
    pub camera: CameraModel,
    pub target: GazeTarget,
    pub captured_at: u64,
}

/// Ordered view records plus their content-addressed frame bytes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ViewStore {
    records: Vec<ViewRecord>,
    blobs: BTreeMap<String, Vec<u8>>,
    replace_on_sweep: bool,
    stale: bool,
}

pub fn frame_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ViewStore {
    pub fn new(replace_on_sweep: bool) -> Self {
        Self {
            replace_on_sweep,
            ..Self::default()
        }
    }

    pub fn records(&self) -> &[ViewRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn replace_on_sweep(&self) -> bool {
        self.replace_on_sweep
    }

    /// True once the world changed after the last sweep.
    pub fn is_stale(&self) -> bool {
        self.stale
    }

    pub fn mark_stale(&mut self) {
        if !self.records.is_empty() {
            self.stale = true;
        }
    }

    pub fn blob(&self, hash: &str) -> Option<&[u8]> {
        self.blobs.get(hash).map(Vec::as_slice)
    }

    pub fn frame_bytes(&self, record: &ViewRecord) -> Option<&[u8]> {
        self.blob(&record.frame_hash)
    }

    /// Appends a record, storing its frame bytes under their hash.
    pub fn push(&mut self, view: CapturedView, target: GazeTarget) -> &ViewRecord {
        let hash = frame_hash(&view.bytes);
        self.blobs.entry(hash.clone()).or_insert(view.bytes);
        self.records.push(ViewRecord {
            frame_id: view.frame_id,
            frame_hash: hash,
            pose: view.pose,
            camera: view.camera,
            target,
            captured_at: view.t_ms,
        });
        self.records.last().expect("just pushed")
    }

    pub fn clear(&mut self) {
        self.records.clear();
        self.blobs.clear();
        self.stale = false;
    }

    fn from_parts(records: Vec<ViewRecord>, blobs: BTreeMap<String, Vec<u8>>, replace_on_sweep: bool, stale: bool) -> Self {
        Self {
            records,
            blobs,
            replace_on_sweep,
            stale,
        }
    }
}

/// A captured frame with the pose and intrinsics at capture time.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturedView {
    pub frame_id: String,
    pub bytes: Vec<u8>,
    pub pose: RigidTransform,
    pub camera: CameraModel,
    pub t_ms: u64,
}

/// Head plus camera, as used by a sweep.
pub trait ViewRig {
    /// Turns toward `target` and returns once the motion has settled.
    fn look_at(&mut self, target: &GazeTarget) -> Result<(), String>;

    fn capture(&mut self) -> CapturedView;
}

/// Visits each target in order and stores one view per target. On a motion
/// failure the views captured so far are kept.
pub fn look_around(store: &mut ViewStore, targets: &[GazeTarget], rig: &mut dyn ViewRig) -> Result<usize, ViewError> {
    if targets.is_empty() {
        return Err(ViewError::EmptyTargetList);
    }
    if store.replace_on_sweep {
        store.clear();
    }
    store.stale = false;
    for (i, target) in targets.iter().enumerate() {
        rig.look_at(target).map_err(|_| ViewError::MotionTimeout(i))?;
        store.push(rig.capture(), *target);
    }
    Ok(targets.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreFlag {
    /// The scorer returned a value outside [0, 1].
    Clamped,
    /// The scorer failed; the view scores 0.
    ScorerFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredView {
    pub index: usize,
    pub score: f64,
    pub flag: Option<ScoreFlag>,
}

fn sanitize(index: usize, raw: Result<f64, ScorerError>) -> ScoredView {
    let (score, flag) = match raw {
        Ok(s) if s.is_nan() => (0.0, Some(ScoreFlag::ScorerFailure)),
        Ok(s) if (0.0..=1.0).contains(&s) => (s, None),
        Ok(s) => (s.clamp(0.0, 1.0), Some(ScoreFlag::Clamped)),
        Err(_) => (0.0, Some(ScoreFlag::ScorerFailure)),
    };
    ScoredView { index, score, flag }
}

/// Scores every record against `query` on up to eight threads. The result
/// is in store order whatever order the evaluations finish in.
pub fn score_views(store: &ViewStore, query: &str, scorer: &dyn RelevanceScorer) -> Result<Vec<ScoredView>, ViewError> {
    let n = store.records.len();
    if n == 0 {
        return Err(ViewError::EmptyStore);
    }
    let workers = n.min(MAX_SCORING_WORKERS);
    let records = &store.records;
    let mut out: Vec<Option<ScoredView>> = vec![None; n];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..n)
                        .step_by(workers)
                        .map(|i| sanitize(i, scorer.score(&records[i].frame_id, query)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for sv in h.join().expect("scoring worker panicked") {
                out[sv.index] = Some(sv);
            }
        }
    });
    Ok(out.into_iter().map(|s| s.expect("every index scored")).collect())
}

/// Index of the highest score; ties go to the lowest index.
pub fn select_best(scores: &[ScoredView]) -> Option<usize> {
    let mut best: Option<&ScoredView> = None;
    for s in scores {
        if best.is_none_or(|b| s.score > b.score) {
            best = Some(s);
        }
    }
    best.map(|b| b.index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookForOutcome {
    pub index: usize,
    pub record: ViewRecord,
    /// Gaze that reproduces the chosen view.
    pub gaze: GazeTarget,
    pub scores: Vec<ScoredView>,
    pub message: SessionEvent,
}

/// Picks the best stored view for `query` and sends it to the backend.
pub fn look_for(
    query: &str,
    store: &ViewStore,
    scorer: &dyn RelevanceScorer,
    session: &mut Session,
    t_ms: u64,
) -> Result<LookForOutcome, ViewError> {
    let scores = score_views(store, query, scorer)?;
    let index = select_best(&scores).ok_or(ViewError::EmptyStore)?;
    let record = store.records[index].clone();
    session.pin_frame(&record.frame_id);
    let message = session.inject_vision_message(t_ms, &record.frame_id, query)?;
    Ok(LookForOutcome {
        index,
        gaze: record.target,
        record,
        scores,
        message,
    })
}

/// Sends the latest camera frame and `query` to the backend.
pub fn use_vision(query: &str, session: &mut Session, t_ms: u64) -> Result<SessionEvent, ViewError> {
    let frame_id = session.latest_frame().ok_or(ViewError::NoFrameAvailable)?.to_string();
    Ok(session.inject_vision_message(t_ms, &frame_id, query)?)
}
