//! Closed-loop gaze servoing for person and object following.
//!
//! A servo step turns one detection into a look-at point: back-project the
//! detection pixel, rotate the ray into the robot frame and place the target
//! at a nominal distance along it. Person following falls back to a spatial
//! audio estimate when no confident detection is available.

use std::sync::mpsc::Sender;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    angular_error, look_at_point, pixel_to_ray, rotate_ray, CameraModel, GazeTarget, NormalizedPixel, Point3,
    RigidTransform, UnitRay, DEFAULT_NOMINAL_DISTANCE,
};
use crate::session::GazeSource;

pub const PERSON_LOOP_HZ: f64 = 20.0;
pub const OBJECT_LOOP_HZ: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Nose keypoint for a person, mask centroid or box center for an object.
    pub target_pixel: NormalizedPixel,
    pub confidence: f64,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialAudioEstimate {
    pub point: Point3,
    pub confidence: f64,
}

/// Camera pose and intrinsics at the time a frame was captured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraState {
    pub pose: RigidTransform,
    pub camera: CameraModel,
    pub frame_id: String,
    pub t_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoConfig {
    pub nominal_distance: f64,
    /// Per-axis angular error (radians) below which gaze is held.
    pub deadband: f64,
    pub min_confidence: f64,
    pub max_rate_hz: f64,
    /// Fraction of the computed correction applied per step.
    pub gain: f64,
    /// Camera states older than this are not acted upon.
    pub staleness_ms: u64,
}

impl ServoConfig {
    pub fn person() -> Self {
        Self {
            nominal_distance: DEFAULT_NOMINAL_DISTANCE,
            deadband: 1f64.to_radians(),
            min_confidence: 0.5,
            max_rate_hz: PERSON_LOOP_HZ,
            gain: 1.0,
            staleness_ms: 500,
        }
    }

    pub fn object() -> Self {
        Self {
            max_rate_hz: OBJECT_LOOP_HZ,
            ..Self::person()
        }
    }

    pub fn period_ms(&self) -> u64 {
        (1000.0 / self.max_rate_hz).ceil() as u64
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.nominal_distance > 0.0 && self.nominal_distance.is_finite()) {
            return Err(format!("nominal distance must be positive, got {}", self.nominal_distance));
        }
        if !(self.deadband >= 0.0) {
            return Err(format!("deadband must be non-negative, got {}", self.deadband));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(format!("min confidence must lie in [0, 1], got {}", self.min_confidence));
        }
        if !(self.max_rate_hz > 0.0 && self.max_rate_hz.is_finite()) {
            return Err(format!("loop rate must be positive, got {}", self.max_rate_hz));
        }
        if !(self.gain > 0.0 && self.gain <= 1.0) {
            return Err(format!("gain must lie in (0, 1], got {}", self.gain));
        }
        Ok(())
    }
}

impl Default for ServoConfig {
    fn default() -> Self {
        Self::person()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeCommand {
    pub target: GazeTarget,
    pub source: GazeSource,
}

/// Rotates `from` toward `to` by `gain` of the angle between them.
fn partial_rotation(from: &UnitRay, to: &UnitRay, gain: f64) -> UnitRay {
    if gain >= 1.0 {
        return *to;
    }
    let angle = from.angle_to(to);
    if angle < 1e-12 {
        return *to;
    }
    let a: &Vector3<f64> = from.as_vector();
    let b: &Vector3<f64> = to.as_vector();
    let s = angle.sin();
    let v = if s < 1e-9 {
        // antiparallel: any perpendicular axis works
        let axis = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let perp = (axis - a * a.dot(&axis)).normalize();
        a * (gain * angle).cos() + perp * (gain * angle).sin()
    } else {
        a * (((1.0 - gain) * angle).sin() / s) + b * ((gain * angle).sin() / s)
    };
    UnitRay::normalize(v).unwrap_or(*to)
}

fn visual_step(cam: &CameraState, det: &Detection, cfg: &ServoConfig, source: GazeSource) -> Option<GazeCommand> {
    let ray = pixel_to_ray(&cam.camera, det.target_pixel);
    if angular_error(&ray).max_abs() <= cfg.deadband {
        return None;
    }
    let robot_ray = partial_rotation(&cam.pose.optical_axis(), &rotate_ray(&cam.pose, &ray), cfg.gain);
    let target = look_at_point(&cam.pose, &robot_ray, cfg.nominal_distance).ok()?;
    Some(GazeCommand { target, source })
}

fn confident<'a>(det: Option<&'a Detection>, cfg: &ServoConfig) -> Option<&'a Detection> {
    det.filter(|d| d.confidence >= cfg.min_confidence)
}

/// One iteration of person following. `None` means hold the current gaze.
pub fn person_servo_step(
    cam: &CameraState,
    det: Option<&Detection>,
    audio: Option<&SpatialAudioEstimate>,
    cfg: &ServoConfig,
) -> Option<GazeCommand> {
    if let Some(det) = confident(det, cfg) {
        return visual_step(cam, det, cfg, GazeSource::Person);
    }
    let audio = audio?;
    let target = GazeTarget::new(audio.point).ok()?;
    let offset = target.point().to_vector() - cam.pose.translation().to_vector();
    let dir = UnitRay::normalize(offset).ok()?;
    if cam.pose.optical_axis().angle_to(&dir) <= cfg.deadband {
        return None;
    }
    Some(GazeCommand {
        target,
        source: GazeSource::Audio,
    })
}

/// One iteration of object following. There is no fallback source.
pub fn object_servo_step(cam: &CameraState, det: Option<&Detection>, cfg: &ServoConfig) -> Option<GazeCommand> {
    visual_step(cam, confident(det, cfg)?, cfg, GazeSource::Object)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FollowMode {
    Person,
    Object { label: String },
}

/// Freshest inputs available to a loop iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionSnapshot {
    pub camera: CameraState,
    pub detection: Option<Detection>,
    pub audio: Option<SpatialAudioEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoopEvent {
    Gaze(GazeCommand),
    Hold,
    /// The camera state was older than the staleness bound; gaze is held.
    SourceStale { age_ms: u64 },
}

/// One iteration of a follow loop on a snapshot taken at `now_ms`.
pub fn loop_iteration(mode: &FollowMode, snapshot: &PerceptionSnapshot, now_ms: u64, cfg: &ServoConfig) -> LoopEvent {
    let age_ms = now_ms.saturating_sub(snapshot.camera.t_ms);
    if age_ms > cfg.staleness_ms {
        return LoopEvent::SourceStale { age_ms };
    }
    let cmd = match mode {
        FollowMode::Person => person_servo_step(
            &snapshot.camera,
            snapshot.detection.as_ref(),
            snapshot.audio.as_ref(),
            cfg,
        ),
        FollowMode::Object { .. } => object_servo_step(&snapshot.camera, snapshot.detection.as_ref(), cfg),
    };
    cmd.map_or(LoopEvent::Hold, LoopEvent::Gaze)
}

/// Supplies snapshots to a threaded follow loop.
pub trait PerceptionSource: Send + Sync {
    fn snapshot(&self, mode: &FollowMode) -> Option<PerceptionSnapshot>;

    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default)]
struct CancelState {
    cancelled: Mutex<bool>,
    wake: Condvar,
}

/// Handle to a running follow loop. Dropping it cancels the loop.
#[derive(Debug)]
pub struct LoopHandle {
    cancel: Arc<CancelState>,
    thread: Option<JoinHandle<u64>>,
}

impl LoopHandle {
    /// Stops the loop and waits for it; returns the number of iterations run.
    pub fn cancel(mut self) -> u64 {
        self.stop()
    }

    fn stop(&mut self) -> u64 {
        *self.cancel.cancelled.lock().expect("cancel flag poisoned") = true;
        self.cancel.wake.notify_all();
        self.thread.take().map_or(0, |t| t.join().unwrap_or(0))
    }
}

impl Drop for LoopHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Runs a follow loop on its own thread at `cfg.max_rate_hz`, publishing
/// every iteration outcome on `out`. Cancellation interrupts the wait between
/// iterations.
pub fn run_attention_loop(
    mode: FollowMode,
    source: Arc<dyn PerceptionSource>,
    cfg: ServoConfig,
    out: Sender<LoopEvent>,
) -> LoopHandle {
    let cancel = Arc::new(CancelState::default());
    let flag = Arc::clone(&cancel);
    let period = Duration::from_secs_f64(1.0 / cfg.max_rate_hz);
    let thread = std::thread::spawn(move || {
        let mut iterations = 0u64;
        let mut cancelled = flag.cancelled.lock().expect("cancel flag poisoned");
        while !*cancelled {
            drop(cancelled);
            let event = match source.snapshot(&mode) {
                Some(snap) => loop_iteration(&mode, &snap, source.now_ms(), &cfg),
                None => LoopEvent::Hold,
            };
            iterations += 1;
            if out.send(event).is_err() {
                return iterations;
            }
            cancelled = flag.cancelled.lock().expect("cancel flag poisoned");
            if *cancelled {
                break;
            }
            cancelled = flag
                .wake
                .wait_timeout(cancelled, period)
                .expect("cancel flag poisoned")
                .0;
        }
        iterations
    });
    LoopHandle {
        cancel,
        thread: Some(thread),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;
    use std::sync::mpsc;
    use std::time::Instant;

    fn cam(hfov_deg: f64, vfov_deg: f64) -> CameraState {
        CameraState {
            pose: RigidTransform::identity(),
            camera: CameraModel::from_degrees(hfov_deg, vfov_deg, 640, 480).unwrap(),
            frame_id: "f0".into(),
            t_ms: 0,
        }
    }

    fn det(u: f64, v: f64) -> Detection {
        Detection {
            target_pixel: NormalizedPixel::new(u, v).unwrap(),
            confidence: 0.9,
            label: "person".into(),
        }
    }

    #[test]
    fn person_step_examples() {
        let cfg = ServoConfig::person();
        assert_eq!(person_servo_step(&cam(90.0, 90.0), Some(&det(0.5, 0.5)), None, &cfg), None);

        let cmd = person_servo_step(&cam(90.0, 90.0), Some(&det(0.75, 0.5)), None, &cfg).unwrap();
        assert_eq!(cmd.source, GazeSource::Person);
        assert_abs_diff_eq!(cmd.target.x, 0.6708203932499368, epsilon = 1e-12);
        assert_abs_diff_eq!(cmd.target.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cmd.target.z, 1.3416407864998738, epsilon = 1e-12);

        let audio = SpatialAudioEstimate {
            point: Point3::new(1.0, 0.0, 0.0),
            confidence: 0.5,
        };
        let cmd = person_servo_step(&cam(90.0, 90.0), None, Some(&audio), &cfg).unwrap();
        assert_eq!(cmd.source, GazeSource::Audio);
        assert_eq!(cmd.target.point(), Point3::new(1.0, 0.0, 0.0));
        assert_eq!(person_servo_step(&cam(90.0, 90.0), None, None, &cfg), None);
    }

    #[test]
    fn vision_beats_audio_and_weak_detections_fall_back() {
        let cfg = ServoConfig::person();
        let audio = SpatialAudioEstimate {
            point: Point3::new(-1.0, 0.0, 0.2),
            confidence: 1.0,
        };
        let cmd = person_servo_step(&cam(90.0, 90.0), Some(&det(0.75, 0.5)), Some(&audio), &cfg).unwrap();
        assert_eq!(cmd.source, GazeSource::Person);
        let mut weak = det(0.75, 0.5);
        weak.confidence = 0.2;
        let cmd = person_servo_step(&cam(90.0, 90.0), Some(&weak), Some(&audio), &cfg).unwrap();
        assert_eq!(cmd.source, GazeSource::Audio);
    }

    #[test]
    fn object_step_examples() {
        let cfg = ServoConfig::object();
        assert_eq!(object_servo_step(&cam(90.0, 90.0), Some(&det(0.5, 0.5)), &cfg), None);
        let cmd = object_servo_step(&cam(90.0, 90.0), Some(&det(0.5, 0.25)), &cfg).unwrap();
        assert_abs_diff_eq!(cmd.target.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cmd.target.y, -0.6708203932499368, epsilon = 1e-12);
        assert_abs_diff_eq!(cmd.target.z, 1.3416407864998738, epsilon = 1e-12);
        assert_eq!(object_servo_step(&cam(90.0, 90.0), None, &cfg), None);
    }

    #[test]
    fn partial_gain_moves_part_way() {
        let from = UnitRay::OPTICAL_AXIS;
        let to = UnitRay::normalize(Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let half = partial_rotation(&from, &to, 0.5);
        assert_abs_diff_eq!(from.angle_to(&half), FRAC_PI_2 / 2.0, epsilon = 1e-12);
        let back = UnitRay::normalize(Vector3::new(0.0, 0.0, -1.0)).unwrap();
        let q = partial_rotation(&from, &back, 0.25);
        assert_abs_diff_eq!(from.angle_to(&q), std::f64::consts::PI / 4.0, epsilon = 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(ServoConfig::person().validate().is_ok());
        assert_eq!(ServoConfig::person().period_ms(), 50);
        assert_eq!(ServoConfig::object().period_ms(), 167);
        for bad in [
            ServoConfig { nominal_distance: 0.0, ..ServoConfig::person() },
            ServoConfig { deadband: -0.1, ..ServoConfig::person() },
            ServoConfig { max_rate_hz: 0.0, ..ServoConfig::person() },
            ServoConfig { gain: 1.5, ..ServoConfig::person() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn stale_camera_holds_gaze() {
        let snap = PerceptionSnapshot {
            camera: cam(90.0, 90.0),
            detection: Some(det(0.9, 0.5)),
            audio: None,
        };
        let cfg = ServoConfig::person();
        assert!(matches!(loop_iteration(&FollowMode::Person, &snap, 100, &cfg), LoopEvent::Gaze(_)));
        assert_eq!(
            loop_iteration(&FollowMode::Person, &snap, 900, &cfg),
            LoopEvent::SourceStale { age_ms: 900 }
        );
    }

    struct Fixed(PerceptionSnapshot);

    impl PerceptionSource for Fixed {
        fn snapshot(&self, _: &FollowMode) -> Option<PerceptionSnapshot> {
            Some(self.0.clone())
        }

        fn now_ms(&self) -> u64 {
            self.0.camera.t_ms
        }
    }

    #[test]
    fn threaded_loop_centered_person_emits_nothing() {
        let (tx, rx) = mpsc::channel();
        let source = Arc::new(Fixed(PerceptionSnapshot {
            camera: cam(90.0, 60.0),
            detection: Some(det(0.5, 0.5)),
            audio: None,
        }));
        let cfg = ServoConfig {
            max_rate_hz: 1000.0,
            ..ServoConfig::person()
        };
        let handle = run_attention_loop(FollowMode::Person, source, cfg, tx);
        let events: Vec<_> = rx.iter().take(10).collect();
        handle.cancel();
        assert!(events.iter().all(|e| *e == LoopEvent::Hold));
    }

    #[test]
    fn threaded_loop_cancels_within_one_period() {
        let (tx, rx) = mpsc::channel();
        let source = Arc::new(Fixed(PerceptionSnapshot {
            camera: cam(90.0, 60.0),
            detection: Some(det(0.8, 0.5)),
            audio: None,
        }));
        let cfg = ServoConfig::object();
        let handle = run_attention_loop(FollowMode::Object { label: "mug".into() }, source, cfg, tx);
        assert!(matches!(rx.recv().unwrap(), LoopEvent::Gaze(_)));
        let start = Instant::now();
        handle.cancel();
        assert!(start.elapsed() < Duration::from_millis(cfg.period_ms()));
    }

    proptest! {
        #[test]
        fn null_steps_are_stable(u in 0.45f64..0.55, v in 0.45f64..0.55, hfov in 40f64..120.0) {
            let c = cam(hfov, hfov * 0.75);
            let cfg = ServoConfig::person();
            let d = det(u, v);
            let first = person_servo_step(&c, Some(&d), None, &cfg);
            prop_assert_eq!(first, person_servo_step(&c, Some(&d), None, &cfg));
        }
    }
}
