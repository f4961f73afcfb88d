//! Deterministic simulated environment: a static scene, one person, an ideal
//! gaze actuator and a frustum camera. It produces detections, placeholder
//! frames, noisy spatial-audio estimates and an oracle relevance scorer.

mod render;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::{CameraState, Detection, FollowMode, SpatialAudioEstimate};
use crate::geometry::{
    ray_to_pixel, CameraModel, GazeTarget, GeometryError, NormalizedPixel, Point3, RigidTransform, UnitRay,
};
use crate::view_memory::{RelevanceScorer, ScorerError};

pub use render::render_png;

pub const PERSON_LABEL: &str = "person";
pub const PERSON_CONFIDENCE: f64 = 0.95;
pub const OBJECT_CONFIDENCE: f64 = 0.9;
pub const DEFAULT_AUDIO_SIGMA_M: f64 = 0.1;
pub const DEFAULT_SETTLE_MS: u64 = 300;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("target coincides with the camera origin")]
    DegenerateTarget,
    #[error("target outside the actuator's yaw range")]
    MotionTimeout,
    #[error("no object labelled '{0}'")]
    UnknownLabel(String),
    #[error("unknown frame '{0}'")]
    UnknownFrame(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SceneObject {
    pub fn position(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonSpec {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Nose keypoint relative to the person position.
    #[serde(default = "PersonSpec::default_nose")]
    pub nose_offset: Point3,
}

impl PersonSpec {
    fn default_nose() -> Point3 {
        Point3::ORIGIN
    }

    pub fn position(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }

    pub fn nose(&self) -> Point3 {
        Point3::new(self.x + self.nose_offset.x, self.y + self.nose_offset.y, self.z + self.nose_offset.z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    pub person: PersonSpec,
    #[serde(default)]
    pub seed: u64,
}

impl Scene {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let scene: Scene = serde_json::from_str(text).map_err(|e| SimError::InvalidScene(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let mut labels = BTreeSet::new();
        for o in &self.objects {
            if o.label.trim().is_empty() {
                return Err(SimError::InvalidScene("empty object label".into()));
            }
            if o.label == PERSON_LABEL {
                return Err(SimError::InvalidScene(format!("'{PERSON_LABEL}' is reserved")));
            }
            if !labels.insert(o.label.as_str()) {
                return Err(SimError::InvalidScene(format!("duplicate label '{}'", o.label)));
            }
            if !o.position().is_finite() {
                return Err(SimError::InvalidScene(format!("non-finite position for '{}'", o.label)));
            }
        }
        if !self.person.position().is_finite() || !self.person.nose().is_finite() {
            return Err(SimError::InvalidScene("non-finite person position".into()));
        }
        Ok(())
    }

    pub fn object(&self, label: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.label == label)
    }

    /// Entities as (label, robot-frame point), person first.
    pub fn entities(&self) -> impl Iterator<Item = (&str, Point3)> {
        std::iter::once((PERSON_LABEL, self.person.nose()))
            .chain(self.objects.iter().map(|o| (o.label.as_str(), o.position())))
    }
}

pub fn default_camera() -> CameraModel {
    CameraModel::from_degrees(70.0, 55.0, 640, 480).expect("default camera is valid")
}

/// Ideal pan/tilt head: motions complete exactly after `settle_ms`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimActuator {
    pose: RigidTransform,
    pub settle_ms: u64,
    /// Largest reachable |yaw| in radians; `None` means unlimited.
    pub yaw_limit: Option<f64>,
}

impl Default for SimActuator {
    fn default() -> Self {
        Self {
            pose: RigidTransform::identity(),
            settle_ms: DEFAULT_SETTLE_MS,
            yaw_limit: None,
        }
    }
}

impl SimActuator {
    pub fn new(pose: RigidTransform) -> Self {
        Self {
            pose,
            ..Self::default()
        }
    }

    pub fn pose(&self) -> &RigidTransform {
        &self.pose
    }

    /// Turns the head so the optical axis passes through `target`. The
    /// camera translation is unchanged.
    pub fn actuate(&mut self, target: &GazeTarget) -> Result<RigidTransform, SimError> {
        let t = self.pose.translation();
        let d = target.point().to_vector() - t.to_vector();
        if !(d.norm() > 1e-12) {
            return Err(SimError::DegenerateTarget);
        }
        let yaw = d.x.atan2(d.z);
        let elevation = (-d.y).atan2(d.x.hypot(d.z));
        if let Some(limit) = self.yaw_limit {
            if yaw.abs() > limit {
                return Err(SimError::MotionTimeout);
            }
        }
        self.pose = RigidTransform::from_yaw_elevation(yaw, elevation, t);
        Ok(self.pose)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleEntity {
    pub label: String,
    pub pixel: NormalizedPixel,
    /// Distance from the camera origin in meters.
    pub range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimFrame {
    pub frame_id: String,
    pub visible: Vec<VisibleEntity>,
    pub pose: RigidTransform,
    pub camera: CameraModel,
    pub t_ms: u64,
}

impl SimFrame {
    pub fn camera_state(&self) -> CameraState {
        CameraState {
            pose: self.pose,
            camera: self.camera,
            frame_id: self.frame_id.clone(),
            t_ms: self.t_ms,
        }
    }

    pub fn find(&self, label: &str) -> Option<&VisibleEntity> {
        self.visible.iter().find(|v| v.label == label)
    }
}

/// Entities inside the camera frustum, in scene order (person first).
pub fn render_detections(scene: &Scene, pose: &RigidTransform, camera: &CameraModel) -> Vec<VisibleEntity> {
    scene
        .entities()
        .filter_map(|(label, p)| {
            let c = pose.inverse_transform_point(p).to_vector();
            if !(c.z > 0.0) {
                return None;
            }
            let range = c.norm();
            let ray = UnitRay::normalize(c).ok()?;
            let pixel = ray_to_pixel(camera, &ray).ok()?;
            Some(VisibleEntity {
                label: label.to_string(),
                pixel,
                range,
            })
        })
        .collect()
}

/// Lowercase alphanumeric words.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// A label matches a query when every word of the label occurs in it.
pub fn label_matches(label: &str, query: &str) -> bool {
    let label = tokens(label);
    !label.is_empty() && label.is_subset(&tokens(query))
}

/// The whole simulation: scene, head, camera and captured frames.
#[derive(Debug, Clone)]
pub struct SimWorld {
    scene: Scene,
    camera: CameraModel,
    actuator: SimActuator,
    rng: ChaCha8Rng,
    audio_sigma: f64,
    frames: BTreeMap<String, SimFrame>,
    frame_order: Vec<String>,
}

impl SimWorld {
    pub fn new(scene: Scene, camera: CameraModel, seed: u64) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(scene.seed ^ seed.rotate_left(32));
        Self {
            scene,
            camera,
            actuator: SimActuator::default(),
            rng,
            audio_sigma: DEFAULT_AUDIO_SIGMA_M,
            frames: BTreeMap::new(),
            frame_order: Vec::new(),
        }
    }

    pub fn with_audio_sigma(mut self, sigma: f64) -> Self {
        self.audio_sigma = sigma;
        self
    }

    pub fn with_actuator(mut self, actuator: SimActuator) -> Self {
        self.actuator = actuator;
        self
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    pub fn pose(&self) -> &RigidTransform {
        self.actuator.pose()
    }

    pub fn actuator(&self) -> &SimActuator {
        &self.actuator
    }

    pub fn move_object(&mut self, label: &str, to: Point3) -> Result<(), SimError> {
        if !to.is_finite() {
            return Err(SimError::InvalidScene(format!("non-finite position for '{label}'")));
        }
        let obj = self
            .scene
            .objects
            .iter_mut()
            .find(|o| o.label == label)
            .ok_or_else(|| SimError::UnknownLabel(label.to_string()))?;
        obj.x = to.x;
        obj.y = to.y;
        obj.z = to.z;
        Ok(())
    }

    pub fn move_person(&mut self, to: Point3) -> Result<(), SimError> {
        if !to.is_finite() {
            return Err(SimError::InvalidScene("non-finite person position".into()));
        }
        self.scene.person.x = to.x;
        self.scene.person.y = to.y;
        self.scene.person.z = to.z;
        Ok(())
    }

    pub fn actuate(&mut self, target: &GazeTarget) -> Result<RigidTransform, SimError> {
        self.actuator.actuate(target)
    }

    /// Renders and retains a frame of the current view.
    pub fn capture(&mut self, t_ms: u64) -> SimFrame {
        let frame_id = format!("f{}", self.frame_order.len());
        let frame = SimFrame {
            frame_id: frame_id.clone(),
            visible: render_detections(&self.scene, self.actuator.pose(), &self.camera),
            pose: *self.actuator.pose(),
            camera: self.camera,
            t_ms,
        };
        self.frames.insert(frame_id.clone(), frame.clone());
        self.frame_order.push(frame_id);
        frame
    }

    pub fn frame(&self, frame_id: &str) -> Option<&SimFrame> {
        self.frames.get(frame_id)
    }

    pub fn latest_frame(&self) -> Option<&SimFrame> {
        self.frame_order.last().and_then(|id| self.frames.get(id))
    }

    pub fn frame_png(&self, frame_id: &str) -> Result<Vec<u8>, SimError> {
        let frame = self
            .frames
            .get(frame_id)
            .ok_or_else(|| SimError::UnknownFrame(frame_id.to_string()))?;
        Ok(render_png(frame))
    }

    /// The tracker output for `mode` in `frame`, if the target is visible.
    pub fn detect(&self, frame: &SimFrame, mode: &FollowMode) -> Option<Detection> {
        let (entity, confidence) = match mode {
            FollowMode::Person => (frame.find(PERSON_LABEL)?, PERSON_CONFIDENCE),
            FollowMode::Object { label } => (
                frame
                    .visible
                    .iter()
                    .find(|v| v.label != PERSON_LABEL && (v.label == *label || label_matches(&v.label, label)))?,
                OBJECT_CONFIDENCE,
            ),
        };
        Some(Detection {
            target_pixel: entity.pixel,
            confidence,
            label: entity.label.clone(),
        })
    }

    /// Person position plus zero-mean Gaussian noise on each axis.
    pub fn spatial_audio(&mut self) -> SpatialAudioEstimate {
        let p = self.scene.person.nose();
        let (dx, dy, dz) = if self.audio_sigma > 0.0 {
            let n = Normal::new(0.0, self.audio_sigma).expect("sigma is positive");
            (n.sample(&mut self.rng), n.sample(&mut self.rng), n.sample(&mut self.rng))
        } else {
            (0.0, 0.0, 0.0)
        };
        SpatialAudioEstimate {
            point: Point3::new(p.x + dx, p.y + dy, p.z + dz),
            confidence: 0.6,
        }
    }

    pub fn oracle_scorer(&self, graded: bool) -> OracleScorer<'_> {
        OracleScorer {
            frames: &self.frames,
            graded,
        }
    }
}

/// Label-match relevance oracle over captured frames.
#[derive(Debug, Clone, Copy)]
pub struct OracleScorer<'a> {
    frames: &'a BTreeMap<String, SimFrame>,
    graded: bool,
}

impl OracleScorer<'_> {
    fn proximity(frame: &SimFrame, entity: &VisibleEntity) -> f64 {
        let ray = crate::geometry::pixel_to_ray(&frame.camera, entity.pixel);
        let theta = UnitRay::OPTICAL_AXIS.angle_to(&ray);
        1.0 - 0.5 * (theta / frame.camera.half_diagonal_angle()).min(1.0)
    }
}

impl RelevanceScorer for OracleScorer<'_> {
    fn score(&self, frame_id: &str, query: &str) -> Result<f64, ScorerError> {
        let frame = self
            .frames
            .get(frame_id)
            .ok_or_else(|| ScorerError(format!("unknown frame '{frame_id}'")))?;
        let best = frame
            .visible
            .iter()
            .filter(|v| label_matches(&v.label, query))
            .map(|v| if self.graded { Self::proximity(frame, v) } else { 1.0 })
            .fold(0.0, f64::max);
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{pixel_to_ray, rotate_ray};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn scene() -> Scene {
        Scene::from_json(
            r#"{"name": "t", "objects": [{"label": "lamp", "x": 0, "y": 0, "z": 2},
                {"label": "desk lamp", "x": 0, "y": 0, "z": -2}],
               "person": {"x": 1.5, "y": -0.2, "z": 1.5}, "seed": 3}"#,
        )
        .unwrap()
    }

    #[test]
    fn scene_validation() {
        assert!(Scene::from_json(r#"{"objects": [{"label": "a", "x": 0, "y": 0, "z": 1}, {"label": "a", "x": 1, "y": 0, "z": 1}], "person": {"x": 0, "y": 0, "z": 1}}"#).is_err());
        assert!(Scene::from_json(r#"{"objects": [], "person": {"x": 0, "y": 0, "z": 1}, "extra": 1}"#).is_err());
        assert!(Scene::from_json(r#"{"person": {"x": 0, "y": 0, "z": 1}}"#).is_ok());
    }

    #[test]
    fn render_examples() {
        let s = scene();
        let cam = CameraModel::from_degrees(90.0, 60.0, 640, 480).unwrap();
        let vis = render_detections(&s, &RigidTransform::identity(), &cam);
        // person at 45 deg is exactly on the frustum edge, lamp on axis, desk lamp behind
        let lamp = vis.iter().find(|v| v.label == "lamp").unwrap();
        assert_eq!(lamp.pixel, NormalizedPixel::CENTER);
        assert!(vis.iter().all(|v| v.label != "desk lamp"));

        let s = Scene::from_json(&format!(
            r#"{{"objects": [{{"label": "cup", "x": {}, "y": 0, "z": 1}}], "person": {{"x": 0, "y": 0, "z": -1}}}}"#,
            (30f64).to_radians().tan()
        ))
        .unwrap();
        let vis = render_detections(&s, &RigidTransform::identity(), &CameraModel::from_degrees(90.0, 90.0, 640, 480).unwrap());
        assert_eq!(vis.len(), 1);
        assert_abs_diff_eq!(vis[0].pixel.u, 0.7886751345948129, epsilon = 1e-12);
    }

    #[test]
    fn actuate_examples() {
        let mut a = SimActuator::default();
        let pose = a.actuate(&GazeTarget::new(Point3::new(0.0, 0.0, 1.5)).unwrap()).unwrap();
        assert_eq!(pose, RigidTransform::identity());
        let pose = a.actuate(&GazeTarget::new(Point3::new(1.0, 0.0, 0.0)).unwrap()).unwrap();
        let axis = pose.optical_axis();
        assert_abs_diff_eq!(axis.x(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(axis.as_vector().angle(&RigidTransform::yaw(FRAC_PI_2).optical_axis().as_vector()), 0.0, epsilon = 1e-9);

        let mut offset = SimActuator::new(RigidTransform::from_translation(Point3::new(0.0, 0.0, 1.0)).unwrap());
        assert!(matches!(
            offset.actuate(&GazeTarget::new(Point3::new(0.0, 0.0, 1.0)).unwrap()),
            Err(SimError::DegenerateTarget)
        ));
        let mut limited = SimActuator {
            yaw_limit: Some(1.0),
            ..SimActuator::default()
        };
        assert!(matches!(
            limited.actuate(&GazeTarget::new(Point3::new(-1.0, 0.0, -1.0)).unwrap()),
            Err(SimError::MotionTimeout)
        ));
    }

    #[test]
    fn oracle_scores() {
        let mut w = SimWorld::new(scene(), CameraModel::from_degrees(90.0, 60.0, 640, 480).unwrap(), 0);
        let f = w.capture(0);
        let scorer = w.oracle_scorer(false);
        assert_eq!(scorer.score(&f.frame_id, "where should the lamp go").unwrap(), 1.0);
        assert_eq!(scorer.score(&f.frame_id, "find my keys").unwrap(), 0.0);
        assert!(scorer.score("nope", "lamp").is_err());
        assert!(!label_matches("desk lamp", "the lamp"));
        assert!(label_matches("desk lamp", "the Desk-lamp"));
    }

    #[test]
    fn graded_oracle_prefers_center() {
        let s = Scene::from_json(r#"{"objects": [{"label": "lamp", "x": 0, "y": 0, "z": 2}], "person": {"x": 0, "y": 0, "z": -1}}"#).unwrap();
        let mut w = SimWorld::new(s, CameraModel::from_degrees(90.0, 60.0, 640, 480).unwrap(), 0);
        let center = w.capture(0).frame_id;
        w.actuate(&GazeTarget::from_yaw_elevation(40f64.to_radians(), 0.0, 1.5).unwrap()).unwrap();
        let edge = w.capture(1).frame_id;
        let scorer = w.oracle_scorer(true);
        let (c, e) = (scorer.score(&center, "lamp").unwrap(), scorer.score(&edge, "lamp").unwrap());
        assert_eq!(c, 1.0);
        assert!(e > 0.0 && e < c);
    }

    #[test]
    fn audio_noise_is_seeded() {
        let mut a = SimWorld::new(scene(), default_camera(), 1);
        let mut b = SimWorld::new(scene(), default_camera(), 1);
        assert_eq!(a.spatial_audio(), b.spatial_audio());
        let exact = SimWorld::new(scene(), default_camera(), 1).with_audio_sigma(0.0).spatial_audio();
        assert_eq!(exact.point, scene().person.nose());
    }

    #[test]
    fn scene_edits() {
        let mut w = SimWorld::new(scene(), default_camera(), 0);
        w.move_object("lamp", Point3::new(0.0, 0.0, -3.0)).unwrap();
        assert!(w.capture(0).find("lamp").is_none());
        assert!(matches!(w.move_object("keys", Point3::ORIGIN), Err(SimError::UnknownLabel(_))));
    }

    fn arb_point() -> impl Strategy<Value = Point3> {
        (-3.0f64..3.0, -1.0f64..1.0, -3.0f64..3.0).prop_map(|(x, y, z)| Point3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn render_is_consistent_with_geometry(
            p in arb_point(), yaw in -3.1f64..3.1, elev in -0.6f64..0.6,
            hfov in 40f64..120.0, vfov in 40f64..120.0,
        ) {
            let scene = Scene {
                name: String::new(),
                objects: vec![SceneObject { label: "thing".into(), x: p.x, y: p.y, z: p.z }],
                person: PersonSpec { x: 0.0, y: 0.0, z: -50.0, nose_offset: Point3::ORIGIN },
                seed: 0,
            };
            let pose = RigidTransform::from_yaw_elevation(yaw, elev, Point3::new(0.0, 0.1, 0.0));
            let cam = CameraModel::from_degrees(hfov, vfov, 640, 480).unwrap();
            for v in render_detections(&scene, &pose, &cam).into_iter().filter(|v| v.label == "thing") {
                let r = rotate_ray(&pose, &pixel_to_ray(&cam, v.pixel));
                let back = pose.translation().to_vector() + r.as_vector() * v.range;
                prop_assert!((back - p.to_vector()).norm() < 1e-6);
            }
        }

        #[test]
        fn actuate_then_render_centers_target(p in arb_point()) {
            prop_assume!(p.norm() > 0.2);
            let scene = Scene {
                name: String::new(),
                objects: vec![SceneObject { label: "thing".into(), x: p.x, y: p.y, z: p.z }],
                person: PersonSpec { x: 0.0, y: 0.0, z: -50.0, nose_offset: Point3::ORIGIN },
                seed: 0,
            };
            let mut w = SimWorld::new(scene, default_camera(), 0);
            w.actuate(&GazeTarget::new(p).unwrap()).unwrap();
            let f = w.capture(0);
            let v = f.find("thing").unwrap();
            prop_assert!((v.pixel.u - 0.5).abs() < 1e-9 && (v.pixel.v - 0.5).abs() < 1e-9);
        }
    }
}
