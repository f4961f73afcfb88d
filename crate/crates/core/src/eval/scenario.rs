//! Scripted scenarios: a scene, the user's utterances, and the mock model's
//! responses, replayed through the runtime.

use serde::{Deserialize, Serialize};

use super::{DecisionTrace, EvalError};
use crate::geometry::Point3;
use crate::runtime::{Runtime, RuntimeConfig, UserTurn};
use crate::session::{BackendAdapter, EventLog, MockScripted, ScriptedResponse};
use crate::simworld::{Scene, PERSON_LABEL};
use crate::tools::{SystemVariant, ToolName};
use crate::view_memory::ViewStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEditSpec {
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioTurn {
    pub text: String,
    #[serde(default)]
    pub speech_ms: Option<u64>,
    #[serde(default)]
    pub interrupts_after_ms: Option<u64>,
    /// Applied after the previous exchange completes, before this utterance.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scene_edits: Vec<SceneEditSpec>,
}

impl ScenarioTurn {
    pub fn user_turn(&self) -> UserTurn {
        UserTurn {
            text: self.text.clone(),
            speech_ms: self.speech_ms,
            interrupts_after_ms: self.interrupts_after_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Name of the scene this script was written against.
    pub scene: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub description: String,
    pub turns: Vec<ScenarioTurn>,
    /// Mock model responses keyed by turn index.
    #[serde(default)]
    pub responses: Vec<ScriptedResponse>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::InvalidScenario(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvalError::InvalidScenario(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Runtime configuration for a variant, seeded from the script.
    pub fn runtime_config(&self, variant: SystemVariant) -> RuntimeConfig {
        RuntimeConfig {
            variant,
            seed: self.seed,
            ..Default::default()
        }
    }

    /// Checks that everything the script refers to exists in `scene`.
    pub fn check_scene(&self, scene: &Scene) -> Result<(), EvalError> {
        let mismatch = |m: String| Err(EvalError::ScriptSceneMismatch(m));
        if scene.name != self.scene {
            return mismatch(format!("script expects scene '{}', got '{}'", self.scene, scene.name));
        }
        let known = |label: &str| label == PERSON_LABEL || scene.object(label).is_some();
        for (i, turn) in self.turns.iter().enumerate() {
            if let Some(edit) = turn.scene_edits.iter().find(|e| !known(&e.label)) {
                return mismatch(format!("turn {i} edits unknown label '{}'", edit.label));
            }
            if !turn.scene_edits.is_empty() && turn.interrupts_after_ms.is_some() {
                return Err(EvalError::InvalidScenario(format!(
                    "turn {i} cannot both interrupt and edit the scene"
                )));
            }
        }
        for r in &self.responses {
            if r.turn >= self.turns.len() {
                return Err(EvalError::InvalidScenario(format!(
                    "response for turn {} but the script has {} turns",
                    r.turn,
                    self.turns.len()
                )));
            }
            for call in &r.tool_calls {
                if call.name != ToolName::LookAtObject.as_str() {
                    continue;
                }
                if let Some(label) = call.args.get("label").and_then(|l| l.as_str()) {
                    if scene.object(label).is_none() {
                        return mismatch(format!("turn {} fixates unknown object '{label}'", r.turn));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Artifacts of one scenario run.
#[derive(Debug)]
pub struct ScenarioRun {
    pub log: EventLog,
    pub trace: DecisionTrace,
    pub store: ViewStore,
}

/// Runs `scenario` against its scripted mock model.
pub fn run_scenario(scenario: &Scenario, scene: &Scene, cfg: &RuntimeConfig) -> Result<ScenarioRun, EvalError> {
    let backend = MockScripted::new(scenario.responses.clone(), cfg.seed).map_err(crate::runtime::RuntimeError::from)?;
    run_scenario_with(scenario, scene, Box::new(backend), cfg)
}

/// Runs `scenario` against any backend, such as a recorded fixture.
pub fn run_scenario_with(
    scenario: &Scenario,
    scene: &Scene,
    backend: Box<dyn BackendAdapter>,
    cfg: &RuntimeConfig,
) -> Result<ScenarioRun, EvalError> {
    scenario.check_scene(scene)?;
    let mut rt = Runtime::new(scene.clone(), backend, *cfg)?;
    let backend_name = rt.backend_name().to_string();
    for turn in &scenario.turns {
        if !turn.scene_edits.is_empty() {
            rt.settle_pending()?;
            for e in &turn.scene_edits {
                rt.edit_scene(&e.label, Point3::new(e.x, e.y, e.z))?;
            }
        }
        rt.user_turn(&turn.user_turn())?;
    }
    let (log, turns, store) = rt.finish("scenario_end")?;
    let trace = DecisionTrace {
        scenario: scenario.name.clone(),
        variant: cfg.variant,
        seed: cfg.seed,
        backend: backend_name,
        enabled_tools: ToolName::ALL.into_iter().filter(|t| cfg.variant.enables(*t)).collect(),
        turns,
    };
    Ok(ScenarioRun { log, trace, store })
}
