//! Scenes, scenarios, annotations and rate cards compiled into the crate.

use super::{run_scenario, AnnotationFile, EvalError, RateCard, Scenario, ScenarioRun};
use crate::simworld::Scene;
use crate::tools::SystemVariant;

pub const SCENARIO_NAMES: [&str; 6] = [
    "posture_coach",
    "whiteboard",
    "lamp_placement",
    "plant_doctor",
    "outfit_check",
    "pack_find",
];

macro_rules! bundled {
    ($dir:literal, $name:expr) => {
        match $name {
            "posture_coach" => Some(include_str!(concat!("../../data/", $dir, "/posture_coach.json"))),
            "whiteboard" => Some(include_str!(concat!("../../data/", $dir, "/whiteboard.json"))),
            "lamp_placement" => Some(include_str!(concat!("../../data/", $dir, "/lamp_placement.json"))),
            "plant_doctor" => Some(include_str!(concat!("../../data/", $dir, "/plant_doctor.json"))),
            "outfit_check" => Some(include_str!(concat!("../../data/", $dir, "/outfit_check.json"))),
            "pack_find" => Some(include_str!(concat!("../../data/", $dir, "/pack_find.json"))),
            _ => None,
        }
    };
}

pub fn scene_json(name: &str) -> Option<&'static str> {
    bundled!("scenes", name)
}

pub fn scenario_json(name: &str) -> Option<&'static str> {
    bundled!("scenarios", name)
}

pub fn annotations_json(name: &str) -> Option<&'static str> {
    bundled!("annotations", name)
}

pub fn scene(name: &str) -> Option<Scene> {
    scene_json(name).map(|s| Scene::from_json(s).expect("bundled scene is valid"))
}

pub fn scenario(name: &str) -> Option<Scenario> {
    scenario_json(name).map(|s| Scenario::from_json(s).expect("bundled scenario is valid"))
}

pub fn annotations(name: &str) -> Option<AnnotationFile> {
    annotations_json(name).map(|s| serde_json::from_str(s).expect("bundled annotations are valid"))
}

pub fn scenarios() -> Vec<Scenario> {
    SCENARIO_NAMES.iter().filter_map(|n| scenario(n)).collect()
}

/// Runs a bundled scenario with its own seed and the mock backend.
pub fn run(name: &str, variant: SystemVariant) -> Result<ScenarioRun, EvalError> {
    let s = scenario(name).ok_or_else(|| EvalError::InvalidScenario(format!("no bundled scenario '{name}'")))?;
    let scene = scene(&s.scene).ok_or_else(|| EvalError::ScriptSceneMismatch(format!("no bundled scene '{}'", s.scene)))?;
    run_scenario(&s, &scene, &s.runtime_config(variant))
}

/// File name of the committed event log for a bundled run.
pub fn golden_log_name(name: &str, variant: SystemVariant) -> String {
    format!("{name}.{variant}.ndjson")
}

pub const RATE_CARD_NAMES: [&str; 2] = ["openai", "gemini"];

pub fn rate_card_json(name: &str) -> Option<&'static str> {
    match name {
        "openai" => Some(include_str!("../../data/rates/openai.json")),
        "gemini" => Some(include_str!("../../data/rates/gemini.json")),
        _ => None,
    }
}

pub fn rate_card(name: &str) -> Option<RateCard> {
    rate_card_json(name).map(|s| RateCard::from_json(s).expect("bundled rate card is valid"))
}

pub fn rate_cards() -> Vec<RateCard> {
    RATE_CARD_NAMES.iter().filter_map(|n| rate_card(n)).collect()
}
