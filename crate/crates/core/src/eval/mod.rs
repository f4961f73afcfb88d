//! Scenario runs, decision traces, and their scoring.

pub mod bundled;
pub mod cost;
pub mod kappa;
pub mod metrics;
pub mod report;
pub mod scenario;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::runtime::TurnOutcome;
use crate::tools::{SystemVariant, ToolName};

pub use cost::{estimate_cost, Cost, RateCard, RateError};
pub use kappa::{cohen_kappa, KappaError};
pub use metrics::{
    macro_average, mean_std, score_pooled, score_trace, score_trace_with, AnnotationFile, AnnotationLabel,
    AttentionNeed, Category, CategoryMetrics, Confusion, MacroPolicy, MeanStd, Metric, MetricsReport,
};
pub use scenario::{run_scenario, ScenarioRun, Scenario, ScenarioTurn, SceneEditSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("annotation alignment failed: {0}")]
    Alignment(String),
    #[error("trace has no response latencies")]
    EmptyTrace,
    #[error("scenario does not match its scene: {0}")]
    ScriptSceneMismatch(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Runtime(#[from] crate::runtime::RuntimeError),
}

/// The model side of a scored run: what the system did on each user turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub scenario: String,
    pub variant: SystemVariant,
    pub seed: u64,
    pub backend: String,
    /// Tools the model could call in this run.
    pub enabled_tools: Vec<ToolName>,
    pub turns: Vec<TurnOutcome>,
}

impl DecisionTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("traces serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn latencies(&self) -> Vec<u64> {
        self.turns.iter().filter_map(|t| t.latency_ms).collect()
    }
}

/// Sample mean and standard deviation of commit-to-first-output latencies.
pub fn latency_stats(trace: &DecisionTrace) -> Result<MeanStd, EvalError> {
    latency_stats_pooled(std::slice::from_ref(trace))
}

pub fn latency_stats_pooled(traces: &[DecisionTrace]) -> Result<MeanStd, EvalError> {
    let values: Vec<f64> = traces.iter().flat_map(|t| t.latencies()).map(|l| l as f64).collect();
    mean_std(&values).ok_or(EvalError::EmptyTrace)
}
