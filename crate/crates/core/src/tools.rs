//! The attention and perception tool family exposed to the language model.
//!
//! Five tools are registered by default: `look_at_person`, `look_at_object`,
//! `look_around`, `look_for` and `use_vision`. Tool and argument names are
//! part of the external contract and must not change.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::geometry::{GazeTarget, Point3, DEFAULT_NOMINAL_DISTANCE};
use crate::session::TurnState;

/// Earlier name for `look_at_person`, accepted on input only.
pub const LOOK_AT_PERSON_ALIAS: &str = "look_at_me";

/// Yaw stations of the sweep used when `look_around` is called without `C`.
pub const DEFAULT_SWEEP_YAW_DEG: [f64; 5] = [-120.0, -60.0, 0.0, 60.0, 120.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    LookAtPerson,
    LookAtObject,
    LookAround,
    LookFor,
    UseVision,
}

impl ToolName {
    pub const ALL: [ToolName; 5] = [
        ToolName::LookAtPerson,
        ToolName::LookAtObject,
        ToolName::LookAround,
        ToolName::LookFor,
        ToolName::UseVision,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::LookAtPerson => "look_at_person",
            ToolName::LookAtObject => "look_at_object",
            ToolName::LookAround => "look_around",
            ToolName::LookFor => "look_for",
            ToolName::UseVision => "use_vision",
        }
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolName {
    type Err = ToolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "look_at_person" | LOOK_AT_PERSON_ALIAS => Ok(ToolName::LookAtPerson),
            "look_at_object" => Ok(ToolName::LookAtObject),
            "look_around" => Ok(ToolName::LookAround),
            "look_for" => Ok(ToolName::LookFor),
            "use_vision" => Ok(ToolName::UseVision),
            other => Err(ToolError::UnknownTool(other.to_string())),
        }
    }
}

/// Which tools a system variant exposes to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemVariant {
    Full,
    /// Removes `look_for` and `look_at_object`.
    NoObject,
    /// Removes `look_at_person`.
    NoPerson,
}

impl SystemVariant {
    pub const ALL: [SystemVariant; 3] = [SystemVariant::Full, SystemVariant::NoObject, SystemVariant::NoPerson];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemVariant::Full => "full",
            SystemVariant::NoObject => "no_object",
            SystemVariant::NoPerson => "no_person",
        }
    }

    pub fn disabled_tools(self) -> &'static [ToolName] {
        match self {
            SystemVariant::Full => &[],
            SystemVariant::NoObject => &[ToolName::LookFor, ToolName::LookAtObject],
            SystemVariant::NoPerson => &[ToolName::LookAtPerson],
        }
    }

    pub fn enables(self, tool: ToolName) -> bool {
        !self.disabled_tools().contains(&tool)
    }
}

impl fmt::Display for SystemVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(SystemVariant::Full),
            "no_object" => Ok(SystemVariant::NoObject),
            "no_person" => Ok(SystemVariant::NoPerson),
            other => Err(format!("unknown system variant '{other}' (expected full, no_object, no_person)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ToolError {
    #[error("unknown tool '{0}'")]
    UnknownTool(String),
    #[error("schema violation on '{field}': {reason}")]
    SchemaViolation { field: String, reason: String },
}

impl ToolError {
    fn violation(field: &str, reason: impl Into<String>) -> Self {
        ToolError::SchemaViolation {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// Short machine-readable code used in event logs.
    pub fn code(&self) -> &'static str {
        match self {
            ToolError::UnknownTool(_) => "UnknownTool",
            ToolError::SchemaViolation { .. } => "SchemaViolation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Free text such as a query `q` or an object label.
    Text,
    /// List of robot-frame look targets `{x, y, z}`.
    TargetList,
    /// Boolean enable flag.
    Flag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub required: bool,
    pub description: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolSpec {
    pub name: ToolName,
    pub description: &'static str,
    pub params: Vec<ParamSpec>,
}

impl ToolSpec {
    pub fn builtin(name: ToolName) -> Self {
        let (description, params) = match name {
            ToolName::LookAtPerson => (
                "Continuously keep the robot's gaze on the person it is talking to. Use during \
                 ordinary conversation, greetings, and whenever attention should return to the \
                 speaker.",
                vec![ParamSpec {
                    name: "enabled",
                    kind: ParamKind::Flag,
                    required: false,
                    description: "Start (true, default) or stop (false) following the person.",
                }],
            ),
            ToolName::LookAtObject => (
                "Fixate and keep tracking an object that is already in view, e.g. something the \
                 person is holding or pointing at. Do not use this to search for objects that are \
                 out of view.",
                vec![ParamSpec {
                    name: "label",
                    kind: ParamKind::Text,
                    required: true,
                    description: "Short name of the visible object to track.",
                }],
            ),
            ToolName::LookAround => (
                "Sweep the surroundings and store the captured views for later search. Use when \
                 the room has not been scanned yet or has changed since the last scan.",
                vec![ParamSpec {
                    name: "C",
                    kind: ParamKind::TargetList,
                    required: false,
                    description: "Ordered robot-frame look targets in meters. Omit for the default sweep.",
                }],
            ),
            ToolName::LookFor => (
                "Search the stored views from the last sweep for something that is not currently \
                 in view, turn toward the best match and receive that view.",
                vec![ParamSpec {
                    name: "q",
                    kind: ParamKind::Text,
                    required: true,
                    description: "Natural-language description of what to find.",
                }],
            ),
            ToolName::UseVision => (
                "Send the current camera frame together with a question when the answer depends \
                 on what the robot is looking at right now.",
                vec![ParamSpec {
                    name: "q",
                    kind: ParamKind::Text,
                    required: true,
                    description: "Question to answer about the current view.",
                }],
            ),
        };
        Self {
            name,
            description,
            params,
        }
    }

    /// Function-calling schema for this tool. Object keys are sorted, so the
    /// serialized form is byte-stable.
    pub fn json_schema(&self) -> Value {
        let mut properties = Map::new();
        let mut required = Vec::new();
        for p in &self.params {
            let mut schema = match p.kind {
                ParamKind::Text => json!({ "type": "string", "minLength": 1 }),
                ParamKind::Flag => json!({ "type": "boolean" }),
                ParamKind::TargetList => json!({
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "x": { "type": "number" },
                            "y": { "type": "number" },
                            "z": { "type": "number" }
                        },
                        "required": ["x", "y", "z"],
                        "additionalProperties": false
                    }
                }),
            };
            schema["description"] = Value::from(p.description);
            properties.insert(p.name.to_string(), schema);
            if p.required {
                required.push(Value::from(p.name));
            }
        }
        json!({
            "type": "function",
            "name": self.name.as_str(),
            "description": self.description,
            "parameters": {
                "type": "object",
                "properties": properties,
                "required": required,
                "additionalProperties": false
            }
        })
    }
}

/// A tool call as emitted by a backend, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawToolCall {
    pub call_id: String,
    pub name: String,
    #[serde(default)]
    pub args: Value,
}

/// Validated, typed tool arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "args", rename_all = "snake_case")]
pub enum ToolArgs {
    LookAtPerson {
        enabled: bool,
    },
    LookAtObject {
        label: String,
    },
    LookAround {
        #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
        targets: Option<Vec<GazeTarget>>,
    },
    LookFor {
        q: String,
    },
    UseVision {
        q: String,
    },
}

impl ToolArgs {
    pub fn tool(&self) -> ToolName {
        match self {
            ToolArgs::LookAtPerson { .. } => ToolName::LookAtPerson,
            ToolArgs::LookAtObject { .. } => ToolName::LookAtObject,
            ToolArgs::LookAround { .. } => ToolName::LookAround,
            ToolArgs::LookFor { .. } => ToolName::LookFor,
            ToolArgs::UseVision { .. } => ToolName::UseVision,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub call_id: String,
    #[serde(flatten)]
    pub args: ToolArgs,
}

impl ToolCall {
    pub fn name(&self) -> ToolName {
        self.args.tool()
    }
}

/// The runtime's single active attention behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum AttentionDirective {
    FollowPerson,
    FollowObject { label: String },
    Sweep { targets: Vec<GazeTarget> },
    Search { query: String },
    RequestVision { query: String },
    #[default]
    Idle,
}

impl AttentionDirective {
    pub fn is_follow(&self) -> bool {
        matches!(self, AttentionDirective::FollowPerson | AttentionDirective::FollowObject { .. })
    }
}

/// Targets of the default sweep: yaw stations at nominal distance, zero pitch.
pub fn default_sweep_targets() -> Vec<GazeTarget> {
    DEFAULT_SWEEP_YAW_DEG
        .iter()
        .map(|deg| {
            GazeTarget::from_yaw_elevation(deg.to_radians(), 0.0, DEFAULT_NOMINAL_DISTANCE)
                .expect("default sweep targets are well formed")
        })
        .collect()
}

/// Immutable set of tool specs, shared freely once built.
#[derive(Debug, Clone)]
pub struct ToolRegistry {
    specs: BTreeMap<ToolName, ToolSpec>,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        Self::for_variant(SystemVariant::Full)
    }
}

impl ToolRegistry {
    pub fn for_variant(variant: SystemVariant) -> Self {
        let specs = ToolName::ALL
            .into_iter()
            .filter(|t| variant.enables(*t))
            .map(|t| (t, ToolSpec::builtin(t)))
            .collect();
        Self { specs }
    }

    pub fn contains(&self, tool: ToolName) -> bool {
        self.specs.contains_key(&tool)
    }

    pub fn tools(&self) -> impl Iterator<Item = ToolName> + '_ {
        self.specs.keys().copied()
    }

    pub fn spec(&self, tool: ToolName) -> Option<&ToolSpec> {
        self.specs.get(&tool)
    }

    /// Validates a raw call against the registered schema.
    pub fn parse_tool_call(&self, raw: &RawToolCall) -> Result<ToolCall, ToolError> {
        let tool: ToolName = raw.name.parse()?;
        let spec = self
            .specs
            .get(&tool)
            .ok_or_else(|| ToolError::UnknownTool(raw.name.clone()))?;

        let empty = Map::new();
        let args = match &raw.args {
            Value::Object(map) => map,
            Value::Null => &empty,
            _ => return Err(ToolError::violation("args", "arguments must be a JSON object")),
        };
        if let Some(unknown) = args.keys().find(|k| !spec.params.iter().any(|p| p.name == *k)) {
            return Err(ToolError::violation(unknown, "unknown field"));
        }
        for p in &spec.params {
            match args.get(p.name) {
                None if p.required => return Err(ToolError::violation(p.name, "required field missing")),
                None => {}
                Some(v) => check_param(p, v)?,
            }
        }

        let text = |name: &str| -> String {
            args.get(name)
                .and_then(Value::as_str)
                .map(|s| s.trim().to_string())
                .unwrap_or_default()
        };
        let parsed = match tool {
            ToolName::LookAtPerson => ToolArgs::LookAtPerson {
                enabled: args.get("enabled").and_then(Value::as_bool).unwrap_or(true),
            },
            ToolName::LookAtObject => ToolArgs::LookAtObject { label: text("label") },
            ToolName::LookAround => ToolArgs::LookAround {
                targets: args.get("C").map(parse_targets).transpose()?,
            },
            ToolName::LookFor => ToolArgs::LookFor { q: text("q") },
            ToolName::UseVision => ToolArgs::UseVision { q: text("q") },
        };
        Ok(ToolCall {
            call_id: raw.call_id.clone(),
            args: parsed,
        })
    }

    /// Schema document covering every registered tool.
    pub fn schema_document(&self) -> Value {
        json!({ "tools": self.specs.values().map(ToolSpec::json_schema).collect::<Vec<_>>() })
    }
}

fn check_param(p: &ParamSpec, v: &Value) -> Result<(), ToolError> {
    match p.kind {
        ParamKind::Text => match v.as_str() {
            Some(s) if !s.trim().is_empty() => Ok(()),
            Some(_) => Err(ToolError::violation(p.name, "must not be empty")),
            None => Err(ToolError::violation(p.name, "expected a string")),
        },
        ParamKind::Flag => v
            .as_bool()
            .map(|_| ())
            .ok_or_else(|| ToolError::violation(p.name, "expected a boolean")),
        ParamKind::TargetList => parse_targets(v).map(|_| ()),
    }
}

fn parse_targets(v: &Value) -> Result<Vec<GazeTarget>, ToolError> {
    let items = v
        .as_array()
        .ok_or_else(|| ToolError::violation("C", "expected an array of {x, y, z} targets"))?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let obj = item
                .as_object()
                .ok_or_else(|| ToolError::violation("C", format!("target {i} is not an object")))?;
            if let Some(k) = obj.keys().find(|k| !matches!(k.as_str(), "x" | "y" | "z")) {
                return Err(ToolError::violation("C", format!("target {i} has unknown field '{k}'")));
            }
            let coord = |k: &str| {
                obj.get(k)
                    .and_then(Value::as_f64)
                    .ok_or_else(|| ToolError::violation("C", format!("target {i} needs numeric '{k}'")))
            };
            GazeTarget::new(Point3::new(coord("x")?, coord("y")?, coord("z")?))
                .map_err(|e| ToolError::violation("C", format!("target {i}: {e}")))
        })
        .collect()
}

/// Maps a validated call to the attention directive it activates.
pub fn dispatch(call: &ToolCall) -> AttentionDirective {
    match &call.args {
        ToolArgs::LookAtPerson { enabled: true } => AttentionDirective::FollowPerson,
        ToolArgs::LookAtPerson { enabled: false } => AttentionDirective::Idle,
        ToolArgs::LookAtObject { label } => AttentionDirective::FollowObject { label: label.clone() },
        ToolArgs::LookAround { targets } => AttentionDirective::Sweep {
            targets: targets.clone().unwrap_or_else(default_sweep_targets),
        },
        ToolArgs::LookFor { q } => AttentionDirective::Search { query: q.clone() },
        ToolArgs::UseVision { q } => AttentionDirective::RequestVision { query: q.clone() },
    }
}

/// Person following is the fallback once a turn settles with nothing else
/// active. In every other situation the current directive is kept.
pub fn default_policy(state: &TurnState, current: &AttentionDirective) -> AttentionDirective {
    match (state, current) {
        (TurnState::Listening, AttentionDirective::Idle) => AttentionDirective::FollowPerson,
        _ => current.clone(),
    }
}
