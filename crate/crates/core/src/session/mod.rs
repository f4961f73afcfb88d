//! Streaming session: event vocabulary, turn lifecycle and usage bookkeeping.
//!
//! Turn boundaries are taken from the backend's voice-activity events, never
//! inferred here. A single owner feeds every [`SessionEvent`] through
//! [`Session::submit`], which validates the transition, updates the usage
//! ledger and appends the event to the log.

mod backend;
mod log;
mod usage;
pub mod vendor;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tools::ToolCall;

pub use backend::{
    AdapterError, BackendAdapter, BackendOutput, BackendResponse, Capabilities, MockScripted,
    RecordedFixture, ScheduledOutput, ScriptedResponse, ScriptedToolCall, TurnRequest,
};
pub use log::{EventLog, GazeSource, LogEntry, LogLine, RuntimeNote};
pub use usage::{estimate_text_tokens, record_usage, TokenUsage};

pub type FrameId = String;

/// Default image-token cost charged for one forwarded frame.
pub const DEFAULT_IMAGE_TOKENS_PER_FRAME: u64 = 258;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    AudioInChunk {
        tokens: u64,
    },
    FrameAvailable {
        frame_id: FrameId,
    },
    UserSpeechStart,
    UserTurnCommitted {
        transcript: String,
    },
    ModelTextDelta {
        text: String,
        tokens: u64,
    },
    ModelAudioDelta {
        #[serde(with = "base64_bytes")]
        audio: Vec<u8>,
        tokens: u64,
    },
    ToolCallRequest {
        call: ToolCall,
    },
    ToolResultAck {
        call_id: String,
        ok: bool,
        result: String,
        tokens: u64,
    },
    VisionMessage {
        frame_id: FrameId,
        query: String,
        tokens: u64,
    },
    ResponseDone {
        #[serde(default)]
        cancelled: bool,
    },
    BackendError {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub t_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl SessionEvent {
    pub fn new(t_ms: u64, kind: EventKind) -> Self {
        Self { t_ms, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TurnState {
    Listening,
    ModelResponding,
    ToolExecuting { call_id: String },
    Interrupted,
}

/// Work the session owner must carry out after a transition.
#[derive(Debug, Clone, PartialEq)]
pub enum RuntimeAction {
    ForwardToBackend { transcript: String },
    ExecuteTool { call: ToolCall },
    /// Cancel robot speech, and the named tool call if one was running.
    CancelActiveAction { call_id: Option<String> },
    SettleTurn,
    ReportError { message: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("stale event at {t_ms} ms (last processed {last_ms} ms)")]
    StaleEvent { t_ms: u64, last_ms: u64 },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("unknown frame '{0}'")]
    UnknownFrame(FrameId),
}

/// Turn lifecycle state machine with tool-call bookkeeping.
#[derive(Debug, Clone)]
pub struct TurnMachine {
    state: TurnState,
    last_ms: Option<u64>,
    pending: BTreeSet<String>,
    seen: BTreeSet<String>,
}

impl Default for TurnMachine {
    fn default() -> Self {
        Self {
            state: TurnState::Listening,
            last_ms: None,
            pending: BTreeSet::new(),
            seen: BTreeSet::new(),
        }
    }
}

impl TurnMachine {
    pub fn state(&self) -> &TurnState {
        &self.state
    }

    pub fn last_ms(&self) -> Option<u64> {
        self.last_ms
    }

    pub fn pending_calls(&self) -> impl Iterator<Item = &str> {
        self.pending.iter().map(String::as_str)
    }

    /// Applies one event. On error the machine is left untouched.
    pub fn advance(&mut self, event: &SessionEvent) -> Result<Vec<RuntimeAction>, SessionError> {
        if let Some(last_ms) = self.last_ms {
            if event.t_ms < last_ms {
                return Err(SessionError::StaleEvent {
                    t_ms: event.t_ms,
                    last_ms,
                });
            }
        }
        let mut next = self.clone();
        let actions = next.transition(&event.kind)?;
        next.last_ms = Some(event.t_ms);
        *self = next;
        Ok(actions)
    }

    fn cancel_all(&mut self) -> Vec<RuntimeAction> {
        let pending = std::mem::take(&mut self.pending);
        if pending.is_empty() {
            vec![RuntimeAction::CancelActiveAction { call_id: None }]
        } else {
            pending
                .into_iter()
                .map(|id| RuntimeAction::CancelActiveAction { call_id: Some(id) })
                .collect()
        }
    }

    fn transition(&mut self, kind: &EventKind) -> Result<Vec<RuntimeAction>, SessionError> {
        use TurnState::*;
        let actions = match kind {
            EventKind::AudioInChunk { .. } | EventKind::FrameAvailable { .. } | EventKind::VisionMessage { .. } => {
                vec![]
            }
            EventKind::UserSpeechStart => match self.state {
                ModelResponding | ToolExecuting { .. } => {
                    self.state = Interrupted;
                    self.cancel_all()
                }
                Listening | Interrupted => vec![],
            },
            EventKind::UserTurnCommitted { transcript } => {
                let forward = RuntimeAction::ForwardToBackend {
                    transcript: transcript.clone(),
                };
                match self.state {
                    Listening => {
                        self.state = ModelResponding;
                        vec![forward]
                    }
                    // The interrupted response is abandoned; the new turn is
                    // handed over and the session listens for its output.
                    Interrupted => {
                        self.state = Listening;
                        vec![forward]
                    }
                    ModelResponding | ToolExecuting { .. } => {
                        let mut out = self.cancel_all();
                        self.state = ModelResponding;
                        out.push(forward);
                        out
                    }
                }
            }
            EventKind::ModelTextDelta { .. } | EventKind::ModelAudioDelta { .. } => {
                if self.state == Listening {
                    self.state = ModelResponding;
                }
                vec![]
            }
            EventKind::ToolCallRequest { call } => {
                if !self.seen.insert(call.call_id.clone()) {
                    return Err(SessionError::ProtocolViolation(format!(
                        "duplicate tool call id '{}'",
                        call.call_id
                    )));
                }
                if self.state == Interrupted {
                    // Late call from a response that was already cut off.
                    vec![RuntimeAction::CancelActiveAction {
                        call_id: Some(call.call_id.clone()),
                    }]
                } else {
                    self.pending.insert(call.call_id.clone());
                    self.state = ToolExecuting {
                        call_id: call.call_id.clone(),
                    };
                    vec![RuntimeAction::ExecuteTool { call: call.clone() }]
                }
            }
            EventKind::ToolResultAck { call_id, .. } => {
                if !self.pending.remove(call_id) {
                    return Err(SessionError::ProtocolViolation(format!(
                        "tool result for unknown or resolved call '{call_id}'"
                    )));
                }
                if let ToolExecuting { .. } = self.state {
                    self.state = match self.pending.iter().next() {
                        Some(other) => ToolExecuting { call_id: other.clone() },
                        None => ModelResponding,
                    };
                }
                vec![]
            }
            EventKind::ResponseDone { .. } => {
                if !self.pending.is_empty() {
                    return Err(SessionError::ProtocolViolation(
                        "response completed while a tool call is unresolved".into(),
                    ));
                }
                self.state = Listening;
                vec![RuntimeAction::SettleTurn]
            }
            EventKind::BackendError { message } => vec![RuntimeAction::ReportError {
                message: message.clone(),
            }],
        };
        Ok(actions)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Robot,
}

/// One conversational turn reconstructed from an event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptTurn {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    pub tool_calls: Vec<ToolCall>,
    pub start_ms: u64,
    pub end_ms: u64,
}

/// Splits a log into alternating user and robot turns. A user turn spans
/// speech start to commit; a robot turn spans the first output after the
/// commit to its `response_done`.
pub fn transcript(log: &EventLog) -> Vec<TranscriptTurn> {
    let mut turns: Vec<TranscriptTurn> = Vec::new();
    let mut speech_start: Option<u64> = None;
    let mut robot: Option<TranscriptTurn> = None;
    let push = |turns: &mut Vec<TranscriptTurn>, mut t: TranscriptTurn| {
        t.index = turns.len();
        turns.push(t);
    };
    for event in log.events() {
        match event.kind {
            EventKind::UserSpeechStart => {
                speech_start.get_or_insert(event.t_ms);
            }
            EventKind::UserTurnCommitted { transcript } => {
                if let Some(r) = robot.take() {
                    push(&mut turns, r);
                }
                let start_ms = speech_start.take().unwrap_or(event.t_ms);
                push(&mut turns, TranscriptTurn {
                    index: 0,
                    speaker: Speaker::User,
                    text: transcript,
                    tool_calls: vec![],
                    start_ms,
                    end_ms: event.t_ms,
                });
            }
            EventKind::ModelTextDelta { text, .. } => {
                let r = robot.get_or_insert_with(|| robot_turn(event.t_ms));
                if !r.text.is_empty() {
                    r.text.push(' ');
                }
                r.text.push_str(&text);
                r.end_ms = event.t_ms;
            }
            EventKind::ToolCallRequest { call } => {
                let r = robot.get_or_insert_with(|| robot_turn(event.t_ms));
                r.tool_calls.push(call);
                r.end_ms = event.t_ms;
            }
            EventKind::ModelAudioDelta { .. } | EventKind::ToolResultAck { .. } | EventKind::VisionMessage { .. } => {
                if let Some(r) = robot.as_mut() {
                    r.end_ms = event.t_ms;
                }
            }
            EventKind::ResponseDone { .. } => {
                if let Some(mut r) = robot.take() {
                    r.end_ms = event.t_ms;
                    push(&mut turns, r);
                }
            }
            _ => {}
        }
    }
    if let Some(r) = robot.take() {
        push(&mut turns, r);
    }
    turns
}

fn robot_turn(t_ms: u64) -> TranscriptTurn {
    TranscriptTurn {
        index: 0,
        speaker: Speaker::Robot,
        text: String::new(),
        tool_calls: vec![],
        start_ms: t_ms,
        end_ms: t_ms,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionConfig {
    pub image_tokens_per_frame: u64,
    /// Forward every new frame to the backend without an explicit request.
    pub periodic_frame_attach: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            image_tokens_per_frame: DEFAULT_IMAGE_TOKENS_PER_FRAME,
            periodic_frame_attach: false,
        }
    }
}

/// Owner-side view of one streaming session.
#[derive(Debug, Clone, Default)]
pub struct Session {
    config: SessionConfig,
    machine: TurnMachine,
    usage: TokenUsage,
    log: EventLog,
    /// One-slot buffer holding the most recent camera frame.
    latest_frame: Option<FrameId>,
    /// Frames kept alive by the view store.
    pinned: BTreeSet<FrameId>,
    backend_inbox: Vec<SessionEvent>,
}

impl Session {
    pub fn new(config: SessionConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &TurnState {
        self.machine.state()
    }

    pub fn machine(&self) -> &TurnMachine {
        &self.machine
    }

    pub fn usage(&self) -> TokenUsage {
        self.usage
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    /// Time of the most recent logged record, or 0 for a fresh session.
    pub fn now_ms(&self) -> u64 {
        self.log.last_ms().unwrap_or(0)
    }

    pub fn latest_frame(&self) -> Option<&str> {
        self.latest_frame.as_deref()
    }

    /// Keeps a frame available for vision messages after newer frames arrive.
    pub fn pin_frame(&mut self, frame_id: &str) {
        self.pinned.insert(frame_id.to_string());
    }

    pub fn unpin_all(&mut self) {
        self.pinned.clear();
    }

    pub fn is_retained(&self, frame_id: &str) -> bool {
        self.latest_frame.as_deref() == Some(frame_id) || self.pinned.contains(frame_id)
    }

    /// Messages sent to the backend outside the turn flow, in order.
    pub fn backend_inbox(&self) -> &[SessionEvent] {
        &self.backend_inbox
    }

    /// Validates, accounts and logs one event.
    pub fn submit(&mut self, event: SessionEvent) -> Result<Vec<RuntimeAction>, SessionError> {
        if let Some(last) = self.log.last_ms() {
            if event.t_ms < last {
                return Err(SessionError::StaleEvent {
                    t_ms: event.t_ms,
                    last_ms: last,
                });
            }
        }
        let actions = self.machine.advance(&event)?;
        self.usage = record_usage(self.usage, &event.kind);
        if let EventKind::FrameAvailable { frame_id } = &event.kind {
            self.latest_frame = Some(frame_id.clone());
        }
        self.log.push_event(event);
        Ok(actions)
    }

    /// Appends a runtime record (gaze, directive, ...) to the log.
    pub fn note(&mut self, t_ms: u64, note: RuntimeNote) -> Result<(), SessionError> {
        if let Some(last) = self.log.last_ms() {
            if t_ms < last {
                return Err(SessionError::StaleEvent { t_ms, last_ms: last });
            }
        }
        self.log.push_note(t_ms, note);
        Ok(())
    }

    /// Sends a retained frame plus a text query to the backend without
    /// ending the current turn.
    pub fn inject_vision_message(
        &mut self,
        t_ms: u64,
        frame_id: &str,
        query: &str,
    ) -> Result<SessionEvent, SessionError> {
        if !self.is_retained(frame_id) {
            return Err(SessionError::UnknownFrame(frame_id.to_string()));
        }
        let event = SessionEvent::new(
            t_ms,
            EventKind::VisionMessage {
                frame_id: frame_id.to_string(),
                query: query.to_string(),
                tokens: self.config.image_tokens_per_frame,
            },
        );
        self.submit(event.clone())?;
        self.backend_inbox.push(event.clone());
        Ok(event)
    }
}

mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}
