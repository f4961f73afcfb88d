//! Newline-delimited JSON event log.
//!
//! Each line carries a sequence number `seq`, the session time `t_ms` and a
//! `kind` tag. Session events and runtime records (gaze commands, directive
//! changes, cancellations) share the same stream.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{EventKind, SessionEvent};
use crate::tools::AttentionDirective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GazeSource {
    Person,
    Object,
    Audio,
    Sweep,
    Search,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuntimeNote {
    Gaze {
        x: f64,
        y: f64,
        z: f64,
        source: GazeSource,
    },
    Directive {
        directive: AttentionDirective,
    },
    CancelActiveAction {
        call_id: Option<String>,
    },
    ToolRejected {
        call_id: String,
        name: String,
        #[serde(default)]
        args: Value,
        error: String,
        detail: String,
    },
    SceneEdit {
        label: String,
        x: f64,
        y: f64,
        z: f64,
    },
    SessionClose {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogEntry {
    Event(EventKind),
    Note(RuntimeNote),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub seq: u64,
    pub t_ms: u64,
    #[serde(flatten)]
    pub entry: LogEntry,
}

impl LogLine {
    pub fn event(&self) -> Option<SessionEvent> {
        match &self.entry {
            LogEntry::Event(kind) => Some(SessionEvent::new(self.t_ms, kind.clone())),
            LogEntry::Note(_) => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    lines: Vec<LogLine>,
}

impl EventLog {
    pub fn lines(&self) -> &[LogLine] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn last_ms(&self) -> Option<u64> {
        self.lines.last().map(|l| l.t_ms)
    }

    pub(super) fn push_event(&mut self, event: SessionEvent) {
        let seq = self.lines.len() as u64;
        self.lines.push(LogLine {
            seq,
            t_ms: event.t_ms,
            entry: LogEntry::Event(event.kind),
        });
    }

    pub(super) fn push_note(&mut self, t_ms: u64, note: RuntimeNote) {
        let seq = self.lines.len() as u64;
        self.lines.push(LogLine {
            seq,
            t_ms,
            entry: LogEntry::Note(note),
        });
    }

    pub fn events(&self) -> impl Iterator<Item = SessionEvent> + '_ {
        self.lines.iter().filter_map(LogLine::event)
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            let json = serde_json::to_string(line).expect("log lines always serialize");
            let _ = writeln!(out, "{json}");
        }
        out
    }

    /// Parses a log, checking that `seq` is contiguous and `t_ms` is monotone.
    pub fn from_ndjson(text: &str) -> Result<Self, String> {
        let mut lines = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            if raw.trim().is_empty() {
                continue;
            }
            let line: LogLine = serde_json::from_str(raw).map_err(|e| format!("line {}: {e}", i + 1))?;
            if line.seq != lines.len() as u64 {
                return Err(format!("line {}: expected seq {}, found {}", i + 1, lines.len(), line.seq));
            }
            if let Some(prev) = lines.last().map(|l: &LogLine| l.t_ms) {
                if line.t_ms < prev {
                    return Err(format!("line {}: t_ms {} goes backwards from {prev}", i + 1, line.t_ms));
                }
            }
            lines.push(line);
        }
        Ok(Self { lines })
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_ndjson())
    }

    pub fn read(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_ndjson(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::{ToolArgs, ToolCall};

    #[test]
    fn lines_round_trip_through_ndjson() {
        let mut log = EventLog::default();
        log.push_event(SessionEvent::new(0, EventKind::UserSpeechStart));
        log.push_event(SessionEvent::new(5, EventKind::ModelAudioDelta {
            audio: vec![0, 1, 254],
            tokens: 4,
        }));
        log.push_event(SessionEvent::new(6, EventKind::ToolCallRequest {
            call: ToolCall {
                call_id: "call_0".into(),
                args: ToolArgs::LookAround { targets: None },
            },
        }));
        log.push_note(6, RuntimeNote::Gaze {
            x: 0.1,
            y: -0.2,
            z: 1.5,
            source: GazeSource::Sweep,
        });
        log.push_note(7, RuntimeNote::Directive {
            directive: AttentionDirective::FollowObject { label: "lamp".into() },
        });
        log.push_note(8, RuntimeNote::CancelActiveAction { call_id: None });
        let text = log.to_ndjson();
        assert!(text.lines().next().unwrap().starts_with(r#"{"seq":0,"t_ms":0,"kind":"user_speech_start"}"#));
        let back = EventLog::from_ndjson(&text).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.to_ndjson(), text);
    }

    #[test]
    fn rejects_gaps_and_time_reversal() {
        let bad_seq = "{\"seq\":1,\"t_ms\":0,\"kind\":\"user_speech_start\"}\n";
        assert!(EventLog::from_ndjson(bad_seq).is_err());
        let reversed = "{\"seq\":0,\"t_ms\":5,\"kind\":\"user_speech_start\"}\n{\"seq\":1,\"t_ms\":4,\"kind\":\"user_speech_start\"}\n";
        assert!(EventLog::from_ndjson(reversed).is_err());
    }
}
