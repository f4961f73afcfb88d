//! Backend adapter contract plus the deterministic adapters used offline.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{estimate_text_tokens, EventKind, EventLog, LogEntry, RuntimeNote};
use crate::tools::RawToolCall;

const CHUNK_WORDS: usize = 6;
const CHUNK_INTERVAL_MS: u64 = 240;
const TOOL_AFTER_TEXT_MS: u64 = 120;
const DONE_AFTER_MS: u64 = 150;
const SPOKEN_MS_PER_WORD: u64 = 300;
const AUDIO_TOKENS_PER_SECOND: u64 = 20;
const AUDIO_PLACEHOLDER_BYTES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub audio_in: bool,
    pub image_in: bool,
    pub tool_calls: bool,
}

impl Capabilities {
    pub const ALL: Capabilities = Capabilities {
        audio_in: true,
        image_in: true,
        tool_calls: true,
    };
}

/// Something a backend produced. Tool calls arrive unvalidated; the session
/// owner checks them against its registry before they become events.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendOutput {
    Event(EventKind),
    ToolCall(RawToolCall),
}

/// An output due at least `delay_ms` after the previous output of the same
/// response (the first one is relative to the turn commit).
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledOutput {
    pub delay_ms: u64,
    pub output: BackendOutput,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BackendResponse {
    pub outputs: Vec<ScheduledOutput>,
}

#[derive(Debug, Clone, Copy)]
pub struct TurnRequest<'a> {
    pub turn: usize,
    pub transcript: &'a str,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdapterError {
    #[error("no recorded response for turn {0}")]
    NoRecordedTurn(usize),
    #[error("invalid backend script: {0}")]
    Script(String),
    #[error("cannot decode backend message: {0}")]
    Decode(String),
}

pub trait BackendAdapter: Send {
    fn name(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    /// Produces the response to a forwarded user turn.
    fn respond(&mut self, request: &TurnRequest<'_>) -> Result<BackendResponse, AdapterError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedToolCall {
    pub name: String,
    #[serde(default)]
    pub args: Value,
}

/// One scripted model response, keyed by user-turn index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedResponse {
    pub turn: usize,
    #[serde(default = "default_latency")]
    pub latency_ms: u64,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub tool_calls: Vec<ScriptedToolCall>,
    /// Speak first, then call the tools.
    #[serde(default)]
    pub tools_after_text: bool,
    /// Declared totals; estimated from the text when absent.
    #[serde(default)]
    pub text_tokens: Option<u64>,
    #[serde(default)]
    pub audio_tokens: Option<u64>,
}

fn default_latency() -> u64 {
    700
}

/// Share `total` across `n` parts so the parts sum exactly to `total`.
fn split_evenly(total: u64, n: usize, i: usize) -> u64 {
    let n = n as u64;
    let i = i as u64;
    total * (i + 1) / n - total * i / n
}

/// Deterministic backend driven by a response script.
#[derive(Debug, Clone)]
pub struct MockScripted {
    script: BTreeMap<usize, ScriptedResponse>,
    rng: ChaCha8Rng,
    next_call: usize,
}

impl MockScripted {
    pub fn new(script: Vec<ScriptedResponse>, seed: u64) -> Result<Self, AdapterError> {
        let mut map = BTreeMap::new();
        for r in script {
            let turn = r.turn;
            if map.insert(turn, r).is_some() {
                return Err(AdapterError::Script(format!("turn {turn} scripted twice")));
            }
        }
        Ok(Self {
            script: map,
            rng: ChaCha8Rng::seed_from_u64(seed),
            next_call: 0,
        })
    }

    fn fallback(turn: usize) -> ScriptedResponse {
        ScriptedResponse {
            turn,
            latency_ms: default_latency(),
            text: "Okay.".into(),
            tool_calls: vec![],
            tools_after_text: false,
            text_tokens: None,
            audio_tokens: None,
        }
    }
}

impl BackendAdapter for MockScripted {
    fn name(&self) -> &str {
        "mock"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn respond(&mut self, request: &TurnRequest<'_>) -> Result<BackendResponse, AdapterError> {
        let scripted = self
            .script
            .get(&request.turn)
            .cloned()
            .unwrap_or_else(|| Self::fallback(request.turn));

        let mut tools: Vec<BackendOutput> = scripted
            .tool_calls
            .iter()
            .map(|c| {
                let call_id = format!("call_{}", self.next_call);
                self.next_call += 1;
                BackendOutput::ToolCall(RawToolCall {
                    call_id,
                    name: c.name.clone(),
                    args: c.args.clone(),
                })
            })
            .collect();

        let words: Vec<&str> = scripted.text.split_whitespace().collect();
        let chunks: Vec<String> = words.chunks(CHUNK_WORDS).map(|c| c.join(" ")).collect();
        let text_total = scripted
            .text_tokens
            .unwrap_or_else(|| chunks.iter().map(|c| estimate_text_tokens(c)).sum());
        let audio_total = scripted
            .audio_tokens
            .unwrap_or(words.len() as u64 * SPOKEN_MS_PER_WORD * AUDIO_TOKENS_PER_SECOND / 1000);

        let mut speech = Vec::new();
        for (i, chunk) in chunks.iter().enumerate() {
            let mut audio = vec![0u8; AUDIO_PLACEHOLDER_BYTES];
            self.rng.fill_bytes(&mut audio);
            speech.push(BackendOutput::Event(EventKind::ModelTextDelta {
                text: chunk.clone(),
                tokens: split_evenly(text_total, chunks.len(), i),
            }));
            speech.push(BackendOutput::Event(EventKind::ModelAudioDelta {
                audio,
                tokens: split_evenly(audio_total, chunks.len(), i),
            }));
        }

        // (gap before this output when it is not the first, output)
        let mut ordered: Vec<(u64, BackendOutput)> = Vec::new();
        let speech_items = speech.into_iter().enumerate().map(|(i, out)| {
            // text and audio of one chunk share a timestamp
            (if i % 2 == 1 { 0 } else { CHUNK_INTERVAL_MS }, out)
        });
        if scripted.tools_after_text {
            ordered.extend(speech_items);
            ordered.extend(tools.drain(..).map(|t| (TOOL_AFTER_TEXT_MS, t)));
        } else {
            ordered.extend(tools.drain(..).map(|t| (0, t)));
            ordered.extend(speech_items);
        }
        ordered.push((DONE_AFTER_MS, BackendOutput::Event(EventKind::ResponseDone { cancelled: false })));
        let outputs = ordered
            .into_iter()
            .enumerate()
            .map(|(i, (gap, output))| ScheduledOutput {
                delay_ms: if i == 0 { scripted.latency_ms } else { gap },
                output,
            })
            .collect();
        Ok(BackendResponse { outputs })
    }
}

/// Replays backend outputs captured in an event log.
#[derive(Debug, Clone, Default)]
pub struct RecordedFixture {
    name: String,
    turns: BTreeMap<usize, BackendResponse>,
}

impl RecordedFixture {
    /// Groups backend-originated records by the user turn they answer.
    /// Delays are reconstructed from the recorded timestamps.
    pub fn from_log(log: &EventLog) -> Self {
        let mut turns: BTreeMap<usize, BackendResponse> = BTreeMap::new();
        let mut turn: Option<usize> = None;
        let mut anchor = 0u64;
        for line in log.lines() {
            let output = match &line.entry {
                LogEntry::Event(EventKind::UserTurnCommitted { .. }) => {
                    turn = Some(turn.map_or(0, |t| t + 1));
                    anchor = line.t_ms;
                    continue;
                }
                LogEntry::Event(
                    kind @ (EventKind::ModelTextDelta { .. }
                    | EventKind::ModelAudioDelta { .. }
                    | EventKind::ResponseDone { cancelled: false }
                    | EventKind::BackendError { .. }),
                ) => BackendOutput::Event(kind.clone()),
                LogEntry::Event(EventKind::ToolCallRequest { call }) => {
                    let args = serde_json::to_value(&call.args).expect("tool args serialize");
                    BackendOutput::ToolCall(RawToolCall {
                        call_id: call.call_id.clone(),
                        name: call.name().as_str().to_string(),
                        args: args.get("args").cloned().unwrap_or(Value::Null),
                    })
                }
                LogEntry::Note(RuntimeNote::ToolRejected { call_id, name, args, .. }) => {
                    BackendOutput::ToolCall(RawToolCall {
                        call_id: call_id.clone(),
                        name: name.clone(),
                        args: args.clone(),
                    })
                }
                _ => continue,
            };
            let Some(turn) = turn else { continue };
            turns.entry(turn).or_default().outputs.push(ScheduledOutput {
                delay_ms: line.t_ms - anchor,
                output,
            });
            anchor = line.t_ms;
        }
        Self {
            name: "fixture".into(),
            turns,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn turn_count(&self) -> usize {
        self.turns.len()
    }

    pub fn turn(&self, turn: usize) -> Option<&BackendResponse> {
        self.turns.get(&turn)
    }
}

impl BackendAdapter for RecordedFixture {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn respond(&mut self, request: &TurnRequest<'_>) -> Result<BackendResponse, AdapterError> {
        self.turns
            .get(&request.turn)
            .cloned()
            .ok_or(AdapterError::NoRecordedTurn(request.turn))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn script() -> Vec<ScriptedResponse> {
        serde_json::from_value(json!([
            {"turn": 0, "latency_ms": 500, "text": "Let me take a look around the room for you.",
             "tool_calls": [{"name": "look_around", "args": {}}], "text_tokens": 20, "audio_tokens": 90},
            {"turn": 1, "text": "Sure.", "tools_after_text": true,
             "tool_calls": [{"name": "look_for", "args": {"q": "lamp"}}]}
        ]))
        .unwrap()
    }

    #[test]
    fn mock_is_deterministic() {
        let req = TurnRequest { turn: 0, transcript: "hi" };
        let a = MockScripted::new(script(), 7).unwrap().respond(&req).unwrap();
        let b = MockScripted::new(script(), 7).unwrap().respond(&req).unwrap();
        assert_eq!(a, b);
        let c = MockScripted::new(script(), 8).unwrap().respond(&req).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn mock_orders_tools_and_declares_tokens() {
        let mut m = MockScripted::new(script(), 1).unwrap();
        let r = m.respond(&TurnRequest { turn: 0, transcript: "" }).unwrap();
        assert_eq!(r.outputs[0].delay_ms, 500);
        assert!(matches!(&r.outputs[0].output, BackendOutput::ToolCall(c) if c.name == "look_around" && c.call_id == "call_0"));
        assert!(matches!(r.outputs.last().unwrap().output, BackendOutput::Event(EventKind::ResponseDone { cancelled: false })));
        let (mut text, mut audio) = (0, 0);
        for o in &r.outputs {
            match &o.output {
                BackendOutput::Event(EventKind::ModelTextDelta { tokens, .. }) => text += tokens,
                BackendOutput::Event(EventKind::ModelAudioDelta { tokens, .. }) => audio += tokens,
                _ => {}
            }
        }
        assert_eq!((text, audio), (20, 90));

        let r = m.respond(&TurnRequest { turn: 1, transcript: "" }).unwrap();
        let kinds: Vec<_> = r.outputs.iter().map(|o| matches!(o.output, BackendOutput::ToolCall(_))).collect();
        assert_eq!(kinds, [false, false, true, false]);
        assert!(matches!(&r.outputs[2].output, BackendOutput::ToolCall(c) if c.call_id == "call_1"));

        let r = m.respond(&TurnRequest { turn: 9, transcript: "" }).unwrap();
        assert!(matches!(&r.outputs[0].output, BackendOutput::Event(EventKind::ModelTextDelta { text, .. }) if text == "Okay."));
    }

    #[test]
    fn duplicate_turns_rejected() {
        let mut s = script();
        s[1].turn = 0;
        assert!(MockScripted::new(s, 0).is_err());
    }

    #[test]
    fn split_sums_exactly() {
        for total in [0u64, 1, 7, 100, 101] {
            for n in 1..7 {
                assert_eq!((0..n).map(|i| split_evenly(total, n, i)).sum::<u64>(), total);
            }
        }
    }
}
