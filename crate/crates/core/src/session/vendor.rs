//! Offline stand-ins for the two hosted realtime backends.
//!
//! Neither stub opens a network connection. Each one replays a recorded
//! fixture (an event log) and knows how to translate its vendor's server
//! messages into session outputs, which is the part of a live adapter that can
//! be checked without credentials.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde_json::Value;

use super::backend::{AdapterError, BackendAdapter, BackendOutput, BackendResponse, Capabilities, RecordedFixture, TurnRequest};
use super::{EventKind, EventLog};
use crate::tools::RawToolCall;

/// Environment variable read for vendor credentials. Offline modes ignore it.
pub const API_KEY_ENV: &str = "SITU_BACKEND_API_KEY";

fn str_field<'a>(msg: &'a Value, key: &str) -> Result<&'a str, AdapterError> {
    msg.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| AdapterError::Decode(format!("missing string field '{key}'")))
}

fn decode_audio(b64: &str) -> Result<Vec<u8>, AdapterError> {
    STANDARD.decode(b64).map_err(|e| AdapterError::Decode(format!("audio payload: {e}")))
}

fn arguments(raw: &Value) -> Result<Value, AdapterError> {
    match raw {
        // function arguments arrive as a JSON-encoded string on this wire
        Value::String(s) if s.trim().is_empty() => Ok(Value::Null),
        Value::String(s) => serde_json::from_str(s).map_err(|e| AdapterError::Decode(format!("tool arguments: {e}"))),
        other => Ok(other.clone()),
    }
}

/// Replays a recorded session in the shape of the OpenAI Realtime backend.
#[derive(Debug, Clone)]
pub struct OpenAiRealtimeStub {
    fixture: RecordedFixture,
}

impl OpenAiRealtimeStub {
    pub fn from_fixture(log: &EventLog) -> Self {
        Self {
            fixture: RecordedFixture::from_log(log).with_name("openai-realtime"),
        }
    }

    /// Translates one server message. Token counts are not carried on the
    /// deltas of this wire, so decoded deltas report zero tokens; usage is
    /// attributed from `response.done` by the caller.
    pub fn decode_server_message(msg: &Value) -> Result<Vec<BackendOutput>, AdapterError> {
        let kind = str_field(msg, "type")?;
        let event = |k| Ok(vec![BackendOutput::Event(k)]);
        match kind {
            "input_audio_buffer.speech_started" => event(EventKind::UserSpeechStart),
            "conversation.item.input_audio_transcription.completed" => event(EventKind::UserTurnCommitted {
                transcript: str_field(msg, "transcript")?.to_string(),
            }),
            "response.text.delta" | "response.output_text.delta" | "response.audio_transcript.delta" => {
                event(EventKind::ModelTextDelta {
                    text: str_field(msg, "delta")?.to_string(),
                    tokens: 0,
                })
            }
            "response.audio.delta" | "response.output_audio.delta" => event(EventKind::ModelAudioDelta {
                audio: decode_audio(str_field(msg, "delta")?)?,
                tokens: 0,
            }),
            "response.function_call_arguments.done" => Ok(vec![BackendOutput::ToolCall(RawToolCall {
                call_id: str_field(msg, "call_id")?.to_string(),
                name: str_field(msg, "name")?.to_string(),
                args: arguments(msg.get("arguments").unwrap_or(&Value::Null))?,
            })]),
            "response.done" => {
                let status = msg.pointer("/response/status").and_then(Value::as_str).unwrap_or("completed");
                event(EventKind::ResponseDone {
                    cancelled: status == "cancelled",
                })
            }
            "error" => event(EventKind::BackendError {
                message: msg
                    .pointer("/error/message")
                    .and_then(Value::as_str)
                    .unwrap_or("unspecified error")
                    .to_string(),
            }),
            _ => Ok(vec![]),
        }
    }
}

impl BackendAdapter for OpenAiRealtimeStub {
    fn name(&self) -> &str {
        self.fixture.name()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn respond(&mut self, request: &TurnRequest<'_>) -> Result<BackendResponse, AdapterError> {
        self.fixture.respond(request)
    }
}

/// Replays a recorded session in the shape of the Gemini Live backend.
#[derive(Debug, Clone)]
pub struct GeminiLiveStub {
    fixture: RecordedFixture,
}

impl GeminiLiveStub {
    pub fn from_fixture(log: &EventLog) -> Self {
        Self {
            fixture: RecordedFixture::from_log(log).with_name("gemini-live"),
        }
    }

    /// Translates one server message. A single message may carry several
    /// parts, so the result can hold more than one output.
    pub fn decode_server_message(msg: &Value) -> Result<Vec<BackendOutput>, AdapterError> {
        let mut out = Vec::new();
        if let Some(content) = msg.get("serverContent") {
            if let Some(text) = content.pointer("/inputTranscription/text").and_then(Value::as_str) {
                out.push(BackendOutput::Event(EventKind::UserTurnCommitted {
                    transcript: text.to_string(),
                }));
            }
            if content.get("interrupted").and_then(Value::as_bool) == Some(true) {
                out.push(BackendOutput::Event(EventKind::UserSpeechStart));
            }
            let parts = content.pointer("/modelTurn/parts").and_then(Value::as_array);
            for part in parts.into_iter().flatten() {
                if let Some(text) = part.get("text").and_then(Value::as_str) {
                    out.push(BackendOutput::Event(EventKind::ModelTextDelta {
                        text: text.to_string(),
                        tokens: 0,
                    }));
                }
                if let Some(data) = part.pointer("/inlineData/data").and_then(Value::as_str) {
                    out.push(BackendOutput::Event(EventKind::ModelAudioDelta {
                        audio: decode_audio(data)?,
                        tokens: 0,
                    }));
                }
            }
            if content.get("turnComplete").and_then(Value::as_bool) == Some(true) {
                out.push(BackendOutput::Event(EventKind::ResponseDone { cancelled: false }));
            }
        }
        let calls = msg.pointer("/toolCall/functionCalls").and_then(Value::as_array);
        for call in calls.into_iter().flatten() {
            out.push(BackendOutput::ToolCall(RawToolCall {
                call_id: str_field(call, "id")?.to_string(),
                name: str_field(call, "name")?.to_string(),
                args: arguments(call.get("args").unwrap_or(&Value::Null))?,
            }));
        }
        Ok(out)
    }
}

impl BackendAdapter for GeminiLiveStub {
    fn name(&self) -> &str {
        self.fixture.name()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn respond(&mut self, request: &TurnRequest<'_>) -> Result<BackendResponse, AdapterError> {
        self.fixture.respond(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    const FIXTURE: &str = include_str!("../../data/fixtures/vendor_session.ndjson");

    #[test]
    fn openai_messages_decode() {
        let out = OpenAiRealtimeStub::decode_server_message(&json!({
            "type": "response.function_call_arguments.done",
            "call_id": "call_A", "name": "look_for", "arguments": "{\"q\":\"red mug\"}"
        }))
        .unwrap();
        assert_eq!(out, vec![BackendOutput::ToolCall(RawToolCall {
            call_id: "call_A".into(),
            name: "look_for".into(),
            args: json!({"q": "red mug"}),
        })]);

        let out = OpenAiRealtimeStub::decode_server_message(&json!({
            "type": "response.audio.delta", "delta": "AAEC"
        }))
        .unwrap();
        assert_eq!(out, vec![BackendOutput::Event(EventKind::ModelAudioDelta { audio: vec![0, 1, 2], tokens: 0 })]);

        let out = OpenAiRealtimeStub::decode_server_message(&json!({
            "type": "response.done", "response": {"status": "cancelled"}
        }))
        .unwrap();
        assert_eq!(out, vec![BackendOutput::Event(EventKind::ResponseDone { cancelled: true })]);

        assert!(OpenAiRealtimeStub::decode_server_message(&json!({"type": "session.created"})).unwrap().is_empty());
        assert!(OpenAiRealtimeStub::decode_server_message(&json!({"delta": "x"})).is_err());
        assert!(OpenAiRealtimeStub::decode_server_message(&json!({
            "type": "response.function_call_arguments.done", "call_id": "c", "name": "look_for", "arguments": "{bad"
        }))
        .is_err());
    }

    #[test]
    fn gemini_messages_decode() {
        let out = GeminiLiveStub::decode_server_message(&json!({
            "serverContent": {"modelTurn": {"parts": [
                {"text": "Looking now."},
                {"inlineData": {"mimeType": "audio/pcm", "data": "AAEC"}}
            ]}, "turnComplete": true}
        }))
        .unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[2], BackendOutput::Event(EventKind::ResponseDone { cancelled: false }));

        let out = GeminiLiveStub::decode_server_message(&json!({
            "toolCall": {"functionCalls": [{"id": "fc1", "name": "use_vision", "args": {"q": "what is this?"}}]}
        }))
        .unwrap();
        assert_eq!(out, vec![BackendOutput::ToolCall(RawToolCall {
            call_id: "fc1".into(),
            name: "use_vision".into(),
            args: json!({"q": "what is this?"}),
        })]);

        let out = GeminiLiveStub::decode_server_message(&json!({"serverContent": {"interrupted": true}})).unwrap();
        assert_eq!(out, vec![BackendOutput::Event(EventKind::UserSpeechStart)]);
    }

    #[test]
    fn stubs_replay_recorded_fixture() {
        let log = EventLog::from_ndjson(FIXTURE).unwrap();
        let mut openai = OpenAiRealtimeStub::from_fixture(&log);
        let mut gemini = GeminiLiveStub::from_fixture(&log);
        assert_eq!(openai.name(), "openai-realtime");
        assert_eq!(gemini.name(), "gemini-live");
        let req = TurnRequest { turn: 0, transcript: "where are my keys?" };
        let a = openai.respond(&req).unwrap();
        let b = gemini.respond(&req).unwrap();
        assert_eq!(a, b);
        assert!(matches!(&a.outputs[0].output, BackendOutput::ToolCall(c) if c.name == "look_for"));
        assert!(matches!(
            a.outputs.last().unwrap().output,
            BackendOutput::Event(EventKind::ResponseDone { cancelled: false })
        ));
        assert_eq!(
            openai.respond(&TurnRequest { turn: 5, transcript: "" }),
            Err(AdapterError::NoRecordedTurn(5))
        );
    }
}
