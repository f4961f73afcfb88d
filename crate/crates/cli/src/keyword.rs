//! Rule-based stand-in for a live model in serve mode.
//!
//! Looks for a few phrasings and scene labels in the utterance and answers
//! with at most one tool call, restricted to the tools the variant offers.

use std::collections::BTreeSet;

use serde_json::json;
use situ_core::session::{
    AdapterError, BackendAdapter, BackendOutput, BackendResponse, Capabilities, MockScripted, ScriptedResponse,
    ScriptedToolCall, TurnRequest,
};
use situ_core::simworld::{label_matches, tokens, Scene};
use situ_core::tools::{SystemVariant, ToolName};

const SCAN_PHRASES: [&str; 4] = ["look around", "scan", "look again", "check the room"];
const SEARCH_WORDS: [&str; 4] = ["where", "find", "search", "locate"];
const VISION_PHRASES: [&str; 6] = ["what do you see", "can you see", "look like", "how does", "read this", "what is this"];

#[derive(Debug, Clone)]
pub struct KeywordBackend {
    tools: BTreeSet<ToolName>,
    /// Longest first, so "brown jacket" wins over "jacket".
    labels: Vec<String>,
    seed: u64,
    next_call: usize,
}

impl KeywordBackend {
    pub fn new(scene: &Scene, variant: SystemVariant, seed: u64) -> Self {
        let mut labels: Vec<String> = scene.objects.iter().map(|o| o.label.clone()).collect();
        labels.sort_by_key(|l| std::cmp::Reverse(l.split_whitespace().count()));
        Self {
            tools: ToolName::ALL.into_iter().filter(|t| variant.enables(*t)).collect(),
            labels,
            seed,
            next_call: 0,
        }
    }

    /// The tool call (if any) and reply chosen for `text`.
    pub fn plan(&self, turn: usize, text: &str) -> ScriptedResponse {
        let lower = text.to_lowercase();
        let words = tokens(text);
        let label = self.labels.iter().find(|l| label_matches(l, text));
        let offered = |t: ToolName| self.tools.contains(&t);

        let (reply, call) = if SCAN_PHRASES.iter().any(|p| lower.contains(p)) && offered(ToolName::LookAround) {
            ("Let me take a look around.".to_string(), Some((ToolName::LookAround, json!({}))))
        } else if let Some(label) = label {
            let searching = SEARCH_WORDS.iter().any(|w| words.contains(*w));
            if searching && offered(ToolName::LookFor) {
                (format!("Let me find the {label}."), Some((ToolName::LookFor, json!({ "q": label }))))
            } else if !searching && offered(ToolName::LookAtObject) {
                (format!("Looking at the {label}."), Some((ToolName::LookAtObject, json!({ "label": label }))))
            } else {
                (format!("I can't look for the {label} right now."), None)
            }
        } else if VISION_PHRASES.iter().any(|p| lower.contains(p)) && offered(ToolName::UseVision) {
            ("Let me check.".to_string(), Some((ToolName::UseVision, json!({ "q": text }))))
        } else if words.contains("me") && offered(ToolName::LookAtPerson) {
            ("I'm looking at you.".to_string(), Some((ToolName::LookAtPerson, json!({}))))
        } else {
            ("Okay.".to_string(), None)
        };

        ScriptedResponse {
            turn,
            latency_ms: 700,
            text: reply,
            tool_calls: call
                .map(|(name, args)| ScriptedToolCall {
                    name: name.as_str().to_string(),
                    args,
                })
                .into_iter()
                .collect(),
            tools_after_text: false,
            text_tokens: None,
            audio_tokens: None,
        }
    }
}

impl BackendAdapter for KeywordBackend {
    fn name(&self) -> &str {
        "keyword"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn respond(&mut self, request: &TurnRequest<'_>) -> Result<BackendResponse, AdapterError> {
        let planned = self.plan(request.turn, request.transcript);
        let mut mock = MockScripted::new(vec![planned], self.seed.wrapping_add(request.turn as u64))?;
        let mut response = mock.respond(request)?;
        // call ids must stay unique across the whole session
        for out in &mut response.outputs {
            if let BackendOutput::ToolCall(call) = &mut out.output {
                call.call_id = format!("call_{}", self.next_call);
                self.next_call += 1;
            }
        }
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use situ_core::eval::bundled;

    fn tool(b: &KeywordBackend, text: &str) -> Option<String> {
        b.plan(0, text).tool_calls.first().map(|c| c.name.clone())
    }

    #[test]
    fn picks_tools_from_phrasing_and_labels() {
        let scene = bundled::scene("outfit_check").unwrap();
        let b = KeywordBackend::new(&scene, SystemVariant::Full, 0);
        assert_eq!(tool(&b, "Can you look around the room?").as_deref(), Some("look_around"));
        assert_eq!(tool(&b, "Where is my brown jacket?").as_deref(), Some("look_for"));
        assert_eq!(b.plan(0, "where is my brown jacket").tool_calls[0].args["q"], "brown jacket");
        assert_eq!(tool(&b, "Look at the blue jacket").as_deref(), Some("look_at_object"));
        assert_eq!(tool(&b, "What do you see right now?").as_deref(), Some("use_vision"));
        assert_eq!(tool(&b, "Look at me please").as_deref(), Some("look_at_person"));
        assert_eq!(tool(&b, "Thanks, that's all."), None);
    }

    #[test]
    fn ablated_tools_are_never_called() {
        let scene = bundled::scene("outfit_check").unwrap();
        let b = KeywordBackend::new(&scene, SystemVariant::NoObject, 0);
        assert_eq!(tool(&b, "Where is my brown jacket?"), None);
        let b = KeywordBackend::new(&scene, SystemVariant::NoPerson, 0);
        assert_eq!(tool(&b, "Look at me please"), None);
    }

    #[test]
    fn call_ids_are_unique_across_turns() {
        let scene = bundled::scene("pack_find").unwrap();
        let mut b = KeywordBackend::new(&scene, SystemVariant::Full, 1);
        let mut ids = BTreeSet::new();
        for (turn, text) in ["scan the room", "where are my keys", "find my wallet"].iter().enumerate() {
            let r = b.respond(&TurnRequest { turn, transcript: text }).unwrap();
            for out in r.outputs {
                if let BackendOutput::ToolCall(c) = out.output {
                    assert!(ids.insert(c.call_id));
                }
            }
        }
        assert_eq!(ids.len(), 3);
    }
}
