use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use super::EventKind;

/// Token counts per billing modality.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenUsage {
    pub text_in: u64,
    pub audio_in: u64,
    pub image_in: u64,
    pub text_out: u64,
    pub audio_out: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.text_in + self.audio_in + self.image_in + self.text_out + self.audio_out
    }

    /// Per-field difference, assuming `self` was accumulated on top of `earlier`.
    pub fn since(&self, earlier: &TokenUsage) -> TokenUsage {
        TokenUsage {
            text_in: self.text_in - earlier.text_in,
            audio_in: self.audio_in - earlier.audio_in,
            image_in: self.image_in - earlier.image_in,
            text_out: self.text_out - earlier.text_out,
            audio_out: self.audio_out - earlier.audio_out,
        }
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage {
            text_in: self.text_in + rhs.text_in,
            audio_in: self.audio_in + rhs.audio_in,
            image_in: self.image_in + rhs.image_in,
            text_out: self.text_out + rhs.text_out,
            audio_out: self.audio_out + rhs.audio_out,
        }
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = TokenUsage>>(iter: I) -> Self {
        iter.fold(TokenUsage::default(), Add::add)
    }
}

/// Adds the event's declared token count to the matching modality counter.
pub fn record_usage(ledger: TokenUsage, event: &EventKind) -> TokenUsage {
    let mut out = ledger;
    match event {
        EventKind::AudioInChunk { tokens } => out.audio_in += tokens,
        EventKind::ModelTextDelta { tokens, .. } => out.text_out += tokens,
        EventKind::ModelAudioDelta { tokens, .. } => out.audio_out += tokens,
        EventKind::VisionMessage { tokens, .. } => out.image_in += tokens,
        EventKind::ToolResultAck { tokens, .. } => out.text_in += tokens,
        EventKind::FrameAvailable { .. }
        | EventKind::UserSpeechStart
        | EventKind::UserTurnCommitted { .. }
        | EventKind::ToolCallRequest { .. }
        | EventKind::ResponseDone { .. }
        | EventKind::BackendError { .. } => {}
    }
    out
}

/// Rough text token estimate (four characters per token, rounded up).
pub fn estimate_text_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let l = record_usage(TokenUsage::default(), &EventKind::AudioInChunk { tokens: 1000 });
        assert_eq!(l.audio_in, 1000);

        let delta = EventKind::ModelTextDelta {
            text: "hello".into(),
            tokens: 7,
        };
        let start = TokenUsage {
            text_out: 5,
            ..Default::default()
        };
        let l = (0..3).fold(start, |acc, _| record_usage(acc, &delta));
        assert_eq!(l.text_out, 26);

        assert_eq!(record_usage(l, &EventKind::UserSpeechStart), l);
    }

    fn token_event() -> impl Strategy<Value = EventKind> {
        prop_oneof![
            (0u64..5000).prop_map(|tokens| EventKind::AudioInChunk { tokens }),
            (0u64..500).prop_map(|tokens| EventKind::ModelTextDelta { text: "t".into(), tokens }),
            (0u64..500).prop_map(|tokens| EventKind::ModelAudioDelta { audio: vec![1, 2], tokens }),
            (0u64..2000).prop_map(|tokens| EventKind::VisionMessage {
                frame_id: "f1".into(),
                query: "q".into(),
                tokens
            }),
            (0u64..50).prop_map(|tokens| EventKind::ToolResultAck {
                call_id: "c".into(),
                ok: true,
                result: String::new(),
                tokens
            }),
            Just(EventKind::UserSpeechStart),
            Just(EventKind::ResponseDone { cancelled: false }),
        ]
    }

    proptest! {
        #[test]
        fn fold_is_permutation_invariant(events in prop::collection::vec(token_event(), 0..40), seed in any::<u64>()) {
            let forward = events.iter().fold(TokenUsage::default(), record_usage);
            let mut shuffled = events.clone();
            // deterministic Fisher-Yates driven by the seed
            let mut s = seed | 1;
            for i in (1..shuffled.len()).rev() {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                shuffled.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let permuted = shuffled.iter().fold(TokenUsage::default(), record_usage);
            prop_assert_eq!(forward, permuted);
        }
    }
}
