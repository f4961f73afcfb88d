//! Token pricing with exact integer arithmetic.
//!
//! Rates are held in micro-dollars per million tokens, so a token count
//! times a rate is an exact amount in pico-dollars. Rounding to cents only
//! happens when a cost is presented.

use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::session::TokenUsage;

const MICROS_PER_DOLLAR: f64 = 1e6;
const PICOS_PER_CENT: u128 = 10_000_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateError {
    #[error("rate {0} must be finite and non-negative")]
    Negative(f64),
    #[error("rate {0} has more than six decimal places")]
    TooPrecise(f64),
    #[error("cannot parse rate card: {0}")]
    Parse(String),
}

/// A price in whole micro-dollars per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rate(u64);

impl Rate {
    pub fn from_micros(micros: u64) -> Self {
        Rate(micros)
    }

    pub fn from_dollars(dollars: f64) -> Result<Self, RateError> {
        if !dollars.is_finite() || dollars < 0.0 {
            return Err(RateError::Negative(dollars));
        }
        let micros = (dollars * MICROS_PER_DOLLAR).round();
        if (micros / MICROS_PER_DOLLAR - dollars).abs() > 1e-9 * dollars.max(1.0) {
            return Err(RateError::TooPrecise(dollars));
        }
        Ok(Rate(micros as u64))
    }

    pub fn micros(self) -> u64 {
        self.0
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / MICROS_PER_DOLLAR
    }
}

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.dollars())
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        Rate::from_dollars(v).map_err(serde::de::Error::custom)
    }
}

/// Prices per modality, in dollars per million tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateCard {
    pub name: String,
    pub text_in: Rate,
    pub audio_in: Rate,
    pub image_in: Rate,
    pub text_out: Rate,
    pub audio_out: Rate,
}

impl RateCard {
    pub fn from_json(text: &str) -> Result<Self, RateError> {
        serde_json::from_str(text).map_err(|e| RateError::Parse(e.to_string()))
    }
}

/// An exact amount in pico-dollars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Cost {
    pub picodollars: u128,
}

impl Cost {
    /// Whole cents, rounding half to even.
    pub fn cents(self) -> u128 {
        let q = self.picodollars / PICOS_PER_CENT;
        let r = self.picodollars % PICOS_PER_CENT;
        let half = PICOS_PER_CENT / 2;
        if r > half || (r == half && q % 2 == 1) {
            q + 1
        } else {
            q
        }
    }

    pub fn dollars(self) -> f64 {
        self.picodollars as f64 / 1e12
    }
}

impl Add for Cost {
    type Output = Cost;

    fn add(self, rhs: Cost) -> Cost {
        Cost {
            picodollars: self.picodollars + rhs.picodollars,
        }
    }
}

impl AddAssign for Cost {
    fn add_assign(&mut self, rhs: Cost) {
        self.picodollars += rhs.picodollars;
    }
}

impl std::iter::Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Self {
        iter.fold(Cost::default(), Add::add)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.cents();
        write!(f, "${}.{:02}", c / 100, c % 100)
    }
}

/// Sum over modalities of tokens times rate.
pub fn estimate_cost(usage: &TokenUsage, rates: &RateCard) -> Cost {
    let term = |tokens: u64, rate: Rate| u128::from(tokens) * u128::from(rate.micros());
    Cost {
        picodollars: term(usage.text_in, rates.text_in)
            + term(usage.audio_in, rates.audio_in)
            + term(usage.image_in, rates.image_in)
            + term(usage.text_out, rates.text_out)
            + term(usage.audio_out, rates.audio_out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::bundled;
    use proptest::prelude::*;

    #[test]
    fn rate_card_examples() {
        let openai = bundled::rate_card("openai").unwrap();
        let gemini = bundled::rate_card("gemini").unwrap();
        let usage = |audio_in, text_out, audio_out| TokenUsage {
            audio_in,
            text_out,
            audio_out,
            ..Default::default()
        };
        assert_eq!(estimate_cost(&usage(1_000_000, 0, 0), &openai).to_string(), "$32.00");
        assert_eq!(estimate_cost(&usage(100_000, 10_000, 0), &openai).to_string(), "$3.36");
        assert_eq!(estimate_cost(&usage(100_000, 0, 10_000), &gemini).to_string(), "$0.42");
    }

    #[test]
    fn half_cent_rounds_to_even() {
        let c = |p| Cost { picodollars: p };
        assert_eq!(c(5 * PICOS_PER_CENT / 10).cents(), 0);
        assert_eq!(c(15 * PICOS_PER_CENT / 10).cents(), 2);
        assert_eq!(c(25 * PICOS_PER_CENT / 10).cents(), 2);
        assert_eq!(c(25 * PICOS_PER_CENT / 10 + 1).cents(), 3);
    }

    #[test]
    fn rates_reject_bad_values() {
        assert!(Rate::from_dollars(-1.0).is_err());
        assert!(Rate::from_dollars(f64::NAN).is_err());
        assert!(Rate::from_dollars(0.1234567).is_err());
        assert_eq!(Rate::from_dollars(0.3).unwrap().micros(), 300_000);
    }

    fn usage() -> impl Strategy<Value = TokenUsage> {
        (0u64..1 << 40, 0u64..1 << 40, 0u64..1 << 40, 0u64..1 << 40, 0u64..1 << 40).prop_map(
            |(text_in, audio_in, image_in, text_out, audio_out)| TokenUsage {
                text_in,
                audio_in,
                image_in,
                text_out,
                audio_out,
            },
        )
    }

    proptest! {
        #[test]
        fn cost_is_linear(a in usage(), b in usage()) {
            for card in bundled::rate_cards() {
                prop_assert_eq!(estimate_cost(&(a + b), &card), estimate_cost(&a, &card) + estimate_cost(&b, &card));
            }
        }
    }
}
