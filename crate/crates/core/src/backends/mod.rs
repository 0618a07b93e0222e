//! Text-generation backends.
//!
//! A [`Backend`] turns one prompt into `n` sampled completions plus token
//! usage. Two implementations ship: a deterministic scripted backend for
//! tests and offline runs ([`ScriptedBackend`]), and an OpenAI-compatible
//! chat-completions HTTP client ([`HttpBackend`]). Components never talk to
//! a backend directly for temperature policy; they drive a
//! [`TemperatureSchedule`] that escalates when sampling keeps returning
//! duplicates.

mod http;
mod scripted;

pub use http::{HttpBackend, HttpBackendConfig};
pub use scripted::{ScriptedBackend, ScriptedBackendBuilder};

use crate::error::Result;

/// One generation call.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    /// User-turn content.
    pub prompt: String,
    /// Optional system-turn content.
    pub system: Option<String>,
    /// Number of samples to draw.
    pub n: usize,
    /// Sampling temperature.
    pub temperature: f64,
    /// Completion token cap, when the caller wants one.
    pub max_tokens: Option<u32>,
    /// Stop sequences.
    pub stop: Vec<String>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            system: None,
            n: 1,
            temperature: TemperatureSchedule::BASE,
            max_tokens: None,
            stop: Vec::new(),
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_system(mut self, system: impl Into<String>) -> Self {
        self.system = Some(system.into());
        self
    }
}

/// Token accounting for one call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

impl std::ops::Add for Usage {
    type Output = Usage;
    fn add(self, rhs: Usage) -> Usage {
        Usage {
            prompt_tokens: self.prompt_tokens + rhs.prompt_tokens,
            completion_tokens: self.completion_tokens + rhs.completion_tokens,
        }
    }
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        *self = *self + rhs;
    }
}

/// Samples returned by one generation call.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResponse {
    pub texts: Vec<String>,
    pub usage: Usage,
    /// Model that actually served the call.
    pub model: String,
}

/// A text-generation engine. Implementations must be shareable across
/// threads; per-call state stays in the request.
pub trait Backend: Send + Sync {
    /// Draw `request.n` completions.
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse>;

    /// Short backend identifier (`"mock"`, `"http"`).
    fn name(&self) -> &str;

    /// Model name reported when the response does not carry one.
    fn default_model(&self) -> &str;
}

/// Sampling-temperature ladder: start at a base temperature and climb one
/// step each time the caller reports that sampling produced duplicates,
/// saturating at a maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureSchedule {
    base: f64,
    step: f64,
    max: f64,
    current: f64,
}

impl TemperatureSchedule {
    pub const BASE: f64 = 0.8;
    pub const STEP: f64 = 0.2;
    pub const MAX: f64 = 1.2;

    pub fn new(base: f64, step: f64, max: f64) -> Self {
        TemperatureSchedule {
            base,
            step,
            max,
            current: base,
        }
    }

    /// The standard ladder: 0.8 base, +0.2 per escalation, 1.2 cap.
    pub fn standard() -> Self {
        Self::new(Self::BASE, Self::STEP, Self::MAX)
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    /// Report a duplicate sample; returns the temperature to use next.
    pub fn escalate_on_duplicate(&mut self) -> f64 {
        self.current = (self.current + self.step).min(self.max);
        self.current
    }

    /// Back to the base temperature (e.g. when moving to a new node).
    pub fn reset(&mut self) {
        self.current = self.base;
    }
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        Self::standard()
    }
}

/// Whitespace token count used by the scripted backend's usage accounting.
pub fn approx_token_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// 64-bit FNV-1a fingerprint, used to identify unscripted prompts in error
/// messages without dumping the whole prompt.
pub fn fnv1a64(text: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temperature_ladder_escalates_and_saturates() {
        let mut t = TemperatureSchedule::standard();
        assert!((t.current() - 0.8).abs() < 1e-12);
        assert!((t.escalate_on_duplicate() - 1.0).abs() < 1e-12);
        assert!((t.escalate_on_duplicate() - 1.2).abs() < 1e-12);
        // Saturates at the cap.
        assert!((t.escalate_on_duplicate() - 1.2).abs() < 1e-12);
        t.reset();
        assert!((t.current() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn fnv1a64_known_vectors() {
        // Standard FNV-1a test vectors.
        assert_eq!(fnv1a64(""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64("a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64("foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn approx_token_count_splits_on_whitespace() {
        assert_eq!(approx_token_count(""), 0);
        assert_eq!(approx_token_count("one  two\nthree"), 3);
    }
}
