//! Deterministic backend for tests and offline runs.
//!
//! Responses are scripted as ordered match rules: the first rule whose
//! pattern matches the prompt serves the call. Each rule carries a response
//! sequence; consecutive hits advance through the sequence and stick at the
//! last entry. A prompt no rule matches falls back to the default response,
//! or errors with a stable fingerprint of the offending prompt so the
//! missing script line is easy to find.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use super::{approx_token_count, fnv1a64, Backend, GenerationRequest, GenerationResponse, Usage};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
enum Pattern {
    Exact(String),
    Contains(String),
}

impl Pattern {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            Pattern::Exact(p) => prompt == p,
            Pattern::Contains(s) => prompt.contains(s),
        }
    }
}

#[derive(Debug)]
struct Rule {
    pattern: Pattern,
    responses: Vec<String>,
    cursor: AtomicUsize,
}

impl Rule {
    /// Next response for this rule; advances the cursor, sticking at the
    /// final entry once the sequence is exhausted.
    fn next_response(&self) -> &str {
        let i = self.cursor.fetch_add(1, Ordering::Relaxed);
        &self.responses[i.min(self.responses.len() - 1)]
    }
}

/// Deterministic scripted backend. Construct via [`ScriptedBackend::builder`].
#[derive(Debug)]
pub struct ScriptedBackend {
    rules: Vec<Rule>,
    default_response: Option<String>,
    model: String,
    hits: AtomicU64,
    misses: AtomicU64,
}

/// Builder for [`ScriptedBackend`]. Rule order is match priority.
#[derive(Debug, Default)]
pub struct ScriptedBackendBuilder {
    rules: Vec<Rule>,
    default_response: Option<String>,
    model: Option<String>,
}

impl ScriptedBackendBuilder {
    /// Serve `response` whenever the prompt equals `prompt` exactly.
    pub fn on_exact(mut self, prompt: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push(Rule {
            pattern: Pattern::Exact(prompt.into()),
            responses: vec![response.into()],
            cursor: AtomicUsize::new(0),
        });
        self
    }

    /// Serve `response` whenever the prompt contains `marker`.
    pub fn on_contains(mut self, marker: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push(Rule {
            pattern: Pattern::Contains(marker.into()),
            responses: vec![response.into()],
            cursor: AtomicUsize::new(0),
        });
        self
    }

    /// Serve the responses in order on consecutive hits, sticking at the
    /// last. Panics on an empty sequence (a scripted rule with nothing to
    /// say is a test bug).
    pub fn on_contains_seq<I, S>(mut self, marker: impl Into<String>, responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let responses: Vec<String> = responses.into_iter().map(Into::into).collect();
        assert!(!responses.is_empty(), "scripted rule needs at least one response");
        self.rules.push(Rule {
            pattern: Pattern::Contains(marker.into()),
            responses,
            cursor: AtomicUsize::new(0),
        });
        self
    }

    /// Response served when no rule matches (instead of erroring).
    pub fn with_default(mut self, response: impl Into<String>) -> Self {
        self.default_response = Some(response.into());
        self
    }

    /// Model name reported in responses (default `"scripted"`).
    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }

    pub fn build(self) -> ScriptedBackend {
        ScriptedBackend {
            rules: self.rules,
            default_response: self.default_response,
            model: self.model.unwrap_or_else(|| "scripted".to_string()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }
}

impl ScriptedBackend {
    pub fn builder() -> ScriptedBackendBuilder {
        ScriptedBackendBuilder::default()
    }

    /// Backend that answers every prompt the same way.
    pub fn always(response: impl Into<String>) -> Self {
        Self::builder().with_default(response).build()
    }

    /// Number of calls served by a rule or the default.
    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    /// Number of calls that found no rule (served by default or errored).
    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    fn response_for(&self, prompt: &str) -> Result<String> {
        for rule in &self.rules {
            if rule.pattern.matches(prompt) {
                return Ok(rule.next_response().to_string());
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        match &self.default_response {
            Some(d) => Ok(d.clone()),
            None => Err(Error::ScriptMiss(format!("{:016x}", fnv1a64(prompt)))),
        }
    }
}

impl Backend for ScriptedBackend {
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResponse> {
        let mut texts = Vec::with_capacity(request.n);
        for _ in 0..request.n.max(1) {
            texts.push(self.response_for(&request.prompt)?);
        }
        self.hits.fetch_add(1, Ordering::Relaxed);
        let prompt_tokens = approx_token_count(&request.prompt)
            + request
                .system
                .as_deref()
                .map(approx_token_count)
                .unwrap_or(0);
        let completion_tokens = texts.iter().map(|t| approx_token_count(t)).sum();
        Ok(GenerationResponse {
            texts,
            usage: Usage {
                prompt_tokens,
                completion_tokens,
            },
            model: self.model.clone(),
        })
    }

    fn name(&self) -> &str {
        "mock"
    }

    fn default_model(&self) -> &str {
        &self.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_matching_rule_wins() {
        let b = ScriptedBackend::builder()
            .on_contains("alpha", "first")
            .on_contains("alph", "second")
            .build();
        let r = b.generate(&GenerationRequest::new("say alpha")).unwrap();
        assert_eq!(r.texts, vec!["first"]);
    }

    #[test]
    fn exact_rule_requires_full_match() {
        let b = ScriptedBackend::builder()
            .on_exact("hello", "hi")
            .with_default("fallback")
            .build();
        assert_eq!(
            b.generate(&GenerationRequest::new("hello")).unwrap().texts,
            vec!["hi"]
        );
        assert_eq!(
            b.generate(&GenerationRequest::new("hello there"))
                .unwrap()
                .texts,
            vec!["fallback"]
        );
    }

    #[test]
    fn sequence_advances_then_sticks() {
        let b = ScriptedBackend::builder()
            .on_contains_seq("q", ["one", "two"])
            .build();
        let req = GenerationRequest::new("q");
        assert_eq!(b.generate(&req).unwrap().texts, vec!["one"]);
        assert_eq!(b.generate(&req).unwrap().texts, vec!["two"]);
        assert_eq!(b.generate(&req).unwrap().texts, vec!["two"]);
    }

    #[test]
    fn n_samples_draw_sequentially_from_one_rule() {
        let b = ScriptedBackend::builder()
            .on_contains_seq("q", ["one", "two", "three"])
            .build();
        let r = b.generate(&GenerationRequest::new("q").with_n(2)).unwrap();
        assert_eq!(r.texts, vec!["one", "two"]);
        // Next call continues where sampling left off.
        let r = b.generate(&GenerationRequest::new("q").with_n(2)).unwrap();
        assert_eq!(r.texts, vec!["three", "three"]);
    }

    #[test]
    fn miss_without_default_errors_with_fingerprint() {
        let b = ScriptedBackend::builder().on_contains("known", "ok").build();
        let err = b.generate(&GenerationRequest::new("surprise")).unwrap_err();
        let expected = format!("{:016x}", fnv1a64("surprise"));
        match err {
            Error::ScriptMiss(fp) => assert_eq!(fp, expected),
            other => panic!("expected ScriptMiss, got {other}"),
        }
        assert_eq!(b.misses(), 1);
        assert_eq!(b.hits(), 0);
    }

    #[test]
    fn usage_counts_whitespace_tokens() {
        let b = ScriptedBackend::always("two words");
        let r = b
            .generate(
                &GenerationRequest::new("a b c")
                    .with_system("sys line")
                    .with_n(2),
            )
            .unwrap();
        assert_eq!(r.usage.prompt_tokens, 5); // 3 prompt + 2 system
        assert_eq!(r.usage.completion_tokens, 4); // 2 words x 2 samples
        assert_eq!(r.usage.total(), 9);
    }
}
