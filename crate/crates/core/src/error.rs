//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by registries, serialization, backends and search drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate type tag '{0}'")]
    DuplicateTag(String),

    #[error("unknown type tag '{tag}' at {path}")]
    UnknownTag { tag: String, path: String },

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("duplicate registration for {kind} '{name}' (already registered)")]
    DuplicateEntry { kind: String, name: String },

    #[error("no {kind} registered under '{name}'; registered names: [{available}]")]
    NotFound {
        kind: String,
        name: String,
        available: String,
    },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("duplicate prompt registration for {0}")]
    DuplicatePrompt(String),

    #[error("no prompt registered for {0}")]
    MissingPrompt(String),

    #[error("missing binding '{0}'")]
    MissingBinding(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("no scripted response for prompt (hash {0})")]
    ScriptMiss(String),

    #[error("policy produced no parseable actions for component '{0}'")]
    EmptyPolicy(String),

    #[error("no terminal answers to aggregate")]
    NoAnswer,

    #[error("cannot resume: {0}")]
    Resume(String),

    #[error("no price registered for model '{0}'")]
    UnpricedModel(String),

    #[error("empty record log")]
    EmptyLog,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
