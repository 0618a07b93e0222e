//! Composable LLM-guided tree search.
//!
//! The crate separates *what the model does* from *how the search walks the
//! tree*: policies propose actions, transitions execute them into new states,
//! and reward models score the results. Search engines (MCTS, beam-pruned
//! BFS, linear chains) consume those three interfaces, so a task formulation
//! written once runs under every engine. Component wiring goes through a
//! registry with named factories and framework bundles; prompts resolve
//! through a task-aware fallback chain; every LLM call is metered by
//! component, instance and search phase; and runs persist checkpoints that
//! can be resumed or re-evaluated offline.

pub mod backends;
pub mod components;
pub mod domains;
pub mod error;
pub mod observability;
pub mod persistence;
pub mod prompts;
pub mod registry;
pub mod runner;
pub mod search;
pub mod structures;
#[doc(hidden)]
pub mod testkit;
pub mod tools;

pub use error::{Error, Result};
