//! Deterministic closure-driven components for exercising engines without
//! a backend. Hidden from docs: this is test scaffolding, not part of the
//! supported component surface, but integration tests and downstream
//! experiments may use it to script exact search shapes.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::components::{CallContext, Policy, RewardModel, Transition};
use crate::error::Result;
use crate::structures::{Action, State, StateKind, Step};

/// Policy driven by a closure from (state, width) to proposals. Counts
/// invocations.
pub struct FnPolicy<F> {
    name: String,
    f: F,
    calls: AtomicU64,
}

impl<F> FnPolicy<F>
where
    F: Fn(&State, usize) -> Result<Vec<Action>> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnPolicy {
            name: name.into(),
            f,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> Policy for FnPolicy<F>
where
    F: Fn(&State, usize) -> Result<Vec<Action>> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn propose(&self, state: &State, n: usize, _ctx: &CallContext<'_>) -> Result<Vec<Action>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(state, n)
    }
}

/// Transition appending plain concat steps, with closure-defined terminal
/// and answer rules. The trajectory text (see [`path_text`]) is the usual
/// key for scripting both.
pub struct FnTransition<T, A> {
    name: String,
    kind: StateKind,
    terminal: T,
    answer: A,
}

impl<T, A> FnTransition<T, A>
where
    T: Fn(&State) -> bool + Send + Sync,
    A: Fn(&State) -> Option<String> + Send + Sync,
{
    pub fn new(name: impl Into<String>, terminal: T, answer: A) -> Self {
        FnTransition {
            name: name.into(),
            kind: StateKind::Trajectory,
            terminal,
            answer,
        }
    }
}

impl<T, A> Transition for FnTransition<T, A>
where
    T: Fn(&State) -> bool + Send + Sync,
    A: Fn(&State) -> Option<String> + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn state_kind(&self) -> StateKind {
        self.kind
    }

    fn init_state(&self, query: &str) -> Result<State> {
        Ok(State::new(self.kind, query, ""))
    }

    fn step(&self, state: &State, action: &Action, _ctx: &CallContext<'_>) -> Result<State> {
        Ok(state.child(Step::concat(action.clone())))
    }

    fn is_terminal(&self, state: &State) -> bool {
        (self.terminal)(state)
    }

    fn extract_answer(&self, state: &State) -> Option<String> {
        (self.answer)(state)
    }
}

/// Reward model driven by a closure over the state. Counts invocations.
pub struct FnReward<F> {
    name: String,
    f: F,
    calls: AtomicU64,
}

impl<F> FnReward<F>
where
    F: Fn(&State) -> f64 + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnReward {
            name: name.into(),
            f,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> RewardModel for FnReward<F>
where
    F: Fn(&State) -> f64 + Send + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, state: &State, _ctx: &CallContext<'_>) -> Result<f64> {
        Ok((self.f)(state))
    }
}

/// Concatenated action texts of a trajectory, e.g. `"LRL"` after steps
/// `L`, `R`, `L`. The standard key for scripting toy domains.
pub fn path_text(state: &State) -> String {
    state
        .steps()
        .iter()
        .map(|step| step.action_text())
        .collect()
}

/// Proposals that append each of `labels` to the current path, truncated to
/// the requested width.
pub fn label_actions(labels: &[&str], width: usize) -> Vec<Action> {
    labels
        .iter()
        .take(width)
        .map(|label| Action::text(*label))
        .collect()
}
