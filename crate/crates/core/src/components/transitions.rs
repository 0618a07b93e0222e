//! Built-in transitions.
//!
//! * [`ConcatTransition`] — appends reasoning text; terminal on an answer
//!   marker.
//! * [`SubQuestionTransition`] — answers each proposed sub-question with the
//!   model; terminal on the "Now we can answer" convention.
//! * [`EnvGroundedTransition`] — validates commands against the environment,
//!   asks the model to repair invalid ones within a retry budget, and
//!   records unrepairable actions as error steps (dead ends).
//! * [`ToolTransition`] — runs tool calls against the task's resource
//!   bundle; terminal on the finish action.

use std::sync::Arc;

use super::{extract_after_marker, CallContext, ComponentBase, Environment, Transition};
use crate::backends::GenerationRequest;
use crate::error::{Error, Result};
use crate::prompts::bindings;
use crate::structures::{Action, EnvStep, State, StateKind, Step, ToolStep};
use crate::tools::ResourceBundle;

/// Marker phrase whose presence in a step makes a reasoning trajectory
/// terminal, and after which the final answer is read.
pub const ANSWER_MARKER: &str = "the answer is";

/// Appends free-text reasoning steps; no model calls.
#[derive(Debug, Default)]
pub struct ConcatTransition;

pub const CONCAT_TRANSITION: &str = "concat_transition";

impl ConcatTransition {
    pub fn new() -> Self {
        ConcatTransition
    }
}

impl Transition for ConcatTransition {
    fn name(&self) -> &str {
        CONCAT_TRANSITION
    }

    fn state_kind(&self) -> StateKind {
        StateKind::Concat
    }

    fn init_state(&self, query: &str) -> Result<State> {
        Ok(State::new(
            StateKind::Concat,
            query,
            format!("Question: {query}"),
        ))
    }

    fn step(&self, state: &State, action: &Action, _ctx: &CallContext<'_>) -> Result<State> {
        Ok(state.child(Step::concat(action.clone())))
    }

    fn is_terminal(&self, state: &State) -> bool {
        state
            .last_step()
            .map(|s| s.action_text().to_lowercase().contains(ANSWER_MARKER))
            .unwrap_or(false)
    }

    fn extract_answer(&self, state: &State) -> Option<String> {
        state
            .steps()
            .iter()
            .rev()
            .find_map(|s| extract_after_marker(&s.action_text(), ANSWER_MARKER))
    }
}

/// Answers sub-questions with the model. Prompt slot: `answer`, bindings
/// `question`, `trajectory`, `sub_question`. Terminal once a sub-question
/// starts with "Now we can answer".
#[derive(Debug)]
pub struct SubQuestionTransition {
    base: ComponentBase,
}

pub const SUB_QUESTION_TRANSITION: &str = "sub_question_transition";

/// Prefix signalling the final decomposition step.
pub const FINAL_SUB_QUESTION_PREFIX: &str = "now we can answer";

impl SubQuestionTransition {
    pub fn new(base: ComponentBase) -> Self {
        SubQuestionTransition { base }
    }
}

impl Transition for SubQuestionTransition {
    fn name(&self) -> &str {
        SUB_QUESTION_TRANSITION
    }

    fn state_kind(&self) -> StateKind {
        StateKind::Trajectory
    }

    fn init_state(&self, query: &str) -> Result<State> {
        Ok(State::new(
            StateKind::Trajectory,
            query,
            format!("Question: {query}"),
        ))
    }

    fn step(&self, state: &State, action: &Action, ctx: &CallContext<'_>) -> Result<State> {
        let sub_question = match action {
            Action::SubQuestion { sub_question } => sub_question.clone(),
            // Tolerate plain-text proposals by treating them as the question.
            Action::Text { text } => text.clone(),
            other => {
                return Err(Error::Assembly(format!(
                    "sub-question transition got incompatible action '{}'",
                    other.signature()
                )));
            }
        };
        let prompt = self.base.render_prompt(
            "answer",
            &bindings(&[
                ("question", state.query()),
                ("trajectory", &state.render()),
                ("sub_question", &sub_question),
            ]),
        )?;
        let response = self.base.call(&GenerationRequest::new(prompt), ctx)?;
        let sub_answer = response
            .texts
            .first()
            .map(|t| t.trim().to_string())
            .unwrap_or_default();
        Ok(state.child(Step::sub_qa(sub_question, sub_answer)))
    }

    fn is_terminal(&self, state: &State) -> bool {
        match state.last_step() {
            Some(Step::SubQa(s)) => s
                .sub_question
                .to_lowercase()
                .starts_with(FINAL_SUB_QUESTION_PREFIX),
            _ => false,
        }
    }

    fn extract_answer(&self, state: &State) -> Option<String> {
        let Step::SubQa(last) = state.last_step()? else {
            return None;
        };
        extract_after_marker(&last.sub_answer, ANSWER_MARKER)
            .or_else(|| Some(last.sub_answer.trim().to_string()).filter(|s| !s.is_empty()))
    }
}

/// Executes environment commands with validation and model-driven repair.
///
/// An invalid command triggers up to `retry_budget` repair prompts (slot
/// `repair`, bindings `question`, `state`, `action`, `error`,
/// `valid_actions`); if none of the repairs validates, the step is recorded
/// with the original action and the error
/// `"Validation failed after {retry_budget} retries"`, and the state becomes
/// a terminal dead end.
pub struct EnvGroundedTransition {
    base: ComponentBase,
    env: Arc<dyn Environment>,
    retry_budget: usize,
}

pub const ENV_GROUNDED_TRANSITION: &str = "env_grounded_transition";

impl EnvGroundedTransition {
    pub fn new(base: ComponentBase, env: Arc<dyn Environment>) -> Self {
        EnvGroundedTransition {
            base,
            env,
            retry_budget: 1,
        }
    }

    pub fn with_retry_budget(mut self, retry_budget: usize) -> Self {
        self.retry_budget = retry_budget;
        self
    }

    pub fn environment(&self) -> &Arc<dyn Environment> {
        &self.env
    }
}

impl std::fmt::Debug for EnvGroundedTransition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnvGroundedTransition")
            .field("env", &self.env.name())
            .field("retry_budget", &self.retry_budget)
            .finish_non_exhaustive()
    }
}

impl Transition for EnvGroundedTransition {
    fn name(&self) -> &str {
        ENV_GROUNDED_TRANSITION
    }

    fn state_kind(&self) -> StateKind {
        StateKind::Env
    }

    fn init_state(&self, query: &str) -> Result<State> {
        Ok(State::new(
            StateKind::Env,
            query,
            self.env.init_render(query)?,
        ))
    }

    fn step(&self, state: &State, action: &Action, ctx: &CallContext<'_>) -> Result<State> {
        let original = action.signature();
        let mut command = original.clone();
        let mut last_error;
        match self.env.apply(state, &command) {
            Ok(next_render) => {
                return Ok(state.child(Step::Env(EnvStep::executed(
                    Action::env(command),
                    next_render,
                ))));
            }
            Err(e) => last_error = e,
        }
        for _ in 0..self.retry_budget {
            let valid = self.env.action_space(state).render();
            let prompt = self.base.render_prompt(
                "repair",
                &bindings(&[
                    ("question", state.query()),
                    ("state", state.current_env_render()),
                    ("action", &command),
                    ("error", &last_error),
                    ("valid_actions", &valid),
                ]),
            )?;
            let response = self.base.call(&GenerationRequest::new(prompt), ctx)?;
            let repaired = response
                .texts
                .first()
                .and_then(|t| t.lines().map(str::trim).find(|l| !l.is_empty()))
                .unwrap_or("")
                .to_string();
            if repaired.is_empty() {
                continue;
            }
            command = repaired;
            match self.env.apply(state, &command) {
                Ok(next_render) => {
                    return Ok(state.child(Step::Env(EnvStep::executed(
                        Action::env(command),
                        next_render,
                    ))));
                }
                Err(e) => last_error = e,
            }
        }
        log::warn!(
            "invalid action '{original}' not repaired within {} retries: {last_error}",
            self.retry_budget
        );
        Ok(state.child(Step::Env(EnvStep::failed(
            Action::env(original),
            format!("Validation failed after {} retries", self.retry_budget),
        ))))
    }

    fn is_terminal(&self, state: &State) -> bool {
        if state
            .last_step()
            .map(|s| s.error().is_some())
            .unwrap_or(false)
        {
            return true;
        }
        self.env.is_goal(state)
    }

    fn extract_answer(&self, state: &State) -> Option<String> {
        if self.env.is_goal(state) {
            self.env.answer(state)
        } else {
            None
        }
    }
}

/// Runs tool calls against the resource bundle; problems come back as
/// observations, and the finish action terminates the episode.
#[derive(Debug)]
pub struct ToolTransition {
    tools: ResourceBundle,
}

pub const TOOL_TRANSITION: &str = "tool_use_transition";

impl ToolTransition {
    pub fn new(tools: ResourceBundle) -> Self {
        ToolTransition { tools }
    }
}

impl Transition for ToolTransition {
    fn name(&self) -> &str {
        TOOL_TRANSITION
    }

    fn state_kind(&self) -> StateKind {
        StateKind::Tool
    }

    fn init_state(&self, query: &str) -> Result<State> {
        Ok(State::new(
            StateKind::Tool,
            query,
            format!("Question: {query}"),
        ))
    }

    fn step(&self, state: &State, action: &Action, _ctx: &CallContext<'_>) -> Result<State> {
        let Action::Tool(tool_action) = action else {
            return Err(Error::Assembly(format!(
                "tool transition got incompatible action '{}'",
                action.signature()
            )));
        };
        let observation = if tool_action.is_finish {
            None
        } else {
            Some(self.tools.run_tool(tool_action))
        };
        Ok(state.child(Step::Tool(ToolStep {
            action: tool_action.clone(),
            observation,
        })))
    }

    fn is_terminal(&self, state: &State) -> bool {
        match state.last_step() {
            Some(Step::Tool(s)) => s.action.is_finish,
            _ => false,
        }
    }

    fn extract_answer(&self, state: &State) -> Option<String> {
        state.steps().iter().rev().find_map(|s| match s {
            Step::Tool(t) if t.action.is_finish => t.action.answer(),
            _ => None,
        })
    }
}
