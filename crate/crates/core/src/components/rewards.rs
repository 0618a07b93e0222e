//! Built-in reward models.
//!
//! * [`GenerativePrm`] — a model-as-judge process reward: show the judge the
//!   trajectory, parse a numeric verdict.
//! * [`EnvGroundedReward`] — environment progress signal, no model calls.
//! * [`CompletionJudgeReward`] — completes an unfinished trajectory first,
//!   then judges the completed result; the reward style used by
//!   trajectory-level tool-use search.

use std::sync::Arc;

use super::{
    parse_judge_score, CallContext, ComponentBase, Environment, RewardModel, Transition,
};
use crate::backends::GenerationRequest;
use crate::error::Result;
use crate::observability::Phase;
use crate::prompts::bindings;
use crate::structures::State;

/// Model-as-judge process reward. Prompt slot: `judge`, bindings `question`,
/// `trajectory`. Calls are always accounted under the `judge` phase, no
/// matter where in the search loop scoring happens. An unparseable verdict
/// scores 0 (logged), so a broken judge reads as "no signal", not "great".
#[derive(Debug)]
pub struct GenerativePrm {
    base: ComponentBase,
}

pub const GENERATIVE_PRM: &str = "generative_prm";

impl GenerativePrm {
    pub fn new(base: ComponentBase) -> Self {
        GenerativePrm { base }
    }
}

impl RewardModel for GenerativePrm {
    fn name(&self) -> &str {
        GENERATIVE_PRM
    }

    fn score(&self, state: &State, ctx: &CallContext<'_>) -> Result<f64> {
        let prompt = self.base.render_prompt(
            "judge",
            &bindings(&[
                ("question", state.query()),
                ("trajectory", &state.render()),
            ]),
        )?;
        let judge_ctx = ctx.with_phase(Phase::Judge);
        let response = self.base.call(&GenerationRequest::new(prompt), &judge_ctx)?;
        let text = response.texts.first().map(String::as_str).unwrap_or("");
        match parse_judge_score(text) {
            Some(score) => Ok(score),
            None => {
                log::warn!(
                    "judge '{}' returned no parseable score; treating as 0: {text:?}",
                    self.base.instance()
                );
                Ok(0.0)
            }
        }
    }
}

/// Environment progress as reward: error dead ends score 0, otherwise the
/// environment's progress signal (goal = 1).
pub struct EnvGroundedReward {
    env: Arc<dyn Environment>,
}

pub const ENV_GROUNDED_REWARD: &str = "env_grounded_reward";

impl EnvGroundedReward {
    pub fn new(env: Arc<dyn Environment>) -> Self {
        EnvGroundedReward { env }
    }
}

impl std::fmt::Debug for EnvGroundedReward {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnvGroundedReward")
            .field("env", &self.env.name())
            .finish()
    }
}

impl RewardModel for EnvGroundedReward {
    fn name(&self) -> &str {
        ENV_GROUNDED_REWARD
    }

    fn score(&self, state: &State, _ctx: &CallContext<'_>) -> Result<f64> {
        if state
            .last_step()
            .map(|s| s.error().is_some())
            .unwrap_or(false)
        {
            return Ok(0.0);
        }
        Ok(self.env.progress(state).clamp(0.0, 1.0))
    }
}

/// Trajectory-completion judge: a state that hasn't finished is first
/// completed by the model (prompt slot `complete`), then the (possibly
/// completed) trajectory is judged (slot `judge`). Both calls are accounted
/// under the `judge` phase. Bindings: `question`, `trajectory`.
pub struct CompletionJudgeReward {
    base: ComponentBase,
    /// Used to decide whether the state still needs completing.
    transition: Arc<dyn Transition>,
}

impl std::fmt::Debug for CompletionJudgeReward {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompletionJudgeReward")
            .field("transition", &self.transition.name())
            .finish_non_exhaustive()
    }
}

pub const COMPLETION_JUDGE_REWARD: &str = "completion_judge_reward";

impl CompletionJudgeReward {
    pub fn new(base: ComponentBase, transition: Arc<dyn Transition>) -> Self {
        CompletionJudgeReward { base, transition }
    }
}

impl RewardModel for CompletionJudgeReward {
    fn name(&self) -> &str {
        COMPLETION_JUDGE_REWARD
    }

    fn score(&self, state: &State, ctx: &CallContext<'_>) -> Result<f64> {
        let judge_ctx = ctx.with_phase(Phase::Judge);
        let mut trajectory = state.render();
        if !self.transition.is_terminal(state) {
            let prompt = self.base.render_prompt(
                "complete",
                &bindings(&[("question", state.query()), ("trajectory", &trajectory)]),
            )?;
            let response = self.base.call(&GenerationRequest::new(prompt), &judge_ctx)?;
            if let Some(completion) = response.texts.first() {
                if !completion.trim().is_empty() {
                    trajectory.push('\n');
                    trajectory.push_str(completion.trim());
                }
            }
        }
        let prompt = self.base.render_prompt(
            "judge",
            &bindings(&[("question", state.query()), ("trajectory", &trajectory)]),
        )?;
        let response = self.base.call(&GenerationRequest::new(prompt), &judge_ctx)?;
        let text = response.texts.first().map(String::as_str).unwrap_or("");
        Ok(parse_judge_score(text).unwrap_or_else(|| {
            log::warn!(
                "completion judge '{}' returned no parseable score; treating as 0",
                self.base.instance()
            );
            0.0
        }))
    }
}
