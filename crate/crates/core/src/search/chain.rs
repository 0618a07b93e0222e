//! Linear (chain) execution: one action per step, no tree, no reward
//! model. Shares the Policy/Transition contracts with tree search, so ReAct
//! and environment chains are just component choices.

use std::time::{Duration, Instant};

use crate::components::{CallContext, Policy, SamplingCounters, Transition};
use crate::error::Result;
use crate::observability::Phase;
use crate::structures::State;

use super::SearchConfig;

/// A finished (or stopped) chain episode.
#[derive(Debug, Clone)]
pub struct ChainOutcome {
    /// The final trajectory state.
    pub state: State,
    /// Whether the transition declared the trajectory terminal. An episode
    /// stopped by the step limit or deadline is unfinished, not an error.
    pub finished: bool,
    /// Answer extracted from the final state, if any.
    pub answer: Option<String>,
    /// Steps taken across the whole trajectory (including resumed ones).
    pub steps: usize,
    pub timed_out: bool,
    /// `Policy::propose` calls made in this invocation.
    pub policy_invocations: u64,
}

/// Step-wise callback invoked with the trajectory after initialization and
/// after every step (checkpointing).
pub type StepSink<'a> = dyn FnMut(&State, usize) -> Result<()> + 'a;

/// Runs a chain episode for `query` until terminal, the `max_depth` step
/// limit, or the runtime deadline.
///
/// `resume_from` continues a previously checkpointed trajectory instead of
/// initializing a fresh one. A policy failure on the very first step
/// surfaces as `Err`; an empty proposal ends the episode unfinished.
pub fn run_chain(
    policy: &dyn Policy,
    transition: &dyn Transition,
    config: &SearchConfig,
    query: &str,
    query_index: Option<usize>,
    counters: Option<&SamplingCounters>,
    mut sink: Option<&mut StepSink<'_>>,
    resume_from: Option<State>,
) -> Result<ChainOutcome> {
    config.validate()?;
    let deadline = config
        .runtime_limit_s
        .map(|secs| Instant::now() + Duration::from_secs_f64(secs));
    let mut state = match resume_from {
        Some(state) => state,
        None => transition.init_state(query)?,
    };
    if let Some(sink) = sink.as_mut() {
        sink(&state, state.steps().len())?;
    }
    let started_steps = state.steps().len();
    let mut timed_out = false;
    let mut policy_invocations = 0u64;
    loop {
        if transition.is_terminal(&state) {
            break;
        }
        let steps = state.steps().len();
        if steps >= config.max_depth {
            log::warn!("chain hit the {} step limit; stopping unfinished", config.max_depth);
            break;
        }
        if let Some(deadline) = deadline {
            if Instant::now() >= deadline {
                timed_out = true;
                log::warn!("chain hit the runtime limit; stopping unfinished");
                break;
            }
        }
        let mut ctx = CallContext::new(Phase::ChainStep)
            .with_query_index(query_index)
            .with_iteration(steps)
            .with_depth(steps);
        if let Some(counters) = counters {
            ctx = ctx.with_counters(counters);
        }
        policy_invocations += 1;
        let actions = match policy.propose(&state, 1, &ctx) {
            Ok(actions) => actions,
            // Nothing useful exists yet on a first-step failure; later the
            // partial trajectory is still worth returning.
            Err(err) if state.steps().len() > started_steps => {
                log::warn!("policy '{}' failed mid-chain: {err}; stopping", policy.name());
                break;
            }
            Err(err) => return Err(err),
        };
        let Some(action) = actions.first() else {
            log::warn!("policy '{}' proposed nothing; stopping unfinished", policy.name());
            break;
        };
        state = transition.step(&state, action, &ctx)?;
        if let Some(sink) = sink.as_mut() {
            sink(&state, state.steps().len())?;
        }
    }
    let finished = transition.is_terminal(&state);
    let answer = transition.extract_answer(&state);
    let steps = state.steps().len();
    Ok(ChainOutcome {
        state,
        finished,
        answer,
        steps,
        timed_out,
        policy_invocations,
    })
}
