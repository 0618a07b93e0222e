//! Chain-in-tree gating: decide per expansion whether a state deserves
//! full branching or a single chained continuation.

use std::sync::Arc;

use crate::components::{CallContext, RewardModel};
use crate::error::Result;
use crate::structures::State;

/// What the gate decided for one expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    /// Propose the full `n_actions` children.
    Branch,
    /// Propose exactly one child (chained continuation).
    Chain,
}

/// Scores how much a state needs branching, in `[0, 1]`. Higher means more
/// ambiguity and therefore more benefit from exploring alternatives.
pub trait BranchEvaluator: Send + Sync {
    fn name(&self) -> &str;

    fn evaluate(&self, state: &State, ctx: &CallContext<'_>) -> Result<f64>;
}

/// Branching decision for one expansion.
///
/// * `bn_threshold <= 0` forces [`GateDecision::Chain`] everywhere — the
///   degenerate linear mode; the evaluator is never consulted.
/// * With no evaluator the gate always branches (plain tree search).
/// * Otherwise branch iff the evaluator's score reaches the threshold. An
///   evaluator failure logs a warning and fails open to branching, the
///   conservative choice: wasted width costs compute, a wrongly forced
///   chain costs coverage.
pub fn cit_gate(
    state: &State,
    evaluator: Option<&dyn BranchEvaluator>,
    bn_threshold: f64,
    ctx: &CallContext<'_>,
) -> GateDecision {
    if bn_threshold <= 0.0 {
        return GateDecision::Chain;
    }
    let Some(evaluator) = evaluator else {
        return GateDecision::Branch;
    };
    match evaluator.evaluate(state, ctx) {
        Ok(score) if score >= bn_threshold => GateDecision::Branch,
        Ok(_) => GateDecision::Chain,
        Err(err) => {
            log::warn!(
                "branch evaluator '{}' failed ({err}); defaulting to branch",
                evaluator.name()
            );
            GateDecision::Branch
        }
    }
}

/// Branching-necessity estimate backed by a reward model: the score of the
/// state being expanded, which under selection-driven engines is the best
/// current child of its parent. High-scoring states are promising enough to
/// spend width on; low-scoring ones continue as a chain.
#[derive(Clone)]
pub struct RewardBranchEvaluator {
    reward: Arc<dyn RewardModel>,
}

impl RewardBranchEvaluator {
    pub fn new(reward: Arc<dyn RewardModel>) -> Self {
        RewardBranchEvaluator { reward }
    }
}

impl std::fmt::Debug for RewardBranchEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RewardBranchEvaluator")
            .field("reward", &self.reward.name())
            .finish()
    }
}

impl BranchEvaluator for RewardBranchEvaluator {
    fn name(&self) -> &str {
        "reward_branch_evaluator"
    }

    fn evaluate(&self, state: &State, ctx: &CallContext<'_>) -> Result<f64> {
        self.reward.score(state, ctx)
    }
}
