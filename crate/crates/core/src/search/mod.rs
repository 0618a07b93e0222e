//! Tree search over component-defined state spaces.
//!
//! A [`SearchEngine`] (MCTS or beam-pruned BFS) drives a [`SearchSession`],
//! which owns the growing [`Tree`] and mediates every component call:
//! proposal width is decided by the branching gate, rewards are scored as
//! nodes are created, terminal quotas and deadlines are enforced centrally,
//! and a checkpoint sink observes the tree after each completed iteration.
//! Chain (linear) execution lives in [`chain`]; answer aggregation over
//! multiple terminals lives in [`ensemble`].

pub mod bfs;
pub mod chain;
pub mod ensemble;
pub mod gate;
pub mod mcts;

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::components::{CallContext, Policy, RewardModel, SamplingCounters, Transition};
use crate::error::{Error, Result};
use crate::observability::Phase;
use crate::structures::{Node, NodeId, State};

pub use bfs::BfsEngine;
pub use chain::{run_chain, ChainOutcome};
pub use ensemble::{majority_vote, to_ensemble};
pub use gate::{cit_gate, BranchEvaluator, GateDecision, RewardBranchEvaluator};
pub use mcts::MctsEngine;

/// The root node id of every tree.
pub const ROOT: NodeId = 0;

/// Knobs shared by every engine. Field-for-field this is what lands in
/// `config.json` for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Children proposed per expansion when the gate says branch.
    pub n_actions: usize,
    /// Iteration budget: MCTS iterations or BFS levels.
    pub n_iterations: usize,
    /// Depth at which nodes are forced terminal.
    pub max_depth: usize,
    /// Depth cap for MCTS playouts (defaults to `max_depth`).
    pub rollout_depth: usize,
    /// Survivors kept per BFS level (defaults to `n_actions`).
    pub beam_width: usize,
    /// UCT exploration constant.
    pub uct_c: f64,
    /// Stop once any goal-satisfying terminal exists (ignored when
    /// `n_terminate` is set).
    pub early_terminate: bool,
    /// Branching-necessity threshold for the chain-in-tree gate. `<= 0`
    /// forces single-child (chain) expansion everywhere.
    pub bn_threshold: f64,
    /// Ensemble mode: stop once this many terminals exist and aggregate
    /// their answers by majority vote.
    pub n_terminate: Option<usize>,
    /// Wall-clock budget in seconds; expiry yields a partial result with
    /// `timed_out` set.
    pub runtime_limit_s: Option<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            n_actions: 3,
            n_iterations: 10,
            max_depth: 6,
            rollout_depth: 6,
            beam_width: 3,
            uct_c: std::f64::consts::SQRT_2,
            early_terminate: true,
            bn_threshold: 1.0,
            n_terminate: None,
            runtime_limit_s: None,
        }
    }
}

impl SearchConfig {
    /// Default config with the derived fields (`rollout_depth`,
    /// `beam_width`) re-tied to their sources.
    pub fn new(n_actions: usize, n_iterations: usize, max_depth: usize) -> Self {
        SearchConfig {
            n_actions,
            n_iterations,
            max_depth,
            rollout_depth: max_depth,
            beam_width: n_actions,
            ..SearchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_actions == 0 {
            return Err(Error::Config("n_actions must be at least 1".into()));
        }
        if self.n_iterations == 0 {
            return Err(Error::Config("n_iterations must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if self.beam_width == 0 {
            return Err(Error::Config("beam_width must be at least 1".into()));
        }
        if !self.uct_c.is_finite() || self.uct_c < 0.0 {
            return Err(Error::Config(format!(
                "uct_c must be a non-negative finite number, got {}",
                self.uct_c
            )));
        }
        if !(0.0..=1.0).contains(&self.bn_threshold) {
            return Err(Error::Config(format!(
                "bn_threshold must lie in [0, 1], got {}",
                self.bn_threshold
            )));
        }
        if self.n_terminate == Some(0) {
            return Err(Error::Config("n_terminate must be at least 1".into()));
        }
        if let Some(limit) = self.runtime_limit_s {
            if !limit.is_finite() || limit <= 0.0 {
                return Err(Error::Config(format!(
                    "runtime_limit_s must be a positive number of seconds, got {limit}"
                )));
            }
        }
        Ok(())
    }
}

/// Growing search tree. Node ids are indices into a flat arena; children
/// are appended in creation order, so every `child_ids` list is ascending.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn new(root_state: State) -> Self {
        Tree {
            nodes: vec![Node::new_root(root_state)],
        }
    }

    /// Rebuild from previously serialized nodes (checkpoint loading).
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Resume("checkpoint contains no nodes".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::Resume(format!(
                    "node ids are not dense: position {i} holds id {}",
                    node.id
                )));
            }
        }
        Ok(Tree { nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id]
    }

    pub fn root(&self) -> &Node {
        &self.nodes[ROOT]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn add_child(
        &mut self,
        parent: NodeId,
        state: State,
        reward: f64,
        is_terminal: bool,
    ) -> NodeId {
        let id = self.nodes.len();
        let depth = self.nodes[parent].depth + 1;
        self.nodes.push(Node {
            id,
            parent_id: Some(parent),
            child_ids: Vec::new(),
            state,
            reward,
            value_sum: 0.0,
            visits: 0,
            rollouts: 0,
            depth,
            is_terminal,
        });
        self.nodes[parent].child_ids.push(id);
        id
    }

    /// Root-to-`id` path following parent links.
    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = Vec::new();
        let mut cursor = Some(id);
        while let Some(node_id) = cursor {
            path.push(node_id);
            cursor = self.nodes[node_id].parent_id;
        }
        path.reverse();
        path
    }

    pub fn terminal_ids(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.is_terminal)
            .map(|n| n.id)
            .collect()
    }

    pub fn leaf_ids(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.child_ids.is_empty())
            .map(|n| n.id)
            .collect()
    }

    /// Ids violating `visits == sum(child visits) + rollouts`; empty on a
    /// well-formed MCTS tree.
    pub fn visit_conservation_violations(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| {
                let child_sum: u64 = n.child_ids.iter().map(|&c| self.nodes[c].visits).sum();
                n.visits != child_sum + n.rollouts
            })
            .map(|n| n.id)
            .collect()
    }
}

/// UCT child choice: highest `mean + c * sqrt(ln(parent_visits) /
/// child_visits)`. Unvisited children take priority in id order; exact
/// score ties resolve to the lowest id. `None` when `parent` is childless.
pub fn uct_select(tree: &Tree, parent: NodeId, uct_c: f64) -> Option<NodeId> {
    let node = tree.node(parent);
    if node.child_ids.is_empty() {
        return None;
    }
    // child_ids is ascending, so the first unvisited child is the lowest id.
    for &child_id in &node.child_ids {
        if tree.node(child_id).visits == 0 {
            return Some(child_id);
        }
    }
    let parent_visits = node.visits.max(1) as f64;
    let mut best: Option<(f64, NodeId)> = None;
    for &child_id in &node.child_ids {
        let child = tree.node(child_id);
        let exploration = uct_c * (parent_visits.ln() / child.visits as f64).sqrt();
        let score = child.mean_value() + exploration;
        // Strictly-greater keeps the lowest id on ties (ascending order).
        if best.map(|(s, _)| score > s).unwrap_or(true) {
            best = Some((score, child_id));
        }
    }
    best.map(|(_, id)| id)
}

/// The assembled component stack a search runs against. The evaluator is
/// optional: absent, the branching gate always branches (above a zero
/// threshold).
#[derive(Clone)]
pub struct ComponentSet {
    pub policy: Arc<dyn Policy>,
    pub transition: Arc<dyn Transition>,
    pub reward: Arc<dyn RewardModel>,
    pub evaluator: Option<Arc<dyn BranchEvaluator>>,
}

impl std::fmt::Debug for ComponentSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ComponentSet")
            .field("policy", &self.policy.name())
            .field("transition", &self.transition.name())
            .field("reward", &self.reward.name())
            .field(
                "evaluator",
                &self.evaluator.as_ref().map(|e| e.name().to_string()),
            )
            .finish()
    }
}

/// Counters accumulated while a search runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Cumulative proposal width requested from the policy — the number of
    /// sampled completions paid for, so a width-3 expansion counts 3 even
    /// if deduplication returns fewer actions. This is the quantity the
    /// branching gate reduces.
    pub policy_invocations: u64,
}

/// Outcome summary serialized next to the final checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Root-to-best-terminal node ids (falls back to the best leaf when no
    /// terminal exists).
    pub best_path: Vec<NodeId>,
    /// Every terminal node id, ascending.
    pub terminal_ids: Vec<NodeId>,
    /// Whether any terminal yielded an extractable answer.
    pub success: bool,
    /// Best-path answer, or the majority-vote answer in ensemble mode.
    pub answer: Option<String>,
    /// Set when the wall-clock budget expired before the iteration budget.
    pub timed_out: bool,
    pub iterations_completed: usize,
}

/// A finished search: summary plus the full tree for persistence/analysis.
#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub result: SearchResult,
    pub tree: Tree,
    pub stats: SearchStats,
}

/// Callback invoked with the tree after every completed iteration.
pub type IterationSink<'a> = dyn FnMut(&Tree, usize) -> Result<()> + 'a;

/// Everything an engine needs while it runs: the tree, the components, and
/// the cross-cutting bookkeeping (gating, quotas, deadlines, checkpoints).
///
/// Engines call [`expand`](SearchSession::expand) /
/// [`simulate`](SearchSession::simulate) / [`backprop`](SearchSession::backprop)
/// and never touch components directly, so every engine shares identical
/// accounting and stop semantics.
pub struct SearchSession<'a, 'f> {
    pub tree: Tree,
    pub config: &'a SearchConfig,
    components: &'a ComponentSet,
    query_index: Option<usize>,
    counters: Option<&'a SamplingCounters>,
    deadline: Option<Instant>,
    sink: Option<&'a mut IterationSink<'f>>,
    pub stats: SearchStats,
    timed_out: bool,
    iterations_completed: usize,
    terminal_count: usize,
    success_seen: bool,
}

impl<'a, 'f> SearchSession<'a, 'f> {
    fn new(
        tree: Tree,
        config: &'a SearchConfig,
        components: &'a ComponentSet,
        query_index: Option<usize>,
        counters: Option<&'a SamplingCounters>,
        sink: Option<&'a mut IterationSink<'f>>,
    ) -> Self {
        let deadline = config
            .runtime_limit_s
            .map(|secs| Instant::now() + Duration::from_secs_f64(secs));
        let mut session = SearchSession {
            tree,
            config,
            components,
            query_index,
            counters,
            deadline,
            sink,
            stats: SearchStats::default(),
            timed_out: false,
            iterations_completed: 0,
            terminal_count: 0,
            success_seen: false,
        };
        // Count terminals already present (terminal root, resumed trees).
        for id in session.tree.terminal_ids() {
            session.terminal_count += 1;
            if session.answer_of(id).is_some() {
                session.success_seen = true;
            }
        }
        session
    }

    fn ctx(&self, phase: Phase, iteration: usize, depth: usize) -> CallContext<'a> {
        let mut ctx = CallContext::new(phase)
            .with_query_index(self.query_index)
            .with_iteration(iteration)
            .with_depth(depth);
        if let Some(counters) = self.counters {
            ctx = ctx.with_counters(counters);
        }
        ctx
    }

    fn answer_of(&self, id: NodeId) -> Option<String> {
        self.components
            .transition
            .extract_answer(&self.tree.node(id).state)
    }

    /// True once the terminal quota is met (ensemble mode only).
    pub fn quota_reached(&self) -> bool {
        self.config
            .n_terminate
            .map(|quota| self.terminal_count >= quota)
            .unwrap_or(false)
    }

    /// Checked by engines at iteration/level boundaries. Also refreshes the
    /// deadline, so a `true` may mean the time budget just expired.
    pub fn should_stop(&mut self) -> bool {
        if let Some(deadline) = self.deadline {
            if !self.timed_out && Instant::now() >= deadline {
                self.timed_out = true;
                log::warn!("runtime limit reached; returning partial result");
            }
        }
        if self.timed_out || self.quota_reached() {
            return true;
        }
        self.config.n_terminate.is_none() && self.config.early_terminate && self.success_seen
    }

    pub fn timed_out(&self) -> bool {
        self.timed_out
    }

    /// Records that iteration `index` ran to completion and hands the tree
    /// to the checkpoint sink.
    pub fn complete_iteration(&mut self, index: usize) -> Result<()> {
        self.iterations_completed = index + 1;
        if let Some(sink) = self.sink.as_mut() {
            sink(&self.tree, index)?;
        }
        Ok(())
    }

    fn note_terminal(&mut self, id: NodeId) {
        self.terminal_count += 1;
        if !self.success_seen && self.answer_of(id).is_some() {
            self.success_seen = true;
        }
    }

    fn mark_terminal(&mut self, id: NodeId) {
        if !self.tree.node(id).is_terminal {
            self.tree.node_mut(id).is_terminal = true;
            self.note_terminal(id);
        }
    }

    /// Gate-decided proposal width for `node_id`: `n_actions` on branch,
    /// one on chain.
    fn gated_width(&self, node_id: NodeId, phase: Phase, iteration: usize) -> usize {
        let node = self.tree.node(node_id);
        let ctx = self.ctx(phase, iteration, node.depth);
        match cit_gate(
            &node.state,
            self.components.evaluator.as_deref(),
            self.config.bn_threshold,
            &ctx,
        ) {
            GateDecision::Branch => self.config.n_actions,
            GateDecision::Chain => 1,
        }
    }

    /// Expands `node_id` with gate-decided width. Returns the new child ids
    /// (empty when the node turned out to be a dead end, which marks it
    /// terminal).
    pub fn expand(&mut self, node_id: NodeId, iteration: usize) -> Result<Vec<NodeId>> {
        let width = self.gated_width(node_id, Phase::Expansion, iteration);
        self.expand_width(node_id, width, Phase::Expansion, iteration)
    }

    fn expand_width(
        &mut self,
        node_id: NodeId,
        width: usize,
        phase: Phase,
        iteration: usize,
    ) -> Result<Vec<NodeId>> {
        let depth = self.tree.node(node_id).depth;
        let state = self.tree.node(node_id).state.clone();
        let ctx = self.ctx(phase, iteration, depth);
        self.stats.policy_invocations += width as u64;
        let actions = match self.components.policy.propose(&state, width, &ctx) {
            Ok(actions) => actions,
            // A policy failure at the root means the whole search is
            // unusable; below the root, record the dead end and carry on.
            Err(err) if node_id != ROOT => {
                log::warn!(
                    "policy '{}' failed at node {node_id}: {err}; marking dead end",
                    self.components.policy.name()
                );
                self.mark_terminal(node_id);
                return Ok(Vec::new());
            }
            Err(err) => return Err(err),
        };
        if actions.is_empty() {
            self.mark_terminal(node_id);
            return Ok(Vec::new());
        }
        let mut children = Vec::with_capacity(actions.len());
        for action in &actions {
            if self.quota_reached() {
                break;
            }
            let next = self.components.transition.step(&state, action, &ctx)?;
            let reward = self.components.reward.score(&next, &ctx)?;
            let is_terminal =
                self.components.transition.is_terminal(&next) || depth + 1 >= self.config.max_depth;
            let id = self.tree.add_child(node_id, next, reward, is_terminal);
            if is_terminal {
                self.note_terminal(id);
            }
            children.push(id);
        }
        Ok(children)
    }

    /// Grows a playout from `from` until a terminal node, the rollout depth
    /// cap, or the terminal quota: each step expands the cursor at gated
    /// width and descends into the highest-reward new child. Every playout
    /// node is a real tree node, so later iterations can select into the
    /// playout and explore its siblings. Returns the playout terminus.
    pub fn simulate(&mut self, from: NodeId, iteration: usize) -> Result<NodeId> {
        let mut cursor = from;
        loop {
            let node = self.tree.node(cursor);
            if node.is_terminal || node.depth >= self.config.rollout_depth || self.quota_reached() {
                return Ok(cursor);
            }
            let width = self.gated_width(cursor, Phase::Simulation, iteration);
            let children = self.expand_width(cursor, width, Phase::Simulation, iteration)?;
            match best_by_reward(&self.tree, &children) {
                Some(child) => cursor = child,
                None => return Ok(cursor), // dead end, already marked terminal
            }
        }
    }

    /// Credits a finished playout: the terminus gains a rollout, and every
    /// node from the terminus up to the root gains one visit and `value`.
    pub fn backprop(&mut self, terminus: NodeId, value: f64) {
        self.tree.node_mut(terminus).rollouts += 1;
        let mut cursor = Some(terminus);
        while let Some(id) = cursor {
            let node = self.tree.node_mut(id);
            node.visits += 1;
            node.value_sum += value;
            cursor = node.parent_id;
        }
    }
}

/// Highest-reward node among `ids`; ties go to the lowest id (creation
/// order). `None` on an empty slice.
pub(crate) fn best_by_reward(tree: &Tree, ids: &[NodeId]) -> Option<NodeId> {
    let mut best: Option<(f64, NodeId)> = None;
    for &id in ids {
        let reward = tree.node(id).reward;
        if best.map(|(r, _)| reward > r).unwrap_or(true) {
            best = Some((reward, id));
        }
    }
    best.map(|(_, id)| id)
}

/// Engine contract: drive a [`SearchSession`] through its iteration budget.
/// Implementations own only control flow; all component access, accounting,
/// and stop conditions go through the session.
pub trait SearchEngine: Send + Sync {
    fn name(&self) -> &str;
    fn search(&self, session: &mut SearchSession<'_, '_>) -> Result<()>;
}

/// Picks the node the final answer is read from:
/// answer-bearing terminals (max reward, ties to the lowest id), else any
/// terminal, else the highest-reward leaf, else the root.
fn best_node(tree: &Tree, transition: &dyn Transition) -> NodeId {
    let pick_max = |ids: &[NodeId]| -> Option<NodeId> {
        ids.iter()
            .copied()
            .max_by(|&a, &b| {
                tree.node(a)
                    .reward
                    .partial_cmp(&tree.node(b).reward)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    // Prefer the lower id on reward ties: ids ascend, so let
                    // the earlier node win by treating it as the max.
                    .then(b.cmp(&a))
            })
    };
    let terminals = tree.terminal_ids();
    let with_answer: Vec<NodeId> = terminals
        .iter()
        .copied()
        .filter(|&id| transition.extract_answer(&tree.node(id).state).is_some())
        .collect();
    if let Some(id) = pick_max(&with_answer) {
        return id;
    }
    if let Some(id) = pick_max(&terminals) {
        return id;
    }
    pick_max(&tree.leaf_ids()).unwrap_or(ROOT)
}

/// Runs `engine` to completion for one query and assembles the result.
///
/// `counters` feed live sampling accounting, `sink` observes the tree after
/// each iteration (checkpointing). A policy failure at the root is the only
/// component error that surfaces as `Err`; deeper failures degrade into
/// dead-end terminals.
pub fn run_search(
    engine: &dyn SearchEngine,
    components: &ComponentSet,
    config: &SearchConfig,
    query: &str,
    query_index: Option<usize>,
    counters: Option<&SamplingCounters>,
    sink: Option<&mut IterationSink<'_>>,
) -> Result<SearchOutcome> {
    config.validate()?;
    let root_state = components.transition.init_state(query)?;
    let mut tree = Tree::new(root_state);
    if components.transition.is_terminal(&tree.root().state) {
        tree.node_mut(ROOT).is_terminal = true;
    }
    let mut session = SearchSession::new(tree, config, components, query_index, counters, sink);
    engine.search(&mut session)?;
    finish_search(session, components, config)
}

fn finish_search(
    session: SearchSession<'_, '_>,
    components: &ComponentSet,
    config: &SearchConfig,
) -> Result<SearchOutcome> {
    let SearchSession {
        tree,
        stats,
        timed_out,
        iterations_completed,
        ..
    } = session;
    let terminal_ids = tree.terminal_ids();
    let best = best_node(&tree, components.transition.as_ref());
    let best_path = tree.path_to(best);
    let (answer, success) = if config.n_terminate.is_some() {
        // Ensemble mode: majority vote over all terminal answers.
        match to_ensemble(&tree, components.transition.as_ref()) {
            Ok(answer) => (Some(answer), true),
            Err(Error::NoAnswer) => (None, false),
            Err(err) => return Err(err),
        }
    } else {
        let answer = components
            .transition
            .extract_answer(&tree.node(best).state);
        let success = answer.is_some();
        (answer, success)
    };
    Ok(SearchOutcome {
        result: SearchResult {
            best_path,
            terminal_ids,
            success,
            answer,
            timed_out,
            iterations_completed,
        },
        tree,
        stats,
    })
}
