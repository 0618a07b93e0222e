//! Pluggable search components.
//!
//! Three interfaces carry every task formulation:
//! * [`Policy`] proposes candidate actions for a state,
//! * [`Transition`] executes an action into a successor state (and decides
//!   terminality and final answers),
//! * [`RewardModel`] scores a state.
//!
//! Search engines speak only these traits, so one formulation runs unchanged
//! under MCTS, beam-pruned BFS, or a linear chain. LLM-backed component
//! implementations share [`ComponentBase`] (backend + prompt resolution +
//! per-call accounting) and the duplicate-aware sampling loop in
//! [`sample_actions_with_escalation`].

pub mod policies;
pub mod rewards;
pub mod transitions;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use crate::backends::{Backend, GenerationRequest, GenerationResponse, TemperatureSchedule};
use crate::error::{Error, Result};
use crate::observability::{InferenceLogger, InferenceRecord, Phase};
use crate::prompts::{PromptQuery, PromptRegistry};
use crate::structures::{Action, State, StateKind};

/// Live sampling statistics for one query, shared between the engine (which
/// owns them) and the policies (which increment them during proposal).
#[derive(Debug, Default)]
pub struct SamplingCounters {
    /// Policy LLM calls.
    pub llm_calls: AtomicU64,
    /// Individual action samples drawn.
    pub sampled_actions: AtomicU64,
    /// Samples discarded as duplicates of a sibling proposal.
    pub duplicate_actions: AtomicU64,
}

impl SamplingCounters {
    pub fn snapshot(&self) -> (u64, u64, u64) {
        (
            self.llm_calls.load(Ordering::Relaxed),
            self.sampled_actions.load(Ordering::Relaxed),
            self.duplicate_actions.load(Ordering::Relaxed),
        )
    }
}

/// Per-call context handed to every component invocation: which search phase
/// triggered it, where in the search it happened (query, iteration, tree
/// depth), and where to report sampling statistics.
#[derive(Debug, Clone, Copy)]
pub struct CallContext<'a> {
    pub phase: Phase,
    pub query_index: Option<usize>,
    /// Search iteration (or BFS level / chain step) when inside an engine.
    pub iteration: Option<usize>,
    /// Tree depth of the state being worked on, when inside an engine.
    pub depth: Option<usize>,
    pub counters: Option<&'a SamplingCounters>,
}

impl<'a> CallContext<'a> {
    pub fn new(phase: Phase) -> Self {
        CallContext {
            phase,
            query_index: None,
            iteration: None,
            depth: None,
            counters: None,
        }
    }

    pub fn with_query_index(mut self, index: Option<usize>) -> Self {
        self.query_index = index;
        self
    }

    pub fn with_iteration(mut self, iteration: usize) -> Self {
        self.iteration = Some(iteration);
        self
    }

    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = Some(depth);
        self
    }

    pub fn with_counters(mut self, counters: &'a SamplingCounters) -> Self {
        self.counters = Some(counters);
        self
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }
}

/// Proposes up to `n` distinct candidate actions for a state.
pub trait Policy: Send + Sync {
    /// Component type name (stable identifier used in logs and registries).
    fn name(&self) -> &str;

    /// Propose up to `n` actions. An empty vector means the state is a dead
    /// end for this policy; an error means the policy could not do its job
    /// at all.
    fn propose(&self, state: &State, n: usize, ctx: &CallContext<'_>) -> Result<Vec<Action>>;
}

/// Executes actions into successor states and owns the task's notion of
/// "done" and "answer".
pub trait Transition: Send + Sync {
    fn name(&self) -> &str;

    /// Which state flavor this transition produces (fixes the serialization
    /// tag of every state in the run).
    fn state_kind(&self) -> StateKind;

    /// Root state for a query.
    fn init_state(&self, query: &str) -> Result<State>;

    /// Execute `action` on `state`, producing the successor.
    fn step(&self, state: &State, action: &Action, ctx: &CallContext<'_>) -> Result<State>;

    /// Whether the state ends the episode (success, failure or dead end).
    fn is_terminal(&self, state: &State) -> bool;

    /// Final answer carried by a state, when one can be extracted.
    fn extract_answer(&self, state: &State) -> Option<String>;
}

/// Scores a state in `[0, 1]`.
pub trait RewardModel: Send + Sync {
    fn name(&self) -> &str;

    fn score(&self, state: &State, ctx: &CallContext<'_>) -> Result<f64>;
}

/// The command vocabulary an environment offers in a state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ActionSpace {
    /// A closed, deterministically ordered list of legal commands. An empty
    /// list is a dead end.
    Enumerated(Vec<String>),
    /// Open vocabulary: any command may be attempted and is validated by
    /// `apply` (e.g. crossword words).
    Open,
}

impl ActionSpace {
    /// Listing injected into prompts.
    pub fn render(&self) -> String {
        match self {
            ActionSpace::Enumerated(commands) => commands
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{}. {c}", i + 1))
                .collect::<Vec<_>>()
                .join("\n"),
            ActionSpace::Open => "(free-form; any syntactically valid command)".to_string(),
        }
    }
}

/// A grounded environment: validates and executes commands, renders boards,
/// recognizes goals. Implemented per task domain and shared by the
/// environment-grounded policy, transition and reward components.
pub trait Environment: Send + Sync {
    fn name(&self) -> &str;

    /// Initial render for a query (e.g. the starting board).
    fn init_render(&self, query: &str) -> Result<String>;

    /// Commands available in `state`.
    fn action_space(&self, state: &State) -> ActionSpace;

    /// Execute `command`; `Ok` carries the next render, `Err` the validation
    /// message.
    fn apply(&self, state: &State, command: &str) -> std::result::Result<String, String>;

    fn is_goal(&self, state: &State) -> bool;

    /// Progress signal in `[0, 1]`; defaults to the goal indicator.
    fn progress(&self, state: &State) -> f64 {
        if self.is_goal(state) {
            1.0
        } else {
            0.0
        }
    }

    /// Final answer for a solved episode (defaults to the action sequence).
    fn answer(&self, state: &State) -> Option<String> {
        if self.is_goal(state) {
            Some(
                state
                    .steps()
                    .iter()
                    .filter(|s| s.error().is_none())
                    .map(|s| s.action_text())
                    .collect::<Vec<_>>()
                    .join("\n"),
            )
        } else {
            None
        }
    }
}

/// Backend handle that records every call against a component identity.
#[derive(Clone)]
pub struct LlmClient {
    backend: Arc<dyn Backend>,
    logger: Arc<InferenceLogger>,
    component: String,
    instance: String,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("component", &self.component)
            .field("instance", &self.instance)
            .finish_non_exhaustive()
    }
}

impl LlmClient {
    pub fn new(
        backend: Arc<dyn Backend>,
        logger: Arc<InferenceLogger>,
        component: impl Into<String>,
        instance: impl Into<String>,
    ) -> Self {
        LlmClient {
            backend,
            logger,
            component: component.into(),
            instance: instance.into(),
        }
    }

    pub fn call(
        &self,
        request: &GenerationRequest,
        ctx: &CallContext<'_>,
    ) -> Result<GenerationResponse> {
        let start = Instant::now();
        let response = self.backend.generate(request)?;
        self.logger.log(InferenceRecord {
            component: self.component.clone(),
            instance: self.instance.clone(),
            phase: ctx.phase,
            model: response.model.clone(),
            prompt_tokens: response.usage.prompt_tokens,
            completion_tokens: response.usage.completion_tokens,
            n_samples: request.n,
            temperature: request.temperature,
            duration_ms: start.elapsed().as_millis() as u64,
            query_index: ctx.query_index,
            iteration: ctx.iteration,
            depth: ctx.depth,
            timestamp_ms: InferenceRecord::now_ms(),
        });
        Ok(response)
    }
}

/// Shared plumbing for LLM-backed components: identity, metered backend
/// access and prompt resolution through the fallback chain.
#[derive(Debug, Clone)]
pub struct ComponentBase {
    component: String,
    instance: String,
    client: LlmClient,
    prompts: Arc<PromptRegistry>,
    task_name: Option<String>,
    /// Task type of the component; `None` marks an instance-specific
    /// component that skips task-type prompt fallbacks.
    task_type: Option<String>,
    prompt_overrides: BTreeMap<String, String>,
}

impl ComponentBase {
    pub fn new(
        component: impl Into<String>,
        instance: impl Into<String>,
        backend: Arc<dyn Backend>,
        logger: Arc<InferenceLogger>,
        prompts: Arc<PromptRegistry>,
    ) -> Self {
        let component = component.into();
        let instance = instance.into();
        ComponentBase {
            client: LlmClient::new(backend.clone(), logger, component.clone(), instance.clone()),
            component,
            instance,
            prompts,
            task_name: None,
            task_type: None,
            prompt_overrides: BTreeMap::new(),
        }
    }

    pub fn with_task_name(mut self, task_name: Option<String>) -> Self {
        self.task_name = task_name;
        self
    }

    pub fn with_task_type(mut self, task_type: Option<String>) -> Self {
        self.task_type = task_type;
        self
    }

    pub fn with_prompt_override(mut self, slot: &str, template: impl Into<String>) -> Self {
        self.prompt_overrides.insert(slot.to_string(), template.into());
        self
    }

    pub fn component(&self) -> &str {
        &self.component
    }

    pub fn instance(&self) -> &str {
        &self.instance
    }

    /// Resolve and render the template for `slot`.
    pub fn render_prompt(
        &self,
        slot: &str,
        bindings: &BTreeMap<String, String>,
    ) -> Result<String> {
        self.prompts.render(
            &PromptQuery {
                component: &self.component,
                slot,
                task_name: self.task_name.as_deref(),
                task_type: self.task_type.as_deref(),
                explicit: self.prompt_overrides.get(slot).map(|s| s.as_str()),
            },
            bindings,
        )
    }

    /// Metered generation call.
    pub fn call(
        &self,
        request: &GenerationRequest,
        ctx: &CallContext<'_>,
    ) -> Result<GenerationResponse> {
        self.client.call(request, ctx)
    }
}

/// Canonical form of an action's text used for duplicate detection:
/// trimmed, internal whitespace collapsed, lowercased.
pub fn normalize_action_text(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Sampling loop with duplicate-triggered temperature escalation.
///
/// Asks the backend for the missing number of samples, parses each into an
/// action, discards duplicates (by normalized signature), and climbs the
/// temperature ladder between rounds while distinct proposals are still
/// missing. Stops after `MAX_SAMPLE_ROUNDS` rounds; returns however many
/// distinct actions were found, or `EmptyPolicy` if there are none.
pub const MAX_SAMPLE_ROUNDS: usize = 3;

pub fn sample_actions_with_escalation(
    base: &ComponentBase,
    prompt: &str,
    n: usize,
    ctx: &CallContext<'_>,
    parse_one: &dyn Fn(&str) -> Option<Action>,
) -> Result<Vec<Action>> {
    let mut schedule = TemperatureSchedule::standard();
    let mut unique: Vec<Action> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for round in 0..MAX_SAMPLE_ROUNDS {
        let missing = n.saturating_sub(unique.len());
        if missing == 0 {
            break;
        }
        let request = GenerationRequest::new(prompt)
            .with_n(missing)
            .with_temperature(schedule.current());
        let response = base.call(&request, ctx)?;
        if let Some(counters) = ctx.counters {
            counters.llm_calls.fetch_add(1, Ordering::Relaxed);
            counters
                .sampled_actions
                .fetch_add(response.texts.len() as u64, Ordering::Relaxed);
        }
        let mut saw_duplicate = false;
        for text in &response.texts {
            let Some(action) = parse_one(text) else {
                continue;
            };
            if action.is_empty() {
                continue;
            }
            let key = normalize_action_text(&action.signature());
            if seen.contains(&key) {
                saw_duplicate = true;
                if let Some(counters) = ctx.counters {
                    counters.duplicate_actions.fetch_add(1, Ordering::Relaxed);
                }
            } else {
                seen.insert(key);
                unique.push(action);
            }
        }
        if unique.len() >= n {
            break;
        }
        if saw_duplicate {
            let new_temperature = schedule.escalate_on_duplicate();
            log::debug!(
                "{}/{}: duplicates in sampling round {round}, temperature now {new_temperature}",
                base.component(),
                base.instance()
            );
        }
    }
    if unique.is_empty() {
        return Err(Error::EmptyPolicy(base.instance().to_string()));
    }
    unique.truncate(n);
    Ok(unique)
}

/// Parse a judge's numeric verdict into `[0, 1]`.
///
/// Rules, applied to the first number found in the text:
/// * a fraction `a/b` evaluates to `a/b`,
/// * a bare integer in `(1, 10]` is read on a ten-point scale (`7` -> 0.7),
/// * anything else is taken at face value,
/// and the result is clamped into `[0, 1]` (so `1.5` -> 1.0). Returns `None`
/// when the text has no number.
pub fn parse_judge_score(text: &str) -> Option<f64> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if let Some((value, is_integer, end)) = scan_number(&chars, i) {
            // Fraction: look past spaces for a slash and a denominator.
            let mut j = end;
            while j < chars.len() && chars[j] == ' ' {
                j += 1;
            }
            if j < chars.len() && chars[j] == '/' {
                j += 1;
                while j < chars.len() && chars[j] == ' ' {
                    j += 1;
                }
                if let Some((den, _, _)) = scan_number(&chars, j) {
                    if den != 0.0 {
                        return Some((value / den).clamp(0.0, 1.0));
                    }
                }
            }
            let score = if is_integer && value > 1.0 && value <= 10.0 {
                value / 10.0
            } else {
                value
            };
            return Some(score.clamp(0.0, 1.0));
        }
        i += 1;
    }
    None
}

/// Try to read a number starting exactly at `start`: optional minus, digits,
/// optional decimal part. Returns (value, had_no_decimal_point, end index).
fn scan_number(chars: &[char], start: usize) -> Option<(f64, bool, usize)> {
    let mut i = start;
    let mut token = String::new();
    if i < chars.len() && chars[i] == '-' {
        token.push('-');
        i += 1;
    }
    let digits_start = i;
    while i < chars.len() && chars[i].is_ascii_digit() {
        token.push(chars[i]);
        i += 1;
    }
    if i == digits_start {
        return None;
    }
    let mut is_integer = true;
    if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
        is_integer = false;
        token.push('.');
        i += 1;
        while i < chars.len() && chars[i].is_ascii_digit() {
            token.push(chars[i]);
            i += 1;
        }
    }
    token.parse::<f64>().ok().map(|v| (v, is_integer, i))
}

/// Default prompt templates for every built-in component and slot, all at
/// default scope so task- and instance-level overrides win.
pub fn default_prompt_registry() -> crate::prompts::PromptRegistry {
    use crate::prompts::PromptScope;
    let mut registry = crate::prompts::PromptRegistry::new();
    let defaults: [(&str, &str, &str); 9] = [
        (
            policies::CONCAT_POLICY,
            "propose",
            "You are solving the following problem step by step.\n\n\
             Problem: {question}\n\n\
             Progress so far:\n{trajectory}\n\n\
             Propose the single next reasoning step. If the step completes the \
             solution, end it with \"The answer is <answer>\".\n\
             Reply with the step text only.",
        ),
        (
            policies::SUB_QUESTION_POLICY,
            "propose",
            "You are decomposing a problem into sub-questions.\n\n\
             Problem: {question}\n\n\
             Progress so far:\n{trajectory}\n\n\
             Ask the next sub-question that moves the solution forward. When the \
             remaining work is only to state the final answer, begin with \
             \"Now we can answer\" followed by the original question.\n\
             Reply with one sub-question only.",
        ),
        (
            policies::ENV_GROUNDED_POLICY,
            "propose",
            "You control an environment one command at a time.\n\n\
             Task: {question}\n\n\
             Current state:\n{state}\n\n\
             Valid actions:\n{valid_actions}\n\n\
             Reply with exactly one command to execute next.",
        ),
        (
            policies::TOOL_USE_POLICY,
            "react",
            "Answer the question by calling tools, one call per turn.\n\n\
             Question: {question}\n\n\
             Available tools:\n{tools}\n\n\
             Trajectory so far:\n{trajectory}\n\n\
             Reply in exactly this format:\n\
             Thought: <your reasoning>\n\
             Action: <tool name>\n\
             Action Input: <JSON object of arguments>\n\n\
             When you know the final answer, use the tool \"finish\" with \
             Action Input {{\"answer\": \"<final answer>\"}}.",
        ),
        (
            transitions::SUB_QUESTION_TRANSITION,
            "answer",
            "Problem: {question}\n\n\
             Progress so far:\n{trajectory}\n\n\
             Answer the sub-question below using the progress above.\n\
             Sub-question: {sub_question}\n\
             Reply with the answer only. If this resolves the original problem, \
             end with \"The answer is <answer>\".",
        ),
        (
            transitions::ENV_GROUNDED_TRANSITION,
            "repair",
            "The last command failed validation.\n\n\
             Task: {question}\n\n\
             Current state:\n{state}\n\n\
             Failed command: {action}\n\
             Error: {error}\n\n\
             Valid actions:\n{valid_actions}\n\n\
             Reply with one corrected command.",
        ),
        (
            rewards::GENERATIVE_PRM,
            "judge",
            "Rate how promising this partial solution is.\n\n\
             Problem: {question}\n\n\
             Partial solution:\n{trajectory}\n\n\
             Reply with a single score from 0 to 10, where 10 means certainly on \
             the correct path.\n\
             Score:",
        ),
        (
            rewards::COMPLETION_JUDGE_REWARD,
            "complete",
            "Complete this trajectory to a final answer.\n\n\
             Question: {question}\n\n\
             Trajectory so far:\n{trajectory}\n\n\
             Continue directly from where it stops and finish with the final \
             answer.",
        ),
        (
            rewards::COMPLETION_JUDGE_REWARD,
            "judge",
            "Judge this completed attempt.\n\n\
             Question: {question}\n\n\
             Attempt:\n{trajectory}\n\n\
             Reply with a single score from 0 to 10 for how likely the attempt's \
             final answer is correct.\n\
             Score:",
        ),
    ];
    for (component, slot, template) in defaults {
        registry
            .register(component, slot, PromptScope::Default, template)
            .expect("built-in prompt table has no duplicates");
    }
    registry
}

/// Case-insensitively find `marker` and return the trimmed text after it,
/// up to the end of the line, with trailing sentence punctuation stripped.
pub fn extract_after_marker(text: &str, marker: &str) -> Option<String> {
    let lower = text.to_lowercase();
    let marker_lower = marker.to_lowercase();
    let at = lower.rfind(&marker_lower)?;
    let rest = &text[at + marker.len()..];
    let line = rest.lines().next().unwrap_or("");
    let cleaned = line
        .trim()
        .trim_end_matches(['.', '!', '?'])
        .trim_matches('"')
        .trim();
    if cleaned.is_empty() {
        None
    } else {
        Some(cleaned.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::ScriptedBackend;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn normalize_collapses_whitespace_and_case() {
        assert_eq!(
            normalize_action_text("  Stack  A on\tB "),
            "stack a on b"
        );
    }

    #[test]
    fn judge_score_ten_point_integers() {
        assert!(approx(parse_judge_score("7").unwrap(), 0.7));
        assert!(approx(parse_judge_score("Score: 10").unwrap(), 1.0));
        assert!(approx(parse_judge_score("I'd say 2 out of ten").unwrap(), 0.2));
    }

    #[test]
    fn judge_score_fractions() {
        assert!(approx(parse_judge_score("7/10").unwrap(), 0.7));
        assert!(approx(parse_judge_score("score: 3 / 4").unwrap(), 0.75));
        assert!(approx(parse_judge_score("9/8").unwrap(), 1.0)); // clamped
    }

    #[test]
    fn judge_score_decimals_and_clamping() {
        assert!(approx(parse_judge_score("0.8").unwrap(), 0.8));
        assert!(approx(parse_judge_score("1.5").unwrap(), 1.0));
        assert!(approx(parse_judge_score("-3").unwrap(), 0.0));
        assert!(approx(parse_judge_score("0").unwrap(), 0.0));
        assert!(approx(parse_judge_score("1").unwrap(), 1.0));
        assert!(approx(parse_judge_score("42").unwrap(), 1.0)); // outside (1,10], clamped
    }

    #[test]
    fn judge_score_absent() {
        assert_eq!(parse_judge_score("no verdict here"), None);
        assert_eq!(parse_judge_score(""), None);
    }

    #[test]
    fn extract_after_marker_takes_last_occurrence_same_line() {
        let text = "Reasoning...\nSo the answer is 42.\n";
        assert_eq!(
            extract_after_marker(text, "the answer is").as_deref(),
            Some("42")
        );
        let two = "the answer is 1. Wait, the answer is \"2\".";
        assert_eq!(extract_after_marker(two, "the answer is").as_deref(), Some("2"));
        assert_eq!(extract_after_marker("nothing", "the answer is"), None);
    }

    fn base_with(backend: ScriptedBackend) -> ComponentBase {
        let mut prompts = PromptRegistry::new();
        prompts
            .register("test_policy", "propose", crate::prompts::PromptScope::Default, "go: {q}")
            .unwrap();
        ComponentBase::new(
            "test_policy",
            "policy",
            Arc::new(backend),
            Arc::new(InferenceLogger::new()),
            Arc::new(prompts),
        )
    }

    #[test]
    fn sampling_escalates_on_duplicates_and_counts() {
        // Round 1 (n=2): "a", "a" -> one duplicate. Round 2 (n=1): "b".
        let backend = ScriptedBackend::builder()
            .on_contains_seq("go:", ["a", "a", "b"])
            .build();
        let base = base_with(backend);
        let counters = SamplingCounters::default();
        let ctx = CallContext::new(Phase::Expansion).with_counters(&counters);
        let actions = sample_actions_with_escalation(
            &base,
            "go: now",
            2,
            &ctx,
            &|text| Some(Action::text(text.trim())),
        )
        .unwrap();
        assert_eq!(actions.len(), 2);
        assert_eq!(actions[0].signature(), "a");
        assert_eq!(actions[1].signature(), "b");
        let (calls, sampled, dupes) = counters.snapshot();
        assert_eq!(calls, 2);
        assert_eq!(sampled, 3);
        assert_eq!(dupes, 1);
    }

    #[test]
    fn sampling_dedups_case_and_whitespace_variants() {
        let backend = ScriptedBackend::builder()
            .on_contains_seq("go:", ["Pick  Up A", "pick up a", "stack a on b"])
            .build();
        let base = base_with(backend);
        let ctx = CallContext::new(Phase::Expansion);
        let actions = sample_actions_with_escalation(
            &base,
            "go: now",
            2,
            &ctx,
            &|text| Some(Action::text(text.trim())),
        )
        .unwrap();
        assert_eq!(actions.len(), 2);
        // Original surface form of the first occurrence is kept.
        assert_eq!(actions[0].signature(), "Pick  Up A");
        assert_eq!(actions[1].signature(), "stack a on b");
    }

    #[test]
    fn sampling_runs_out_returns_partial() {
        let backend = ScriptedBackend::builder().on_contains("go:", "only").build();
        let base = base_with(backend);
        let ctx = CallContext::new(Phase::Expansion);
        let actions = sample_actions_with_escalation(
            &base,
            "go: now",
            3,
            &ctx,
            &|text| Some(Action::text(text.trim())),
        )
        .unwrap();
        assert_eq!(actions.len(), 1);
    }

    #[test]
    fn sampling_nothing_parseable_is_empty_policy_error() {
        let backend = ScriptedBackend::always("   ");
        let base = base_with(backend);
        let ctx = CallContext::new(Phase::Expansion);
        let err = sample_actions_with_escalation(
            &base,
            "go: now",
            2,
            &ctx,
            &|text| Some(Action::text(text.trim())),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyPolicy(i) if i == "policy"));
    }

    #[test]
    fn llm_client_logs_identity_phase_and_usage() {
        let logger = Arc::new(InferenceLogger::new());
        let client = LlmClient::new(
            Arc::new(ScriptedBackend::always("out words")),
            logger.clone(),
            "my_component",
            "my_instance",
        );
        let ctx = CallContext::new(Phase::Judge).with_query_index(Some(4));
        client
            .call(&GenerationRequest::new("in words here"), &ctx)
            .unwrap();
        let records = logger.records();
        assert_eq!(records.len(), 1);
        let r = &records[0];
        assert_eq!(r.component, "my_component");
        assert_eq!(r.instance, "my_instance");
        assert_eq!(r.phase, Phase::Judge);
        assert_eq!(r.query_index, Some(4));
        assert_eq!(r.prompt_tokens, 3);
        assert_eq!(r.completion_tokens, 2);
    }
}
