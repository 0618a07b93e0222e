//! General data structures shared by every search engine and domain:
//! `Action` -> `Step` -> `State` -> `Node`.
//!
//! Actions are the atomic unit a policy emits, steps wrap an action with its
//! execution result, states accumulate steps over time with a unified render,
//! and nodes wrap states for tree search (parent/children links, rewards,
//! visit counts). All of them serialize to self-describing JSON documents
//! with a `__type__` discriminator (see [`serial`]).

mod serial;

pub use serial::{
    deserialize_node, deserialize_node_global, deserialize_state, deserialize_state_with,
    node_to_doc, register_type, serialize_node, serialize_state, serialize_state_to_string,
    to_json_string, Reconstructed, Reconstructor, TypeRegistry,
};

use std::collections::BTreeMap;

/// An action proposed by a policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Free-text reasoning step (language-grounded tasks).
    Text { text: String },
    /// Sub-question decomposition step.
    SubQuestion { sub_question: String },
    /// Environment command, e.g. `"h1. tasks"` or `"stack A on B"`.
    Env { command: String },
    /// Tool invocation with structured arguments.
    Tool(ToolAction),
}

/// A structured tool call. `is_finish` marks the episode-ending answer
/// action. `thought` carries the reasoning sampled alongside the call
/// (empty for callers that don't interleave reasoning); it is excluded from
/// the duplicate-detection signature.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolAction {
    pub tool_name: String,
    pub arguments: BTreeMap<String, serde_json::Value>,
    pub is_finish: bool,
    pub thought: String,
}

impl ToolAction {
    pub fn finish(answer: impl Into<String>) -> Self {
        let mut arguments = BTreeMap::new();
        arguments.insert(
            "answer".to_string(),
            serde_json::Value::String(answer.into()),
        );
        ToolAction {
            tool_name: "finish".to_string(),
            arguments,
            is_finish: true,
            thought: String::new(),
        }
    }

    pub fn with_thought(mut self, thought: impl Into<String>) -> Self {
        self.thought = thought.into();
        self
    }

    /// The `answer` argument of a finish action, if any.
    pub fn answer(&self) -> Option<String> {
        self.arguments.get("answer").map(value_as_text)
    }
}

/// Render a JSON value as plain text (strings unquoted, the rest compact JSON).
fn value_as_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl Action {
    pub fn text(text: impl Into<String>) -> Self {
        Action::Text { text: text.into() }
    }

    pub fn sub_question(q: impl Into<String>) -> Self {
        Action::SubQuestion {
            sub_question: q.into(),
        }
    }

    pub fn env(command: impl Into<String>) -> Self {
        Action::Env {
            command: command.into(),
        }
    }

    /// Canonical string form used for duplicate detection and flat rendering.
    pub fn signature(&self) -> String {
        match self {
            Action::Text { text } => text.clone(),
            Action::SubQuestion { sub_question } => sub_question.clone(),
            Action::Env { command } => command.clone(),
            Action::Tool(t) => {
                let args = serde_json::Value::Object(
                    t.arguments
                        .iter()
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect(),
                );
                format!("{}{}", t.tool_name, args)
            }
        }
    }

    /// True when the payload is empty. Finish tool actions are allowed to be
    /// payload-free.
    pub fn is_empty(&self) -> bool {
        match self {
            Action::Text { text } => text.trim().is_empty(),
            Action::SubQuestion { sub_question } => sub_question.trim().is_empty(),
            Action::Env { command } => command.trim().is_empty(),
            Action::Tool(t) => !t.is_finish && t.tool_name.trim().is_empty(),
        }
    }
}

/// One executed (or attempted) step of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Concat(ConcatStep),
    SubQa(SubQaStep),
    Env(EnvStep),
    Tool(ToolStep),
}

/// Plain concatenation of the action text onto the trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatStep {
    pub action: Action,
}

/// Sub-question decomposition: the question posed and the answer produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SubQaStep {
    pub sub_question: String,
    pub sub_answer: String,
}

/// Environment step. Exactly one of `next_state_render` (executed) or
/// `error` (validation failed after retries) is populated.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub action: Action,
    pub next_state_render: Option<String>,
    pub error: Option<String>,
}

impl EnvStep {
    pub fn executed(action: Action, next_state_render: impl Into<String>) -> Self {
        EnvStep {
            action,
            next_state_render: Some(next_state_render.into()),
            error: None,
        }
    }

    pub fn failed(action: Action, error: impl Into<String>) -> Self {
        EnvStep {
            action,
            next_state_render: None,
            error: Some(error.into()),
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

/// Tool-use step: the tool call (with its reasoning) and the observation it
/// produced. Observation is absent only for finish actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolStep {
    pub action: ToolAction,
    pub observation: Option<String>,
}

impl Step {
    pub fn concat(action: Action) -> Self {
        Step::Concat(ConcatStep { action })
    }

    pub fn sub_qa(sub_question: impl Into<String>, sub_answer: impl Into<String>) -> Self {
        Step::SubQa(SubQaStep {
            sub_question: sub_question.into(),
            sub_answer: sub_answer.into(),
        })
    }

    /// The action text recorded in this step, used for duplicate analysis and
    /// preference-pair export.
    pub fn action_text(&self) -> String {
        match self {
            Step::Concat(s) => s.action.signature(),
            Step::SubQa(s) => s.sub_question.clone(),
            Step::Env(s) => s.action.signature(),
            Step::Tool(s) => Action::Tool(s.action.clone()).signature(),
        }
    }

    /// The error annotation, when this step records a failed action.
    pub fn error(&self) -> Option<&str> {
        match self {
            Step::Env(s) => s.error.as_deref(),
            _ => None,
        }
    }

    /// How this step contributes to the state render.
    pub fn render(&self) -> String {
        match self {
            Step::Concat(s) => format!("\n{}", s.action.signature()),
            Step::SubQa(s) => format!(
                "\nSub-question: {}\nSub-answer: {}",
                s.sub_question, s.sub_answer
            ),
            Step::Env(s) => match (&s.next_state_render, &s.error) {
                (Some(render), _) => format!("\n{render}"),
                (None, Some(error)) => {
                    format!("\nInvalid action: {} ({error})", s.action.signature())
                }
                (None, None) => String::new(),
            },
            Step::Tool(s) => {
                let mut out = format!(
                    "\nThought: {}\nAction: {}",
                    s.action.thought,
                    Action::Tool(s.action.clone()).signature()
                );
                if let Some(obs) = &s.observation {
                    out.push_str(&format!("\nObservation: {obs}"));
                }
                out
            }
        }
    }
}

/// Concrete state flavor; selects the `__type__` tag the state serializes
/// under. Transitions declare which kind they produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateKind {
    /// Generic linear trajectory (chain agents, custom formulations).
    Trajectory,
    /// Concatenated free-text reasoning.
    Concat,
    /// Environment-grounded episode.
    Env,
    /// Tool-use episode.
    Tool,
}

impl StateKind {
    pub fn tag(self) -> &'static str {
        match self {
            StateKind::Trajectory => "TrajectoryState",
            StateKind::Concat => "ConcatState",
            StateKind::Env => "EnvState",
            StateKind::Tool => "ToolState",
        }
    }
}

/// Accumulation of steps over time for one query.
///
/// Steps are append-only; rendering is a pure function of the fields.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    kind: StateKind,
    query: String,
    init_render: String,
    steps: Vec<Step>,
}

impl State {
    pub fn new(kind: StateKind, query: impl Into<String>, init_render: impl Into<String>) -> Self {
        State {
            kind,
            query: query.into(),
            init_render: init_render.into(),
            steps: Vec::new(),
        }
    }

    pub fn kind(&self) -> StateKind {
        self.kind
    }

    pub fn query(&self) -> &str {
        &self.query
    }

    pub fn init_render(&self) -> &str {
        &self.init_render
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn push_step(&mut self, step: Step) {
        self.steps.push(step);
    }

    /// A copy of this state with one more step appended.
    pub fn child(&self, step: Step) -> State {
        let mut next = self.clone();
        next.push_step(step);
        next
    }

    pub fn last_step(&self) -> Option<&Step> {
        self.steps.last()
    }

    /// Concatenation of the initial render and each step's render, in order.
    pub fn render(&self) -> String {
        let mut out = self.init_render.clone();
        for step in &self.steps {
            out.push_str(&step.render());
        }
        out
    }

    /// The current environment render: the last executed env step's
    /// `next_state_render`, falling back to the initial render. Error steps
    /// do not advance the environment.
    pub fn current_env_render(&self) -> &str {
        self.steps
            .iter()
            .rev()
            .find_map(|s| match s {
                Step::Env(e) => e.next_state_render.as_deref(),
                _ => None,
            })
            .unwrap_or(&self.init_render)
    }

    pub(crate) fn from_parts(
        kind: StateKind,
        query: String,
        init_render: String,
        steps: Vec<Step>,
    ) -> Self {
        State {
            kind,
            query,
            init_render,
            steps,
        }
    }
}

pub type NodeId = usize;

/// Search-tree wrapper around a [`State`].
///
/// `value_sum`/`visits` accumulate backpropagated rollout values; `rollouts`
/// counts the playouts that terminated at this node, so for every node
/// `visits == sum(child visits) + rollouts`.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub parent_id: Option<NodeId>,
    pub child_ids: Vec<NodeId>,
    pub state: State,
    pub reward: f64,
    pub value_sum: f64,
    pub visits: u64,
    pub rollouts: u64,
    pub depth: usize,
    pub is_terminal: bool,
}

impl Node {
    pub fn new_root(state: State) -> Self {
        Node {
            id: 0,
            parent_id: None,
            child_ids: Vec::new(),
            state,
            reward: 0.0,
            value_sum: 0.0,
            visits: 0,
            rollouts: 0,
            depth: 0,
            is_terminal: false,
        }
    }

    /// Mean backpropagated value; 0 before the first visit.
    pub fn mean_value(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.value_sum / self.visits as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_empty_state_is_init_render_only() {
        let s = State::new(StateKind::Concat, "q", "Question: q");
        assert_eq!(s.render(), "Question: q");
    }

    #[test]
    fn render_concat_steps_in_order() {
        let mut s = State::new(StateKind::Concat, "q", "init");
        s.push_step(Step::concat(Action::text("one")));
        s.push_step(Step::concat(Action::text("two")));
        assert_eq!(s.render(), "init\none\ntwo");
    }

    #[test]
    fn render_tool_step_has_thought_action_observation_in_order() {
        let mut args = BTreeMap::new();
        args.insert("query".to_string(), serde_json::json!("SELECT 1"));
        let step = Step::Tool(ToolStep {
            action: ToolAction {
                tool_name: "query_sql".to_string(),
                arguments: args,
                is_finish: false,
                thought: "look it up".to_string(),
            },
            observation: Some("42".to_string()),
        });
        let text = step.render();
        let ti = text.find("look it up").unwrap();
        let ai = text.find("query_sql").unwrap();
        let oi = text.find("42").unwrap();
        assert!(ti < ai && ai < oi, "expected thought < action < observation: {text}");
    }

    #[test]
    fn env_render_prefers_last_executed_step() {
        let mut s = State::new(StateKind::Env, "q", "board0");
        s.push_step(Step::Env(EnvStep::executed(Action::env("a"), "board1")));
        s.push_step(Step::Env(EnvStep::failed(Action::env("bad"), "nope")));
        assert_eq!(s.current_env_render(), "board1");
    }

    #[test]
    fn finish_action_answer_extraction() {
        let a = ToolAction::finish("42");
        assert!(a.is_finish);
        assert_eq!(a.answer().as_deref(), Some("42"));
    }
}
