//! Built-in policies.
//!
//! * [`ConcatPolicy`] — free-text reasoning steps for language tasks.
//! * [`SubQuestionPolicy`] — question-decomposition steps.
//! * [`EnvGroundedPolicy`] — picks among the environment's valid commands,
//!   with a deterministic fill-in when the model's output is unusable.
//! * [`ToolUsePolicy`] — ReAct-style thought/action proposals over a tool
//!   catalog.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::Value;

use super::{
    normalize_action_text, sample_actions_with_escalation, ActionSpace, CallContext,
    ComponentBase, Environment, Policy,
};
use crate::error::Result;
use crate::prompts::bindings;
use crate::structures::{Action, State, ToolAction};
use crate::tools::ResourceBundle;

/// Samples free-text reasoning steps. Prompt slot: `propose`, bindings
/// `question`, `trajectory`, `n`.
#[derive(Debug)]
pub struct ConcatPolicy {
    base: ComponentBase,
}

pub const CONCAT_POLICY: &str = "concat_policy";

impl ConcatPolicy {
    pub fn new(base: ComponentBase) -> Self {
        ConcatPolicy { base }
    }
}

impl Policy for ConcatPolicy {
    fn name(&self) -> &str {
        CONCAT_POLICY
    }

    fn propose(&self, state: &State, n: usize, ctx: &CallContext<'_>) -> Result<Vec<Action>> {
        let prompt = self.base.render_prompt(
            "propose",
            &bindings(&[
                ("question", state.query()),
                ("trajectory", &state.render()),
                ("n", &n.to_string()),
            ]),
        )?;
        sample_actions_with_escalation(&self.base, &prompt, n, ctx, &|text| {
            let trimmed = text.trim();
            (!trimmed.is_empty()).then(|| Action::text(trimmed))
        })
    }
}

/// Samples sub-question decomposition steps. Prompt slot: `propose`,
/// bindings `question`, `trajectory`, `n`. The terminal convention ("Now we
/// can answer ...") belongs to the transition.
#[derive(Debug)]
pub struct SubQuestionPolicy {
    base: ComponentBase,
}

pub const SUB_QUESTION_POLICY: &str = "sub_question_policy";

impl SubQuestionPolicy {
    pub fn new(base: ComponentBase) -> Self {
        SubQuestionPolicy { base }
    }
}

impl Policy for SubQuestionPolicy {
    fn name(&self) -> &str {
        SUB_QUESTION_POLICY
    }

    fn propose(&self, state: &State, n: usize, ctx: &CallContext<'_>) -> Result<Vec<Action>> {
        let prompt = self.base.render_prompt(
            "propose",
            &bindings(&[
                ("question", state.query()),
                ("trajectory", &state.render()),
                ("n", &n.to_string()),
            ]),
        )?;
        sample_actions_with_escalation(&self.base, &prompt, n, ctx, &|text| {
            // One sub-question per sample; keep the first non-empty line.
            text.lines()
                .map(str::trim)
                .find(|l| !l.is_empty())
                .map(Action::sub_question)
        })
    }
}

/// Proposes environment commands.
///
/// With an enumerated action space the model may answer with the command
/// itself or its 1-based index in the presented list; proposals that match
/// nothing are dropped, and if fewer than `n` distinct commands were chosen
/// the remainder is filled from the legal list in order, so search keeps
/// moving even when the model output is garbage. With an open action space
/// the first non-empty line of each sample is taken verbatim (the
/// transition validates it). Prompt slot: `propose`, bindings `question`,
/// `state`, `valid_actions`, `n`.
pub struct EnvGroundedPolicy {
    base: ComponentBase,
    env: Arc<dyn Environment>,
}

pub const ENV_GROUNDED_POLICY: &str = "env_grounded_policy";

impl EnvGroundedPolicy {
    pub fn new(base: ComponentBase, env: Arc<dyn Environment>) -> Self {
        EnvGroundedPolicy { base, env }
    }
}

impl std::fmt::Debug for EnvGroundedPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnvGroundedPolicy")
            .field("env", &self.env.name())
            .finish_non_exhaustive()
    }
}

/// Match a model reply against the valid-command list: exact text (after
/// whitespace/case normalization) or a 1-based index, optionally written as
/// `3.` or `(3)`.
fn match_valid_action(reply: &str, valid: &[String]) -> Option<usize> {
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty())?;
    let normalized = normalize_action_text(line);
    if let Some(i) = valid
        .iter()
        .position(|v| normalize_action_text(v) == normalized)
    {
        return Some(i);
    }
    let digits: String = line
        .trim_start_matches('(')
        .chars()
        .take_while(|c| c.is_ascii_digit())
        .collect();
    if !digits.is_empty() && digits.len() == line.trim_end_matches(['.', ')', ' ']).trim_start_matches('(').len() {
        if let Ok(index) = digits.parse::<usize>() {
            if (1..=valid.len()).contains(&index) {
                return Some(index - 1);
            }
        }
    }
    None
}

impl Policy for EnvGroundedPolicy {
    fn name(&self) -> &str {
        ENV_GROUNDED_POLICY
    }

    fn propose(&self, state: &State, n: usize, ctx: &CallContext<'_>) -> Result<Vec<Action>> {
        let space = self.env.action_space(state);
        let (want, listing) = match &space {
            ActionSpace::Enumerated(valid) => {
                if valid.is_empty() {
                    return Ok(Vec::new());
                }
                (n.min(valid.len()), space.render())
            }
            ActionSpace::Open => (n, space.render()),
        };
        let prompt = self.base.render_prompt(
            "propose",
            &bindings(&[
                ("question", state.query()),
                ("state", state.current_env_render()),
                ("valid_actions", &listing),
                ("n", &want.to_string()),
            ]),
        )?;
        match space {
            ActionSpace::Enumerated(valid) => {
                let valid_for_parse = valid.clone();
                let mut actions = sample_actions_with_escalation(
                    &self.base,
                    &prompt,
                    want,
                    ctx,
                    &move |text| {
                        match_valid_action(text, &valid_for_parse)
                            .map(|i| Action::env(valid_for_parse[i].clone()))
                    },
                )
                .unwrap_or_default();
                // Deterministic fill-in from the legal list.
                if actions.len() < want {
                    let chosen: Vec<String> = actions
                        .iter()
                        .map(|a| normalize_action_text(&a.signature()))
                        .collect();
                    for command in &valid {
                        if actions.len() >= want {
                            break;
                        }
                        if !chosen.contains(&normalize_action_text(command)) {
                            actions.push(Action::env(command.clone()));
                        }
                    }
                }
                Ok(actions)
            }
            ActionSpace::Open => sample_actions_with_escalation(
                &self.base,
                &prompt,
                want,
                ctx,
                &|text| {
                    text.lines()
                        .map(str::trim)
                        .find(|l| !l.is_empty())
                        .map(Action::env)
                },
            ),
        }
    }
}

/// ReAct-style tool policy: each sample is a `Thought:` / `Action:` /
/// `Action Input:` block; `Action: finish` ends the episode. Prompt slot:
/// `react`, bindings `question`, `trajectory`, `tools`, `n`.
#[derive(Debug)]
pub struct ToolUsePolicy {
    base: ComponentBase,
    tools: ResourceBundle,
}

pub const TOOL_USE_POLICY: &str = "tool_use_policy";

/// Name of the episode-ending pseudo-tool.
pub const FINISH_TOOL: &str = "finish";

impl ToolUsePolicy {
    pub fn new(base: ComponentBase, tools: ResourceBundle) -> Self {
        ToolUsePolicy { base, tools }
    }
}

/// Parse one ReAct block. Returns `None` when no `Action:` line is present
/// or the action input is not a JSON object.
pub fn parse_react_block(text: &str) -> Option<ToolAction> {
    let mut thought = String::new();
    let mut tool_name: Option<String> = None;
    let mut input_text: Option<String> = None;
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.next() {
        let trimmed = line.trim();
        if let Some(rest) = strip_prefix_ci(trimmed, "thought:") {
            thought = rest.trim().to_string();
        } else if let Some(rest) = strip_prefix_ci(trimmed, "action input:") {
            // The JSON object may continue over the following lines.
            let mut body = rest.trim().to_string();
            for continuation in lines.by_ref() {
                body.push('\n');
                body.push_str(continuation);
            }
            input_text = Some(body);
            break;
        } else if let Some(rest) = strip_prefix_ci(trimmed, "action:") {
            tool_name = Some(rest.trim().to_string());
        }
    }
    let tool_name = tool_name?;
    if tool_name.is_empty() {
        return None;
    }
    let arguments: BTreeMap<String, Value> = match input_text {
        None => BTreeMap::new(),
        Some(body) => {
            let body = body.trim();
            if body.is_empty() {
                BTreeMap::new()
            } else {
                match serde_json::from_str::<Value>(body) {
                    Ok(Value::Object(map)) => map.into_iter().collect(),
                    _ => return None,
                }
            }
        }
    };
    Some(ToolAction {
        is_finish: tool_name.eq_ignore_ascii_case(FINISH_TOOL),
        tool_name,
        arguments,
        thought,
    })
}

fn strip_prefix_ci<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    if line.len() >= prefix.len() && line[..prefix.len()].eq_ignore_ascii_case(prefix) {
        Some(&line[prefix.len()..])
    } else {
        None
    }
}

impl Policy for ToolUsePolicy {
    fn name(&self) -> &str {
        TOOL_USE_POLICY
    }

    fn propose(&self, state: &State, n: usize, ctx: &CallContext<'_>) -> Result<Vec<Action>> {
        let prompt = self.base.render_prompt(
            "react",
            &bindings(&[
                ("question", state.query()),
                ("trajectory", &state.render()),
                ("tools", &self.tools.render_catalog()),
                ("n", &n.to_string()),
            ]),
        )?;
        sample_actions_with_escalation(&self.base, &prompt, n, ctx, &|text| {
            parse_react_block(text).map(Action::Tool)
        })
    }
}
