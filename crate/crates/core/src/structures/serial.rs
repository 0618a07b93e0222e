//! Self-describing JSON serialization for the data structures.
//!
//! Every polymorphic value (actions, steps, states) serializes to an object
//! carrying a `__type__` discriminator; deserialization dispatches through a
//! [`TypeRegistry`] of reconstructor functions keyed by that tag, so
//! downstream code can register new concrete types and have them round-trip
//! through checkpoints without touching this module.
//!
//! Two deliberate shape rules:
//! * Environment steps store their action as the flat command string (the
//!   human-auditable form), not a nested tagged object; on reload the command
//!   is rebuilt as an environment action.
//! * A state document holds `init_state` and `steps`; the owning query is
//!   written once by the enclosing checkpoint wrapper (`{"query", "state"}`),
//!   not repeated per state.
//!
//! Object keys always serialize in lexicographic order.

use std::collections::BTreeMap;
use std::sync::{Arc, LazyLock, RwLock};

use serde_json::{json, Map, Value};

use super::{
    Action, ConcatStep, EnvStep, Node, State, StateKind, Step, SubQaStep, ToolAction, ToolStep,
};
use crate::error::{Error, Result};

/// A value rebuilt from a tagged document.
#[derive(Debug, Clone, PartialEq)]
pub enum Reconstructed {
    Action(Action),
    Step(Step),
    State(State),
}

/// Rebuilds one tagged object. Receives the registry for nested dispatch and
/// the JSON path of the object for error reporting.
pub type Reconstructor =
    Arc<dyn Fn(&TypeRegistry, &Map<String, Value>, &str) -> Result<Reconstructed> + Send + Sync>;

/// Maps `__type__` tags to reconstructors.
#[derive(Clone, Default)]
pub struct TypeRegistry {
    entries: BTreeMap<String, Reconstructor>,
}

impl std::fmt::Debug for TypeRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TypeRegistry")
            .field("tags", &self.tags())
            .finish()
    }
}

impl TypeRegistry {
    /// An empty registry (no tags known).
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry pre-loaded with every built-in action, step and state tag.
    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        let builtin: &[(&str, Reconstructor)] = &[
            ("TextAction", Arc::new(recon_text_action)),
            ("SubQuestionAction", Arc::new(recon_sub_question_action)),
            ("EnvAction", Arc::new(recon_env_action)),
            ("ToolAction", Arc::new(recon_tool_action)),
            ("ConcatStep", Arc::new(recon_concat_step)),
            ("SubQaStep", Arc::new(recon_sub_qa_step)),
            ("EnvStep", Arc::new(recon_env_step)),
            ("ToolStep", Arc::new(recon_tool_step)),
            ("TrajectoryState", Arc::new(recon_state::<0>)),
            ("ConcatState", Arc::new(recon_state::<1>)),
            ("EnvState", Arc::new(recon_state::<2>)),
            ("ToolState", Arc::new(recon_state::<3>)),
        ];
        for (tag, f) in builtin {
            r.register(tag, f.clone()).expect("builtin tags are unique");
        }
        r
    }

    /// Register a reconstructor for `tag`. Rejects collisions so an extension
    /// cannot silently shadow a built-in (or another extension's) tag.
    pub fn register(&mut self, tag: &str, reconstructor: Reconstructor) -> Result<()> {
        if self.entries.contains_key(tag) {
            return Err(Error::DuplicateTag(tag.to_string()));
        }
        self.entries.insert(tag.to_string(), reconstructor);
        Ok(())
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.entries.contains_key(tag)
    }

    /// Registered tags in lexicographic order.
    pub fn tags(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    /// Dispatch one tagged object through its reconstructor.
    pub fn reconstruct(&self, value: &Value, path: &str) -> Result<Reconstructed> {
        let map = as_object(value, path)?;
        let tag_value = map
            .get("__type__")
            .ok_or_else(|| Error::schema(path, "missing __type__"))?;
        let tag = tag_value.as_str().ok_or_else(|| {
            Error::schema(format!("{path}.__type__"), "expected a string tag")
        })?;
        let reconstructor = self.entries.get(tag).ok_or_else(|| Error::UnknownTag {
            tag: tag.to_string(),
            path: path.to_string(),
        })?;
        reconstructor(self, map, path)
    }

    fn reconstruct_step(&self, value: &Value, path: &str) -> Result<Step> {
        match self.reconstruct(value, path)? {
            Reconstructed::Step(s) => Ok(s),
            other => Err(Error::schema(
                path,
                format!("expected a step document, found {}", kind_name(&other)),
            )),
        }
    }

    fn reconstruct_action(&self, value: &Value, path: &str) -> Result<Action> {
        match self.reconstruct(value, path)? {
            Reconstructed::Action(a) => Ok(a),
            other => Err(Error::schema(
                path,
                format!("expected an action document, found {}", kind_name(&other)),
            )),
        }
    }

    fn reconstruct_state(&self, value: &Value, path: &str) -> Result<State> {
        match self.reconstruct(value, path)? {
            Reconstructed::State(s) => Ok(s),
            other => Err(Error::schema(
                path,
                format!("expected a state document, found {}", kind_name(&other)),
            )),
        }
    }
}

fn kind_name(r: &Reconstructed) -> &'static str {
    match r {
        Reconstructed::Action(_) => "an action",
        Reconstructed::Step(_) => "a step",
        Reconstructed::State(_) => "a state",
    }
}

static GLOBAL_TYPES: LazyLock<RwLock<TypeRegistry>> =
    LazyLock::new(|| RwLock::new(TypeRegistry::with_builtins()));

/// Register an extension type tag on the process-wide registry used by
/// [`deserialize_state`] and [`deserialize_node`].
pub fn register_type(tag: &str, reconstructor: Reconstructor) -> Result<()> {
    GLOBAL_TYPES
        .write()
        .expect("type registry lock poisoned")
        .register(tag, reconstructor)
}

// ---------------------------------------------------------------------------
// Serialization (infallible: every in-memory value has a document form).
// ---------------------------------------------------------------------------

pub(crate) fn action_to_doc(action: &Action) -> Value {
    match action {
        Action::Text { text } => json!({"__type__": "TextAction", "text": text}),
        Action::SubQuestion { sub_question } => {
            json!({"__type__": "SubQuestionAction", "sub_question": sub_question})
        }
        Action::Env { command } => json!({"__type__": "EnvAction", "command": command}),
        Action::Tool(t) => tool_action_to_doc(t),
    }
}

fn tool_action_to_doc(t: &ToolAction) -> Value {
    let arguments: Map<String, Value> = t
        .arguments
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    json!({
        "__type__": "ToolAction",
        "arguments": arguments,
        "is_finish": t.is_finish,
        "thought": t.thought,
        "tool_name": t.tool_name,
    })
}

pub(crate) fn step_to_doc(step: &Step) -> Value {
    match step {
        Step::Concat(s) => json!({"__type__": "ConcatStep", "action": action_to_doc(&s.action)}),
        Step::SubQa(s) => json!({
            "__type__": "SubQaStep",
            "sub_answer": s.sub_answer,
            "sub_question": s.sub_question,
        }),
        Step::Env(s) => {
            let mut map = Map::new();
            map.insert("__type__".into(), json!("EnvStep"));
            map.insert("action".into(), json!(s.action.signature()));
            if let Some(err) = &s.error {
                map.insert("error".into(), json!(err));
            }
            if let Some(next) = &s.next_state_render {
                map.insert("next_state".into(), json!(next));
            }
            Value::Object(map)
        }
        Step::Tool(s) => {
            let mut map = Map::new();
            map.insert("__type__".into(), json!("ToolStep"));
            map.insert("action".into(), tool_action_to_doc(&s.action));
            if let Some(obs) = &s.observation {
                map.insert("observation".into(), json!(obs));
            }
            Value::Object(map)
        }
    }
}

/// The inner state document: `{"__type__", "init_state", "steps"}`.
pub(crate) fn state_inner_doc(state: &State) -> Value {
    json!({
        "__type__": state.kind().tag(),
        "init_state": state.init_render(),
        "steps": state.steps().iter().map(step_to_doc).collect::<Vec<_>>(),
    })
}

/// Checkpoint wrapper for a single state: `{"query", "state"}`.
pub fn serialize_state(state: &State) -> Value {
    json!({
        "query": state.query(),
        "state": state_inner_doc(state),
    })
}

/// Pretty-printed checkpoint text (trailing newline included), as written to
/// chain checkpoint files.
pub fn serialize_state_to_string(state: &State) -> String {
    to_json_string(&serialize_state(state))
}

/// Pretty-print any document the way artifact files are written: two-space
/// indent, lexicographic keys, trailing newline.
pub fn to_json_string(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Node document for tree checkpoints. The node's state is embedded as an
/// inner state document; the owning query is stored once at tree level.
pub fn node_to_doc(node: &Node) -> Value {
    json!({
        "__type__": "SearchNode",
        "child_ids": node.child_ids,
        "depth": node.depth,
        "id": node.id,
        "is_terminal": node.is_terminal,
        "parent_id": node.parent_id,
        "reward": node.reward,
        "rollouts": node.rollouts,
        "state": state_inner_doc(&node.state),
        "value_sum": node.value_sum,
        "visits": node.visits,
    })
}

/// Alias of [`node_to_doc`] kept for symmetry with [`deserialize_node`].
pub fn serialize_node(node: &Node) -> Value {
    node_to_doc(node)
}

// ---------------------------------------------------------------------------
// Deserialization.
// ---------------------------------------------------------------------------

/// Rebuild a state from a checkpoint wrapper using the process-wide registry.
pub fn deserialize_state(doc: &Value) -> Result<State> {
    let registry = GLOBAL_TYPES.read().expect("type registry lock poisoned");
    deserialize_state_with(&registry, doc)
}

/// Rebuild a state from a checkpoint wrapper using an explicit registry.
pub fn deserialize_state_with(registry: &TypeRegistry, doc: &Value) -> Result<State> {
    let map = as_object(doc, "$")?;
    let query = get_str(map, "query", "$")?;
    let state_doc = map
        .get("state")
        .ok_or_else(|| Error::schema("$", "missing field 'state'"))?;
    let state = registry.reconstruct_state(state_doc, "state")?;
    Ok(state.with_query(query.to_string()))
}

/// Rebuild a node from a tree checkpoint document using the process-wide
/// registry.
pub fn deserialize_node_global(doc: &Value, query: &str, path: &str) -> Result<Node> {
    let registry = GLOBAL_TYPES.read().expect("type registry lock poisoned");
    deserialize_node(&registry, doc, query, path)
}

/// Rebuild a node from a tree checkpoint document. `query` is the tree-level
/// query the node's state belongs to.
pub fn deserialize_node(registry: &TypeRegistry, doc: &Value, query: &str, path: &str) -> Result<Node> {
    let map = as_object(doc, path)?;
    let state_doc = map
        .get("state")
        .ok_or_else(|| Error::schema(path, "missing field 'state'"))?;
    let state = registry
        .reconstruct_state(state_doc, &format!("{path}.state"))?
        .with_query(query.to_string());
    let child_ids = get_field(map, "child_ids", path)?;
    let child_ids = child_ids
        .as_array()
        .ok_or_else(|| Error::schema(format!("{path}.child_ids"), "expected an array"))?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_u64()
                .map(|n| n as usize)
                .ok_or_else(|| {
                    Error::schema(format!("{path}.child_ids[{i}]"), "expected an integer")
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let parent_id = match get_field(map, "parent_id", path)? {
        Value::Null => None,
        v => Some(v.as_u64().ok_or_else(|| {
            Error::schema(format!("{path}.parent_id"), "expected an integer or null")
        })? as usize),
    };
    Ok(Node {
        id: get_u64(map, "id", path)? as usize,
        parent_id,
        child_ids,
        state,
        reward: get_f64(map, "reward", path)?,
        value_sum: get_f64(map, "value_sum", path)?,
        visits: get_u64(map, "visits", path)?,
        rollouts: get_u64(map, "rollouts", path)?,
        depth: get_u64(map, "depth", path)? as usize,
        is_terminal: get_bool(map, "is_terminal", path)?,
    })
}

impl State {
    pub(crate) fn with_query(mut self, query: String) -> State {
        self.query = query;
        self
    }
}

// ---------------------------------------------------------------------------
// Built-in reconstructors.
// ---------------------------------------------------------------------------

fn recon_text_action(
    _r: &TypeRegistry,
    map: &Map<String, Value>,
    path: &str,
) -> Result<Reconstructed> {
    Ok(Reconstructed::Action(Action::text(get_str(
        map, "text", path,
    )?)))
}

fn recon_sub_question_action(
    _r: &TypeRegistry,
    map: &Map<String, Value>,
    path: &str,
) -> Result<Reconstructed> {
    Ok(Reconstructed::Action(Action::sub_question(get_str(
        map,
        "sub_question",
        path,
    )?)))
}

fn recon_env_action(
    _r: &TypeRegistry,
    map: &Map<String, Value>,
    path: &str,
) -> Result<Reconstructed> {
    Ok(Reconstructed::Action(Action::env(get_str(
        map, "command", path,
    )?)))
}

fn recon_tool_action(
    _r: &TypeRegistry,
    map: &Map<String, Value>,
    path: &str,
) -> Result<Reconstructed> {
    Ok(Reconstructed::Action(Action::Tool(tool_action_from(
        map, path,
    )?)))
}

fn tool_action_from(map: &Map<String, Value>, path: &str) -> Result<ToolAction> {
    let args_value = get_field(map, "arguments", path)?;
    let args_map = as_object(args_value, &format!("{path}.arguments"))?;
    let arguments = args_map
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok(ToolAction {
        tool_name: get_str(map, "tool_name", path)?.to_string(),
        arguments,
        is_finish: get_bool(map, "is_finish", path)?,
        thought: get_opt_str(map, "thought", path)?.unwrap_or_default(),
    })
}

fn recon_concat_step(
    r: &TypeRegistry,
    map: &Map<String, Value>,
    path: &str,
) -> Result<Reconstructed> {
    let action_doc = get_field(map, "action", path)?;
    let action = r.reconstruct_action(action_doc, &format!("{path}.action"))?;
    Ok(Reconstructed::Step(Step::Concat(ConcatStep { action })))
}

fn recon_sub_qa_step(
    _r: &TypeRegistry,
    map: &Map<String, Value>,
    path: &str,
) -> Result<Reconstructed> {
    Ok(Reconstructed::Step(Step::SubQa(SubQaStep {
        sub_question: get_str(map, "sub_question", path)?.to_string(),
        sub_answer: get_str(map, "sub_answer", path)?.to_string(),
    })))
}

fn recon_env_step(
    _r: &TypeRegistry,
    map: &Map<String, Value>,
    path: &str,
) -> Result<Reconstructed> {
    let command = get_str(map, "action", path)?;
    Ok(Reconstructed::Step(Step::Env(EnvStep {
        action: Action::env(command),
        next_state_render: get_opt_str(map, "next_state", path)?,
        error: get_opt_str(map, "error", path)?,
    })))
}

fn recon_tool_step(
    r: &TypeRegistry,
    map: &Map<String, Value>,
    path: &str,
) -> Result<Reconstructed> {
    let action_doc = get_field(map, "action", path)?;
    let action_path = format!("{path}.action");
    let action = match r.reconstruct_action(action_doc, &action_path)? {
        Action::Tool(t) => t,
        _ => {
            return Err(Error::schema(action_path, "expected a ToolAction document"));
        }
    };
    Ok(Reconstructed::Step(Step::Tool(ToolStep {
        action,
        observation: get_opt_str(map, "observation", path)?,
    })))
}

/// Shared state reconstructor; the const parameter selects the kind so one
/// function body serves all four built-in state tags.
fn recon_state<const K: u8>(
    r: &TypeRegistry,
    map: &Map<String, Value>,
    path: &str,
) -> Result<Reconstructed> {
    let kind = match K {
        0 => StateKind::Trajectory,
        1 => StateKind::Concat,
        2 => StateKind::Env,
        _ => StateKind::Tool,
    };
    let init_render = get_str(map, "init_state", path)?.to_string();
    let steps_value = get_field(map, "steps", path)?;
    let steps_array = steps_value
        .as_array()
        .ok_or_else(|| Error::schema(format!("{path}.steps"), "expected an array"))?;
    let steps = steps_array
        .iter()
        .enumerate()
        .map(|(i, v)| r.reconstruct_step(v, &format!("{path}.steps[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Reconstructed::State(State::from_parts(
        kind,
        String::new(),
        init_render,
        steps,
    )))
}

// ---------------------------------------------------------------------------
// Typed field access with path-aware errors.
// ---------------------------------------------------------------------------

fn as_object<'a>(value: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    value
        .as_object()
        .ok_or_else(|| Error::schema(path, "expected an object"))
}

fn get_field<'a>(map: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    map.get(key)
        .ok_or_else(|| Error::schema(path, format!("missing field '{key}'")))
}

fn get_str<'a>(map: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a str> {
    get_field(map, key, path)?
        .as_str()
        .ok_or_else(|| Error::schema(format!("{path}.{key}"), "expected a string"))
}

fn get_opt_str(map: &Map<String, Value>, key: &str, path: &str) -> Result<Option<String>> {
    match map.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(Error::schema(
            format!("{path}.{key}"),
            "expected a string or null",
        )),
    }
}

fn get_bool(map: &Map<String, Value>, key: &str, path: &str) -> Result<bool> {
    get_field(map, key, path)?
        .as_bool()
        .ok_or_else(|| Error::schema(format!("{path}.{key}"), "expected a boolean"))
}

fn get_u64(map: &Map<String, Value>, key: &str, path: &str) -> Result<u64> {
    get_field(map, key, path)?
        .as_u64()
        .ok_or_else(|| Error::schema(format!("{path}.{key}"), "expected an unsigned integer"))
}

fn get_f64(map: &Map<String, Value>, key: &str, path: &str) -> Result<f64> {
    get_field(map, key, path)?
        .as_f64()
        .ok_or_else(|| Error::schema(format!("{path}.{key}"), "expected a number"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn registry() -> TypeRegistry {
        TypeRegistry::with_builtins()
    }

    #[test]
    fn env_state_checkpoint_matches_flat_action_shape() {
        let mut state = State::new(StateKind::Env, "ACROSS 1. duties", "Current Board:\n_____");
        state.push_step(Step::Env(EnvStep::executed(
            Action::env("h1. tasks"),
            "Current Board:\nTASKS",
        )));
        state.push_step(Step::Env(EnvStep::failed(
            Action::env("h3. arouse"),
            "Validation failed after 1 retries",
        )));
        let doc = serialize_state(&state);
        let expected = json!({
            "query": "ACROSS 1. duties",
            "state": {
                "__type__": "EnvState",
                "init_state": "Current Board:\n_____",
                "steps": [
                    {
                        "__type__": "EnvStep",
                        "action": "h1. tasks",
                        "next_state": "Current Board:\nTASKS"
                    },
                    {
                        "__type__": "EnvStep",
                        "action": "h3. arouse",
                        "error": "Validation failed after 1 retries"
                    }
                ]
            }
        });
        assert_eq!(doc, expected);
    }

    #[test]
    fn error_step_has_no_next_state_key() {
        let step = Step::Env(EnvStep::failed(Action::env("x"), "boom"));
        let doc = step_to_doc(&step);
        let map = doc.as_object().unwrap();
        assert!(map.contains_key("error"));
        assert!(!map.contains_key("next_state"));
    }

    #[test]
    fn pretty_keys_are_lexicographic() {
        let state = State::new(StateKind::Env, "q", "init");
        let text = serialize_state_to_string(&state);
        let qi = text.find("\"query\"").unwrap();
        let si = text.find("\"state\"").unwrap();
        assert!(qi < si);
        let ti = text.find("\"__type__\"").unwrap();
        let ii = text.find("\"init_state\"").unwrap();
        let pi = text.find("\"steps\"").unwrap();
        assert!(ti < ii && ii < pi, "keys out of order in:\n{text}");
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn round_trip_preserves_query_and_steps() {
        let mut state = State::new(StateKind::Concat, "what is 2+2", "Question: what is 2+2");
        state.push_step(Step::concat(Action::text("2+2 = 4")));
        state.push_step(Step::sub_qa("is 4 even?", "yes"));
        let doc = serialize_state(&state);
        let back = deserialize_state_with(&registry(), &doc).unwrap();
        assert_eq!(back, state);
    }

    #[test]
    fn missing_type_tag_reports_path() {
        let doc = json!({
            "query": "q",
            "state": {
                "__type__": "EnvState",
                "init_state": "i",
                "steps": [{"action": "a"}]
            }
        });
        let err = deserialize_state_with(&registry(), &doc).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("state.steps[0]") && msg.contains("missing __type__"),
            "unhelpful error: {msg}"
        );
    }

    #[test]
    fn unknown_tag_reports_tag_and_path() {
        let doc = json!({
            "query": "q",
            "state": {"__type__": "MysteryState", "init_state": "i", "steps": []}
        });
        let err = deserialize_state_with(&registry(), &doc).unwrap_err();
        match err {
            Error::UnknownTag { tag, path } => {
                assert_eq!(tag, "MysteryState");
                assert_eq!(path, "state");
            }
            other => panic!("expected UnknownTag, got {other}"),
        }
    }

    #[test]
    fn duplicate_tag_registration_rejected() {
        let mut r = registry();
        let err = r
            .register("EnvState", Arc::new(recon_state::<2>))
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateTag(t) if t == "EnvState"));
    }

    #[test]
    fn extension_tag_dispatches_through_registry() {
        let mut r = registry();
        r.register(
            "UpperState",
            Arc::new(|reg: &TypeRegistry, map: &Map<String, Value>, path: &str| {
                // Reuse the trajectory reconstructor, then mangle the render to
                // prove the custom code ran.
                let base = recon_state::<0>(reg, map, path)?;
                match base {
                    Reconstructed::State(s) => Ok(Reconstructed::State(State::from_parts(
                        s.kind(),
                        String::new(),
                        s.init_render().to_uppercase(),
                        s.steps().to_vec(),
                    ))),
                    other => Ok(other),
                }
            }),
        )
        .unwrap();
        let doc = json!({
            "query": "q",
            "state": {"__type__": "UpperState", "init_state": "hello", "steps": []}
        });
        let state = deserialize_state_with(&r, &doc).unwrap();
        assert_eq!(state.init_render(), "HELLO");
    }

    #[test]
    fn global_registry_accepts_new_tags_and_rejects_builtins() {
        // Unique tag so this test stays order-independent.
        register_type(
            "GlobalRegistrationProbeState",
            Arc::new(recon_state::<0>),
        )
        .unwrap();
        let err = register_type("EnvState", Arc::new(recon_state::<2>)).unwrap_err();
        assert!(matches!(err, Error::DuplicateTag(_)));
        let doc = json!({
            "query": "q",
            "state": {"__type__": "GlobalRegistrationProbeState", "init_state": "i", "steps": []}
        });
        assert!(deserialize_state(&doc).is_ok());
    }

    #[test]
    fn node_round_trip() {
        let mut state = State::new(StateKind::Env, "q", "init");
        state.push_step(Step::Env(EnvStep::executed(Action::env("a"), "next")));
        let node = Node {
            id: 3,
            parent_id: Some(1),
            child_ids: vec![4, 5],
            state,
            reward: 0.75,
            value_sum: 1.5,
            visits: 2,
            rollouts: 1,
            depth: 2,
            is_terminal: false,
        };
        let doc = node_to_doc(&node);
        let back = deserialize_node(&registry(), &doc, "q", "nodes[3]").unwrap();
        assert_eq!(back, node);
    }

    // ------------------------------------------------------------------
    // Property: serialize -> deserialize is the identity on well-formed
    // states (steps homogeneous with the state kind, as transitions
    // produce them).
    // ------------------------------------------------------------------

    fn arb_text() -> impl Strategy<Value = String> {
        // Printable-ish strings plus newlines and braces to stress escaping.
        proptest::string::string_regex("[ -~\\n{}]{0,40}").unwrap()
    }

    fn arb_tool_action() -> impl Strategy<Value = ToolAction> {
        (
            arb_text(),
            proptest::collection::btree_map(
                "[a-z_]{1,8}",
                prop_oneof![
                    arb_text().prop_map(Value::String),
                    any::<i32>().prop_map(|n| json!(n)),
                    any::<bool>().prop_map(Value::Bool),
                ],
                0..3,
            ),
            any::<bool>(),
            arb_text(),
        )
            .prop_map(|(tool_name, arguments, is_finish, thought)| ToolAction {
                tool_name,
                arguments,
                is_finish,
                thought,
            })
    }

    fn arb_steps(kind: StateKind) -> BoxedStrategy<Vec<Step>> {
        match kind {
            StateKind::Trajectory | StateKind::Concat => proptest::collection::vec(
                prop_oneof![
                    arb_text().prop_map(|t| Step::concat(Action::text(t))),
                    arb_text().prop_map(|q| Step::concat(Action::sub_question(q))),
                    (arb_text(), arb_text()).prop_map(|(q, a)| Step::sub_qa(q, a)),
                ],
                0..5,
            )
            .boxed(),
            StateKind::Env => proptest::collection::vec(
                (arb_text(), arb_text(), any::<bool>()).prop_map(|(cmd, payload, ok)| {
                    if ok {
                        Step::Env(EnvStep::executed(Action::env(cmd), payload))
                    } else {
                        Step::Env(EnvStep::failed(Action::env(cmd), payload))
                    }
                }),
                0..5,
            )
            .boxed(),
            StateKind::Tool => proptest::collection::vec(
                (arb_tool_action(), proptest::option::of(arb_text()))
                    .prop_map(|(action, observation)| Step::Tool(ToolStep { action, observation })),
                0..5,
            )
            .boxed(),
        }
    }

    fn arb_state() -> impl Strategy<Value = State> {
        prop_oneof![
            Just(StateKind::Trajectory),
            Just(StateKind::Concat),
            Just(StateKind::Env),
            Just(StateKind::Tool),
        ]
        .prop_flat_map(|kind| {
            (arb_text(), arb_text(), arb_steps(kind)).prop_map(move |(query, init, steps)| {
                State::from_parts(kind, query, init, steps)
            })
        })
    }

    proptest! {
        #[test]
        fn prop_state_round_trip(state in arb_state()) {
            let doc = serialize_state(&state);
            let back = deserialize_state_with(&registry(), &doc).unwrap();
            prop_assert_eq!(back, state);
        }

        #[test]
        fn prop_serialized_text_parses_back_to_same_doc(state in arb_state()) {
            let doc = serialize_state(&state);
            let text = serialize_state_to_string(&state);
            let reparsed: Value = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(reparsed, doc);
        }
    }
}
