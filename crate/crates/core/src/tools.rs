//! Tool protocol for tool-use tasks.
//!
//! A [`Tool`] advertises a name, a description and a typed argument schema;
//! a [`ResourceBundle`] is the set of tools one task exposes. Execution goes
//! through [`ResourceBundle::run_tool`], which validates arguments against
//! the schema and reports problems *as observations* rather than errors:
//! a tool-use agent should read "unknown tool" or "missing argument" in its
//! scratchpad and recover, not crash the search.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::Value;

use crate::structures::ToolAction;

/// Accepted JSON types for a tool argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgType {
    String,
    Integer,
    Number,
    Boolean,
}

impl ArgType {
    pub fn as_str(self) -> &'static str {
        match self {
            ArgType::String => "string",
            ArgType::Integer => "integer",
            ArgType::Number => "number",
            ArgType::Boolean => "boolean",
        }
    }

    fn accepts(self, value: &Value) -> bool {
        match self {
            ArgType::String => value.is_string(),
            ArgType::Integer => value.is_i64() || value.is_u64(),
            ArgType::Number => value.is_number(),
            ArgType::Boolean => value.is_boolean(),
        }
    }
}

/// One argument in a tool's schema.
#[derive(Debug, Clone)]
pub struct ArgField {
    pub name: String,
    pub description: String,
    pub arg_type: ArgType,
    pub required: bool,
}

impl ArgField {
    pub fn required(name: &str, arg_type: ArgType, description: &str) -> Self {
        ArgField {
            name: name.to_string(),
            description: description.to_string(),
            arg_type,
            required: true,
        }
    }

    pub fn optional(name: &str, arg_type: ArgType, description: &str) -> Self {
        ArgField {
            required: false,
            ..Self::required(name, arg_type, description)
        }
    }
}

/// A callable tool.
pub trait Tool: Send + Sync {
    fn name(&self) -> &str;
    fn description(&self) -> &str;
    fn args_schema(&self) -> Vec<ArgField>;

    /// Execute with already-validated arguments. A returned `Err` string is
    /// surfaced to the agent as a `Tool error:` observation.
    fn run(&self, args: &BTreeMap<String, Value>) -> Result<String, String>;
}

/// The toolbox one task exposes to its agent.
#[derive(Clone, Default)]
pub struct ResourceBundle {
    tools: Vec<Arc<dyn Tool>>,
}

impl std::fmt::Debug for ResourceBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResourceBundle")
            .field("tools", &self.tool_names())
            .finish()
    }
}

impl ResourceBundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_tool(mut self, tool: Arc<dyn Tool>) -> Self {
        self.tools.push(tool);
        self
    }

    pub fn tool_names(&self) -> Vec<String> {
        self.tools.iter().map(|t| t.name().to_string()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn Tool>> {
        self.tools.iter().find(|t| t.name() == name)
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    /// Validate and execute a tool action, returning the observation text.
    /// Unknown tools, schema violations and tool failures all come back as
    /// observations the agent can react to.
    pub fn run_tool(&self, action: &ToolAction) -> String {
        let Some(tool) = self.get(&action.tool_name) else {
            return format!(
                "Unknown tool '{}'. Available tools: {}.",
                action.tool_name,
                self.tool_names().join(", ")
            );
        };
        if let Some(problem) = validate_args(&tool.args_schema(), &action.arguments) {
            return format!("Validation error: {problem}");
        }
        match tool.run(&action.arguments) {
            Ok(observation) => observation,
            Err(e) => format!("Tool error: {e}"),
        }
    }

    /// Human-readable catalog injected into tool-use prompts.
    pub fn render_catalog(&self) -> String {
        let mut out = String::new();
        for tool in &self.tools {
            out.push_str(&format!("- {}: {}\n", tool.name(), tool.description()));
            let schema = tool.args_schema();
            if schema.is_empty() {
                out.push_str("  arguments: none\n");
            } else {
                out.push_str("  arguments:\n");
                for field in schema {
                    out.push_str(&format!(
                        "    {} ({}{}): {}\n",
                        field.name,
                        field.arg_type.as_str(),
                        if field.required { ", required" } else { "" },
                        field.description
                    ));
                }
            }
        }
        out
    }
}

/// First schema violation, if any: missing required fields, unknown fields,
/// then type mismatches, in that order.
fn validate_args(schema: &[ArgField], args: &BTreeMap<String, Value>) -> Option<String> {
    for field in schema {
        if field.required && !args.contains_key(&field.name) {
            return Some(format!("missing required argument '{}'", field.name));
        }
    }
    for key in args.keys() {
        if !schema.iter().any(|f| &f.name == key) {
            return Some(format!(
                "unknown argument '{key}' (accepted: {})",
                schema
                    .iter()
                    .map(|f| f.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
        }
    }
    for field in schema {
        if let Some(value) = args.get(&field.name) {
            if !field.arg_type.accepts(value) {
                return Some(format!(
                    "argument '{}' must be a {}, got {}",
                    field.name,
                    field.arg_type.as_str(),
                    json_type_name(value)
                ));
            }
        }
    }
    None
}

fn json_type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Simple key-value lookup tool used in tests and the toy SQL task: returns
/// the value stored under a key in an in-memory table.
pub struct LookupTool {
    name: String,
    description: String,
    table: BTreeMap<String, String>,
}

impl LookupTool {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        table: BTreeMap<String, String>,
    ) -> Self {
        LookupTool {
            name: name.into(),
            description: description.into(),
            table,
        }
    }
}

impl Tool for LookupTool {
    fn name(&self) -> &str {
        &self.name
    }

    fn description(&self) -> &str {
        &self.description
    }

    fn args_schema(&self) -> Vec<ArgField> {
        vec![ArgField::required(
            "key",
            ArgType::String,
            "key to look up",
        )]
    }

    fn run(&self, args: &BTreeMap<String, Value>) -> Result<String, String> {
        let key = args["key"].as_str().expect("validated as string");
        match self.table.get(key) {
            Some(v) => Ok(v.clone()),
            None => Err(format!("no entry for key '{key}'")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn bundle() -> ResourceBundle {
        let mut table = BTreeMap::new();
        table.insert("capital_of_france".to_string(), "Paris".to_string());
        ResourceBundle::new().with_tool(Arc::new(LookupTool::new(
            "lookup",
            "look up a fact by key",
            table,
        )))
    }

    fn action(tool: &str, args: Value) -> ToolAction {
        ToolAction {
            tool_name: tool.to_string(),
            arguments: args
                .as_object()
                .unwrap()
                .iter()
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            is_finish: false,
            thought: String::new(),
        }
    }

    #[test]
    fn valid_call_returns_tool_output() {
        let obs = bundle().run_tool(&action("lookup", json!({"key": "capital_of_france"})));
        assert_eq!(obs, "Paris");
    }

    #[test]
    fn unknown_tool_is_an_observation() {
        let obs = bundle().run_tool(&action("search_web", json!({})));
        assert!(obs.contains("Unknown tool 'search_web'"), "{obs}");
        assert!(obs.contains("lookup"), "{obs}");
    }

    #[test]
    fn missing_required_argument_is_an_observation() {
        let obs = bundle().run_tool(&action("lookup", json!({})));
        assert_eq!(obs, "Validation error: missing required argument 'key'");
    }

    #[test]
    fn unknown_argument_is_an_observation() {
        let obs = bundle().run_tool(&action("lookup", json!({"key": "x", "limit": 3})));
        assert!(obs.contains("unknown argument 'limit'"), "{obs}");
    }

    #[test]
    fn wrong_type_is_an_observation() {
        let obs = bundle().run_tool(&action("lookup", json!({"key": 42})));
        assert_eq!(
            obs,
            "Validation error: argument 'key' must be a string, got number"
        );
    }

    #[test]
    fn tool_failure_is_an_observation() {
        let obs = bundle().run_tool(&action("lookup", json!({"key": "nope"})));
        assert_eq!(obs, "Tool error: no entry for key 'nope'");
    }

    #[test]
    fn catalog_lists_tools_and_schemas() {
        let text = bundle().render_catalog();
        assert!(text.contains("- lookup: look up a fact by key"), "{text}");
        assert!(text.contains("key (string, required)"), "{text}");
    }
}
