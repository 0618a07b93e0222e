//! Prompt storage with task-aware fallback.
//!
//! Components never hard-code prompt text; they ask the registry for a
//! template by `(component, slot)` and the registry resolves the most
//! specific registration available:
//!
//! 1. an explicit template attached to the component instance,
//! 2. a template registered for the concrete task name,
//! 3. a template registered for the task type (skipped when the query has no
//!    task type, i.e. for instance-specific components),
//! 4. the default template.
//!
//! Templates use single-brace placeholders (`{question}`); doubled braces
//! (`{{`, `}}`) emit literal braces so templates can contain JSON examples.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::error::{Error, Result};

/// A stored template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    pub template: String,
}

impl PromptSpec {
    pub fn new(template: impl Into<String>) -> Self {
        PromptSpec {
            template: template.into(),
        }
    }
}

/// Specificity level a template is registered under.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum PromptScope {
    /// Fallback of last resort.
    Default,
    /// Applies to every task of one type (e.g. all environment-grounded tasks).
    TaskType(String),
    /// Applies to one concrete task (e.g. one dataset).
    Task(String),
}

impl std::fmt::Display for PromptScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PromptScope::Default => write!(f, "default"),
            PromptScope::TaskType(t) => write!(f, "task_type:{t}"),
            PromptScope::Task(t) => write!(f, "task:{t}"),
        }
    }
}

/// Everything needed to resolve one prompt lookup.
#[derive(Debug, Clone, Copy, Default)]
pub struct PromptQuery<'a> {
    pub component: &'a str,
    pub slot: &'a str,
    /// Concrete task name, when running against a known dataset.
    pub task_name: Option<&'a str>,
    /// Task type of the component. `None` for instance-specific components,
    /// which therefore never match task-type registrations.
    pub task_type: Option<&'a str>,
    /// Template bound directly to the instance; wins over everything.
    pub explicit: Option<&'a str>,
}

type Key = (String, String, PromptScope);

/// Prompt store. Strict `register` for built-ins (collisions are bugs),
/// upserting `set` for user overrides.
#[derive(Debug, Clone, Default)]
pub struct PromptRegistry {
    entries: BTreeMap<Key, PromptSpec>,
}

impl PromptRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a template; rejects collisions on the same
    /// `(component, slot, scope)` key.
    pub fn register(
        &mut self,
        component: &str,
        slot: &str,
        scope: PromptScope,
        template: impl Into<String>,
    ) -> Result<()> {
        let key = (component.to_string(), slot.to_string(), scope);
        if self.entries.contains_key(&key) {
            return Err(Error::DuplicatePrompt(format!(
                "{}/{} at scope {}",
                key.0, key.1, key.2
            )));
        }
        self.entries.insert(key, PromptSpec::new(template));
        Ok(())
    }

    /// Insert or replace a template (used by override files).
    pub fn set(
        &mut self,
        component: &str,
        slot: &str,
        scope: PromptScope,
        template: impl Into<String>,
    ) {
        self.entries.insert(
            (component.to_string(), slot.to_string(), scope),
            PromptSpec::new(template),
        );
    }

    fn get(&self, component: &str, slot: &str, scope: &PromptScope) -> Option<&PromptSpec> {
        // Borrow-friendly lookup without cloning the key.
        self.entries
            .iter()
            .find(|((c, s, sc), _)| c == component && s == slot && sc == scope)
            .map(|(_, spec)| spec)
    }

    /// Resolve a query through the fallback chain. The error message lists
    /// every scope that was tried.
    pub fn resolve(&self, query: &PromptQuery<'_>) -> Result<PromptSpec> {
        if let Some(explicit) = query.explicit {
            return Ok(PromptSpec::new(explicit));
        }
        if let Some(task) = query.task_name {
            if let Some(spec) = self.get(
                query.component,
                query.slot,
                &PromptScope::Task(task.to_string()),
            ) {
                return Ok(spec.clone());
            }
        }
        if let Some(task_type) = query.task_type {
            if let Some(spec) = self.get(
                query.component,
                query.slot,
                &PromptScope::TaskType(task_type.to_string()),
            ) {
                return Ok(spec.clone());
            }
        }
        if let Some(spec) = self.get(query.component, query.slot, &PromptScope::Default) {
            return Ok(spec.clone());
        }
        let mut tried = Vec::new();
        if let Some(t) = query.task_name {
            tried.push(format!("task:{t}"));
        }
        if let Some(t) = query.task_type {
            tried.push(format!("task_type:{t}"));
        }
        tried.push("default".to_string());
        Err(Error::MissingPrompt(format!(
            "{}/{} (tried scopes: {})",
            query.component,
            query.slot,
            tried.join(", ")
        )))
    }

    /// Resolve and render in one call.
    pub fn render(
        &self,
        query: &PromptQuery<'_>,
        bindings: &BTreeMap<String, String>,
    ) -> Result<String> {
        let spec = self.resolve(query)?;
        render_template(&spec.template, bindings)
    }

    /// Apply a JSON override document. Returns the number of templates set.
    ///
    /// The document is a list of entries:
    /// `{"component", "slot", "template"}` plus at most one of `"task"` or
    /// `"task_type"` (neither means the default scope).
    pub fn load_overrides_json(&mut self, text: &str) -> Result<usize> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Entry {
            component: String,
            slot: String,
            template: String,
            #[serde(default)]
            task: Option<String>,
            #[serde(default)]
            task_type: Option<String>,
        }
        let entries: Vec<Entry> = serde_json::from_str(text)?;
        let count = entries.len();
        for e in entries {
            let scope = match (e.task, e.task_type) {
                (Some(_), Some(_)) => {
                    return Err(Error::Config(format!(
                        "prompt override for {}/{} sets both 'task' and 'task_type'; pick one",
                        e.component, e.slot
                    )));
                }
                (Some(task), None) => PromptScope::Task(task),
                (None, Some(tt)) => PromptScope::TaskType(tt),
                (None, None) => PromptScope::Default,
            };
            self.set(&e.component, &e.slot, scope, e.template);
        }
        Ok(count)
    }

    /// Number of stored templates.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Substitute `{name}` placeholders from `bindings`. `{{` and `}}` are
/// literal braces; a lone `}` passes through unchanged; an unclosed `{` is a
/// configuration error. A placeholder with no binding is an error naming the
/// placeholder.
pub fn render_template(template: &str, bindings: &BTreeMap<String, String>) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut chars = template.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' => {
                if chars.peek() == Some(&'{') {
                    chars.next();
                    out.push('{');
                    continue;
                }
                let mut name = String::new();
                let mut closed = false;
                for c in chars.by_ref() {
                    if c == '}' {
                        closed = true;
                        break;
                    }
                    name.push(c);
                }
                if !closed {
                    return Err(Error::Config(format!(
                        "unclosed '{{' in prompt template (placeholder '{name}')"
                    )));
                }
                match bindings.get(&name) {
                    Some(value) => out.push_str(value),
                    None => return Err(Error::MissingBinding(name)),
                }
            }
            '}' => {
                if chars.peek() == Some(&'}') {
                    chars.next();
                }
                out.push('}');
            }
            other => out.push(other),
        }
    }
    Ok(out)
}

/// Convenience for building binding maps: `bindings(&[("q", "...")])`.
pub fn bindings(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
