//! Built-in task domains and the dataset abstraction.
//!
//! A [`Dataset`] bundles the queries to solve, the task type (which selects
//! default components), any grounded environment or tool resources the task
//! needs, and the correctness check for final answers. Four domains ship:
//! block stacking ([`blocksworld`]), 5x5 crossword filling ([`crosswords`]),
//! small arithmetic word problems ([`math`]) and a table-lookup agent task
//! ([`toysql`]).

pub mod blocksworld;
pub mod crosswords;
pub mod math;
pub mod toysql;

use std::path::Path;
use std::sync::Arc;

use crate::components::Environment;
use crate::error::{Error, Result};
use crate::structures::State;
use crate::tools::ResourceBundle;

/// Coarse task category; selects default policy/transition/reward components
/// and scopes prompt fallbacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TaskType {
    /// Free-text reasoning; states are text trajectories.
    LanguageGrounded,
    /// An executable environment validates and applies actions.
    EnvGrounded,
    /// The agent calls tools and finishes with an answer.
    ToolUse,
}

impl TaskType {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::LanguageGrounded => "language_grounded",
            TaskType::EnvGrounded => "env_grounded",
            TaskType::ToolUse => "tool_use",
        }
    }

    pub fn parse(text: &str) -> Result<TaskType> {
        match text {
            "language_grounded" => Ok(TaskType::LanguageGrounded),
            "env_grounded" => Ok(TaskType::EnvGrounded),
            "tool_use" => Ok(TaskType::ToolUse),
            other => Err(Error::Config(format!(
                "unknown task type '{other}' (expected language_grounded, env_grounded or tool_use)"
            ))),
        }
    }
}

impl std::fmt::Display for TaskType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One query to solve, with its reference answer when the dataset knows it.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub query: String,
    pub gold: Option<String>,
}

impl QueryRecord {
    pub fn new(query: impl Into<String>) -> Self {
        QueryRecord {
            query: query.into(),
            gold: None,
        }
    }

    pub fn with_gold(mut self, gold: impl Into<String>) -> Self {
        self.gold = Some(gold.into());
        self
    }
}

/// How final answers are judged correct.
#[derive(Clone)]
pub enum AnswerChecker {
    /// Trimmed, case-insensitive string equality against the gold answer.
    ExactMatch,
    /// Numeric equivalence within 1e-6 (exact rational arithmetic), so
    /// `0.5` matches `1/2`.
    MathEquivalent,
    /// The final state must satisfy the environment's goal test; the answer
    /// string is irrelevant.
    EnvGoal,
}

impl std::fmt::Debug for AnswerChecker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            AnswerChecker::ExactMatch => "ExactMatch",
            AnswerChecker::MathEquivalent => "MathEquivalent",
            AnswerChecker::EnvGoal => "EnvGoal",
        };
        f.write_str(name)
    }
}

/// A loaded task: queries plus everything components need to run them.
#[derive(Clone)]
pub struct Dataset {
    pub name: String,
    pub task_type: TaskType,
    pub queries: Vec<QueryRecord>,
    /// Present for environment-grounded tasks.
    pub environment: Option<Arc<dyn Environment>>,
    /// Present for tool-use tasks.
    pub resources: Option<ResourceBundle>,
    pub checker: AnswerChecker,
}

impl std::fmt::Debug for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dataset")
            .field("name", &self.name)
            .field("task_type", &self.task_type.as_str())
            .field("queries", &self.queries.len())
            .field("checker", &self.checker)
            .finish_non_exhaustive()
    }
}

impl Dataset {
    /// Judge a final answer/state for query `index`.
    pub fn is_correct(
        &self,
        index: usize,
        answer: Option<&str>,
        final_state: Option<&State>,
    ) -> bool {
        let Some(record) = self.queries.get(index) else {
            return false;
        };
        match &self.checker {
            AnswerChecker::ExactMatch => match (answer, &record.gold) {
                (Some(a), Some(g)) => a.trim().eq_ignore_ascii_case(g.trim()),
                _ => false,
            },
            AnswerChecker::MathEquivalent => match (answer, &record.gold) {
                (Some(a), Some(g)) => math::eval_math_answer(a, g),
                _ => false,
            },
            AnswerChecker::EnvGoal => match (&self.environment, final_state) {
                (Some(env), Some(state)) => env.is_goal(state),
                _ => false,
            },
        }
    }
}

/// Load a built-in dataset by name, optionally from a data file.
///
/// Known names: `blocksworld`, `crosswords`, `toy-math`, `toy-sql`. Without
/// a data file each domain supplies a small built-in query set.
pub fn load_dataset(name: &str, data_file: Option<&Path>) -> Result<Dataset> {
    match name {
        "blocksworld" => blocksworld::load(data_file),
        "crosswords" => crosswords::load(data_file),
        "toy-math" => math::load(data_file),
        "toy-sql" => toysql::load(data_file),
        other => Err(Error::NotFound {
            kind: "dataset".to_string(),
            name: other.to_string(),
            available: "blocksworld, crosswords, toy-math, toy-sql".to_string(),
        }),
    }
}

/// Names of all built-in datasets.
pub const DATASET_NAMES: [&str; 4] = ["blocksworld", "crosswords", "toy-math", "toy-sql"];

pub(crate) fn read_data_file(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read data file {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("data file {} is not valid JSON: {e}", path.display())))
}
