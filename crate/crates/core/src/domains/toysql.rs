//! Table lookup via a miniature SQL tool.
//!
//! A tool-use task: the agent answers questions about two bundled,
//! read-only tables by calling the `run_sql` tool, then finishes with a
//! plain-text answer graded by exact match. The tool understands exactly
//! one query shape:
//!
//! ```text
//! SELECT <column|*> FROM <table> [WHERE <column> = '<value>']
//! ```
//!
//! Keywords and names are case-insensitive; the `WHERE` value may be quoted
//! or a bare token; a trailing semicolon is ignored.

use std::collections::BTreeMap;
use std::path::Path;

use super::{read_data_file, AnswerChecker, Dataset, QueryRecord, TaskType};
use crate::error::{Error, Result};
use crate::tools::{ArgField, ArgType, ResourceBundle, Tool};

#[derive(Debug, Clone)]
struct Table {
    name: &'static str,
    columns: Vec<&'static str>,
    rows: Vec<Vec<&'static str>>,
}

fn fixture_tables() -> Vec<Table> {
    vec![
        Table {
            name: "cities",
            columns: vec!["name", "country", "population"],
            rows: vec![
                vec!["Paris", "France", "2140000"],
                vec!["Lyon", "France", "513000"],
                vec!["Berlin", "Germany", "3645000"],
                vec!["Madrid", "Spain", "3223000"],
            ],
        },
        Table {
            name: "employees",
            columns: vec!["name", "department", "salary"],
            rows: vec![
                vec!["Alice", "Engineering", "95000"],
                vec!["Bob", "Sales", "60000"],
                vec!["Carol", "Engineering", "105000"],
                vec!["Dave", "Marketing", "70000"],
            ],
        },
    ]
}

/// The `run_sql` tool over the fixture tables.
#[derive(Debug)]
pub struct SqlTool {
    tables: Vec<Table>,
    description: String,
}

impl Default for SqlTool {
    fn default() -> Self {
        SqlTool::new()
    }
}

impl SqlTool {
    pub fn new() -> Self {
        let tables = fixture_tables();
        let listing = tables
            .iter()
            .map(|t| format!("{}({})", t.name, t.columns.join(", ")))
            .collect::<Vec<_>>()
            .join(", ");
        SqlTool {
            description: format!(
                "Run a read-only SQL query. Syntax: SELECT <column|*> FROM <table> \
                 [WHERE <column> = '<value>']. Tables: {listing}."
            ),
            tables,
        }
    }

    fn execute(&self, query: &str) -> std::result::Result<String, String> {
        let parsed = parse_query(query)?;
        let table = self
            .tables
            .iter()
            .find(|t| t.name.eq_ignore_ascii_case(&parsed.table))
            .ok_or_else(|| {
                format!(
                    "unknown table '{}'; available tables: {}",
                    parsed.table,
                    self.tables
                        .iter()
                        .map(|t| t.name)
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            })?;
        let column_index = |name: &str| -> std::result::Result<usize, String> {
            table
                .columns
                .iter()
                .position(|c| c.eq_ignore_ascii_case(name))
                .ok_or_else(|| {
                    format!(
                        "unknown column '{}' in table '{}'; columns: {}",
                        name,
                        table.name,
                        table.columns.join(", ")
                    )
                })
        };
        let projection: Vec<usize> = match parsed.column.as_str() {
            "*" => (0..table.columns.len()).collect(),
            name => vec![column_index(name)?],
        };
        let filter = match &parsed.condition {
            Some((column, value)) => Some((column_index(column)?, value.clone())),
            None => None,
        };

        let mut lines = vec![projection
            .iter()
            .map(|&i| table.columns[i])
            .collect::<Vec<_>>()
            .join(" | ")];
        let mut matched = 0;
        for row in &table.rows {
            if let Some((index, value)) = &filter {
                if !row[*index].eq_ignore_ascii_case(value) {
                    continue;
                }
            }
            matched += 1;
            lines.push(
                projection
                    .iter()
                    .map(|&i| row[i])
                    .collect::<Vec<_>>()
                    .join(" | "),
            );
        }
        if matched == 0 {
            lines.push("(no rows)".to_string());
        }
        Ok(lines.join("\n"))
    }
}

#[derive(Debug, PartialEq)]
struct ParsedQuery {
    column: String,
    table: String,
    condition: Option<(String, String)>,
}

fn tokenize(query: &str) -> std::result::Result<Vec<String>, String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut chars = query.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\'' => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                let mut quoted = String::new();
                loop {
                    match chars.next() {
                        Some('\'') => break,
                        Some(inner) => quoted.push(inner),
                        None => return Err("unterminated quoted value".to_string()),
                    }
                }
                tokens.push(quoted);
            }
            '=' => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push("=".to_string());
            }
            c if c.is_whitespace() => {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            }
            c => current.push(c),
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    if let Some(last) = tokens.last_mut() {
        if let Some(stripped) = last.strip_suffix(';') {
            if stripped.is_empty() {
                tokens.pop();
            } else {
                *last = stripped.to_string();
            }
        }
    }
    Ok(tokens)
}

fn parse_query(query: &str) -> std::result::Result<ParsedQuery, String> {
    let usage = "cannot parse query; expected SELECT <column|*> FROM <table> \
                 [WHERE <column> = '<value>']";
    let tokens = tokenize(query).map_err(|e| format!("{usage} ({e})"))?;
    let keyword = |i: usize, word: &str| {
        tokens
            .get(i)
            .is_some_and(|t| t.eq_ignore_ascii_case(word))
    };
    if tokens.len() < 4 || !keyword(0, "select") || !keyword(2, "from") {
        return Err(usage.to_string());
    }
    let column = tokens[1].clone();
    let table = tokens[3].clone();
    let condition = match tokens.len() {
        4 => None,
        8 if keyword(4, "where") && tokens[6] == "=" => {
            Some((tokens[5].clone(), tokens[7].clone()))
        }
        _ => return Err(usage.to_string()),
    };
    Ok(ParsedQuery {
        column,
        table,
        condition,
    })
}

impl Tool for SqlTool {
    fn name(&self) -> &str {
        "run_sql"
    }

    fn description(&self) -> &str {
        &self.description
    }

    fn args_schema(&self) -> Vec<ArgField> {
        vec![ArgField::required(
            "query",
            ArgType::String,
            "the SQL text to execute",
        )]
    }

    fn run(
        &self,
        arguments: &BTreeMap<String, serde_json::Value>,
    ) -> std::result::Result<String, String> {
        let query = arguments
            .get("query")
            .and_then(|v| v.as_str())
            .ok_or_else(|| "missing required argument 'query'".to_string())?;
        self.execute(query)
    }
}

fn builtin_questions() -> Vec<QueryRecord> {
    [
        ("Which country is the city Lyon in?", "France"),
        ("What is the population of Berlin?", "3645000"),
        ("Which department does Carol work in?", "Engineering"),
        ("What is the salary of Bob?", "60000"),
        ("How many cities in the cities table are in France?", "2"),
        ("Which employee works in Marketing?", "Dave"),
    ]
    .into_iter()
    .map(|(query, gold)| QueryRecord::new(query).with_gold(gold))
    .collect()
}

/// Load the table-lookup dataset. The data file is a JSON array of bare
/// query strings or `{"query", "gold"}` objects; the tables behind the
/// `run_sql` tool are fixed. Without a file, six built-in questions are
/// used.
pub fn load(data_file: Option<&Path>) -> Result<Dataset> {
    let queries = match data_file {
        Some(path) => {
            let value = read_data_file(path)?;
            let entries = value.as_array().ok_or_else(|| {
                Error::Config(format!("{}: expected a JSON array", path.display()))
            })?;
            let mut queries = Vec::new();
            for (i, entry) in entries.iter().enumerate() {
                match entry {
                    serde_json::Value::String(s) => queries.push(QueryRecord::new(s.clone())),
                    serde_json::Value::Object(map) => {
                        let query = map.get("query").and_then(|v| v.as_str()).ok_or_else(|| {
                            Error::Config(format!(
                                "{} entry {i}: missing string field 'query'",
                                path.display()
                            ))
                        })?;
                        let mut record = QueryRecord::new(query);
                        if let Some(gold) = map.get("gold").and_then(|v| v.as_str()) {
                            record = record.with_gold(gold);
                        }
                        queries.push(record);
                    }
                    _ => {
                        return Err(Error::Config(format!(
                            "{} entry {i}: expected a string or object",
                            path.display()
                        )));
                    }
                }
            }
            queries
        }
        None => builtin_questions(),
    };
    Ok(Dataset {
        name: "toy-sql".to_string(),
        task_type: TaskType::ToolUse,
        queries,
        environment: None,
        resources: Some(ResourceBundle::new().with_tool(std::sync::Arc::new(SqlTool::new()))),
        checker: AnswerChecker::ExactMatch,
    })
}
