//! Inference accounting: every LLM call is recorded with who made it
//! (component and instance), why (search phase), and what it cost (tokens,
//! wall time). Reports aggregate along each axis, price out a run against a
//! per-model cost table, and summarize sampling diversity across queries.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backends::Usage;
use crate::error::{Error, Result};

/// Which part of the search loop triggered an LLM call.
///
/// Reward-model judging is its own phase regardless of where in the loop the
/// judgment happened, so "how much did scoring cost" is always answerable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Selection,
    Expansion,
    Simulation,
    Backprop,
    ChainStep,
    Judge,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Selection => "selection",
            Phase::Expansion => "expansion",
            Phase::Simulation => "simulation",
            Phase::Backprop => "backprop",
            Phase::ChainStep => "chain_step",
            Phase::Judge => "judge",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One LLM call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRecord {
    /// Component type that made the call, e.g. `"env_grounded_policy"`.
    pub component: String,
    /// Instance label, distinguishing two instances of the same component
    /// type in one assembly, e.g. `"policy"` or `"branch_evaluator"`.
    pub instance: String,
    pub phase: Phase,
    pub model: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Samples requested in this single call.
    pub n_samples: usize,
    pub temperature: f64,
    pub duration_ms: u64,
    /// Index of the query within the dataset, when known.
    pub query_index: Option<usize>,
    /// Search iteration (or BFS level / chain step) when the call happened
    /// inside an engine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
    /// Tree depth of the state being worked on, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// Wall-clock time of the call, milliseconds since the Unix epoch.
    #[serde(default)]
    pub timestamp_ms: u64,
}

impl InferenceRecord {
    pub fn usage(&self) -> Usage {
        Usage {
            prompt_tokens: self.prompt_tokens,
            completion_tokens: self.completion_tokens,
        }
    }

    /// Current wall-clock time in milliseconds since the Unix epoch.
    pub fn now_ms() -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Totals along one aggregation key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AggregateRow {
    pub calls: u64,
    pub samples: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl AggregateRow {
    fn absorb(&mut self, record: &InferenceRecord) {
        self.calls += 1;
        self.samples += record.n_samples as u64;
        self.prompt_tokens += record.prompt_tokens;
        self.completion_tokens += record.completion_tokens;
    }

    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

/// Call/token totals grouped by component, instance, phase and model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateReport {
    pub by_component: BTreeMap<String, AggregateRow>,
    pub by_instance: BTreeMap<String, AggregateRow>,
    pub by_phase: BTreeMap<String, AggregateRow>,
    pub by_model: BTreeMap<String, AggregateRow>,
    pub total: AggregateRow,
}

/// Thread-safe sink for inference records. Keeps everything in memory for
/// reporting and optionally streams each record as one JSONL line.
#[derive(Debug, Default)]
pub struct InferenceLogger {
    inner: Mutex<LoggerInner>,
}

#[derive(Debug, Default)]
struct LoggerInner {
    records: Vec<InferenceRecord>,
    sink: Option<std::fs::File>,
}

impl InferenceLogger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Logger that also appends each record to `path` as JSONL.
    pub fn with_file(path: impl AsRef<Path>) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path.as_ref())?;
        Ok(InferenceLogger {
            inner: Mutex::new(LoggerInner {
                records: Vec::new(),
                sink: Some(file),
            }),
        })
    }

    /// Attach (or replace) the JSONL stream on an existing logger.
    pub fn attach_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path.as_ref())?;
        self.inner.lock().expect("logger lock poisoned").sink = Some(file);
        Ok(())
    }

    pub fn log(&self, record: InferenceRecord) {
        let mut inner = self.inner.lock().expect("logger lock poisoned");
        if let Some(sink) = &mut inner.sink {
            if let Ok(line) = serde_json::to_string(&record) {
                // Stream is best effort; accounting stays in memory.
                let _ = writeln!(sink, "{line}");
            }
        }
        inner.records.push(record);
    }

    /// Snapshot of all records so far.
    pub fn records(&self) -> Vec<InferenceRecord> {
        self.inner.lock().expect("logger lock poisoned").records.clone()
    }

    pub fn call_count(&self) -> u64 {
        self.inner.lock().expect("logger lock poisoned").records.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.call_count() == 0
    }

    pub fn total_usage(&self) -> Usage {
        let inner = self.inner.lock().expect("logger lock poisoned");
        inner.records.iter().fold(Usage::default(), |acc, r| {
            acc + Usage {
                prompt_tokens: r.prompt_tokens,
                completion_tokens: r.completion_tokens,
            }
        })
    }

    /// Aggregate all records along every axis.
    pub fn aggregate(&self) -> AggregateReport {
        aggregate(&self.inner.lock().expect("logger lock poisoned").records)
    }
}

/// Aggregate a record slice along component, instance, phase and model.
pub fn aggregate(records: &[InferenceRecord]) -> AggregateReport {
    let mut report = AggregateReport::default();
    for r in records {
        report
            .by_component
            .entry(r.component.clone())
            .or_default()
            .absorb(r);
        report
            .by_instance
            .entry(r.instance.clone())
            .or_default()
            .absorb(r);
        report
            .by_phase
            .entry(r.phase.as_str().to_string())
            .or_default()
            .absorb(r);
        report.by_model.entry(r.model.clone()).or_default().absorb(r);
        report.total.absorb(r);
    }
    report
}

/// Price of one model in dollars per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    pub input_per_million: f64,
    pub output_per_million: f64,
}

/// Dollar pricing for a set of models.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostModel {
    prices: BTreeMap<String, ModelPrice>,
}

impl CostModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_price(
        mut self,
        model: impl Into<String>,
        input_per_million: f64,
        output_per_million: f64,
    ) -> Self {
        self.set_price(model, input_per_million, output_per_million);
        self
    }

    pub fn set_price(
        &mut self,
        model: impl Into<String>,
        input_per_million: f64,
        output_per_million: f64,
    ) {
        self.prices.insert(
            model.into(),
            ModelPrice {
                input_per_million,
                output_per_million,
            },
        );
    }

    pub fn price_of(&self, model: &str) -> Option<ModelPrice> {
        self.prices.get(model).copied()
    }

    /// Dollar cost of a report. Every model present in the report must be
    /// priced; an unpriced model is an error, not a silent zero.
    pub fn cost_of(&self, report: &AggregateReport) -> Result<f64> {
        let mut dollars = 0.0;
        for (model, row) in &report.by_model {
            let price = self
                .prices
                .get(model)
                .ok_or_else(|| Error::UnpricedModel(model.clone()))?;
            dollars += row.prompt_tokens as f64 / 1_000_000.0 * price.input_per_million;
            dollars += row.completion_tokens as f64 / 1_000_000.0 * price.output_per_million;
        }
        Ok(dollars)
    }

    /// Dollar cost of a raw record slice.
    pub fn cost_of_records(&self, records: &[InferenceRecord]) -> Result<f64> {
        self.cost_of(&aggregate(records))
    }
}

/// One policy call in a diversity analysis log: the state it was made from
/// (any stable key, typically the state render), the action text it
/// produced, and whether that output was correct under whatever oracle the
/// analysis uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCall {
    pub state_key: String,
    pub output: String,
    pub correct: bool,
}

impl PolicyCall {
    pub fn new(state_key: impl Into<String>, output: impl Into<String>, correct: bool) -> Self {
        PolicyCall {
            state_key: state_key.into(),
            output: output.into(),
            correct,
        }
    }
}

/// Action-diversity summary of a policy-call log (mode-collapse analysis).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    /// Distinct state keys in the log.
    pub unique_states: usize,
    /// Total calls divided by unique states.
    pub avg_policy_calls_per_state: f64,
    /// Fraction of calls whose output already appeared for the same state
    /// earlier in the log.
    pub duplicate_rate: f64,
    /// The same duplicate rate computed over the incorrect calls only
    /// (0.0 when there are none).
    pub duplicate_rate_incorrect: f64,
    /// Fraction of calls whose output was correct.
    pub correct_fraction: f64,
}

/// Summarize action diversity over a policy-call log. A call is a duplicate
/// iff an earlier call for the same state produced the same output (the
/// streaming definition). Errors on an empty log.
pub fn diversity_report(log: &[PolicyCall]) -> Result<DiversityReport> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let total = log.len();
    let duplicates = count_streaming_duplicates(log.iter());
    let incorrect: Vec<&PolicyCall> = log.iter().filter(|c| !c.correct).collect();
    let duplicate_rate_incorrect = if incorrect.is_empty() {
        0.0
    } else {
        count_streaming_duplicates(incorrect.iter().copied()) as f64 / incorrect.len() as f64
    };
    let unique_states = log
        .iter()
        .map(|c| c.state_key.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    Ok(DiversityReport {
        unique_states,
        avg_policy_calls_per_state: total as f64 / unique_states as f64,
        duplicate_rate: duplicates as f64 / total as f64,
        duplicate_rate_incorrect,
        correct_fraction: log.iter().filter(|c| c.correct).count() as f64 / total as f64,
    })
}

fn count_streaming_duplicates<'a>(calls: impl Iterator<Item = &'a PolicyCall>) -> usize {
    let mut seen: BTreeMap<&str, std::collections::BTreeSet<&str>> = BTreeMap::new();
    let mut duplicates = 0;
    for call in calls {
        let outputs = seen.entry(call.state_key.as_str()).or_default();
        if !outputs.insert(call.output.as_str()) {
            duplicates += 1;
        }
    }
    duplicates
}
