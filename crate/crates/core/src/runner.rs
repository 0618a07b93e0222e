//! Run orchestration: the layer between the CLI and the engines.
//!
//! A [`RunRequest`] names a dataset, a backend, knobs, and override names;
//! [`run_search_request`] / [`run_chain_request`] assemble the component
//! stack through the [`Registry`](crate::registry::Registry), create or
//! reopen the run directory, drive every query (optionally across a small
//! worker pool), and leave the full artifact trail behind. Chain runs
//! finish with an automatic evaluation pass.
//!
//! [`evaluate_run`] scores a finished run purely from its artifacts: it
//! rebuilds the recorded transition over an inert backend (answer
//! extraction and terminality checks make no model calls), replays results
//! or checkpoints, checks answers against the dataset, and aggregates
//! token usage from the inference log. Evaluation writes only
//! `eval_results.json` and `eval.log`; reruns are idempotent.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::backends::{Backend, HttpBackend, HttpBackendConfig, ScriptedBackend};
use crate::components::{default_prompt_registry, SamplingCounters};
use crate::error::{Error, Result};
use crate::observability::{CostModel, InferenceLogger, InferenceRecord};
use crate::persistence::{RunConfig, RunDirectory, RunKind};
use crate::prompts::PromptRegistry;
use crate::registry::{BuildContext, Registry, RunOverrides};
use crate::search::{run_chain, run_search, SearchConfig, Tree};
use crate::structures::{to_json_string, State};

/// Default API root for the HTTP backend when `OPENAI_BASE_URL` is unset.
pub const DEFAULT_HTTP_BASE_URL: &str = "https://api.openai.com/v1";
/// Environment variable overriding the HTTP backend's API root.
pub const HTTP_BASE_URL_ENV: &str = "OPENAI_BASE_URL";

// ------------------------------------------------------------------ backend

/// Which text backend a run talks to.
pub enum BackendChoice {
    /// Deterministic scripted backend, optionally loaded from a script
    /// file. Without a script every unmatched prompt errors, which
    /// environment-grounded policies absorb by falling back to enumerated
    /// actions.
    Mock { script: Option<PathBuf> },
    /// OpenAI-compatible HTTP backend. The API root comes from
    /// `OPENAI_BASE_URL` (default [`DEFAULT_HTTP_BASE_URL`]) and the key
    /// from `OPENAI_API_KEY`.
    Http { model: String },
    /// A caller-supplied backend (embedding, tests, instrumentation).
    Provided(Arc<dyn Backend>),
}

impl std::fmt::Debug for BackendChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendChoice::Mock { script } => {
                f.debug_struct("Mock").field("script", script).finish()
            }
            BackendChoice::Http { model } => {
                f.debug_struct("Http").field("model", model).finish()
            }
            BackendChoice::Provided(backend) => {
                f.debug_tuple("Provided").field(&backend.name()).finish()
            }
        }
    }
}

impl BackendChoice {
    /// The `backend` label recorded in `config.json`.
    fn label(&self) -> String {
        match self {
            BackendChoice::Mock { .. } => "mock".to_string(),
            BackendChoice::Http { .. } => "http".to_string(),
            BackendChoice::Provided(backend) => backend.name().to_string(),
        }
    }
}

/// One rule in a mock-script file: a matcher plus the responses served on
/// consecutive hits (sticking at the last).
#[derive(Debug, Clone, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub contains: Option<String>,
    #[serde(default)]
    pub exact: Option<String>,
    pub responses: Vec<String>,
}

/// Schema of a `--mock_script` file.
///
/// ```json
/// {
///   "default": "fallback text",
///   "model": "scripted",
///   "rules": [
///     {"contains": "step 2", "responses": ["b1", "b2"]},
///     {"exact": "full prompt", "responses": ["only"]}
///   ]
/// }
/// ```
#[derive(Debug, Clone, Default, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub default: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
}

impl MockScript {
    pub fn from_file(path: &Path) -> Result<MockScript> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read mock script {}: {e}", path.display())))?;
        let script: MockScript = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad mock script {}: {e}", path.display())))?;
        script.validate()?;
        Ok(script)
    }

    fn validate(&self) -> Result<()> {
        for (i, rule) in self.rules.iter().enumerate() {
            match (&rule.contains, &rule.exact) {
                (Some(_), Some(_)) | (None, None) => {
                    return Err(Error::Config(format!(
                        "mock script rule {i}: give exactly one of 'contains' or 'exact'"
                    )));
                }
                _ => {}
            }
            if rule.responses.is_empty() {
                return Err(Error::Config(format!(
                    "mock script rule {i}: 'responses' must not be empty"
                )));
            }
            if rule.exact.is_some() && rule.responses.len() > 1 {
                return Err(Error::Config(format!(
                    "mock script rule {i}: 'exact' rules take a single response"
                )));
            }
        }
        Ok(())
    }

    /// Compile into a scripted backend. Rule order is match priority.
    pub fn into_backend(self) -> ScriptedBackend {
        let mut builder = ScriptedBackend::builder();
        for rule in self.rules {
            builder = match (rule.contains, rule.exact) {
                (Some(marker), None) => builder.on_contains_seq(marker, rule.responses),
                (None, Some(prompt)) => {
                    builder.on_exact(prompt, rule.responses.into_iter().next().unwrap_or_default())
                }
                _ => unreachable!("validated on load"),
            };
        }
        if let Some(default) = self.default {
            builder = builder.with_default(default);
        }
        if let Some(model) = self.model {
            builder = builder.with_model(model);
        }
        builder.build()
    }
}

/// Materializes the chosen backend.
pub fn build_backend(choice: &BackendChoice) -> Result<Arc<dyn Backend>> {
    match choice {
        BackendChoice::Mock { script: None } => Ok(Arc::new(ScriptedBackend::builder().build())),
        BackendChoice::Mock { script: Some(path) } => {
            Ok(Arc::new(MockScript::from_file(path)?.into_backend()))
        }
        BackendChoice::Http { model } => {
            let base_url = std::env::var(HTTP_BASE_URL_ENV)
                .unwrap_or_else(|_| DEFAULT_HTTP_BASE_URL.to_string());
            Ok(Arc::new(HttpBackend::new(HttpBackendConfig::new(base_url, model.clone()))?))
        }
        BackendChoice::Provided(backend) => Ok(backend.clone()),
    }
}

// ------------------------------------------------------------------ prompts

/// The built-in prompt store, with the override document at
/// `prompt_config` (a JSON list of `{component, slot, template}` entries
/// with an optional `task` or `task_type` scope) upserted on top.
pub fn build_prompts(prompt_config: Option<&Path>) -> Result<PromptRegistry> {
    let mut prompts = default_prompt_registry();
    if let Some(path) = prompt_config {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read prompt config {}: {e}", path.display()))
        })?;
        prompts.load_overrides_json(&text).map_err(|e| {
            Error::Config(format!("bad prompt config {}: {e}", path.display()))
        })?;
    }
    Ok(prompts)
}

// ------------------------------------------------------------------ request

/// Everything needed to execute one run over a dataset.
#[derive(Debug)]
pub struct RunRequest {
    /// Registered dataset name.
    pub dataset: String,
    /// Optional data file overriding the dataset's built-in queries.
    pub data_file: Option<PathBuf>,
    /// Root under which `{task}_{method}/run_{version}/` is created.
    pub save_dir: PathBuf,
    pub config: SearchConfig,
    pub overrides: RunOverrides,
    pub backend: BackendChoice,
    /// Optional prompt override document (see [`build_prompts`]).
    pub prompt_config: Option<PathBuf>,
    /// Continue the latest existing run instead of creating a fresh one:
    /// completed queries are skipped, partial chains resume from their
    /// checkpoint.
    pub resume: bool,
    /// Explicit version tag for the run directory (default: package
    /// version, with a `.k` suffix on collision).
    pub version: Option<String>,
    /// Worker threads for the query loop.
    pub workers: usize,
}

impl RunRequest {
    pub fn new(dataset: impl Into<String>, save_dir: impl Into<PathBuf>) -> Self {
        RunRequest {
            dataset: dataset.into(),
            data_file: None,
            save_dir: save_dir.into(),
            config: SearchConfig::default(),
            overrides: RunOverrides::default(),
            backend: BackendChoice::Mock { script: None },
            prompt_config: None,
            resume: false,
            version: None,
            workers: 1,
        }
    }
}

/// What a finished run looked like.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    pub task: String,
    pub method: String,
    pub version: String,
    pub queries: usize,
    /// Queries skipped because a resume found them already complete.
    pub skipped: usize,
    /// Queries that produced an answer this run (skipped ones excluded).
    pub answered: usize,
    /// Attached for chain runs, which evaluate automatically on completion.
    pub eval: Option<EvalReport>,
}

// ------------------------------------------------------------------ search

/// Runs tree search over every query of the dataset, writing per-iteration
/// checkpoints, final results, terminal-node dumps, and the selected-path
/// JSONL. A per-query failure aborts the run.
pub fn run_search_request(registry: &Registry, request: &RunRequest) -> Result<RunSummary> {
    let dataset = registry.build_dataset(&request.dataset, request.data_file.as_deref())?;
    let backend = build_backend(&request.backend)?;
    let logger = Arc::new(InferenceLogger::new());
    let prompts = Arc::new(build_prompts(request.prompt_config.as_deref())?);
    let ctx = BuildContext {
        backend: backend.clone(),
        logger: logger.clone(),
        prompts,
        dataset: &dataset,
        config: &request.config,
        instance: "run",
    };
    let assembled = registry.assemble_run(&ctx, &request.overrides)?;

    let run = if request.resume {
        RunDirectory::find_latest(&request.save_dir, &dataset.name, &assembled.method)?
    } else {
        RunDirectory::create(
            &request.save_dir,
            &dataset.name,
            &assembled.method,
            RunKind::Search,
            request.version.as_deref(),
        )?
    };
    logger.attach_file(run.inference_log_path())?;
    run.write_config(&RunConfig {
        backend: request.backend.label(),
        command: RunKind::Search.as_str().to_string(),
        data_file: request.data_file.as_ref().map(|p| p.display().to_string()),
        dataset: dataset.name.clone(),
        method: assembled.method.clone(),
        model: backend.default_model().to_string(),
        names: assembled.names.clone(),
        search: request.config.clone(),
        task_type: dataset.task_type.as_str().to_string(),
        version: run.version().to_string(),
    })?;
    run.log_execution(&format!(
        "search start: dataset={} method={} queries={} resume={}",
        dataset.name,
        assembled.method,
        dataset.queries.len(),
        request.resume
    ))?;

    let skipped = AtomicUsize::new(0);
    let answered = AtomicUsize::new(0);
    for_each_query(request.workers, dataset.queries.len(), |index| {
        if request.resume && run.search_result_exists(index) {
            skipped.fetch_add(1, Ordering::Relaxed);
            return run.log_execution(&format!("query {index} skipped (already complete)"));
        }
        run.log_execution(&format!("query {index} start"))?;
        let record = &dataset.queries[index];
        let counters = SamplingCounters::default();
        let mut sink =
            |tree: &Tree, iteration: usize| run.write_tree_checkpoint(index, iteration, tree);
        let outcome = run_search(
            assembled.engine.as_ref(),
            &assembled.components,
            &request.config,
            &record.query,
            Some(index),
            Some(&counters),
            Some(&mut sink),
        )?;
        run.write_search_result(index, &record.query, &outcome.result, &outcome.tree)?;
        run.write_terminal_nodes(index, &outcome.tree)?;
        run.append_selected_path(&outcome.tree, &outcome.result.best_path)?;
        if outcome.result.answer.is_some() {
            answered.fetch_add(1, Ordering::Relaxed);
        }
        let (llm_calls, sampled, duplicates) = counters.snapshot();
        run.log_execution(&format!(
            "query {index} done: success={} answer={:?} iterations={} nodes={} \
             policy_invocations={} llm_calls={llm_calls} sampled_actions={sampled} \
             duplicate_actions={duplicates}",
            outcome.result.success,
            outcome.result.answer,
            outcome.result.iterations_completed,
            outcome.tree.len(),
            outcome.stats.policy_invocations,
        ))
    })?;

    let skipped = skipped.into_inner();
    run.log_execution(&format!(
        "search complete: {} queries, {} skipped",
        dataset.queries.len(),
        skipped
    ))?;
    Ok(RunSummary {
        run_dir: run.root().to_path_buf(),
        task: run.task().to_string(),
        method: run.method().to_string(),
        version: run.version().to_string(),
        queries: dataset.queries.len(),
        skipped,
        answered: answered.into_inner(),
        eval: None,
    })
}

// ------------------------------------------------------------------- chain

/// Runs a plain chain (no tree) over every query, checkpointing the
/// trajectory after every step, then evaluates the finished run. On
/// resume, queries whose checkpointed trajectory is already terminal are
/// skipped and partial trajectories continue where they stopped.
pub fn run_chain_request(registry: &Registry, request: &RunRequest) -> Result<RunSummary> {
    let dataset = registry.build_dataset(&request.dataset, request.data_file.as_deref())?;
    let backend = build_backend(&request.backend)?;
    let logger = Arc::new(InferenceLogger::new());
    let prompts = Arc::new(build_prompts(request.prompt_config.as_deref())?);
    let ctx = BuildContext {
        backend: backend.clone(),
        logger: logger.clone(),
        prompts,
        dataset: &dataset,
        config: &request.config,
        instance: "run",
    };
    let assembled = registry.assemble_run(&ctx, &request.overrides)?;
    let mut names = assembled.names.clone();
    names.search = RunKind::Chain.as_str().to_string();
    names.search_framework = None;

    let run = if request.resume {
        RunDirectory::find_latest(&request.save_dir, &dataset.name, RunKind::Chain.as_str())?
    } else {
        RunDirectory::create(
            &request.save_dir,
            &dataset.name,
            RunKind::Chain.as_str(),
            RunKind::Chain,
            request.version.as_deref(),
        )?
    };
    logger.attach_file(run.inference_log_path())?;
    run.write_config(&RunConfig {
        backend: request.backend.label(),
        command: RunKind::Chain.as_str().to_string(),
        data_file: request.data_file.as_ref().map(|p| p.display().to_string()),
        dataset: dataset.name.clone(),
        method: RunKind::Chain.as_str().to_string(),
        model: backend.default_model().to_string(),
        names,
        search: request.config.clone(),
        task_type: dataset.task_type.as_str().to_string(),
        version: run.version().to_string(),
    })?;
    run.log_execution(&format!(
        "chain start: dataset={} queries={} resume={}",
        dataset.name,
        dataset.queries.len(),
        request.resume
    ))?;

    let policy = assembled.components.policy.clone();
    let transition = assembled.components.transition.clone();
    let skipped = AtomicUsize::new(0);
    let answered = AtomicUsize::new(0);
    for_each_query(request.workers, dataset.queries.len(), |index| {
        let mut resume_from: Option<State> = None;
        if request.resume && run.chain_checkpoint_exists(index) {
            let state = run.resume_chain(index)?;
            if transition.is_terminal(&state) {
                skipped.fetch_add(1, Ordering::Relaxed);
                return run.log_execution(&format!("query {index} skipped (already terminal)"));
            }
            run.log_execution(&format!(
                "query {index} resuming from step {}",
                state.steps().len()
            ))?;
            resume_from = Some(state);
        }
        run.log_execution(&format!("query {index} start"))?;
        let record = &dataset.queries[index];
        let counters = SamplingCounters::default();
        let mut sink = |state: &State, _steps: usize| run.write_chain_checkpoint(index, state);
        let outcome = run_chain(
            policy.as_ref(),
            transition.as_ref(),
            &request.config,
            &record.query,
            Some(index),
            Some(&counters),
            Some(&mut sink),
            resume_from,
        )?;
        if outcome.answer.is_some() {
            answered.fetch_add(1, Ordering::Relaxed);
        }
        let (llm_calls, sampled, duplicates) = counters.snapshot();
        run.log_execution(&format!(
            "query {index} done: finished={} answer={:?} steps={} \
             policy_invocations={} llm_calls={llm_calls} sampled_actions={sampled} \
             duplicate_actions={duplicates}",
            outcome.finished, outcome.answer, outcome.steps, outcome.policy_invocations,
        ))
    })?;

    let skipped = skipped.into_inner();
    run.log_execution(&format!(
        "chain complete: {} queries, {} skipped",
        dataset.queries.len(),
        skipped
    ))?;
    let report = evaluate_run(registry, &run)?;
    Ok(RunSummary {
        run_dir: run.root().to_path_buf(),
        task: run.task().to_string(),
        method: run.method().to_string(),
        version: run.version().to_string(),
        queries: dataset.queries.len(),
        skipped,
        answered: answered.into_inner(),
        eval: Some(report),
    })
}

// -------------------------------------------------------------- evaluation

/// Per-query evaluation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEval {
    pub answer: Option<String>,
    pub correct: bool,
    /// Whether the run reached a terminal state for this query.
    pub finished: bool,
    pub query_index: usize,
    /// Gold answer from the dataset, when it has one.
    pub reference: Option<String>,
}

/// Contents of `eval_results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `correct / queries`; absent for an empty run.
    pub accuracy: Option<f64>,
    /// Queries that produced an answer.
    pub answered: usize,
    pub completion_tokens: u64,
    pub correct: usize,
    /// Dollar cost; absent when the log names a model without a price.
    pub cost_usd: Option<f64>,
    /// Model calls recorded in the inference log.
    pub invocations: u64,
    pub per_query: Vec<QueryEval>,
    pub prompt_tokens: u64,
    pub queries: usize,
    pub total_tokens: u64,
}

/// Parses an inference log (JSONL, one record per line).
pub fn load_inference_records(path: &Path) -> Result<Vec<InferenceRecord>> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: InferenceRecord = serde_json::from_str(line).map_err(|e| {
            Error::schema(format!("{}:{}", path.display(), i + 1), format!("bad record: {e}"))
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Locates the run under `path` (a run directory, its parent, or a save
/// dir) and evaluates it.
pub fn evaluate_path(registry: &Registry, path: &Path) -> Result<EvalReport> {
    let run = RunDirectory::locate(path)?;
    evaluate_run(registry, &run)
}

/// Scores a finished run from its artifacts and writes
/// `eval_results.json`. Search runs are scored from `{q}_result.json`
/// documents; chain runs from their trajectory checkpoints. No model is
/// consulted: the recorded transition is rebuilt over an inert scripted
/// backend purely for answer extraction and terminality.
pub fn evaluate_run(registry: &Registry, run: &RunDirectory) -> Result<EvalReport> {
    let config = run.load_config()?;
    let kind = RunKind::parse(&config.command)?;
    let dataset = registry.build_dataset(
        &config.dataset,
        config.data_file.as_deref().map(Path::new),
    )?;
    let transition = {
        let backend: Arc<dyn Backend> = Arc::new(ScriptedBackend::builder().build());
        let ctx = BuildContext {
            backend,
            logger: Arc::new(InferenceLogger::new()),
            prompts: Arc::new(default_prompt_registry()),
            dataset: &dataset,
            config: &config.search,
            instance: "eval",
        };
        registry.build_transition(&config.names.transition, &ctx)?
    };

    let mut per_query = Vec::new();
    match kind {
        RunKind::Search => {
            for index in run.search_result_indices()? {
                let stored = run.load_search_result(index)?;
                let answer = stored.result.answer.clone();
                let correct = dataset.is_correct(
                    index,
                    answer.as_deref(),
                    stored.final_state.as_ref(),
                );
                per_query.push(QueryEval {
                    answer,
                    correct,
                    finished: !stored.result.terminal_ids.is_empty(),
                    query_index: index,
                    reference: dataset.queries.get(index).and_then(|q| q.gold.clone()),
                });
            }
        }
        RunKind::Chain => {
            for index in run.chain_checkpoint_indices()? {
                let state = run.resume_chain(index)?;
                let answer = transition.extract_answer(&state);
                let correct = dataset.is_correct(index, answer.as_deref(), Some(&state));
                per_query.push(QueryEval {
                    answer,
                    correct,
                    finished: transition.is_terminal(&state),
                    query_index: index,
                    reference: dataset.queries.get(index).and_then(|q| q.gold.clone()),
                });
            }
        }
    }

    let records = load_inference_records(&run.inference_log_path())?;
    let (prompt_tokens, completion_tokens) = records
        .iter()
        .fold((0u64, 0u64), |(p, c), r| (p + r.prompt_tokens, c + r.completion_tokens));
    // Offline scripted runs are genuinely free; anything else must carry a
    // real price before a dollar figure is reported.
    let cost = CostModel::new()
        .with_price("scripted", 0.0, 0.0)
        .cost_of_records(&records);
    let cost_usd = match cost {
        Ok(dollars) => Some(dollars),
        Err(e) => {
            run.log_eval(&format!("cost unavailable: {e}"))?;
            None
        }
    };

    let queries = per_query.len();
    let correct = per_query.iter().filter(|q| q.correct).count();
    let report = EvalReport {
        accuracy: if queries > 0 {
            Some(correct as f64 / queries as f64)
        } else {
            None
        },
        answered: per_query.iter().filter(|q| q.answer.is_some()).count(),
        completion_tokens,
        correct,
        cost_usd,
        invocations: records.len() as u64,
        per_query,
        prompt_tokens,
        queries,
        total_tokens: prompt_tokens + completion_tokens,
    };
    std::fs::write(
        run.eval_results_path(),
        to_json_string(&serde_json::to_value(&report)?),
    )?;
    run.log_eval(&format!(
        "eval: queries={} correct={} accuracy={:?} answered={} invocations={} tokens={}",
        report.queries,
        report.correct,
        report.accuracy,
        report.answered,
        report.invocations,
        report.total_tokens,
    ))?;
    Ok(report)
}

// ------------------------------------------------------------- worker pool

/// Runs `job(0..total)` across up to `workers` threads, claiming indices
/// from a shared cursor. The first failure stops the pool (queries already
/// running finish) and is returned.
fn for_each_query<F>(workers: usize, total: usize, job: F) -> Result<()>
where
    F: Fn(usize) -> Result<()> + Sync,
{
    let workers = workers.max(1).min(total.max(1));
    if workers == 1 {
        return (0..total).try_for_each(job);
    }
    let cursor = AtomicUsize::new(0);
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failure.lock().expect("pool lock poisoned").is_some() {
                    return;
                }
                let index = cursor.fetch_add(1, Ordering::Relaxed);
                if index >= total {
                    return;
                }
                if let Err(e) = job(index) {
                    let mut slot = failure.lock().expect("pool lock poisoned");
                    if slot.is_none() {
                        *slot = Some(e);
                    }
                    return;
                }
            });
        }
    });
    match failure.into_inner().expect("pool lock poisoned") {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "grove-runner-{tag}-{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    /// Two tiny one-move instances keep end-to-end runs fast.
    fn blocks_data_file(dir: &Path) -> PathBuf {
        let path = dir.join("blocks.json");
        fs::write(
            &path,
            serde_json::json!([
                {"init": "stack A B | holding: none", "goal": "A on table; B on table"},
                {"init": "stack A | stack B | holding: none", "goal": "B on A"},
            ])
            .to_string(),
        )
        .unwrap();
        path
    }

    fn request(dir: &Path) -> RunRequest {
        let mut request = RunRequest::new("blocksworld", dir);
        request.data_file = Some(blocks_data_file(dir));
        request.config = SearchConfig::new(2, 4, 4);
        request
    }

    #[test]
    fn mock_script_rules_validate_and_compile() {
        let dir = temp_dir("script");
        let path = dir.join("script.json");
        fs::write(
            &path,
            r#"{"default": "fallback", "rules": [
                {"contains": "first", "responses": ["a", "b"]},
                {"exact": "whole prompt", "responses": ["c"]}
            ]}"#,
        )
        .unwrap();
        let backend = MockScript::from_file(&path).unwrap().into_backend();
        use crate::backends::GenerationRequest;
        let hit = backend.generate(&GenerationRequest::new("the first one")).unwrap();
        assert_eq!(hit.texts, vec!["a".to_string()]);
        let exact = backend.generate(&GenerationRequest::new("whole prompt")).unwrap();
        assert_eq!(exact.texts, vec!["c".to_string()]);
        let miss = backend.generate(&GenerationRequest::new("nothing")).unwrap();
        assert_eq!(miss.texts, vec!["fallback".to_string()]);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn mock_script_rejects_ambiguous_rules() {
        let dir = temp_dir("badscript");
        let path = dir.join("script.json");
        fs::write(
            &path,
            r#"{"rules": [{"contains": "x", "exact": "y", "responses": ["z"]}]}"#,
        )
        .unwrap();
        let err = MockScript::from_file(&path).unwrap_err();
        assert!(err.to_string().contains("exactly one"), "{err}");
        fs::write(&path, r#"{"rules": [{"contains": "x", "responses": []}]}"#).unwrap();
        let err = MockScript::from_file(&path).unwrap_err();
        assert!(err.to_string().contains("must not be empty"), "{err}");
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn prompt_config_overrides_upsert_over_defaults() {
        let dir = temp_dir("prompts");
        let path = dir.join("prompts.json");
        fs::write(
            &path,
            r#"[{"component": "concat_policy", "slot": "propose", "template": "custom {question}"}]"#,
        )
        .unwrap();
        let prompts = build_prompts(Some(&path)).unwrap();
        let spec = prompts
            .resolve(&crate::prompts::PromptQuery {
                component: "concat_policy",
                slot: "propose",
                ..Default::default()
            })
            .unwrap();
        assert_eq!(spec.template, "custom {question}");
        // Untouched slots keep their built-in templates.
        assert!(build_prompts(None).unwrap().len() == prompts.len());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn search_run_writes_results_and_resume_skips_them() {
        let dir = temp_dir("search-run");
        let registry = Registry::with_builtins();
        let summary = run_search_request(&registry, &request(&dir)).unwrap();
        assert_eq!(summary.queries, 2);
        assert_eq!(summary.skipped, 0);
        assert_eq!(summary.method, "mcts");
        let run = RunDirectory::open(&summary.run_dir).unwrap();
        assert_eq!(run.search_result_indices().unwrap(), vec![0, 1]);
        assert!(run.load_config().unwrap().names.policy == "env_grounded_policy");
        // Per-iteration checkpoints exist for the first query.
        assert!(run.load_tree_checkpoint(0, 0).is_ok());
        // The one-move instance is solvable even by deterministic fallback.
        let stored = run.load_search_result(0).unwrap();
        assert!(stored.result.success, "one-move instance should be solved");

        let mut resumed = request(&dir);
        resumed.resume = true;
        let summary2 = run_search_request(&registry, &resumed).unwrap();
        assert_eq!(summary2.run_dir, summary.run_dir);
        assert_eq!(summary2.skipped, 2);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn chain_run_checkpoints_and_evaluates_automatically() {
        let dir = temp_dir("chain-run");
        let registry = Registry::with_builtins();
        let summary = run_chain_request(&registry, &request(&dir)).unwrap();
        assert_eq!(summary.method, "chain");
        let run = RunDirectory::open(&summary.run_dir).unwrap();
        assert_eq!(run.chain_checkpoint_indices().unwrap(), vec![0, 1]);
        assert_eq!(run.load_config().unwrap().names.search, "chain");
        let eval = summary.eval.expect("chain runs auto-evaluate");
        assert_eq!(eval.queries, 2);
        assert!(run.eval_results_path().is_file());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn evaluation_is_idempotent_and_reads_only() {
        let dir = temp_dir("eval");
        let registry = Registry::with_builtins();
        let summary = run_search_request(&registry, &request(&dir)).unwrap();
        let run = RunDirectory::open(&summary.run_dir).unwrap();
        let before = fs::read(run.checkpoints_dir().join("0_result.json")).unwrap();

        let first = evaluate_run(&registry, &run).unwrap();
        let first_bytes = fs::read(run.eval_results_path()).unwrap();
        let second = evaluate_run(&registry, &run).unwrap();
        let second_bytes = fs::read(run.eval_results_path()).unwrap();
        assert_eq!(first, second);
        assert_eq!(first_bytes, second_bytes);
        assert_eq!(
            before,
            fs::read(run.checkpoints_dir().join("0_result.json")).unwrap(),
            "evaluation must not touch checkpoints"
        );
        assert_eq!(first.queries, 2);
        // Goal-checked accuracy: solved instances count, and the cost of a
        // scripted run is exactly zero dollars.
        assert!(first.accuracy.is_some());
        assert_eq!(first.cost_usd, Some(0.0));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn evaluating_an_empty_run_reports_zero_queries() {
        let dir = temp_dir("eval-empty");
        let run = RunDirectory::create(&dir, "blocksworld", "mcts", RunKind::Search, None).unwrap();
        run.write_config(&RunConfig {
            backend: "mock".to_string(),
            command: "search".to_string(),
            data_file: None,
            dataset: "blocksworld".to_string(),
            method: "mcts".to_string(),
            model: "scripted".to_string(),
            names: crate::registry::ResolvedNames {
                policy: "env_grounded_policy".to_string(),
                transition: "env_grounded_transition".to_string(),
                reward: "env_grounded_reward".to_string(),
                search: "mcts".to_string(),
                search_framework: None,
            },
            search: SearchConfig::default(),
            task_type: "env_grounded".to_string(),
            version: run.version().to_string(),
        })
        .unwrap();
        let report = evaluate_run(&Registry::with_builtins(), &run).unwrap();
        assert_eq!(report.queries, 0);
        assert_eq!(report.accuracy, None);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn worker_pool_covers_all_indices_and_propagates_failure() {
        let seen: Mutex<Vec<usize>> = Mutex::new(Vec::new());
        for_each_query(3, 20, |i| {
            seen.lock().unwrap().push(i);
            Ok(())
        })
        .unwrap();
        let mut seen = seen.into_inner().unwrap();
        seen.sort_unstable();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());

        let err = for_each_query(3, 20, |i| {
            if i == 7 {
                Err(Error::Config("boom".to_string()))
            } else {
                Ok(())
            }
        })
        .unwrap_err();
        assert!(err.to_string().contains("boom"));
    }

    #[test]
    fn parallel_search_run_matches_all_queries() {
        let dir = temp_dir("parallel");
        let registry = Registry::with_builtins();
        let mut req = request(&dir);
        req.workers = 2;
        let summary = run_search_request(&registry, &req).unwrap();
        let run = RunDirectory::open(&summary.run_dir).unwrap();
        assert_eq!(run.search_result_indices().unwrap(), vec![0, 1]);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn http_backend_base_url_defaults_are_wired() {
        // Construction only; no request is made.
        let backend = build_backend(&BackendChoice::Http {
            model: "test-model".to_string(),
        })
        .unwrap();
        assert_eq!(backend.name(), "http");
        assert_eq!(backend.default_model(), "test-model");
    }
}
