//! Run-directory layout, incremental checkpoints, resume, and trajectory
//! preference-pair export.
//!
//! Every run writes all of its artifacts under one directory,
//! `{save_dir}/{task}_{method}/run_{version}/`:
//!
//! ```text
//! search run                          chain run
//! ├── checkpoints/                    ├── checkpoints/
//! │   ├── {q}_{i}.json  tree/iter     │   └── {q}.json   trajectory
//! │   └── {q}_result.json             ├── config.json
//! ├── terminal_nodes/                 ├── execution.log
//! │   └── terminal_nodes_{q}.json     ├── eval.log
//! ├── config.json                     ├── eval_results.json
//! ├── execution.log                   └── inferencelogger.log
//! ├── eval.log
//! ├── inferencelogger.log
//! └── treetojsonl.jsonl
//! ```
//!
//! Checkpoint documents are self-describing (`__type__` tags) and loadable
//! without the run config; `config.json` records the fully resolved search
//! configuration and component names so evaluation can rebuild what it
//! needs from the directory alone. JSON files are pretty-printed with
//! lexicographic keys and a trailing newline; `.jsonl` files hold one
//! compact document per line.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::registry::ResolvedNames;
use crate::search::{SearchConfig, SearchResult, Tree};
use crate::structures::{
    deserialize_node_global, deserialize_state, node_to_doc, serialize_state_to_string,
    to_json_string, Node, NodeId, State, Step,
};

pub const CHECKPOINTS_DIR: &str = "checkpoints";
pub const TERMINAL_NODES_DIR: &str = "terminal_nodes";
pub const CONFIG_FILE: &str = "config.json";
pub const EXECUTION_LOG: &str = "execution.log";
pub const EVAL_LOG: &str = "eval.log";
pub const INFERENCE_LOG: &str = "inferencelogger.log";
pub const TREE_JSONL: &str = "treetojsonl.jsonl";
pub const EVAL_RESULTS_FILE: &str = "eval_results.json";

/// Which artifact skeleton a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Search,
    Chain,
}

impl RunKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RunKind::Search => "search",
            RunKind::Chain => "chain",
        }
    }

    pub fn parse(text: &str) -> Result<RunKind> {
        match text {
            "search" => Ok(RunKind::Search),
            "chain" => Ok(RunKind::Chain),
            other => Err(Error::Config(format!(
                "unknown run kind '{other}' (expected 'search' or 'chain')"
            ))),
        }
    }
}

/// Contents of `config.json`: everything needed to interpret the artifacts
/// without the original command line.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunConfig {
    /// Backend kind: `"mock"` or `"http"`.
    pub backend: String,
    /// Run kind: `"search"` or `"chain"`.
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_file: Option<String>,
    pub dataset: String,
    /// Run-directory method label (framework, engine, or `"chain"`).
    pub method: String,
    pub model: String,
    pub names: ResolvedNames,
    pub search: SearchConfig,
    pub task_type: String,
    /// Version tag in the run directory name.
    pub version: String,
}

/// One run's directory; all artifact paths hang off [`RunDirectory::root`].
#[derive(Debug, Clone)]
pub struct RunDirectory {
    save_dir: PathBuf,
    task: String,
    method: String,
    version: String,
    root: PathBuf,
}

impl RunDirectory {
    /// Creates `{save_dir}/{task}_{method}/run_{version}/` with the
    /// artifact skeleton for `kind`. With no explicit version the package
    /// version is used; an occupied directory gets a `.{k}` counter suffix
    /// so reruns never overwrite earlier artifacts.
    pub fn create(
        save_dir: &Path,
        task: &str,
        method: &str,
        kind: RunKind,
        version: Option<&str>,
    ) -> Result<RunDirectory> {
        let base = version.unwrap_or(env!("CARGO_PKG_VERSION"));
        let parent = save_dir.join(format!("{task}_{method}"));
        fs::create_dir_all(&parent)?;
        let mut version = base.to_string();
        let mut counter = 0u32;
        let root = loop {
            let candidate = parent.join(format!("run_{version}"));
            if !candidate.exists() {
                break candidate;
            }
            counter += 1;
            version = format!("{base}.{counter}");
        };
        fs::create_dir_all(root.join(CHECKPOINTS_DIR))?;
        touch(&root.join(EXECUTION_LOG))?;
        touch(&root.join(EVAL_LOG))?;
        touch(&root.join(INFERENCE_LOG))?;
        if kind == RunKind::Search {
            fs::create_dir_all(root.join(TERMINAL_NODES_DIR))?;
            touch(&root.join(TREE_JSONL))?;
        }
        Ok(RunDirectory {
            save_dir: save_dir.to_path_buf(),
            task: task.to_string(),
            method: method.to_string(),
            version,
            root,
        })
    }

    /// Opens an existing run directory (one containing `config.json`).
    pub fn open(root: &Path) -> Result<RunDirectory> {
        if !root.join(CONFIG_FILE).is_file() {
            return Err(Error::Resume(format!(
                "{} is not a run directory (missing {CONFIG_FILE})",
                root.display()
            )));
        }
        let config = load_config_at(root)?;
        let save_dir = root
            .parent()
            .and_then(Path::parent)
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf();
        Ok(RunDirectory {
            save_dir,
            task: config.dataset,
            method: config.method,
            version: config.version,
            root: root.to_path_buf(),
        })
    }

    /// Most recently modified existing run under
    /// `{save_dir}/{task}_{method}/` (ties broken by directory name,
    /// descending). Used by resume.
    pub fn find_latest(save_dir: &Path, task: &str, method: &str) -> Result<RunDirectory> {
        let parent = save_dir.join(format!("{task}_{method}"));
        let found = latest_run_in(&parent)?;
        found.map(|root| RunDirectory::open(&root)).ok_or_else(|| {
            Error::Resume(format!(
                "no existing run under {} to resume",
                parent.display()
            ))
        })?
    }

    /// Resolves the run a bare `save_dir` refers to: the directory itself
    /// when it holds a `config.json`, otherwise the most recently modified
    /// `run_*` directory one or two levels below.
    pub fn locate(save_dir: &Path) -> Result<RunDirectory> {
        if save_dir.join(CONFIG_FILE).is_file() {
            return RunDirectory::open(save_dir);
        }
        let mut candidates = Vec::new();
        if let Some(found) = latest_run_in(save_dir)? {
            candidates.push(found);
        }
        if save_dir.is_dir() {
            for entry in fs::read_dir(save_dir)? {
                let path = entry?.path();
                if path.is_dir() {
                    if let Some(found) = latest_run_in(&path)? {
                        candidates.push(found);
                    }
                }
            }
        }
        let best = candidates
            .into_iter()
            .map(|root| Ok((dir_mtime(&root)?, root)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .max_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        match best {
            Some((_, root)) => RunDirectory::open(&root),
            None => Err(Error::Resume(format!(
                "no run directory with {CONFIG_FILE} under {}",
                save_dir.display()
            ))),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn save_dir(&self) -> &Path {
        &self.save_dir
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join(CONFIG_FILE)
    }

    pub fn execution_log_path(&self) -> PathBuf {
        self.root.join(EXECUTION_LOG)
    }

    pub fn eval_log_path(&self) -> PathBuf {
        self.root.join(EVAL_LOG)
    }

    pub fn inference_log_path(&self) -> PathBuf {
        self.root.join(INFERENCE_LOG)
    }

    pub fn tree_jsonl_path(&self) -> PathBuf {
        self.root.join(TREE_JSONL)
    }

    pub fn eval_results_path(&self) -> PathBuf {
        self.root.join(EVAL_RESULTS_FILE)
    }

    pub fn checkpoints_dir(&self) -> PathBuf {
        self.root.join(CHECKPOINTS_DIR)
    }

    pub fn terminal_nodes_dir(&self) -> PathBuf {
        self.root.join(TERMINAL_NODES_DIR)
    }

    // ------------------------------------------------------------ config

    /// Writes `config.json`; refuses to clobber a differing existing one
    /// (a resumed run must match the original configuration).
    pub fn write_config(&self, config: &RunConfig) -> Result<()> {
        let path = self.config_path();
        if path.exists() {
            let existing = self.load_config()?;
            if &existing != config {
                return Err(Error::Resume(format!(
                    "{} already exists with a different configuration",
                    path.display()
                )));
            }
            return Ok(());
        }
        write_json_file(&path, &to_value(config))
    }

    pub fn load_config(&self) -> Result<RunConfig> {
        load_config_at(&self.root)
    }

    // ------------------------------------------------------- search side

    /// `checkpoints/{q}_{i}.json`: full tree snapshot after iteration `i`.
    pub fn write_tree_checkpoint(
        &self,
        query_index: usize,
        iteration: usize,
        tree: &Tree,
    ) -> Result<()> {
        let doc = tree_checkpoint_doc(query_index, iteration, tree);
        write_json_file(
            &self
                .checkpoints_dir()
                .join(format!("{query_index}_{iteration}.json")),
            &doc,
        )
    }

    /// Reloads one per-iteration tree snapshot.
    pub fn load_tree_checkpoint(&self, query_index: usize, iteration: usize) -> Result<Tree> {
        let path = self
            .checkpoints_dir()
            .join(format!("{query_index}_{iteration}.json"));
        let doc = read_json_file(&path)?;
        tree_from_checkpoint_doc(&doc)
    }

    /// `checkpoints/{q}_result.json`: the final result plus the selected
    /// path's full node documents.
    pub fn write_search_result(
        &self,
        query_index: usize,
        query: &str,
        result: &SearchResult,
        tree: &Tree,
    ) -> Result<()> {
        let mut doc = match to_value(result) {
            Value::Object(map) => map,
            _ => unreachable!("SearchResult serializes to an object"),
        };
        doc.insert("__type__".into(), json!("SearchResult"));
        doc.insert("query".into(), json!(query));
        doc.insert("query_index".into(), json!(query_index));
        doc.insert(
            "path".into(),
            Value::Array(
                result
                    .best_path
                    .iter()
                    .map(|&id| node_to_doc(tree.node(id)))
                    .collect(),
            ),
        );
        write_json_file(
            &self
                .checkpoints_dir()
                .join(format!("{query_index}_result.json")),
            &Value::Object(doc),
        )
    }

    /// Reloads the final result of one query.
    pub fn load_search_result(&self, query_index: usize) -> Result<StoredSearchResult> {
        let path = self
            .checkpoints_dir()
            .join(format!("{query_index}_result.json"));
        let doc = read_json_file(&path)?;
        let query = doc
            .get("query")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::schema("$", "missing field 'query'"))?
            .to_string();
        let result: SearchResult = serde_json::from_value(doc.clone())
            .map_err(|e| Error::schema("$", format!("bad search result document: {e}")))?;
        let final_state = match doc.get("path").and_then(Value::as_array) {
            Some(nodes) if !nodes.is_empty() => {
                let last = nodes.len() - 1;
                Some(
                    deserialize_node_global(
                        &nodes[last],
                        &query,
                        &format!("path[{last}]"),
                    )?
                    .state,
                )
            }
            _ => None,
        };
        Ok(StoredSearchResult {
            query_index,
            query,
            result,
            final_state,
        })
    }

    /// Query indices with a written `{q}_result.json`, ascending.
    pub fn search_result_indices(&self) -> Result<Vec<usize>> {
        let mut indices = Vec::new();
        for entry in fs::read_dir(self.checkpoints_dir())? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(stem) = name.strip_suffix("_result.json") {
                if let Ok(q) = stem.parse::<usize>() {
                    indices.push(q);
                }
            }
        }
        indices.sort_unstable();
        Ok(indices)
    }

    pub fn search_result_exists(&self, query_index: usize) -> bool {
        self.checkpoints_dir()
            .join(format!("{query_index}_result.json"))
            .is_file()
    }

    /// `terminal_nodes/terminal_nodes_{q}.json`: every terminal node found.
    pub fn write_terminal_nodes(&self, query_index: usize, tree: &Tree) -> Result<()> {
        let terminal_ids = tree.terminal_ids();
        let doc = json!({
            "__type__": "TerminalNodes",
            "nodes": terminal_ids
                .iter()
                .map(|&id| node_to_doc(tree.node(id)))
                .collect::<Vec<_>>(),
            "query": tree.root().state.query(),
            "query_index": query_index,
        });
        write_json_file(
            &self
                .terminal_nodes_dir()
                .join(format!("terminal_nodes_{query_index}.json")),
            &doc,
        )
    }

    pub fn load_terminal_nodes(&self, query_index: usize) -> Result<Vec<Node>> {
        let path = self
            .terminal_nodes_dir()
            .join(format!("terminal_nodes_{query_index}.json"));
        let doc = read_json_file(&path)?;
        let query = doc
            .get("query")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::schema("$", "missing field 'query'"))?;
        let nodes = doc
            .get("nodes")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::schema("$", "missing field 'nodes'"))?;
        nodes
            .iter()
            .enumerate()
            .map(|(i, n)| deserialize_node_global(n, query, &format!("nodes[{i}]")))
            .collect()
    }

    /// Appends the selected path to `treetojsonl.jsonl`, one compact line
    /// per path node: `{depth, node_id, parent_id, render, reward}`.
    pub fn append_selected_path(&self, tree: &Tree, path: &[NodeId]) -> Result<()> {
        let mut out = String::new();
        for &id in path {
            let node = tree.node(id);
            let line = json!({
                "depth": node.depth,
                "node_id": node.id,
                "parent_id": node.parent_id,
                "render": node.state.render(),
                "reward": node.reward,
            });
            out.push_str(&serde_json::to_string(&line).expect("JSON values always serialize"));
            out.push('\n');
        }
        append_text(&self.tree_jsonl_path(), &out)
    }

    // -------------------------------------------------------- chain side

    /// `checkpoints/{q}.json`: the current trajectory, overwritten after
    /// every step so an interrupted run can continue from its last state.
    pub fn write_chain_checkpoint(&self, query_index: usize, state: &State) -> Result<()> {
        write_text_file(
            &self.checkpoints_dir().join(format!("{query_index}.json")),
            &serialize_state_to_string(state),
        )
    }

    pub fn chain_checkpoint_exists(&self, query_index: usize) -> bool {
        self.checkpoints_dir()
            .join(format!("{query_index}.json"))
            .is_file()
    }

    /// Reloads the trajectory for `query_index` so the agent can continue
    /// appending. Missing or unreadable checkpoints are resume errors; a
    /// fresh start instead requires explicitly not resuming.
    pub fn resume_chain(&self, query_index: usize) -> Result<State> {
        let path = self.checkpoints_dir().join(format!("{query_index}.json"));
        if !path.is_file() {
            return Err(Error::Resume(format!(
                "no checkpoint for query {query_index} at {}",
                path.display()
            )));
        }
        let doc = read_json_file(&path)
            .map_err(|e| Error::Resume(format!("corrupt checkpoint {}: {e}", path.display())))?;
        deserialize_state(&doc)
            .map_err(|e| Error::Resume(format!("corrupt checkpoint {}: {e}", path.display())))
    }

    /// Query indices with a written chain checkpoint, ascending.
    pub fn chain_checkpoint_indices(&self) -> Result<Vec<usize>> {
        let mut indices = Vec::new();
        for entry in fs::read_dir(self.checkpoints_dir())? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(stem) = name.strip_suffix(".json") {
                if let Ok(q) = stem.parse::<usize>() {
                    indices.push(q);
                }
            }
        }
        indices.sort_unstable();
        Ok(indices)
    }

    // --------------------------------------------------------------- logs

    /// Appends one line to `execution.log`.
    pub fn log_execution(&self, message: &str) -> Result<()> {
        append_line(&self.execution_log_path(), message)
    }

    /// Appends one line to `eval.log`.
    pub fn log_eval(&self, message: &str) -> Result<()> {
        append_line(&self.eval_log_path(), message)
    }
}

/// Stored final result of one search query.
#[derive(Debug, Clone)]
pub struct StoredSearchResult {
    pub query_index: usize,
    pub query: String,
    pub result: SearchResult,
    /// State of the selected path's last node, when a path was recorded.
    pub final_state: Option<State>,
}

/// One training pair extracted from run trajectories: at `state_render`,
/// `chosen` executed validly while `rejected` was refused with `error`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct PreferencePair {
    pub state_render: String,
    pub chosen: String,
    pub rejected: String,
    pub error: String,
}

/// Joins error-annotated environment steps against valid steps taken from
/// states with the same render, across every trajectory of the run (chain
/// checkpoints; terminal-node trajectories for search runs).
///
/// Steps are deduplicated on (state render, action, error) first: in a
/// search tree many terminal trajectories share a prefix, and one recorded
/// decision should yield one vote in the join regardless of how many leaves
/// sit below it. Pairs come back sorted; no matching state means an empty
/// list, not an error.
pub fn export_preference_pairs(run: &RunDirectory) -> Result<Vec<PreferencePair>> {
    let config = run.load_config()?;
    let mut states = Vec::new();
    match RunKind::parse(&config.command)? {
        RunKind::Chain => {
            for q in run.chain_checkpoint_indices()? {
                states.push(run.resume_chain(q)?);
            }
        }
        RunKind::Search => {
            for entry in fs::read_dir(run.terminal_nodes_dir())? {
                let name = entry?.file_name();
                let name = name.to_string_lossy();
                if let Some(stem) = name.strip_prefix("terminal_nodes_") {
                    if let Some(stem) = stem.strip_suffix(".json") {
                        if let Ok(q) = stem.parse::<usize>() {
                            states.extend(run.load_terminal_nodes(q)?.into_iter().map(|n| n.state));
                        }
                    }
                }
            }
        }
    }

    // (state render, action signature, error) for every env step, deduped.
    let mut valid = std::collections::BTreeSet::new();
    let mut invalid = std::collections::BTreeSet::new();
    for state in &states {
        let mut render = state.init_render().to_string();
        for step in state.steps() {
            if let Step::Env(env_step) = step {
                let signature = env_step.action.signature();
                match &env_step.error {
                    Some(error) => {
                        invalid.insert((render.clone(), signature, error.clone()));
                    }
                    None => {
                        valid.insert((render.clone(), signature));
                    }
                }
                if let Some(next) = &env_step.next_state_render {
                    render = next.clone();
                }
            }
        }
    }

    let mut pairs = Vec::new();
    for (render, rejected, error) in &invalid {
        for (valid_render, chosen) in &valid {
            if valid_render == render {
                pairs.push(PreferencePair {
                    state_render: render.clone(),
                    chosen: chosen.clone(),
                    rejected: rejected.clone(),
                    error: error.clone(),
                });
            }
        }
    }
    pairs.sort();
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Document shapes.
// ---------------------------------------------------------------------------

/// Tree snapshot document: `{"__type__": "SearchTreeCheckpoint", ...}` with
/// the query stored once at tree level.
pub fn tree_checkpoint_doc(query_index: usize, iteration: usize, tree: &Tree) -> Value {
    json!({
        "__type__": "SearchTreeCheckpoint",
        "iteration": iteration,
        "nodes": tree.nodes().iter().map(node_to_doc).collect::<Vec<_>>(),
        "query": tree.root().state.query(),
        "query_index": query_index,
    })
}

/// Rebuilds a tree from a snapshot document.
pub fn tree_from_checkpoint_doc(doc: &Value) -> Result<Tree> {
    let query = doc
        .get("query")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::schema("$", "missing field 'query'"))?;
    let nodes = doc
        .get("nodes")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::schema("$", "missing field 'nodes'"))?;
    let nodes = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| deserialize_node_global(n, query, &format!("nodes[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    Tree::from_nodes(nodes)
}

// ---------------------------------------------------------------------------
// File helpers.
// ---------------------------------------------------------------------------

/// Serializes through a `Value` so object keys come out lexicographic.
pub fn to_value<T: serde::Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("artifact documents always serialize")
}

/// Writes a pretty-printed JSON document (trailing newline included).
pub fn write_json_file(path: &Path, doc: &Value) -> Result<()> {
    write_text_file(path, &to_json_string(doc))
}

pub fn read_json_file(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::schema(path.display().to_string(), format!("invalid JSON: {e}")))
}

fn write_text_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn append_text(path: &Path, text: &str) -> Result<()> {
    let mut file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    append_text(path, &format!("{line}\n"))
}

fn touch(path: &Path) -> Result<()> {
    fs::OpenOptions::new().create(true).append(true).open(path)?;
    Ok(())
}

fn load_config_at(root: &Path) -> Result<RunConfig> {
    let doc = read_json_file(&root.join(CONFIG_FILE))?;
    serde_json::from_value(doc)
        .map_err(|e| Error::schema(CONFIG_FILE, format!("bad run config: {e}")))
}

/// Most recent `run_*` directory with a config file directly under
/// `parent`, by modification time then name.
fn latest_run_in(parent: &Path) -> Result<Option<PathBuf>> {
    if !parent.is_dir() {
        return Ok(None);
    }
    let mut best: Option<(std::time::SystemTime, PathBuf)> = None;
    for entry in fs::read_dir(parent)? {
        let path = entry?.path();
        let is_run = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with("run_"));
        if is_run && path.join(CONFIG_FILE).is_file() {
            let stamp = dir_mtime(&path)?;
            let newer = match &best {
                None => true,
                Some((t, p)) => stamp > *t || (stamp == *t && path > *p),
            };
            if newer {
                best = Some((stamp, path));
            }
        }
    }
    Ok(best.map(|(_, path)| path))
}

fn dir_mtime(path: &Path) -> Result<std::time::SystemTime> {
    Ok(fs::metadata(path)?.modified()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::ROOT;
    use crate::structures::{Action, EnvStep, StateKind};

    fn temp_dir(label: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "grove-persist-{label}-{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn names() -> ResolvedNames {
        ResolvedNames {
            policy: "env_grounded_policy".to_string(),
            transition: "env_grounded_transition".to_string(),
            reward: "env_grounded_reward".to_string(),
            search: "mcts".to_string(),
            search_framework: None,
        }
    }

    fn config(command: &str, version: &str) -> RunConfig {
        RunConfig {
            backend: "mock".to_string(),
            command: command.to_string(),
            data_file: None,
            dataset: "blocksworld".to_string(),
            method: if command == "chain" { "chain" } else { "mcts" }.to_string(),
            model: "scripted".to_string(),
            names: names(),
            search: SearchConfig::default(),
            task_type: "env_grounded".to_string(),
            version: version.to_string(),
        }
    }

    fn env_state(query: &str, steps: &[(&str, Option<&str>, Option<&str>)]) -> State {
        // (action, next render, error) triples.
        let mut state = State::new(StateKind::Env, query, "start");
        for (action, next, error) in steps {
            state = state.child(Step::Env(EnvStep {
                action: Action::env(*action),
                next_state_render: next.map(str::to_string),
                error: error.map(str::to_string),
            }));
        }
        state
    }

    fn two_node_tree(query: &str) -> Tree {
        let mut tree = Tree::new(env_state(query, &[]));
        let child_state = env_state(query, &[("move a b", Some("s1"), None)]);
        let id = tree.add_child(ROOT, child_state, 0.75, true);
        tree.node_mut(id).visits = 1;
        tree.node_mut(id).value_sum = 0.75;
        tree.node_mut(ROOT).visits = 1;
        tree.node_mut(ROOT).rollouts = 0;
        tree
    }

    fn listing(dir: &Path) -> Vec<String> {
        let mut out = Vec::new();
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().to_string();
            if path.is_dir() {
                for inner in listing(&path) {
                    out.push(format!("{name}/{inner}"));
                }
            } else {
                out.push(name);
            }
        }
        out.sort();
        out
    }

    #[test]
    fn create_allocates_fresh_version_suffixes() {
        let dir = temp_dir("alloc");
        let a = RunDirectory::create(&dir, "blocksworld", "mcts", RunKind::Search, Some("1")).unwrap();
        let b = RunDirectory::create(&dir, "blocksworld", "mcts", RunKind::Search, Some("1")).unwrap();
        let c = RunDirectory::create(&dir, "blocksworld", "mcts", RunKind::Search, Some("1")).unwrap();
        assert_eq!(a.version(), "1");
        assert_eq!(b.version(), "1.1");
        assert_eq!(c.version(), "1.2");
        assert!(a.root().ends_with("blocksworld_mcts/run_1"));
        assert!(c.root().ends_with("blocksworld_mcts/run_1.2"));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn search_skeleton_plus_one_query_matches_expected_listing() {
        let dir = temp_dir("layout-search");
        let run =
            RunDirectory::create(&dir, "blocksworld", "mcts", RunKind::Search, Some("1")).unwrap();
        run.write_config(&config("search", "1")).unwrap();

        let tree = two_node_tree("q0");
        run.write_tree_checkpoint(0, 0, &tree).unwrap();
        run.write_tree_checkpoint(0, 1, &tree).unwrap();
        let result = SearchResult {
            best_path: vec![0, 1],
            terminal_ids: vec![1],
            success: true,
            answer: Some("s1".to_string()),
            timed_out: false,
            iterations_completed: 2,
        };
        run.write_search_result(0, "q0", &result, &tree).unwrap();
        run.write_terminal_nodes(0, &tree).unwrap();
        run.append_selected_path(&tree, &result.best_path).unwrap();

        assert_eq!(
            listing(run.root()),
            vec![
                "checkpoints/0_0.json",
                "checkpoints/0_1.json",
                "checkpoints/0_result.json",
                "config.json",
                "eval.log",
                "execution.log",
                "inferencelogger.log",
                "terminal_nodes/terminal_nodes_0.json",
                "treetojsonl.jsonl",
            ]
        );
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn chain_skeleton_matches_expected_listing() {
        let dir = temp_dir("layout-chain");
        let run =
            RunDirectory::create(&dir, "blocksworld", "chain", RunKind::Chain, Some("1")).unwrap();
        run.write_config(&config("chain", "1")).unwrap();
        run.write_chain_checkpoint(3, &env_state("q3", &[])).unwrap();
        write_json_file(&run.eval_results_path(), &json!({"accuracy": null})).unwrap();
        assert_eq!(
            listing(run.root()),
            vec![
                "checkpoints/3.json",
                "config.json",
                "eval.log",
                "eval_results.json",
                "execution.log",
                "inferencelogger.log",
            ]
        );
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn tree_checkpoint_round_trips() {
        let dir = temp_dir("tree-rt");
        let run =
            RunDirectory::create(&dir, "blocksworld", "mcts", RunKind::Search, Some("1")).unwrap();
        let tree = two_node_tree("the query");
        run.write_tree_checkpoint(2, 5, &tree).unwrap();
        let reloaded = run.load_tree_checkpoint(2, 5).unwrap();
        assert_eq!(reloaded.len(), tree.len());
        for id in 0..tree.len() {
            let a = tree.node(id);
            let b = reloaded.node(id);
            assert_eq!(a.id, b.id);
            assert_eq!(a.parent_id, b.parent_id);
            assert_eq!(a.child_ids, b.child_ids);
            assert_eq!(a.depth, b.depth);
            assert_eq!(a.reward, b.reward);
            assert_eq!(a.visits, b.visits);
            assert_eq!(a.value_sum, b.value_sum);
            assert_eq!(a.rollouts, b.rollouts);
            assert_eq!(a.is_terminal, b.is_terminal);
            assert_eq!(a.state, b.state);
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn search_result_round_trips_with_final_state() {
        let dir = temp_dir("result-rt");
        let run =
            RunDirectory::create(&dir, "blocksworld", "mcts", RunKind::Search, Some("1")).unwrap();
        let tree = two_node_tree("q7");
        let result = SearchResult {
            best_path: vec![0, 1],
            terminal_ids: vec![1],
            success: true,
            answer: Some("s1".to_string()),
            timed_out: false,
            iterations_completed: 4,
        };
        run.write_search_result(7, "q7", &result, &tree).unwrap();
        let stored = run.load_search_result(7).unwrap();
        assert_eq!(stored.query_index, 7);
        assert_eq!(stored.query, "q7");
        assert_eq!(stored.result, result);
        assert_eq!(stored.final_state.unwrap(), tree.node(1).state);
        assert_eq!(run.search_result_indices().unwrap(), vec![7]);
        assert!(run.search_result_exists(7));
        assert!(!run.search_result_exists(0));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn chain_checkpoint_round_trips_and_resume_reports_missing() {
        let dir = temp_dir("chain-rt");
        let run =
            RunDirectory::create(&dir, "crosswords", "chain", RunKind::Chain, Some("1")).unwrap();
        let state = env_state(
            "fill it in",
            &[
                ("h1. tried", None, Some("word does not fit")),
                ("h1. solar", Some("grid-after"), None),
            ],
        );
        run.write_chain_checkpoint(0, &state).unwrap();
        let reloaded = run.resume_chain(0).unwrap();
        assert_eq!(reloaded, state);
        // The error annotation survives in the file bytes, not just in memory.
        let text = fs::read_to_string(run.checkpoints_dir().join("0.json")).unwrap();
        assert!(text.contains("word does not fit"));

        let err = run.resume_chain(9).unwrap_err();
        assert!(matches!(err, Error::Resume(_)), "{err}");

        fs::write(run.checkpoints_dir().join("5.json"), "{not json").unwrap();
        let err = run.resume_chain(5).unwrap_err();
        assert!(matches!(err, Error::Resume(_)), "{err}");
        assert_eq!(run.chain_checkpoint_indices().unwrap(), vec![0, 5]);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn config_write_is_idempotent_but_rejects_changes() {
        let dir = temp_dir("config");
        let run =
            RunDirectory::create(&dir, "blocksworld", "mcts", RunKind::Search, Some("1")).unwrap();
        let config = config("search", "1");
        run.write_config(&config).unwrap();
        let bytes = fs::read(run.config_path()).unwrap();
        run.write_config(&config).unwrap();
        assert_eq!(fs::read(run.config_path()).unwrap(), bytes);
        assert_eq!(run.load_config().unwrap(), config);

        let mut changed = config;
        changed.search.n_iterations = 99;
        let err = run.write_config(&changed).unwrap_err();
        assert!(matches!(err, Error::Resume(_)), "{err}");
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn open_and_locate_find_the_run() {
        let dir = temp_dir("locate");
        let run =
            RunDirectory::create(&dir, "toy-math", "bfs", RunKind::Search, Some("3")).unwrap();
        let mut cfg = config("search", "3");
        cfg.dataset = "toy-math".to_string();
        cfg.method = "bfs".to_string();
        run.write_config(&cfg).unwrap();

        let opened = RunDirectory::open(run.root()).unwrap();
        assert_eq!(opened.task(), "toy-math");
        assert_eq!(opened.method(), "bfs");
        assert_eq!(opened.version(), "3");

        // locate() from the run dir itself, its method dir, and save_dir.
        for base in [
            run.root().to_path_buf(),
            dir.join("toy-math_bfs"),
            dir.clone(),
        ] {
            let located = RunDirectory::locate(&base).unwrap();
            assert_eq!(located.root(), run.root());
        }
        assert!(RunDirectory::locate(&dir.join("empty")).is_err());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn find_latest_prefers_newest_run() {
        let dir = temp_dir("latest");
        let first =
            RunDirectory::create(&dir, "toy-sql", "chain", RunKind::Chain, Some("1")).unwrap();
        first.write_config(&{
            let mut c = config("chain", "1");
            c.dataset = "toy-sql".to_string();
            c.task_type = "tool_use".to_string();
            c
        })
        .unwrap();
        // Ensure a strictly newer mtime on the second run directory.
        std::thread::sleep(std::time::Duration::from_millis(15));
        let second =
            RunDirectory::create(&dir, "toy-sql", "chain", RunKind::Chain, Some("1")).unwrap();
        second
            .write_config(&{
                let mut c = config("chain", "1.1");
                c.dataset = "toy-sql".to_string();
                c.task_type = "tool_use".to_string();
                c
            })
            .unwrap();
        let latest = RunDirectory::find_latest(&dir, "toy-sql", "chain").unwrap();
        assert_eq!(latest.root(), second.root());
        assert!(RunDirectory::find_latest(&dir, "toy-sql", "mcts").is_err());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn selected_path_lines_have_the_fixed_schema() {
        let dir = temp_dir("jsonl");
        let run =
            RunDirectory::create(&dir, "blocksworld", "mcts", RunKind::Search, Some("1")).unwrap();
        let tree = two_node_tree("q");
        run.append_selected_path(&tree, &[0, 1]).unwrap();
        let text = fs::read_to_string(run.tree_jsonl_path()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let first: Value = serde_json::from_str(lines[0]).unwrap();
        let keys: Vec<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, vec!["depth", "node_id", "parent_id", "render", "reward"]);
        assert_eq!(first["parent_id"], Value::Null);
        let second: Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(second["node_id"], json!(1));
        assert_eq!(second["parent_id"], json!(0));
        assert_eq!(second["reward"], json!(0.75));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn terminal_nodes_file_lists_terminals() {
        let dir = temp_dir("terminals");
        let run =
            RunDirectory::create(&dir, "blocksworld", "mcts", RunKind::Search, Some("1")).unwrap();
        let tree = two_node_tree("q");
        run.write_terminal_nodes(0, &tree).unwrap();
        let nodes = run.load_terminal_nodes(0).unwrap();
        assert_eq!(nodes.len(), 1);
        assert_eq!(nodes[0].id, 1);
        assert!(nodes[0].is_terminal);
        assert_eq!(nodes[0].state.query(), "q");
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn preference_pairs_join_errors_with_valid_actions_by_state_render() {
        let dir = temp_dir("pairs");
        let run =
            RunDirectory::create(&dir, "crosswords", "chain", RunKind::Chain, Some("1")).unwrap();
        let mut cfg = config("chain", "1");
        cfg.dataset = "crosswords".to_string();
        run.write_config(&cfg).unwrap();

        // Query 0: an invalid then a valid attempt from the same state.
        run.write_chain_checkpoint(
            0,
            &env_state(
                "q0",
                &[
                    ("h1. wrong", None, Some("does not fit")),
                    ("h1. right", Some("grid2"), None),
                    ("v2. down", Some("grid3"), None),
                ],
            ),
        )
        .unwrap();
        // Query 1: a different valid action from the same initial render,
        // plus an error deeper in (no valid sibling at that render).
        run.write_chain_checkpoint(
            1,
            &env_state(
                "q1",
                &[
                    ("h3. other", Some("elsewhere"), None),
                    ("v9. nope", None, Some("out of bounds")),
                ],
            ),
        )
        .unwrap();

        let pairs = export_preference_pairs(&run).unwrap();
        // "h1. wrong" at "start" joins both valid actions taken at "start";
        // "v9. nope" at "elsewhere" has no valid sibling.
        assert_eq!(
            pairs,
            vec![
                PreferencePair {
                    state_render: "start".to_string(),
                    chosen: "h1. right".to_string(),
                    rejected: "h1. wrong".to_string(),
                    error: "does not fit".to_string(),
                },
                PreferencePair {
                    state_render: "start".to_string(),
                    chosen: "h3. other".to_string(),
                    rejected: "h1. wrong".to_string(),
                    error: "does not fit".to_string(),
                },
            ]
        );

        // Brute-force join oracle over the same step lists.
        let error_steps = [("start", "h1. wrong", "does not fit"), ("elsewhere", "v9. nope", "out of bounds")];
        let valid_steps = [("start", "h1. right"), ("start", "h3. other"), ("grid2", "v2. down"), ("start", "h1. right"), ("elsewhere2", "x")];
        let mut expected = 0;
        let mut seen = std::collections::BTreeSet::new();
        for (render, _, _) in &error_steps {
            for (valid_render, chosen) in &valid_steps {
                if valid_render == render && seen.insert((*render, *chosen)) {
                    expected += 1;
                }
            }
        }
        assert_eq!(pairs.len(), expected);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn preference_pairs_empty_without_errors() {
        let dir = temp_dir("pairs-empty");
        let run =
            RunDirectory::create(&dir, "crosswords", "chain", RunKind::Chain, Some("1")).unwrap();
        let mut cfg = config("chain", "1");
        cfg.dataset = "crosswords".to_string();
        run.write_config(&cfg).unwrap();
        run.write_chain_checkpoint(0, &env_state("q", &[("a", Some("s1"), None)]))
            .unwrap();
        assert_eq!(export_preference_pairs(&run).unwrap(), Vec::new());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn preference_pairs_from_search_terminal_nodes_dedup_shared_prefixes() {
        let dir = temp_dir("pairs-search");
        let run =
            RunDirectory::create(&dir, "crosswords", "mcts", RunKind::Search, Some("1")).unwrap();
        let mut cfg = config("search", "1");
        cfg.dataset = "crosswords".to_string();
        run.write_config(&cfg).unwrap();

        // Two terminal trajectories share the same first (error) step.
        let prefix = ("bad", None, Some("rejected"));
        let mut tree = Tree::new(env_state("q", &[]));
        tree.add_child(
            ROOT,
            env_state("q", &[prefix, ("good one", Some("s1"), None)]),
            0.5,
            true,
        );
        tree.add_child(
            ROOT,
            env_state("q", &[prefix, ("good two", Some("s2"), None)]),
            0.5,
            true,
        );
        run.write_terminal_nodes(0, &tree).unwrap();

        let pairs = export_preference_pairs(&run).unwrap();
        // One deduplicated error step joins the two distinct valid actions.
        assert_eq!(pairs.len(), 2);
        assert!(pairs.iter().all(|p| p.rejected == "bad" && p.state_render == "start"));
        fs::remove_dir_all(&dir).unwrap();
    }
}
