//! Command-line interface: flag parsing, validation, and dispatch into
//! [`crate::runner`].
//!
//! Three subcommands: `search` (tree search over a dataset), `chain`
//! (sequential episodes), and `eval` (post-hoc scoring of a finished run
//! from its artifacts, no configuration re-entry). Every flag of the run
//! commands can also come from a JSON config file (`--config`); explicit
//! flags win. Exit codes: 0 success, 1 usage error (bad flags, unknown
//! names), 2 runtime failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::error::Error;
use crate::registry::{apply_import, ComponentKind, Registry, RunOverrides};
use crate::runner::{
    evaluate_path, run_chain_request, run_search_request, BackendChoice, RunRequest, RunSummary,
};
use crate::search::SearchConfig;
use crate::structures::to_json_string;

/// Modular LLM-guided search: policies, transitions and reward models
/// behind one registry, driven by MCTS/BFS/chain engines.
#[derive(Debug, Parser)]
#[command(name = "grove", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run tree search over every query of a dataset.
    Search(RunArgs),
    /// Run a sequential chain (no tree) over every query of a dataset.
    Chain(RunArgs),
    /// Score a finished run from its artifacts alone.
    Eval(EvalArgs),
}

/// Flags shared by `search` and `chain`. Everything is optional at parse
/// time so a config file can fill gaps; required flags are enforced after
/// the merge.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Registered dataset name (see `--help` output of errors for the list).
    #[arg(long)]
    pub dataset: Option<String>,
    /// Data file overriding the dataset's built-in queries.
    #[arg(long)]
    pub data_file: Option<PathBuf>,
    /// Named framework preset (engine + component triple), e.g. "rap".
    #[arg(long)]
    pub search_framework: Option<String>,
    /// Search engine name (default "mcts").
    #[arg(long)]
    pub search: Option<String>,
    /// Policy component override.
    #[arg(long)]
    pub policy: Option<String>,
    /// Transition component override.
    #[arg(long)]
    pub transition: Option<String>,
    /// Reward component override.
    #[arg(long)]
    pub reward: Option<String>,
    /// Children proposed per expansion.
    #[arg(long)]
    pub n_actions: Option<usize>,
    /// Iteration budget (MCTS iterations / BFS levels).
    #[arg(long)]
    pub n_iterations: Option<usize>,
    /// Depth at which nodes are forced terminal; also the chain step limit.
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Depth cap for MCTS playouts (default: max_depth).
    #[arg(long)]
    pub rollout_depth: Option<usize>,
    /// Survivors kept per BFS level (default: n_actions).
    #[arg(long)]
    pub beam_width: Option<usize>,
    /// UCT exploration constant (default sqrt(2)).
    #[arg(long)]
    pub uct_c: Option<f64>,
    /// Branching-necessity threshold in [0, 1]. Giving this flag attaches
    /// the reward-backed branching evaluator; 0 forces single-child
    /// expansion everywhere.
    #[arg(long)]
    pub bn_threshold: Option<f64>,
    /// Ensemble mode: stop at this many terminals and majority-vote.
    #[arg(long)]
    pub n_terminate: Option<usize>,
    /// Stop once any goal-satisfying terminal exists (default true).
    #[arg(long)]
    pub early_terminate: Option<bool>,
    /// Wall-clock budget per query, in seconds.
    #[arg(long)]
    pub runtime_limit_s: Option<f64>,
    /// Text backend: "mock" (default) or "http".
    #[arg(long)]
    pub backend: Option<String>,
    /// Model name for the HTTP backend.
    #[arg(long)]
    pub model: Option<String>,
    /// Response script for the mock backend.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// Root directory for run artifacts (required).
    #[arg(long)]
    pub save_dir: Option<PathBuf>,
    /// Continue the latest run under save_dir, skipping completed queries.
    #[arg(long)]
    pub resume: bool,
    /// Extension module to install into the registry (repeatable).
    #[arg(long = "import")]
    pub import: Vec<String>,
    /// Prompt override document (JSON list of component/slot/template).
    #[arg(long)]
    pub prompt_config: Option<PathBuf>,
    /// JSON file holding any of these flags; explicit flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for the query loop (default 1).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Version tag for the run directory (default: package version).
    #[arg(long)]
    pub run_version: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// A run directory, or a directory above one (the newest run wins).
    #[arg(long)]
    pub save_dir: Option<PathBuf>,
    /// Extension module to install into the registry (repeatable).
    #[arg(long = "import")]
    pub import: Vec<String>,
}

/// Config-file mirror of [`RunArgs`]: same field names, everything
/// optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileArgs {
    dataset: Option<String>,
    data_file: Option<PathBuf>,
    search_framework: Option<String>,
    search: Option<String>,
    policy: Option<String>,
    transition: Option<String>,
    reward: Option<String>,
    n_actions: Option<usize>,
    n_iterations: Option<usize>,
    max_depth: Option<usize>,
    rollout_depth: Option<usize>,
    beam_width: Option<usize>,
    uct_c: Option<f64>,
    bn_threshold: Option<f64>,
    n_terminate: Option<usize>,
    early_terminate: Option<bool>,
    runtime_limit_s: Option<f64>,
    backend: Option<String>,
    model: Option<String>,
    mock_script: Option<PathBuf>,
    save_dir: Option<PathBuf>,
    resume: Option<bool>,
    import: Option<Vec<String>>,
    prompt_config: Option<PathBuf>,
    workers: Option<usize>,
    run_version: Option<String>,
}

/// Why an invocation failed, mapped onto the exit-code contract.
#[derive(Debug)]
enum CliError {
    /// Bad or missing flags, unknown names: exit 1.
    Usage(String),
    /// Failure while running or evaluating: exit 2.
    Runtime(Error),
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

impl RunArgs {
    /// Applies the `--config` file underneath explicit flags. File imports
    /// come before flag imports; duplicates collapse.
    fn merged(self) -> Result<RunArgs, CliError> {
        let Some(path) = &self.config else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
        let file: FileArgs = serde_json::from_str(&text)
            .map_err(|e| usage(format!("bad config file {}: {e}", path.display())))?;
        let mut import = file.import.unwrap_or_default();
        import.extend(self.import);
        import.dedup();
        Ok(RunArgs {
            dataset: self.dataset.or(file.dataset),
            data_file: self.data_file.or(file.data_file),
            search_framework: self.search_framework.or(file.search_framework),
            search: self.search.or(file.search),
            policy: self.policy.or(file.policy),
            transition: self.transition.or(file.transition),
            reward: self.reward.or(file.reward),
            n_actions: self.n_actions.or(file.n_actions),
            n_iterations: self.n_iterations.or(file.n_iterations),
            max_depth: self.max_depth.or(file.max_depth),
            rollout_depth: self.rollout_depth.or(file.rollout_depth),
            beam_width: self.beam_width.or(file.beam_width),
            uct_c: self.uct_c.or(file.uct_c),
            bn_threshold: self.bn_threshold.or(file.bn_threshold),
            n_terminate: self.n_terminate.or(file.n_terminate),
            early_terminate: self.early_terminate.or(file.early_terminate),
            runtime_limit_s: self.runtime_limit_s.or(file.runtime_limit_s),
            backend: self.backend.or(file.backend),
            model: self.model.or(file.model),
            mock_script: self.mock_script.or(file.mock_script),
            save_dir: self.save_dir.or(file.save_dir),
            resume: self.resume || file.resume.unwrap_or(false),
            import,
            prompt_config: self.prompt_config.or(file.prompt_config),
            config: self.config,
            workers: self.workers.or(file.workers),
            run_version: self.run_version.or(file.run_version),
        })
    }

    /// Search knobs from the flags, with derived defaults re-tied the same
    /// way [`SearchConfig::new`] ties them: `rollout_depth` follows
    /// `max_depth` and `beam_width` follows `n_actions` unless given.
    fn search_config(&self) -> SearchConfig {
        let defaults = SearchConfig::default();
        let mut config = SearchConfig::new(
            self.n_actions.unwrap_or(defaults.n_actions),
            self.n_iterations.unwrap_or(defaults.n_iterations),
            self.max_depth.unwrap_or(defaults.max_depth),
        );
        if let Some(rollout_depth) = self.rollout_depth {
            config.rollout_depth = rollout_depth;
        }
        if let Some(beam_width) = self.beam_width {
            config.beam_width = beam_width;
        }
        if let Some(uct_c) = self.uct_c {
            config.uct_c = uct_c;
        }
        if let Some(bn_threshold) = self.bn_threshold {
            config.bn_threshold = bn_threshold;
        }
        if let Some(early_terminate) = self.early_terminate {
            config.early_terminate = early_terminate;
        }
        config.n_terminate = self.n_terminate;
        config.runtime_limit_s = self.runtime_limit_s;
        config
    }

    fn backend_choice(&self) -> Result<BackendChoice, CliError> {
        match self.backend.as_deref().unwrap_or("mock") {
            "mock" => Ok(BackendChoice::Mock {
                script: self.mock_script.clone(),
            }),
            "http" => {
                if self.mock_script.is_some() {
                    return Err(usage("--mock_script only applies to --backend mock"));
                }
                let model = self
                    .model
                    .clone()
                    .ok_or_else(|| usage("--backend http requires --model"))?;
                Ok(BackendChoice::Http { model })
            }
            other => Err(usage(format!(
                "unknown backend '{other}': expected mock or http"
            ))),
        }
    }
}

/// Builds the populated registry and validates every name the flags
/// mention, so typos fail fast as usage errors instead of mid-run.
fn prepare(args: RunArgs) -> Result<(Registry, RunRequest), CliError> {
    let args = args.merged()?;
    let mut registry = Registry::with_builtins();
    for module in &args.import {
        apply_import(&mut registry, module).map_err(|e| usage(e.to_string()))?;
    }

    let dataset = args
        .dataset
        .clone()
        .ok_or_else(|| usage("--dataset is required"))?;
    let save_dir = args
        .save_dir
        .clone()
        .ok_or_else(|| usage("--save_dir is required"))?;
    let name_checks: [(ComponentKind, &Option<String>); 5] = [
        (ComponentKind::Dataset, &Some(dataset.clone())),
        (ComponentKind::Policy, &args.policy),
        (ComponentKind::Transition, &args.transition),
        (ComponentKind::Reward, &args.reward),
        (ComponentKind::Search, &args.search),
    ];
    for (kind, name) in name_checks {
        if let Some(name) = name {
            if !registry.contains(kind, name) {
                return Err(usage(format!(
                    "unknown {kind} '{name}': available: {}",
                    registry.names(kind).join(", ")
                )));
            }
        }
    }
    if let Some(framework) = &args.search_framework {
        registry
            .framework(framework)
            .map_err(|e| usage(e.to_string()))?;
    }

    let config = args.search_config();
    config.validate().map_err(|e| usage(e.to_string()))?;
    let backend = args.backend_choice()?;
    let request = RunRequest {
        dataset,
        data_file: args.data_file.clone(),
        save_dir,
        config,
        overrides: RunOverrides {
            policy: args.policy.clone(),
            transition: args.transition.clone(),
            reward: args.reward.clone(),
            search: args.search.clone(),
            search_framework: args.search_framework.clone(),
            attach_gate_evaluator: args.bn_threshold.is_some(),
        },
        backend,
        prompt_config: args.prompt_config.clone(),
        resume: args.resume,
        version: args.run_version.clone(),
        workers: args.workers.unwrap_or(1),
    };
    Ok((registry, request))
}

fn print_summary(summary: &RunSummary) {
    println!("run_dir: {}", summary.run_dir.display());
    println!(
        "queries: {} (skipped {}, answered {})",
        summary.queries, summary.skipped, summary.answered
    );
    if let Some(eval) = &summary.eval {
        match eval.accuracy {
            Some(accuracy) => println!(
                "eval: accuracy {:.3} ({}/{} correct)",
                accuracy, eval.correct, eval.queries
            ),
            None => println!("eval: no queries"),
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Search(args) => {
            let (registry, request) = prepare(args)?;
            let summary = run_search_request(&registry, &request).map_err(CliError::Runtime)?;
            print_summary(&summary);
            Ok(())
        }
        Command::Chain(args) => {
            let (registry, request) = prepare(args)?;
            let summary = run_chain_request(&registry, &request).map_err(CliError::Runtime)?;
            print_summary(&summary);
            Ok(())
        }
        Command::Eval(args) => {
            let save_dir = args
                .save_dir
                .ok_or_else(|| usage("--save_dir is required"))?;
            let mut registry = Registry::with_builtins();
            for module in &args.import {
                apply_import(&mut registry, module).map_err(|e| usage(e.to_string()))?;
            }
            let report = evaluate_path(&registry, &save_dir).map_err(CliError::Runtime)?;
            let doc = serde_json::to_value(&report).map_err(|e| CliError::Runtime(e.into()))?;
            print!("{}", to_json_string(&doc));
            Ok(())
        }
    }
}

/// Parses and executes `args`, returning the process exit code. `--help`
/// and `--version` exit 0; parse failures exit 1; run failures exit 2.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            1
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use std::path::Path;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "grove-cli-{tag}-{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).unwrap()
    }

    fn run_args(args: &[&str]) -> RunArgs {
        match parse(args).command {
            Command::Search(run) => run,
            _ => panic!("expected search subcommand"),
        }
    }

    #[test]
    fn missing_required_flags_are_usage_errors() {
        let args = run_args(&["grove", "search", "--save_dir", "/tmp/x"]);
        let err = prepare(args).unwrap_err();
        assert!(matches!(&err, CliError::Usage(m) if m.contains("--dataset")), "{err:?}");

        let args = run_args(&["grove", "search", "--dataset", "blocksworld"]);
        let err = prepare(args).unwrap_err();
        assert!(matches!(&err, CliError::Usage(m) if m.contains("--save_dir")), "{err:?}");
    }

    #[test]
    fn unknown_names_fail_fast_with_the_available_list() {
        let args = run_args(&[
            "grove", "search", "--dataset", "no-such", "--save_dir", "/tmp/x",
        ]);
        let err = prepare(args).unwrap_err();
        assert!(
            matches!(&err, CliError::Usage(m) if m.contains("no-such") && m.contains("blocksworld")),
            "{err:?}"
        );

        let args = run_args(&[
            "grove", "search", "--dataset", "blocksworld", "--save_dir", "/tmp/x", "--policy",
            "nope",
        ]);
        let err = prepare(args).unwrap_err();
        assert!(matches!(&err, CliError::Usage(m) if m.contains("env_grounded_policy")), "{err:?}");
    }

    #[test]
    fn bn_threshold_flag_attaches_the_gate_evaluator() {
        let args = run_args(&[
            "grove", "search", "--dataset", "blocksworld", "--save_dir", "/tmp/x",
        ]);
        let (_, request) = prepare(args).unwrap();
        assert!(!request.overrides.attach_gate_evaluator);
        assert_eq!(request.config.bn_threshold, 1.0);

        let args = run_args(&[
            "grove",
            "search",
            "--dataset",
            "blocksworld",
            "--save_dir",
            "/tmp/x",
            "--bn_threshold",
            "0.4",
        ]);
        let (_, request) = prepare(args).unwrap();
        assert!(request.overrides.attach_gate_evaluator);
        assert_eq!(request.config.bn_threshold, 0.4);
    }

    #[test]
    fn derived_knobs_follow_their_sources_unless_given() {
        let args = run_args(&[
            "grove", "search", "--dataset", "blocksworld", "--save_dir", "/tmp/x",
            "--n_actions", "5", "--max_depth", "9",
        ]);
        let (_, request) = prepare(args).unwrap();
        assert_eq!(request.config.beam_width, 5);
        assert_eq!(request.config.rollout_depth, 9);

        let args = run_args(&[
            "grove", "search", "--dataset", "blocksworld", "--save_dir", "/tmp/x",
            "--n_actions", "5", "--beam_width", "2", "--rollout_depth", "3",
        ]);
        let (_, request) = prepare(args).unwrap();
        assert_eq!(request.config.beam_width, 2);
        assert_eq!(request.config.rollout_depth, 3);
    }

    #[test]
    fn http_backend_requires_a_model() {
        let args = run_args(&[
            "grove", "search", "--dataset", "blocksworld", "--save_dir", "/tmp/x", "--backend",
            "http",
        ]);
        let err = prepare(args).unwrap_err();
        assert!(matches!(&err, CliError::Usage(m) if m.contains("--model")), "{err:?}");

        let args = run_args(&[
            "grove", "search", "--dataset", "blocksworld", "--save_dir", "/tmp/x", "--backend",
            "carrier-pigeon",
        ]);
        let err = prepare(args).unwrap_err();
        assert!(matches!(&err, CliError::Usage(m) if m.contains("carrier-pigeon")), "{err:?}");
    }

    #[test]
    fn config_file_fills_gaps_and_explicit_flags_win() {
        let dir = temp_dir("config");
        let path = dir.join("config.json");
        fs::write(
            &path,
            serde_json::json!({
                "dataset": "blocksworld",
                "save_dir": dir.join("runs"),
                "n_iterations": 4,
                "n_actions": 7,
                "import": ["blocksworld_oracles"],
            })
            .to_string(),
        )
        .unwrap();
        let args = run_args(&[
            "grove",
            "search",
            "--config",
            path.to_str().unwrap(),
            "--n_actions",
            "2",
            "--import",
            "blocksworld_oracles",
        ]);
        let (registry, request) = prepare(args).unwrap();
        assert_eq!(request.dataset, "blocksworld");
        assert_eq!(request.config.n_iterations, 4);
        assert_eq!(request.config.n_actions, 2, "explicit flag beats the file");
        // The duplicate import collapsed instead of colliding.
        assert!(registry.contains(ComponentKind::Policy, "oracle_move_policy"));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn invalid_knob_values_are_usage_errors() {
        let args = run_args(&[
            "grove", "search", "--dataset", "blocksworld", "--save_dir", "/tmp/x",
            "--bn_threshold", "1.5",
        ]);
        let err = prepare(args).unwrap_err();
        assert!(matches!(&err, CliError::Usage(m) if m.contains("bn_threshold")), "{err:?}");
    }

    #[test]
    fn end_to_end_exit_codes() {
        let dir = temp_dir("exit");
        let data = dir.join("blocks.json");
        fs::write(
            &data,
            serde_json::json!([
                {"init": "stack A B | holding: none", "goal": "A on table; B on table"},
            ])
            .to_string(),
        )
        .unwrap();
        let save = dir.join("runs");
        let code = run([
            "grove",
            "search",
            "--dataset",
            "blocksworld",
            "--data_file",
            data.to_str().unwrap(),
            "--save_dir",
            save.to_str().unwrap(),
            "--n_iterations",
            "3",
            "--max_depth",
            "4",
        ]);
        assert_eq!(code, 0);
        let run_dir = save.join("blocksworld_mcts").join(format!(
            "run_{}",
            env!("CARGO_PKG_VERSION")
        ));
        assert!(run_dir.join("config.json").is_file());

        let code = run([
            "grove",
            "eval",
            "--save_dir",
            run_dir.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        assert!(run_dir.join("eval_results.json").is_file());

        // Unknown flag → usage error.
        assert_eq!(run(["grove", "search", "--no-such-flag"]), 1);
        // Eval of a directory with no run → runtime failure.
        assert_eq!(
            run([
                "grove",
                "eval",
                "--save_dir",
                dir.join("empty").to_str().unwrap()
            ]),
            2
        );
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(run(["grove", "--help"]), 0);
        assert_eq!(run(["grove", "--version"]), 0);
        assert_eq!(run(["grove", "search", "--help"]), 0);
    }

    #[test]
    fn eval_requires_save_dir(){
        assert_eq!(run(["grove", "eval"]), 1);
    }

    #[test]
    fn chain_subcommand_runs_and_auto_evaluates() {
        let dir = temp_dir("chain");
        let data = dir.join("blocks.json");
        fs::write(
            &data,
            serde_json::json!([
                {"init": "stack A B | holding: none", "goal": "A on table; B on table"},
            ])
            .to_string(),
        )
        .unwrap();
        let save = dir.join("runs");
        let code = run([
            "grove",
            "chain",
            "--dataset",
            "blocksworld",
            "--data_file",
            data.to_str().unwrap(),
            "--save_dir",
            save.to_str().unwrap(),
            "--max_depth",
            "4",
        ]);
        assert_eq!(code, 0);
        let run_dir: &Path = &save.join("blocksworld_chain").join(format!(
            "run_{}",
            env!("CARGO_PKG_VERSION")
        ));
        assert!(run_dir.join("eval_results.json").is_file());
        assert!(run_dir.join("checkpoints").join("0.json").is_file());
        fs::remove_dir_all(&dir).unwrap();
    }
}
