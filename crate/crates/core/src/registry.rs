//! Kind-scoped component registration and run assembly.
//!
//! Everything a run needs — policy, transition, reward, dataset, resource
//! bundle, search engine — is registered under a `(kind, name)` key and
//! built through a factory when a run is assembled. Assembly resolves one
//! name per role with a fixed precedence (explicit override → framework
//! bundle → dataset-named registration → task-type default), then checks
//! that the chosen components' declared task types agree.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::backends::Backend;
use crate::components::{
    policies, rewards, transitions, ComponentBase, Environment, Policy, RewardModel, Transition,
};
use crate::domains::{self, Dataset, TaskType};
use crate::error::{Error, Result};
use crate::observability::InferenceLogger;
use crate::prompts::PromptRegistry;
use crate::search::{
    BfsEngine, ComponentSet, MctsEngine, RewardBranchEvaluator, SearchConfig, SearchEngine,
};
use crate::tools::ResourceBundle;

/// The six registerable kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ComponentKind {
    Policy,
    Transition,
    Reward,
    Dataset,
    Resource,
    Search,
}

impl ComponentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Policy => "policy",
            ComponentKind::Transition => "transition",
            ComponentKind::Reward => "reward",
            ComponentKind::Dataset => "dataset",
            ComponentKind::Resource => "resource",
            ComponentKind::Search => "search",
        }
    }
}

impl std::fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identity of one registered entry. `task_type: None` marks an
/// instance-specific component that pairs with any task type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentKey {
    pub kind: ComponentKind,
    pub name: String,
    pub task_type: Option<TaskType>,
}

impl ComponentKey {
    pub fn new(kind: ComponentKind, name: impl Into<String>) -> Self {
        ComponentKey {
            kind,
            name: name.into(),
            task_type: None,
        }
    }

    pub fn with_task_type(mut self, task_type: TaskType) -> Self {
        self.task_type = Some(task_type);
        self
    }
}

/// Everything factories may draw on while building components for one run.
#[derive(Clone)]
pub struct BuildContext<'a> {
    pub backend: Arc<dyn Backend>,
    pub logger: Arc<InferenceLogger>,
    pub prompts: Arc<PromptRegistry>,
    pub dataset: &'a Dataset,
    pub config: &'a SearchConfig,
    /// Role label for inference accounting ("policy", "transition",
    /// "reward", "evaluator"); set by assembly per component slot.
    pub instance: &'a str,
}

impl<'a> BuildContext<'a> {
    fn for_instance(&self, instance: &'a str) -> BuildContext<'a> {
        BuildContext {
            instance,
            ..self.clone()
        }
    }

    /// Standard [`ComponentBase`] wiring: backend + logger + prompts, task
    /// name from the dataset, task type from the component's declaration.
    pub fn base(&self, component: &str, task_type: Option<TaskType>) -> ComponentBase {
        ComponentBase::new(
            component,
            self.instance,
            self.backend.clone(),
            self.logger.clone(),
            self.prompts.clone(),
        )
        .with_task_name(Some(self.dataset.name.clone()))
        .with_task_type(task_type.map(|t| t.as_str().to_string()))
    }

    /// The dataset's environment, required by environment-grounded
    /// components.
    pub fn environment(&self) -> Result<Arc<dyn Environment>> {
        self.dataset.environment.clone().ok_or_else(|| {
            Error::Assembly(format!(
                "dataset '{}' has no environment, but an environment-grounded component needs one",
                self.dataset.name
            ))
        })
    }

    /// The dataset's tool bundle, required by tool-use components.
    pub fn resources(&self) -> Result<ResourceBundle> {
        self.dataset.resources.clone().ok_or_else(|| {
            Error::Assembly(format!(
                "dataset '{}' has no tool resources, but a tool-use component needs them",
                self.dataset.name
            ))
        })
    }
}

pub type PolicyFactory = Arc<dyn Fn(&BuildContext<'_>) -> Result<Arc<dyn Policy>> + Send + Sync>;
pub type TransitionFactory =
    Arc<dyn Fn(&BuildContext<'_>) -> Result<Arc<dyn Transition>> + Send + Sync>;
/// Reward factories receive the already-built transition so trajectory-
/// completing judges can share the run's execution semantics.
pub type RewardFactory = Arc<
    dyn Fn(&BuildContext<'_>, &Arc<dyn Transition>) -> Result<Arc<dyn RewardModel>> + Send + Sync,
>;
pub type DatasetFactory = Arc<dyn Fn(Option<&Path>) -> Result<Dataset> + Send + Sync>;
pub type ResourceFactory = Arc<dyn Fn() -> Result<ResourceBundle> + Send + Sync>;
pub type SearchFactory = Arc<dyn Fn() -> Result<Arc<dyn SearchEngine>> + Send + Sync>;

/// Kind-matched constructor.
#[derive(Clone)]
pub enum Factory {
    Policy(PolicyFactory),
    Transition(TransitionFactory),
    Reward(RewardFactory),
    Dataset(DatasetFactory),
    Resource(ResourceFactory),
    Search(SearchFactory),
}

impl Factory {
    fn kind(&self) -> ComponentKind {
        match self {
            Factory::Policy(_) => ComponentKind::Policy,
            Factory::Transition(_) => ComponentKind::Transition,
            Factory::Reward(_) => ComponentKind::Reward,
            Factory::Dataset(_) => ComponentKind::Dataset,
            Factory::Resource(_) => ComponentKind::Resource,
            Factory::Search(_) => ComponentKind::Search,
        }
    }
}

/// One registered factory with its identity and, optionally, the config
/// parameters it reads.
#[derive(Clone)]
pub struct FactoryEntry {
    pub key: ComponentKey,
    pub factory: Factory,
    pub config_schema: Option<Vec<String>>,
}

impl std::fmt::Debug for FactoryEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FactoryEntry")
            .field("key", &self.key)
            .field("config_schema", &self.config_schema)
            .finish_non_exhaustive()
    }
}

/// Engine plus, for the task type the framework canonically targets, a
/// policy/transition/reward triple. On datasets of other task types only
/// the engine applies and components fall back to convention.
#[derive(Debug, Clone)]
pub struct FrameworkBundle {
    pub name: String,
    pub engine: String,
    pub triple: Option<FrameworkTriple>,
}

#[derive(Debug, Clone)]
pub struct FrameworkTriple {
    pub task_type: TaskType,
    pub policy: String,
    pub transition: String,
    pub reward: String,
}

/// Per-role name overrides for run assembly (normally CLI flags).
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub policy: Option<String>,
    pub transition: Option<String>,
    pub reward: Option<String>,
    pub search: Option<String>,
    pub search_framework: Option<String>,
    /// Attach the reward-backed branching evaluator so `bn_threshold`
    /// actually gates (set when the threshold was given explicitly).
    pub attach_gate_evaluator: bool,
}

/// Resolved names recorded into a run's config for reproducibility.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ResolvedNames {
    pub policy: String,
    pub transition: String,
    pub reward: String,
    pub search: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_framework: Option<String>,
}

/// A fully assembled run: components bound to one dataset, the engine, and
/// the labels describing the assembly.
pub struct AssembledRun {
    pub components: ComponentSet,
    pub engine: Arc<dyn SearchEngine>,
    pub names: ResolvedNames,
    /// Run-directory method label: the framework name when one was used,
    /// otherwise the engine name.
    pub method: String,
}

impl std::fmt::Debug for AssembledRun {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AssembledRun")
            .field("names", &self.names)
            .field("method", &self.method)
            .finish_non_exhaustive()
    }
}

/// Kind-scoped named registry. Written once during startup (built-ins plus
/// imported extensions), read-only afterwards.
#[derive(Clone, Default)]
pub struct Registry {
    entries: BTreeMap<(ComponentKind, String), FactoryEntry>,
    frameworks: BTreeMap<String, FrameworkBundle>,
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("entries", &self.entries.keys().collect::<Vec<_>>())
            .field("frameworks", &self.frameworks.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl Registry {
    /// An empty registry (extension tests); runs normally start from
    /// [`Registry::with_builtins`].
    pub fn new() -> Self {
        Registry::default()
    }

    /// All built-in components, datasets, engines and framework bundles.
    pub fn with_builtins() -> Self {
        let mut registry = Registry::new();
        registry
            .install_builtins()
            .expect("built-in registrations never collide");
        registry
    }

    pub fn register(
        &mut self,
        key: ComponentKey,
        factory: Factory,
        config_schema: Option<Vec<String>>,
    ) -> Result<()> {
        if factory.kind() != key.kind {
            return Err(Error::Assembly(format!(
                "factory kind {} does not match key kind {} for '{}'",
                factory.kind(),
                key.kind,
                key.name
            )));
        }
        let map_key = (key.kind, key.name.clone());
        if self.entries.contains_key(&map_key) {
            return Err(Error::DuplicateEntry {
                kind: key.kind.to_string(),
                name: key.name,
            });
        }
        self.entries.insert(
            map_key,
            FactoryEntry {
                key,
                factory,
                config_schema,
            },
        );
        Ok(())
    }

    /// Exact, case-sensitive lookup.
    pub fn resolve(&self, kind: ComponentKind, name: &str) -> Result<&FactoryEntry> {
        self.entries
            .get(&(kind, name.to_string()))
            .ok_or_else(|| Error::NotFound {
                kind: kind.to_string(),
                name: name.to_string(),
                available: self.names(kind).join(", "),
            })
    }

    pub fn contains(&self, kind: ComponentKind, name: &str) -> bool {
        self.entries.contains_key(&(kind, name.to_string()))
    }

    /// Registered names of one kind, ascending.
    pub fn names(&self, kind: ComponentKind) -> Vec<String> {
        self.entries
            .keys()
            .filter(|(k, _)| *k == kind)
            .map(|(_, name)| name.clone())
            .collect()
    }

    pub fn register_framework(&mut self, bundle: FrameworkBundle) -> Result<()> {
        if self.frameworks.contains_key(&bundle.name) {
            return Err(Error::DuplicateEntry {
                kind: "search_framework".to_string(),
                name: bundle.name,
            });
        }
        self.frameworks.insert(bundle.name.clone(), bundle);
        Ok(())
    }

    pub fn framework(&self, name: &str) -> Result<&FrameworkBundle> {
        self.frameworks.get(name).ok_or_else(|| Error::NotFound {
            kind: "search_framework".to_string(),
            name: name.to_string(),
            available: self
                .frameworks
                .keys()
                .cloned()
                .collect::<Vec<_>>()
                .join(", "),
        })
    }

    pub fn framework_names(&self) -> Vec<String> {
        self.frameworks.keys().cloned().collect()
    }

    // ------------------------------------------------ typed registration

    pub fn register_policy(
        &mut self,
        name: &str,
        task_type: Option<TaskType>,
        factory: impl Fn(&BuildContext<'_>) -> Result<Arc<dyn Policy>> + Send + Sync + 'static,
    ) -> Result<()> {
        let mut key = ComponentKey::new(ComponentKind::Policy, name);
        key.task_type = task_type;
        self.register(key, Factory::Policy(Arc::new(factory)), None)
    }

    pub fn register_transition(
        &mut self,
        name: &str,
        task_type: Option<TaskType>,
        factory: impl Fn(&BuildContext<'_>) -> Result<Arc<dyn Transition>> + Send + Sync + 'static,
    ) -> Result<()> {
        let mut key = ComponentKey::new(ComponentKind::Transition, name);
        key.task_type = task_type;
        self.register(key, Factory::Transition(Arc::new(factory)), None)
    }

    pub fn register_reward(
        &mut self,
        name: &str,
        task_type: Option<TaskType>,
        factory: impl Fn(&BuildContext<'_>, &Arc<dyn Transition>) -> Result<Arc<dyn RewardModel>>
            + Send
            + Sync
            + 'static,
    ) -> Result<()> {
        let mut key = ComponentKey::new(ComponentKind::Reward, name);
        key.task_type = task_type;
        self.register(key, Factory::Reward(Arc::new(factory)), None)
    }

    pub fn register_dataset(
        &mut self,
        name: &str,
        task_type: TaskType,
        factory: impl Fn(Option<&Path>) -> Result<Dataset> + Send + Sync + 'static,
    ) -> Result<()> {
        let key = ComponentKey::new(ComponentKind::Dataset, name).with_task_type(task_type);
        self.register(key, Factory::Dataset(Arc::new(factory)), None)
    }

    pub fn register_resource(
        &mut self,
        name: &str,
        factory: impl Fn() -> Result<ResourceBundle> + Send + Sync + 'static,
    ) -> Result<()> {
        let key = ComponentKey::new(ComponentKind::Resource, name);
        self.register(key, Factory::Resource(Arc::new(factory)), None)
    }

    pub fn register_search(
        &mut self,
        name: &str,
        config_schema: Option<Vec<String>>,
        factory: impl Fn() -> Result<Arc<dyn SearchEngine>> + Send + Sync + 'static,
    ) -> Result<()> {
        let key = ComponentKey::new(ComponentKind::Search, name);
        self.register(key, Factory::Search(Arc::new(factory)), config_schema)
    }

    // ------------------------------------------------------ typed builds

    pub fn build_policy(&self, name: &str, ctx: &BuildContext<'_>) -> Result<Arc<dyn Policy>> {
        match &self.resolve(ComponentKind::Policy, name)?.factory {
            Factory::Policy(f) => f(ctx),
            _ => unreachable!("kind checked at registration"),
        }
    }

    pub fn build_transition(
        &self,
        name: &str,
        ctx: &BuildContext<'_>,
    ) -> Result<Arc<dyn Transition>> {
        match &self.resolve(ComponentKind::Transition, name)?.factory {
            Factory::Transition(f) => f(ctx),
            _ => unreachable!("kind checked at registration"),
        }
    }

    pub fn build_reward(
        &self,
        name: &str,
        ctx: &BuildContext<'_>,
        transition: &Arc<dyn Transition>,
    ) -> Result<Arc<dyn RewardModel>> {
        match &self.resolve(ComponentKind::Reward, name)?.factory {
            Factory::Reward(f) => f(ctx, transition),
            _ => unreachable!("kind checked at registration"),
        }
    }

    pub fn build_dataset(&self, name: &str, data_file: Option<&Path>) -> Result<Dataset> {
        match &self.resolve(ComponentKind::Dataset, name)?.factory {
            Factory::Dataset(f) => f(data_file),
            _ => unreachable!("kind checked at registration"),
        }
    }

    pub fn build_resource(&self, name: &str) -> Result<ResourceBundle> {
        match &self.resolve(ComponentKind::Resource, name)?.factory {
            Factory::Resource(f) => f(),
            _ => unreachable!("kind checked at registration"),
        }
    }

    pub fn build_engine(&self, name: &str) -> Result<Arc<dyn SearchEngine>> {
        match &self.resolve(ComponentKind::Search, name)?.factory {
            Factory::Search(f) => f(),
            _ => unreachable!("kind checked at registration"),
        }
    }

    // --------------------------------------------------------- assembly

    /// Resolves and builds a full component set for `ctx.dataset`.
    ///
    /// Name precedence per role: explicit override → framework triple (when
    /// the framework targets the dataset's task type) → a registration
    /// under the dataset's own name → the task-type default. The chosen
    /// components' declared task types must agree with each other.
    pub fn assemble_run(
        &self,
        ctx: &BuildContext<'_>,
        overrides: &RunOverrides,
    ) -> Result<AssembledRun> {
        let dataset = ctx.dataset;
        let framework = overrides
            .search_framework
            .as_deref()
            .map(|name| self.framework(name))
            .transpose()?;
        let triple = framework
            .and_then(|fw| fw.triple.as_ref())
            .filter(|triple| triple.task_type == dataset.task_type);

        let defaults = task_type_defaults(dataset.task_type);
        let choose = |kind: ComponentKind,
                      explicit: Option<&String>,
                      from_triple: Option<&String>,
                      default: &str|
         -> String {
            if let Some(name) = explicit {
                return name.clone();
            }
            if let Some(name) = from_triple {
                return name.clone();
            }
            if self.contains(kind, &dataset.name) {
                return dataset.name.clone();
            }
            default.to_string()
        };

        let policy_name = choose(
            ComponentKind::Policy,
            overrides.policy.as_ref(),
            triple.map(|t| &t.policy),
            defaults.0,
        );
        let transition_name = choose(
            ComponentKind::Transition,
            overrides.transition.as_ref(),
            triple.map(|t| &t.transition),
            defaults.1,
        );
        let reward_name = choose(
            ComponentKind::Reward,
            overrides.reward.as_ref(),
            triple.map(|t| &t.reward),
            defaults.2,
        );
        let engine_name = overrides
            .search
            .clone()
            .or_else(|| framework.map(|fw| fw.engine.clone()))
            .unwrap_or_else(|| "mcts".to_string());

        self.check_task_type_agreement(&[
            (ComponentKind::Policy, &policy_name),
            (ComponentKind::Transition, &transition_name),
            (ComponentKind::Reward, &reward_name),
        ])?;

        let policy = self.build_policy(&policy_name, &ctx.for_instance("policy"))?;
        let transition = self.build_transition(&transition_name, &ctx.for_instance("transition"))?;
        let reward = self.build_reward(&reward_name, &ctx.for_instance("reward"), &transition)?;
        let evaluator = if overrides.attach_gate_evaluator {
            Some(Arc::new(RewardBranchEvaluator::new(reward.clone()))
                as Arc<dyn crate::search::BranchEvaluator>)
        } else {
            None
        };
        let engine = self.build_engine(&engine_name)?;

        let method = framework
            .map(|fw| fw.name.clone())
            .unwrap_or_else(|| engine_name.clone());
        Ok(AssembledRun {
            components: ComponentSet {
                policy,
                transition,
                reward,
                evaluator,
            },
            engine,
            names: ResolvedNames {
                policy: policy_name,
                transition: transition_name,
                reward: reward_name,
                search: engine_name,
                search_framework: framework.map(|fw| fw.name.clone()),
            },
            method,
        })
    }

    /// All declared task types among the chosen components must be equal;
    /// undeclared (`None`) components pair with anything.
    fn check_task_type_agreement(&self, chosen: &[(ComponentKind, &str)]) -> Result<()> {
        let mut first: Option<(ComponentKind, &str, TaskType)> = None;
        for (kind, name) in chosen {
            let declared = self.resolve(*kind, name)?.key.task_type;
            if let Some(task_type) = declared {
                match first {
                    None => first = Some((*kind, name, task_type)),
                    Some((fk, fname, ft)) if ft != task_type => {
                        return Err(Error::Assembly(format!(
                            "incompatible task types: {fk} '{fname}' is {ft} but {kind} '{name}' is {task_type}",
                        )));
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }

    fn install_builtins(&mut self) -> Result<()> {
        use TaskType::*;

        // Policies.
        self.register_policy(policies::CONCAT_POLICY, Some(LanguageGrounded), |ctx| {
            Ok(Arc::new(policies::ConcatPolicy::new(ctx.base(
                policies::CONCAT_POLICY,
                Some(LanguageGrounded),
            ))))
        })?;
        self.register_policy(
            policies::SUB_QUESTION_POLICY,
            Some(LanguageGrounded),
            |ctx| {
                Ok(Arc::new(policies::SubQuestionPolicy::new(ctx.base(
                    policies::SUB_QUESTION_POLICY,
                    Some(LanguageGrounded),
                ))))
            },
        )?;
        self.register_policy(policies::ENV_GROUNDED_POLICY, Some(EnvGrounded), |ctx| {
            Ok(Arc::new(policies::EnvGroundedPolicy::new(
                ctx.base(policies::ENV_GROUNDED_POLICY, Some(EnvGrounded)),
                ctx.environment()?,
            )))
        })?;
        self.register_policy(policies::TOOL_USE_POLICY, Some(ToolUse), |ctx| {
            Ok(Arc::new(policies::ToolUsePolicy::new(
                ctx.base(policies::TOOL_USE_POLICY, Some(ToolUse)),
                ctx.resources()?,
            )))
        })?;
        // Transitions.
        self.register_transition(
            transitions::CONCAT_TRANSITION,
            Some(LanguageGrounded),
            |_ctx| Ok(Arc::new(transitions::ConcatTransition::new())),
        )?;
        self.register_transition(
            transitions::SUB_QUESTION_TRANSITION,
            Some(LanguageGrounded),
            |ctx| {
                Ok(Arc::new(transitions::SubQuestionTransition::new(ctx.base(
                    transitions::SUB_QUESTION_TRANSITION,
                    Some(LanguageGrounded),
                ))))
            },
        )?;
        self.register_transition(
            transitions::ENV_GROUNDED_TRANSITION,
            Some(EnvGrounded),
            |ctx| {
                Ok(Arc::new(transitions::EnvGroundedTransition::new(
                    ctx.base(transitions::ENV_GROUNDED_TRANSITION, Some(EnvGrounded)),
                    ctx.environment()?,
                )))
            },
        )?;
        self.register_transition(transitions::TOOL_TRANSITION, Some(ToolUse), |ctx| {
            Ok(Arc::new(transitions::ToolTransition::new(ctx.resources()?)))
        })?;

        // Rewards.
        self.register_reward(rewards::GENERATIVE_PRM, Some(LanguageGrounded), |ctx, _| {
            Ok(Arc::new(rewards::GenerativePrm::new(ctx.base(
                rewards::GENERATIVE_PRM,
                Some(LanguageGrounded),
            ))))
        })?;
        self.register_reward(rewards::ENV_GROUNDED_REWARD, Some(EnvGrounded), |ctx, _| {
            Ok(Arc::new(rewards::EnvGroundedReward::new(
                ctx.environment()?,
            )))
        })?;
        self.register_reward(
            rewards::COMPLETION_JUDGE_REWARD,
            Some(ToolUse),
            |ctx, transition| {
                Ok(Arc::new(rewards::CompletionJudgeReward::new(
                    ctx.base(rewards::COMPLETION_JUDGE_REWARD, Some(ToolUse)),
                    transition.clone(),
                )))
            },
        )?;

        // Datasets.
        self.register_dataset("blocksworld", EnvGrounded, domains::blocksworld::load)?;
        self.register_dataset("crosswords", EnvGrounded, domains::crosswords::load)?;
        self.register_dataset("toy-math", LanguageGrounded, domains::math::load)?;
        self.register_dataset("toy-sql", ToolUse, domains::toysql::load)?;

        // Resources.
        self.register_resource("toy-sql", || {
            Ok(ResourceBundle::new().with_tool(Arc::new(domains::toysql::SqlTool::new())))
        })?;

        // Search engines.
        self.register_search(
            "mcts",
            Some(
                [
                    "n_actions",
                    "n_iterations",
                    "max_depth",
                    "rollout_depth",
                    "uct_c",
                    "early_terminate",
                    "bn_threshold",
                    "n_terminate",
                    "runtime_limit_s",
                ]
                .map(String::from)
                .to_vec(),
            ),
            || Ok(Arc::new(MctsEngine::new())),
        )?;
        self.register_search(
            "bfs",
            Some(
                [
                    "n_actions",
                    "n_iterations",
                    "max_depth",
                    "beam_width",
                    "early_terminate",
                    "bn_threshold",
                    "n_terminate",
                    "runtime_limit_s",
                ]
                .map(String::from)
                .to_vec(),
            ),
            || Ok(Arc::new(BfsEngine::new())),
        )?;

        // Framework bundles: engine plus the canonical language-grounded
        // triple; on other task types only the engine applies.
        self.register_framework(FrameworkBundle {
            name: "rap".to_string(),
            engine: "mcts".to_string(),
            triple: Some(FrameworkTriple {
                task_type: LanguageGrounded,
                policy: policies::SUB_QUESTION_POLICY.to_string(),
                transition: transitions::SUB_QUESTION_TRANSITION.to_string(),
                reward: rewards::GENERATIVE_PRM.to_string(),
            }),
        })?;
        self.register_framework(FrameworkBundle {
            name: "rest".to_string(),
            engine: "mcts".to_string(),
            triple: Some(FrameworkTriple {
                task_type: LanguageGrounded,
                policy: policies::CONCAT_POLICY.to_string(),
                transition: transitions::CONCAT_TRANSITION.to_string(),
                reward: rewards::GENERATIVE_PRM.to_string(),
            }),
        })?;
        self.register_framework(FrameworkBundle {
            name: "tot".to_string(),
            engine: "bfs".to_string(),
            triple: Some(FrameworkTriple {
                task_type: LanguageGrounded,
                policy: policies::CONCAT_POLICY.to_string(),
                transition: transitions::CONCAT_TRANSITION.to_string(),
                reward: rewards::GENERATIVE_PRM.to_string(),
            }),
        })?;
        Ok(())
    }
}

/// Names of the compiled-in extension modules loadable with `--import`.
pub const IMPORTS: [&str; 1] = ["blocksworld_oracles"];

/// Applies one named extension module to the registry.
///
/// Extensions are compiled into this binary and activated by name; they
/// register additional components on top of the built-ins. The
/// `blocksworld_oracles` module adds two scripted analysis policies:
/// `oracle_move_policy` (breadth-first solver moves) and
/// `adversarial_move_policy` (deliberately unhelpful moves), useful as
/// upper/lower reference points for search quality.
pub fn apply_import(registry: &mut Registry, name: &str) -> Result<()> {
    match name {
        "blocksworld_oracles" => {
            registry.register_policy("oracle_move_policy", Some(TaskType::EnvGrounded), |ctx| {
                Ok(Arc::new(domains::blocksworld::OracleMovePolicy::solver(
                    ctx.config.max_depth,
                )))
            })?;
            registry.register_policy(
                "adversarial_move_policy",
                Some(TaskType::EnvGrounded),
                |ctx| {
                    Ok(Arc::new(domains::blocksworld::OracleMovePolicy::adversary(
                        ctx.config.max_depth,
                    )))
                },
            )
        }
        other => Err(Error::NotFound {
            kind: "import".to_string(),
            name: other.to_string(),
            available: IMPORTS.join(", "),
        }),
    }
}

/// Default (policy, transition, reward) component names per task type.
pub fn task_type_defaults(task_type: TaskType) -> (&'static str, &'static str, &'static str) {
    match task_type {
        TaskType::LanguageGrounded => (
            policies::CONCAT_POLICY,
            transitions::CONCAT_TRANSITION,
            rewards::GENERATIVE_PRM,
        ),
        TaskType::EnvGrounded => (
            policies::ENV_GROUNDED_POLICY,
            transitions::ENV_GROUNDED_TRANSITION,
            rewards::ENV_GROUNDED_REWARD,
        ),
        TaskType::ToolUse => (
            policies::TOOL_USE_POLICY,
            transitions::TOOL_TRANSITION,
            rewards::COMPLETION_JUDGE_REWARD,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::ScriptedBackend;
    use crate::components::default_prompt_registry;

    fn ctx<'a>(
        dataset: &'a Dataset,
        config: &'a SearchConfig,
        backend: Arc<dyn Backend>,
    ) -> BuildContext<'a> {
        BuildContext {
            backend,
            logger: Arc::new(InferenceLogger::new()),
            prompts: Arc::new(default_prompt_registry()),
            dataset,
            config,
            instance: "test",
        }
    }

    fn inert_backend() -> Arc<dyn Backend> {
        Arc::new(ScriptedBackend::builder().build())
    }

    #[test]
    fn register_then_resolve_returns_same_entry() {
        let mut registry = Registry::new();
        registry
            .register_transition("crosswords", Some(TaskType::EnvGrounded), |_| {
                unreachable!("factory not invoked by resolve")
            })
            .unwrap();
        let key = registry
            .resolve(ComponentKind::Transition, "crosswords")
            .unwrap()
            .key
            .clone();
        assert_eq!(key.name, "crosswords");
        assert_eq!(key.task_type, Some(TaskType::EnvGrounded));
        // Registering something else never changes an existing resolution.
        registry
            .register_transition("other", None, |_| unreachable!())
            .unwrap();
        let again = registry
            .resolve(ComponentKind::Transition, "crosswords")
            .unwrap();
        assert_eq!(again.key, key);
    }

    #[test]
    fn duplicate_registration_is_rejected() {
        let mut registry = Registry::new();
        registry.register_search("beam", None, || unreachable!()).unwrap();
        let err = registry
            .register_search("beam", None, || unreachable!())
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateEntry { .. }));
        assert!(err.to_string().contains("search 'beam'"));
    }

    #[test]
    fn unknown_name_error_lists_registered_names() {
        let registry = Registry::with_builtins();
        let err = registry
            .resolve(ComponentKind::Search, "beam2")
            .unwrap_err();
        let message = err.to_string();
        assert!(message.contains("beam2"));
        assert!(message.contains("bfs"));
        assert!(message.contains("mcts"));
    }

    #[test]
    fn names_are_case_sensitive() {
        let registry = Registry::with_builtins();
        assert!(registry.resolve(ComponentKind::Search, "BFS").is_err());
        assert!(registry.resolve(ComponentKind::Search, "bfs").is_ok());
    }

    #[test]
    fn kind_mismatched_factory_is_rejected() {
        let mut registry = Registry::new();
        let err = registry
            .register(
                ComponentKey::new(ComponentKind::Policy, "x"),
                Factory::Search(Arc::new(|| Ok(Arc::new(MctsEngine::new())))),
                None,
            )
            .unwrap_err();
        assert!(matches!(err, Error::Assembly(_)));
    }

    #[test]
    fn builtin_datasets_build() {
        let registry = Registry::with_builtins();
        for name in crate::domains::DATASET_NAMES {
            let dataset = registry.build_dataset(name, None).unwrap();
            assert_eq!(dataset.name, name);
            assert!(!dataset.queries.is_empty());
        }
        assert!(registry.build_dataset("nope", None).is_err());
    }

    #[test]
    fn env_dataset_assembles_env_grounded_defaults() {
        let registry = Registry::with_builtins();
        let dataset = registry.build_dataset("crosswords", None).unwrap();
        let config = SearchConfig::default();
        let run = registry
            .assemble_run(
                &ctx(&dataset, &config, inert_backend()),
                &RunOverrides::default(),
            )
            .unwrap();
        assert_eq!(run.names.policy, "env_grounded_policy");
        assert_eq!(run.names.transition, "env_grounded_transition");
        assert_eq!(run.names.reward, "env_grounded_reward");
        assert_eq!(run.names.search, "mcts");
        assert_eq!(run.method, "mcts");
        assert_eq!(run.engine.name(), "mcts");
        assert!(run.components.evaluator.is_none());
    }

    #[test]
    fn framework_bundle_applies_on_matching_task_type() {
        let registry = Registry::with_builtins();
        let dataset = registry.build_dataset("toy-math", None).unwrap();
        let config = SearchConfig::default();
        let overrides = RunOverrides {
            search_framework: Some("tot".to_string()),
            ..RunOverrides::default()
        };
        let run = registry
            .assemble_run(&ctx(&dataset, &config, inert_backend()), &overrides)
            .unwrap();
        assert_eq!(run.names.policy, "concat_policy");
        assert_eq!(run.names.transition, "concat_transition");
        assert_eq!(run.names.reward, "generative_prm");
        assert_eq!(run.names.search, "bfs");
        assert_eq!(run.method, "tot");
    }

    #[test]
    fn framework_on_other_task_type_contributes_engine_only() {
        let registry = Registry::with_builtins();
        let dataset = registry.build_dataset("blocksworld", None).unwrap();
        let config = SearchConfig::default();
        let overrides = RunOverrides {
            search_framework: Some("rap".to_string()),
            ..RunOverrides::default()
        };
        let run = registry
            .assemble_run(&ctx(&dataset, &config, inert_backend()), &overrides)
            .unwrap();
        // The language triple does not apply to an env-grounded dataset.
        assert_eq!(run.names.policy, "env_grounded_policy");
        assert_eq!(run.names.transition, "env_grounded_transition");
        assert_eq!(run.names.search, "mcts");
        assert_eq!(run.method, "rap", "run directory label keeps the framework name");
    }

    #[test]
    fn explicit_overrides_beat_framework_and_defaults() {
        let registry = Registry::with_builtins();
        let dataset = registry.build_dataset("toy-math", None).unwrap();
        let config = SearchConfig::default();
        let overrides = RunOverrides {
            search_framework: Some("tot".to_string()),
            policy: Some("sub_question_policy".to_string()),
            search: Some("mcts".to_string()),
            ..RunOverrides::default()
        };
        let run = registry
            .assemble_run(&ctx(&dataset, &config, inert_backend()), &overrides)
            .unwrap();
        assert_eq!(run.names.policy, "sub_question_policy");
        assert_eq!(run.names.transition, "concat_transition"); // from bundle
        assert_eq!(run.names.search, "mcts"); // explicit beats bundle's bfs
        assert_eq!(run.method, "tot");
    }

    #[test]
    fn dataset_named_registration_beats_task_type_default() {
        let mut registry = Registry::with_builtins();
        registry
            .register_transition("toy-math", Some(TaskType::LanguageGrounded), |_ctx| {
                Ok(Arc::new(transitions::ConcatTransition::new()))
            })
            .unwrap();
        let dataset = registry.build_dataset("toy-math", None).unwrap();
        let config = SearchConfig::default();
        let run = registry
            .assemble_run(
                &ctx(&dataset, &config, inert_backend()),
                &RunOverrides::default(),
            )
            .unwrap();
        assert_eq!(run.names.transition, "toy-math");
        assert_eq!(run.names.policy, "concat_policy");
    }

    #[test]
    fn task_type_mismatch_is_a_hard_error() {
        let registry = Registry::with_builtins();
        let dataset = registry.build_dataset("toy-math", None).unwrap();
        let config = SearchConfig::default();
        let overrides = RunOverrides {
            policy: Some("tool_use_policy".to_string()),
            ..RunOverrides::default()
        };
        let err = registry
            .assemble_run(&ctx(&dataset, &config, inert_backend()), &overrides)
            .unwrap_err();
        let message = err.to_string();
        assert!(matches!(err, Error::Assembly(_)), "{message}");
        assert!(message.contains("tool_use"), "{message}");
        assert!(message.contains("language_grounded"), "{message}");
    }

    #[test]
    fn unknown_framework_lists_available() {
        let registry = Registry::with_builtins();
        let dataset = registry.build_dataset("toy-math", None).unwrap();
        let config = SearchConfig::default();
        let overrides = RunOverrides {
            search_framework: Some("alphazero".to_string()),
            ..RunOverrides::default()
        };
        let err = registry
            .assemble_run(&ctx(&dataset, &config, inert_backend()), &overrides)
            .unwrap_err();
        let message = err.to_string();
        assert!(message.contains("rap") && message.contains("rest") && message.contains("tot"));
    }

    #[test]
    fn gate_evaluator_attaches_on_request() {
        let registry = Registry::with_builtins();
        let dataset = registry.build_dataset("blocksworld", None).unwrap();
        let config = SearchConfig::default();
        let overrides = RunOverrides {
            attach_gate_evaluator: true,
            ..RunOverrides::default()
        };
        let run = registry
            .assemble_run(&ctx(&dataset, &config, inert_backend()), &overrides)
            .unwrap();
        let evaluator = run.components.evaluator.expect("evaluator requested");
        assert_eq!(evaluator.name(), "reward_branch_evaluator");
    }

    #[test]
    fn tool_dataset_assembles_tool_stack_and_resource_builds() {
        let registry = Registry::with_builtins();
        let dataset = registry.build_dataset("toy-sql", None).unwrap();
        let config = SearchConfig::default();
        let run = registry
            .assemble_run(
                &ctx(&dataset, &config, inert_backend()),
                &RunOverrides::default(),
            )
            .unwrap();
        assert_eq!(run.names.policy, "tool_use_policy");
        assert_eq!(run.names.transition, "tool_use_transition");
        assert_eq!(run.names.reward, "completion_judge_reward");

        let bundle = registry.build_resource("toy-sql").unwrap();
        assert_eq!(bundle.tool_names(), vec!["run_sql".to_string()]);
    }

    #[test]
    fn imports_extend_the_registry_and_unknown_imports_list_available() {
        let mut registry = Registry::with_builtins();
        assert!(!registry.contains(ComponentKind::Policy, "oracle_move_policy"));
        apply_import(&mut registry, "blocksworld_oracles").unwrap();
        assert!(registry.contains(ComponentKind::Policy, "oracle_move_policy"));
        assert!(registry.contains(ComponentKind::Policy, "adversarial_move_policy"));
        // Importing twice collides like any duplicate registration.
        let err = apply_import(&mut registry, "blocksworld_oracles").unwrap_err();
        assert!(matches!(err, Error::DuplicateEntry { .. }));

        let err = apply_import(&mut registry, "no_such_module").unwrap_err();
        assert!(err.to_string().contains("blocksworld_oracles"), "{err}");
    }

    #[test]
    fn imported_oracle_policy_assembles_as_override() {
        let mut registry = Registry::with_builtins();
        apply_import(&mut registry, "blocksworld_oracles").unwrap();
        let dataset = registry.build_dataset("blocksworld", None).unwrap();
        let config = SearchConfig::default();
        let overrides = RunOverrides {
            policy: Some("adversarial_move_policy".to_string()),
            ..RunOverrides::default()
        };
        let run = registry
            .assemble_run(&ctx(&dataset, &config, inert_backend()), &overrides)
            .unwrap();
        assert_eq!(run.names.policy, "adversarial_move_policy");
        assert_eq!(run.names.transition, "env_grounded_transition");
    }

    #[test]
    fn env_components_on_dataset_without_environment_fail_clearly() {
        let registry = Registry::with_builtins();
        let dataset = registry.build_dataset("toy-math", None).unwrap();
        let config = SearchConfig::default();
        let overrides = RunOverrides {
            policy: Some("env_grounded_policy".to_string()),
            transition: Some("env_grounded_transition".to_string()),
            reward: Some("env_grounded_reward".to_string()),
            ..RunOverrides::default()
        };
        let err = registry
            .assemble_run(&ctx(&dataset, &config, inert_backend()), &overrides)
            .unwrap_err();
        assert!(err.to_string().contains("no environment"), "{err}");
    }
}
