//! Block stacking: single-arm blocks world with pick up / put down /
//! stack / unstack moves.
//!
//! Queries look like:
//!
//! ```text
//! initial: stack A B | stack C | holding: none
//! goal: A on table; B on A; C on B
//! ```
//!
//! Renders use the same `stack <bottom..top> | holding: <block|none>` shape,
//! with stacks listed in canonical order (sorted by bottom block), so equal
//! configurations always render identically. Besides the [`Environment`],
//! this module ships an exhaustive breadth-first solver (the test oracle), a
//! seeded instance generator, and two model-free policies that rank legal
//! moves by solver distance — one helpful, one adversarial — for engine
//! comparisons that need a controlled gap.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{read_data_file, AnswerChecker, Dataset, QueryRecord, TaskType};
use crate::components::{ActionSpace, CallContext, Environment, Policy};
use crate::error::{Error, Result};
use crate::structures::{Action, State};

/// A table configuration: stacks of blocks plus at most one held block.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Config {
    /// Each inner vector is one stack, bottom first. Kept in canonical
    /// order: sorted by bottom block.
    stacks: Vec<Vec<char>>,
    holding: Option<char>,
}

/// One goal condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Condition {
    /// `On(a, b)`: block `a` rests directly on block `b`.
    On(char, char),
    /// Block rests directly on the table.
    OnTable(char),
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Condition::On(a, b) => write!(f, "{a} on {b}"),
            Condition::OnTable(a) => write!(f, "{a} on table"),
        }
    }
}

impl Config {
    pub fn new(stacks: Vec<Vec<char>>, holding: Option<char>) -> Self {
        let mut config = Config { stacks, holding };
        config.canonicalize();
        config
    }

    fn canonicalize(&mut self) {
        self.stacks.retain(|s| !s.is_empty());
        self.stacks.sort_by_key(|s| s[0]);
    }

    pub fn holding(&self) -> Option<char> {
        self.holding
    }

    pub fn stacks(&self) -> &[Vec<char>] {
        &self.stacks
    }

    /// `stack A B | stack C | holding: none`
    pub fn render(&self) -> String {
        let mut parts: Vec<String> = self
            .stacks
            .iter()
            .map(|s| {
                format!(
                    "stack {}",
                    s.iter().map(char::to_string).collect::<Vec<_>>().join(" ")
                )
            })
            .collect();
        parts.push(format!(
            "holding: {}",
            self.holding.map(|c| c.to_string()).unwrap_or_else(|| "none".to_string())
        ));
        parts.join(" | ")
    }

    pub fn parse(text: &str) -> Result<Config> {
        let mut stacks = Vec::new();
        let mut holding = None;
        let mut saw_holding = false;
        for part in text.split('|').map(str::trim) {
            if let Some(rest) = part.strip_prefix("holding:") {
                saw_holding = true;
                let rest = rest.trim();
                if !rest.eq_ignore_ascii_case("none") {
                    holding = Some(parse_block(rest)?);
                }
            } else if let Some(rest) = part.strip_prefix("stack ") {
                let blocks = rest
                    .split_whitespace()
                    .map(parse_block)
                    .collect::<Result<Vec<char>>>()?;
                if blocks.is_empty() {
                    return Err(Error::Config(format!("empty stack in '{text}'")));
                }
                stacks.push(blocks);
            } else if !part.is_empty() {
                return Err(Error::Config(format!(
                    "cannot parse configuration part '{part}'"
                )));
            }
        }
        if !saw_holding {
            return Err(Error::Config(format!(
                "configuration '{text}' is missing the 'holding:' part"
            )));
        }
        // No block may appear twice.
        let mut seen = std::collections::BTreeSet::new();
        for block in stacks.iter().flatten().chain(holding.iter()) {
            if !seen.insert(*block) {
                return Err(Error::Config(format!(
                    "block {block} appears twice in '{text}'"
                )));
            }
        }
        Ok(Config::new(stacks, holding))
    }

    /// Legal commands in deterministic order.
    pub fn legal_moves(&self) -> Vec<String> {
        let mut moves = Vec::new();
        match self.holding {
            None => {
                for stack in &self.stacks {
                    let top = *stack.last().expect("stacks are non-empty");
                    if stack.len() == 1 {
                        moves.push(format!("pick up {top}"));
                    } else {
                        moves.push(format!("unstack {top} from {}", stack[stack.len() - 2]));
                    }
                }
            }
            Some(held) => {
                moves.push(format!("put down {held}"));
                for stack in &self.stacks {
                    let top = *stack.last().expect("stacks are non-empty");
                    moves.push(format!("stack {held} on {top}"));
                }
            }
        }
        moves
    }

    /// Execute a command, returning the successor configuration.
    pub fn apply(&self, command: &str) -> std::result::Result<Config, String> {
        let words: Vec<String> = command
            .split_whitespace()
            .map(|w| w.to_lowercase())
            .collect();
        let original = || command.trim().to_string();
        let block_at = |words: &[String], i: usize| -> std::result::Result<char, String> {
            words
                .get(i)
                .and_then(|w| single_block(w))
                .ok_or_else(|| format!("cannot parse command '{}'", original()))
        };
        match words.as_slice() {
            [a, b, ..] if a == "pick" && b == "up" => {
                let block = block_at(&words, 2)?;
                if words.len() != 3 {
                    return Err(format!("cannot parse command '{}'", original()));
                }
                if self.holding.is_some() {
                    return Err(format!("cannot pick up {block}: the arm is already holding a block"));
                }
                let mut next = self.clone();
                let Some(i) = next.stacks.iter().position(|s| s == &vec![block]) else {
                    return Err(format!(
                        "cannot pick up {block}: it is not a single block on the table"
                    ));
                };
                next.stacks.remove(i);
                next.holding = Some(block);
                next.canonicalize();
                Ok(next)
            }
            [a, ..] if a == "unstack" => {
                // unstack X from Y
                let block = block_at(&words, 1)?;
                let below = block_at(&words, 3)?;
                if words.len() != 4 || words[2] != "from" {
                    return Err(format!("cannot parse command '{}'", original()));
                }
                if self.holding.is_some() {
                    return Err(format!(
                        "cannot unstack {block}: the arm is already holding a block"
                    ));
                }
                let mut next = self.clone();
                for stack in &mut next.stacks {
                    if stack.len() >= 2
                        && *stack.last().unwrap() == block
                        && stack[stack.len() - 2] == below
                    {
                        stack.pop();
                        next.holding = Some(block);
                        next.canonicalize();
                        return Ok(next);
                    }
                }
                Err(format!("cannot unstack {block} from {below}: {block} is not on {below}"))
            }
            [a, b, ..] if a == "put" && b == "down" => {
                let block = block_at(&words, 2)?;
                if words.len() != 3 {
                    return Err(format!("cannot parse command '{}'", original()));
                }
                if self.holding != Some(block) {
                    return Err(format!("cannot put down {block}: not holding it"));
                }
                let mut next = self.clone();
                next.holding = None;
                next.stacks.push(vec![block]);
                next.canonicalize();
                Ok(next)
            }
            [a, ..] if a == "stack" => {
                // stack X on Y
                let block = block_at(&words, 1)?;
                let target = block_at(&words, 3)?;
                if words.len() != 4 || words[2] != "on" {
                    return Err(format!("cannot parse command '{}'", original()));
                }
                if self.holding != Some(block) {
                    return Err(format!("cannot stack {block}: not holding it"));
                }
                let mut next = self.clone();
                for stack in &mut next.stacks {
                    if *stack.last().unwrap() == target {
                        stack.push(block);
                        next.holding = None;
                        next.canonicalize();
                        return Ok(next);
                    }
                }
                Err(format!("cannot stack {block} on {target}: {target} is not clear"))
            }
            _ => Err(format!("cannot parse command '{}'", original())),
        }
    }

    pub fn satisfies(&self, condition: &Condition) -> bool {
        match condition {
            Condition::OnTable(a) => self.stacks.iter().any(|s| s[0] == *a),
            Condition::On(a, b) => self
                .stacks
                .iter()
                .any(|s| s.windows(2).any(|w| w[1] == *a && w[0] == *b)),
        }
    }

    /// Full positional description: one condition per block, sorted.
    pub fn describe(&self) -> Vec<Condition> {
        let mut conditions = Vec::new();
        for stack in &self.stacks {
            conditions.push(Condition::OnTable(stack[0]));
            for pair in stack.windows(2) {
                conditions.push(Condition::On(pair[1], pair[0]));
            }
        }
        conditions.sort();
        conditions
    }
}

fn parse_block(text: &str) -> Result<char> {
    single_block(text)
        .ok_or_else(|| Error::Config(format!("'{text}' is not a block name (expected A-Z)")))
}

fn single_block(word: &str) -> Option<char> {
    let mut chars = word.chars();
    let c = chars.next()?.to_ascii_uppercase();
    if chars.next().is_none() && c.is_ascii_uppercase() {
        Some(c)
    } else {
        None
    }
}

/// Parse a semicolon-separated condition list: `A on B; C on table`.
pub fn parse_conditions(text: &str) -> Result<Vec<Condition>> {
    let mut conditions = Vec::new();
    for raw in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let words: Vec<String> = raw.split_whitespace().map(|w| w.to_lowercase()).collect();
        match words.as_slice() {
            [a, on, b] if on == "on" && b == "table" => {
                conditions.push(Condition::OnTable(parse_block(a)?));
            }
            [a, on, b] if on == "on" => {
                conditions.push(Condition::On(parse_block(a)?, parse_block(b)?));
            }
            _ => {
                return Err(Error::Config(format!(
                    "cannot parse goal condition '{raw}' (expected 'X on Y' or 'X on table')"
                )));
            }
        }
    }
    if conditions.is_empty() {
        return Err(Error::Config("goal has no conditions".to_string()));
    }
    Ok(conditions)
}

/// Compose the query text for an instance.
pub fn format_query(init: &Config, goal: &[Condition]) -> String {
    format!(
        "initial: {}\ngoal: {}",
        init.render(),
        goal.iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    )
}

/// Split a query into its initial configuration and goal conditions.
pub fn parse_query(query: &str) -> Result<(Config, Vec<Condition>)> {
    let mut init = None;
    let mut goal = None;
    for line in query.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("initial:") {
            init = Some(Config::parse(rest.trim())?);
        } else if let Some(rest) = line.strip_prefix("goal:") {
            goal = Some(parse_conditions(rest.trim())?);
        }
    }
    match (init, goal) {
        (Some(i), Some(g)) => Ok((i, g)),
        _ => Err(Error::Config(format!(
            "query must contain 'initial:' and 'goal:' lines, got: {query}"
        ))),
    }
}

fn goal_reached(config: &Config, goal: &[Condition]) -> bool {
    config.holding().is_none() && goal.iter().all(|c| config.satisfies(c))
}

/// Exhaustive breadth-first search from `start` to the goal. Returns the
/// shortest command sequence, or `None` if unreachable within `max_depth`.
pub fn solve(start: &Config, goal: &[Condition], max_depth: usize) -> Option<Vec<String>> {
    if goal_reached(start, goal) {
        return Some(Vec::new());
    }
    let mut queue = VecDeque::new();
    let mut parents: HashMap<Config, (Config, String)> = HashMap::new();
    let mut depths: HashMap<Config, usize> = HashMap::new();
    depths.insert(start.clone(), 0);
    queue.push_back(start.clone());
    while let Some(config) = queue.pop_front() {
        let depth = depths[&config];
        if depth >= max_depth {
            continue;
        }
        for command in config.legal_moves() {
            let next = config.apply(&command).expect("legal moves apply cleanly");
            if depths.contains_key(&next) {
                continue;
            }
            depths.insert(next.clone(), depth + 1);
            parents.insert(next.clone(), (config.clone(), command));
            if goal_reached(&next, goal) {
                let mut path = Vec::new();
                let mut cursor = next;
                while let Some((previous, cmd)) = parents.remove(&cursor) {
                    path.push(cmd);
                    cursor = previous;
                }
                path.reverse();
                return Some(path);
            }
            queue.push_back(next);
        }
    }
    None
}

/// Shortest solution length, or `None` if unreachable within `max_depth`.
pub fn distance(start: &Config, goal: &[Condition], max_depth: usize) -> Option<usize> {
    solve(start, goal, max_depth).map(|path| path.len())
}

/// Generate a random solvable instance: a random initial configuration of
/// `n_blocks` blocks and a fully specified goal whose shortest solution has
/// length within `min_distance..=max_distance`.
pub fn generate_instance<R: Rng>(
    rng: &mut R,
    n_blocks: usize,
    min_distance: usize,
    max_distance: usize,
) -> (Config, Vec<Condition>) {
    assert!((1..=26).contains(&n_blocks));
    assert!(min_distance >= 1 && min_distance <= max_distance);
    loop {
        // Random initial configuration: shuffle blocks, cut into stacks.
        let mut blocks: Vec<char> = (0..n_blocks).map(|i| (b'A' + i as u8) as char).collect();
        blocks.shuffle(rng);
        let mut stacks = Vec::new();
        let mut current = Vec::new();
        for block in blocks {
            current.push(block);
            if rng.gen_bool(0.5) {
                stacks.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            stacks.push(current);
        }
        let init = Config::new(stacks, None);

        // Enumerate all configurations within max_distance, keep those in
        // range that aren't holding anything, and pick one as the goal.
        let mut depths: HashMap<Config, usize> = HashMap::new();
        let mut queue = VecDeque::new();
        depths.insert(init.clone(), 0);
        queue.push_back(init.clone());
        let mut candidates = Vec::new();
        while let Some(config) = queue.pop_front() {
            let depth = depths[&config];
            if depth >= max_distance {
                continue;
            }
            for command in config.legal_moves() {
                let next = config.apply(&command).expect("legal moves apply cleanly");
                if depths.contains_key(&next) {
                    continue;
                }
                depths.insert(next.clone(), depth + 1);
                if next.holding().is_none() && depth + 1 >= min_distance {
                    candidates.push(next.clone());
                }
                queue.push_back(next);
            }
        }
        if candidates.is_empty() {
            continue;
        }
        let goal_config = candidates[rng.gen_range(0..candidates.len())].clone();
        let goal = goal_config.describe();
        // A fully-specified goal may be reachable by a shorter route than
        // the BFS depth that discovered it; re-check the true distance.
        match distance(&init, &goal, max_distance) {
            Some(d) if (min_distance..=max_distance).contains(&d) => return (init, goal),
            _ => continue,
        }
    }
}

/// The blocks-world environment.
#[derive(Debug, Default)]
pub struct BlocksWorldEnv;

impl BlocksWorldEnv {
    pub fn new() -> Self {
        BlocksWorldEnv
    }

    fn current_config(&self, state: &State) -> Result<Config> {
        Config::parse(state.current_env_render())
    }

    fn goal_of(&self, state: &State) -> Result<Vec<Condition>> {
        Ok(parse_query(state.query())?.1)
    }
}

impl Environment for BlocksWorldEnv {
    fn name(&self) -> &str {
        "blocksworld"
    }

    fn init_render(&self, query: &str) -> Result<String> {
        let (init, _goal) = parse_query(query)?;
        Ok(init.render())
    }

    fn action_space(&self, state: &State) -> ActionSpace {
        match self.current_config(state) {
            Ok(config) => ActionSpace::Enumerated(config.legal_moves()),
            Err(_) => ActionSpace::Enumerated(Vec::new()),
        }
    }

    fn apply(&self, state: &State, command: &str) -> std::result::Result<String, String> {
        let config = self
            .current_config(state)
            .map_err(|e| format!("unreadable state: {e}"))?;
        config.apply(command).map(|next| next.render())
    }

    fn is_goal(&self, state: &State) -> bool {
        match (self.current_config(state), self.goal_of(state)) {
            (Ok(config), Ok(goal)) => goal_reached(&config, &goal),
            _ => false,
        }
    }

    fn progress(&self, state: &State) -> f64 {
        match (self.current_config(state), self.goal_of(state)) {
            (Ok(config), Ok(goal)) => {
                let satisfied = goal.iter().filter(|c| config.satisfies(c)).count();
                satisfied as f64 / goal.len() as f64
            }
            _ => 0.0,
        }
    }
}

/// Model-free policy ranking legal moves by solver distance to the goal
/// after the move: helpful (`best_first`) or deliberately harmful.
/// `search_horizon` bounds the solver.
#[derive(Debug)]
pub struct OracleMovePolicy {
    best_first: bool,
    search_horizon: usize,
}

impl OracleMovePolicy {
    /// Ranks best moves first.
    pub fn solver(search_horizon: usize) -> Self {
        OracleMovePolicy {
            best_first: true,
            search_horizon,
        }
    }

    /// Ranks worst moves first (for controlled engine comparisons).
    pub fn adversary(search_horizon: usize) -> Self {
        OracleMovePolicy {
            best_first: false,
            search_horizon,
        }
    }
}

impl Policy for OracleMovePolicy {
    fn name(&self) -> &str {
        if self.best_first {
            "oracle_move_policy"
        } else {
            "adversarial_move_policy"
        }
    }

    fn propose(&self, state: &State, n: usize, _ctx: &CallContext<'_>) -> Result<Vec<Action>> {
        let config = Config::parse(state.current_env_render())?;
        let (_init, goal) = parse_query(state.query())?;
        let mut ranked: Vec<(usize, String)> = config
            .legal_moves()
            .into_iter()
            .map(|command| {
                let next = config.apply(&command).expect("legal moves apply cleanly");
                let d = distance(&next, &goal, self.search_horizon)
                    .unwrap_or(self.search_horizon + 1);
                (d, command)
            })
            .collect();
        ranked.sort_by(|a, b| {
            let ordering = a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1));
            if self.best_first {
                ordering
            } else {
                ordering.reverse()
            }
        });
        Ok(ranked
            .into_iter()
            .take(n)
            .map(|(_, command)| Action::env(command))
            .collect())
    }
}

/// Load the blocks-world dataset. The data file is a JSON array whose
/// entries are either full query strings or `{"init", "goal"}` objects;
/// without a file, ten seeded instances of 3 blocks are generated.
pub fn load(data_file: Option<&Path>) -> Result<Dataset> {
    let queries = match data_file {
        Some(path) => {
            let value = read_data_file(path)?;
            let entries = value.as_array().ok_or_else(|| {
                Error::Config(format!("{}: expected a JSON array", path.display()))
            })?;
            let mut queries = Vec::new();
            for (i, entry) in entries.iter().enumerate() {
                let query = match entry {
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Object(map) => {
                        let init = map.get("init").and_then(|v| v.as_str()).ok_or_else(|| {
                            Error::Config(format!(
                                "{} entry {i}: missing string field 'init'",
                                path.display()
                            ))
                        })?;
                        let goal = map.get("goal").and_then(|v| v.as_str()).ok_or_else(|| {
                            Error::Config(format!(
                                "{} entry {i}: missing string field 'goal'",
                                path.display()
                            ))
                        })?;
                        format!("initial: {init}\ngoal: {goal}")
                    }
                    _ => {
                        return Err(Error::Config(format!(
                            "{} entry {i}: expected a string or object",
                            path.display()
                        )));
                    }
                };
                // Fail fast on malformed instances.
                parse_query(&query)?;
                queries.push(QueryRecord::new(query));
            }
            queries
        }
        None => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
            (0..10)
                .map(|_| {
                    let (init, goal) = generate_instance(&mut rng, 3, 2, 4);
                    QueryRecord::new(format_query(&init, &goal))
                })
                .collect()
        }
    };
    Ok(Dataset {
        name: "blocksworld".to_string(),
        task_type: TaskType::EnvGrounded,
        queries,
        environment: Some(Arc::new(BlocksWorldEnv::new())),
        resources: None,
        checker: AnswerChecker::EnvGoal,
    })
}

/// Per-config distance cache for repeated oracle lookups in tests.
#[doc(hidden)]
#[derive(Debug, Default)]
pub struct DistanceCache {
    cache: BTreeMap<String, Option<usize>>,
}

#[doc(hidden)]
impl DistanceCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn distance(
        &mut self,
        config: &Config,
        goal: &[Condition],
        max_depth: usize,
    ) -> Option<usize> {
        let key = format!("{}::{:?}", config.render(), goal);
        *self
            .cache
            .entry(key)
            .or_insert_with(|| distance(config, goal, max_depth))
    }
}
