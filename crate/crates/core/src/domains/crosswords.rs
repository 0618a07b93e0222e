//! Mini crosswords: fill a 5x5 grid one word at a time.
//!
//! A query lists ten clues (`h1.`-`h5.` across, `v1.`-`v5.` down); the
//! environment holds the answer key. Commands name a slot and a word:
//!
//! ```text
//! h1. roast
//! v3. atone
//! ```
//!
//! Words must be exactly five letters; anything else fails validation.
//! Overwriting previously placed letters is allowed — a down word may
//! clobber letters of an across word. The goal is reached when the whole
//! board matches the answer key, and progress counts matching cells.
//!
//! Unlike block stacking, the command vocabulary is open (any five-letter
//! word), so the action space is [`ActionSpace::Open`] and proposals are
//! taken from the model verbatim.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use super::{read_data_file, AnswerChecker, Dataset, QueryRecord, TaskType};
use crate::components::{ActionSpace, Environment};
use crate::error::{Error, Result};
use crate::structures::State;

pub const SIZE: usize = 5;

/// A filled-or-blank board. `None` cells render as `_`.
pub type Board = [[Option<char>; SIZE]; SIZE];

/// A fully specified answer key.
pub type Solution = [[char; SIZE]; SIZE];

/// One puzzle: the clue text shown to the model and the hidden answer key.
#[derive(Debug, Clone)]
pub struct Puzzle {
    pub query: String,
    pub solution: Solution,
}

impl Puzzle {
    /// Build a puzzle from five row words plus clues for the ten slots,
    /// in order `h1..h5, v1..v5`. Missing clues get a placeholder.
    pub fn new(rows: [&str; SIZE], clues: &[&str]) -> Result<Puzzle> {
        let mut solution = [[' '; SIZE]; SIZE];
        for (r, word) in rows.iter().enumerate() {
            let letters = word_letters(word)
                .map_err(|e| Error::Config(format!("solution row {}: {e}", r + 1)))?;
            solution[r] = letters;
        }
        let mut lines = Vec::new();
        for i in 0..SIZE * 2 {
            let slot = if i < SIZE {
                format!("h{}", i + 1)
            } else {
                format!("v{}", i - SIZE + 1)
            };
            let clue = clues.get(i).copied().unwrap_or("(no clue)");
            lines.push(format!("{slot}. {clue}"));
        }
        Ok(Puzzle {
            query: lines.join("\n"),
            solution,
        })
    }
}

fn word_letters(word: &str) -> std::result::Result<[char; SIZE], String> {
    let letters: Vec<char> = word.trim().chars().map(|c| c.to_ascii_uppercase()).collect();
    if letters.len() != SIZE {
        return Err(format!(
            "word '{}' has {} letters; every entry must be exactly {SIZE} letters",
            word.trim(),
            letters.len()
        ));
    }
    if let Some(bad) = letters.iter().find(|c| !c.is_ascii_uppercase()) {
        return Err(format!("'{bad}' is not a letter"));
    }
    Ok([letters[0], letters[1], letters[2], letters[3], letters[4]])
}

/// Render a board as shown to the model.
pub fn render_board(board: &Board) -> String {
    let mut out = String::from("Current Board:");
    for row in board {
        out.push('\n');
        let cells: Vec<String> = row
            .iter()
            .map(|c| c.map(|c| c.to_string()).unwrap_or_else(|| "_".to_string()))
            .collect();
        out.push_str(&cells.join(" "));
    }
    out
}

/// Parse a render produced by [`render_board`].
pub fn parse_board(render: &str) -> Result<Board> {
    let mut rows = Vec::new();
    for line in render.lines().map(str::trim) {
        if line.is_empty() || line.eq_ignore_ascii_case("current board:") {
            continue;
        }
        let cells: Vec<Option<char>> = line
            .split_whitespace()
            .map(|tok| {
                let mut chars = tok.chars();
                let c = chars.next()?;
                if chars.next().is_some() {
                    return None;
                }
                if c == '_' {
                    Some(None)
                } else if c.is_ascii_alphabetic() {
                    Some(Some(c.to_ascii_uppercase()))
                } else {
                    None
                }
            })
            .collect::<Option<Vec<Option<char>>>>()
            .ok_or_else(|| Error::Config(format!("cannot parse board line '{line}'")))?;
        if cells.len() != SIZE {
            return Err(Error::Config(format!(
                "board line '{line}' has {} cells, expected {SIZE}",
                cells.len()
            )));
        }
        rows.push(cells);
    }
    if rows.len() != SIZE {
        return Err(Error::Config(format!(
            "board has {} rows, expected {SIZE}",
            rows.len()
        )));
    }
    let mut board: Board = Default::default();
    for (r, row) in rows.into_iter().enumerate() {
        for (c, cell) in row.into_iter().enumerate() {
            board[r][c] = cell;
        }
    }
    Ok(board)
}

/// A slot reference: across row or down column, 0-based index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Across(usize),
    Down(usize),
}

/// Parse `h3. crane` into a slot and its letters.
fn parse_command(command: &str) -> std::result::Result<(Slot, [char; SIZE]), String> {
    let text = command.trim();
    let bad = || {
        format!(
            "cannot parse command '{text}'; expected 'h<1-{SIZE}>. word' or 'v<1-{SIZE}>. word'"
        )
    };
    let rest = text.strip_prefix(['h', 'H', 'v', 'V']).ok_or_else(bad)?;
    let is_across = text.starts_with(['h', 'H']);
    let (digits, remainder) = rest.split_at(rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len()));
    let index: usize = digits.parse().map_err(|_| bad())?;
    if !(1..=SIZE).contains(&index) {
        return Err(bad());
    }
    let word = remainder
        .trim_start()
        .strip_prefix('.')
        .unwrap_or(remainder)
        .trim();
    if word.is_empty() || word.contains(char::is_whitespace) {
        return Err(bad());
    }
    let letters = word_letters(word)?;
    let slot = if is_across {
        Slot::Across(index - 1)
    } else {
        Slot::Down(index - 1)
    };
    Ok((slot, letters))
}

/// The crosswords environment. Holds the answer key for every query it
/// serves; queries it has never seen are rejected at initialization.
#[derive(Debug)]
pub struct CrosswordsEnv {
    solutions: BTreeMap<String, Solution>,
}

impl CrosswordsEnv {
    pub fn new(puzzles: Vec<Puzzle>) -> Self {
        CrosswordsEnv {
            solutions: puzzles
                .into_iter()
                .map(|p| (p.query, p.solution))
                .collect(),
        }
    }

    fn solution_of(&self, state: &State) -> Option<&Solution> {
        self.solutions.get(state.query())
    }
}

impl Environment for CrosswordsEnv {
    fn name(&self) -> &str {
        "crosswords"
    }

    fn init_render(&self, query: &str) -> Result<String> {
        if !self.solutions.contains_key(query) {
            return Err(Error::Config(
                "unknown crossword puzzle (query does not match any loaded puzzle)".to_string(),
            ));
        }
        Ok(render_board(&Default::default()))
    }

    fn action_space(&self, _state: &State) -> ActionSpace {
        ActionSpace::Open
    }

    fn apply(&self, state: &State, command: &str) -> std::result::Result<String, String> {
        let (slot, letters) = parse_command(command)?;
        let mut board =
            parse_board(state.current_env_render()).map_err(|e| format!("unreadable state: {e}"))?;
        match slot {
            Slot::Across(r) => {
                for (c, letter) in letters.iter().enumerate() {
                    board[r][c] = Some(*letter);
                }
            }
            Slot::Down(c) => {
                for (r, letter) in letters.iter().enumerate() {
                    board[r][c] = Some(*letter);
                }
            }
        }
        Ok(render_board(&board))
    }

    fn is_goal(&self, state: &State) -> bool {
        let Some(solution) = self.solution_of(state) else {
            return false;
        };
        let Ok(board) = parse_board(state.current_env_render()) else {
            return false;
        };
        (0..SIZE).all(|r| (0..SIZE).all(|c| board[r][c] == Some(solution[r][c])))
    }

    fn progress(&self, state: &State) -> f64 {
        let Some(solution) = self.solution_of(state) else {
            return 0.0;
        };
        let Ok(board) = parse_board(state.current_env_render()) else {
            return 0.0;
        };
        let matching = (0..SIZE)
            .flat_map(|r| (0..SIZE).map(move |c| (r, c)))
            .filter(|&(r, c)| board[r][c] == Some(solution[r][c]))
            .count();
        matching as f64 / (SIZE * SIZE) as f64
    }

    fn answer(&self, state: &State) -> Option<String> {
        let board = parse_board(state.current_env_render()).ok()?;
        let rows: Vec<String> = board
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| c.unwrap_or('_'))
                    .collect::<String>()
            })
            .collect();
        Some(rows.join("\n"))
    }
}

/// The three built-in puzzles: symmetric word squares, so each across word
/// doubles as the matching down word.
pub fn builtin_puzzles() -> Vec<Puzzle> {
    vec![
        Puzzle::new(
            ["ROAST", "OTTER", "ATONE", "SENSE", "TREES"],
            &[
                "cook slowly in an oven",
                "playful river mammal",
                "make amends",
                "sight or smell, for one",
                "forest units",
                "cook slowly in an oven (down)",
                "playful river mammal (down)",
                "make amends (down)",
                "sight or smell, for one (down)",
                "forest units (down)",
            ],
        )
        .expect("builtin puzzle is well-formed"),
        Puzzle::new(
            ["HEART", "EMBER", "ABUSE", "RESIN", "TREND"],
            &[
                "organ that pumps blood",
                "glowing coal",
                "mistreatment",
                "sticky tree secretion",
                "general direction of change",
                "organ that pumps blood (down)",
                "glowing coal (down)",
                "mistreatment (down)",
                "sticky tree secretion (down)",
                "general direction of change (down)",
            ],
        )
        .expect("builtin puzzle is well-formed"),
        Puzzle::new(
            ["SATOR", "AREPO", "TENET", "OPERA", "ROTAS"],
            &[
                "sower (Latin)",
                "proper name in a famous Latin square",
                "principle held as true",
                "staged works (Latin plural)",
                "wheels (Latin)",
                "sower (Latin, down)",
                "proper name in a famous Latin square (down)",
                "principle held as true (down)",
                "staged works (Latin plural, down)",
                "wheels (Latin, down)",
            ],
        )
        .expect("builtin puzzle is well-formed"),
    ]
}

/// Load the crosswords dataset. The data file is a JSON array of
/// `{"solution": [five words], "clues": [up to ten strings]}` objects;
/// without a file, the three built-in word squares are used.
pub fn load(data_file: Option<&Path>) -> Result<Dataset> {
    let puzzles = match data_file {
        Some(path) => {
            let value = read_data_file(path)?;
            let entries = value.as_array().ok_or_else(|| {
                Error::Config(format!("{}: expected a JSON array", path.display()))
            })?;
            let mut puzzles = Vec::new();
            for (i, entry) in entries.iter().enumerate() {
                let map = entry.as_object().ok_or_else(|| {
                    Error::Config(format!("{} entry {i}: expected an object", path.display()))
                })?;
                let rows_value = map.get("solution").and_then(|v| v.as_array()).ok_or_else(|| {
                    Error::Config(format!(
                        "{} entry {i}: missing array field 'solution'",
                        path.display()
                    ))
                })?;
                let rows: Vec<&str> = rows_value
                    .iter()
                    .map(|v| v.as_str())
                    .collect::<Option<Vec<&str>>>()
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "{} entry {i}: 'solution' must contain strings",
                            path.display()
                        ))
                    })?;
                if rows.len() != SIZE {
                    return Err(Error::Config(format!(
                        "{} entry {i}: 'solution' must have {SIZE} words",
                        path.display()
                    )));
                }
                let clues: Vec<&str> = map
                    .get("clues")
                    .and_then(|v| v.as_array())
                    .map(|list| list.iter().filter_map(|v| v.as_str()).collect())
                    .unwrap_or_default();
                puzzles.push(
                    Puzzle::new([rows[0], rows[1], rows[2], rows[3], rows[4]], &clues)
                        .map_err(|e| Error::Config(format!("{} entry {i}: {e}", path.display())))?,
                );
            }
            puzzles
        }
        None => builtin_puzzles(),
    };
    let queries = puzzles
        .iter()
        .map(|p| QueryRecord::new(p.query.clone()))
        .collect();
    Ok(Dataset {
        name: "crosswords".to_string(),
        task_type: TaskType::EnvGrounded,
        queries,
        environment: Some(Arc::new(CrosswordsEnv::new(puzzles))),
        resources: None,
        checker: AnswerChecker::EnvGoal,
    })
}
