//! Answer aggregation across multiple terminals (ensemble mode).

use std::collections::BTreeMap;

use crate::components::Transition;
use crate::error::{Error, Result};

use super::Tree;

/// Most frequent answer after trimming surrounding whitespace; frequency
/// ties resolve to the lexicographically smallest answer. Answers that trim
/// to nothing are ignored; no votes at all is [`Error::NoAnswer`].
pub fn majority_vote<I>(answers: I) -> Result<String>
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for answer in answers {
        let trimmed = answer.as_ref().trim();
        if trimmed.is_empty() {
            continue;
        }
        *counts.entry(trimmed.to_string()).or_insert(0) += 1;
    }
    // Ascending key order + strictly-greater comparison keeps the
    // lexicographically smallest answer on count ties.
    let mut best: Option<(&str, usize)> = None;
    for (answer, &count) in &counts {
        if best.map(|(_, c)| count > c).unwrap_or(true) {
            best = Some((answer, count));
        }
    }
    best.map(|(answer, _)| answer.to_string())
        .ok_or(Error::NoAnswer)
}

/// Majority vote over the answers of every terminal node in `tree`.
/// Terminals without an extractable answer contribute nothing.
pub fn to_ensemble(tree: &Tree, transition: &dyn Transition) -> Result<String> {
    let answers = tree
        .nodes()
        .iter()
        .filter(|node| node.is_terminal)
        .filter_map(|node| transition.extract_answer(&node.state));
    majority_vote(answers)
}
