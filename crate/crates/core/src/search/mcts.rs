//! Monte-Carlo tree search with tree-grown playouts.
//!
//! Each iteration selects a frontier node by UCT, expands it through the
//! branching gate, plays out from the best new child (gated-width
//! expansions, descending by reward), and backs the terminus reward up to
//! the root. Playout nodes are ordinary tree nodes, so one tree carries the
//! entire search history, later iterations can branch inside old playouts,
//! and `root.visits` equals the number of completed iterations.

use crate::error::Result;
use crate::structures::NodeId;

use super::{best_by_reward, uct_select, SearchEngine, SearchSession, ROOT};

#[derive(Debug, Clone, Copy, Default)]
pub struct MctsEngine;

impl MctsEngine {
    pub fn new() -> Self {
        MctsEngine
    }

    /// Descend by UCT until a leaf (childless node) or a terminal node.
    fn select(&self, session: &SearchSession<'_, '_>) -> NodeId {
        let mut cursor = ROOT;
        loop {
            let node = session.tree.node(cursor);
            if node.is_terminal || node.child_ids.is_empty() {
                return cursor;
            }
            match uct_select(&session.tree, cursor, session.config.uct_c) {
                Some(child) => cursor = child,
                None => return cursor,
            }
        }
    }
}

impl SearchEngine for MctsEngine {
    fn name(&self) -> &str {
        "mcts"
    }

    fn search(&self, session: &mut SearchSession<'_, '_>) -> Result<()> {
        for iteration in 0..session.config.n_iterations {
            if session.should_stop() {
                break;
            }
            let selected = self.select(session);
            let (is_terminal, depth) = {
                let node = session.tree.node(selected);
                (node.is_terminal, node.depth)
            };
            let terminus = if is_terminal || depth >= session.config.max_depth {
                // Nothing to grow here; re-credit the node's own reward.
                selected
            } else {
                let children = session.expand(selected, iteration)?;
                match best_by_reward(&session.tree, &children) {
                    // Play out from the highest-reward new child.
                    Some(start) => session.simulate(start, iteration)?,
                    // Dead end discovered during expansion.
                    None => selected,
                }
            };
            let value = session.tree.node(terminus).reward;
            session.backprop(terminus, value);
            session.complete_iteration(iteration)?;
        }
        Ok(())
    }
}
