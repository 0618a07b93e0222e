//! Beam-pruned level-synchronous breadth-first search (tree-of-thoughts
//! style).
//!
//! Each level expands every non-terminal frontier node, then keeps the top
//! `beam_width` children by reward (ties to the lowest id) as the next
//! frontier. Terminal children compete for beam slots like any other child
//! but are never expanded. The search stops when the frontier is entirely
//! terminal, the level budget runs out, or a session stop condition fires.

use crate::error::Result;
use crate::structures::NodeId;

use super::{SearchEngine, SearchSession, ROOT};

#[derive(Debug, Clone, Copy, Default)]
pub struct BfsEngine;

impl BfsEngine {
    pub fn new() -> Self {
        BfsEngine
    }
}

impl SearchEngine for BfsEngine {
    fn name(&self) -> &str {
        "bfs"
    }

    fn search(&self, session: &mut SearchSession<'_, '_>) -> Result<()> {
        let mut frontier: Vec<NodeId> = vec![ROOT];
        // A level deepens the tree by one, so levels are bounded by depth as
        // well as by the iteration budget.
        let levels = session.config.n_iterations.min(session.config.max_depth);
        for level in 0..levels {
            if session.should_stop() {
                break;
            }
            let expandable: Vec<NodeId> = frontier
                .iter()
                .copied()
                .filter(|&id| !session.tree.node(id).is_terminal)
                .collect();
            if expandable.is_empty() {
                break;
            }
            let mut level_children: Vec<NodeId> = Vec::new();
            for node_id in expandable {
                level_children.extend(session.expand(node_id, level)?);
                // Mid-level stop keeps ensemble quotas exact; remaining
                // frontier nodes stay unexpanded.
                if session.should_stop() {
                    break;
                }
            }
            if level_children.is_empty() {
                break;
            }
            // Keep the best `beam_width` children: reward descending, ties
            // to the lowest id.
            level_children.sort_by(|&a, &b| {
                let ra = session.tree.node(a).reward;
                let rb = session.tree.node(b).reward;
                rb.partial_cmp(&ra)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            level_children.truncate(session.config.beam_width);
            frontier = level_children;
            session.complete_iteration(level)?;
        }
        Ok(())
    }
}
