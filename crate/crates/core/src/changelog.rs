//! Append-only log of elementary changes with per-reader cursors.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::ir::NodeId;
use crate::supergraph::Edge;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ChangeAction {
    AddNode,
    RemoveNode,
    ReplaceNode,
}

/// Exact node and edge delta of one elementary transformation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ElemChange {
    pub action: ChangeAction,
    /// Function whose body was edited.
    pub func: String,
    pub added_nodes: Vec<NodeId>,
    pub removed_nodes: Vec<NodeId>,
    pub added_edges: Vec<Edge>,
    pub removed_edges: Vec<Edge>,
}

/// Merged delta over a window of the log. Each element appears in at most
/// one of the four sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NetChange {
    pub added_nodes: BTreeSet<NodeId>,
    pub removed_nodes: BTreeSet<NodeId>,
    pub added_edges: BTreeSet<Edge>,
    pub removed_edges: BTreeSet<Edge>,
    /// Functions edited anywhere in the window, even if the edits cancel.
    pub funcs: BTreeSet<String>,
}

impl NetChange {
    pub fn is_empty(&self) -> bool {
        self.added_nodes.is_empty()
            && self.removed_nodes.is_empty()
            && self.added_edges.is_empty()
            && self.removed_edges.is_empty()
    }
}

/// Tracks first and last event per element; an element whose presence at
/// the end of the window equals its presence at the start cancels out.
struct Replay<T> {
    events: BTreeMap<T, (bool, bool)>,
}

impl<T: Ord + Clone> Replay<T> {
    fn new() -> Self {
        Replay {
            events: BTreeMap::new(),
        }
    }

    fn event(&mut self, x: &T, added: bool) {
        self.events
            .entry(x.clone())
            .and_modify(|e| e.1 = added)
            .or_insert((added, added));
    }

    fn split(self) -> (BTreeSet<T>, BTreeSet<T>) {
        let mut add = BTreeSet::new();
        let mut rem = BTreeSet::new();
        for (x, (first, last)) in self.events {
            match (first, last) {
                (true, true) => {
                    add.insert(x);
                }
                (false, false) => {
                    rem.insert(x);
                }
                _ => {}
            }
        }
        (add, rem)
    }
}

/// Log entries live at absolute positions `base..head`. Entries before the
/// smallest live cursor are dropped by [`ChangeLog::compact`].
#[derive(Clone, Debug, Default)]
pub struct ChangeLog {
    base: usize,
    entries: VecDeque<ElemChange>,
}

impl ChangeLog {
    pub fn head(&self) -> usize {
        self.base + self.entries.len()
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn push(&mut self, c: ElemChange) {
        self.entries.push_back(c);
    }

    pub fn window(&self, cursor: usize) -> impl Iterator<Item = &ElemChange> {
        assert!(
            cursor >= self.base && cursor <= self.head(),
            "cursor {cursor} outside log [{}, {}]",
            self.base,
            self.head()
        );
        self.entries.range(cursor - self.base..)
    }

    pub fn net_changes(&self, cursor: usize) -> NetChange {
        merge(self.window(cursor))
    }

    pub fn compact(&mut self, min_cursor: usize) {
        while self.base < min_cursor && !self.entries.is_empty() {
            self.entries.pop_front();
            self.base += 1;
        }
    }
}

/// Merges a sequence of changes, cancelling elements whose presence is the
/// same before and after the sequence.
pub fn merge<'a>(changes: impl IntoIterator<Item = &'a ElemChange>) -> NetChange {
    let mut nodes = Replay::new();
    let mut edges = Replay::new();
    let mut funcs = BTreeSet::new();
    for c in changes {
        funcs.insert(c.func.clone());
        replay(&mut nodes, &c.removed_nodes, false);
        replay(&mut nodes, &c.added_nodes, true);
        replay(&mut edges, &c.removed_edges, false);
        replay(&mut edges, &c.added_edges, true);
    }
    let (added_nodes, removed_nodes) = nodes.split();
    let (added_edges, removed_edges) = edges.split();
    NetChange {
        added_nodes,
        removed_nodes,
        added_edges,
        removed_edges,
        funcs,
    }
}

fn replay<T: Ord + Clone>(r: &mut Replay<T>, xs: &[T], added: bool) {
    for x in xs {
        r.event(x, added);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::supergraph::EdgeKind;
    use proptest::prelude::*;

    fn change(an: &[u32], rn: &[u32], ae: &[(u32, u32)], re: &[(u32, u32)]) -> ElemChange {
        let e = |v: &[(u32, u32)]| {
            v.iter()
                .map(|(a, b)| Edge::new(NodeId(*a), NodeId(*b), EdgeKind::Cfg))
                .collect()
        };
        ElemChange {
            action: ChangeAction::ReplaceNode,
            func: "main".into(),
            added_nodes: an.iter().map(|n| NodeId(*n)).collect(),
            removed_nodes: rn.iter().map(|n| NodeId(*n)).collect(),
            added_edges: e(ae),
            removed_edges: e(re),
        }
    }

    #[test]
    fn add_then_remove_cancels() {
        let net = merge(&[change(&[1], &[], &[], &[]), change(&[], &[1], &[], &[])]);
        assert!(net.is_empty());
    }

    #[test]
    fn remove_then_add_edge_cancels() {
        let net = merge(&[change(&[], &[], &[], &[(1, 2)]), change(&[], &[], &[(1, 2)], &[])]);
        assert!(net.is_empty());
    }

    #[test]
    fn mixed_window() {
        let net = merge(&[
            change(&[1], &[], &[], &[]),
            change(&[], &[], &[(1, 2)], &[]),
            change(&[], &[3], &[], &[]),
        ]);
        assert_eq!(net.added_nodes, [NodeId(1)].into());
        assert_eq!(net.removed_nodes, [NodeId(3)].into());
        assert_eq!(net.added_edges.len(), 1);
        assert!(net.removed_edges.is_empty());
    }

    #[test]
    fn compaction_keeps_live_window() {
        let mut log = ChangeLog::default();
        for i in 0..5 {
            log.push(change(&[i], &[], &[], &[]));
        }
        log.compact(3);
        assert_eq!(log.base(), 3);
        assert_eq!(log.head(), 5);
        assert_eq!(log.net_changes(3).added_nodes, [NodeId(3), NodeId(4)].into());
    }

    proptest! {
        /// Replays toggles on a set and compares with the initial/final diff.
        #[test]
        fn merge_matches_snapshot_diff(
            initial in proptest::collection::btree_set(0u32..8, 0..8),
            ops in proptest::collection::vec(0u32..8, 0..40),
        ) {
            let mut present = initial.clone();
            let mut log = Vec::new();
            for n in ops {
                if present.remove(&n) {
                    log.push(change(&[], &[n], &[], &[]));
                } else {
                    present.insert(n);
                    log.push(change(&[n], &[], &[], &[]));
                }
            }
            let net = merge(&log);
            let added: BTreeSet<NodeId> = present.difference(&initial).map(|n| NodeId(*n)).collect();
            let removed: BTreeSet<NodeId> = initial.difference(&present).map(|n| NodeId(*n)).collect();
            prop_assert_eq!(net.added_nodes, added);
            prop_assert_eq!(net.removed_nodes, removed);
        }
    }
}
