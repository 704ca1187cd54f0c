//! Strongly connected components with a topological numbering.

use std::collections::{BTreeSet, HashMap};

use crate::ir::NodeId;

/// SCC condensation of a directed graph.
///
/// SCC ids follow a topological order of the condensation, so every edge
/// between two SCCs goes from a lower id to a higher one. Inside an SCC,
/// nodes are ranked by a reverse-postorder DFS that starts from members with
/// predecessors outside the SCC.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SccIndex {
    scc_of: HashMap<NodeId, u32>,
    rank: HashMap<NodeId, u32>,
    members: Vec<Vec<NodeId>>,
}

impl SccIndex {
    /// `succs` must only return nodes contained in `nodes`.
    pub fn build(nodes: &BTreeSet<NodeId>, succs: impl Fn(NodeId) -> Vec<NodeId>) -> SccIndex {
        let adj: HashMap<NodeId, Vec<NodeId>> = nodes
            .iter()
            .map(|n| {
                let mut s = succs(*n);
                s.sort();
                s.dedup();
                (*n, s)
            })
            .collect();
        let comps = tarjan(nodes, &adj);

        let mut idx = SccIndex::default();
        for (i, comp) in comps.iter().rev().enumerate() {
            for n in comp {
                idx.scc_of.insert(*n, i as u32);
            }
        }
        let mut has_outside_pred: BTreeSet<NodeId> = BTreeSet::new();
        for (u, vs) in &adj {
            for v in vs {
                if idx.scc_of[u] != idx.scc_of[v] {
                    has_outside_pred.insert(*v);
                }
            }
        }
        for (i, comp) in comps.iter().rev().enumerate() {
            let order = within_order(i as u32, comp, &adj, &idx.scc_of, &has_outside_pred);
            for (r, n) in order.iter().enumerate() {
                idx.rank.insert(*n, r as u32);
            }
            idx.members.push(order);
        }
        idx
    }

    pub fn scc_of(&self, n: NodeId) -> Option<u32> {
        self.scc_of.get(&n).copied()
    }

    /// Position of `n` inside its SCC.
    pub fn rank(&self, n: NodeId) -> Option<u32> {
        self.rank.get(&n).copied()
    }

    /// Sort key used by worklists.
    pub fn key(&self, n: NodeId) -> Option<(u32, u32)> {
        Some((self.scc_of(n)?, self.rank(n)?))
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members of one SCC in within-SCC order.
    pub fn members(&self, scc: u32) -> &[NodeId] {
        &self.members[scc as usize]
    }
}

/// Iterative Tarjan. Components come out in reverse topological order.
fn tarjan(nodes: &BTreeSet<NodeId>, adj: &HashMap<NodeId, Vec<NodeId>>) -> Vec<Vec<NodeId>> {
    let mut index: HashMap<NodeId, u32> = HashMap::new();
    let mut low: HashMap<NodeId, u32> = HashMap::new();
    let mut on_stack: BTreeSet<NodeId> = BTreeSet::new();
    let mut stack: Vec<NodeId> = Vec::new();
    let mut comps = Vec::new();
    let mut counter = 0u32;

    for &root in nodes {
        if index.contains_key(&root) {
            continue;
        }
        let mut call: Vec<(NodeId, usize)> = vec![(root, 0)];
        index.insert(root, counter);
        low.insert(root, counter);
        counter += 1;
        stack.push(root);
        on_stack.insert(root);

        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            let succ = &adj[&v];
            if *i < succ.len() {
                let w = succ[*i];
                *i += 1;
                if let std::collections::hash_map::Entry::Vacant(e) = index.entry(w) {
                    e.insert(counter);
                    low.insert(w, counter);
                    counter += 1;
                    stack.push(w);
                    on_stack.insert(w);
                    call.push((w, 0));
                } else if on_stack.contains(&w) {
                    let lw = index[&w].min(low[&v]);
                    low.insert(v, lw);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                let lp = low[&parent].min(low[&v]);
                low.insert(parent, lp);
            }
            if low[&v] == index[&v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().unwrap();
                    on_stack.remove(&w);
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort();
                comps.push(comp);
            }
        }
    }
    comps
}

fn within_order(
    scc: u32,
    comp: &[NodeId],
    adj: &HashMap<NodeId, Vec<NodeId>>,
    scc_of: &HashMap<NodeId, u32>,
    has_outside_pred: &BTreeSet<NodeId>,
) -> Vec<NodeId> {
    if comp.len() == 1 {
        return comp.to_vec();
    }
    let starts = comp
        .iter()
        .filter(|n| has_outside_pred.contains(n))
        .chain(comp.iter());
    let mut seen: BTreeSet<NodeId> = BTreeSet::new();
    let mut post = Vec::with_capacity(comp.len());
    for &s in starts {
        if !seen.insert(s) {
            continue;
        }
        let mut call: Vec<(NodeId, usize)> = vec![(s, 0)];
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            let succ = &adj[&v];
            if *i < succ.len() {
                let w = succ[*i];
                *i += 1;
                if scc_of[&w] == scc && seen.insert(w) {
                    call.push((w, 0));
                }
                continue;
            }
            post.push(v);
            call.pop();
        }
    }
    post.reverse();
    post
}
