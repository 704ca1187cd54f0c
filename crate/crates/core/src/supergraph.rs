//! Super-graph: per-function CFGs, call edges and inter-task edges.
//!
//! Every attached AST node except `Block` is a graph node. Control enters a
//! structured statement at the statement node itself: `If` and `While` are
//! their predicate, `Parallel` is the fork point that precedes the region's
//! entry barrier. A `Call` has no intraprocedural successor edge; its
//! return site is recorded separately and reached through the callee's
//! `Exit`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::ir::{Kind, Loc, NodeId, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Cfg,
    Call,
    InterTask,
}

/// A directed super-graph edge. Inter-task edges carry the shared locations
/// that may be communicated over them; other edges carry none.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    pub vars: Vec<Loc>,
}

impl Edge {
    pub fn new(src: NodeId, dst: NodeId, kind: EdgeKind) -> Edge {
        Edge {
            src,
            dst,
            kind,
            vars: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgeDelta {
    pub added: Vec<Edge>,
    pub removed: Vec<Edge>,
}

impl EdgeDelta {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }

    pub fn extend(&mut self, other: EdgeDelta) {
        self.added.extend(other.added);
        self.removed.extend(other.removed);
    }
}

fn diff(old: &BTreeSet<Edge>, new: &BTreeSet<Edge>) -> EdgeDelta {
    EdgeDelta {
        added: new.difference(old).cloned().collect(),
        removed: old.difference(new).cloned().collect(),
    }
}

#[derive(Clone, Debug, Default)]
struct FuncGraph {
    nodes: BTreeSet<NodeId>,
    edges: BTreeSet<Edge>,
    call_return: BTreeMap<NodeId, NodeId>,
}

#[derive(Clone, Debug, Default)]
pub struct Supergraph {
    funcs: BTreeMap<String, FuncGraph>,
    inter_task: BTreeSet<Edge>,
    succ: BTreeMap<NodeId, BTreeSet<Edge>>,
    pred: BTreeMap<NodeId, BTreeSet<Edge>>,
    call_return: BTreeMap<NodeId, NodeId>,
    return_of: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl Supergraph {
    /// Builds CFG and call edges for every function. No inter-task edges.
    pub fn build(prog: &Program) -> Supergraph {
        let mut g = Supergraph::default();
        for f in prog.functions().keys() {
            g.rebuild_function(prog, f);
        }
        g
    }

    /// Re-lowers one function and returns the change in its edges.
    pub fn rebuild_function(&mut self, prog: &Program, func: &str) -> EdgeDelta {
        let fresh = lower_function(prog, func);
        let old = self.funcs.remove(func).unwrap_or_default();
        let delta = diff(&old.edges, &fresh.edges);
        for e in &delta.removed {
            self.unindex(e);
        }
        for e in &delta.added {
            self.index(e);
        }
        for (c, r) in &old.call_return {
            self.call_return.remove(c);
            let set = self.return_of.get_mut(r).unwrap();
            set.remove(c);
            if set.is_empty() {
                self.return_of.remove(r);
            }
        }
        for (c, r) in &fresh.call_return {
            self.call_return.insert(*c, *r);
            self.return_of.entry(*r).or_default().insert(*c);
        }
        self.funcs.insert(func.to_string(), fresh);
        delta
    }

    /// Replaces the inter-task edge set and returns the difference.
    pub fn set_inter_task(&mut self, edges: BTreeSet<Edge>) -> EdgeDelta {
        debug_assert!(edges.iter().all(|e| e.kind == EdgeKind::InterTask));
        let delta = diff(&self.inter_task, &edges);
        for e in &delta.removed {
            self.unindex(e);
        }
        for e in &delta.added {
            self.index(e);
        }
        self.inter_task = edges;
        delta
    }

    fn index(&mut self, e: &Edge) {
        self.succ.entry(e.src).or_default().insert(e.clone());
        self.pred.entry(e.dst).or_default().insert(e.clone());
    }

    fn unindex(&mut self, e: &Edge) {
        for (map, key) in [(&mut self.succ, e.src), (&mut self.pred, e.dst)] {
            let gone = match map.get_mut(&key) {
                Some(set) => {
                    assert!(set.remove(e), "dangling edge {e:?}");
                    set.is_empty()
                }
                None => panic!("dangling edge {e:?}"),
            };
            if gone {
                map.remove(&key);
            }
        }
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.funcs.values().any(|f| f.nodes.contains(&n))
    }

    /// All graph nodes, ascending.
    pub fn nodes(&self) -> BTreeSet<NodeId> {
        self.funcs
            .values()
            .flat_map(|f| f.nodes.iter().copied())
            .collect()
    }

    pub fn function_nodes(&self, func: &str) -> Option<&BTreeSet<NodeId>> {
        self.funcs.get(func).map(|f| &f.nodes)
    }

    pub fn succ_edges(&self, n: NodeId) -> impl Iterator<Item = &Edge> {
        self.succ.get(&n).into_iter().flatten()
    }

    pub fn pred_edges(&self, n: NodeId) -> impl Iterator<Item = &Edge> {
        self.pred.get(&n).into_iter().flatten()
    }

    pub fn succs(&self, n: NodeId) -> BTreeSet<NodeId> {
        self.succ_edges(n).map(|e| e.dst).collect()
    }

    pub fn preds(&self, n: NodeId) -> BTreeSet<NodeId> {
        self.pred_edges(n).map(|e| e.src).collect()
    }

    /// Return site of a call node.
    pub fn call_return(&self, call: NodeId) -> Option<NodeId> {
        self.call_return.get(&call).copied()
    }

    /// Successors within the same function: CFG successors, or the return
    /// site for a call.
    pub fn local_succs(&self, n: NodeId) -> Vec<NodeId> {
        if let Some(r) = self.call_return(n) {
            return vec![r];
        }
        self.succ_edges(n)
            .filter(|e| e.kind == EdgeKind::Cfg)
            .map(|e| e.dst)
            .collect()
    }

    /// Predecessors within the same function; inverse of [`Supergraph::local_succs`].
    pub fn local_preds(&self, n: NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self
            .pred_edges(n)
            .filter(|e| e.kind == EdgeKind::Cfg)
            .map(|e| e.src)
            .collect();
        out.extend(self.return_of.get(&n).into_iter().flatten().copied());
        out.sort();
        out.dedup();
        out
    }

    pub fn inter_task(&self) -> &BTreeSet<Edge> {
        &self.inter_task
    }

    pub fn edges(&self) -> BTreeSet<Edge> {
        self.funcs
            .values()
            .flat_map(|f| f.edges.iter().cloned())
            .chain(self.inter_task.iter().cloned())
            .collect()
    }

    pub fn to_dot(&self, prog: &Program) -> String {
        let mut out = String::from("digraph supergraph {\n");
        for n in self.nodes() {
            let _ = writeln!(out, "  {n} [label=\"{n} {:?}\"];", prog.kind(n).tag());
        }
        for e in self.edges() {
            let attr = match e.kind {
                EdgeKind::Cfg => "color=black".to_string(),
                EdgeKind::Call => "color=blue".to_string(),
                EdgeKind::InterTask => {
                    let vars: Vec<String> = e.vars.iter().map(|l| prog.loc_name(*l)).collect();
                    format!("style=dashed, label=\"{}\"", vars.join(","))
                }
            };
            let _ = writeln!(out, "  {} -> {} [{attr}];", e.src, e.dst);
        }
        out.push_str("}\n");
        out
    }
}

struct Lowering<'a> {
    prog: &'a Program,
    exit: NodeId,
    g: FuncGraph,
}

impl Lowering<'_> {
    fn edge(&mut self, src: NodeId, dst: NodeId, kind: EdgeKind) {
        self.g.edges.insert(Edge::new(src, dst, kind));
    }

    /// Emits edges for `n` flowing into `next`; returns the node control enters first.
    fn lower(&mut self, n: NodeId, next: NodeId) -> NodeId {
        let prog = self.prog;
        match prog.kind(n) {
            Kind::Block { stmts } => {
                return stmts.iter().rev().fold(next, |cur, s| self.lower(*s, cur));
            }
            Kind::Decl { .. } | Kind::Assign { .. } | Kind::Barrier | Kind::Flush => {
                self.edge(n, next, EdgeKind::Cfg)
            }
            Kind::Return => self.edge(n, self.exit, EdgeKind::Cfg),
            Kind::Call { callee } => {
                let entry = prog.function_entry(callee).expect("unresolved callee");
                let exit = prog.function_exit(callee).expect("unresolved callee");
                self.edge(n, entry, EdgeKind::Call);
                self.edge(exit, next, EdgeKind::Call);
                self.g.call_return.insert(n, next);
            }
            Kind::If { then_b, else_b, .. } => {
                let t = self.lower(*then_b, next);
                let e = match else_b {
                    Some(e) => self.lower(*e, next),
                    None => next,
                };
                self.edge(n, t, EdgeKind::Cfg);
                self.edge(n, e, EdgeKind::Cfg);
            }
            Kind::While { body, .. } => {
                let first = self.lower(*body, n);
                self.edge(n, first, EdgeKind::Cfg);
                self.edge(n, next, EdgeKind::Cfg);
            }
            Kind::Parallel { entry, body, exit } => {
                self.g.nodes.insert(*entry);
                self.g.nodes.insert(*exit);
                self.edge(*exit, next, EdgeKind::Cfg);
                let first = self.lower(*body, *exit);
                self.edge(*entry, first, EdgeKind::Cfg);
                self.edge(n, *entry, EdgeKind::Cfg);
            }
            Kind::Entry { .. } | Kind::Exit => unreachable!("function boundary inside a body"),
        }
        self.g.nodes.insert(n);
        n
    }
}

fn lower_function(prog: &Program, func: &str) -> FuncGraph {
    let entry = prog.function_entry(func).expect("unknown function");
    let body = prog.function_body(func).unwrap();
    let exit = prog.function_exit(func).unwrap();
    let mut l = Lowering {
        prog,
        exit,
        g: FuncGraph::default(),
    };
    let first = l.lower(body, exit);
    l.edge(entry, first, EdgeKind::Cfg);
    l.g.nodes.insert(entry);
    l.g.nodes.insert(exit);
    l.g
}
