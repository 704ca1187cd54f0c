//! Static phases, synchronization sets and inter-task edges.
//!
//! Phases are built per parallel region by a frontier walk. The first phase
//! starts at the region's entry barrier. A phase collects every node reachable
//! from its start barriers without crossing another barrier; the barriers
//! where the walk stops form one synchronization set, which both ends the
//! phase and starts the next. A start set consisting only of the region's
//! exit barrier opens no phase.
//!
//! The walk follows intraprocedural edges, so a call is stepped over. Every
//! node of a function called from inside a region inherits the phases of its
//! call sites, and barriers in such functions neither split phases nor join
//! synchronization sets with other barriers.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write;

use serde::Serialize;

use crate::access::{function_summaries, node_access, Access};
use crate::ir::{Kind, KindTag, Loc, NodeId, Program};
use crate::supergraph::{Edge, EdgeKind, Supergraph};

pub type PhaseId = u32;
pub type SyncId = u32;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PhaseInfo {
    phases_of: BTreeMap<NodeId, BTreeSet<PhaseId>>,
    phase_nodes: BTreeMap<PhaseId, BTreeSet<NodeId>>,
    phase_start: BTreeMap<PhaseId, SyncId>,
    phase_end: BTreeMap<PhaseId, SyncId>,
    sync_sets_of: BTreeMap<NodeId, BTreeSet<SyncId>>,
    members: BTreeMap<SyncId, BTreeSet<NodeId>>,
    /// Phases each barrier starts.
    starts: BTreeMap<NodeId, BTreeSet<PhaseId>>,
    inter_task: BTreeSet<Edge>,
}

static EMPTY_PHASES: BTreeSet<PhaseId> = BTreeSet::new();
static EMPTY_NODES: BTreeSet<NodeId> = BTreeSet::new();

impl PhaseInfo {
    /// Phases and synchronization sets from scratch. Inter-task edges are
    /// left empty; see [`PhaseInfo::refresh_inter_task`].
    pub fn compute(prog: &Program, g: &Supergraph) -> PhaseInfo {
        let mut info = PhaseInfo::default();
        let mut sync_index: BTreeMap<BTreeSet<NodeId>, SyncId> = BTreeMap::new();
        for par in prog.nodes_of(KindTag::Parallel) {
            info.region_phases(prog, g, par, &mut sync_index);
        }
        info.callee_phases(prog, g);
        for b in prog.nodes_of(KindTag::Barrier) {
            if !info.sync_sets_of.contains_key(&b) {
                info.sync_set(&mut sync_index, [b].into());
            }
        }
        info
    }

    fn sync_set(
        &mut self,
        index: &mut BTreeMap<BTreeSet<NodeId>, SyncId>,
        set: BTreeSet<NodeId>,
    ) -> SyncId {
        if let Some(id) = index.get(&set) {
            return *id;
        }
        let id = index.len() as SyncId;
        for b in &set {
            self.sync_sets_of.entry(*b).or_default().insert(id);
        }
        self.members.insert(id, set.clone());
        index.insert(set, id);
        id
    }

    fn add(&mut self, n: NodeId, p: PhaseId) {
        self.phases_of.entry(n).or_default().insert(p);
        self.phase_nodes.entry(p).or_default().insert(n);
    }

    fn region_phases(
        &mut self,
        prog: &Program,
        g: &Supergraph,
        par: NodeId,
        sync_index: &mut BTreeMap<BTreeSet<NodeId>, SyncId>,
    ) {
        let Kind::Parallel { entry, exit, .. } = prog.kind(par) else {
            unreachable!()
        };
        let (entry, exit) = (*entry, *exit);
        let mut queue: VecDeque<BTreeSet<NodeId>> = VecDeque::from([BTreeSet::from([entry])]);
        let mut opened: BTreeSet<BTreeSet<NodeId>> = BTreeSet::new();
        while let Some(start) = queue.pop_front() {
            if !opened.insert(start.clone()) || start == BTreeSet::from([exit]) {
                continue;
            }
            let phase = self.phase_start.len() as PhaseId;
            let start_id = self.sync_set(sync_index, start.clone());
            self.phase_start.insert(phase, start_id);
            let mut seen: BTreeSet<NodeId> = BTreeSet::new();
            let mut stack: Vec<NodeId> = Vec::new();
            for b in &start {
                self.add(*b, phase);
                self.starts.entry(*b).or_default().insert(phase);
                seen.insert(*b);
                if *b != exit {
                    stack.extend(g.local_succs(*b));
                }
            }
            let mut end: BTreeSet<NodeId> = BTreeSet::new();
            while let Some(n) = stack.pop() {
                if matches!(prog.kind(n), Kind::Barrier) {
                    end.insert(n);
                    self.add(n, phase);
                    continue;
                }
                if !seen.insert(n) {
                    continue;
                }
                self.add(n, phase);
                stack.extend(g.local_succs(n));
            }
            let end_id = self.sync_set(sync_index, end.clone());
            self.phase_end.insert(phase, end_id);
            queue.push_back(end);
        }
    }

    fn callee_phases(&mut self, prog: &Program, g: &Supergraph) {
        let mut inherited: BTreeMap<String, BTreeSet<PhaseId>> = BTreeMap::new();
        let mut changed = true;
        while changed {
            changed = false;
            for c in prog.nodes_of(KindTag::Call) {
                let Kind::Call { callee } = prog.kind(c) else {
                    unreachable!()
                };
                let mut ph = self.phases_of.get(&c).cloned().unwrap_or_default();
                if let Some(f) = prog.function_of(c) {
                    ph.extend(inherited.get(f).into_iter().flatten().copied());
                }
                let slot = inherited.entry(callee.clone()).or_default();
                let before = slot.len();
                slot.extend(ph);
                changed |= slot.len() != before;
            }
        }
        for (f, ph) in inherited {
            for n in g.function_nodes(&f).into_iter().flatten() {
                for p in &ph {
                    self.add(*n, *p);
                }
            }
        }
    }

    /// True when adding or removing `root` may change phases or
    /// synchronization sets, so only a full recomputation is exact.
    pub fn needs_reinit(prog: &Program, root: NodeId) -> bool {
        prog.subtree_contains(root, |k| {
            matches!(k, Kind::Barrier | Kind::Parallel { .. } | Kind::Call { .. })
        })
    }

    /// Drops phase membership of removed nodes.
    pub fn on_removal(&mut self, removed: &[NodeId]) {
        for n in removed {
            if let Some(ph) = self.phases_of.remove(n) {
                for p in ph {
                    let nodes = self.phase_nodes.get_mut(&p).unwrap();
                    nodes.remove(n);
                    if nodes.is_empty() {
                        self.phase_nodes.remove(&p);
                    }
                }
            }
        }
    }

    /// Assigns phases to a freshly attached barrier-free subtree from its
    /// predecessors.
    pub fn on_addition(&mut self, prog: &Program, g: &Supergraph, root: NodeId) {
        let added: Vec<NodeId> = prog
            .subtree(root)
            .into_iter()
            .filter(|n| g.contains(*n))
            .collect();
        let func = prog.function_of(root).expect("detached node");
        let entry = prog.function_entry(func).unwrap();
        if prog.enclosing_parallel(root).is_none() {
            // Outside any region: either in a region callee or serial code.
            let ph = self.phases(entry).clone();
            for n in &added {
                for p in &ph {
                    self.add(*n, *p);
                }
            }
            return;
        }
        let mut changed = true;
        while changed {
            changed = false;
            for n in &added {
                let mut ph: BTreeSet<PhaseId> = BTreeSet::new();
                for p in g.local_preds(*n) {
                    let contrib = if matches!(prog.kind(p), Kind::Barrier) {
                        self.starts.get(&p).unwrap_or(&EMPTY_PHASES)
                    } else {
                        self.phases(p)
                    };
                    ph.extend(contrib.iter().copied());
                }
                for p in ph {
                    if !self.phases(*n).contains(&p) {
                        self.add(*n, p);
                        changed = true;
                    }
                }
            }
        }
    }

    /// Recomputes inter-task edges for the current phases and returns them.
    ///
    /// `*p` is taken to touch every address-taken shared location, so the
    /// result does not depend on points-to facts.
    pub fn refresh_inter_task(&mut self, prog: &Program, g: &Supergraph) -> BTreeSet<Edge> {
        let taken: BTreeSet<Loc> = prog.address_taken().into_iter().filter(|l| l.shared).collect();
        let mut deref = |_: &crate::ir::Var| taken.clone();
        let summaries = function_summaries(prog, g, &mut deref);
        let mut cache: BTreeMap<NodeId, Access> = BTreeMap::new();
        let mut access = |n: NodeId| -> Access {
            cache
                .entry(n)
                .or_insert_with(|| {
                    let mut a = node_access(prog, n, &mut |_| taken.clone());
                    if let Kind::Call { callee } = prog.kind(n) {
                        a.union(&summaries[callee]);
                    }
                    a.shared_only()
                })
                .clone()
        };

        let flushes: BTreeSet<NodeId> = self
            .phases_of
            .keys()
            .copied()
            .filter(|n| matches!(prog.kind(*n), Kind::Flush))
            .collect();
        let mut before: BTreeMap<NodeId, BTreeSet<Loc>> = BTreeMap::new();
        let mut after: BTreeMap<NodeId, BTreeSet<Loc>> = BTreeMap::new();
        for f in &flushes {
            let w = flush_free_walk(prog, g, *f, false)
                .into_iter()
                .flat_map(|n| access(n).writes)
                .collect();
            let r = flush_free_walk(prog, g, *f, true)
                .into_iter()
                .flat_map(|n| access(n).reads)
                .collect();
            before.insert(*f, w);
            after.insert(*f, r);
        }

        let mut edges = BTreeSet::new();
        for nodes in self.phase_nodes.values() {
            let fl: Vec<NodeId> = nodes.iter().copied().filter(|n| flushes.contains(n)).collect();
            for f1 in &fl {
                for f2 in &fl {
                    let vars: Vec<Loc> = before[f1].intersection(&after[f2]).copied().collect();
                    if !vars.is_empty() {
                        edges.insert(Edge {
                            src: *f1,
                            dst: *f2,
                            kind: EdgeKind::InterTask,
                            vars,
                        });
                    }
                }
            }
        }
        self.inter_task = edges.clone();
        edges
    }

    pub fn phases(&self, n: NodeId) -> &BTreeSet<PhaseId> {
        self.phases_of.get(&n).unwrap_or(&EMPTY_PHASES)
    }

    pub fn phase_nodes(&self, p: PhaseId) -> &BTreeSet<NodeId> {
        self.phase_nodes.get(&p).unwrap_or(&EMPTY_NODES)
    }

    pub fn phase_ids(&self) -> impl Iterator<Item = PhaseId> + '_ {
        self.phase_start.keys().copied()
    }

    pub fn sync_sets_of(&self, b: NodeId) -> Option<&BTreeSet<SyncId>> {
        self.sync_sets_of.get(&b)
    }

    pub fn members(&self, s: SyncId) -> &BTreeSet<NodeId> {
        self.members.get(&s).unwrap_or(&EMPTY_NODES)
    }

    /// Other barriers sharing a synchronization set with `b`; `None` if `b`
    /// is not a barrier.
    pub fn siblings(&self, b: NodeId) -> Option<BTreeSet<NodeId>> {
        let sets = self.sync_sets_of.get(&b)?;
        let mut out: BTreeSet<NodeId> = sets
            .iter()
            .flat_map(|s| self.members[s].iter().copied())
            .collect();
        out.remove(&b);
        Some(out)
    }

    /// Phases whose starting synchronization set contains `b`.
    pub fn phases_starting_at(&self, b: NodeId) -> BTreeSet<PhaseId> {
        self.starts.get(&b).cloned().unwrap_or_default()
    }

    /// Phases whose terminating synchronization set contains `b`.
    pub fn phases_ending_at(&self, b: NodeId) -> BTreeSet<PhaseId> {
        self.phase_end
            .iter()
            .filter(|(_, s)| self.members[s].contains(&b))
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn inter_task(&self) -> &BTreeSet<Edge> {
        &self.inter_task
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Phase<'a> {
            id: PhaseId,
            start: SyncId,
            end: SyncId,
            nodes: &'a BTreeSet<NodeId>,
        }
        #[derive(Serialize)]
        struct Sync<'a> {
            id: SyncId,
            members: &'a BTreeSet<NodeId>,
        }
        #[derive(Serialize)]
        #[serde(rename_all = "camelCase")]
        struct Dump<'a> {
            phases: Vec<Phase<'a>>,
            sync_sets: Vec<Sync<'a>>,
            inter_task_edges: &'a BTreeSet<Edge>,
        }
        let dump = Dump {
            phases: self
                .phase_start
                .iter()
                .map(|(p, s)| Phase {
                    id: *p,
                    start: *s,
                    end: self.phase_end[p],
                    nodes: self.phase_nodes(*p),
                })
                .collect(),
            sync_sets: self
                .members
                .iter()
                .map(|(id, m)| Sync { id: *id, members: m })
                .collect(),
            inter_task_edges: &self.inter_task,
        };
        serde_json::to_value(dump).expect("phase dump")
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph phases {\n");
        for p in self.phase_ids() {
            let _ = writeln!(out, "  subgraph cluster_p{p} {{\n    label=\"phase {p}\";");
            for n in self.phase_nodes(p) {
                let _ = writeln!(out, "    \"p{p}_{n}\" [label=\"{n}\"];");
            }
            out.push_str("  }\n");
        }
        for e in &self.inter_task {
            for p in self.phases(e.src).intersection(self.phases(e.dst)) {
                let _ = writeln!(out, "  \"p{p}_{}\" -> \"p{p}_{}\" [style=dashed];", e.src, e.dst);
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Nodes on flush-free paths leaving `f` (forward) or reaching it
/// (backward). Barriers and flushes block the walk. Function boundaries are
/// crossed context-insensitively through call sites.
fn flush_free_walk(prog: &Program, g: &Supergraph, f: NodeId, forward: bool) -> BTreeSet<NodeId> {
    let step = |n: NodeId| -> Vec<NodeId> {
        match (prog.kind(n), forward) {
            (Kind::Exit, true) => g
                .succ_edges(n)
                .filter(|e| e.kind == EdgeKind::Call)
                .map(|e| e.dst)
                .collect(),
            (Kind::Entry { .. }, false) => g
                .pred_edges(n)
                .filter(|e| e.kind == EdgeKind::Call)
                .flat_map(|e| g.local_preds(e.src))
                .collect(),
            (_, true) => g.local_succs(n),
            (_, false) => g.local_preds(n),
        }
    };
    let mut seen = BTreeSet::new();
    let mut stack = step(f);
    while let Some(n) = stack.pop() {
        if matches!(prog.kind(n), Kind::Barrier | Kind::Flush) || !seen.insert(n) {
            continue;
        }
        stack.extend(step(n));
    }
    seen
}
