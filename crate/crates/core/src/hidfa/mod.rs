//! Inter-thread iterative dataflow with incremental stabilization.
//!
//! Flow maps are split into a shared and a private part. Two extensions
//! carry shared facts between threads:
//!
//! * along an inter-task edge `f1 -> f2`, the input of `f2` is met with the
//!   output of `f1` for each location labelling the edge;
//! * the shared output of a barrier is the meet of the shared inputs of the
//!   barrier and every barrier in its synchronization sets.
//!
//! Backward problems run on the reversed graph; the extensions are mirrored.
//!
//! An absent map entry stands for the top element, the identity of meet.

pub mod cp;
pub mod lv;
pub mod pta;
pub mod rd;

use std::any::Any;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Debug;
use std::rc::Rc;

use serde_json::{json, Value};

use crate::changelog::NetChange;
use crate::ir::{Kind, Loc, NodeId, Program};
use crate::scc::SccIndex;
use crate::stabilizer::{Analysis, Fault, Homeostasis, Work};
use crate::supergraph::{EdgeKind, Supergraph};

pub use cp::{CopyProp, CopyVal};
pub use lv::Liveness;
pub use pta::{points_to, PointsTo};
pub use rd::ReachingDefs;

/// Per-node lattice map over abstract locations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Facts<V> {
    pub shared: BTreeMap<Loc, V>,
    pub private: BTreeMap<Loc, V>,
}

impl<V> Default for Facts<V> {
    fn default() -> Self {
        Facts {
            shared: BTreeMap::new(),
            private: BTreeMap::new(),
        }
    }
}

impl<V: Clone> Facts<V> {
    fn part(&self, l: Loc) -> &BTreeMap<Loc, V> {
        if l.shared {
            &self.shared
        } else {
            &self.private
        }
    }

    fn part_mut(&mut self, l: Loc) -> &mut BTreeMap<Loc, V> {
        if l.shared {
            &mut self.shared
        } else {
            &mut self.private
        }
    }

    pub fn get(&self, l: Loc) -> Option<&V> {
        self.part(l).get(&l)
    }

    pub fn set(&mut self, l: Loc, v: V) {
        self.part_mut(l).insert(l, v);
    }

    pub fn remove(&mut self, l: Loc) -> Option<V> {
        self.part_mut(l).remove(&l)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Loc, &V)> {
        self.shared.iter().chain(self.private.iter())
    }
}

/// A dataflow problem over per-location lattice values.
pub trait Problem: 'static {
    type V: Clone + PartialEq + Debug;
    /// Transfer function of one node, resolved against other abstractions.
    type Xfer: Clone + PartialEq + Debug;

    const NAME: &'static str;
    const BACKWARD: bool;
    /// False when `transfer` can shrink as its input grows (strong updates).
    /// Affected cycles are then re-solved from top instead of patched.
    const MONOTONE: bool = true;

    fn meet(a: &Self::V, b: &Self::V) -> Self::V;

    /// True for values equal to top; such entries are not stored.
    fn is_top(v: &Self::V) -> bool;

    /// Input of nodes with no flow predecessors.
    fn boundary(prog: &Program) -> Facts<Self::V>;

    /// Resolves the transfer of `n`. The flag reports whether the result
    /// depends on another analysis and must be re-resolved on every update.
    fn resolve(hs: &mut Homeostasis, n: NodeId) -> Result<(Self::Xfer, bool), Fault>;

    fn transfer(x: &Self::Xfer, input: &Facts<Self::V>) -> Facts<Self::V>;

    fn render(prog: &Program, v: &Self::V) -> Value;
}

fn meet_into<P: Problem>(acc: &mut BTreeMap<Loc, P::V>, other: &BTreeMap<Loc, P::V>) {
    for (l, v) in other {
        match acc.get_mut(l) {
            Some(a) => *a = P::meet(a, v),
            None => {
                acc.insert(*l, v.clone());
            }
        }
    }
    acc.retain(|_, v| !P::is_top(v));
}

struct Worklist {
    set: BTreeSet<(u32, u32, NodeId)>,
    idx: Rc<SccIndex>,
}

impl Worklist {
    fn push(&mut self, n: NodeId) {
        if let Some((s, r)) = self.idx.key(n) {
            self.set.insert((s, r, n));
        }
    }

    fn pop(&mut self) -> Option<NodeId> {
        self.set.pop_first().map(|k| k.2)
    }

    fn pop_in(&mut self, scc: u32) -> Option<NodeId> {
        let first = *self.set.range((scc, 0, NodeId(0))..).next()?;
        if first.0 != scc {
            return None;
        }
        self.set.remove(&first);
        Some(first.2)
    }
}

/// Generic engine state for one problem.
pub struct Idfa<P: Problem> {
    input: HashMap<NodeId, Facts<P::V>>,
    output: HashMap<NodeId, Facts<P::V>>,
    xfer: HashMap<NodeId, P::Xfer>,
    dynamic: BTreeSet<NodeId>,
    siblings: HashMap<NodeId, BTreeSet<NodeId>>,
    boundary: Facts<P::V>,
    steps: u64,
    cap: u64,
    work: Work,
    touched: HashSet<NodeId>,
    trace: Option<Vec<NodeId>>,
    ext1: bool,
}

impl<P: Problem> Default for Idfa<P> {
    fn default() -> Self {
        Idfa {
            input: HashMap::new(),
            output: HashMap::new(),
            xfer: HashMap::new(),
            dynamic: BTreeSet::new(),
            siblings: HashMap::new(),
            boundary: Facts::default(),
            steps: 0,
            cap: 0,
            work: Work::default(),
            touched: HashSet::new(),
            trace: None,
            ext1: true,
        }
    }
}

impl<P: Problem> Idfa<P> {
    pub fn new() -> Self {
        Self::default()
    }

    /// An engine that ignores inter-task edges. Unsound for concurrent code;
    /// it exists to show what the inter-task meet contributes.
    pub fn without_inter_task() -> Self {
        Idfa {
            ext1: false,
            ..Self::default()
        }
    }

    /// Input map of `n` in flow direction (IN for forward problems, OUT for
    /// backward ones).
    pub fn input(&self, n: NodeId) -> Option<&Facts<P::V>> {
        self.input.get(&n)
    }

    pub fn output(&self, n: NodeId) -> Option<&Facts<P::V>> {
        self.output.get(&n)
    }

    /// Records every processed node, in order, until disabled.
    pub fn set_trace(&mut self, on: bool) {
        self.trace = on.then(Vec::new);
    }

    pub fn trace(&self) -> &[NodeId] {
        self.trace.as_deref().unwrap_or(&[])
    }

    fn flow_preds(g: &Supergraph, n: NodeId) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = if P::BACKWARD {
            g.succ_edges(n)
                .filter(|e| e.kind != EdgeKind::InterTask)
                .map(|e| e.dst)
                .collect()
        } else {
            g.pred_edges(n)
                .filter(|e| e.kind != EdgeKind::InterTask)
                .map(|e| e.src)
                .collect()
        };
        v.dedup();
        v
    }

    fn task_preds(g: &Supergraph, n: NodeId) -> Vec<(NodeId, &[Loc])> {
        if P::BACKWARD {
            g.succ_edges(n)
                .filter(|e| e.kind == EdgeKind::InterTask)
                .map(|e| (e.dst, e.vars.as_slice()))
                .collect()
        } else {
            g.pred_edges(n)
                .filter(|e| e.kind == EdgeKind::InterTask)
                .map(|e| (e.src, e.vars.as_slice()))
                .collect()
        }
    }

    fn flow_succs(g: &Supergraph, n: NodeId) -> BTreeSet<NodeId> {
        if P::BACKWARD {
            g.preds(n)
        } else {
            g.succs(n)
        }
    }

    /// Every node whose maps feed the equations of `n`.
    fn deps(hs: &Homeostasis, n: NodeId) -> BTreeSet<NodeId> {
        let g = hs.supergraph();
        let mut d: BTreeSet<NodeId> = if P::BACKWARD { g.succs(n) } else { g.preds(n) };
        if let Some(sib) = hs.phases().siblings(n) {
            d.extend(sib);
        }
        d
    }

    fn process(
        &mut self,
        hs: &Homeostasis,
        n: NodeId,
        valid: &dyn Fn(NodeId) -> bool,
        wl: &mut Worklist,
    ) -> Result<(), Fault> {
        self.steps += 1;
        if self.steps > self.cap {
            return Err(Fault::IterationCap {
                analysis: P::NAME.to_string(),
                cap: self.cap,
            });
        }
        if let Some(t) = &mut self.trace {
            t.push(n);
        }
        self.work.transfer_applications += 1;
        self.touched.insert(n);

        let g = hs.supergraph();
        let preds = Self::flow_preds(g, n);
        let mut input = if preds.is_empty() {
            self.boundary.clone()
        } else {
            let mut acc = Facts::default();
            for p in preds.iter().filter(|p| valid(**p)) {
                if let Some(o) = self.output.get(p) {
                    meet_into::<P>(&mut acc.shared, &o.shared);
                    meet_into::<P>(&mut acc.private, &o.private);
                }
            }
            acc
        };
        let task_preds = if self.ext1 { Self::task_preds(g, n) } else { Vec::new() };
        for (p, vars) in task_preds {
            if !valid(p) {
                continue;
            }
            let Some(o) = self.output.get(&p) else { continue };
            for x in vars {
                if let Some(v) = o.shared.get(x) {
                    let met = match input.shared.get(x) {
                        Some(cur) => P::meet(cur, v),
                        None => v.clone(),
                    };
                    if P::is_top(&met) {
                        input.shared.remove(x);
                    } else {
                        input.shared.insert(*x, met);
                    }
                }
            }
        }

        let mut out = P::transfer(&self.xfer[&n], &input);
        let siblings = hs.phases().siblings(n);
        if let Some(sib) = &siblings {
            let mut shared = input.shared.clone();
            for s in sib.iter().filter(|s| valid(**s)) {
                if let Some(si) = self.input.get(s) {
                    meet_into::<P>(&mut shared, &si.shared);
                }
            }
            out.shared = shared;
        }

        let old_in = self.input.insert(n, input);
        let in_changed = old_in.as_ref() != self.input.get(&n);
        let old_out = self.output.insert(n, out);
        if old_in.is_none() || old_out.as_ref() != self.output.get(&n) {
            for s in Self::flow_succs(g, n) {
                wl.push(s);
            }
        }
        if in_changed {
            for s in siblings.into_iter().flatten() {
                wl.push(s);
            }
        }
        Ok(())
    }

    fn begin(&mut self, hs: &Homeostasis) {
        let nodes = hs.supergraph().nodes().len() as u64;
        let locs = hs.program().locs().count().max(1) as u64;
        self.cap = 10 * nodes.max(1) * locs;
        self.steps = 0;
    }

    fn worklist(hs: &Homeostasis) -> Worklist {
        Worklist {
            set: BTreeSet::new(),
            idx: hs.scc(P::BACKWARD),
        }
    }

    fn resolve_nodes(
        &mut self,
        hs: &mut Homeostasis,
        nodes: impl IntoIterator<Item = NodeId>,
    ) -> Result<Vec<NodeId>, Fault> {
        let mut changed = Vec::new();
        for n in nodes {
            let (x, dynamic) = P::resolve(hs, n)?;
            if dynamic {
                self.dynamic.insert(n);
            } else {
                self.dynamic.remove(&n);
            }
            if self.xfer.get(&n) != Some(&x) {
                self.xfer.insert(n, x);
                changed.push(n);
            }
        }
        Ok(changed)
    }

    fn snapshot_siblings(hs: &Homeostasis) -> HashMap<NodeId, BTreeSet<NodeId>> {
        hs.supergraph()
            .nodes()
            .into_iter()
            .filter_map(|n| hs.phases().siblings(n).map(|s| (n, s)))
            .collect()
    }

    /// Classic worklist solution from top.
    pub fn compute_full(&mut self, hs: &mut Homeostasis) -> Result<(), Fault> {
        self.input.clear();
        self.output.clear();
        self.xfer.clear();
        self.dynamic.clear();
        let nodes = hs.supergraph().nodes();
        self.resolve_nodes(hs, nodes.iter().copied())?;
        self.boundary = P::boundary(hs.program());
        self.siblings = Self::snapshot_siblings(hs);
        self.begin(hs);
        let mut wl = Self::worklist(hs);
        for n in nodes {
            wl.push(n);
        }
        while let Some(n) = wl.pop() {
            self.process(hs, n, &|_| true, &mut wl)?;
        }
        Ok(())
    }

    /// Two-pass per-SCC incremental solution from `seeds`.
    pub fn incremental(&mut self, hs: &Homeostasis, seeds: &BTreeSet<NodeId>) -> Result<(), Fault> {
        self.begin(hs);
        let mut wl = Self::worklist(hs);
        for s in seeds {
            wl.push(*s);
        }
        let idx = wl.idx.clone();
        while let Some(first) = wl.pop() {
            let scc = idx.scc_of(first).unwrap();
            let members = idx.members(scc);
            if !P::MONOTONE && members.len() > 1 {
                for m in members {
                    self.input.remove(m);
                    self.output.remove(m);
                    wl.push(*m);
                }
                while let Some(n) = wl.pop_in(scc) {
                    self.process(hs, n, &|_| true, &mut wl)?;
                }
                continue;
            }
            let mut processed: HashSet<NodeId> = HashSet::new();
            let mut under: BTreeSet<NodeId> = BTreeSet::new();
            let mut cur = Some(first);
            while let Some(n) = cur {
                let valid = |p: NodeId| idx.scc_of(p) != Some(scc) || processed.contains(&p);
                if Self::deps(hs, n).into_iter().any(|p| !valid(p)) {
                    under.insert(n);
                }
                self.process(hs, n, &valid, &mut wl)?;
                processed.insert(n);
                cur = wl.pop_in(scc);
            }
            for u in under {
                wl.push(u);
            }
            while let Some(n) = wl.pop_in(scc) {
                self.process(hs, n, &|_| true, &mut wl)?;
            }
        }
        Ok(())
    }

    /// Seeds for a net change, mirrored for backward problems.
    pub fn seeds(&mut self, hs: &mut Homeostasis, net: &NetChange) -> Result<BTreeSet<NodeId>, Fault> {
        let live = hs.supergraph().nodes();
        for n in &net.removed_nodes {
            if !live.contains(n) {
                self.input.remove(n);
                self.output.remove(n);
                self.xfer.remove(n);
                self.dynamic.remove(n);
            }
        }
        let mut seeds: BTreeSet<NodeId> = BTreeSet::new();
        let head = |e: &crate::supergraph::Edge| if P::BACKWARD { e.src } else { e.dst };
        seeds.extend(net.removed_edges.iter().map(head));
        seeds.extend(net.added_edges.iter().map(head));
        for n in &net.added_nodes {
            seeds.insert(*n);
            seeds.extend(Self::flow_succs(hs.supergraph(), *n));
        }

        let added: Vec<NodeId> = net
            .added_nodes
            .iter()
            .copied()
            .filter(|n| live.contains(n))
            .collect();
        let mut to_resolve: BTreeSet<NodeId> = self.dynamic.iter().copied().collect();
        to_resolve.extend(added);
        to_resolve.extend(live.iter().filter(|n| !self.xfer.contains_key(n)));
        to_resolve.retain(|n| live.contains(n));
        seeds.extend(self.resolve_nodes(hs, to_resolve)?);

        let sib = Self::snapshot_siblings(hs);
        for n in sib.keys().chain(self.siblings.keys()) {
            if sib.get(n) != self.siblings.get(n) {
                seeds.insert(*n);
            }
        }
        self.siblings = sib;

        let boundary = P::boundary(hs.program());
        if boundary != self.boundary {
            self.boundary = boundary;
            let g = hs.supergraph();
            seeds.extend(live.iter().filter(|n| Self::flow_preds(g, **n).is_empty()));
        }
        seeds.retain(|n| live.contains(n));
        Ok(seeds)
    }

    /// Canonical JSON of every node's maps.
    pub fn dump_value(&self, prog: &Program) -> Value {
        let render = |f: &Facts<P::V>| -> Value {
            let m: BTreeMap<String, Value> = f
                .iter()
                .map(|(l, v)| (prog.loc_name(*l), P::render(prog, v)))
                .collect();
            json!(m)
        };
        let mut nodes: Vec<&NodeId> = self.input.keys().collect();
        nodes.sort();
        let mut out = serde_json::Map::new();
        for n in nodes {
            out.insert(
                n.to_string(),
                json!({ "in": render(&self.input[n]), "out": render(&self.output[n]) }),
            );
        }
        Value::Object(out)
    }

    /// True if both engines hold identical maps for every node.
    pub fn same_state(&self, other: &Idfa<P>) -> bool {
        self.input == other.input && self.output == other.output
    }

    /// First node whose maps differ from `other`, for diagnostics.
    pub fn first_difference(&self, other: &Idfa<P>) -> Option<NodeId> {
        let keys: BTreeSet<&NodeId> = self
            .input
            .keys()
            .chain(other.input.keys())
            .chain(self.output.keys())
            .chain(other.output.keys())
            .collect();
        keys.into_iter()
            .find(|n| self.input.get(n) != other.input.get(n) || self.output.get(n) != other.output.get(n))
            .copied()
    }
}

impl<P: Problem> Analysis for Idfa<P>
where
    P::V: 'static,
    P::Xfer: 'static,
{
    fn name(&self) -> &'static str {
        P::NAME
    }

    fn compute(&mut self, hs: &mut Homeostasis) -> Result<(), Fault> {
        self.compute_full(hs)
    }

    fn handle_update(&mut self, hs: &mut Homeostasis, net: &NetChange) -> Result<(), Fault> {
        let seeds = self.seeds(hs, net)?;
        self.incremental(hs, &seeds)
    }

    fn take_work(&mut self) -> Work {
        let mut w = std::mem::take(&mut self.work);
        w.nodes_reprocessed = self.touched.len() as u64;
        self.touched.clear();
        w
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn dump(&self, hs: &Homeostasis) -> Value {
        self.dump_value(hs.program())
    }
}

/// Kind-level helper shared by the instances: the node assigns through `lhs`.
pub(crate) fn assign_parts(prog: &Program, n: NodeId) -> Option<(&crate::ir::Lhs, &crate::ir::Expr)> {
    match prog.kind(n) {
        Kind::Assign { lhs, rhs } => Some((lhs, rhs)),
        _ => None,
    }
}
