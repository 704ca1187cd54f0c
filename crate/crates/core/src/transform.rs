//! Elementary transformations: the only way to mutate the program.

use std::collections::BTreeSet;

use crate::changelog::{ChangeAction, ElemChange};
use crate::ir::{Kind, NodeId, Program, Slot};
use crate::phase::PhaseInfo;
use crate::stabilizer::{Fault, Homeostasis};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    InsertAt(usize),
    RemoveAt(usize),
    ReplaceAt(usize),
    /// Replaces the single node in a `Body`, `Then` or `Else` slot.
    ReplaceSlot,
}

fn bad(msg: impl Into<String>) -> Fault {
    Fault::Transform(msg.into())
}

/// Functions transitively callable from `roots`.
fn reachable_functions(prog: &Program, roots: impl IntoIterator<Item = String>) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<String> = roots.into_iter().collect();
    while let Some(f) = stack.pop() {
        if !seen.insert(f.clone()) {
            continue;
        }
        let Some(body) = prog.function_body(&f) else {
            continue;
        };
        for n in prog.subtree(body) {
            if let Kind::Call { callee } = prog.kind(n) {
                stack.push(callee.clone());
            }
        }
    }
    seen
}

fn callees_in(prog: &Program, root: NodeId) -> Vec<String> {
    prog.subtree(root)
        .into_iter()
        .filter_map(|n| match prog.kind(n) {
            Kind::Call { callee } => Some(callee.clone()),
            _ => None,
        })
        .collect()
}

/// Functions that run inside some parallel region.
fn region_functions(prog: &Program) -> BTreeSet<String> {
    let mut roots = Vec::new();
    for entry in prog.functions().values() {
        for n in prog.subtree(*entry) {
            if let Kind::Call { callee } = prog.kind(n) {
                if prog.enclosing_parallel(n).is_some() {
                    roots.push(callee.clone());
                }
            }
        }
    }
    reachable_functions(prog, roots)
}

fn has_parallel(prog: &Program, root: NodeId) -> bool {
    prog.subtree_contains(root, |k| matches!(k, Kind::Parallel { .. }))
}

fn check_payload(prog: &Program, host: NodeId, slot: Slot, payload: NodeId) -> Result<(), Fault> {
    let node = prog
        .get(payload)
        .ok_or_else(|| bad(format!("unknown payload {payload}")))?;
    if node.parent.is_some() || prog.is_attached(payload) {
        return Err(bad(format!("payload {payload} is already attached")));
    }
    match (slot, &node.kind) {
        (_, Kind::Entry { .. } | Kind::Exit) => {
            return Err(bad("function boundaries cannot be moved"))
        }
        (Slot::Stmts, Kind::Block { .. }) => {
            return Err(bad("a block cannot be a statement"))
        }
        (Slot::Body | Slot::Then | Slot::Else, k) if !matches!(k, Kind::Block { .. }) => {
            return Err(bad("body slots hold blocks"))
        }
        _ => {}
    }
    let func = prog.function_of(host).unwrap().to_string();
    let in_region = matches!(prog.kind(host), Kind::Parallel { .. })
        || prog.enclosing_parallel(host).is_some();
    let runs_in_region = in_region || region_functions(prog).contains(&func);
    if runs_in_region && has_parallel(prog, payload) {
        return Err(bad("parallel regions cannot nest"));
    }
    if in_region && prog.subtree_contains(payload, |k| matches!(k, Kind::Return)) {
        return Err(bad("return inside a parallel region"));
    }
    let called = reachable_functions(prog, callees_in(prog, payload));
    let payload_parallel = has_parallel(prog, payload);
    if runs_in_region || payload_parallel {
        for f in &called {
            let body = prog.function_body(f).unwrap();
            // The host itself gains a region once the payload lands.
            if has_parallel(prog, body) || (*f == func && payload_parallel) {
                return Err(bad(format!("'{f}' opens a parallel region and would run inside one")));
            }
        }
    }
    Ok(())
}

impl Homeostasis {
    /// Applies one elementary transformation at `host`'s `slot`, then
    /// updates the super-graph and phase information and notifies every
    /// registered analysis.
    pub fn transform(
        &mut self,
        host: NodeId,
        slot: Slot,
        action: Action,
        payload: Option<NodeId>,
    ) -> Result<ElemChange, Fault> {
        if self.depth > 0 {
            return Err(Fault::Reentrant);
        }
        let prog = &self.prog;
        if prog.get(host).is_none() || !prog.is_attached(host) {
            return Err(bad(format!("host {host} is not attached")));
        }
        let slot_ok = matches!(
            (prog.kind(host), slot),
            (Kind::Block { .. }, Slot::Stmts)
                | (Kind::While { .. } | Kind::Parallel { .. }, Slot::Body)
                | (Kind::If { .. }, Slot::Then | Slot::Else)
        );
        if !slot_ok {
            return Err(bad(format!(
                "{:?} has no mutable {slot:?} slot",
                prog.kind(host).tag()
            )));
        }
        let len = match prog.kind(host) {
            Kind::Block { stmts } => stmts.len(),
            _ => 0,
        };
        let indexed = matches!(
            action,
            Action::InsertAt(_) | Action::RemoveAt(_) | Action::ReplaceAt(_)
        );
        if indexed != (slot == Slot::Stmts) {
            return Err(bad(format!("{action:?} does not apply to {slot:?}")));
        }
        let needs_payload = match action {
            Action::RemoveAt(_) => false,
            Action::ReplaceSlot => slot != Slot::Else,
            _ => true,
        };
        if needs_payload && payload.is_none() {
            return Err(bad(format!("{action:?} needs a payload")));
        }
        if matches!(action, Action::RemoveAt(_)) && payload.is_some() {
            return Err(bad("removeAt takes no payload"));
        }
        match action {
            Action::InsertAt(i) if i > len => return Err(bad(format!("index {i} out of range"))),
            Action::RemoveAt(i) | Action::ReplaceAt(i) if i >= len => {
                return Err(bad(format!("index {i} out of range")))
            }
            _ => {}
        }
        if let Some(p) = payload {
            check_payload(prog, host, slot, p)?;
        }
        let func = prog.function_of(host).unwrap().to_string();

        // Step B: mutate.
        let prog = &mut self.prog;
        let removed: Option<NodeId> = match action {
            Action::InsertAt(i) => {
                prog.insert_stmt(host, i, payload.unwrap());
                None
            }
            Action::RemoveAt(i) => Some(prog.remove_stmt(host, i)),
            Action::ReplaceAt(i) => {
                let old = prog.remove_stmt(host, i);
                prog.insert_stmt(host, i, payload.unwrap());
                Some(old)
            }
            Action::ReplaceSlot => prog.replace_slot(host, slot, payload),
        };
        let added = payload;

        // Steps A and C: node sets and the CFG edge delta.
        let removed_nodes: Vec<NodeId> = removed.map(|r| prog.subtree(r)).unwrap_or_default();
        let added_nodes: Vec<NodeId> = added.map(|a| prog.subtree(a)).unwrap_or_default();
        let mut delta = self.sg.rebuild_function(&self.prog, &func);

        // Phase stabilization: a mix of invalidation and update.
        let prog = &self.prog;
        let reinit = removed.is_some_and(|r| PhaseInfo::needs_reinit(prog, r))
            || added.is_some_and(|a| PhaseInfo::needs_reinit(prog, a));
        if reinit {
            self.phases = PhaseInfo::compute(prog, &self.sg);
        } else {
            self.phases.on_removal(&removed_nodes);
            if let Some(a) = added {
                self.phases.on_addition(prog, &self.sg, a);
            }
        }
        let it = self.phases.refresh_inter_task(prog, &self.sg);
        delta.extend(self.sg.set_inter_task(it));

        let change = ElemChange {
            action: match (added, removed) {
                (Some(_), Some(_)) => ChangeAction::ReplaceNode,
                (Some(_), None) => ChangeAction::AddNode,
                _ => ChangeAction::RemoveNode,
            },
            func,
            added_nodes,
            removed_nodes,
            added_edges: delta.added,
            removed_edges: delta.removed,
        };
        // Step D.
        self.notify(change.clone())?;
        Ok(change)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::KindTag;
    use crate::stabilizer::Mode;

    fn hs(src: &str) -> Homeostasis {
        Homeostasis::new(Program::parse(src).unwrap(), Mode::LzUpd)
    }

    fn main_block(h: &Homeostasis) -> NodeId {
        h.program().function_body("main").unwrap()
    }

    #[test]
    fn remove_middle_rewires() {
        let mut h = hs("func main(){ a = 1; b = 2; c = 3; }");
        let blk = main_block(&h);
        let c = h.transform(blk, Slot::Stmts, Action::RemoveAt(1), None).unwrap();
        assert_eq!(c.action, ChangeAction::RemoveNode);
        assert_eq!(c.removed_nodes, vec![NodeId(3)]);
        let pairs = |v: &[crate::supergraph::Edge]| -> Vec<(u32, u32)> {
            v.iter().map(|e| (e.src.0, e.dst.0)).collect()
        };
        assert_eq!(pairs(&c.added_edges), vec![(2, 4)]);
        assert_eq!(pairs(&c.removed_edges), vec![(2, 3), (3, 4)]);
    }

    #[test]
    fn insert_at_zero_redirects_entry() {
        let mut h = hs("func main(){ a = 1; }");
        let blk = main_block(&h);
        let s = h.build_stmts("main", "z = 0;").unwrap()[0];
        let c = h.transform(blk, Slot::Stmts, Action::InsertAt(0), Some(s)).unwrap();
        assert!(c.added_edges.iter().any(|e| e.src == NodeId(0) && e.dst == s));
        assert!(c.removed_edges.iter().any(|e| e.src == NodeId(0) && e.dst == NodeId(2)));
    }

    #[test]
    fn replace_while_body() {
        let mut h = hs("func main(){ while (c) { a = 1; } }");
        let w = h.program().nodes_of(KindTag::While)[0];
        let old_body = match h.program().kind(w) {
            Kind::While { body, .. } => *body,
            _ => unreachable!(),
        };
        let nb = h.build_block("main", "b = 2; d = 3;").unwrap();
        let c = h.transform(w, Slot::Body, Action::ReplaceSlot, Some(nb)).unwrap();
        assert_eq!(c.action, ChangeAction::ReplaceNode);
        assert!(c.removed_nodes.contains(&old_body));
        assert_eq!(c.added_nodes.len(), 3);
        let rebuilt = crate::supergraph::Supergraph::build(h.program());
        let inc: BTreeSet<_> = h.supergraph().edges().into_iter().filter(|e| e.kind != crate::supergraph::EdgeKind::InterTask).collect();
        assert_eq!(inc, rebuilt.edges());
    }

    #[test]
    fn invalid_requests_are_rejected() {
        let mut h = hs("func main(){ a = 1; parallel { b = 1; } }");
        let blk = main_block(&h);
        let a = NodeId(2);
        assert!(h.transform(a, Slot::Stmts, Action::RemoveAt(0), None).is_err());
        assert!(h.transform(blk, Slot::Stmts, Action::RemoveAt(5), None).is_err());
        assert!(h.transform(blk, Slot::Stmts, Action::InsertAt(0), Some(a)).is_err());
        let par = h.program().nodes_of(KindTag::Parallel)[0];
        let inner = match h.program().kind(par) {
            Kind::Parallel { body, .. } => *body,
            _ => unreachable!(),
        };
        let nested = h.build_stmts("main", "parallel { }").unwrap()[0];
        assert!(h.transform(inner, Slot::Stmts, Action::InsertAt(0), Some(nested)).is_err());
        let ret = h.build_stmts("main", "return;").unwrap()[0];
        assert!(h.transform(inner, Slot::Stmts, Action::InsertAt(0), Some(ret)).is_err());
        assert_eq!(h.log().head(), 0);
    }

    #[test]
    fn barrier_insert_reinitializes_phases() {
        let mut h = hs("func main(){ shared x; parallel { x = 1; flush; flush; y = x; } }");
        assert_eq!(h.phases().inter_task().len(), 1);
        let par = h.program().nodes_of(KindTag::Parallel)[0];
        let inner = match h.program().kind(par) {
            Kind::Parallel { body, .. } => *body,
            _ => unreachable!(),
        };
        let b = h.build_stmts("main", "barrier;").unwrap()[0];
        let c = h.transform(inner, Slot::Stmts, Action::InsertAt(2), Some(b)).unwrap();
        assert!(h.phases().inter_task().is_empty());
        assert!(c.removed_edges.iter().any(|e| e.kind == crate::supergraph::EdgeKind::InterTask));
        let mut scratch = PhaseInfo::compute(h.program(), h.supergraph());
        scratch.refresh_inter_task(h.program(), h.supergraph());
        assert_eq!(&scratch, h.phases());
    }
}
