//! Per-node read and write sets over abstract locations.

use std::collections::{BTreeMap, BTreeSet};

use crate::ir::{Expr, Kind, Lhs, Loc, NodeId, Program, Var, VarUse};
use crate::supergraph::Supergraph;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Access {
    pub reads: BTreeSet<Loc>,
    pub writes: BTreeSet<Loc>,
}

impl Access {
    pub fn union(&mut self, other: &Access) {
        self.reads.extend(other.reads.iter().copied());
        self.writes.extend(other.writes.iter().copied());
    }

    pub fn shared_only(mut self) -> Access {
        self.reads.retain(|l| l.shared);
        self.writes.retain(|l| l.shared);
        self
    }
}

fn expr_reads(e: &Expr, out: &mut BTreeSet<Loc>, deref: &mut dyn FnMut(&Var) -> BTreeSet<Loc>) {
    e.visit_vars(&mut |v, u| match u {
        VarUse::Read => {
            out.insert(v.loc);
        }
        VarUse::AddressOf => {}
        VarUse::Deref => {
            out.insert(v.loc);
            out.extend(deref(v));
        }
    });
}

/// Locations touched by `n` itself. Calls touch nothing at the call node;
/// see [`function_summaries`]. `deref` resolves the targets of `*p`.
pub fn node_access(prog: &Program, n: NodeId, deref: &mut dyn FnMut(&Var) -> BTreeSet<Loc>) -> Access {
    let mut a = Access::default();
    match prog.kind(n) {
        Kind::Assign { lhs, rhs } => {
            expr_reads(rhs, &mut a.reads, deref);
            match lhs {
                Lhs::Var(v) => {
                    a.writes.insert(v.loc);
                }
                Lhs::Deref(p) => {
                    a.reads.insert(p.loc);
                    a.writes.extend(deref(p));
                }
            }
        }
        Kind::If { cond, .. } | Kind::While { cond, .. } => expr_reads(cond, &mut a.reads, deref),
        _ => {}
    }
    a
}

/// Pointer variables dereferenced by `n`.
pub fn deref_vars(prog: &Program, n: NodeId) -> Vec<Loc> {
    let mut out = Vec::new();
    let mut visit = |e: &Expr| {
        e.visit_vars(&mut |v, u| {
            if u == VarUse::Deref {
                out.push(v.loc);
            }
        })
    };
    match prog.kind(n) {
        Kind::Assign { lhs, rhs } => {
            visit(rhs);
            if let Lhs::Deref(p) = lhs {
                out.push(p.loc);
            }
        }
        Kind::If { cond, .. } | Kind::While { cond, .. } => visit(cond),
        _ => {}
    }
    out.sort();
    out.dedup();
    out
}

/// Transitive access summary of every function, callees included.
pub fn function_summaries(
    prog: &Program,
    g: &Supergraph,
    deref: &mut dyn FnMut(&Var) -> BTreeSet<Loc>,
) -> BTreeMap<String, Access> {
    let mut local: BTreeMap<String, Access> = BTreeMap::new();
    let mut callees: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for f in prog.functions().keys() {
        let mut acc = Access::default();
        let mut calls = BTreeSet::new();
        for n in g.function_nodes(f).into_iter().flatten() {
            acc.union(&node_access(prog, *n, deref));
            if let Kind::Call { callee } = prog.kind(*n) {
                calls.insert(callee.clone());
            }
        }
        local.insert(f.clone(), acc);
        callees.insert(f.clone(), calls);
    }
    let mut out = BTreeMap::new();
    for f in prog.functions().keys() {
        let mut acc = Access::default();
        let mut seen = BTreeSet::new();
        let mut stack = vec![f.clone()];
        while let Some(h) = stack.pop() {
            if !seen.insert(h.clone()) {
                continue;
            }
            acc.union(&local[&h]);
            stack.extend(callees[&h].iter().cloned());
        }
        out.insert(f.clone(), acc);
    }
    out
}
