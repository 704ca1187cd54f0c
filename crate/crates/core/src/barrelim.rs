//! Redundant barrier elimination, written as an ordinary client of the
//! framework: it reads abstractions through getters and mutates the program
//! only through elementary transformations.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::access::{deref_vars, node_access, Access};
use crate::callgraph::is_recursive;
use crate::hidfa::points_to;
use crate::ir::{Kind, KindTag, Lhs, Loc, NodeId, Program, Slot, Var};
use crate::{Fault, Homeostasis};
use crate::transform::Action;

/// Every abstraction the pass may read, listed at relevant change-points.
pub const ABSTRACTIONS: [&str; 7] = ["supergraph", "phase", "callgraph", "pta", "rd", "lv", "cp"];

pub const DEFAULT_CAP: u32 = 32;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OptReport {
    pub barriers_removed: u32,
    pub regions_merged: u32,
    pub calls_inlined: u32,
    pub iterations: u32,
    /// Labels of the relevant change-points passed, in RP modes.
    pub relevant_change_points: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum OptError {
    #[error(transparent)]
    Fault(#[from] Fault),
    #[error("no fixed point within {cap} iterations")]
    Cap { cap: u32, report: OptReport },
}

fn change_point(hs: &mut Homeostasis, label: &str) -> Result<(), Fault> {
    hs.relevant_change_point(label, &ABSTRACTIONS)
}

/// Runs barrier removal, region merging and call inlining in turn until a
/// full round changes nothing. Fails if that takes more than `cap` rounds.
pub fn run(hs: &mut Homeostasis, cap: u32) -> Result<OptReport, OptError> {
    let mut report = OptReport::default();
    let seen = hs.change_points().len();
    loop {
        if report.iterations == cap {
            report.relevant_change_points = hs.change_points()[seen..].to_vec();
            return Err(OptError::Cap { cap, report });
        }
        report.iterations += 1;

        let removed = remove_barriers(hs)?;
        change_point(hs, "remove-barriers")?;
        let merged = merge_regions(hs)?;
        change_point(hs, "merge-regions")?;
        let inlined = inline_calls(hs)?;
        change_point(hs, "inline-calls")?;

        report.barriers_removed += removed;
        report.regions_merged += merged;
        report.calls_inlined += inlined;
        if removed + merged + inlined == 0 {
            report.relevant_change_points = hs.change_points()[seen..].to_vec();
            return Ok(report);
        }
    }
}

// ---- barrier removal ----

fn shared_access(hs: &mut Homeostasis, nodes: &BTreeSet<NodeId>) -> Result<Access, Fault> {
    let mut acc = Access::default();
    for &n in nodes {
        let mut targets: BTreeMap<Loc, BTreeSet<Loc>> = BTreeMap::new();
        for p in deref_vars(hs.program(), n) {
            targets.insert(p, points_to(hs, n, p)?);
        }
        let mut deref = |v: &Var| targets.get(&v.loc).cloned().unwrap_or_default();
        acc.union(&node_access(hs.program(), n, &mut deref));
    }
    Ok(acc.shared_only())
}

fn conflicts(before: &Access, after: &Access) -> bool {
    !before.writes.is_disjoint(&after.reads)
        || !before.writes.is_disjoint(&after.writes)
        || !before.reads.is_disjoint(&after.writes)
}

/// A barrier is redundant when it synchronizes with no other barrier and
/// nothing in the phases it ends conflicts with the phases it starts.
fn is_redundant(hs: &mut Homeostasis, b: NodeId) -> Result<bool, Fault> {
    let ph = hs.phases();
    if ph.siblings(b).is_none_or(|s| !s.is_empty()) {
        return Ok(false);
    }
    let (ending, starting) = (ph.phases_ending_at(b), ph.phases_starting_at(b));
    if ending.is_empty() || starting.is_empty() {
        return Ok(false);
    }
    let gather = |ps: &BTreeSet<u32>| -> BTreeSet<NodeId> {
        ps.iter().flat_map(|p| ph.phase_nodes(*p).iter().copied()).collect()
    };
    let (nb, na) = (gather(&ending), gather(&starting));
    let before = shared_access(hs, &nb)?;
    let after = shared_access(hs, &na)?;
    Ok(!conflicts(&before, &after))
}

fn explicit_barriers(prog: &Program) -> Vec<NodeId> {
    let mut v: Vec<NodeId> = prog
        .nodes_of(KindTag::Barrier)
        .into_iter()
        .filter(|b| prog.enclosing_parallel(*b).is_some())
        .filter(|b| matches!(prog.position(*b), Some((_, Slot::Stmts, Some(_)))))
        .collect();
    v.reverse();
    v
}

/// Removing a barrier only grows the phases around the others, so one that
/// is needed stays needed for the rest of the pass.
fn remove_barriers(hs: &mut Homeostasis) -> Result<u32, Fault> {
    let mut needed = BTreeSet::new();
    let mut removed = 0;
    'outer: loop {
        for b in explicit_barriers(hs.program()) {
            if needed.contains(&b) {
                continue;
            }
            if !is_redundant(hs, b)? {
                needed.insert(b);
                continue;
            }
            let (host, _, i) = hs.program().position(b).expect("attached barrier");
            hs.transform(host, Slot::Stmts, Action::RemoveAt(i.unwrap()), None)?;
            removed += 1;
            change_point(hs, "barrier-removed")?;
            continue 'outer;
        }
        return Ok(removed);
    }
}

// ---- region merging ----

fn stmts(prog: &Program, block: NodeId) -> Vec<NodeId> {
    match prog.kind(block) {
        Kind::Block { stmts } => stmts.clone(),
        k => panic!("expected a block, found {:?}", k.tag()),
    }
}

fn parallel_body(prog: &Program, p: NodeId) -> NodeId {
    match prog.kind(p) {
        Kind::Parallel { body, .. } => *body,
        k => panic!("expected a parallel region, found {:?}", k.tag()),
    }
}

fn private_only(prog: &Program, n: NodeId, taken: &BTreeSet<Loc>) -> bool {
    match prog.kind(n) {
        Kind::Decl { shared, .. } => !shared,
        Kind::Assign { lhs: Lhs::Var(v), .. } => !v.loc.shared && !taken.contains(&v.loc),
        _ => false,
    }
}

/// First block holding two regions separated only by private assignments
/// and declarations: `(block, index of first, index of second)`.
fn find_mergeable(prog: &Program) -> Option<(NodeId, usize, usize)> {
    let taken = prog.address_taken();
    for block in prog.nodes_of(KindTag::Block) {
        let ss = stmts(prog, block);
        for (i, s) in ss.iter().enumerate() {
            if !matches!(prog.kind(*s), Kind::Parallel { .. }) {
                continue;
            }
            let mut j = i + 1;
            while j < ss.len() && private_only(prog, ss[j], &taken) {
                j += 1;
            }
            if j < ss.len() && matches!(prog.kind(ss[j]), Kind::Parallel { .. }) {
                return Some((block, i, j));
            }
        }
    }
    None
}

fn append(hs: &mut Homeostasis, block: NodeId, stmt: NodeId) -> Result<(), Fault> {
    let at = stmts(hs.program(), block).len();
    hs.transform(block, Slot::Stmts, Action::InsertAt(at), Some(stmt))?;
    Ok(())
}

fn append_barrier(hs: &mut Homeostasis, func: &str, block: NodeId) -> Result<(), Fault> {
    let b = hs.build_stmts(func, "barrier;")?[0];
    append(hs, block, b)
}

/// `parallel {A} S parallel {B}` becomes `parallel {A barrier S barrier B}`.
/// Statements keep their ids as they move.
fn merge_one(hs: &mut Homeostasis, host: NodeId, i: usize, j: usize) -> Result<(), Fault> {
    let func = hs.program().function_of(host).expect("attached").to_string();
    let ss = stmts(hs.program(), host);
    let into = parallel_body(hs.program(), ss[i]);
    let from = parallel_body(hs.program(), ss[j]);

    append_barrier(hs, &func, into)?;
    for _ in i + 1..j {
        let s = stmts(hs.program(), host)[i + 1];
        hs.transform(host, Slot::Stmts, Action::RemoveAt(i + 1), None)?;
        append(hs, into, s)?;
    }
    append_barrier(hs, &func, into)?;
    while let Some(&s) = stmts(hs.program(), from).first() {
        hs.transform(from, Slot::Stmts, Action::RemoveAt(0), None)?;
        append(hs, into, s)?;
    }
    hs.transform(host, Slot::Stmts, Action::RemoveAt(i + 1), None)?;
    Ok(())
}

fn merge_regions(hs: &mut Homeostasis) -> Result<u32, Fault> {
    let mut merged = 0;
    while let Some((host, i, j)) = find_mergeable(hs.program()) {
        merge_one(hs, host, i, j)?;
        merged += 1;
        change_point(hs, "regions-merged")?;
    }
    Ok(merged)
}

// ---- call inlining ----

fn inlinable(hs: &mut Homeostasis, call: NodeId) -> Result<bool, Fault> {
    let prog = hs.program();
    let Kind::Call { callee } = prog.kind(call) else {
        return Ok(false);
    };
    let callee = callee.clone();
    let body = prog.function_body(&callee).expect("resolved callee");
    let has_barrier = prog.subtree_contains(body, |k| matches!(k, Kind::Barrier));
    let has_return = prog.subtree_contains(body, |k| matches!(k, Kind::Return));
    let has_region = prog.subtree_contains(body, |k| matches!(k, Kind::Parallel { .. }));
    let in_region = prog.enclosing_parallel(call).is_some();
    if !has_barrier || has_return || (in_region && has_region) {
        return Ok(false);
    }
    Ok(!is_recursive(hs, &callee)?)
}

/// Suffix for the callee's private names that clashes with nothing visible
/// in the caller.
fn fresh_suffix(prog: &Program, caller: &str, callee: &str, call: NodeId) -> String {
    let privates: BTreeSet<String> = prog
        .locs()
        .filter(|l| !l.shared)
        .map(|l| prog.loc_info(l))
        .filter(|i| i.func.as_deref() == Some(callee))
        .map(|i| i.name.clone())
        .collect();
    let mut suffix = format!("_{}", call.0);
    while privates.iter().any(|p| {
        let name = format!("{p}{suffix}");
        prog.lookup_loc(caller, &name).is_some() || prog.shared_names().contains(&name)
    }) {
        suffix.push('_');
    }
    suffix
}

fn inline_one(hs: &mut Homeostasis, call: NodeId) -> Result<(), Fault> {
    let prog = hs.program();
    let Kind::Call { callee } = prog.kind(call) else {
        unreachable!("inline target is a call");
    };
    let caller = prog.function_of(call).expect("attached").to_string();
    let suffix = fresh_suffix(prog, &caller, callee, call);
    let rename = |v: &Var| {
        if v.loc.shared {
            v.name.clone()
        } else {
            format!("{}{suffix}", v.name)
        }
    };
    let body = prog.function_body(callee).expect("resolved callee");
    // Shared names are global; the caller may already declare them.
    let declared: BTreeSet<&str> = prog
        .subtree(prog.function_body(&caller).expect("caller body"))
        .into_iter()
        .filter_map(|n| match prog.kind(n) {
            Kind::Decl { shared: true, var } => Some(var.name.as_str()),
            _ => None,
        })
        .collect();
    let text: Vec<String> = stmts(prog, body)
        .into_iter()
        .filter(|s| !matches!(prog.kind(*s), Kind::Decl { shared: true, var } if declared.contains(var.name.as_str())))
        .map(|s| prog.print_node_renamed(s, &rename))
        .collect();
    let (host, _, i) = prog.position(call).expect("attached call");
    let i = i.expect("calls sit in blocks");

    let copies = hs.build_stmts(&caller, &text.join("\n"))?;
    let Some((&first, rest)) = copies.split_first() else {
        hs.transform(host, Slot::Stmts, Action::RemoveAt(i), None)?;
        return Ok(());
    };
    hs.transform(host, Slot::Stmts, Action::ReplaceAt(i), Some(first))?;
    for (k, s) in rest.iter().enumerate() {
        hs.transform(host, Slot::Stmts, Action::InsertAt(i + 1 + k), Some(*s))?;
    }
    Ok(())
}

fn inline_calls(hs: &mut Homeostasis) -> Result<u32, Fault> {
    let mut inlined = 0;
    'outer: loop {
        for call in hs.program().nodes_of(KindTag::Call) {
            if inlinable(hs, call)? {
                inline_one(hs, call)?;
                inlined += 1;
                change_point(hs, "call-inlined")?;
                continue 'outer;
            }
        }
        return Ok(inlined);
    }
}
