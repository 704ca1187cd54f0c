//! Comparison of every maintained abstraction against a from-scratch run on
//! a copy of the current program.

use std::fmt;

use crate::callgraph::{self, CallGraph};
use crate::hidfa::{CopyProp, Idfa, Liveness, PointsTo, Problem, ReachingDefs};
use crate::phase::PhaseInfo;
use crate::supergraph::{EdgeKind, Supergraph};
use crate::{register_analyses, Analysis, Fault, Homeostasis, Mode, DATAFLOW};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    pub abstraction: String,
    pub detail: String,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.abstraction, self.detail)
    }
}

fn diverged(abstraction: &str, detail: impl Into<String>) -> Divergence {
    Divergence {
        abstraction: abstraction.to_string(),
        detail: detail.into(),
    }
}

fn compare_idfa<P: Problem>(hs: &Homeostasis, fresh: &Homeostasis, out: &mut Vec<Divergence>)
where
    P::V: 'static,
    P::Xfer: 'static,
{
    let (Some(a), Some(b)) = (hs.peek::<Idfa<P>>(P::NAME), fresh.peek::<Idfa<P>>(P::NAME)) else {
        return;
    };
    if !a.same_state(b) {
        let n = a.first_difference(b).map(|n| n.to_string()).unwrap_or_default();
        out.push(diverged(P::NAME, format!("first differing node {n}")));
    }
}

/// Stabilizes everything in `hs`, then lists each abstraction that differs
/// from a fresh lazy-invalidation instance over the same program.
pub fn divergences(hs: &mut Homeostasis) -> Result<Vec<Divergence>, Fault> {
    hs.stabilize_all()?;
    let prog = hs.program();
    let mut out = Vec::new();

    let sg = Supergraph::build(prog);
    let local = |g: &Supergraph| -> Vec<_> {
        g.edges().into_iter().filter(|e| e.kind != EdgeKind::InterTask).collect()
    };
    if sg.nodes() != hs.supergraph().nodes() || local(&sg) != local(hs.supergraph()) {
        out.push(diverged("supergraph", "edge sets differ"));
    }
    let mut ph = PhaseInfo::compute(prog, &sg);
    let inter = ph.refresh_inter_task(prog, &sg);
    if ph != *hs.phases() {
        out.push(diverged("phase", "phase information differs"));
    }
    if inter != *hs.supergraph().inter_task() {
        out.push(diverged("supergraph", "inter-task edges differ"));
    }

    let names: Vec<&str> = hs
        .analysis_names()
        .into_iter()
        .filter(|n| DATAFLOW.contains(n))
        .collect();
    let mut fresh = Homeostasis::new(prog.clone(), Mode::LzInv);
    register_analyses(&mut fresh, &names)?;

    let a = hs.peek::<CallGraph>(callgraph::NAME);
    let b = fresh.peek::<CallGraph>(callgraph::NAME);
    if let (Some(a), Some(b)) = (a, b) {
        if a.dump(hs) != b.dump(&fresh) {
            out.push(diverged(callgraph::NAME, "call graph differs"));
        }
    }
    compare_idfa::<PointsTo>(hs, &fresh, &mut out);
    compare_idfa::<ReachingDefs>(hs, &fresh, &mut out);
    compare_idfa::<Liveness>(hs, &fresh, &mut out);
    compare_idfa::<CopyProp>(hs, &fresh, &mut out);
    Ok(out)
}
