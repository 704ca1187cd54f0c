//! Reaching definitions.

use std::collections::BTreeSet;

use serde_json::{json, Value};

use super::{assign_parts, points_to, Facts, Problem};
use crate::ir::{Lhs, Loc, NodeId, Program};
use crate::stabilizer::{Fault, Homeostasis};

pub struct ReachingDefs;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RdXfer {
    pub site: NodeId,
    /// Killed and regenerated.
    pub strong: Vec<Loc>,
    /// Generated without a kill.
    pub weak: Vec<Loc>,
}

impl Problem for ReachingDefs {
    type V = BTreeSet<NodeId>;
    type Xfer = RdXfer;

    const NAME: &'static str = "rd";
    const BACKWARD: bool = false;

    fn meet(a: &Self::V, b: &Self::V) -> Self::V {
        a.union(b).copied().collect()
    }

    fn is_top(v: &Self::V) -> bool {
        v.is_empty()
    }

    fn boundary(_: &Program) -> Facts<Self::V> {
        Facts::default()
    }

    fn resolve(hs: &mut Homeostasis, n: NodeId) -> Result<(RdXfer, bool), Fault> {
        let mut x = RdXfer {
            site: n,
            strong: Vec::new(),
            weak: Vec::new(),
        };
        let lhs = assign_parts(hs.program(), n).map(|(l, _)| l.clone());
        match lhs {
            Some(Lhs::Var(v)) => x.strong.push(v.loc),
            Some(Lhs::Deref(p)) => {
                let targets = points_to(hs, n, p.loc)?;
                if targets.len() == 1 {
                    x.strong.extend(targets);
                } else {
                    x.weak.extend(targets);
                }
                return Ok((x, true));
            }
            None => {}
        }
        Ok((x, false))
    }

    fn transfer(x: &RdXfer, input: &Facts<Self::V>) -> Facts<Self::V> {
        let mut out = input.clone();
        for l in &x.strong {
            out.set(*l, [x.site].into());
        }
        for l in &x.weak {
            let mut s = out.get(*l).cloned().unwrap_or_default();
            s.insert(x.site);
            out.set(*l, s);
        }
        out
    }

    fn render(_: &Program, v: &Self::V) -> Value {
        json!(v.iter().map(|n| n.to_string()).collect::<Vec<_>>())
    }
}
