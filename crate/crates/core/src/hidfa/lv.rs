//! Live variables. Backward: a node's input is its live-out set and its
//! output the live-in set. Shared locations are live at program exits.

use std::collections::BTreeSet;

use serde_json::{json, Value};

use super::{assign_parts, points_to, Facts, Problem};
use crate::ir::{Expr, Kind, Lhs, Loc, NodeId, Program, VarUse};
use crate::stabilizer::{Fault, Homeostasis};

pub struct Liveness;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LvXfer {
    pub uses: BTreeSet<Loc>,
    pub kills: BTreeSet<Loc>,
}

fn expr_uses(hs: &mut Homeostasis, n: NodeId, e: &Expr, out: &mut BTreeSet<Loc>) -> Result<bool, Fault> {
    let mut derefs = Vec::new();
    e.visit_vars(&mut |v, u| match u {
        VarUse::Read => {
            out.insert(v.loc);
        }
        VarUse::Deref => {
            out.insert(v.loc);
            derefs.push(v.loc);
        }
        VarUse::AddressOf => {}
    });
    for p in &derefs {
        out.extend(points_to(hs, n, *p)?);
    }
    Ok(!derefs.is_empty())
}

impl Problem for Liveness {
    type V = ();
    type Xfer = LvXfer;

    const NAME: &'static str = "lv";
    const BACKWARD: bool = true;

    fn meet(_: &(), _: &()) {}

    fn is_top(_: &()) -> bool {
        false
    }

    fn boundary(prog: &Program) -> Facts<()> {
        let mut f = Facts::default();
        for l in prog.referenced_locs().into_iter().filter(|l| l.shared) {
            f.set(l, ());
        }
        f
    }

    fn resolve(hs: &mut Homeostasis, n: NodeId) -> Result<(LvXfer, bool), Fault> {
        let mut x = LvXfer {
            uses: BTreeSet::new(),
            kills: BTreeSet::new(),
        };
        let cond = match hs.program().kind(n) {
            Kind::If { cond, .. } | Kind::While { cond, .. } => Some(cond.clone()),
            _ => None,
        };
        if let Some(c) = cond {
            let dynamic = expr_uses(hs, n, &c, &mut x.uses)?;
            return Ok((x, dynamic));
        }
        let Some((lhs, rhs)) = assign_parts(hs.program(), n).map(|(l, r)| (l.clone(), r.clone())) else {
            return Ok((x, false));
        };
        let mut dynamic = expr_uses(hs, n, &rhs, &mut x.uses)?;
        match lhs {
            Lhs::Var(v) => {
                x.kills.insert(v.loc);
            }
            Lhs::Deref(p) => {
                x.uses.insert(p.loc);
                let targets = points_to(hs, n, p.loc)?;
                if targets.len() == 1 {
                    x.kills.extend(targets);
                }
                dynamic = true;
            }
        }
        Ok((x, dynamic))
    }

    fn transfer(x: &LvXfer, input: &Facts<()>) -> Facts<()> {
        let mut out = input.clone();
        for l in &x.kills {
            out.remove(*l);
        }
        for l in &x.uses {
            out.set(*l, ());
        }
        out
    }

    fn render(_: &Program, _: &()) -> Value {
        json!(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hidfa::{Idfa, PointsTo};
    use crate::ir::KindTag;
    use crate::stabilizer::Mode;

    #[test]
    fn copy_source_live_before_and_dead_target_after() {
        let prog = Program::parse("func main(){ y = x; }").unwrap();
        let mut hs = Homeostasis::new(prog, Mode::LzInv);
        hs.register(Box::new(Idfa::<PointsTo>::new())).unwrap();
        hs.register(Box::new(Idfa::<Liveness>::new())).unwrap();
        let n = hs.program().nodes_of(KindTag::Assign)[0];
        let x = hs.program().lookup_loc("main", "x").unwrap();
        let y = hs.program().lookup_loc("main", "y").unwrap();
        let (live_in, live_out) = hs
            .query::<Idfa<Liveness>, _>("lv", || unreachable!(), |a, _| {
                (a.output(n).unwrap().clone(), a.input(n).unwrap().clone())
            })
            .unwrap();
        assert!(live_in.get(x).is_some());
        assert!(live_out.get(y).is_none());
    }
}
