//! Available copies. A location maps to `Copy(y)` when it holds a copy of
//! `y` on every path.

use std::collections::BTreeSet;

use serde_json::{json, Value};

use super::{assign_parts, points_to, Facts, Problem};
use crate::ir::{Expr, Lhs, Loc, NodeId, Program};
use crate::stabilizer::{Fault, Homeostasis};

pub struct CopyProp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum CopyVal {
    Copy(Loc),
    NoCopy,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CpXfer {
    Identity,
    /// Redefines `targets`; a single target may become a copy of `src`.
    Def { targets: BTreeSet<Loc>, src: Option<Loc> },
}

impl Problem for CopyProp {
    type V = CopyVal;
    type Xfer = CpXfer;

    const NAME: &'static str = "cp";
    const BACKWARD: bool = false;

    fn meet(a: &CopyVal, b: &CopyVal) -> CopyVal {
        if a == b {
            *a
        } else {
            CopyVal::NoCopy
        }
    }

    fn is_top(_: &CopyVal) -> bool {
        false
    }

    fn boundary(prog: &Program) -> Facts<CopyVal> {
        let mut f = Facts::default();
        for l in prog.referenced_locs() {
            f.set(l, CopyVal::NoCopy);
        }
        f
    }

    fn resolve(hs: &mut Homeostasis, n: NodeId) -> Result<(CpXfer, bool), Fault> {
        let Some((lhs, rhs)) = assign_parts(hs.program(), n).map(|(l, r)| (l.clone(), r.clone())) else {
            return Ok((CpXfer::Identity, false));
        };
        let src = match &rhs {
            Expr::Var(v) => Some(v.loc),
            _ => None,
        };
        Ok(match lhs {
            Lhs::Var(v) => (
                CpXfer::Def {
                    targets: [v.loc].into(),
                    src: src.filter(|s| *s != v.loc),
                },
                false,
            ),
            Lhs::Deref(p) => {
                let targets = points_to(hs, n, p.loc)?;
                let src = if targets.len() == 1 {
                    src.filter(|s| !targets.contains(s))
                } else {
                    None
                };
                (CpXfer::Def { targets, src }, true)
            }
        })
    }

    fn transfer(x: &CpXfer, input: &Facts<CopyVal>) -> Facts<CopyVal> {
        let CpXfer::Def { targets, src } = x else {
            return input.clone();
        };
        let mut out = input.clone();
        for part in [&mut out.shared, &mut out.private] {
            for v in part.values_mut() {
                if matches!(v, CopyVal::Copy(y) if targets.contains(y)) {
                    *v = CopyVal::NoCopy;
                }
            }
        }
        for t in targets {
            let v = match src {
                Some(s) => CopyVal::Copy(*s),
                None => CopyVal::NoCopy,
            };
            out.set(*t, v);
        }
        out
    }

    fn render(prog: &Program, v: &CopyVal) -> Value {
        match v {
            CopyVal::Copy(l) => json!(prog.loc_name(*l)),
            CopyVal::NoCopy => Value::Null,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hidfa::{Idfa, PointsTo};
    use crate::ir::KindTag;
    use crate::stabilizer::Mode;

    fn copies_before_last(src: &str, var: &str) -> Option<CopyVal> {
        let prog = Program::parse(src).unwrap();
        let mut hs = Homeostasis::new(prog, Mode::LzInv);
        hs.register(Box::new(Idfa::<PointsTo>::new())).unwrap();
        hs.register(Box::new(Idfa::<CopyProp>::new())).unwrap();
        let last = *hs.program().nodes_of(KindTag::Assign).last().unwrap();
        let l = hs.program().lookup_loc("main", var).unwrap();
        hs.query::<Idfa<CopyProp>, _>("cp", || None, |a, _| a.input(last).unwrap().get(l).copied())
            .unwrap()
    }

    #[test]
    fn copy_in_one_branch_is_not_available() {
        let v = copies_before_last("func main(){ if (c) { y = x; } else { } z = 0; }", "y");
        assert_eq!(v, Some(CopyVal::NoCopy));
    }

    #[test]
    fn copy_in_both_branches_is_available() {
        let prog = "func main(){ if (c) { y = x; } else { y = x; } z = 0; }";
        let x = Program::parse(prog).unwrap().lookup_loc("main", "x").unwrap();
        assert_eq!(copies_before_last(prog, "y"), Some(CopyVal::Copy(x)));
    }

    #[test]
    fn redefining_source_kills_copy() {
        let v = copies_before_last("func main(){ y = x; x = 1; z = 0; }", "y");
        assert_eq!(v, Some(CopyVal::NoCopy));
    }
}
