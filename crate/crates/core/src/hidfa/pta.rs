//! Flow-sensitive may-points-to.

use std::collections::BTreeSet;

use serde_json::{json, Value};

use super::{assign_parts, Facts, Idfa, Problem};
use crate::ir::{Expr, Lhs, Loc, NodeId, Program};
use crate::stabilizer::{Fault, Homeostasis};

pub struct PointsTo;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rhs {
    Addr(Loc),
    Copy(Loc),
    Load(Loc),
    /// Not a pointer value.
    Scalar,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PtaXfer {
    Identity,
    Assign(Loc, Rhs),
    Store(Loc, Rhs),
}

fn rhs_of(e: &Expr) -> Rhs {
    match e {
        Expr::AddrOf(v) => Rhs::Addr(v.loc),
        Expr::Var(v) => Rhs::Copy(v.loc),
        Expr::Deref(v) => Rhs::Load(v.loc),
        _ => Rhs::Scalar,
    }
}

fn value(rhs: &Rhs, input: &Facts<BTreeSet<Loc>>) -> BTreeSet<Loc> {
    match rhs {
        Rhs::Addr(l) => [*l].into(),
        Rhs::Copy(l) => input.get(*l).cloned().unwrap_or_default(),
        Rhs::Load(p) => input
            .get(*p)
            .into_iter()
            .flatten()
            .flat_map(|t| input.get(*t).cloned().unwrap_or_default())
            .collect(),
        Rhs::Scalar => BTreeSet::new(),
    }
}

fn put(f: &mut Facts<BTreeSet<Loc>>, l: Loc, v: BTreeSet<Loc>) {
    if v.is_empty() {
        f.remove(l);
    } else {
        f.set(l, v);
    }
}

impl Problem for PointsTo {
    type V = BTreeSet<Loc>;
    type Xfer = PtaXfer;

    const NAME: &'static str = "pta";
    const BACKWARD: bool = false;
    const MONOTONE: bool = false;

    fn meet(a: &Self::V, b: &Self::V) -> Self::V {
        a.union(b).copied().collect()
    }

    fn is_top(v: &Self::V) -> bool {
        v.is_empty()
    }

    fn boundary(_: &Program) -> Facts<Self::V> {
        Facts::default()
    }

    fn resolve(hs: &mut Homeostasis, n: NodeId) -> Result<(PtaXfer, bool), Fault> {
        let x = match assign_parts(hs.program(), n) {
            Some((Lhs::Var(v), e)) => PtaXfer::Assign(v.loc, rhs_of(e)),
            Some((Lhs::Deref(p), e)) => PtaXfer::Store(p.loc, rhs_of(e)),
            None => PtaXfer::Identity,
        };
        Ok((x, false))
    }

    fn transfer(x: &PtaXfer, input: &Facts<Self::V>) -> Facts<Self::V> {
        let mut out = input.clone();
        match x {
            PtaXfer::Identity => {}
            PtaXfer::Assign(l, rhs) => put(&mut out, *l, value(rhs, input)),
            PtaXfer::Store(p, rhs) => {
                let v = value(rhs, input);
                let targets = input.get(*p).cloned().unwrap_or_default();
                if targets.len() == 1 {
                    put(&mut out, *targets.first().unwrap(), v);
                } else {
                    for t in targets {
                        let mut merged = out.get(t).cloned().unwrap_or_default();
                        merged.extend(v.iter().copied());
                        put(&mut out, t, merged);
                    }
                }
            }
        }
        out
    }

    fn render(prog: &Program, v: &Self::V) -> Value {
        json!(v.iter().map(|l| prog.loc_name(*l)).collect::<Vec<_>>())
    }
}

/// Locations `p` may point to on entry to `n`.
pub fn points_to(hs: &mut Homeostasis, n: NodeId, p: Loc) -> Result<BTreeSet<Loc>, Fault> {
    hs.query::<Idfa<PointsTo>, _>(PointsTo::NAME, BTreeSet::new, |a, _| {
        a.input(n)
            .and_then(|f| f.get(p))
            .cloned()
            .unwrap_or_default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::KindTag;
    use crate::stabilizer::Mode;

    fn run(src: &str) -> (Homeostasis, Vec<NodeId>) {
        let mut hs = Homeostasis::new(Program::parse(src).unwrap(), Mode::LzUpd);
        hs.register(Box::new(Idfa::<PointsTo>::new())).unwrap();
        let a = hs.program().nodes_of(KindTag::Assign);
        (hs, a)
    }

    #[test]
    fn address_of_gives_singleton() {
        let (mut hs, a) = run("func main(){ p = &x; y = 1; }");
        let p = hs.program().lookup_loc("main", "p").unwrap();
        let x = hs.program().lookup_loc("main", "x").unwrap();
        assert_eq!(points_to(&mut hs, a[1], p).unwrap(), [x].into());
    }

    #[test]
    fn load_and_weak_store() {
        let (mut hs, a) = run(
            "func main(){ if (c) { p = &x; } else { p = &y; } q = &z; *p = q; r = *p; s = 0; }",
        );
        let prog = hs.program().clone();
        let l = |n: &str| prog.lookup_loc("main", n).unwrap();
        let last = *a.last().unwrap();
        assert_eq!(points_to(&mut hs, last, l("p")).unwrap(), [l("x"), l("y")].into());
        assert_eq!(points_to(&mut hs, last, l("x")).unwrap(), [l("z")].into());
        assert_eq!(points_to(&mut hs, last, l("r")).unwrap(), [l("z")].into());
    }

    #[test]
    fn strong_store_through_unique_pointer() {
        let (mut hs, a) = run("func main(){ p = &x; x = &y; *p = &z; s = 0; }");
        let prog = hs.program().clone();
        let l = |n: &str| prog.lookup_loc("main", n).unwrap();
        assert_eq!(points_to(&mut hs, *a.last().unwrap(), l("x")).unwrap(), [l("z")].into());
    }
}
