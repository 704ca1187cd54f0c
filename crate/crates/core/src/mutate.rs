//! Random elementary transformations for fuzzing and property tests.
//!
//! Randomness comes from a caller-supplied `pick(n)`, which must return a
//! value below `n`. Rejected transformations leave the program unchanged.

use crate::ir::{Kind, KindTag, NodeId, Program, Slot};
use crate::transform::Action;
use crate::{ElemChange, Fault, Homeostasis};

pub type Pick<'a> = dyn FnMut(usize) -> usize + 'a;

const PRIVATES: [&str; 4] = ["t0", "t1", "t2", "p0"];

fn choose<'a, T>(pick: &mut Pick<'_>, items: &'a [T]) -> Option<&'a T> {
    if items.is_empty() {
        None
    } else {
        Some(&items[pick(items.len())])
    }
}

fn shared_names(prog: &Program) -> Vec<String> {
    prog.shared_names().iter().cloned().collect()
}

fn private_name(pick: &mut Pick<'_>, prog: &Program) -> String {
    let name = PRIVATES[pick(PRIVATES.len())];
    if prog.shared_names().contains(name) {
        format!("{name}_")
    } else {
        name.to_string()
    }
}

fn var(pick: &mut Pick<'_>, prog: &Program) -> String {
    let shared = shared_names(prog);
    if pick(2) == 0 {
        if let Some(s) = choose(pick, &shared) {
            return s.clone();
        }
    }
    private_name(pick, prog)
}

fn expr(pick: &mut Pick<'_>, prog: &Program) -> String {
    match pick(4) {
        0 => pick(10).to_string(),
        1 => var(pick, prog),
        2 => format!("{} + {}", var(pick, prog), pick(5)),
        _ => format!("{} < {}", var(pick, prog), var(pick, prog)),
    }
}

/// Source text of one random statement for `func`. Depth bounds nesting.
fn stmt_text(pick: &mut Pick<'_>, prog: &Program, func: &str, in_region: bool, depth: u32) -> String {
    let choices = if depth == 0 { 7 } else { 10 };
    match pick(choices) {
        0 | 1 => format!("{} = {};", var(pick, prog), expr(pick, prog)),
        2 => {
            let shared = shared_names(prog);
            match choose(pick, &shared) {
                Some(s) => format!("{} = &{s};", private_name(pick, prog)),
                None => "flush;".to_string(),
            }
        }
        3 => {
            let p = private_name(pick, prog);
            if pick(2) == 0 {
                format!("*{p} = {};", expr(pick, prog))
            } else {
                format!("{} = *{p};", var(pick, prog))
            }
        }
        4 => "barrier;".to_string(),
        5 => "flush;".to_string(),
        6 => {
            let callees: Vec<&String> = prog
                .functions()
                .keys()
                .filter(|f| *f != prog.entry_function() && f.as_str() != func)
                .collect();
            match choose(pick, &callees) {
                Some(f) => format!("call {f}();"),
                None => "flush;".to_string(),
            }
        }
        7 => format!(
            "if ({}) {{ {} }} else {{ {} }}",
            expr(pick, prog),
            stmt_text(pick, prog, func, in_region, depth - 1),
            stmt_text(pick, prog, func, in_region, depth - 1)
        ),
        8 => {
            let t = private_name(pick, prog);
            format!("while ({t} < {}) {{ {t} = {t} + 1; }}", pick(4))
        }
        _ if in_region => stmt_text(pick, prog, func, in_region, depth - 1),
        _ => format!(
            "parallel {{ {} barrier; {} }}",
            stmt_text(pick, prog, func, true, depth - 1),
            stmt_text(pick, prog, func, true, depth - 1)
        ),
    }
}

fn block_len(prog: &Program, b: NodeId) -> usize {
    match prog.kind(b) {
        Kind::Block { stmts } => stmts.len(),
        _ => 0,
    }
}

fn rejected(e: Fault) -> Result<Option<ElemChange>, Fault> {
    match e {
        Fault::Transform(_) | Fault::Parse(_) => Ok(None),
        e => Err(e),
    }
}

/// Statement pool of moved-out subtrees, so later insertions can re-add
/// exactly what was removed.
#[derive(Default)]
pub struct Mutator {
    detached: Vec<NodeId>,
}

impl Mutator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tries one random elementary transformation. `Ok(None)` means the
    /// choice was rejected by validation and nothing changed.
    pub fn step(&mut self, hs: &mut Homeostasis, pick: &mut Pick<'_>) -> Result<Option<ElemChange>, Fault> {
        let prog = hs.program();
        let blocks = prog.nodes_of(KindTag::Block);
        let &host = choose(pick, &blocks).expect("every function has a body block");
        let func = prog.function_of(host).unwrap().to_string();
        let in_region = prog.enclosing_parallel(host).is_some();
        let len = block_len(prog, host);

        let r = match pick(5) {
            0 | 1 => {
                let payload = match self.payload(hs, pick, &func, in_region) {
                    Ok(p) => p,
                    Err(e) => return rejected(e),
                };
                hs.transform(host, Slot::Stmts, Action::InsertAt(pick(len + 1)), Some(payload))
            }
            2 if len > 0 => {
                let i = pick(len);
                let victim = match hs.program().kind(host) {
                    Kind::Block { stmts } => stmts[i],
                    _ => unreachable!(),
                };
                let r = hs.transform(host, Slot::Stmts, Action::RemoveAt(i), None);
                if r.is_ok() {
                    self.detached.push(victim);
                }
                r
            }
            3 if len > 0 => {
                let payload = match self.payload(hs, pick, &func, in_region) {
                    Ok(p) => p,
                    Err(e) => return rejected(e),
                };
                hs.transform(host, Slot::Stmts, Action::ReplaceAt(pick(len)), Some(payload))
            }
            _ => {
                let prog = hs.program();
                let parent = prog.node(host).parent;
                let Some(parent) = parent.filter(|p| !matches!(prog.kind(*p), Kind::Entry { .. })) else {
                    return Ok(None);
                };
                let slot = prog.position(host).map(|(_, s, _)| s).unwrap();
                let inner = stmt_text(pick, prog, &func, in_region, 1);
                let block = match hs.build_block(&func, &format!("{{ {inner} }}")) {
                    Ok(b) => b,
                    Err(e) => return rejected(e),
                };
                hs.transform(parent, slot, Action::ReplaceSlot, Some(block))
            }
        };
        match r {
            Ok(c) => Ok(Some(c)),
            Err(e) => rejected(e),
        }
    }

    fn payload(&mut self, hs: &mut Homeostasis, pick: &mut Pick<'_>, func: &str, in_region: bool) -> Result<NodeId, Fault> {
        if !self.detached.is_empty() && pick(3) == 0 {
            let i = pick(self.detached.len());
            let n = self.detached[i];
            let free = hs.program().get(n).is_some() && !hs.program().is_attached(n);
            if free && self.owner_matches(hs.program(), n, func) {
                self.detached.swap_remove(i);
                return Ok(n);
            }
        }
        let text = stmt_text(pick, hs.program(), func, in_region, 2);
        Ok(hs.build_stmts(func, &text)?[0])
    }

    /// Detached statements may only return to the function whose variables
    /// they were resolved against.
    fn owner_matches(&self, prog: &Program, n: NodeId, func: &str) -> bool {
        let mut ok = true;
        for m in prog.subtree(n) {
            let mut check = |v: &crate::ir::Var| {
                if !v.loc.shared && prog.loc_info(v.loc).func.as_deref() != Some(func) {
                    ok = false;
                }
            };
            match prog.kind(m) {
                Kind::Assign { lhs, rhs } => {
                    match lhs {
                        crate::ir::Lhs::Var(v) | crate::ir::Lhs::Deref(v) => check(v),
                    }
                    rhs.visit_vars(&mut |v, _| check(v));
                }
                Kind::If { cond, .. } | Kind::While { cond, .. } => cond.visit_vars(&mut |v, _| check(v)),
                Kind::Decl { var, .. } => check(var),
                _ => {}
            }
        }
        ok
    }
}
