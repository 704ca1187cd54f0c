use std::fmt::Write;

use super::{BinOp, Expr, Kind, Lhs, NodeId, Program, Var};

type Rename<'a> = &'a dyn Fn(&Var) -> String;

pub(super) fn print_program(prog: &Program) -> String {
    let mut entries: Vec<NodeId> = prog.functions.values().copied().collect();
    entries.sort();
    let mut out = String::new();
    for (i, e) in entries.into_iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let Kind::Entry { func, body, .. } = prog.kind(e) else {
            unreachable!("function root is not an entry")
        };
        let _ = write!(out, "func {func}() ");
        block(prog, *body, 0, &mut out, &|v| v.name.clone());
        out.push('\n');
    }
    out
}

pub(super) fn print_stmt_standalone(prog: &Program, id: NodeId, rename: Rename<'_>) -> String {
    let mut out = String::new();
    match prog.kind(id) {
        Kind::Block { .. } => block(prog, id, 0, &mut out, rename),
        _ => stmt(prog, id, 0, &mut out, rename),
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn block(prog: &Program, id: NodeId, depth: usize, out: &mut String, rename: Rename<'_>) {
    let Kind::Block { stmts } = prog.kind(id) else {
        unreachable!("expected block")
    };
    out.push_str("{\n");
    for s in stmts {
        stmt(prog, *s, depth + 1, out, rename);
    }
    indent(out, depth);
    out.push('}');
}

fn stmt(prog: &Program, id: NodeId, depth: usize, out: &mut String, rename: Rename<'_>) {
    indent(out, depth);
    match prog.kind(id) {
        Kind::Decl { shared, var } => {
            let kw = if *shared { "shared" } else { "private" };
            let _ = write!(out, "{kw} {};", rename(var));
        }
        Kind::Assign { lhs, rhs } => {
            match lhs {
                Lhs::Var(v) => out.push_str(&rename(v)),
                Lhs::Deref(v) => {
                    out.push('*');
                    out.push_str(&rename(v));
                }
            }
            out.push_str(" = ");
            expr(rhs, 0, out, rename);
            out.push(';');
        }
        Kind::If { cond, then_b, else_b } => {
            out.push_str("if (");
            expr(cond, 0, out, rename);
            out.push_str(") ");
            block(prog, *then_b, depth, out, rename);
            if let Some(e) = else_b {
                out.push_str(" else ");
                block(prog, *e, depth, out, rename);
            }
        }
        Kind::While { cond, body } => {
            out.push_str("while (");
            expr(cond, 0, out, rename);
            out.push_str(") ");
            block(prog, *body, depth, out, rename);
        }
        Kind::Parallel { body, .. } => {
            out.push_str("parallel ");
            block(prog, *body, depth, out, rename);
        }
        Kind::Block { .. } => block(prog, id, depth, out, rename),
        Kind::Barrier => out.push_str("barrier;"),
        Kind::Flush => out.push_str("flush;"),
        Kind::Call { callee } => {
            let _ = write!(out, "call {callee}();");
        }
        Kind::Return => out.push_str("return;"),
        Kind::Entry { .. } | Kind::Exit => unreachable!("function boundary printed as statement"),
    }
    out.push('\n');
}

fn level(op: BinOp) -> u8 {
    match op {
        BinOp::Lt | BinOp::Eq => 1,
        BinOp::Add | BinOp::Sub => 2,
    }
}

/// `min` is the lowest operator level that may appear unparenthesized.
fn expr(e: &Expr, min: u8, out: &mut String, rename: Rename<'_>) {
    match e {
        Expr::Int(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Var(v) => out.push_str(&rename(v)),
        Expr::AddrOf(v) => {
            out.push('&');
            out.push_str(&rename(v));
        }
        Expr::Deref(v) => {
            out.push('*');
            out.push_str(&rename(v));
        }
        Expr::Bin(a, op, b) => {
            let l = level(*op);
            let paren = l < min;
            if paren {
                out.push('(');
            }
            expr(a, l, out, rename);
            let _ = write!(out, " {} ", op.symbol());
            expr(b, l + 1, out, rename);
            if paren {
                out.push(')');
            }
        }
    }
}
