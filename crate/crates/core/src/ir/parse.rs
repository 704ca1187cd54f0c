use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{BinOp, Expr, Kind, Lhs, NodeId, Program, Var};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

fn err<T>(pos: Pos, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line: pos.0,
        col: pos.1,
        msg: msg.into(),
    })
}

type Pos = (usize, usize);

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
    Eof,
}

const SYMBOLS: [&str; 12] = ["==", "{", "}", "(", ")", ";", "=", "&", "*", "+", "-", "<"];

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let pos = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            out.push((Tok::Ident(s), pos));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            let v = s.parse::<i64>().map_err(|_| ParseError {
                line: pos.0,
                col: pos.1,
                msg: format!("integer literal out of range: {s}"),
            })?;
            out.push((Tok::Int(v), pos));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(s) => {
                i += s.len();
                col += s.len();
                out.push((Tok::Sym(s), pos));
            }
            None => return err(pos, format!("unexpected character '{c}'")),
        }
    }
    out.push((Tok::Eof, (line, col)));
    Ok(out)
}

#[derive(Debug, Clone)]
enum SExpr {
    Int(i64),
    Var(String),
    Addr(String),
    Deref(String),
    Bin(Box<SExpr>, BinOp, Box<SExpr>),
}

#[derive(Debug, Clone)]
enum SStmt {
    Decl { shared: bool, name: String },
    Assign { deref: bool, name: String, rhs: SExpr },
    If { cond: SExpr, then_b: Vec<(SStmt, Pos)>, else_b: Option<Vec<(SStmt, Pos)>> },
    While { cond: SExpr, body: Vec<(SStmt, Pos)> },
    Parallel(Vec<(SStmt, Pos)>),
    Barrier,
    Flush,
    Call(String),
    Return,
}

/// Name, body statements and position of one parsed function.
type RawFunction = (String, Vec<(SStmt, Pos)>, Pos);

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn expect_sym(&mut self, s: &'static str) -> Result<(), ParseError> {
        if self.peek() == &Tok::Sym(s) {
            self.bump();
            Ok(())
        } else {
            err(self.pos(), format!("expected '{s}', found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(s)
            }
            t => err(self.pos(), format!("expected identifier, found {}", describe(&t))),
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn functions(&mut self) -> Result<Vec<RawFunction>, ParseError> {
        let mut out = Vec::new();
        loop {
            if self.peek() == &Tok::Eof {
                break;
            }
            let pos = self.pos();
            if !self.is_kw("func") {
                return err(pos, format!("expected 'func', found {}", describe(self.peek())));
            }
            self.bump();
            let name = self.ident()?;
            self.expect_sym("(")?;
            self.expect_sym(")")?;
            let body = self.block()?;
            out.push((name, body, pos));
        }
        if out.is_empty() {
            return err(self.pos(), "program has no functions");
        }
        Ok(out)
    }

    fn block(&mut self) -> Result<Vec<(SStmt, Pos)>, ParseError> {
        self.expect_sym("{")?;
        let mut stmts = Vec::new();
        while self.peek() != &Tok::Sym("}") {
            if self.peek() == &Tok::Eof {
                return err(self.pos(), "unexpected end of input, expected '}'");
            }
            stmts.push(self.stmt()?);
        }
        self.bump();
        Ok(stmts)
    }

    fn stmt_list_until_eof(&mut self) -> Result<Vec<(SStmt, Pos)>, ParseError> {
        let mut stmts = Vec::new();
        while self.peek() != &Tok::Eof {
            stmts.push(self.stmt()?);
        }
        Ok(stmts)
    }

    fn stmt(&mut self) -> Result<(SStmt, Pos), ParseError> {
        let pos = self.pos();
        let s = match self.peek().clone() {
            Tok::Ident(kw) if kw == "shared" || kw == "private" => {
                self.bump();
                let name = self.ident()?;
                self.expect_sym(";")?;
                SStmt::Decl {
                    shared: kw == "shared",
                    name,
                }
            }
            Tok::Ident(kw) if kw == "if" => {
                self.bump();
                self.expect_sym("(")?;
                let cond = self.expr()?;
                self.expect_sym(")")?;
                let then_b = self.block()?;
                let else_b = if self.is_kw("else") {
                    self.bump();
                    Some(self.block()?)
                } else {
                    None
                };
                SStmt::If { cond, then_b, else_b }
            }
            Tok::Ident(kw) if kw == "while" => {
                self.bump();
                self.expect_sym("(")?;
                let cond = self.expr()?;
                self.expect_sym(")")?;
                SStmt::While {
                    cond,
                    body: self.block()?,
                }
            }
            Tok::Ident(kw) if kw == "parallel" => {
                self.bump();
                SStmt::Parallel(self.block()?)
            }
            Tok::Ident(kw) if kw == "barrier" || kw == "flush" || kw == "return" => {
                self.bump();
                self.expect_sym(";")?;
                match kw.as_str() {
                    "barrier" => SStmt::Barrier,
                    "flush" => SStmt::Flush,
                    _ => SStmt::Return,
                }
            }
            Tok::Ident(kw) if kw == "call" => {
                self.bump();
                let name = self.ident()?;
                self.expect_sym("(")?;
                self.expect_sym(")")?;
                self.expect_sym(";")?;
                SStmt::Call(name)
            }
            Tok::Sym("*") => {
                self.bump();
                let name = self.ident()?;
                self.expect_sym("=")?;
                let rhs = self.expr()?;
                self.expect_sym(";")?;
                SStmt::Assign {
                    deref: true,
                    name,
                    rhs,
                }
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                self.expect_sym("=")?;
                let rhs = self.expr()?;
                self.expect_sym(";")?;
                SStmt::Assign {
                    deref: false,
                    name,
                    rhs,
                }
            }
            t => return err(pos, format!("expected statement, found {}", describe(&t))),
        };
        Ok((s, pos))
    }

    // Comparisons bind looser than additive operators; both are left-associative.
    fn expr(&mut self) -> Result<SExpr, ParseError> {
        let mut lhs = self.additive()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("<") => BinOp::Lt,
                Tok::Sym("==") => BinOp::Eq,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.additive()?;
            lhs = SExpr::Bin(Box::new(lhs), op, Box::new(rhs));
        }
    }

    fn additive(&mut self) -> Result<SExpr, ParseError> {
        let mut lhs = self.atom()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.atom()?;
            lhs = SExpr::Bin(Box::new(lhs), op, Box::new(rhs));
        }
    }

    fn atom(&mut self) -> Result<SExpr, ParseError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(SExpr::Int(v))
            }
            Tok::Sym("&") => {
                self.bump();
                Ok(SExpr::Addr(self.ident()?))
            }
            Tok::Sym("*") => {
                self.bump();
                Ok(SExpr::Deref(self.ident()?))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(_) => Ok(SExpr::Var(self.ident()?)),
            t => err(self.pos(), format!("expected expression, found {}", describe(&t))),
        }
    }
}

fn is_keyword(s: &str) -> bool {
    matches!(
        s,
        "func" | "shared" | "private" | "if" | "else" | "while" | "parallel" | "barrier"
            | "flush" | "call" | "return"
    )
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Int(v) => format!("'{v}'"),
        Tok::Sym(s) => format!("'{s}'"),
        Tok::Eof => "end of input".to_string(),
    }
}

struct Scope<'a> {
    functions: &'a BTreeSet<String>,
}

fn collect_decls(
    stmts: &[(SStmt, Pos)],
    shared: &mut BTreeMap<String, Pos>,
    private: &mut BTreeMap<String, Pos>,
    declared: &mut BTreeSet<String>,
) -> Result<(), ParseError> {
    for (s, pos) in stmts {
        match s {
            SStmt::Decl { shared: sh, name } => {
                if !declared.insert(name.clone()) {
                    return err(*pos, format!("redeclared variable '{name}'"));
                }
                if *sh {
                    shared.entry(name.clone()).or_insert(*pos);
                } else {
                    private.entry(name.clone()).or_insert(*pos);
                }
            }
            SStmt::If { then_b, else_b, .. } => {
                collect_decls(then_b, shared, private, declared)?;
                if let Some(e) = else_b {
                    collect_decls(e, shared, private, declared)?;
                }
            }
            SStmt::While { body, .. } | SStmt::Parallel(body) => {
                collect_decls(body, shared, private, declared)?
            }
            _ => {}
        }
    }
    Ok(())
}

fn check_structure(
    stmts: &[(SStmt, Pos)],
    in_parallel: bool,
    scope: &Scope<'_>,
    calls: &mut Vec<(String, bool)>,
) -> Result<(), ParseError> {
    for (s, pos) in stmts {
        match s {
            SStmt::Parallel(body) => {
                if in_parallel {
                    return err(*pos, "nested parallel regions are not supported");
                }
                check_structure(body, true, scope, calls)?;
            }
            SStmt::Return if in_parallel => {
                return err(*pos, "return inside a parallel region");
            }
            SStmt::Call(name) => {
                if !scope.functions.contains(name) {
                    return err(*pos, format!("unresolved callee '{name}'"));
                }
                calls.push((name.clone(), in_parallel));
            }
            SStmt::If { then_b, else_b, .. } => {
                check_structure(then_b, in_parallel, scope, calls)?;
                if let Some(e) = else_b {
                    check_structure(e, in_parallel, scope, calls)?;
                }
            }
            SStmt::While { body, .. } => check_structure(body, in_parallel, scope, calls)?,
            _ => {}
        }
    }
    Ok(())
}

fn has_parallel(stmts: &[(SStmt, Pos)]) -> bool {
    stmts.iter().any(|(s, _)| match s {
        SStmt::Parallel(_) => true,
        SStmt::If { then_b, else_b, .. } => {
            has_parallel(then_b) || else_b.as_deref().is_some_and(has_parallel)
        }
        SStmt::While { body, .. } => has_parallel(body),
        _ => false,
    })
}

pub(super) fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        i: 0,
    };
    let funcs = p.functions()?;

    let mut names = BTreeSet::new();
    for (name, _, pos) in &funcs {
        if !names.insert(name.clone()) {
            return err(*pos, format!("duplicate function '{name}'"));
        }
    }
    if !names.contains("main") {
        return err((1, 1), "no entry function 'main'");
    }

    let mut shared = BTreeMap::new();
    let mut private_all: BTreeMap<String, Pos> = BTreeMap::new();
    let mut call_graph: BTreeMap<String, Vec<(String, bool)>> = BTreeMap::new();
    for (name, body, _) in &funcs {
        let mut private = BTreeMap::new();
        let mut declared = BTreeSet::new();
        collect_decls(body, &mut shared, &mut private, &mut declared)?;
        for (v, pos) in private {
            private_all.entry(v).or_insert(pos);
        }
        let scope = Scope { functions: &names };
        let mut calls = Vec::new();
        check_structure(body, false, &scope, &mut calls)?;
        call_graph.insert(name.clone(), calls);
    }
    for (v, pos) in &private_all {
        if shared.contains_key(v) {
            return err(*pos, format!("variable '{v}' declared both shared and private"));
        }
    }

    // A function reachable from inside a region must not open its own region.
    let bodies: BTreeMap<&str, &Vec<(SStmt, Pos)>> =
        funcs.iter().map(|(n, b, _)| (n.as_str(), b)).collect();
    let mut stack: Vec<String> = call_graph
        .values()
        .flatten()
        .filter(|(_, in_par)| *in_par)
        .map(|(c, _)| c.clone())
        .collect();
    let mut seen = BTreeSet::new();
    while let Some(f) = stack.pop() {
        if !seen.insert(f.clone()) {
            continue;
        }
        if has_parallel(bodies[f.as_str()]) {
            let pos = funcs.iter().find(|(n, _, _)| *n == f).unwrap().2;
            return err(pos, format!("function '{f}' opens a parallel region but is called from one"));
        }
        stack.extend(call_graph[&f].iter().map(|(c, _)| c.clone()));
    }

    let mut prog = Program::empty();
    prog.entry_function = "main".to_string();
    prog.shared_names = shared.keys().cloned().collect();
    for (name, body, _) in &funcs {
        let entry = prog.alloc(Kind::Exit);
        let block = materialize_block(&mut prog, name, body);
        let exit = prog.alloc(Kind::Exit);
        prog.nodes.get_mut(&entry).unwrap().kind = Kind::Entry {
            func: name.clone(),
            body: block,
            exit,
        };
        prog.nodes.get_mut(&block).unwrap().parent = Some(entry);
        prog.nodes.get_mut(&exit).unwrap().parent = Some(entry);
        prog.functions.insert(name.clone(), entry);
    }
    Ok(prog)
}

pub(super) fn build_detached(
    prog: &mut Program,
    func: &str,
    text: &str,
) -> Result<Vec<NodeId>, ParseError> {
    if !prog.functions.contains_key(func) {
        return err((1, 1), format!("unknown function '{func}'"));
    }
    let mut p = Parser {
        toks: lex(text)?,
        i: 0,
    };
    let stmts = p.stmt_list_until_eof()?;

    let mut shared = BTreeMap::new();
    let mut private = BTreeMap::new();
    let mut declared = BTreeSet::new();
    collect_decls(&stmts, &mut shared, &mut private, &mut declared)?;

    let existing: BTreeSet<String> = match prog.function_body(func) {
        Some(body) => prog
            .subtree(body)
            .into_iter()
            .filter_map(|n| match prog.kind(n) {
                Kind::Decl { var, .. } => Some(var.name.clone()),
                _ => None,
            })
            .collect(),
        None => BTreeSet::new(),
    };
    for (name, pos) in shared.iter().chain(private.iter()) {
        if existing.contains(name) {
            return err(*pos, format!("redeclared variable '{name}'"));
        }
    }
    for (name, pos) in &shared {
        let used_private = prog
            .loc_index
            .keys()
            .any(|(f, n)| f.is_some() && n == name);
        if used_private {
            return err(*pos, format!("variable '{name}' declared both shared and private"));
        }
    }
    for (name, pos) in &private {
        if prog.shared_names.contains(name) || shared.contains_key(name) {
            return err(*pos, format!("variable '{name}' declared both shared and private"));
        }
    }

    let functions: BTreeSet<String> = prog.functions.keys().cloned().collect();
    let scope = Scope {
        functions: &functions,
    };
    let mut calls = Vec::new();
    check_structure(&stmts, false, &scope, &mut calls)?;

    prog.shared_names.extend(shared.into_keys());
    Ok(stmts
        .iter()
        .map(|(s, _)| materialize(prog, func, s))
        .collect())
}

fn materialize_block(prog: &mut Program, func: &str, stmts: &[(SStmt, Pos)]) -> NodeId {
    let block = prog.alloc(Kind::Block { stmts: Vec::new() });
    let ids: Vec<NodeId> = stmts
        .iter()
        .map(|(s, _)| materialize(prog, func, s))
        .collect();
    for id in &ids {
        prog.nodes.get_mut(id).unwrap().parent = Some(block);
    }
    prog.nodes.get_mut(&block).unwrap().kind = Kind::Block { stmts: ids };
    block
}

fn var(prog: &mut Program, func: &str, name: &str) -> Var {
    Var {
        name: name.to_string(),
        loc: prog.intern(func, name),
    }
}

fn expr(prog: &mut Program, func: &str, e: &SExpr) -> Expr {
    match e {
        SExpr::Int(v) => Expr::Int(*v),
        SExpr::Var(n) => Expr::Var(var(prog, func, n)),
        SExpr::Addr(n) => Expr::AddrOf(var(prog, func, n)),
        SExpr::Deref(n) => Expr::Deref(var(prog, func, n)),
        SExpr::Bin(a, op, b) => Expr::Bin(
            Box::new(expr(prog, func, a)),
            *op,
            Box::new(expr(prog, func, b)),
        ),
    }
}

fn set_parent(prog: &mut Program, child: NodeId, parent: NodeId) {
    prog.nodes.get_mut(&child).unwrap().parent = Some(parent);
}

fn materialize(prog: &mut Program, func: &str, s: &SStmt) -> NodeId {
    match s {
        SStmt::Decl { shared, name } => {
            let v = var(prog, func, name);
            prog.alloc(Kind::Decl {
                shared: *shared,
                var: v,
            })
        }
        SStmt::Assign { deref, name, rhs } => {
            let v = var(prog, func, name);
            let lhs = if *deref { Lhs::Deref(v) } else { Lhs::Var(v) };
            let rhs = expr(prog, func, rhs);
            prog.alloc(Kind::Assign { lhs, rhs })
        }
        SStmt::If { cond, then_b, else_b } => {
            let cond = expr(prog, func, cond);
            let id = prog.alloc(Kind::Barrier);
            let t = materialize_block(prog, func, then_b);
            let e = else_b.as_ref().map(|e| materialize_block(prog, func, e));
            set_parent(prog, t, id);
            if let Some(e) = e {
                set_parent(prog, e, id);
            }
            prog.nodes.get_mut(&id).unwrap().kind = Kind::If {
                cond,
                then_b: t,
                else_b: e,
            };
            id
        }
        SStmt::While { cond, body } => {
            let cond = expr(prog, func, cond);
            let id = prog.alloc(Kind::Barrier);
            let b = materialize_block(prog, func, body);
            set_parent(prog, b, id);
            prog.nodes.get_mut(&id).unwrap().kind = Kind::While { cond, body: b };
            id
        }
        SStmt::Parallel(body) => {
            let id = prog.alloc(Kind::Barrier);
            let entry = prog.alloc(Kind::Barrier);
            let b = materialize_block(prog, func, body);
            let exit = prog.alloc(Kind::Barrier);
            for c in [entry, b, exit] {
                set_parent(prog, c, id);
            }
            prog.nodes.get_mut(&id).unwrap().kind = Kind::Parallel { entry, body: b, exit };
            id
        }
        SStmt::Barrier => prog.alloc(Kind::Barrier),
        SStmt::Flush => prog.alloc(Kind::Flush),
        SStmt::Call(name) => prog.alloc(Kind::Call {
            callee: name.clone(),
        }),
        SStmt::Return => prog.alloc(Kind::Return),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::KindTag;

    #[test]
    fn minimal_program_has_one_assign() {
        let p = Program::parse("func main(){ x = 1; }").unwrap();
        assert_eq!(p.nodes_of(KindTag::Assign).len(), 1);
        assert_eq!(p.entry_function(), "main");
    }

    #[test]
    fn parallel_body_shape() {
        let p = Program::parse("func main(){ parallel { barrier; flush; y = x; } }").unwrap();
        let par = p.nodes_of(KindTag::Parallel)[0];
        let Kind::Parallel { entry, body, exit } = p.kind(par) else {
            unreachable!()
        };
        assert_eq!(p.kind(*entry).tag(), KindTag::Barrier);
        assert_eq!(p.kind(*exit).tag(), KindTag::Barrier);
        let Kind::Block { stmts } = p.kind(*body) else {
            unreachable!()
        };
        let tags: Vec<_> = stmts.iter().map(|s| p.kind(*s).tag()).collect();
        assert_eq!(tags, [KindTag::Barrier, KindTag::Flush, KindTag::Assign]);
        let again = Program::parse(&p.print()).unwrap();
        assert_eq!(again.print(), p.print());
    }

    #[test]
    fn unresolved_callee() {
        let e = Program::parse("func main(){ call f(); }").unwrap_err();
        assert!(e.msg.contains("unresolved callee"), "{e}");
        assert_eq!((e.line, e.col), (1, 14));
    }

    #[test]
    fn redeclaration_is_rejected() {
        let e = Program::parse("func main(){ private x; private x; }").unwrap_err();
        assert!(e.msg.contains("redeclared"));
    }

    #[test]
    fn syntax_error_reports_position() {
        let e = Program::parse("func main(){\n  x = ;\n}").unwrap_err();
        assert_eq!((e.line, e.col), (2, 7));
    }

    #[test]
    fn nested_parallel_rejected() {
        assert!(Program::parse("func main(){ parallel { parallel { } } }").is_err());
        assert!(Program::parse("func f(){ parallel { } } func main(){ parallel { call f(); } }").is_err());
    }

    #[test]
    fn return_in_region_rejected() {
        assert!(Program::parse("func main(){ parallel { return; } }").is_err());
    }

    #[test]
    fn shared_and_private_resolution() {
        let p = Program::parse("func main(){ shared s; private t; s = t; u = &s; } func g(){ t = s; }").unwrap();
        let s = p.lookup_loc("main", "s").unwrap();
        assert!(s.shared);
        assert_eq!(p.lookup_loc("g", "s"), Some(s));
        let t_main = p.lookup_loc("main", "t").unwrap();
        let t_g = p.lookup_loc("g", "t").unwrap();
        assert!(!t_main.shared);
        assert_ne!(t_main, t_g);
        assert!(p.address_taken().contains(&s));
    }

    #[test]
    fn comments_and_precedence() {
        let p = Program::parse("func main(){ // c\n x = 1 + 2 < 3 - 4 == 0; }").unwrap();
        assert_eq!(Program::parse(&p.print()).unwrap().print(), p.print());
        assert!(p.print().contains("x = 1 + 2 < 3 - 4 == 0;"));
    }

    #[test]
    fn detached_statements_get_fresh_ids() {
        let mut p = Program::parse("func main(){ x = 1; }").unwrap();
        let before = p.print();
        let bound = p.id_bound();
        let ids = p.build_stmts("main", "y = 2; barrier;").unwrap();
        assert!(ids.iter().all(|i| i.0 >= bound));
        assert!(ids.iter().all(|i| !p.is_attached(*i)));
        assert_eq!(p.print(), before);
        assert!(p.build_stmts("main", "call nope();").is_err());
    }
}
