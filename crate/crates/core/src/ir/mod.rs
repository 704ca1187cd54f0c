//! Mini-language AST.
//!
//! Nodes live in an arena owned by [`Program`] and are addressed by
//! [`NodeId`]s drawn from a monotone counter, so an id is never handed out
//! twice. Nodes detached by a transformation stay in the arena and may be
//! re-attached later; that is what makes "remove then re-insert" a no-op for
//! net-change accounting.
//!
//! Every read accessor is public. Every mutator is `pub(crate)` and is only
//! called from [`crate::Homeostasis::transform`].

mod parse;
mod print;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use parse::ParseError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Abstract memory location: one per declared variable.
///
/// Shared variables are program-global; private variables are scoped to the
/// function that mentions them. The sharing attribute is fixed when the
/// location is interned, so the flow-map partition can be read off the key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Loc {
    pub id: u32,
    pub shared: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocInfo {
    pub name: String,
    /// `None` for shared locations.
    pub func: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Var {
    pub name: String,
    pub loc: Loc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Lt,
    Eq,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Lt => "<",
            BinOp::Eq => "==",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    Var(Var),
    AddrOf(Var),
    Deref(Var),
    Bin(Box<Expr>, BinOp, Box<Expr>),
}

impl Expr {
    /// Calls `f` on every variable occurrence together with how it is used.
    pub fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a Var, VarUse)) {
        match self {
            Expr::Int(_) => {}
            Expr::Var(v) => f(v, VarUse::Read),
            Expr::AddrOf(v) => f(v, VarUse::AddressOf),
            Expr::Deref(v) => f(v, VarUse::Deref),
            Expr::Bin(a, _, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarUse {
    Read,
    AddressOf,
    Deref,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Lhs {
    Var(Var),
    Deref(Var),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Kind {
    /// Root of a function. Owns the body block and the exit node.
    Entry { func: String, body: NodeId, exit: NodeId },
    Exit,
    Decl { shared: bool, var: Var },
    Assign { lhs: Lhs, rhs: Expr },
    If { cond: Expr, then_b: NodeId, else_b: Option<NodeId> },
    While { cond: Expr, body: NodeId },
    Block { stmts: Vec<NodeId> },
    /// `entry` and `exit` are the region's implicit barriers, materialized.
    Parallel { entry: NodeId, body: NodeId, exit: NodeId },
    Barrier,
    Flush,
    Call { callee: String },
    Return,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KindTag {
    Entry,
    Exit,
    Decl,
    Assign,
    If,
    While,
    Block,
    Parallel,
    Barrier,
    Flush,
    Call,
    Return,
}

impl Kind {
    pub fn tag(&self) -> KindTag {
        match self {
            Kind::Entry { .. } => KindTag::Entry,
            Kind::Exit => KindTag::Exit,
            Kind::Decl { .. } => KindTag::Decl,
            Kind::Assign { .. } => KindTag::Assign,
            Kind::If { .. } => KindTag::If,
            Kind::While { .. } => KindTag::While,
            Kind::Block { .. } => KindTag::Block,
            Kind::Parallel { .. } => KindTag::Parallel,
            Kind::Barrier => KindTag::Barrier,
            Kind::Flush => KindTag::Flush,
            Kind::Call { .. } => KindTag::Call,
            Kind::Return => KindTag::Return,
        }
    }

    /// Child node ids in slot order.
    pub fn children(&self) -> Vec<NodeId> {
        match self {
            Kind::Entry { body, exit, .. } => vec![*body, *exit],
            Kind::If { then_b, else_b, .. } => {
                let mut v = vec![*then_b];
                v.extend(else_b.iter().copied());
                v
            }
            Kind::While { body, .. } => vec![*body],
            Kind::Block { stmts } => stmts.clone(),
            Kind::Parallel { entry, body, exit } => vec![*entry, *body, *exit],
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub kind: Kind,
}

/// Named child position of a body-bearing node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    /// Statement list of a `Block`.
    Stmts,
    /// Body block of a `While` or `Parallel`.
    Body,
    Then,
    Else,
}

#[derive(Clone, Debug)]
pub struct Program {
    nodes: HashMap<NodeId, Node>,
    functions: BTreeMap<String, NodeId>,
    entry_function: String,
    next_id: u32,
    locs: Vec<LocInfo>,
    loc_index: HashMap<(Option<String>, String), Loc>,
    shared_names: BTreeSet<String>,
}

impl Program {
    pub fn parse(text: &str) -> Result<Program, ParseError> {
        parse::parse_program(text)
    }

    /// Canonical source text. `parse(print(p))` prints identically.
    pub fn print(&self) -> String {
        print::print_program(self)
    }

    pub fn print_node(&self, id: NodeId) -> String {
        print::print_stmt_standalone(self, id, &|v| v.name.clone())
    }

    /// Prints a statement with every variable spelled by `rename`.
    pub fn print_node_renamed(&self, id: NodeId, rename: &dyn Fn(&Var) -> String) -> String {
        print::print_stmt_standalone(self, id, rename)
    }

    fn empty() -> Program {
        Program {
            nodes: HashMap::new(),
            functions: BTreeMap::new(),
            entry_function: String::new(),
            next_id: 0,
            locs: Vec::new(),
            loc_index: HashMap::new(),
            shared_names: BTreeSet::new(),
        }
    }

    pub fn node(&self, id: NodeId) -> &Node {
        self.nodes
            .get(&id)
            .unwrap_or_else(|| panic!("unknown node {id}"))
    }

    pub fn get(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn kind(&self, id: NodeId) -> &Kind {
        &self.node(id).kind
    }

    pub fn functions(&self) -> &BTreeMap<String, NodeId> {
        &self.functions
    }

    pub fn function_entry(&self, name: &str) -> Option<NodeId> {
        self.functions.get(name).copied()
    }

    pub fn function_body(&self, name: &str) -> Option<NodeId> {
        match self.function_entry(name).map(|e| self.kind(e)) {
            Some(Kind::Entry { body, .. }) => Some(*body),
            _ => None,
        }
    }

    pub fn function_exit(&self, name: &str) -> Option<NodeId> {
        match self.function_entry(name).map(|e| self.kind(e)) {
            Some(Kind::Entry { exit, .. }) => Some(*exit),
            _ => None,
        }
    }

    pub fn entry_function(&self) -> &str {
        &self.entry_function
    }

    pub fn shared_names(&self) -> &BTreeSet<String> {
        &self.shared_names
    }

    pub fn loc_info(&self, loc: Loc) -> &LocInfo {
        &self.locs[loc.id as usize]
    }

    pub fn loc_name(&self, loc: Loc) -> String {
        let info = self.loc_info(loc);
        match &info.func {
            Some(f) => format!("{f}::{}", info.name),
            None => info.name.clone(),
        }
    }

    /// Every location interned so far, in creation order.
    pub fn locs(&self) -> impl Iterator<Item = Loc> + '_ {
        self.locs.iter().enumerate().map(|(i, info)| Loc {
            id: i as u32,
            shared: info.func.is_none(),
        })
    }

    pub fn lookup_loc(&self, func: &str, name: &str) -> Option<Loc> {
        let key = if self.shared_names.contains(name) {
            (None, name.to_string())
        } else {
            (Some(func.to_string()), name.to_string())
        };
        self.loc_index.get(&key).copied()
    }

    fn intern(&mut self, func: &str, name: &str) -> Loc {
        let shared = self.shared_names.contains(name);
        let key = if shared {
            (None, name.to_string())
        } else {
            (Some(func.to_string()), name.to_string())
        };
        if let Some(l) = self.loc_index.get(&key) {
            return *l;
        }
        let loc = Loc {
            id: self.locs.len() as u32,
            shared,
        };
        self.locs.push(LocInfo {
            name: name.to_string(),
            func: key.0.clone(),
        });
        self.loc_index.insert(key, loc);
        loc
    }

    fn alloc(&mut self, kind: Kind) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.insert(
            id,
            Node {
                id,
                parent: None,
                kind,
            },
        );
        id
    }

    /// Upper bound (exclusive) on ids handed out so far.
    pub fn id_bound(&self) -> u32 {
        self.next_id
    }

    /// Parses statements in the scope of `func` into fresh, detached nodes.
    ///
    /// The attached program is left untouched; the returned roots can be
    /// passed as payloads to [`crate::Homeostasis::transform`].
    pub fn build_stmts(&mut self, func: &str, text: &str) -> Result<Vec<NodeId>, ParseError> {
        parse::build_detached(self, func, text)
    }

    /// Like [`Program::build_stmts`] but wraps the statements in a detached `Block`.
    pub fn build_block(&mut self, func: &str, text: &str) -> Result<NodeId, ParseError> {
        let stmts = self.build_stmts(func, text)?;
        let block = self.alloc(Kind::Block {
            stmts: stmts.clone(),
        });
        for s in stmts {
            self.nodes.get_mut(&s).unwrap().parent = Some(block);
        }
        Ok(block)
    }

    /// True if `id` hangs (transitively) off a registered function entry.
    pub fn is_attached(&self, id: NodeId) -> bool {
        let mut cur = id;
        loop {
            let node = match self.nodes.get(&cur) {
                Some(n) => n,
                None => return false,
            };
            match node.parent {
                Some(p) => cur = p,
                None => {
                    return matches!(&node.kind, Kind::Entry { func, .. }
                        if self.functions.get(func) == Some(&cur))
                }
            }
        }
    }

    /// Name of the function containing an attached node.
    pub fn function_of(&self, id: NodeId) -> Option<&str> {
        let mut cur = id;
        loop {
            let node = self.nodes.get(&cur)?;
            match node.parent {
                Some(p) => cur = p,
                None => {
                    return match &node.kind {
                        Kind::Entry { func, .. } => Some(func.as_str()),
                        _ => None,
                    }
                }
            }
        }
    }

    /// Nearest enclosing `Parallel` node, if any.
    pub fn enclosing_parallel(&self, id: NodeId) -> Option<NodeId> {
        let mut cur = self.nodes.get(&id)?.parent;
        while let Some(p) = cur {
            let node = self.node(p);
            if matches!(node.kind, Kind::Parallel { .. }) {
                return Some(p);
            }
            cur = node.parent;
        }
        None
    }

    /// Pre-order list of `root` and all its descendants.
    pub fn subtree(&self, root: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            out.push(n);
            let children = self.node(n).kind.children();
            stack.extend(children.into_iter().rev());
        }
        out
    }

    pub fn subtree_contains(&self, root: NodeId, pred: impl Fn(&Kind) -> bool) -> bool {
        self.subtree(root).into_iter().any(|n| pred(self.kind(n)))
    }

    /// All attached node ids, sorted.
    pub fn attached_nodes(&self) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self
            .functions
            .values()
            .flat_map(|e| self.subtree(*e))
            .collect();
        v.sort();
        v
    }

    /// Attached nodes of a given kind, sorted by id.
    pub fn nodes_of(&self, tag: KindTag) -> Vec<NodeId> {
        self.attached_nodes()
            .into_iter()
            .filter(|n| self.kind(*n).tag() == tag)
            .collect()
    }

    /// Locations named anywhere in the attached program. Unlike `locs`, this
    /// ignores variables that only occur in detached or never-attached code.
    pub fn referenced_locs(&self) -> BTreeSet<Loc> {
        let mut out = BTreeSet::new();
        for n in self.attached_nodes() {
            match self.kind(n) {
                Kind::Decl { var, .. } => {
                    out.insert(var.loc);
                }
                Kind::Assign { lhs, rhs } => {
                    let (Lhs::Var(v) | Lhs::Deref(v)) = lhs;
                    out.insert(v.loc);
                    rhs.visit_vars(&mut |v, _| {
                        out.insert(v.loc);
                    });
                }
                Kind::If { cond, .. } | Kind::While { cond, .. } => cond.visit_vars(&mut |v, _| {
                    out.insert(v.loc);
                }),
                _ => {}
            }
        }
        out
    }

    /// Locations whose address is taken somewhere in the attached program.
    pub fn address_taken(&self) -> BTreeSet<Loc> {
        let mut out = BTreeSet::new();
        for n in self.attached_nodes() {
            match self.kind(n) {
                Kind::Assign { rhs, .. } => rhs.visit_vars(&mut |v, u| {
                    if u == VarUse::AddressOf {
                        out.insert(v.loc);
                    }
                }),
                Kind::If { cond, .. } | Kind::While { cond, .. } => cond.visit_vars(&mut |v, u| {
                    if u == VarUse::AddressOf {
                        out.insert(v.loc);
                    }
                }),
                _ => {}
            }
        }
        out
    }

    /// Index of `child` within its parent's slot, with the slot.
    pub fn position(&self, child: NodeId) -> Option<(NodeId, Slot, Option<usize>)> {
        let parent = self.node(child).parent?;
        let slot = match &self.kind(parent) {
            Kind::Block { stmts } => {
                let i = stmts.iter().position(|s| *s == child)?;
                return Some((parent, Slot::Stmts, Some(i)));
            }
            Kind::While { .. } | Kind::Parallel { .. } => Slot::Body,
            Kind::If { then_b, .. } if *then_b == child => Slot::Then,
            Kind::If { .. } => Slot::Else,
            _ => return None,
        };
        Some((parent, slot, None))
    }

    // ---- crate-private mutators, used only by elementary transformations ----

    pub(crate) fn insert_stmt(&mut self, block: NodeId, index: usize, stmt: NodeId) {
        match &mut self.nodes.get_mut(&block).unwrap().kind {
            Kind::Block { stmts } => stmts.insert(index, stmt),
            other => panic!("insert_stmt on {:?}", other.tag()),
        }
        self.nodes.get_mut(&stmt).unwrap().parent = Some(block);
    }

    pub(crate) fn remove_stmt(&mut self, block: NodeId, index: usize) -> NodeId {
        let old = match &mut self.nodes.get_mut(&block).unwrap().kind {
            Kind::Block { stmts } => stmts.remove(index),
            other => panic!("remove_stmt on {:?}", other.tag()),
        };
        self.nodes.get_mut(&old).unwrap().parent = None;
        old
    }

    /// Replaces a single-node slot; returns the previous occupant.
    pub(crate) fn replace_slot(
        &mut self,
        host: NodeId,
        slot: Slot,
        new: Option<NodeId>,
    ) -> Option<NodeId> {
        let old = {
            let kind = &mut self.nodes.get_mut(&host).unwrap().kind;
            match (kind, slot) {
                (Kind::While { body, .. }, Slot::Body)
                | (Kind::Parallel { body, .. }, Slot::Body)
                | (Kind::If { then_b: body, .. }, Slot::Then) => {
                    let new = new.expect("slot requires a node");
                    Some(std::mem::replace(body, new))
                }
                (Kind::If { else_b, .. }, Slot::Else) => std::mem::replace(else_b, new),
                (k, s) => panic!("replace_slot {s:?} on {:?}", k.tag()),
            }
        };
        if let Some(o) = old {
            self.nodes.get_mut(&o).unwrap().parent = None;
        }
        if let Some(n) = new {
            self.nodes.get_mut(&n).unwrap().parent = Some(host);
        }
        old
    }
}
