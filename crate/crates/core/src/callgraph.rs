//! Call graph over function names.

use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use crate::changelog::NetChange;
use crate::ir::{Kind, NodeId, Program};
use crate::scc::SccIndex;
use crate::stabilizer::{Analysis, Fault, Homeostasis, Work};

pub const NAME: &str = "callgraph";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CallGraph {
    calls: BTreeMap<String, BTreeSet<String>>,
    recursive: BTreeSet<String>,
    work: u64,
}

impl CallGraph {
    pub fn new() -> Self {
        Self::default()
    }

    fn scan(&mut self, prog: &Program, f: &str) {
        let body = prog.function_body(f).expect("known function");
        let callees = prog
            .subtree(body)
            .into_iter()
            .filter_map(|n| match prog.kind(n) {
                Kind::Call { callee } => Some(callee.clone()),
                _ => None,
            })
            .collect();
        self.calls.insert(f.to_string(), callees);
        self.work += 1;
    }

    fn close(&mut self, prog: &Program) {
        let ids: BTreeMap<&str, NodeId> = prog
            .functions()
            .iter()
            .map(|(f, e)| (f.as_str(), *e))
            .collect();
        let names: BTreeMap<NodeId, &str> = ids.iter().map(|(f, e)| (*e, *f)).collect();
        let nodes: BTreeSet<NodeId> = ids.values().copied().collect();
        let idx = SccIndex::build(&nodes, |n| {
            self.calls[names[&n]].iter().map(|c| ids[c.as_str()]).collect()
        });
        self.recursive = self
            .calls
            .iter()
            .filter(|(f, cs)| {
                let s = idx.scc_of(ids[f.as_str()]).unwrap();
                cs.contains(*f) || idx.members(s).len() > 1
            })
            .map(|(f, _)| f.clone())
            .collect();
    }

    pub fn callees(&self, f: &str) -> Option<&BTreeSet<String>> {
        self.calls.get(f)
    }

    /// True if `f` lies on a call cycle.
    pub fn is_recursive(&self, f: &str) -> bool {
        self.recursive.contains(f)
    }
}

impl Analysis for CallGraph {
    fn name(&self) -> &'static str {
        NAME
    }

    fn compute(&mut self, hs: &mut Homeostasis) -> Result<(), Fault> {
        self.calls.clear();
        let prog = hs.program();
        for f in prog.functions().keys() {
            self.scan(prog, f);
        }
        self.close(prog);
        Ok(())
    }

    fn handle_update(&mut self, hs: &mut Homeostasis, net: &NetChange) -> Result<(), Fault> {
        let prog = hs.program();
        for f in &net.funcs {
            self.scan(prog, f);
        }
        if !net.funcs.is_empty() {
            self.close(prog);
        }
        Ok(())
    }

    fn take_work(&mut self) -> Work {
        let w = Work {
            nodes_reprocessed: self.work,
            transfer_applications: self.work,
        };
        self.work = 0;
        w
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn dump(&self, _: &Homeostasis) -> Value {
        json!({ "calls": self.calls, "recursive": self.recursive })
    }
}

/// Callees of `f`, through the getter protocol.
pub fn callees(hs: &mut Homeostasis, f: &str) -> Result<BTreeSet<String>, Fault> {
    hs.query::<CallGraph, _>(NAME, BTreeSet::new, |cg, _| {
        cg.callees(f).cloned().unwrap_or_default()
    })
}

pub fn is_recursive(hs: &mut Homeostasis, f: &str) -> Result<bool, Fault> {
    // A recursion guard hit answers conservatively.
    hs.query::<CallGraph, _>(NAME, || true, |cg, _| cg.is_recursive(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stabilizer::Mode;

    #[test]
    fn recursion_detection() {
        let src = "func a(){ call b(); } func b(){ call a(); } func s(){ call s(); } func l(){ } \
                   func main(){ call a(); call s(); call l(); }";
        let mut hs = Homeostasis::new(Program::parse(src).unwrap(), Mode::LzUpd);
        hs.register(Box::new(CallGraph::new())).unwrap();
        assert!(is_recursive(&mut hs, "a").unwrap());
        assert!(is_recursive(&mut hs, "b").unwrap());
        assert!(is_recursive(&mut hs, "s").unwrap());
        assert!(!is_recursive(&mut hs, "l").unwrap());
        assert!(!is_recursive(&mut hs, "main").unwrap());
        assert_eq!(callees(&mut hs, "main").unwrap().len(), 3);
    }
}
