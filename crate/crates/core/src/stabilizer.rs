//! Analysis registry and stabilization dispatch.

use std::any::Any;
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::changelog::{ChangeLog, ElemChange, NetChange};
use crate::ir::{KindTag, NodeId, ParseError, Program};
use crate::phase::PhaseInfo;
use crate::scc::SccIndex;
use crate::supergraph::Supergraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Mode {
    #[serde(rename = "EGINV")]
    EgInv,
    #[serde(rename = "EGUPD")]
    EgUpd,
    #[serde(rename = "RPINV")]
    RpInv,
    #[serde(rename = "RPUPD")]
    RpUpd,
    #[serde(rename = "LZINV")]
    LzInv,
    #[serde(rename = "LZUPD")]
    LzUpd,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::EgInv,
        Mode::EgUpd,
        Mode::RpInv,
        Mode::RpUpd,
        Mode::LzInv,
        Mode::LzUpd,
    ];

    pub fn is_eager(self) -> bool {
        matches!(self, Mode::EgInv | Mode::EgUpd)
    }

    pub fn is_rp(self) -> bool {
        matches!(self, Mode::RpInv | Mode::RpUpd)
    }

    pub fn is_update(self) -> bool {
        matches!(self, Mode::EgUpd | Mode::RpUpd | Mode::LzUpd)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::EgInv => "EGINV",
            Mode::EgUpd => "EGUPD",
            Mode::RpInv => "RPINV",
            Mode::RpUpd => "RPUPD",
            Mode::LzInv => "LZINV",
            Mode::LzUpd => "LZUPD",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Mode, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown mode '{s}'"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    Stable,
    Unstable,
    Processing,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Fault {
    #[error("unknown analysis '{0}'")]
    UnknownAnalysis(String),
    #[error("analysis '{0}' registered twice")]
    Duplicate(String),
    #[error("analysis '{0}' read while unstable between relevant change-points")]
    RpStrict(String),
    #[error("program transformed during stabilization")]
    Reentrant,
    #[error("invalid transformation: {0}")]
    Transform(String),
    #[error("analysis '{analysis}' exceeded its iteration cap of {cap}")]
    IterationCap { analysis: String, cap: u64 },
    #[error("incremental update of '{0}' failed")]
    Update(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Work done by an analysis since it was last asked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Work {
    pub nodes_reprocessed: u64,
    pub transfer_applications: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Metrics {
    pub stabilization_triggers: u64,
    pub compute_calls: u64,
    pub handle_update_calls: u64,
    /// Full recomputations run after a failed incremental update.
    pub fallback_computes: u64,
    pub nodes_reprocessed: u64,
    pub transfer_applications: u64,
}

/// A registered program abstraction.
pub trait Analysis: Any {
    fn name(&self) -> &'static str;

    /// Rebuilds the abstraction from scratch.
    fn compute(&mut self, hs: &mut Homeostasis) -> Result<(), Fault>;

    /// Brings the abstraction up to date with `net`. The default recomputes.
    fn handle_update(&mut self, hs: &mut Homeostasis, net: &NetChange) -> Result<(), Fault> {
        let _ = net;
        self.compute(hs)
    }

    fn take_work(&mut self) -> Work {
        Work::default()
    }

    fn as_any(&self) -> &dyn Any;

    /// Canonical JSON rendering of the abstraction.
    fn dump(&self, hs: &Homeostasis) -> serde_json::Value;
}

struct Entry {
    name: &'static str,
    status: Status,
    cursor: usize,
    analysis: Option<Box<dyn Analysis>>,
}

type NotifyHook = Box<dyn FnMut(&ElemChange)>;

/// Names that [`Homeostasis::stabilize_now`] accepts without a registry
/// entry: they are maintained inside every transformation.
pub const BUILTIN: [&str; 2] = ["supergraph", "phase"];

/// Owner of the program and every abstraction over it.
pub struct Homeostasis {
    pub(crate) prog: Program,
    pub(crate) sg: Supergraph,
    pub(crate) phases: PhaseInfo,
    scc_cache: RefCell<[Option<Rc<SccIndex>>; 2]>,
    pub(crate) log: ChangeLog,
    entries: Vec<Entry>,
    mode: Mode,
    strict_rp: bool,
    pub(crate) depth: u32,
    hooks: Vec<NotifyHook>,
    metrics: BTreeMap<&'static str, Metrics>,
    change_points: Vec<String>,
}

impl Homeostasis {
    pub fn new(prog: Program, mode: Mode) -> Homeostasis {
        let mut sg = Supergraph::build(&prog);
        let mut phases = PhaseInfo::compute(&prog, &sg);
        let it = phases.refresh_inter_task(&prog, &sg);
        sg.set_inter_task(it);
        Homeostasis {
            prog,
            sg,
            phases,
            scc_cache: RefCell::new([None, None]),
            log: ChangeLog::default(),
            entries: Vec::new(),
            mode,
            strict_rp: false,
            depth: 0,
            hooks: Vec::new(),
            metrics: BTreeMap::new(),
            change_points: Vec::new(),
        }
    }

    pub fn set_strict_rp(&mut self, strict: bool) {
        self.strict_rp = strict;
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn program(&self) -> &Program {
        &self.prog
    }

    pub fn supergraph(&self) -> &Supergraph {
        &self.sg
    }

    pub fn phases(&self) -> &PhaseInfo {
        &self.phases
    }

    pub fn into_program(self) -> Program {
        self.prog
    }

    /// Parses statements into detached nodes for use as transformation payloads.
    pub fn build_stmts(&mut self, func: &str, text: &str) -> Result<Vec<NodeId>, Fault> {
        Ok(self.prog.build_stmts(func, text)?)
    }

    pub fn build_block(&mut self, func: &str, text: &str) -> Result<NodeId, Fault> {
        Ok(self.prog.build_block(func, text)?)
    }

    /// Dependency SCCs for dataflow: super-graph edges plus links between
    /// sibling barriers. `backward` reverses every edge.
    pub fn scc(&self, backward: bool) -> Rc<SccIndex> {
        let slot = backward as usize;
        if let Some(idx) = &self.scc_cache.borrow()[slot] {
            return idx.clone();
        }
        let nodes = self.sg.nodes();
        let idx = Rc::new(SccIndex::build(&nodes, |n| {
            let mut v: Vec<NodeId> = if backward {
                self.sg.preds(n).into_iter().collect()
            } else {
                self.sg.succs(n).into_iter().collect()
            };
            if let Some(sib) = self.phases.siblings(n) {
                v.extend(sib);
            }
            v
        }));
        self.scc_cache.borrow_mut()[slot] = Some(idx.clone());
        idx
    }

    pub(crate) fn invalidate_scc(&self) {
        *self.scc_cache.borrow_mut() = [None, None];
    }

    // ---- registry ----

    fn index_of(&self, name: &str) -> Result<usize, Fault> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .ok_or_else(|| Fault::UnknownAnalysis(name.to_string()))
    }

    pub fn is_registered(&self, name: &str) -> bool {
        self.index_of(name).is_ok()
    }

    pub fn analysis_names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name).collect()
    }

    /// Adds `a` to the registry and computes it on the current program.
    pub fn register(&mut self, mut a: Box<dyn Analysis>) -> Result<(), Fault> {
        let name = a.name();
        if self.is_registered(name) {
            return Err(Fault::Duplicate(name.to_string()));
        }
        self.entries.push(Entry {
            name,
            status: Status::Processing,
            cursor: self.log.head(),
            analysis: None,
        });
        self.depth += 1;
        let r = a.compute(self);
        self.depth -= 1;
        a.take_work();
        let i = self.index_of(name)?;
        let entry = &mut self.entries[i];
        entry.analysis = Some(a);
        entry.cursor = self.log.head();
        match r {
            Ok(()) => {
                entry.status = Status::Stable;
                self.metrics.entry(name).or_default();
                Ok(())
            }
            Err(e) => {
                self.entries.remove(i);
                Err(e)
            }
        }
    }

    pub fn status(&self, name: &str) -> Option<Status> {
        self.index_of(name).ok().map(|i| self.entries[i].status)
    }

    pub fn cursor(&self, name: &str) -> Option<usize> {
        self.index_of(name).ok().map(|i| self.entries[i].cursor)
    }

    pub fn log(&self) -> &ChangeLog {
        &self.log
    }

    /// Pending net change for one analysis.
    pub fn pending(&self, name: &str) -> Result<NetChange, Fault> {
        let i = self.index_of(name)?;
        Ok(self.log.net_changes(self.entries[i].cursor))
    }

    /// Registers a callback run on every notification, for memoized data
    /// that lives outside the registry.
    pub fn on_notify(&mut self, hook: impl FnMut(&ElemChange) + 'static) {
        self.hooks.push(Box::new(hook));
    }

    // ---- getter protocol ----

    /// Reads analysis `name` through `f`, stabilizing it first if needed.
    /// Re-entrant reads of an analysis that is being stabilized get `init()`.
    pub fn query<A: Analysis, R>(
        &mut self,
        name: &str,
        init: impl FnOnce() -> R,
        f: impl FnOnce(&A, &Homeostasis) -> R,
    ) -> Result<R, Fault> {
        let i = self.index_of(name)?;
        match self.entries[i].status {
            Status::Processing => return Ok(init()),
            Status::Unstable => {
                if self.mode.is_rp() && self.strict_rp && self.depth == 0 {
                    return Err(Fault::RpStrict(name.to_string()));
                }
                self.stabilize(i)?;
            }
            Status::Stable => {}
        }
        let a = self.entries[i]
            .analysis
            .as_deref()
            .and_then(|a| a.as_any().downcast_ref::<A>())
            .unwrap_or_else(|| panic!("analysis '{name}' has an unexpected type"));
        Ok(f(a, self))
    }

    /// Read-only access to a stable analysis; `None` if it is not stable.
    pub fn peek<A: Analysis>(&self, name: &str) -> Option<&A> {
        let e = &self.entries[self.index_of(name).ok()?];
        if e.status != Status::Stable {
            return None;
        }
        e.analysis.as_deref()?.as_any().downcast_ref::<A>()
    }

    fn stabilize(&mut self, i: usize) -> Result<(), Fault> {
        let name = self.entries[i].name;
        let mut a = self.entries[i].analysis.take().expect("analysis slot empty");
        self.entries[i].status = Status::Processing;
        let cursor = self.entries[i].cursor;
        self.depth += 1;
        let mut m = Metrics {
            stabilization_triggers: 1,
            ..Metrics::default()
        };
        let r = if self.mode.is_update() {
            m.handle_update_calls = 1;
            let net = self.log.net_changes(cursor);
            match a.handle_update(self, &net) {
                Ok(()) => Ok(()),
                Err(_) => {
                    m.fallback_computes = 1;
                    a.compute(self)
                }
            }
        } else {
            m.compute_calls = 1;
            a.compute(self)
        };
        self.depth -= 1;
        let w = a.take_work();
        m.nodes_reprocessed = w.nodes_reprocessed;
        m.transfer_applications = w.transfer_applications;
        let total = self.metrics.entry(name).or_default();
        total.stabilization_triggers += m.stabilization_triggers;
        total.compute_calls += m.compute_calls;
        total.handle_update_calls += m.handle_update_calls;
        total.fallback_computes += m.fallback_computes;
        total.nodes_reprocessed += m.nodes_reprocessed;
        total.transfer_applications += m.transfer_applications;

        let head = self.log.head();
        let e = &mut self.entries[i];
        e.analysis = Some(a);
        match r {
            Ok(()) => {
                e.status = Status::Stable;
                e.cursor = head;
                self.compact();
                Ok(())
            }
            Err(err) => {
                e.status = Status::Unstable;
                Err(err)
            }
        }
    }

    fn compact(&mut self) {
        let min = self.entries.iter().map(|e| e.cursor).min().unwrap_or(self.log.head());
        self.log.compact(min);
    }

    /// Step D of an elementary transformation.
    pub(crate) fn notify(&mut self, change: ElemChange) -> Result<(), Fault> {
        if self.depth > 0 {
            return Err(Fault::Reentrant);
        }
        self.invalidate_scc();
        for h in &mut self.hooks {
            h(&change);
        }
        self.log.push(change);
        for e in &mut self.entries {
            e.status = Status::Unstable;
        }
        if self.entries.is_empty() {
            self.compact();
        }
        if self.mode.is_eager() {
            for i in 0..self.entries.len() {
                if self.entries[i].status == Status::Unstable {
                    self.stabilize(i)?;
                }
            }
        }
        Ok(())
    }

    /// Stabilizes the listed analyses now, whatever the mode.
    pub fn stabilize_now(&mut self, names: &[&str]) -> Result<(), Fault> {
        for name in names {
            if BUILTIN.contains(name) {
                continue;
            }
            let i = self.index_of(name)?;
            if self.entries[i].status == Status::Unstable {
                self.stabilize(i)?;
            }
        }
        Ok(())
    }

    pub fn stabilize_all(&mut self) -> Result<(), Fault> {
        let names = self.analysis_names();
        self.stabilize_now(&names)
    }

    /// A relevant change-point: in RP modes the listed analyses are
    /// stabilized here; in other modes it does nothing. Names that are not
    /// registered are skipped.
    pub fn relevant_change_point(&mut self, label: &str, names: &[&str]) -> Result<(), Fault> {
        if !self.mode.is_rp() {
            return Ok(());
        }
        self.change_points.push(label.to_string());
        let known: Vec<&str> = names
            .iter()
            .copied()
            .filter(|n| BUILTIN.contains(n) || self.is_registered(n))
            .collect();
        self.stabilize_now(&known)
    }

    pub fn change_points(&self) -> &[String] {
        &self.change_points
    }

    pub fn metrics(&self) -> &BTreeMap<&'static str, Metrics> {
        &self.metrics
    }

    pub fn reset_metrics(&mut self) {
        for m in self.metrics.values_mut() {
            *m = Metrics::default();
        }
        self.change_points.clear();
    }

    /// Canonical JSON of every registered analysis, keyed by name.
    /// Stabilizes first.
    pub fn dump(&mut self) -> Result<String, Fault> {
        self.stabilize_all()?;
        let mut map = serde_json::Map::new();
        for e in &self.entries {
            let a = e.analysis.as_deref().unwrap();
            map.insert(e.name.to_string(), a.dump(self));
        }
        map.insert("phase".to_string(), self.phases.to_json());
        Ok(serde_json::to_string(&serde_json::Value::Object(map)).expect("dump"))
    }

    /// Number of attached nodes of each kind, for reports.
    pub fn census(&self) -> BTreeMap<KindTag, usize> {
        let mut out = BTreeMap::new();
        for n in self.prog.attached_nodes() {
            *out.entry(self.prog.kind(n).tag()).or_default() += 1;
        }
        out
    }
}
