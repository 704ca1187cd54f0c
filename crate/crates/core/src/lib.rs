pub mod access;
pub mod barrelim;
pub mod callgraph;
pub mod changelog;
pub mod check;
pub mod hidfa;
pub mod ir;
pub mod mutate;
pub mod phase;
pub mod scc;
pub mod stabilizer;
pub mod supergraph;
pub mod transform;

pub use barrelim::{OptError, OptReport};
pub use changelog::{ElemChange, NetChange};
pub use stabilizer::{Analysis, Fault, Homeostasis, Metrics, Mode, Status};
pub use transform::Action;

use hidfa::{CopyProp, Idfa, Liveness, PointsTo, ReachingDefs};

/// Dataflow analyses that can be requested by name.
pub const DATAFLOW: [&str; 4] = ["pta", "rd", "lv", "cp"];

/// Registers the call graph and points-to analysis, which the optimizer
/// always reads, then each requested dataflow analysis in order.
pub fn register_analyses(hs: &mut Homeostasis, names: &[&str]) -> Result<(), Fault> {
    if let Some(bad) = names.iter().find(|n| !DATAFLOW.contains(n)) {
        return Err(Fault::UnknownAnalysis(bad.to_string()));
    }
    hs.register(Box::new(callgraph::CallGraph::new()))?;
    hs.register(Box::new(Idfa::<PointsTo>::new()))?;
    for name in names {
        if hs.is_registered(name) {
            continue;
        }
        match *name {
            "rd" => hs.register(Box::new(Idfa::<ReachingDefs>::new()))?,
            "lv" => hs.register(Box::new(Idfa::<Liveness>::new()))?,
            "cp" => hs.register(Box::new(Idfa::<CopyProp>::new()))?,
            _ => unreachable!(),
        }
    }
    Ok(())
}
