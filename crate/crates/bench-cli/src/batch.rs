//! Harness-level batches: corpus programs, fuzz trials, mode comparisons and
//! interpreter schedules are independent, so they fan out over a thread pool
//! when the `parallel` feature is on. Each item builds its own engine.

use homeostasis::ir::Program;
use homeostasis::Mode;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::interp::{self, Config, InterpError, Store};
use crate::pipeline::{self, MetricsReport, PipelineError, RunConfig};

/// Maps `f` over `items`, in parallel when the feature is enabled.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_sequential(items, f)
    }
}

pub fn map_sequential<T, R, F: Fn(&T) -> R>(items: &[T], f: F) -> Vec<R> {
    items.iter().map(f).collect()
}

#[derive(Clone, Debug)]
pub struct ModeRun {
    pub report: MetricsReport,
    pub optimized: String,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub runs: Vec<ModeRun>,
}

impl Comparison {
    pub fn digests_agree(&self) -> bool {
        self.runs.windows(2).all(|w| w[0].report.digest == w[1].report.digest)
    }

    pub fn sources_agree(&self) -> bool {
        self.runs.windows(2).all(|w| w[0].optimized == w[1].optimized)
    }

    pub fn run(&self, mode: Mode) -> Option<&ModeRun> {
        self.runs.iter().find(|r| r.report.mode == mode)
    }
}

/// Runs the pipeline once per mode on the same input.
pub fn compare_modes(src: &str, modes: &[Mode], base: &RunConfig) -> Result<Comparison, PipelineError> {
    let runs = map(modes, |m| {
        let cfg = RunConfig {
            mode: *m,
            ..base.clone()
        };
        pipeline::run(src, &cfg).map(|o| ModeRun {
            report: o.report,
            optimized: o.optimized,
        })
    });
    Ok(Comparison {
        runs: runs.into_iter().collect::<Result<_, _>>()?,
    })
}

/// `seeds` schedules for each thread count in `threads`.
pub fn schedules(seeds: u64, threads: std::ops::RangeInclusive<usize>) -> Vec<Config> {
    threads
        .flat_map(|t| (0..seeds).map(move |s| Config::seeded(t, s * 7919 + t as u64)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mismatch {
    pub config: String,
    pub original: Result<Store, InterpError>,
    pub optimized: Result<Store, InterpError>,
}

/// Schedules under which the two programs end in different shared stores.
/// An interpreter error on either side counts as a mismatch.
pub fn differential(original: &Program, optimized: &Program, cfgs: &[Config]) -> Vec<Mismatch> {
    map(cfgs, |c| {
        let a = interp::run(original, c);
        let b = interp::run(optimized, c);
        (a.is_err() || a != b).then(|| Mismatch {
            config: format!("{c:?}"),
            original: a,
            optimized: b,
        })
    })
    .into_iter()
    .flatten()
    .collect()
}
