//! parse → register → optimize → dump, with metrics.

use std::collections::BTreeMap;
use std::time::Instant;

use homeostasis::barrelim::{self, DEFAULT_CAP};
use homeostasis::ir::{ParseError, Program};
use homeostasis::{register_analyses, Fault, Homeostasis, Metrics, Mode, OptError, OptReport};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::gen::{characteristics, Characteristics};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Opt {
    BarrElim,
}

impl std::str::FromStr for Opt {
    type Err = String;

    fn from_str(s: &str) -> Result<Opt, String> {
        match s.to_ascii_lowercase().as_str() {
            "barrelim" => Ok(Opt::BarrElim),
            _ => Err(format!("unknown optimization '{s}'")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub opts: Vec<Opt>,
    pub analyses: Vec<String>,
    pub strict_rp: bool,
    pub cap: u32,
}

impl RunConfig {
    pub fn new(mode: Mode) -> RunConfig {
        RunConfig {
            mode,
            opts: vec![Opt::BarrElim],
            analyses: homeostasis::DATAFLOW.iter().map(|s| s.to_string()).collect(),
            strict_rp: false,
            cap: DEFAULT_CAP,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct WallClock {
    pub parse_ms: f64,
    pub register_ms: f64,
    pub optimize_ms: f64,
    pub dump_ms: f64,
    pub total_ms: f64,
}

impl WallClock {
    fn fields(&self) -> [f64; 5] {
        [self.parse_ms, self.register_ms, self.optimize_ms, self.dump_ms, self.total_ms]
    }

    /// Field-wise geometric mean. Zero durations count as one microsecond.
    pub fn geomean(runs: &[WallClock]) -> WallClock {
        let mut acc = [0.0f64; 5];
        for r in runs {
            for (a, v) in acc.iter_mut().zip(r.fields()) {
                *a += v.max(1e-3).ln();
            }
        }
        let n = runs.len().max(1) as f64;
        let [parse_ms, register_ms, optimize_ms, dump_ms, total_ms] = acc.map(|a| (a / n).exp());
        WallClock {
            parse_ms,
            register_ms,
            optimize_ms,
            dump_ms,
            total_ms,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricsReport {
    pub mode: Mode,
    pub analyses: Vec<String>,
    pub characteristics: Characteristics,
    pub metrics: BTreeMap<String, Metrics>,
    pub total_transfer_applications: u64,
    pub wall_clock: WallClock,
    pub repeats: usize,
    pub opt: Option<OptReport>,
    /// sha256 of the canonical flow-fact dump.
    pub digest: String,
}

impl MetricsReport {
    /// The report without wall-clock fields, for determinism checks.
    pub fn without_time(&self) -> MetricsReport {
        MetricsReport {
            wall_clock: WallClock::default(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub optimized: String,
    pub dump: String,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("engine fault: {0}")]
    Fault(Fault),
    #[error("strict RP violation: {0}")]
    RpStrict(Fault),
    #[error("no fixed point within {cap} iterations")]
    Cap { cap: u32, report: OptReport },
}

impl From<Fault> for PipelineError {
    fn from(f: Fault) -> Self {
        match f {
            Fault::RpStrict(_) => PipelineError::RpStrict(f),
            Fault::Parse(e) => PipelineError::Parse(e),
            f => PipelineError::Fault(f),
        }
    }
}

impl From<OptError> for PipelineError {
    fn from(e: OptError) -> Self {
        match e {
            OptError::Fault(f) => f.into(),
            OptError::Cap { cap, report } => PipelineError::Cap { cap, report },
        }
    }
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Parse(_) => 1,
            PipelineError::Fault(_) | PipelineError::Cap { .. } => 2,
            PipelineError::RpStrict(_) => 3,
        }
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// One pipeline run. Metrics count work after registration, through the
/// optimizations and the final dump.
pub fn run(src: &str, cfg: &RunConfig) -> Result<RunOutput, PipelineError> {
    let start = Instant::now();
    let t = Instant::now();
    let prog = Program::parse(src)?;
    let parse_ms = ms(t);
    let chars = characteristics(&prog);

    let t = Instant::now();
    let mut hs = Homeostasis::new(prog, cfg.mode);
    hs.set_strict_rp(cfg.strict_rp);
    let names: Vec<&str> = cfg.analyses.iter().map(String::as_str).collect();
    register_analyses(&mut hs, &names)?;
    hs.reset_metrics();
    let register_ms = ms(t);

    let t = Instant::now();
    let mut opt = None;
    for o in &cfg.opts {
        match o {
            Opt::BarrElim => opt = Some(barrelim::run(&mut hs, cfg.cap)?),
        }
    }
    let optimize_ms = ms(t);

    let t = Instant::now();
    let dump = hs.dump()?;
    let dump_ms = ms(t);

    let metrics: BTreeMap<String, Metrics> = hs.metrics().iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let report = MetricsReport {
        mode: cfg.mode,
        analyses: hs.analysis_names().iter().map(|s| s.to_string()).collect(),
        characteristics: chars,
        total_transfer_applications: metrics.values().map(|m| m.transfer_applications).sum(),
        metrics,
        wall_clock: WallClock {
            parse_ms,
            register_ms,
            optimize_ms,
            dump_ms,
            total_ms: ms(start),
        },
        repeats: 1,
        opt,
        digest: hex(&Sha256::digest(dump.as_bytes())),
    };
    Ok(RunOutput {
        report,
        optimized: hs.program().print(),
        dump,
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs `repeat` times; counters come from the first run, wall-clock
/// fields are the geometric mean over all of them.
pub fn run_repeated(src: &str, cfg: &RunConfig, repeat: usize) -> Result<RunOutput, PipelineError> {
    let mut first = run(src, cfg)?;
    let mut clocks = vec![first.report.wall_clock];
    for _ in 1..repeat.max(1) {
        clocks.push(run(src, cfg)?.report.wall_clock);
    }
    first.report.wall_clock = WallClock::geomean(&clocks);
    first.report.repeats = clocks.len();
    Ok(first)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geomean_of_constant_is_constant() {
        let w = WallClock {
            parse_ms: 2.0,
            register_ms: 4.0,
            optimize_ms: 8.0,
            dump_ms: 1.0,
            total_ms: 15.0,
        };
        let g = WallClock::geomean(&[w, w, w]);
        assert!((g.optimize_ms - 8.0).abs() < 1e-9);
        let h = WallClock::geomean(&[w, WallClock { parse_ms: 8.0, ..w }]);
        assert!((h.parse_ms - 4.0).abs() < 1e-9);
    }

    #[test]
    fn exit_codes() {
        let e = run("func main(){ x = ; }", &RunConfig::new(Mode::LzUpd)).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        let mut cfg = RunConfig::new(Mode::RpUpd);
        cfg.analyses = vec!["nope".into()];
        assert_eq!(run("func main(){ }", &cfg).unwrap_err().exit_code(), 2);
    }
}
