//! Random transformation/query traces checked against a from-scratch oracle.

use homeostasis::check::divergences;
use homeostasis::ir::Program;
use homeostasis::mutate::Mutator;
use homeostasis::{register_analyses, Fault, Homeostasis, Mode, DATAFLOW};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::batch;

/// Names a query may read.
pub const QUERYABLE: [&str; 6] = ["pta", "rd", "lv", "cp", "callgraph", "phase"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase", tag = "op")]
pub enum Op {
    /// One mutator step driven by its own seed.
    Transform { seed: u64 },
    Query { analysis: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Trial {
    pub program: usize,
    pub mode: Mode,
    pub ops: Vec<Op>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub trial: Trial,
    pub reason: String,
}

#[derive(Clone, Debug, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Verdict {
    pub trials: usize,
    pub transforms: usize,
    pub queries: usize,
    pub failures: Vec<Failure>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Outcome {
    pub transforms: usize,
    pub queries: usize,
    /// First divergence or fault, with the index of the op that exposed it.
    pub failure: Option<(usize, String)>,
}

/// Replays `ops` on `src` under `mode`. Every query is followed by a full
/// comparison with a fresh engine.
pub fn replay(src: &str, mode: Mode, ops: &[Op]) -> Outcome {
    let mut out = Outcome::default();
    let mut hs = Homeostasis::new(Program::parse(src).expect("corpus program parses"), mode);
    if let Err(e) = register_analyses(&mut hs, &DATAFLOW) {
        out.failure = Some((0, e.to_string()));
        return out;
    }
    let mut m = Mutator::new();
    for (i, op) in ops.iter().enumerate() {
        let r: Result<(), Fault> = match op {
            Op::Transform { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                m.step(&mut hs, &mut |n| rng.gen_range(0..n)).map(|c| {
                    out.transforms += usize::from(c.is_some());
                })
            }
            Op::Query { analysis } => {
                out.queries += 1;
                hs.stabilize_now(&[analysis.as_str()]).and_then(|_| divergences(&mut hs)).map(|d| {
                    if let Some(first) = d.first() {
                        out.failure = Some((i, first.to_string()));
                    }
                })
            }
        };
        if let Err(e) = r {
            out.failure = Some((i, format!("fault: {e}")));
        }
        if out.failure.is_some() {
            break;
        }
    }
    out
}

/// Drops ops one at a time while the trace still fails.
pub fn minimize(src: &str, mode: Mode, ops: &[Op]) -> Vec<Op> {
    let fails = |ops: &[Op]| replay(src, mode, ops).failure.is_some();
    let mut cur = ops.to_vec();
    if let Some((i, _)) = replay(src, mode, &cur).failure {
        cur.truncate(i + 1);
    }
    let mut i = 0;
    while i < cur.len() {
        let mut cand = cur.clone();
        cand.remove(i);
        if fails(&cand) {
            cur = cand;
        } else {
            i += 1;
        }
    }
    cur
}

pub fn random_ops(rng: &mut impl Rng, len: usize) -> Vec<Op> {
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.3) {
                Op::Query {
                    analysis: QUERYABLE[rng.gen_range(0..QUERYABLE.len())].to_string(),
                }
            } else {
                Op::Transform { seed: rng.gen() }
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct FuzzConfig {
    pub seed: u64,
    pub trials: usize,
    pub modes: Vec<Mode>,
    pub trace_len: usize,
}

/// `trials` traces per mode, spread round-robin over `corpus`. Each trace
/// ends with a query so its last transforms are checked too.
pub fn fuzz(corpus: &[String], cfg: &FuzzConfig) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trials = Vec::new();
    for &mode in &cfg.modes {
        for t in 0..cfg.trials {
            let mut ops = random_ops(&mut rng, cfg.trace_len);
            ops.push(Op::Query {
                analysis: QUERYABLE[t % QUERYABLE.len()].to_string(),
            });
            trials.push(Trial {
                program: t % corpus.len(),
                mode,
                ops,
            });
        }
    }
    let outcomes = batch::map(&trials, |t| replay(&corpus[t.program], t.mode, &t.ops));
    let mut v = Verdict {
        trials: trials.len(),
        ..Verdict::default()
    };
    for (t, o) in trials.into_iter().zip(outcomes) {
        v.transforms += o.transforms;
        v.queries += o.queries;
        if let Some((_, reason)) = o.failure {
            let ops = minimize(&corpus[t.program], t.mode, &t.ops);
            v.failures.push(Failure {
                trial: Trial { ops, ..t },
                reason,
            });
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "func main(){ shared a; shared b; p0 = &a; parallel { a = 1; barrier; t0 = *p0; b = t0; } }";

    #[test]
    fn replay_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ops = random_ops(&mut rng, 25);
        assert_eq!(replay(SRC, Mode::LzUpd, &ops), replay(SRC, Mode::LzUpd, &ops));
    }

    #[test]
    fn unknown_query_is_reported_and_minimized() {
        let ops = vec![
            Op::Transform { seed: 1 },
            Op::Query { analysis: "rd".into() },
            Op::Transform { seed: 2 },
            Op::Query { analysis: "nope".into() },
            Op::Transform { seed: 3 },
        ];
        let o = replay(SRC, Mode::LzUpd, &ops);
        assert_eq!(o.failure.as_ref().map(|f| f.0), Some(3));
        assert_eq!(minimize(SRC, Mode::LzUpd, &ops), vec![Op::Query { analysis: "nope".into() }]);
    }

    #[test]
    fn small_fuzz_run_is_clean() {
        let cfg = FuzzConfig {
            seed: 9,
            trials: 4,
            modes: Mode::ALL.to_vec(),
            trace_len: 12,
        };
        let v = fuzz(&[SRC.to_string()], &cfg);
        assert!(v.passed(), "{:?}", v.failures);
        assert_eq!(v.trials, 24);
        assert!(v.queries >= 24);
    }
}
