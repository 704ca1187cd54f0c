//! Synthetic corpus generator.
//!
//! Programs are race-free by construction, so any two correct executions
//! end with the same shared store. Inside a region the statements between
//! two barriers form a segment, and no shared variable is both read and
//! written in one segment. Threads never diverge: there are no thread ids,
//! so every private is the same in every thread.
//!
//! Fixed vocabulary:
//! - `n0..n2`: shared, written once at the top of `main`, read-only after.
//! - `s0..`: shared data; `p0`/`p1` point at `s0`/`s1` for the whole run.
//! - `hs<k>`: shared, written only by helper `h<k>`, which contains one
//!   barrier and is called from exactly one site.
//! - `t0..t5`: privates of `main`; `c<k>`: loop counters.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use homeostasis::ir::{KindTag, Program};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GenParams {
    pub seed: u64,
    pub nodes: usize,
    pub pc: usize,
    pub barriers: usize,
}

/// Static characteristics of a program, as in a benchmark table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Characteristics {
    pub nodes: usize,
    pub pc: usize,
    pub barriers: usize,
}

pub fn characteristics(prog: &Program) -> Characteristics {
    let pc = prog.nodes_of(KindTag::Parallel).len();
    Characteristics {
        nodes: prog.attached_nodes().len(),
        pc,
        // Every region owns two materialized implicit barriers.
        barriers: prog.nodes_of(KindTag::Barrier).len() - 2 * pc,
    }
}

const PRIVATES: usize = 6;
const POINTERS: usize = 2;

#[derive(Default)]
struct Segment {
    reads: BTreeSet<String>,
    writes: BTreeSet<String>,
    private_only: bool,
}

struct Gen {
    rng: ChaCha8Rng,
    shared: usize,
    helpers: usize,
    /// Helpers are called from one site each, in order.
    next_call: usize,
    loops: usize,
    empty_main: usize,
}

const MAX_HELPERS: usize = 16;

fn stubs() -> &'static str {
    static STUBS: OnceLock<String> = OnceLock::new();
    STUBS.get_or_init(|| (0..MAX_HELPERS).map(|k| format!("func h{k}(){{ }} ")).collect())
}

/// Node count of `stmts` placed in a function body.
fn cost(stmts: &str, empty: usize) -> usize {
    let p = Program::parse(&format!("{} func main(){{ {stmts} }}", stubs())).expect("generated text parses");
    p.attached_nodes().len() - empty
}

impl Gen {
    fn private(&mut self) -> String {
        format!("t{}", self.rng.gen_range(0..PRIVATES))
    }

    /// A shared variable readable in `seg`, or `None` if the choice is barred.
    fn shared_read(&mut self, seg: &mut Option<&mut Segment>) -> Option<String> {
        let (name, loc) = match self.rng.gen_range(0..5) {
            0 | 1 => (format!("n{}", self.rng.gen_range(0..3)), None),
            2 => {
                let s = format!("s{}", self.rng.gen_range(0..self.shared));
                (s.clone(), Some(s))
            }
            3 => {
                let k = self.rng.gen_range(0..POINTERS);
                (format!("*p{k}"), Some(format!("s{k}")))
            }
            _ if self.helpers > 0 => {
                let h = format!("hs{}", self.rng.gen_range(0..self.helpers));
                (h.clone(), Some(h))
            }
            _ => (format!("n{}", self.rng.gen_range(0..3)), None),
        };
        if let (Some(seg), Some(loc)) = (seg.as_deref_mut(), &loc) {
            if seg.private_only || seg.writes.contains(loc) {
                return None;
            }
            seg.reads.insert(loc.clone());
        }
        Some(name)
    }

    fn operand(&mut self, seg: &mut Option<&mut Segment>) -> String {
        match self.rng.gen_range(0..3) {
            0 => self.rng.gen_range(0..10).to_string(),
            1 => self.private(),
            _ => self.shared_read(seg).unwrap_or_else(|| self.private()),
        }
    }

    fn expr(&mut self, seg: &mut Option<&mut Segment>) -> String {
        let a = self.operand(seg);
        match self.rng.gen_range(0..3) {
            0 => a,
            1 => format!("{a} + {}", self.operand(seg)),
            _ => format!("{a} - {}", self.rng.gen_range(1..4)),
        }
    }

    fn cond(&mut self, seg: &mut Option<&mut Segment>) -> String {
        format!("{} < {}", self.operand(seg), self.rng.gen_range(2..9))
    }

    /// Target of a shared write, claimed in `seg` before the right-hand
    /// side is drawn so the statement cannot read what it writes.
    fn shared_write(&mut self, seg: &mut Option<&mut Segment>) -> Option<String> {
        let (text, loc) = if self.rng.gen_bool(0.25) {
            let k = self.rng.gen_range(0..POINTERS);
            (format!("*p{k}"), format!("s{k}"))
        } else {
            let s = format!("s{}", self.rng.gen_range(0..self.shared));
            (s.clone(), s)
        };
        if let Some(seg) = seg.as_deref_mut() {
            if seg.private_only || seg.reads.contains(&loc) {
                return None;
            }
            seg.writes.insert(loc);
        }
        Some(text)
    }

    /// One simple statement. `seg` is `None` in serial code.
    fn simple(&mut self, seg: &mut Option<&mut Segment>) -> String {
        if self.rng.gen_bool(0.4) {
            if let Some(lhs) = self.shared_write(seg) {
                return format!("{lhs} = {};", self.expr(seg));
            }
        }
        if self.rng.gen_bool(0.05) {
            return "flush;".into();
        }
        let lhs = self.private();
        format!("{lhs} = {};", self.expr(seg))
    }

    /// One statement of any shape, without barriers or regions.
    fn stmt(&mut self, seg: &mut Option<&mut Segment>, depth: u32) -> String {
        match self.rng.gen_range(0..10) {
            0 if depth > 0 => {
                let c = self.cond(seg);
                let (a, b) = (self.stmt(seg, depth - 1), self.stmt(seg, depth - 1));
                format!("if ({c}) {{ {a} }} else {{ {b} }}")
            }
            1 if depth > 0 => {
                let c = format!("c{}", self.loops);
                self.loops += 1;
                let n = self.rng.gen_range(1..4);
                let body = self.stmt(seg, depth - 1);
                format!("{c} = 0; while ({c} < {n}) {{ {body} {c} = {c} + 1; }}")
            }
            _ => self.simple(seg),
        }
    }

    fn call(&mut self, seg: &mut Segment) -> String {
        let k = self.next_call;
        self.next_call += 1;
        // The helper's first half reads an `n`; its second half starts a
        // new segment that writes `hs<k>`.
        *seg = Segment::default();
        seg.writes.insert(format!("hs{k}"));
        format!("call h{k}();")
    }

    /// Body of one region with `barriers` explicit barriers and about
    /// `budget` nodes.
    fn region(&mut self, barriers: usize, budget: usize) -> String {
        let segments = barriers + 1;
        let mut out = Vec::new();
        let mut used = 0;
        for i in 0..segments {
            let mut seg = Segment {
                private_only: self.rng.gen_bool(0.45),
                ..Segment::default()
            };
            let target = (budget * (i + 1)) / segments;
            loop {
                let s = if self.next_call < self.helpers && self.rng.gen_bool(0.08) {
                    self.call(&mut seg)
                } else {
                    self.stmt(&mut Some(&mut seg), 1)
                };
                used += cost(&s, self.empty_main);
                out.push(s);
                if used >= target {
                    break;
                }
            }
            if i + 1 < segments {
                out.push("barrier;".into());
                used += 1;
            }
        }
        format!("parallel {{ {} }}", out.join(" "))
    }

    fn serial(&mut self, budget: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut used = 0;
        while used < budget {
            let s = if self.next_call < self.helpers && self.rng.gen_bool(0.05) {
                self.next_call += 1;
                format!("call h{}();", self.next_call - 1)
            } else {
                self.stmt(&mut None, 2)
            };
            used += cost(&s, self.empty_main);
            out.push(s);
        }
        out
    }

    /// Private-only statements that may sit between two mergeable regions.
    fn seam(&mut self) -> String {
        let n = self.rng.gen_range(0..3);
        (0..n)
            .map(|_| format!("{} = {} + {};", self.private(), self.private(), self.rng.gen_range(0..5)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Deterministic program text for `p`.
pub fn generate(p: &GenParams) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let shared = rng.gen_range(4..9);
    let helpers = if p.barriers == 0 { 0 } else { (p.barriers / 4).clamp(1, MAX_HELPERS).min(p.barriers) };
    let empty_main = cost("", 0);
    let mut g = Gen {
        rng,
        shared,
        helpers,
        next_call: 0,
        loops: 0,
        empty_main,
    };

    let mut decls: Vec<String> = (0..3).map(|i| format!("shared n{i};")).collect();
    decls.extend((0..shared).map(|i| format!("shared s{i};")));
    decls.extend((0..helpers).map(|i| format!("shared hs{i};")));
    let mut funcs = Vec::new();
    for k in 0..helpers {
        let j = g.rng.gen_range(0..3);
        funcs.push(format!(
            "func h{k}(){{ shared n{j}; shared hs{k}; private u; u = n{j} + {}; barrier; hs{k} = u + {}; }}",
            g.rng.gen_range(0..5),
            g.rng.gen_range(1..5)
        ));
    }
    let mut prelude: Vec<String> = (0..3).map(|i| format!("n{i} = {};", g.rng.gen_range(1..6))).collect();
    prelude.extend((0..POINTERS).map(|k| format!("p{k} = &s{k};")));

    let skeleton = |body: &[String]| {
        format!(
            "{}\nfunc main(){{ {} {} {} }}\n",
            funcs.join("\n"),
            decls.join(" "),
            prelude.join(" "),
            body.join(" ")
        )
    };
    let base = Program::parse(&skeleton(&[])).unwrap().attached_nodes().len();
    let budget = p.nodes.saturating_sub(base);

    // Explicit barriers left after helpers, spread over the regions.
    let mut per_region = vec![0usize; p.pc];
    if p.pc > 0 {
        for _ in 0..p.barriers - helpers {
            let i = g.rng.gen_range(0..p.pc);
            per_region[i] += 1;
        }
    }
    let region_budget = (budget * 7 / 10).checked_div(p.pc).unwrap_or(0);
    let mut chunks: Vec<String> = Vec::new();
    let mut i = 0;
    while i < p.pc {
        let shape = g.rng.gen_range(0..6);
        if shape == 0 && i + 1 < p.pc {
            let a = g.region(per_region[i], region_budget);
            let seam = g.seam();
            let b = g.region(per_region[i + 1], region_budget);
            chunks.push(format!("{a} {seam} {b}"));
            i += 2;
            continue;
        }
        let r = g.region(per_region[i], region_budget);
        if shape == 1 {
            let c = format!("c{}", g.loops);
            g.loops += 1;
            chunks.push(format!("{c} = 0; while ({c} < 2) {{ {r} {c} = {c} + 1; }}"));
        } else {
            chunks.push(r);
        }
        i += 1;
    }
    let used: usize = chunks.iter().map(|c| cost(c, empty_main)).sum();
    let filler = g.serial(budget.saturating_sub(used));

    // Interleave serial filler between the region chunks.
    let mut body = Vec::new();
    let per_gap = filler.len() / (chunks.len() + 1);
    let mut rest = filler.into_iter();
    for c in chunks {
        body.extend(rest.by_ref().take(per_gap));
        body.push(c);
    }
    body.extend(rest);
    body.extend((g.next_call..helpers).map(|k| format!("call h{k}();")));
    skeleton(&body)
}

/// `count` programs spread over the size ranges of the corpus.
pub fn corpus(seed: u64, count: usize, nodes: std::ops::Range<usize>) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = rng.gen_range(nodes.clone());
            let pc = (n / 150).clamp(1, 30) + rng.gen_range(0..2);
            let barriers = *[0, pc / 2, pc, 2 * pc].choose(&mut rng).unwrap();
            let p = GenParams {
                seed: rng.gen(),
                nodes: n,
                pc,
                barriers: if i == 0 { 0 } else { barriers.max(1) },
            };
            (format!("gen{i:02}_s{}_n{}", p.seed % 10_000, n), generate(&p))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn within(actual: usize, want: usize) -> bool {
        let (a, w) = (actual as f64, want as f64);
        (a - w).abs() <= 0.2 * w
    }

    #[test]
    fn same_seed_same_text() {
        let p = GenParams {
            seed: 0,
            nodes: 100,
            pc: 2,
            barriers: 3,
        };
        assert_eq!(generate(&p), generate(&p));
    }

    #[test]
    fn no_barriers_requested_means_none_explicit() {
        for seed in 0..5 {
            let p = GenParams {
                seed,
                nodes: 300,
                pc: 4,
                barriers: 0,
            };
            let c = characteristics(&Program::parse(&generate(&p)).unwrap());
            assert_eq!(c.barriers, 0);
            assert_eq!(c.pc, 4);
        }
    }

    #[test]
    fn characteristics_track_request() {
        for (seed, nodes, pc, barriers) in [(1, 2000, 10, 20), (2, 500, 4, 6), (3, 5000, 25, 40), (4, 120, 1, 2)] {
            let p = GenParams { seed, nodes, pc, barriers };
            let c = characteristics(&Program::parse(&generate(&p)).unwrap());
            assert!(within(c.nodes, nodes), "{c:?} vs {p:?}");
            assert_eq!(c.pc, pc);
            assert_eq!(c.barriers, barriers, "{c:?}");
        }
    }
}
