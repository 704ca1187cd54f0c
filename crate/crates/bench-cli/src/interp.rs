//! Reference interpreter: the oracle for semantics preservation.
//!
//! Each parallel region runs on a fixed number of logical threads under a
//! seeded schedule. Threads buffer their shared writes and publish them
//! only at a flush, a barrier or the end of the region. Privates are copied
//! into every thread at region entry; the first thread's copy is what the
//! master sees afterwards.

use std::collections::{BTreeMap, HashMap};

use homeostasis::ir::{BinOp, Expr, Kind, Lhs, Loc, NodeId, Program};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Ptr(Loc),
}

/// Final shared store, by variable name.
pub type Store = BTreeMap<String, String>;

#[derive(Clone, Debug, thiserror::Error, PartialEq, Eq)]
pub enum InterpError {
    #[error("step cap of {0} exceeded")]
    StepCap(u64),
    #[error("threads wait at a barrier that others never reach")]
    Deadlock,
    #[error("{0}")]
    Malformed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// Round-robin in short bursts, with random jumps.
    Seeded(u64),
    /// Each thread runs until it blocks or finishes before the next starts.
    InOrder,
}

#[derive(Clone, Copy, Debug)]
pub struct Config {
    pub threads: usize,
    pub schedule: Schedule,
    pub step_cap: u64,
}

impl Config {
    pub fn seeded(threads: usize, seed: u64) -> Config {
        Config {
            threads,
            schedule: Schedule::Seeded(seed),
            step_cap: 5_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Cont {
    Stmts { block: NodeId, idx: usize },
    Loop(NodeId),
    /// Pops the callee frame once its body is done.
    Return,
}

enum Event {
    Step,
    Barrier,
    Region(NodeId),
    Done,
}

#[derive(Clone, Default)]
struct Frame(HashMap<Loc, Value>);

struct Thread {
    conts: Vec<Cont>,
    frames: Vec<Frame>,
    buffer: Option<BTreeMap<Loc, Value>>,
    waiting: bool,
    done: bool,
}

struct Machine<'p> {
    prog: &'p Program,
    memory: HashMap<Loc, Value>,
    steps: u64,
    cfg: Config,
    rng: ChaCha8Rng,
}

fn malformed(msg: impl Into<String>) -> InterpError {
    InterpError::Malformed(msg.into())
}

impl<'p> Machine<'p> {
    fn read(&self, t: &Thread, l: Loc) -> Value {
        let v = if l.shared {
            t.buffer.as_ref().and_then(|b| b.get(&l)).or_else(|| self.memory.get(&l))
        } else {
            t.frames.last().and_then(|f| f.0.get(&l))
        };
        v.copied().unwrap_or(Value::Int(0))
    }

    fn write(&mut self, t: &mut Thread, l: Loc, v: Value) {
        if !l.shared {
            t.frames.last_mut().expect("a frame").0.insert(l, v);
        } else if let Some(b) = &mut t.buffer {
            b.insert(l, v);
        } else {
            self.memory.insert(l, v);
        }
    }

    fn publish(&mut self, t: &mut Thread) {
        if let Some(b) = &mut t.buffer {
            self.memory.extend(std::mem::take(b));
        }
    }

    fn eval(&self, t: &Thread, e: &Expr) -> Result<Value, InterpError> {
        Ok(match e {
            Expr::Int(i) => Value::Int(*i),
            Expr::Var(v) => self.read(t, v.loc),
            Expr::AddrOf(v) => Value::Ptr(v.loc),
            Expr::Deref(p) => match self.read(t, p.loc) {
                Value::Ptr(l) => self.read(t, l),
                Value::Int(_) => return Err(malformed(format!("`*{}` of a non-pointer", p.name))),
            },
            Expr::Bin(a, op, b) => {
                let (a, b) = (self.eval(t, a)?, self.eval(t, b)?);
                match (op, a, b) {
                    (BinOp::Add, Value::Int(x), Value::Int(y)) => Value::Int(x.wrapping_add(y)),
                    (BinOp::Sub, Value::Int(x), Value::Int(y)) => Value::Int(x.wrapping_sub(y)),
                    (BinOp::Lt, Value::Int(x), Value::Int(y)) => Value::Int(i64::from(x < y)),
                    (BinOp::Eq, x, y) => Value::Int(i64::from(x == y)),
                    _ => return Err(malformed(format!("`{}` on a pointer", op.symbol()))),
                }
            }
        })
    }

    fn truthy(v: Value) -> bool {
        !matches!(v, Value::Int(0))
    }

    fn exec(&mut self, t: &mut Thread, s: NodeId) -> Result<Event, InterpError> {
        let prog = self.prog;
        match prog.kind(s) {
            Kind::Decl { .. } => {}
            Kind::Assign { lhs, rhs } => {
                let v = self.eval(t, rhs)?;
                let target = match lhs {
                    Lhs::Var(x) => x.loc,
                    Lhs::Deref(p) => match self.read(t, p.loc) {
                        Value::Ptr(l) => l,
                        Value::Int(_) => return Err(malformed(format!("store through non-pointer `{}`", p.name))),
                    },
                };
                self.write(t, target, v);
            }
            Kind::If { cond, then_b, else_b } => {
                let c = Self::truthy(self.eval(t, cond)?);
                let block = if c { Some(*then_b) } else { *else_b };
                if let Some(block) = block {
                    t.conts.push(Cont::Stmts { block, idx: 0 });
                }
            }
            Kind::While { .. } => t.conts.push(Cont::Loop(s)),
            Kind::Parallel { .. } => return Ok(Event::Region(s)),
            Kind::Barrier => {
                self.publish(t);
                if t.buffer.is_some() {
                    return Ok(Event::Barrier);
                }
            }
            Kind::Flush => self.publish(t),
            Kind::Call { callee } => {
                let body = prog
                    .function_body(callee)
                    .ok_or_else(|| malformed(format!("unknown function {callee}")))?;
                t.conts.push(Cont::Return);
                t.frames.push(Frame::default());
                t.conts.push(Cont::Stmts { block: body, idx: 0 });
            }
            Kind::Return => loop {
                match t.conts.pop() {
                    Some(Cont::Return) => {
                        t.frames.pop();
                        break;
                    }
                    Some(_) => {}
                    None => return Ok(Event::Done),
                }
            },
            k => return Err(malformed(format!("{:?} executed as a statement", k.tag()))),
        }
        Ok(Event::Step)
    }

    fn step(&mut self, t: &mut Thread) -> Result<Event, InterpError> {
        self.steps += 1;
        if self.steps > self.cfg.step_cap {
            return Err(InterpError::StepCap(self.cfg.step_cap));
        }
        loop {
            let Some(top) = t.conts.last_mut() else {
                return Ok(Event::Done);
            };
            match top {
                Cont::Stmts { block, idx } => {
                    let Kind::Block { stmts } = self.prog.kind(*block) else {
                        return Err(malformed("statement list is not a block"));
                    };
                    if *idx >= stmts.len() {
                        t.conts.pop();
                        continue;
                    }
                    let s = stmts[*idx];
                    *idx += 1;
                    return self.exec(t, s);
                }
                Cont::Loop(w) => {
                    let Kind::While { cond, body } = self.prog.kind(*w) else {
                        unreachable!("loop continuation on a non-loop");
                    };
                    let body = *body;
                    if Self::truthy(self.eval(t, cond)?) {
                        t.conts.push(Cont::Stmts { block: body, idx: 0 });
                    } else {
                        t.conts.pop();
                    }
                    return Ok(Event::Step);
                }
                Cont::Return => {
                    t.conts.pop();
                    t.frames.pop();
                }
            }
        }
    }

    fn pick(&mut self, runnable: &[usize], last: usize) -> usize {
        match self.cfg.schedule {
            Schedule::InOrder => runnable[0],
            Schedule::Seeded(_) => {
                if self.rng.gen_bool(0.3) {
                    runnable[self.rng.gen_range(0..runnable.len())]
                } else {
                    *runnable.iter().find(|i| **i > last).unwrap_or(&runnable[0])
                }
            }
        }
    }

    fn region(&mut self, master: &mut Thread, p: NodeId) -> Result<(), InterpError> {
        let Kind::Parallel { body, .. } = self.prog.kind(p) else {
            unreachable!("region event on a non-region");
        };
        let frame = master.frames.last().cloned().unwrap_or_default();
        let mut threads: Vec<Thread> = (0..self.cfg.threads.max(1))
            .map(|_| Thread {
                conts: vec![Cont::Stmts { block: *body, idx: 0 }],
                frames: vec![frame.clone()],
                buffer: Some(BTreeMap::new()),
                waiting: false,
                done: false,
            })
            .collect();
        let mut last = usize::MAX;
        loop {
            let runnable: Vec<usize> = (0..threads.len())
                .filter(|i| !threads[*i].done && !threads[*i].waiting)
                .collect();
            if runnable.is_empty() {
                if threads.iter().all(|t| t.done) {
                    break;
                }
                if threads.iter().any(|t| t.done) {
                    return Err(InterpError::Deadlock);
                }
                for t in &mut threads {
                    t.waiting = false;
                }
                continue;
            }
            let i = self.pick(&runnable, last);
            last = i;
            let burst = match self.cfg.schedule {
                Schedule::InOrder => u32::MAX,
                Schedule::Seeded(_) => self.rng.gen_range(1..=4),
            };
            let t = &mut threads[i];
            for _ in 0..burst {
                match self.step(t)? {
                    Event::Step => {}
                    Event::Barrier => {
                        t.waiting = true;
                        break;
                    }
                    Event::Done => {
                        self.publish(t);
                        t.done = true;
                        break;
                    }
                    Event::Region(_) => return Err(malformed("parallel region nested in another")),
                }
            }
        }
        if let Some(f) = master.frames.last_mut() {
            *f = threads.swap_remove(0).frames.swap_remove(0);
        }
        Ok(())
    }
}

fn render(prog: &Program, v: Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Ptr(l) => format!("&{}", prog.loc_name(l)),
    }
}

/// Runs `prog` from its entry function and returns the final shared store.
pub fn run(prog: &Program, cfg: &Config) -> Result<Store, InterpError> {
    let seed = match cfg.schedule {
        Schedule::Seeded(s) => s,
        Schedule::InOrder => 0,
    };
    let mut m = Machine {
        prog,
        memory: HashMap::new(),
        steps: 0,
        cfg: *cfg,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let body = prog.function_body(prog.entry_function()).expect("entry function");
    let mut master = Thread {
        conts: vec![Cont::Stmts { block: body, idx: 0 }],
        frames: vec![Frame::default()],
        buffer: None,
        waiting: false,
        done: false,
    };
    loop {
        match m.step(&mut master)? {
            Event::Step | Event::Barrier => {}
            Event::Region(p) => m.region(&mut master, p)?,
            Event::Done => break,
        }
    }
    Ok(prog
        .locs()
        .filter(|l| l.shared)
        .map(|l| (prog.loc_name(l), render(prog, m.memory.get(&l).copied().unwrap_or(Value::Int(0)))))
        .collect())
}
