use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use homeo::batch;
use homeo::fuzz::{self, FuzzConfig};
use homeo::gen::{self, GenParams};
use homeo::pipeline::{self, Opt, PipelineError, RunConfig};
use homeostasis::ir::Program;
use homeostasis::Mode;

/// Exit code for a divergence or a cross-mode mismatch.
const MISMATCH: u8 = 4;

#[derive(Parser)]
#[command(name = "homeo", version, about = "Self-stabilizing analysis engine and BarrElim driver")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Optimize one program and report metrics.
    Run {
        #[arg(long, default_value = "LZUPD")]
        mode: Mode,
        /// Optimizations to run, comma separated.
        #[arg(long, value_delimiter = ',')]
        opt: Vec<Opt>,
        #[arg(long, value_delimiter = ',', default_value = "pta,rd,lv,cp")]
        analyses: Vec<String>,
        #[arg(long)]
        strict_rp: bool,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
        /// Write the metrics report here instead of stderr.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the optimized source here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        input: PathBuf,
    },
    /// Generate synthetic programs.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        nodes: usize,
        #[arg(long, default_value_t = 4)]
        pc: usize,
        #[arg(long, default_value_t = 8)]
        barriers: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Random transformation/query traces against a from-scratch oracle.
    Fuzz {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "all")]
        modes: String,
        #[arg(long, default_value_t = 20)]
        trace_len: usize,
        #[arg(long, default_value_t = 20)]
        corpus: usize,
    },
    /// Run every listed mode on one input and check they agree.
    Compare {
        #[arg(long, default_value = "all")]
        modes: String,
        #[arg(long, value_delimiter = ',', default_value = "pta,rd,lv,cp")]
        analyses: Vec<String>,
        input: PathBuf,
    },
}

fn modes(spec: &str) -> Result<Vec<Mode>, String> {
    if spec.eq_ignore_ascii_case("all") {
        return Ok(Mode::ALL.to_vec());
    }
    spec.split(',').map(str::parse).collect()
}

fn read(path: &PathBuf) -> Result<String, ExitCode> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(1)
    })
}

fn fail(e: PipelineError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn write(path: &PathBuf, text: &str) -> Result<(), ExitCode> {
    fs::write(path, text).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::FAILURE
    })
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}

fn real_main(cli: Cli) -> Result<(), ExitCode> {
    match cli.cmd {
        Cmd::Run {
            mode,
            opt,
            analyses,
            strict_rp,
            repeat,
            report,
            output,
            input,
        } => {
            let src = read(&input)?;
            let cfg = RunConfig {
                mode,
                opts: opt,
                analyses,
                strict_rp,
                ..RunConfig::new(mode)
            };
            let out = pipeline::run_repeated(&src, &cfg, repeat).map_err(fail)?;
            let json = serde_json::to_string_pretty(&out.report).expect("report serializes");
            match report {
                Some(p) => write(&p, &json)?,
                None => eprintln!("{json}"),
            }
            match output {
                Some(p) => write(&p, &out.optimized)?,
                None => print!("{}", out.optimized),
            }
        }
        Cmd::Gen {
            seed,
            nodes,
            pc,
            barriers,
            count,
            out,
        } => {
            fs::create_dir_all(&out).map_err(|e| {
                eprintln!("{}: {e}", out.display());
                ExitCode::FAILURE
            })?;
            for i in 0..count {
                let p = GenParams {
                    seed: seed + i as u64,
                    nodes,
                    pc,
                    barriers,
                };
                let text = gen::generate(&p);
                let c = gen::characteristics(&Program::parse(&text).expect("generated text parses"));
                let path = out.join(format!("gen_s{}_n{nodes}.hc", p.seed));
                write(&path, &text)?;
                println!("{}\tnodes={} pc={} barriers={}", path.display(), c.nodes, c.pc, c.barriers);
            }
        }
        Cmd::Fuzz {
            trials,
            seed,
            modes: m,
            trace_len,
            corpus,
        } => {
            let modes = modes(&m).map_err(|e| {
                eprintln!("{e}");
                ExitCode::from(2)
            })?;
            let programs: Vec<String> = gen::corpus(seed, corpus.max(1), 60..250).into_iter().map(|c| c.1).collect();
            let cfg = FuzzConfig {
                seed,
                trials,
                modes,
                trace_len,
            };
            let v = fuzz::fuzz(&programs, &cfg);
            println!("{}", serde_json::to_string_pretty(&v).expect("verdict serializes"));
            if !v.passed() {
                return Err(ExitCode::from(MISMATCH));
            }
        }
        Cmd::Compare { modes: m, analyses, input } => {
            let src = read(&input)?;
            let modes = modes(&m).map_err(|e| {
                eprintln!("{e}");
                ExitCode::from(2)
            })?;
            let base = RunConfig {
                analyses,
                ..RunConfig::new(Mode::LzUpd)
            };
            let c = batch::compare_modes(&src, &modes, &base).map_err(fail)?;
            println!("{:<6}  {:<16}  {:>12}  opt", "mode", "digest", "transfers");
            for r in &c.runs {
                let o = r.report.opt.as_ref().expect("barrelim ran");
                println!(
                    "{:<6}  {:<16}  {:>12}  -{} barriers, {} merges, {} inlined, {} iterations",
                    r.report.mode.as_str(),
                    &r.report.digest[..16],
                    r.report.total_transfer_applications,
                    o.barriers_removed,
                    o.regions_merged,
                    o.calls_inlined,
                    o.iterations
                );
            }
            let (d, s) = (c.digests_agree(), c.sources_agree());
            println!("digests {}, optimized sources {}", agree(d), agree(s));
            if !(d && s) {
                return Err(ExitCode::from(MISMATCH));
            }
        }
    }
    Ok(())
}

fn agree(ok: bool) -> &'static str {
    if ok {
        "agree"
    } else {
        "DIFFER"
    }
}
