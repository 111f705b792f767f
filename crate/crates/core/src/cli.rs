//! Command-line front end: `synth`, `decompose`, `counts`, `info`.
//!
//! Exit codes: 0 success, 1 count mismatch, 2 invalid flags or
//! configuration, 3 I/O, 4 file format, 5 solver failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::dimtree::{build_schedule, closed_form_cost, measured_cost, Strategy};
use crate::error::Error;
use crate::io;
use crate::solvers::{decompose, SolverConfig, DEFAULT_ACTIVATION_GAP, DEFAULT_ALPHA};
use crate::synth::{assemble_noisy_tensor, SynthSpec};

pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_FORMAT: i32 = 4;
pub const EXIT_SOLVER: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "cpqr", version, about = "Dense CP decomposition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a noisy low-rank tensor with collinear factors.
    Synth {
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long)]
        rank: usize,
        /// One value per mode, or a single value for all modes.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        collinearity: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        l1: f64,
        #[arg(long, default_value_t = 0.0)]
        l2: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the ground-truth model.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Fit a CP model and write the model and per-sweep trace.
    Decompose {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Alg::QrBr)]
        alg: Alg,
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value_t = 50)]
        iters: usize,
        /// Stop once fitness reaches this value; 1 runs every sweep.
        #[arg(long, default_value_t = 1.0)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Fixed β once the gate opens (qr-bre only).
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_ACTIVATION_GAP)]
        gap: f64,
        /// Write 0 in the trace's seconds column.
        #[arg(long)]
        zero_time: bool,
    },
    /// Compare closed-form and measured TTM costs of the three schedules.
    Counts {
        #[arg(long)]
        order: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long)]
        rank: usize,
    },
    /// Print the header of a tensor or model file.
    Info {
        #[arg(short, long)]
        input: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Alg {
    Als,
    Qr,
    QrDt,
    QrBr,
    QrBre,
}

impl Alg {
    fn config(self, rank: usize, iters: usize) -> SolverConfig {
        match self {
            Alg::Als => SolverConfig::als(rank, iters),
            Alg::Qr => SolverConfig::qr(Strategy::Naive, rank, iters),
            Alg::QrDt => SolverConfig::qr(Strategy::DimTree, rank, iters),
            Alg::QrBr => SolverConfig::qr(Strategy::BranchReuse, rank, iters),
            Alg::QrBre => SolverConfig::bre(rank, iters),
        }
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run_command(argv: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Format(_) => EXIT_FORMAT,
        Error::InvalidConfig(_) | Error::Generation(_) | Error::InvalidShape(_) | Error::UnsupportedOrder { .. } => {
            EXIT_USAGE
        }
        _ => EXIT_SOLVER,
    }
}

fn dispatch(cmd: Command) -> crate::Result<i32> {
    match cmd {
        Command::Synth {
            dims,
            rank,
            collinearity,
            l1,
            l2,
            seed,
            output,
            truth,
        } => {
            let collinearity = match collinearity.as_slice() {
                [c] => vec![*c; dims.len()],
                _ => collinearity,
            };
            let spec = SynthSpec {
                dims,
                true_rank: rank,
                collinearity,
                l1,
                l2,
                seed,
            };
            let (x, model) = assemble_noisy_tensor(&spec)?;
            io::write_tensor(&output, &x)?;
            if let Some(p) = truth {
                io::write_model(p, &model)?;
            }
            Ok(0)
        }
        Command::Decompose {
            input,
            alg,
            rank,
            iters,
            tol,
            seed,
            trace,
            output,
            alpha,
            beta,
            gap,
            zero_time,
        } => {
            if beta.is_some() && alg != Alg::QrBre {
                return Err(Error::InvalidConfig("--beta needs --alg qr-bre".into()));
            }
            let mut cfg = alg.config(rank, iters).with_seed(seed).with_threshold(tol);
            cfg.alpha = alpha;
            cfg.beta_override = beta;
            cfg.activation_gap = gap;
            let x = io::read_tensor(&input)?;
            let out = decompose(&x, &cfg, None)?;
            if let Some(p) = trace {
                std::fs::write(p, io::format_trace(&out.trace, zero_time))?;
            }
            if let Some(p) = output {
                io::write_model(p, &out.model)?;
            }
            println!("{}", out.final_fitness());
            Ok(0)
        }
        Command::Counts { order, dims, rank } => counts(order, &dims, rank),
        Command::Info { input } => {
            println!("{}", io::inspect(&std::fs::read(input)?)?);
            Ok(0)
        }
    }
}

fn counts(order: usize, dims: &[usize], rank: usize) -> crate::Result<i32> {
    let expected: [u64; 3] = match order {
        3 => [9, 6, 4],
        4 => [12, 6, 4],
        _ => {
            return Err(Error::InvalidConfig(format!("--order must be 3 or 4, got {order}")));
        }
    };
    if dims.len() != order {
        return Err(Error::InvalidConfig(format!(
            "{} extents given for order {order}",
            dims.len()
        )));
    }
    println!(
        "{:<13} {:>9} {:>24} {:>24}",
        "strategy", "root_ttms", "closed_form_flops", "measured_flops"
    );
    let mut ok = true;
    for (strategy, want) in Strategy::ALL.into_iter().zip(expected) {
        let schedule = build_schedule(order, strategy, 3)?;
        let measured = measured_cost(&schedule, dims, rank, 3)?;
        let closed = closed_form_cost(order, strategy, dims, rank)?;
        let flag = if measured.root_ttm_count == want {
            ""
        } else {
            "  MISMATCH"
        };
        ok &= measured.root_ttm_count == want;
        println!(
            "{:<13} {:>9} {:>24} {:>24}{flag}",
            strategy.name(),
            measured.root_ttm_count,
            closed,
            measured.flops
        );
    }
    Ok(if ok { 0 } else { EXIT_MISMATCH })
}
