//! Acceptance suite. Runs without the libtest harness so each criterion
//! prints exactly one PASS/FAIL line; exits nonzero if any criterion fails.

use std::time::Instant;

use cpqr::dimtree::{build_schedule, closed_form_terms, measured_cost, CostCategory, ModeSet, Strategy};
use cpqr::io::format_trace;
use cpqr::kruskal::fitness_direct;
use cpqr::solvers::{cp_als, cp_als_qr, cp_als_qr_observed, decompose, select_beta, SolverConfig, SolverOutput};
use cpqr::synth::{assemble_noisy_tensor, noise_ratio, SynthSpec};
use cpqr::tensor::{frobenius_norm, multi_ttm};
use cpqr::{DenseTensor, Matrix, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_TOL: f64 = 1e-12;
const ALS_QR_FACTOR_TOL: f64 = 1e-8;
const TREE_TRACE_TOL: f64 = 1e-10;
const MONOTONE_SLACK: f64 = 1e-9;
const Q0_TOL: f64 = 1e-12;
const FAST_FITNESS_TOL: f64 = 1e-8;
const GRAM_TOL: f64 = 1e-10;
const NOISE_RATIO_TOL: f64 = 1e-10;
const RECOVERY_FITNESS: f64 = 0.99;
const RECOVERY_MIN_SEEDS: usize = 7;
const SPEED_RATIO_MAX: f64 = 0.8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn uniform_tensor(dims: &[usize], seed: u64) -> DenseTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseTensor::from_fn(Shape::new(dims.to_vec()).unwrap(), |_| rng.random_range(-1.0..1.0))
}

fn rel(a: &DenseTensor, b: &DenseTensor) -> f64 {
    frobenius_norm(&a.sub(b).unwrap()) / frobenius_norm(b).max(f64::MIN_POSITIVE)
}

fn root_category(order: usize) -> CostCategory {
    CostCategory {
        free: ModeSet::full(order),
        contracted: 0,
    }
}

fn c1_counts() -> Outcome {
    let start = Instant::now();
    let mut got = Vec::new();
    for (order, dims) in [(3, vec![30, 31, 32]), (4, vec![12, 13, 14, 15])] {
        for st in Strategy::ALL {
            let s = build_schedule(order, st, 3).unwrap();
            got.push(measured_cost(&s, &dims, 5, 3).unwrap().root_ttm_count);
        }
    }
    let s = build_schedule(3, Strategy::BranchReuse, 3).unwrap();
    let br = measured_cost(&s, &[30, 31, 32], 5, 3).unwrap();
    let tallies = [
        br.count(&[0, 1, 2], 0),
        br.count(&[0, 1], 1),
        br.count(&[0, 2], 1),
        br.count(&[1, 2], 1),
    ];
    let secs = start.elapsed().as_secs_f64();
    let pass = got == [9, 6, 4, 12, 6, 4] && tallies == [4, 2, 4, 3] && secs < 1.0;
    outcome(
        pass,
        format!("root counts {got:?}, N=3 branch-reuse tallies {tallies:?}, {secs:.3}s"),
    )
}

fn c2_leading_terms() -> Outcome {
    let mut symbolic = Vec::new();
    let mut numeric = Vec::new();
    for order in [3, 4] {
        let dims = vec![64usize; order];
        let volume: u128 = dims.iter().map(|&d| d as u128).product();
        for st in Strategy::ALL {
            let lead: u64 = closed_form_terms(order, st)
                .unwrap()
                .iter()
                .filter(|t| t.modes == ModeSet::full(order) && t.r_power == 1)
                .map(|t| t.coefficient)
                .sum();
            symbolic.push(lead);
            let s = build_schedule(order, st, 3).unwrap();
            let m = measured_cost(&s, &dims, 8, 3).unwrap();
            let flops = m.categories.get(&root_category(order)).map_or(0, |t| t.flops);
            numeric.push(if flops.is_multiple_of(volume * 8) {
                (flops / (volume * 8)) as u64
            } else {
                0
            });
        }
    }
    let third = 3 * symbolic[2] == 2 * symbolic[1] && 3 * symbolic[5] == 2 * symbolic[4];
    let pass = symbolic == [18, 12, 8, 24, 12, 8] && numeric == symbolic && third;
    outcome(pass, format!("closed form {symbolic:?}, measured {numeric:?}"))
}

fn c3_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for dims in [vec![9, 8, 7], vec![7, 6, 5, 4]] {
        for seed in 0..10u64 {
            let x = uniform_tensor(&dims, 100 + seed);
            for st in Strategy::ALL {
                let cfg = SolverConfig::qr(st, 3, 6).with_seed(seed);
                cp_als_qr_observed(&x, &cfg, None, &mut |e| {
                    let pairs: Vec<(usize, &Matrix)> = (0..dims.len())
                        .filter(|&k| k != e.mode)
                        .map(|k| (k, &e.q_transposed[k]))
                        .collect();
                    let want = multi_ttm(&x, &pairs).unwrap();
                    worst = worst.max(rel(e.y, &want));
                    checked += 1;
                })
                .unwrap();
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let expected = 10 * 3 * 6 * (3 + 4);
    let pass = worst <= ORACLE_TOL && checked == expected && secs < 10.0;
    outcome(
        pass,
        format!("{checked} Y tensors, max rel err {worst:.2e}, {secs:.2}s"),
    )
}

fn c4_solver_agreement() -> Outcome {
    let mut worst_factor = 0.0f64;
    let mut worst_trace = 0.0f64;
    for seed in 0..10u64 {
        let x = uniform_tensor(&[8, 7, 6], 200 + seed);
        let als = cp_als(&x, &SolverConfig::als(3, 1).with_seed(seed), None).unwrap();
        let qr = cp_als_qr(&x, &SolverConfig::qr(Strategy::Naive, 3, 1).with_seed(seed), None).unwrap();
        for (a, b) in als.model.factors().iter().zip(qr.model.factors()) {
            worst_factor = worst_factor.max(a.relative_diff(b).unwrap());
        }
        let naive = cp_als_qr(&x, &SolverConfig::qr(Strategy::Naive, 3, 5).with_seed(seed), None).unwrap();
        let tree = cp_als_qr(&x, &SolverConfig::qr(Strategy::DimTree, 3, 5).with_seed(seed), None).unwrap();
        for (a, b) in naive.trace.iter().zip(&tree.trace) {
            worst_trace = worst_trace.max((a.fitness - b.fitness).abs());
        }
    }
    let pass = worst_factor <= ALS_QR_FACTOR_TOL && worst_trace <= TREE_TRACE_TOL;
    outcome(
        pass,
        format!("ALS vs QR factors {worst_factor:.2e}, naive vs dim-tree fitness {worst_trace:.2e}"),
    )
}

/// Criteria 5 and 6 share their runs.
fn c5_c6_monotone_and_q0() -> (Outcome, Outcome) {
    let mut worst_drop = 0.0f64;
    let mut worst_q0 = 0.0f64;
    let mut q0_seen = 0usize;
    for seed in 0..10u64 {
        let x = uniform_tensor(&[20, 20, 20], 300 + seed);
        let mut runs: Vec<SolverOutput> = vec![cp_als(&x, &SolverConfig::als(5, 30).with_seed(seed), None).unwrap()];
        for st in Strategy::ALL {
            let cfg = SolverConfig::qr(st, 5, 30).with_seed(seed);
            runs.push(
                cp_als_qr_observed(&x, &cfg, None, &mut |e| {
                    let q = e.q0;
                    let mut dev = (q[(0, 0)] - 1.0).abs();
                    for j in 1..q.cols() {
                        dev = dev.max(q[(0, j)].abs());
                    }
                    for i in 1..q.rows() {
                        dev = dev.max(q[(i, 0)].abs());
                    }
                    worst_q0 = worst_q0.max(dev);
                    q0_seen += 1;
                })
                .unwrap(),
            );
        }
        for out in &runs {
            for w in out.trace.windows(2) {
                worst_drop = worst_drop.max(w[0].fitness - w[1].fitness);
            }
        }
    }
    (
        outcome(
            worst_drop <= MONOTONE_SLACK,
            format!("largest fitness decrease {worst_drop:.2e} over 40 runs"),
        ),
        outcome(
            worst_q0 <= Q0_TOL && q0_seen == 10 * 3 * 30 * 3,
            format!("{q0_seen} Q0 checks, max deviation {worst_q0:.2e}"),
        ),
    )
}

fn c7_fast_fitness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for state in 0..20u64 {
        let order = rng.random_range(2..=4);
        let dims: Vec<usize> = loop {
            let d: Vec<usize> = (0..order).map(|_| rng.random_range(2..=10)).collect();
            if d.iter().product::<usize>() <= 1000 {
                break d;
            }
        };
        let rank = rng.random_range(1..=dims.iter().copied().min().unwrap().min(4));
        let sweeps = rng.random_range(1..=5);
        let x = uniform_tensor(&dims, 700 + state);
        let mut cfg = if state % 2 == 0 {
            SolverConfig::als(rank, sweeps)
        } else {
            SolverConfig::qr(Strategy::Naive, rank, sweeps)
        };
        cfg.seed = state;
        let out = decompose(&x, &cfg, None).unwrap();
        let direct = fitness_direct(&x, &out.model).unwrap().fitness;
        worst = worst.max((out.final_fitness() - direct).abs() / direct.abs().max(1e-12));
    }
    outcome(
        worst <= FAST_FITNESS_TOL,
        format!("20 states, max rel diff {worst:.2e}"),
    )
}

fn c8_beta_zero() -> Outcome {
    let spec = SynthSpec {
        dims: vec![15, 14, 13],
        true_rank: 4,
        collinearity: vec![0.6; 3],
        l1: 1.0,
        l2: 0.0,
        seed: 8,
    };
    let (x, _) = assemble_noisy_tensor(&spec).unwrap();
    let br = decompose(&x, &SolverConfig::qr(Strategy::BranchReuse, 4, 25).with_seed(3), None).unwrap();
    let mut cfg = SolverConfig::bre(4, 25).with_seed(3);
    cfg.beta_override = Some(0.0);
    let bre = decompose(&x, &cfg, None).unwrap();
    let a = format_trace(&br.trace, true);
    let b = format_trace(&bre.trace, true);
    outcome(
        a == b && a.lines().count() == 26,
        format!("{} trace bytes, identical: {}", a.len(), a == b),
    )
}

fn c9_beta_table() -> Outcome {
    let cases = [
        (select_beta(0.50, 0.53, 0.03), None),
        (select_beta(0.60, 0.95, 0.03), None),
        (select_beta(0.949, 0.95, 0.03), Some(1.0 / 2000.0)),
        (select_beta(0.79, 0.80, 0.03), Some(1.0 / 500.0)),
        (select_beta(0.49, 0.50, 0.03), Some(1.0 / 250.0)),
    ];
    let pass = cases.iter().all(|(got, want)| got == want);
    let got: Vec<_> = cases.iter().map(|c| c.0).collect();
    outcome(pass, format!("{got:?}"))
}

fn c10_generator() -> Outcome {
    let spec = SynthSpec {
        dims: vec![100, 60, 40],
        true_rank: 20,
        collinearity: vec![0.9, 0.5, 0.0],
        l1: 0.0,
        l2: 0.0,
        seed: 10,
    };
    let (_, truth) = assemble_noisy_tensor(&spec).unwrap();
    let mut gram_err = 0.0f64;
    for (f, &c) in truth.factors().iter().zip(&spec.collinearity) {
        let k = Matrix::from_fn(20, 20, |i, j| if i == j { 1.0 } else { c });
        gram_err = gram_err.max(f.gram().max_abs_diff(&k).unwrap());
    }
    let mut ratio_err = 0.0f64;
    for l1 in [0.01, 1.0, 50.0] {
        let s = SynthSpec {
            dims: vec![30, 25, 20],
            true_rank: 5,
            collinearity: vec![0.5; 3],
            l1,
            l2: 0.0,
            seed: 10,
        };
        let (x, truth) = assemble_noisy_tensor(&s).unwrap();
        let clean = cpqr::kruskal::reconstruct(&truth, x.shape()).unwrap();
        let ratio = frobenius_norm(&x.sub(&clean).unwrap()) / frobenius_norm(&clean);
        ratio_err = ratio_err.max((ratio - noise_ratio(l1)).abs());
    }
    outcome(
        gram_err <= GRAM_TOL && ratio_err <= NOISE_RATIO_TOL,
        format!("Gram err {gram_err:.2e}, noise ratio err {ratio_err:.2e}"),
    )
}

fn variants(rank: usize, iters: usize) -> Vec<(&'static str, SolverConfig)> {
    vec![
        ("als", SolverConfig::als(rank, iters)),
        ("qr", SolverConfig::qr(Strategy::Naive, rank, iters)),
        ("qr-dt", SolverConfig::qr(Strategy::DimTree, rank, iters)),
        ("qr-br", SolverConfig::qr(Strategy::BranchReuse, rank, iters)),
        ("qr-bre", SolverConfig::bre(rank, iters)),
    ]
}

fn c11_recovery() -> Outcome {
    let start = Instant::now();
    let mut hits = vec![0usize; 5];
    let mut names = Vec::new();
    for seed in 0..10u64 {
        let spec = SynthSpec {
            dims: vec![50, 50, 50],
            true_rank: 10,
            collinearity: vec![0.5; 3],
            l1: 0.0,
            l2: 0.0,
            seed: 1100 + seed,
        };
        let (x, _) = assemble_noisy_tensor(&spec).unwrap();
        names.clear();
        for (i, (name, cfg)) in variants(10, 50).into_iter().enumerate() {
            let cfg = cfg.with_seed(seed).with_threshold(RECOVERY_FITNESS);
            let out = decompose(&x, &cfg, None).unwrap();
            if out.trace.iter().any(|r| r.fitness >= RECOVERY_FITNESS) {
                hits[i] += 1;
            }
            names.push(name);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let summary: Vec<String> = names.iter().zip(&hits).map(|(n, h)| format!("{n} {h}/10")).collect();
    let pass = hits.iter().all(|&h| h >= RECOVERY_MIN_SEEDS) && secs < 120.0;
    outcome(pass, format!("{}, {secs:.1}s", summary.join(", ")))
}

fn mean_sweep_seconds(x: &DenseTensor, cfg: &SolverConfig) -> f64 {
    let out = decompose(x, cfg, None).unwrap();
    out.trace.iter().map(|r| r.wall_seconds).sum::<f64>() / out.trace.len() as f64
}

fn c12_speed_and_bre_report() -> Outcome {
    let x = uniform_tensor(&[200, 200, 200], 1200);
    let mut t = [0.0f64; 3];
    for (slot, st) in t.iter_mut().zip(Strategy::ALL) {
        *slot = mean_sweep_seconds(&x, &SolverConfig::qr(st, 20, 10).with_seed(1));
    }
    let [naive, tree, reuse] = t;
    let pass = reuse < tree && tree < naive && reuse <= SPEED_RATIO_MAX * naive;

    let mut diffs = Vec::new();
    for seed in 0..10u64 {
        let spec = SynthSpec {
            dims: vec![120, 120, 120],
            true_rank: 20,
            collinearity: vec![0.9; 3],
            l1: 0.01,
            l2: 0.0,
            seed: 1210 + seed,
        };
        let (x, _) = assemble_noisy_tensor(&spec).unwrap();
        let br = decompose(
            &x,
            &SolverConfig::qr(Strategy::BranchReuse, 20, 20).with_seed(seed),
            None,
        )
        .unwrap();
        let bre = decompose(&x, &SolverConfig::bre(20, 20).with_seed(seed), None).unwrap();
        diffs.push(bre.final_fitness() - br.final_fitness());
    }
    let wins = diffs.iter().filter(|&&d| d >= 0.0).count();
    let dist: Vec<String> = diffs.iter().map(|d| format!("{d:+.2e}")).collect();
    outcome(
        pass,
        format!(
            "mean sweep naive {:.1}ms, dim-tree {:.1}ms, branch-reuse {:.1}ms (ratio {:.2}); \
             report: BRE >= BR in {wins}/10 seeds, final fitness BRE-BR [{}]",
            naive * 1e3,
            tree * 1e3,
            reuse * 1e3,
            reuse / naive,
            dist.join(" ")
        ),
    )
}

fn main() {
    let (c5, c6) = c5_c6_monotone_and_q0();
    let results = [
        ("1 count exactness", c1_counts()),
        ("2 leading-term reduction", c2_leading_terms()),
        ("3 schedule oracle equivalence", c3_oracle()),
        ("4 solver agreement", c4_solver_agreement()),
        ("5 fitness monotonicity", c5),
        ("6 Q0 structure", c6),
        ("7 fast fitness identity", c7_fast_fitness()),
        ("8 beta=0 reduction", c8_beta_zero()),
        ("9 beta selection table", c9_beta_table()),
        ("10 synthetic generator", c10_generator()),
        ("11 recovery", c11_recovery()),
        ("12 relative speed", c12_speed_and_bre_report()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!(
            "{} criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
