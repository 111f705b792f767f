use std::time::Instant;

use super::{
    check_input, extrapolate_q0, initial_factors, select_beta, Algorithm, SolverConfig, SolverOutput, Strategy,
    TraceRow,
};
use crate::dimtree::{build_schedule, execute, FactorSource, IntermediateCache};
use crate::error::{Error, Result};
use crate::kruskal::{fitness_fast_qr, KruskalModel};
use crate::linalg::{normalize_columns, solve_rows_lower_triangular, thin_qr};
use crate::tensor::{khatri_rao, unfold, DenseTensor, Matrix};

/// Normalized factors with their thin-QR pairs and change counters.
struct FactorState {
    factors: Vec<Matrix>,
    r: Vec<Matrix>,
    qt: Vec<Matrix>,
    versions: Vec<u64>,
}

impl FactorState {
    fn new(factors: Vec<Matrix>) -> Self {
        let (r, qt) = factors
            .iter()
            .map(|a| {
                let qr = thin_qr(a);
                (qr.r, qr.q.transpose())
            })
            .unzip();
        let versions = vec![0; factors.len()];
        Self {
            factors,
            r,
            qt,
            versions,
        }
    }

    fn set(&mut self, mode: usize, a: Matrix) {
        let qr = thin_qr(&a);
        self.r[mode] = qr.r;
        self.qt[mode] = qr.q.transpose();
        self.factors[mode] = a;
        self.versions[mode] += 1;
    }
}

impl FactorSource for FactorState {
    fn q_transpose(&self, mode: usize) -> &Matrix {
        &self.qt[mode]
    }

    fn version(&self, mode: usize) -> u64 {
        self.versions[mode]
    }
}

/// What a QR solver sees right before it updates one factor.
#[derive(Debug)]
pub struct UpdateEvent<'a> {
    pub iteration: usize,
    pub mode: usize,
    /// `𝒳 ×ₖ Qₖᵀ` over all `k ≠ mode`, as produced by the schedule.
    pub y: &'a DenseTensor,
    /// Orthonormal factor of `Zₙ`, before any extrapolation.
    pub q0: &'a Matrix,
    pub r0: &'a Matrix,
    /// Current `Qₖᵀ` for every mode.
    pub q_transposed: &'a [Matrix],
}

/// CP-ALS-QR without extrapolation, with `𝒴` from `cfg.strategy`.
pub fn cp_als_qr(x: &DenseTensor, cfg: &SolverConfig, init: Option<&KruskalModel>) -> Result<SolverOutput> {
    if cfg.algorithm != Algorithm::AlsQr {
        return Err(Error::InvalidConfig(format!(
            "cp_als_qr called with algorithm {}",
            cfg.algorithm
        )));
    }
    if cfg.extrapolation {
        return Err(Error::InvalidConfig("extrapolation runs through als_qr_bre".into()));
    }
    run(x, cfg, init, cfg.strategy, false, &mut |_| {})
}

/// Branch-reuse CP-ALS-QR with `Q₀` extrapolation once the fitness gate opens.
pub fn als_qr_bre(x: &DenseTensor, cfg: &SolverConfig, init: Option<&KruskalModel>) -> Result<SolverOutput> {
    if cfg.algorithm != Algorithm::AlsQr {
        return Err(Error::InvalidConfig(format!(
            "als_qr_bre called with algorithm {}",
            cfg.algorithm
        )));
    }
    run(x, cfg, init, Strategy::BranchReuse, true, &mut |_| {})
}

/// Like [`cp_als_qr`] (or [`als_qr_bre`] when `cfg.extrapolation` is set),
/// calling `observer` before every factor update.
pub fn cp_als_qr_observed(
    x: &DenseTensor,
    cfg: &SolverConfig,
    init: Option<&KruskalModel>,
    observer: &mut dyn FnMut(&UpdateEvent<'_>),
) -> Result<SolverOutput> {
    if cfg.algorithm != Algorithm::AlsQr {
        return Err(Error::InvalidConfig(format!(
            "QR solver called with algorithm {}",
            cfg.algorithm
        )));
    }
    let strategy = if cfg.extrapolation {
        Strategy::BranchReuse
    } else {
        cfg.strategy
    };
    run(x, cfg, init, strategy, cfg.extrapolation, observer)
}

fn run(
    x: &DenseTensor,
    cfg: &SolverConfig,
    init: Option<&KruskalModel>,
    strategy: Strategy,
    extrapolate: bool,
    observer: &mut dyn FnMut(&UpdateEvent<'_>),
) -> Result<SolverOutput> {
    let norm_x_sq = check_input(x, cfg)?;
    let order = x.order();
    let rank = cfg.rank;
    for n in 0..order {
        let rows: usize = (0..order).filter(|&k| k != n).map(|k| x.dims()[k].min(rank)).product();
        if rows < rank {
            return Err(Error::InvalidConfig(format!(
                "rank {rank} is too large: Z for mode {} has only {rows} rows",
                n + 1
            )));
        }
    }
    let schedule = build_schedule(order, strategy, 1)?;
    let mut state = FactorState::new(initial_factors(x, cfg, init)?);
    let mut cache = IntermediateCache::new();
    let mut lambda = vec![1.0; rank];
    let mut history: Vec<Option<Matrix>> = vec![None; order];
    let mut beta: Option<f64> = None;
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut root_ttms = 0u64;
    let mut flops = 0u128;

    for it in 1..=cfg.max_iterations {
        let start = Instant::now();
        let plan = schedule.plan(it);
        let update_order = plan.update_order();
        let mut beta_used = 0.0;
        let mut last = None;
        for (pos, &n) in update_order.iter().enumerate() {
            let others: Vec<&Matrix> = (0..order).rev().filter(|&k| k != n).map(|k| &state.r[k]).collect();
            let z = thin_qr(&khatri_rao(&others)?);
            let (y, cost) = execute(&schedule, x, &state, &mut cache, it, n)?;
            root_ttms += cost.root_ttm_count;
            flops += cost.flops;
            observer(&UpdateEvent {
                iteration: it,
                mode: n,
                y: &y,
                q0: &z.q,
                r0: &z.r,
                q_transposed: &state.qt,
            });

            let yn = unfold(&y, n)?;
            let (v, extrapolated) = match (beta, &history[n]) {
                (Some(b), Some(prev)) => {
                    beta_used = b;
                    (yn.matmul(&extrapolate_q0(&z.q, prev, b, cfg.alpha)?)?, b != 0.0)
                }
                _ => (yn.matmul(&z.q)?, false),
            };
            let a_hat = solve_rows_lower_triangular(&z.r.transpose(), &v)?;
            let (a, l) = normalize_columns(&a_hat);
            state.set(n, a);
            lambda = l;
            if pos + 1 == order {
                // ⟨𝒳,𝒦⟩ = ⟨Y₍ₙ₎Q₀, ÂR₀ᵀ⟩ holds for any Â, but only with the
                // unextrapolated Q₀.
                let v = if extrapolated { yn.matmul(&z.q)? } else { v };
                last = Some((v, a_hat, z.r.clone()));
            }
            if extrapolate {
                history[n] = Some(z.q);
            }
        }
        let (v, a_hat, r0) = last.expect("order >= 2");
        let n_last = update_order[order - 1];
        let fit = fitness_fast_qr(norm_x_sq, &v, &a_hat, &r0, &state.r[n_last], &lambda)?;

        if extrapolate && beta.is_none() {
            if let Some(prev) = trace.last() {
                if let Some(b) = select_beta(prev.fitness, fit.fitness, cfg.activation_gap) {
                    beta = Some(cfg.beta_override.unwrap_or(b));
                }
            }
        }
        trace.push(TraceRow {
            iteration: it,
            update_order,
            fitness: fit.fitness,
            raw_radicand: fit.raw_radicand,
            wall_seconds: start.elapsed().as_secs_f64(),
            root_ttm_count: root_ttms,
            flops,
            beta_used,
            regularized: false,
        });
        if fit.fitness >= cfg.fitness_threshold {
            break;
        }
    }
    Ok(SolverOutput {
        model: KruskalModel::new(lambda, state.factors)?,
        trace,
    })
}
