use std::time::Instant;

use super::{check_input, initial_factors, Algorithm, SolverConfig, SolverOutput, TraceRow};
use crate::error::{Error, Result};
use crate::kruskal::{fitness_fast_als, KruskalModel};
use crate::linalg::{normalize_columns, solve_spd};
use crate::tensor::{hadamard, mttkrp, DenseTensor, Matrix};

/// CP-ALS through the normal equations `Â·Γ = Mₙ`.
pub fn cp_als(x: &DenseTensor, cfg: &SolverConfig, init: Option<&KruskalModel>) -> Result<SolverOutput> {
    if cfg.algorithm != Algorithm::Als {
        return Err(Error::InvalidConfig(format!(
            "cp_als called with algorithm {}",
            cfg.algorithm
        )));
    }
    let norm_x_sq = check_input(x, cfg)?;
    let order = x.order();
    let rank = cfg.rank;
    let mut factors = initial_factors(x, cfg, init)?;
    let mut grams: Vec<Matrix> = factors.iter().map(Matrix::gram).collect();
    let mut lambda = vec![1.0; rank];
    let mut trace = Vec::new();
    let mut flops: u128 = 0;
    let per_mttkrp = 2 * x.numel() as u128 * rank as u128;

    for it in 1..=cfg.max_iterations {
        let start = Instant::now();
        let mut regularized = false;
        let mut last = None;
        for n in 0..order {
            let mut gamma = Matrix::filled(rank, rank, 1.0);
            for (k, s) in grams.iter().enumerate() {
                if k != n {
                    gamma = hadamard(&gamma, s)?;
                }
            }
            let m = mttkrp(x, &factors, n)?;
            flops += per_mttkrp;
            let sol = solve_spd(&gamma, &m)?;
            regularized |= sol.regularized;
            let (a, l) = normalize_columns(&sol.x);
            grams[n] = a.gram();
            factors[n] = a;
            lambda = l;
            if n + 1 == order {
                last = Some((m, sol.x, gamma));
            }
        }
        let (m, a_hat, gamma) = last.expect("order >= 2");
        let fit = fitness_fast_als(norm_x_sq, &m, &a_hat, &gamma, &lambda, &grams[order - 1])?;
        trace.push(TraceRow {
            iteration: it,
            update_order: (0..order).collect(),
            fitness: fit.fitness,
            raw_radicand: fit.raw_radicand,
            wall_seconds: start.elapsed().as_secs_f64(),
            root_ttm_count: 0,
            flops,
            beta_used: 0.0,
            regularized,
        });
        if fit.fitness >= cfg.fitness_threshold {
            break;
        }
    }
    Ok(SolverOutput {
        model: KruskalModel::new(lambda, factors)?,
        trace,
    })
}
