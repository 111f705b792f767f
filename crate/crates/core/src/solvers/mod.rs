//! CP-ALS (normal equations), CP-ALS-QR with a pluggable `𝒴` strategy, and
//! the extrapolated branch-reuse variant.

mod als;
mod qr;

pub use als::cp_als;
pub use qr::{als_qr_bre, cp_als_qr, cp_als_qr_observed, UpdateEvent};

pub use crate::dimtree::Strategy;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kruskal::KruskalModel;
use crate::linalg::normalize_columns;
use crate::tensor::{DenseTensor, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Als,
    AlsQr,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Als => "als",
            Algorithm::AlsQr => "als-qr",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "als" => Ok(Algorithm::Als),
            "als-qr" | "qr" => Ok(Algorithm::AlsQr),
            other => Err(Error::InvalidConfig(format!("unknown algorithm `{other}`"))),
        }
    }
}

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_ACTIVATION_GAP: f64 = 0.03;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub rank: usize,
    pub max_iterations: usize,
    /// Stop once a sweep ends with fitness at least this large.
    pub fitness_threshold: f64,
    pub algorithm: Algorithm,
    pub strategy: Strategy,
    pub extrapolation: bool,
    pub alpha: f64,
    /// Replaces the tabulated β once the activation gate opens.
    pub beta_override: Option<f64>,
    pub activation_gap: f64,
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, strategy: Strategy, rank: usize, max_iterations: usize) -> Self {
        Self {
            rank,
            max_iterations,
            fitness_threshold: 1.0,
            algorithm,
            strategy,
            extrapolation: false,
            alpha: DEFAULT_ALPHA,
            beta_override: None,
            activation_gap: DEFAULT_ACTIVATION_GAP,
            seed: 0,
        }
    }

    pub fn als(rank: usize, max_iterations: usize) -> Self {
        Self::new(Algorithm::Als, Strategy::Naive, rank, max_iterations)
    }

    pub fn qr(strategy: Strategy, rank: usize, max_iterations: usize) -> Self {
        Self::new(Algorithm::AlsQr, strategy, rank, max_iterations)
    }

    /// Branch-reuse QR with extrapolation enabled.
    pub fn bre(rank: usize, max_iterations: usize) -> Self {
        Self {
            extrapolation: true,
            ..Self::qr(Strategy::BranchReuse, rank, max_iterations)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_threshold(mut self, eps: f64) -> Self {
        self.fitness_threshold = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.rank == 0 {
            return bad("rank must be at least 1");
        }
        if self.max_iterations == 0 {
            return bad("at least one iteration is required");
        }
        if !(0.0..=1.0).contains(&self.fitness_threshold) {
            return bad("fitness threshold must lie in [0, 1]");
        }
        if !self.alpha.is_finite() || !self.activation_gap.is_finite() {
            return bad("alpha and activation gap must be finite");
        }
        if self.beta_override.is_some_and(|b| !b.is_finite()) {
            return bad("beta must be finite");
        }
        if self.algorithm == Algorithm::Als && self.extrapolation {
            return bad("extrapolation needs the QR solver");
        }
        Ok(())
    }
}

/// One sweep of a solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// One-based sweep number.
    pub iteration: usize,
    /// Zero-based modes in the order they were updated.
    pub update_order: Vec<usize>,
    pub fitness: f64,
    pub raw_radicand: f64,
    pub wall_seconds: f64,
    /// Cumulative TTMs read directly from the input tensor.
    pub root_ttm_count: u64,
    /// Cumulative flops of the dominant kernel (MTTKRP or TTM).
    pub flops: u128,
    /// β applied during this sweep, 0 when extrapolation was off.
    pub beta_used: f64,
    /// Whether any normal-equation solve needed the ridge fallback.
    pub regularized: bool,
}

#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub model: KruskalModel,
    pub trace: Vec<TraceRow>,
}

impl SolverOutput {
    pub fn final_fitness(&self) -> f64 {
        self.trace.last().map_or(0.0, |r| r.fitness)
    }
}

/// Runs the solver selected by `cfg`.
pub fn decompose(x: &DenseTensor, cfg: &SolverConfig, init: Option<&KruskalModel>) -> Result<SolverOutput> {
    match (cfg.algorithm, cfg.extrapolation) {
        (Algorithm::Als, _) => cp_als(x, cfg, init),
        (Algorithm::AlsQr, false) => cp_als_qr(x, cfg, init),
        (Algorithm::AlsQr, true) => als_qr_bre(x, cfg, init),
    }
}

/// `Q₀ᵏ + β(Q₀ᵏ − α·Q₀ᵏ⁻¹)`; exactly `q0_now` when `β = 0`.
pub fn extrapolate_q0(q0_now: &Matrix, q0_prev: &Matrix, beta: f64, alpha: f64) -> Result<Matrix> {
    if q0_now.shape() != q0_prev.shape() {
        return Err(Error::DimensionMismatch(format!(
            "Q0 {:?} vs previous {:?}",
            q0_now.shape(),
            q0_prev.shape()
        )));
    }
    if beta == 0.0 {
        return Ok(q0_now.clone());
    }
    let data = q0_now
        .as_slice()
        .iter()
        .zip(q0_prev.as_slice())
        .map(|(&now, &prev)| now + beta * (now - alpha * prev))
        .collect();
    Matrix::from_vec(q0_now.rows(), q0_now.cols(), data)
}

/// β from consecutive sweep fitness values, or `None` while they still
/// differ by at least `gap_threshold`.
pub fn select_beta(fitness_prev: f64, fitness_now: f64, gap_threshold: f64) -> Option<f64> {
    let prev = fitness_prev.clamp(0.0, 1.0);
    let now = fitness_now.clamp(0.0, 1.0);
    if (now - prev).abs() >= gap_threshold {
        return None;
    }
    Some(if now > 0.90 {
        1.0 / 2000.0
    } else if now >= 0.70 {
        1.0 / 500.0
    } else {
        1.0 / 250.0
    })
}

/// Initial factors: the given model's, or i.i.d. standard normal entries
/// drawn mode by mode in row-major order, then column-normalized.
pub(crate) fn initial_factors(x: &DenseTensor, cfg: &SolverConfig, init: Option<&KruskalModel>) -> Result<Vec<Matrix>> {
    if let Some(m) = init {
        if m.rank() != cfg.rank {
            return Err(Error::InvalidConfig(format!(
                "initial model has rank {}, configured rank is {}",
                m.rank(),
                cfg.rank
            )));
        }
        if m.dims() != x.dims() {
            return Err(Error::DimensionMismatch(format!(
                "initial model dims {:?} vs tensor {:?}",
                m.dims(),
                x.dims()
            )));
        }
        return Ok(m.factors().iter().map(|f| normalize_columns(f).0).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(x.dims()
        .iter()
        .map(|&d| {
            let a = Matrix::from_fn(d, cfg.rank, |_, _| StandardNormal.sample(&mut rng));
            normalize_columns(&a).0
        })
        .collect())
}

pub(crate) fn check_input(x: &DenseTensor, cfg: &SolverConfig) -> Result<f64> {
    cfg.validate()?;
    if x.order() < 2 {
        return Err(Error::InvalidConfig("the input tensor needs at least two modes".into()));
    }
    x.check_finite()?;
    let norm_sq: f64 = x.as_slice().iter().map(|v| v * v).sum();
    if norm_sq == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(norm_sq)
}
