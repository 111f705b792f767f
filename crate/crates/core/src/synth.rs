//! Synthetic CP tensors with prescribed factor collinearity and noise.
//!
//! Random numbers come from ChaCha8 seeded with `seed_from_u64`; normal
//! variates use `rand_distr::StandardNormal` (ziggurat). The factors, the
//! homoscedastic noise and the heteroscedastic noise each draw from their
//! own ChaCha stream so changing one noise level leaves the other draws
//! untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::kruskal::{reconstruct, KruskalModel};
use crate::linalg::{cholesky, thin_qr};
use crate::tensor::{frobenius_norm, DenseTensor, Matrix, Shape};

const FACTOR_STREAM: u64 = 0;
const HOMOSCEDASTIC_STREAM: u64 = 1;
const HETEROSCEDASTIC_STREAM: u64 = 2;
const HETEROSCEDASTIC_SD: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub dims: Vec<usize>,
    pub true_rank: usize,
    /// One value per mode, each in `[0, 1)`.
    pub collinearity: Vec<f64>,
    /// Homoscedastic noise level in `[0, 100)`.
    pub l1: f64,
    /// Heteroscedastic noise level in `[0, 100)`.
    pub l2: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<Shape> {
        let shape = Shape::new(self.dims.clone())?;
        let bad = |m: String| Err(Error::Generation(m));
        if self.true_rank == 0 {
            return bad("rank must be positive".into());
        }
        if let Some(&d) = self.dims.iter().filter(|&&d| d < self.true_rank).min() {
            return bad(format!("rank {} exceeds extent {d}", self.true_rank));
        }
        if self.collinearity.len() != self.dims.len() {
            return bad(format!(
                "{} collinearity values for {} modes",
                self.collinearity.len(),
                self.dims.len()
            ));
        }
        if let Some(c) = self.collinearity.iter().find(|c| !(0.0..1.0).contains(*c)) {
            return bad(format!("collinearity {c} outside [0, 1)"));
        }
        for (name, l) in [("l1", self.l1), ("l2", self.l2)] {
            if !(0.0..100.0).contains(&l) {
                return bad(format!("{name} = {l} outside [0, 100)"));
            }
        }
        Ok(shape)
    }
}

/// `(1/√(100/l − 1))`, the noise-to-signal norm ratio for level `l`.
pub fn noise_ratio(level: f64) -> f64 {
    1.0 / (100.0 / level - 1.0).sqrt()
}

/// `Q·C` where `Q` orthonormalizes an `extent×rank` standard-normal matrix
/// and `C` is the upper Cholesky factor of `(1−c)·I + c·11ᵀ`, so the
/// result has Gram matrix exactly `K`.
pub fn collinear_factor(extent: usize, rank: usize, c: f64, rng: &mut impl Rng) -> Result<Matrix> {
    if rank == 0 || rank > extent {
        return Err(Error::Generation(format!(
            "rank {rank} needs 1 ≤ rank ≤ extent {extent}"
        )));
    }
    if !(0.0..1.0).contains(&c) {
        return Err(Error::Generation(format!("collinearity {c} outside [0, 1)")));
    }
    let k = Matrix::from_fn(rank, rank, |i, j| if i == j { 1.0 } else { c });
    let upper = cholesky(&k)
        .ok_or_else(|| Error::Generation(format!("K is not positive definite for c = {c}")))?
        .transpose();
    let m = Matrix::from_fn(extent, rank, |_, _| StandardNormal.sample(rng));
    thin_qr(&m).q.matmul(&upper)
}

/// `(𝒳″, ground truth)`; noise stages with level 0 are skipped.
pub fn assemble_noisy_tensor(spec: &SynthSpec) -> Result<(DenseTensor, KruskalModel)> {
    let shape = spec.validate()?;
    let stream = |s: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(s);
        rng
    };
    let mut rng = stream(FACTOR_STREAM);
    let factors = spec
        .dims
        .iter()
        .zip(&spec.collinearity)
        .map(|(&d, &c)| collinear_factor(d, spec.true_rank, c, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let truth = KruskalModel::new(vec![1.0; spec.true_rank], factors)?;
    let mut x = reconstruct(&truth, &shape)?;

    if spec.l1 > 0.0 {
        let mut rng = stream(HOMOSCEDASTIC_STREAM);
        let noise = DenseTensor::from_fn(shape.clone(), |_| StandardNormal.sample(&mut rng));
        x = add_noise(&x, &noise, spec.l1)?;
    }
    if spec.l2 > 0.0 {
        let mut rng = stream(HETEROSCEDASTIC_STREAM);
        let normal = Normal::new(0.0, HETEROSCEDASTIC_SD).expect("valid standard deviation");
        let noise = DenseTensor::from_fn(shape.clone(), |_| normal.sample(&mut rng));
        x = add_noise(&x, &noise, spec.l2)?;
    }
    x.check_finite()?;
    Ok((x, truth))
}

/// `x + ratio(l)·(‖x‖/‖noise‖)·noise`.
fn add_noise(x: &DenseTensor, noise: &DenseTensor, level: f64) -> Result<DenseTensor> {
    let nn = frobenius_norm(noise);
    if nn == 0.0 {
        return Err(Error::Generation("noise draw has zero norm".into()));
    }
    x.add_scaled(noise, noise_ratio(level) * frobenius_norm(x) / nn)
}
