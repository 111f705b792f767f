use std::collections::HashMap;

use super::cost::{CostCategory, CostReport};
use super::{ModeSet, Schedule, Source, Target};
use crate::error::{Error, Result};
use crate::tensor::{ttm, DenseTensor, Matrix};

/// Read access to the current orthonormal factors and their versions.
pub trait FactorSource {
    /// `Qₘᵀ` for the current factor of `mode`.
    fn q_transpose(&self, mode: usize) -> &Matrix;
    /// Bumped every time the factor of `mode` changes.
    fn version(&self, mode: usize) -> u64;
}

#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub tensor: DenseTensor,
    /// Factor version used for each contracted mode; `None` for free modes.
    pub stamps: Vec<Option<u64>>,
}

impl CacheEntry {
    pub fn is_fresh(&self, factors: &impl FactorSource) -> bool {
        self.stamps
            .iter()
            .enumerate()
            .all(|(m, s)| s.is_none_or(|v| v == factors.version(m)))
    }
}

/// Partially contracted tensors keyed by free-mode set.
#[derive(Debug, Clone, Default)]
pub struct IntermediateCache {
    entries: HashMap<ModeSet, CacheEntry>,
}

impl IntermediateCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, free: ModeSet) -> Option<&CacheEntry> {
        self.entries.get(&free)
    }

    pub fn keys(&self) -> impl Iterator<Item = ModeSet> + '_ {
        self.entries.keys().copied()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Runs the steps scheduled before updating `mode` in one-based
/// `iteration` and returns `𝒴 = 𝒳 ×ₖ Qₖᵀ (k ≠ mode)`.
///
/// Every cached source is checked against the current factor versions;
/// a missing or stale source is an error naming the step.
pub fn execute(
    schedule: &Schedule,
    x: &DenseTensor,
    factors: &impl FactorSource,
    cache: &mut IntermediateCache,
    iteration: usize,
    mode: usize,
) -> Result<(DenseTensor, CostReport)> {
    let order = schedule.order();
    if x.order() != order {
        return Err(Error::DimensionMismatch(format!(
            "schedule is for order {order}, tensor has order {}",
            x.order()
        )));
    }
    let update = schedule
        .plan(iteration)
        .update(mode)
        .ok_or_else(|| Error::InvalidConfig(format!("iteration {iteration} does not update mode {}", mode + 1)))?;

    let mut report = CostReport::default();
    for st in &update.steps {
        let m = st.contract_mode;
        let (out, mut stamps) = {
            let (src, stamps) = match st.source {
                Source::Root => (x, vec![None; order]),
                Source::Cached(s) => {
                    let entry = cache
                        .get(s)
                        .ok_or_else(|| Error::Stale(format!("iteration {iteration}, step {st}: Y{s} is not cached")))?;
                    if !entry.is_fresh(factors) {
                        return Err(Error::Stale(format!(
                            "iteration {iteration}, step {st}: Y{s} was built from outdated factors"
                        )));
                    }
                    (&entry.tensor, entry.stamps.clone())
                }
            };
            let free = st.source.free_modes(order);
            let out = ttm(src, factors.q_transpose(m), m)?;
            let flops = 2 * out.numel() as u128 * src.dims()[m] as u128;
            report.record(
                CostCategory {
                    free,
                    contracted: order - free.len(),
                },
                flops,
                st.reads_root(),
            );
            (out, stamps)
        };
        stamps[m] = Some(factors.version(m));
        if let (Source::Cached(s), true) = (st.source, st.release_source) {
            cache.entries.remove(&s);
        }
        match st.produces {
            Target::Intermediate(s) => {
                cache.entries.insert(s, CacheEntry { tensor: out, stamps });
            }
            Target::Final(_) => return Ok((out, report)),
        }
    }
    unreachable!("validated schedules end every update with its final step")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimtree::{build_schedule, Strategy};
    use crate::linalg::thin_qr;
    use crate::tensor::{multi_ttm, Shape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Factors {
        qt: Vec<Matrix>,
        versions: Vec<u64>,
    }

    impl FactorSource for Factors {
        fn q_transpose(&self, mode: usize) -> &Matrix {
            &self.qt[mode]
        }
        fn version(&self, mode: usize) -> u64 {
            self.versions[mode]
        }
    }

    fn random_q(rows: usize, rank: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let a = Matrix::from_fn(rows, rank, |_, _| rng.random_range(-1.0..1.0));
        thin_qr(&a).q.transpose()
    }

    fn oracle(x: &DenseTensor, f: &Factors, mode: usize) -> DenseTensor {
        let pairs: Vec<(usize, &Matrix)> = (0..x.order()).filter(|&k| k != mode).map(|k| (k, &f.qt[k])).collect();
        multi_ttm(x, &pairs).unwrap()
    }

    fn run(strategy: Strategy, dims: &[usize], rank: usize, iterations: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DenseTensor::from_fn(Shape::new(dims.to_vec()).unwrap(), |_| rng.random_range(-1.0..1.0));
        let s = build_schedule(dims.len(), strategy, iterations).unwrap();
        let mut f = Factors {
            qt: dims.iter().map(|&d| random_q(d, rank, &mut rng)).collect(),
            versions: vec![0; dims.len()],
        };
        let mut cache = IntermediateCache::new();
        for k in 1..=iterations {
            for n in s.plan(k).update_order() {
                let (y, _) = execute(&s, &x, &f, &mut cache, k, n).unwrap();
                let want = oracle(&x, &f, n);
                assert!(y.relative_diff(&want).unwrap() <= 1e-12, "{strategy} it {k} mode {n}");
                assert!(cache.len() <= 2);
                f.qt[n] = random_q(dims[n], rank, &mut rng);
                f.versions[n] += 1;
            }
        }
    }

    #[test]
    fn every_strategy_matches_multi_ttm() {
        for st in Strategy::ALL {
            run(st, &[9, 8, 7], 3, 6, 1);
            run(st, &[7, 6, 5, 4], 3, 7, 2);
        }
        run(Strategy::Naive, &[4, 3], 2, 2, 3);
        run(Strategy::Naive, &[3, 4, 2, 3, 2], 2, 2, 4);
    }

    #[test]
    fn identity_factors_leave_tensor_unchanged() {
        let dims = [3, 4, 2];
        let x = DenseTensor::from_fn(Shape::new(dims.to_vec()).unwrap(), |i| {
            (i[0] * 8 + i[1] * 2 + i[2]) as f64
        });
        let f = Factors {
            qt: dims.iter().map(|&d| Matrix::identity(d)).collect(),
            versions: vec![0; 3],
        };
        let s = build_schedule(3, Strategy::BranchReuse, 1).unwrap();
        let mut cache = IntermediateCache::new();
        let (y, report) = execute(&s, &x, &f, &mut cache, 1, 0).unwrap();
        assert_eq!(y, x);
        assert_eq!(report.root_ttm_count, 1);
        assert_eq!(report.ttm_count, 2);
    }

    #[test]
    fn stale_and_missing_sources_are_errors() {
        let dims = [4, 3, 3];
        let x = DenseTensor::filled(Shape::new(dims.to_vec()).unwrap(), 1.0);
        let mut f = Factors {
            qt: dims.iter().map(|&d| Matrix::identity(d)).collect(),
            versions: vec![0; 3],
        };
        let s = build_schedule(3, Strategy::DimTree, 1).unwrap();
        let mut cache = IntermediateCache::new();
        // mode 2 first: {1,2} was never built
        assert!(matches!(execute(&s, &x, &f, &mut cache, 1, 1), Err(Error::Stale(_))));
        execute(&s, &x, &f, &mut cache, 1, 0).unwrap();
        // changing mode 3 after {1,2} was contracted with it makes it stale
        f.versions[2] += 1;
        let err = execute(&s, &x, &f, &mut cache, 1, 1).unwrap_err();
        assert!(matches!(err, Error::Stale(_)));
        assert!(err.to_string().contains("Y{1,2} x1 -> Y(2)"), "{err}");
    }
}
