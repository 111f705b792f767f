use std::collections::BTreeMap;
use std::fmt;

use super::{ModeSet, Schedule, Source, Strategy};
use crate::error::{Error, Result};

/// A TTM kind, identified by the free modes of its source and how many
/// modes the source already had contracted. Its cost is
/// `2·(Π_{k∈free} Iₖ)·R^(contracted+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CostCategory {
    pub free: ModeSet,
    pub contracted: usize,
}

impl fmt::Display for CostCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "2")?;
        for m in self.free.iter() {
            write!(f, "I{}", m + 1)?;
        }
        match self.contracted + 1 {
            1 => write!(f, "R"),
            p => write!(f, "R^{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tally {
    pub count: u64,
    pub flops: u128,
}

/// TTM counts and flops, in total and per category.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CostReport {
    pub categories: BTreeMap<CostCategory, Tally>,
    pub root_ttm_count: u64,
    pub ttm_count: u64,
    pub flops: u128,
}

impl CostReport {
    pub fn record(&mut self, category: CostCategory, flops: u128, from_root: bool) {
        let t = self.categories.entry(category).or_default();
        t.count += 1;
        t.flops += flops;
        self.ttm_count += 1;
        self.flops += flops;
        if from_root {
            self.root_ttm_count += 1;
        }
    }

    pub fn merge(&mut self, other: &CostReport) {
        for (c, t) in &other.categories {
            let e = self.categories.entry(*c).or_default();
            e.count += t.count;
            e.flops += t.flops;
        }
        self.root_ttm_count += other.root_ttm_count;
        self.ttm_count += other.ttm_count;
        self.flops += other.flops;
    }

    /// Number of TTMs whose source has free modes `free` (zero-based) and
    /// `contracted` modes already contracted.
    pub fn count(&self, free: &[usize], contracted: usize) -> u64 {
        self.categories
            .get(&CostCategory {
                free: ModeSet::from_modes(free),
                contracted,
            })
            .map_or(0, |t| t.count)
    }

    /// The tallies in closed-form notation, one term per category.
    pub fn terms(&self) -> Vec<CostTerm> {
        self.categories
            .iter()
            .map(|(c, t)| CostTerm {
                coefficient: 2 * t.count,
                modes: c.free,
                r_power: c.contracted as u32 + 1,
            })
            .collect()
    }
}

/// `coefficient · Π_{k∈modes} Iₖ · R^r_power`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CostTerm {
    pub coefficient: u64,
    pub modes: ModeSet,
    pub r_power: u32,
}

impl CostTerm {
    pub fn evaluate(&self, dims: &[usize], rank: usize) -> u128 {
        let prod: u128 = self.modes.iter().map(|m| dims[m] as u128).product();
        self.coefficient as u128 * prod * (rank as u128).pow(self.r_power)
    }
}

impl fmt::Display for CostTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.coefficient)?;
        for m in self.modes.iter() {
            write!(f, "I{}", m + 1)?;
        }
        match self.r_power {
            1 => write!(f, "R"),
            p => write!(f, "R^{p}"),
        }
    }
}

/// Shape-only accounting of the first `iterations` sweeps, one report per
/// sweep. Contracted extents are `min(Iₖ, R)`, the column count of `Qₖ`.
pub fn measured_cost_by_iteration(
    schedule: &Schedule,
    dims: &[usize],
    rank: usize,
    iterations: usize,
) -> Result<Vec<CostReport>> {
    let order = schedule.order();
    if dims.len() != order {
        return Err(Error::DimensionMismatch(format!(
            "{} extents for an order-{order} schedule",
            dims.len()
        )));
    }
    if rank == 0 || dims.contains(&0) {
        return Err(Error::InvalidConfig("extents and rank must be positive".into()));
    }
    let reduced: Vec<u128> = dims.iter().map(|&d| d.min(rank) as u128).collect();
    let mut out = Vec::with_capacity(iterations);
    for k in 1..=iterations {
        let mut report = CostReport::default();
        for st in schedule.plan(k).steps() {
            let free = st.source.free_modes(order);
            let m = st.contract_mode;
            let numel: u128 = (0..order)
                .map(|j| {
                    if j != m && free.contains(j) {
                        dims[j] as u128
                    } else {
                        reduced[j]
                    }
                })
                .product();
            let category = CostCategory {
                free,
                contracted: order - free.len(),
            };
            report.record(category, 2 * numel * dims[m] as u128, st.source == Source::Root);
        }
        out.push(report);
    }
    Ok(out)
}

/// Sum of [`measured_cost_by_iteration`] over the first `iterations` sweeps.
pub fn measured_cost(schedule: &Schedule, dims: &[usize], rank: usize, iterations: usize) -> Result<CostReport> {
    let mut total = CostReport::default();
    for r in measured_cost_by_iteration(schedule, dims, rank, iterations)? {
        total.merge(&r);
    }
    Ok(total)
}

/// Closed-form totals for the first three sweeps, one entry per term
/// (duplicate monomials are kept separate).
pub fn closed_form_terms(order: usize, strategy: Strategy) -> Result<Vec<CostTerm>> {
    let t = |coefficient: u64, modes: &[usize], r_power: u32| CostTerm {
        coefficient,
        modes: ModeSet::from_modes(modes),
        r_power,
    };
    Ok(match (order, strategy) {
        (3, Strategy::Naive) => vec![
            t(18, &[0, 1, 2], 1),
            t(6, &[0, 1], 2),
            t(6, &[1, 2], 2),
            t(6, &[0, 2], 2),
        ],
        (3, Strategy::DimTree) => vec![t(12, &[0, 1, 2], 1), t(12, &[0, 1], 2), t(6, &[0, 2], 2)],
        (3, Strategy::BranchReuse) => vec![
            t(8, &[0, 1, 2], 1),
            t(4, &[0, 1], 2),
            t(8, &[0, 2], 2),
            t(6, &[1, 2], 2),
        ],
        (4, Strategy::Naive) => vec![
            t(24, &[0, 1, 2, 3], 1),
            t(12, &[0, 1, 2], 2),
            t(12, &[1, 2, 3], 2),
            t(12, &[0, 1], 3),
            t(12, &[2, 3], 3),
        ],
        (4, Strategy::DimTree) => vec![
            t(12, &[0, 1, 2, 3], 1),
            t(12, &[0, 1, 2], 2),
            t(6, &[1, 2, 3], 2),
            t(12, &[0, 1], 3),
            t(6, &[0, 2], 3),
            t(6, &[2, 3], 3),
        ],
        (4, Strategy::BranchReuse) => vec![
            t(8, &[0, 1, 2, 3], 1),
            t(4, &[1, 3], 3),
            t(6, &[0, 3], 3),
            t(2, &[0, 2], 3),
            t(4, &[2, 3], 3),
            t(4, &[0, 1], 3),
            t(2, &[1, 2], 3),
            t(4, &[0, 2, 3], 2),
            t(2, &[0, 1, 3], 2),
            t(2, &[2, 3], 3),
            t(4, &[1, 2, 3], 2),
            t(4, &[0, 1, 2], 2),
        ],
        (n, s) => {
            return Err(Error::UnsupportedOrder {
                order: n,
                strategy: s.to_string(),
            })
        }
    })
}

pub fn closed_form_cost(order: usize, strategy: Strategy, dims: &[usize], rank: usize) -> Result<u128> {
    let terms = closed_form_terms(order, strategy)?;
    if dims.len() != order {
        return Err(Error::DimensionMismatch(format!(
            "{} extents for order {order}",
            dims.len()
        )));
    }
    Ok(terms.iter().map(|t| t.evaluate(dims, rank)).sum())
}

/// Merges equal monomials.
pub fn collect_terms(terms: &[CostTerm]) -> BTreeMap<(ModeSet, u32), u64> {
    let mut out = BTreeMap::new();
    for t in terms {
        *out.entry((t.modes, t.r_power)).or_insert(0) += t.coefficient;
    }
    out
}
