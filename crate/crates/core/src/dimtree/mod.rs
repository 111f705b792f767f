//! Contraction schedules for the `𝒴 = 𝒳 ×ₖ Qₖᵀ (k ≠ n)` step of the QR
//! solvers: naive Multi-TTM, the classical dimension tree, and branch reuse
//! across sweeps. Intermediates are keyed by their free-mode set and carry
//! the factor versions they were contracted with, so a stale read is caught
//! at run time instead of silently producing a wrong `𝒴`.

mod cost;
mod exec;
mod schedule;

pub use cost::{
    closed_form_cost, closed_form_terms, collect_terms, measured_cost, measured_cost_by_iteration, CostCategory,
    CostReport, CostTerm, Tally,
};
pub use exec::{execute, CacheEntry, FactorSource, IntermediateCache};
pub use schedule::{build_schedule, ContractionStep, IterationPlan, ModeUpdate, Schedule, Source, Strategy, Target};

use std::fmt;

/// Set of (zero-based) modes, stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ModeSet(u32);

impl ModeSet {
    pub const EMPTY: ModeSet = ModeSet(0);
    pub const MAX_MODES: usize = 32;

    pub fn full(order: usize) -> Self {
        assert!(order <= Self::MAX_MODES, "at most 32 modes");
        if order == Self::MAX_MODES {
            ModeSet(u32::MAX)
        } else {
            ModeSet((1u32 << order) - 1)
        }
    }

    pub fn from_modes(modes: &[usize]) -> Self {
        modes.iter().fold(Self::EMPTY, |s, &m| s.with(m))
    }

    pub fn single(mode: usize) -> Self {
        Self::EMPTY.with(mode)
    }

    pub fn contains(self, mode: usize) -> bool {
        mode < Self::MAX_MODES && self.0 & (1 << mode) != 0
    }

    pub fn with(self, mode: usize) -> Self {
        assert!(mode < Self::MAX_MODES, "mode index too large");
        ModeSet(self.0 | (1 << mode))
    }

    pub fn without(self, mode: usize) -> Self {
        if mode >= Self::MAX_MODES {
            return self;
        }
        ModeSet(self.0 & !(1 << mode))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..Self::MAX_MODES).filter(move |&m| self.contains(m))
    }

    pub fn bits(self) -> u32 {
        self.0
    }
}

/// One-based, e.g. `{1,3}`.
impl fmt::Display for ModeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|m| (m + 1).to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

impl fmt::Debug for ModeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_set_basics() {
        let s = ModeSet::from_modes(&[0, 2]);
        assert!(s.contains(0) && s.contains(2) && !s.contains(1));
        assert_eq!(s.len(), 2);
        assert_eq!(s.without(2), ModeSet::single(0));
        assert_eq!(s.to_string(), "{1,3}");
        assert_eq!(ModeSet::full(3).iter().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(ModeSet::full(32).len(), 32);
        assert!(ModeSet::EMPTY.is_empty());
    }
}
