use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use super::ModeSet;
use crate::error::{Error, Result};

/// How the per-mode `𝒴` tensors are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Full Multi-TTM from the input tensor for every mode.
    Naive,
    /// Classical dimension tree, rebuilt from the root every sweep.
    DimTree,
    /// Dimension tree whose leftover fresh branches seed the next sweep.
    BranchReuse,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Naive => "naive",
            Strategy::DimTree => "dim-tree",
            Strategy::BranchReuse => "branch-reuse",
        }
    }

    pub const ALL: [Strategy; 3] = [Strategy::Naive, Strategy::DimTree, Strategy::BranchReuse];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Strategy::Naive),
            "dim-tree" | "dimtree" => Ok(Strategy::DimTree),
            "branch-reuse" | "branch" => Ok(Strategy::BranchReuse),
            other => Err(Error::InvalidConfig(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Root,
    Cached(ModeSet),
}

impl Source {
    pub fn free_modes(self, order: usize) -> ModeSet {
        match self {
            Source::Root => ModeSet::full(order),
            Source::Cached(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Intermediate(ModeSet),
    /// The `𝒴` used to update this mode.
    Final(usize),
}

/// One TTM: `produces = source ×_{contract_mode} Q_{contract_mode}ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContractionStep {
    pub source: Source,
    pub contract_mode: usize,
    pub produces: Target,
    /// Drop the cached source once this step has run.
    pub release_source: bool,
}

impl ContractionStep {
    pub fn reads_root(&self) -> bool {
        self.source == Source::Root
    }
}

impl fmt::Display for ContractionStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.source {
            Source::Root => write!(f, "X")?,
            Source::Cached(s) => write!(f, "Y{s}")?,
        }
        write!(f, " x{} -> ", self.contract_mode + 1)?;
        match self.produces {
            Target::Intermediate(s) => write!(f, "Y{s}"),
            Target::Final(n) => write!(f, "Y({})", n + 1),
        }
    }
}

/// Steps run immediately before factor `mode` is updated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeUpdate {
    pub mode: usize,
    pub steps: Vec<ContractionStep>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationPlan {
    pub updates: Vec<ModeUpdate>,
}

impl IterationPlan {
    pub fn update_order(&self) -> Vec<usize> {
        self.updates.iter().map(|u| u.mode).collect()
    }

    pub fn update(&self, mode: usize) -> Option<&ModeUpdate> {
        self.updates.iter().find(|u| u.mode == mode)
    }

    pub fn steps(&self) -> impl Iterator<Item = &ContractionStep> {
        self.updates.iter().flat_map(|u| u.steps.iter())
    }
}

/// A finite prefix of iteration plans whose tail repeats with period
/// `cycle_length` from iteration `cycle_start` (both one-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    order: usize,
    strategy: Strategy,
    iterations: Vec<IterationPlan>,
    cycle_start: usize,
    cycle_length: usize,
}

impl Schedule {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn cycle_start(&self) -> usize {
        self.cycle_start
    }

    pub fn cycle_length(&self) -> usize {
        self.cycle_length
    }

    /// The distinct plans, iterations `1..=cycle_start + cycle_length − 1`.
    pub fn stored_iterations(&self) -> &[IterationPlan] {
        &self.iterations
    }

    /// Plan of one-based `iteration`.
    pub fn plan(&self, iteration: usize) -> &IterationPlan {
        &self.iterations[self.slot(iteration)]
    }

    fn slot(&self, iteration: usize) -> usize {
        assert!(iteration >= 1, "iterations are numbered from 1");
        if iteration <= self.iterations.len() {
            iteration - 1
        } else {
            self.cycle_start - 1 + (iteration - self.cycle_start) % self.cycle_length
        }
    }
}

/// Builds and validates the schedule for `strategy`, simulating at least
/// `num_iterations` sweeps (and never fewer than two full cycles).
pub fn build_schedule(order: usize, strategy: Strategy, num_iterations: usize) -> Result<Schedule> {
    if order < 2 {
        return Err(Error::UnsupportedOrder {
            order,
            strategy: strategy.to_string(),
        });
    }
    let (iterations, cycle_start, cycle_length) = match (strategy, order) {
        (Strategy::Naive, n) => (vec![naive_iteration(n)], 1, 1),
        (Strategy::DimTree, 3) => (vec![tree3()], 1, 1),
        (Strategy::DimTree, 4) => (vec![tree4()], 1, 1),
        (Strategy::BranchReuse, 3) => {
            let mut its = vec![tree3()];
            let mut labels = [0, 2, 1];
            for _ in 0..2 {
                its.push(reuse3(labels));
                labels = [labels[2], labels[1], labels[0]];
            }
            (its, 2, 2)
        }
        (Strategy::BranchReuse, 4) => {
            let mut its = vec![tree4(), reuse4_entry([2, 3, 1, 0])];
            let mut labels = [0, 3, 2, 1];
            for _ in 0..3 {
                its.push(reuse4(labels));
                labels = [labels[3], labels[1], labels[0], labels[2]];
            }
            (its, 3, 3)
        }
        (s, n) => {
            return Err(Error::UnsupportedOrder {
                order: n,
                strategy: s.to_string(),
            })
        }
    };
    let mut schedule = Schedule {
        order,
        strategy,
        iterations,
        cycle_start,
        cycle_length,
    };
    assign_release_flags(&mut schedule);
    let horizon = num_iterations.max(cycle_start - 1 + 2 * cycle_length);
    validate(&schedule, horizon)?;
    Ok(schedule)
}

fn step(source: Source, contract_mode: usize, produces: Target) -> ContractionStep {
    ContractionStep {
        source,
        contract_mode,
        produces,
        release_source: false,
    }
}

fn set(modes: &[usize]) -> ModeSet {
    ModeSet::from_modes(modes)
}

fn cached(modes: &[usize]) -> Source {
    Source::Cached(set(modes))
}

fn inter(modes: &[usize]) -> Target {
    Target::Intermediate(set(modes))
}

/// A chain from the root contracting `modes` in order, ending at `Final(n)`.
fn chain(order: usize, n: usize, modes: &[usize]) -> ModeUpdate {
    let mut steps = Vec::with_capacity(modes.len());
    let mut free = ModeSet::full(order);
    let mut source = Source::Root;
    for (i, &m) in modes.iter().enumerate() {
        free = free.without(m);
        let produces = if i + 1 == modes.len() {
            Target::Final(n)
        } else {
            Target::Intermediate(free)
        };
        steps.push(step(source, m, produces));
        source = Source::Cached(free);
    }
    ModeUpdate { mode: n, steps }
}

fn naive_iteration(order: usize) -> IterationPlan {
    let orders: Vec<Vec<usize>> = match order {
        3 => vec![vec![2, 1], vec![0, 2], vec![1, 0]],
        4 => vec![vec![3, 2, 1], vec![3, 2, 0], vec![0, 1, 3], vec![0, 1, 2]],
        n => (0..n).map(|m| (0..n).filter(|&k| k != m).collect()).collect(),
    };
    IterationPlan {
        updates: orders
            .iter()
            .enumerate()
            .map(|(n, modes)| chain(order, n, modes))
            .collect(),
    }
}

fn tree3() -> IterationPlan {
    IterationPlan {
        updates: vec![
            ModeUpdate {
                mode: 0,
                steps: vec![
                    step(Source::Root, 2, inter(&[0, 1])),
                    step(cached(&[0, 1]), 1, Target::Final(0)),
                ],
            },
            ModeUpdate {
                mode: 1,
                steps: vec![step(cached(&[0, 1]), 0, Target::Final(1))],
            },
            ModeUpdate {
                mode: 2,
                steps: vec![
                    step(Source::Root, 1, inter(&[0, 2])),
                    step(cached(&[0, 2]), 0, Target::Final(2)),
                ],
            },
        ],
    }
}

/// Sweep starting from the fresh pair `{a,b}`; leaves `{a,c}` for the next.
fn reuse3([a, b, c]: [usize; 3]) -> IterationPlan {
    IterationPlan {
        updates: vec![
            ModeUpdate {
                mode: a,
                steps: vec![step(cached(&[a, b]), b, Target::Final(a))],
            },
            ModeUpdate {
                mode: b,
                steps: vec![step(cached(&[a, b]), a, Target::Final(b))],
            },
            ModeUpdate {
                mode: c,
                steps: vec![
                    step(Source::Root, a, inter(&[b, c])),
                    step(cached(&[b, c]), b, Target::Final(c)),
                ],
            },
        ],
    }
}

fn tree4() -> IterationPlan {
    IterationPlan {
        updates: vec![
            ModeUpdate {
                mode: 0,
                steps: vec![
                    step(Source::Root, 3, inter(&[0, 1, 2])),
                    step(cached(&[0, 1, 2]), 2, inter(&[0, 1])),
                    step(cached(&[0, 1]), 1, Target::Final(0)),
                ],
            },
            ModeUpdate {
                mode: 1,
                steps: vec![step(cached(&[0, 1]), 0, Target::Final(1))],
            },
            ModeUpdate {
                mode: 2,
                steps: vec![
                    step(cached(&[0, 1, 2]), 1, inter(&[0, 2])),
                    step(cached(&[0, 2]), 0, Target::Final(2)),
                ],
            },
            ModeUpdate {
                mode: 3,
                steps: vec![
                    step(Source::Root, 0, inter(&[1, 2, 3])),
                    step(cached(&[1, 2, 3]), 1, inter(&[2, 3])),
                    step(cached(&[2, 3]), 2, Target::Final(3)),
                ],
            },
        ],
    }
}

/// The sweep right after the first dimension-tree sweep: starts from the
/// pair `{a,b}` and the triple `{a,b,c}` it left behind.
fn reuse4_entry([a, b, c, d]: [usize; 4]) -> IterationPlan {
    IterationPlan {
        updates: vec![
            ModeUpdate {
                mode: a,
                steps: vec![step(cached(&[a, b]), b, Target::Final(a))],
            },
            ModeUpdate {
                mode: b,
                steps: vec![step(cached(&[a, b]), a, Target::Final(b))],
            },
            ModeUpdate {
                mode: c,
                steps: vec![
                    step(cached(&[a, b, c]), a, inter(&[b, c])),
                    step(cached(&[b, c]), b, Target::Final(c)),
                ],
            },
            tail4(a, b, c, d),
        ],
    }
}

/// Steady-state sweep: pair `{a,b}` and triple `{a,b,c}` in, pair `{b,d}`
/// and triple `{a,b,d}` out.
fn reuse4([a, b, c, d]: [usize; 4]) -> IterationPlan {
    IterationPlan {
        updates: vec![
            ModeUpdate {
                mode: a,
                steps: vec![step(cached(&[a, b]), b, Target::Final(a))],
            },
            ModeUpdate {
                mode: c,
                steps: vec![
                    step(cached(&[a, b, c]), b, inter(&[a, c])),
                    step(cached(&[a, c]), a, Target::Final(c)),
                ],
            },
            ModeUpdate {
                mode: b,
                steps: vec![
                    step(cached(&[a, b, c]), c, inter(&[a, b])),
                    step(cached(&[a, b]), a, Target::Final(b)),
                ],
            },
            tail4(a, b, c, d),
        ],
    }
}

fn tail4(a: usize, b: usize, c: usize, d: usize) -> ModeUpdate {
    ModeUpdate {
        mode: d,
        steps: vec![
            step(Source::Root, c, inter(&[a, b, d])),
            step(cached(&[a, b, d]), a, inter(&[b, d])),
            step(cached(&[b, d]), b, Target::Final(d)),
        ],
    }
}

/// A cached source is released unless it is read again before being
/// overwritten.
fn assign_release_flags(schedule: &mut Schedule) {
    let stored = schedule.iterations.len();
    let horizon = schedule.cycle_start - 1 + 3 * schedule.cycle_length;
    let timeline: Vec<ContractionStep> = (1..=horizon.max(stored))
        .flat_map(|k| schedule.plan(k).steps().copied().collect::<Vec<_>>())
        .collect();

    let mut t = 0;
    for it in schedule.iterations.iter_mut() {
        for upd in it.updates.iter_mut() {
            for st in upd.steps.iter_mut() {
                if let Source::Cached(s) = st.source {
                    let reused = timeline[t + 1..]
                        .iter()
                        .find_map(|later| {
                            if later.source == Source::Cached(s) {
                                Some(true)
                            } else if later.produces == Target::Intermediate(s) {
                                Some(false)
                            } else {
                                None
                            }
                        })
                        .unwrap_or(false);
                    st.release_source = !reused;
                }
                t += 1;
            }
        }
    }
}

/// Structural checks plus a symbolic run tracking factor versions.
fn validate(schedule: &Schedule, horizon: usize) -> Result<()> {
    let order = schedule.order;
    let bad = |k: usize, msg: String| Error::InvalidConfig(format!("schedule iteration {k}: {msg}"));

    let mut versions = vec![0u64; order];
    let mut cache: HashMap<ModeSet, Vec<Option<u64>>> = HashMap::new();
    for k in 1..=horizon {
        let plan = schedule.plan(k);
        let mut seen = ModeSet::EMPTY;
        for upd in &plan.updates {
            if upd.mode >= order || seen.contains(upd.mode) {
                return Err(bad(k, format!("mode {} updated twice or out of range", upd.mode + 1)));
            }
            seen = seen.with(upd.mode);
            let Some(last) = upd.steps.last() else {
                return Err(bad(k, format!("no steps before updating mode {}", upd.mode + 1)));
            };
            if last.produces != Target::Final(upd.mode) {
                return Err(bad(k, format!("update of mode {} does not end in its Y", upd.mode + 1)));
            }
            for (i, st) in upd.steps.iter().enumerate() {
                let free = st.source.free_modes(order);
                if !free.contains(st.contract_mode) {
                    return Err(bad(k, format!("{st}: mode {} is not free", st.contract_mode + 1)));
                }
                let out = free.without(st.contract_mode);
                match st.produces {
                    Target::Intermediate(s) if s != out => {
                        return Err(bad(k, format!("{st}: result has free modes {out}")));
                    }
                    Target::Final(n) if out != ModeSet::single(n) || i + 1 != upd.steps.len() => {
                        return Err(bad(k, format!("{st}: not a final contraction")));
                    }
                    _ => {}
                }
                let mut stamps = match st.source {
                    Source::Root => vec![None; order],
                    Source::Cached(s) => {
                        let entry = cache
                            .get(&s)
                            .ok_or_else(|| bad(k, format!("{st}: Y{s} is not cached")))?;
                        for m in ModeSet::full(order).iter().filter(|&m| !s.contains(m)) {
                            if entry[m] != Some(versions[m]) {
                                return Err(bad(k, format!("{st}: Y{s} is stale in mode {}", m + 1)));
                            }
                        }
                        entry.clone()
                    }
                };
                stamps[st.contract_mode] = Some(versions[st.contract_mode]);
                if let (Source::Cached(s), true) = (st.source, st.release_source) {
                    cache.remove(&s);
                }
                if let Target::Intermediate(s) = st.produces {
                    cache.insert(s, stamps);
                }
            }
            versions[upd.mode] += 1;
        }
        if seen != ModeSet::full(order) {
            return Err(bad(k, "not every mode is updated".into()));
        }
    }
    Ok(())
}
