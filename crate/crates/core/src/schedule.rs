//! Adaptive selection of workers or groups.
//!
//! A unit (a worker, or a group of workers sharing a shard) is skipped at
//! iteration `k` while
//!
//! ```text
//! L^2 ||theta^k - theta^(k - tau)||^2 <= c * sum_{d=1..D} ||theta^(k+1-d) - theta^(k-d)||^2
//! ```
//!
//! holds, where `tau` is the unit's age of information (AoI). Units whose AoI
//! reached `D` are selected regardless. Selected units get AoI 1 for the next
//! iteration; everyone else ages by one.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use crate::loss::squared_distance;
use crate::{Error, Result};

/// Scheduler view of one worker or group.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitMeta {
    pub id: usize,
    /// Worker ids in this unit. A single worker for per-worker schemes.
    pub members: Vec<usize>,
    /// Iterations since the unit last uploaded a fresh gradient.
    pub aoi: usize,
    /// Smoothness constant of the unit's local loss.
    pub smoothness: f64,
}

impl UnitMeta {
    pub fn worker(id: usize, smoothness: f64) -> Self {
        Self { id, members: alloc::vec![id], aoi: 1, smoothness }
    }

    pub fn group(id: usize, members: Vec<usize>, smoothness: f64) -> Self {
        Self { id, members, aoi: 1, smoothness }
    }
}

/// Right-hand-side weights: one constant `c`, or one constant per lag `d`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionWeights {
    Scalar(f64),
    PerLag(Vec<f64>),
}

impl ConditionWeights {
    /// Weight of the lag-`d` term, `d >= 1`. Missing per-lag entries count as 0.
    pub fn weight(&self, d: usize) -> f64 {
        match self {
            ConditionWeights::Scalar(c) => *c,
            ConditionWeights::PerLag(cs) => cs.get(d - 1).copied().unwrap_or(0.0),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            ConditionWeights::Scalar(c) => ConditionWeights::Scalar(c * factor),
            ConditionWeights::PerLag(cs) => ConditionWeights::PerLag(cs.iter().map(|c| c * factor).collect()),
        }
    }
}

/// Recent iterates and their squared step lengths.
///
/// Keeps `theta^k .. theta^(k-D)` (at most `D + 1` snapshots) so the stale
/// iterate of any unit with AoI `<= D` is available, and the last `D` values of
/// `||theta^(j+1) - theta^j||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateHistory {
    max_delay: usize,
    snapshots: VecDeque<Vec<f64>>,
    steps: VecDeque<f64>,
}

impl IterateHistory {
    pub fn new(theta0: &[f64], max_delay: usize) -> Self {
        let mut snapshots = VecDeque::with_capacity(max_delay + 1);
        snapshots.push_front(theta0.to_vec());
        Self { max_delay, snapshots, steps: VecDeque::with_capacity(max_delay) }
    }

    pub fn max_delay(&self) -> usize {
        self.max_delay
    }

    /// Record `theta^(k+1)`.
    pub fn push(&mut self, theta: &[f64]) {
        let step = squared_distance(theta, &self.snapshots[0]);
        self.steps.push_front(step);
        self.steps.truncate(self.max_delay);
        if self.snapshots.len() == self.max_delay + 1 {
            // reuse the oldest buffer
            let mut buf = self.snapshots.pop_back().unwrap_or_default();
            buf.clear();
            buf.extend_from_slice(theta);
            self.snapshots.push_front(buf);
        } else {
            self.snapshots.push_front(theta.to_vec());
        }
    }

    pub fn current(&self) -> &[f64] {
        &self.snapshots[0]
    }

    /// `theta^(k - age)`, if still retained.
    pub fn stale(&self, age: usize) -> Option<&[f64]> {
        self.snapshots.get(age).map(Vec::as_slice)
    }

    /// Squared step lengths, newest first.
    pub fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().copied()
    }

    /// `sum_d w_d ||theta^(k+1-d) - theta^(k-d)||^2` over the available lags.
    pub fn weighted_sum(&self, weights: &ConditionWeights) -> f64 {
        self.steps.iter().enumerate().map(|(i, s)| weights.weight(i + 1) * s).sum()
    }
}

/// `true` when the lazy condition holds, i.e. the unit may be skipped.
pub fn check_condition(
    smoothness: f64,
    theta_now: &[f64],
    theta_stale: &[f64],
    history: &IterateHistory,
    weights: &ConditionWeights,
) -> bool {
    smoothness * smoothness * squared_distance(theta_now, theta_stale) <= history.weighted_sum(weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionReason {
    /// Initial iteration: every unit is selected to fill the gradient cache.
    ColdStart,
    ConditionViolated,
    AoiForced,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SelectionResult {
    /// `(unit id, reason)` in ascending unit id.
    pub selected: Vec<(usize, SelectionReason)>,
}

impl SelectionResult {
    pub fn all(units: &[UnitMeta], reason: SelectionReason) -> Self {
        Self { selected: units.iter().map(|u| (u.id, reason)).collect() }
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn contains(&self, unit: usize) -> bool {
        self.selected.iter().any(|&(u, _)| u == unit)
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.selected.iter().map(|&(u, _)| u)
    }
}

/// Select every unit that violates the lazy condition or whose AoI is at
/// least `max_delay`. A forced unit is reported as forced even if it also
/// violates the condition.
pub fn select(
    units: &[UnitMeta],
    history: &IterateHistory,
    weights: &ConditionWeights,
    max_delay: usize,
) -> Result<SelectionResult> {
    let now = history.current();
    let rhs = history.weighted_sum(weights);
    let mut selected = Vec::new();
    for unit in units {
        if unit.aoi >= max_delay {
            selected.push((unit.id, SelectionReason::AoiForced));
            continue;
        }
        let stale = history
            .stale(unit.aoi)
            .ok_or_else(|| Error::State(format!("no iterate retained for unit {} at age {}", unit.id, unit.aoi)))?;
        let lhs = unit.smoothness * unit.smoothness * squared_distance(now, stale);
        if lhs > rhs {
            selected.push((unit.id, SelectionReason::ConditionViolated));
        }
    }
    Ok(SelectionResult { selected })
}

/// [`select`] for per-worker schemes; every unit must be a single worker.
pub fn select_workers(
    workers: &[UnitMeta],
    history: &IterateHistory,
    weights: &ConditionWeights,
    max_delay: usize,
) -> Result<SelectionResult> {
    if let Some(w) = workers.iter().find(|w| w.members.len() != 1) {
        return Err(Error::contract(format!("worker unit {} has {} members", w.id, w.members.len())));
    }
    select(workers, history, weights, max_delay)
}

/// [`select`] for grouped schemes; group memberships must be disjoint.
pub fn select_groups(
    groups: &[UnitMeta],
    history: &IterateHistory,
    weights: &ConditionWeights,
    max_delay: usize,
) -> Result<SelectionResult> {
    let mut seen: Vec<usize> = groups.iter().flat_map(|g| g.members.iter().copied()).collect();
    let total = seen.len();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != total {
        return Err(Error::contract("group memberships overlap"));
    }
    select(groups, history, weights, max_delay)
}

/// Selected units restart at AoI 1, the others age by one iteration.
pub fn update_aoi(result: &SelectionResult, units: &mut [UnitMeta]) {
    for unit in units.iter_mut() {
        if result.contains(unit.id) {
            unit.aoi = 1;
        } else {
            unit.aoi += 1;
        }
    }
}
