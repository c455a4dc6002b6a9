//! Compute-time sampling and the server's waiting rule per scheme.

use alloc::vec::Vec;

use crate::rng::{stream, CounterRng};
use crate::{Error, Result};

/// Per-worker per-iteration compute time.
pub trait TimeModel {
    fn sample(&self, iteration: usize, worker: usize) -> f64;
}

/// i.i.d. exponential compute times with mean `eta`, drawn by inverse CDF
/// from a counter-based stream keyed by `(iteration, worker)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialTimes {
    mean: f64,
    rng: CounterRng,
}

impl ExponentialTimes {
    pub fn new(mean: f64, seed: u64) -> Result<Self> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::config("mean compute time must be positive and finite"));
        }
        Ok(Self { mean, rng: CounterRng::new(seed) })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }
}

/// `-eta ln(u)` for `u` in `(0, 1]`.
#[inline]
pub fn exponential_inverse_cdf(u: f64, mean: f64) -> f64 {
    -mean * libm::log(u)
}

impl TimeModel for ExponentialTimes {
    fn sample(&self, iteration: usize, worker: usize) -> f64 {
        let u = self.rng.uniform_open0(stream::COMPUTE_TIME, iteration as u64, worker as u64, 0);
        exponential_inverse_cdf(u, self.mean)
    }
}

/// Compute times of the given workers at one iteration, in ascending worker id.
pub fn sample_times(model: &impl TimeModel, iteration: usize, workers: &[usize]) -> Vec<(usize, f64)> {
    let mut ids = workers.to_vec();
    ids.sort_unstable();
    ids.into_iter().map(|w| (w, model.sample(iteration, w))).collect()
}

/// Outcome of one iteration's waiting.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTiming {
    /// `(worker, time)` for every dispatched worker.
    pub times: Vec<(usize, f64)>,
    /// `(unit, uploading worker)` for every selected unit.
    pub uploads: Vec<(usize, usize)>,
    pub wall_clock: f64,
}

fn time_of(times: &[(usize, f64)], worker: usize) -> Result<f64> {
    times
        .iter()
        .find(|&&(w, _)| w == worker)
        .map(|&(_, t)| t)
        .ok_or_else(|| Error::contract(alloc::format!("no compute time sampled for worker {worker}")))
}

/// Per-worker waiting: every selected worker uploads and the server waits for
/// the slowest. Units are the workers themselves.
pub fn resolve_cada(times: &[(usize, f64)], selected: &[usize]) -> Result<IterationTiming> {
    let mut uploads = Vec::with_capacity(selected.len());
    let mut wall_clock = 0.0f64;
    for &w in selected {
        let t = time_of(times, w)?;
        wall_clock = wall_clock.max(t);
        uploads.push((w, w));
    }
    Ok(IterationTiming { times: times.to_vec(), uploads, wall_clock })
}

/// Grouped waiting: in each selected group only the fastest member uploads
/// (lowest id on ties); the server waits for the slowest of those.
pub fn resolve_gcada(times: &[(usize, f64)], groups: &[(usize, &[usize])]) -> Result<IterationTiming> {
    let mut uploads = Vec::with_capacity(groups.len());
    let mut wall_clock = 0.0f64;
    for &(g, members) in groups {
        let mut best: Option<(usize, f64)> = None;
        for &w in members {
            let t = time_of(times, w)?;
            match best {
                Some((bw, bt)) if bt < t || (bt == t && bw < w) => {}
                _ => best = Some((w, t)),
            }
        }
        let (w, t) = best.ok_or_else(|| Error::contract(alloc::format!("group {g} has no members")))?;
        wall_clock = wall_clock.max(t);
        uploads.push((g, w));
    }
    Ok(IterationTiming { times: times.to_vec(), uploads, wall_clock })
}

/// Mean and standard error of a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    fn from_samples(sum: f64, sum_sq: f64, n: usize) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 { (sum_sq - nf * mean * mean).max(0.0) / (nf - 1.0) } else { 0.0 };
        Self { mean, std_error: libm::sqrt(var / nf) }
    }
}

/// Monte Carlo mean of the per-iteration wall clock when `groups` groups of
/// `group_size` workers are all selected and each contributes its fastest
/// member. `group_size = 1` gives the wait-for-all time of `groups` workers.
pub fn monte_carlo_full_selection(
    model: &impl TimeModel,
    groups: usize,
    group_size: usize,
    trials: usize,
) -> Result<Estimate> {
    if groups == 0 || group_size == 0 || trials == 0 {
        return Err(Error::contract("groups, group size and trials must be positive"));
    }
    let workers: Vec<usize> = (0..groups * group_size).collect();
    let members: Vec<&[usize]> = workers.chunks(group_size).collect();
    let layout: Vec<(usize, &[usize])> = members.iter().copied().enumerate().collect();
    let (mut s, mut s2) = (0.0, 0.0);
    for trial in 0..trials {
        let times = sample_times(model, trial, &workers);
        let t = if group_size == 1 {
            resolve_cada(&times, &workers)?.wall_clock
        } else {
            resolve_gcada(&times, &layout)?.wall_clock
        };
        s += t;
        s2 += t * t;
    }
    Ok(Estimate::from_samples(s, s2, trials))
}

/// Monte Carlo mean of the `rank`-th smallest of `count` i.i.d. compute times.
pub fn monte_carlo_order_stat(model: &impl TimeModel, rank: usize, count: usize, trials: usize) -> Result<Estimate> {
    if rank == 0 || rank > count || trials == 0 {
        return Err(Error::contract("need 1 <= rank <= count and trials > 0"));
    }
    let workers: Vec<usize> = (0..count).collect();
    let (mut s, mut s2) = (0.0, 0.0);
    let mut buf = Vec::with_capacity(count);
    for trial in 0..trials {
        buf.clear();
        buf.extend(sample_times(model, trial, &workers).into_iter().map(|(_, t)| t));
        buf.sort_unstable_by(f64::total_cmp);
        let t = buf[rank - 1];
        s += t;
        s2 += t * t;
    }
    Ok(Estimate::from_samples(s, s2, trials))
}
