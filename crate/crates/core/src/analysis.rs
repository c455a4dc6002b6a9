//! Closed-form per-iteration expectations and bounds.
//!
//! Compute times are i.i.d. exponential with mean `eta`. Waiting for all of
//! `b` workers costs `eta * H_b` on average, waiting for the fastest of
//! `M_G` costs `eta / M_G`, and waiting for the slowest of `a` groups each
//! represented by its fastest member is the integral of `1 - F_G(x)^a`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// `H_a = sum_{k=1..a} 1/k`, with `H_0 = 0`.
pub fn harmonic(a: usize) -> f64 {
    (1..=a).map(|k| 1.0 / k as f64).sum()
}

/// Mean of the `a`-th smallest of `b` i.i.d. exponentials with mean `eta`:
/// `eta (H_b - H_(b-a))`.
pub fn expected_order_stat(a: usize, b: usize, eta: f64) -> Result<f64> {
    if a == 0 || a > b {
        return Err(Error::contract(format!("order statistic {a} of {b} is undefined")));
    }
    Ok(eta * (harmonic(b) - harmonic(b - a)))
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// CDF of the fastest of `group_size` exponential compute times, written as
/// the probability that at least one member has finished by `x`:
/// `sum_{j=1..M_G} C(M_G, j) F(x)^j (1 - F(x))^(M_G - j)`.
pub fn group_cdf(x: f64, group_size: usize, eta: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let f = -libm::expm1(-x / eta);
    let q = 1.0 - f;
    (1..=group_size)
        .map(|j| binomial(group_size, j) * libm::pow(f, j as f64) * libm::pow(q, (group_size - j) as f64))
        .sum()
}

const QUAD_TOL: f64 = 1e-8;
const CUTOFF_INTEGRAND: f64 = 1e-12;
const MAX_DEPTH: u32 = 48;

/// Expected time until the slowest of `a` selected groups has delivered,
/// each group delivering when its fastest member finishes:
/// `int_0^inf 1 - F_G(x)^a dx`, by adaptive Simpson quadrature.
///
/// `groups` only bounds `a`; the groups' times are i.i.d.
pub fn expected_group_max(a: usize, groups: usize, group_size: usize, eta: f64) -> Result<f64> {
    if a == 0 || a > groups || group_size == 0 {
        return Err(Error::contract(format!(
            "need 1 <= a <= G and M_G >= 1 (a = {a}, G = {groups}, M_G = {group_size})"
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::contract("mean compute time must be positive"));
    }
    let integrand = |x: f64| 1.0 - libm::pow(group_cdf(x, group_size, eta), a as f64);

    let mut upper = eta / group_size as f64;
    let mut doublings = 0;
    while integrand(upper) >= CUTOFF_INTEGRAND {
        upper *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::Numerical { message: "no integration cutoff found".into(), estimate: upper });
        }
    }

    let panels = 32;
    let width = upper / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = p as f64 * width;
        let hi = lo + width;
        total += adaptive_simpson(&integrand, lo, hi, QUAD_TOL / panels as f64, MAX_DEPTH).map_err(|partial| {
            Error::Numerical { message: "quadrature did not converge".into(), estimate: total + partial }
        })?;
    }
    Ok(total)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> core::result::Result<f64, f64> {
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> core::result::Result<f64, f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if (delta).abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(left + right);
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1).map_err(|p| l + p)?;
    Ok(l + r)
}

/// Inputs to the load and runtime predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisInputs {
    pub workers: usize,
    pub groups: usize,
    pub group_size: usize,
    pub eta: f64,
    pub max_delay: usize,
    /// Mini-batch size in samples.
    pub batch: usize,
    /// Per-lag constants `c_1 .. c_D`.
    pub lag_constants: Vec<f64>,
    pub worker_smoothness: Vec<f64>,
    pub group_smoothness: Vec<f64>,
}

impl AnalysisInputs {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 || self.groups == 0 || self.group_size == 0 || self.max_delay == 0 {
            return Err(Error::config("M, G, M_G and D must be positive"));
        }
        if self.workers != self.groups * self.group_size {
            return Err(Error::config(format!(
                "M = {} is not G * M_G = {} * {}",
                self.workers, self.groups, self.group_size
            )));
        }
        if self.lag_constants.len() != self.max_delay {
            return Err(Error::config("need exactly D per-lag constants"));
        }
        if !(self.eta > 0.0) {
            return Err(Error::config("eta must be positive"));
        }
        Ok(())
    }
}

/// Expected number of selected units together with the fraction of units in
/// each lag bin `d = 0..=D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionBound {
    pub expected: f64,
    pub bin_fractions: Vec<f64>,
}

/// Lag bin of a unit: the `d` with `t_(d+1) <= L^2 < t_d`, where
/// `t_d = c_d / (d n^2)` for `1 <= d <= D`, `t_0 = +inf` and `t_(D+1) = 0`.
/// Bins are half-open; the smallest matching `d` wins.
fn lag_bin(l_sq: f64, units: usize, lag_constants: &[f64]) -> usize {
    let max_delay = lag_constants.len();
    let n2 = (units * units) as f64;
    let threshold = |d: usize| -> f64 {
        if d == 0 {
            f64::INFINITY
        } else if d > max_delay {
            0.0
        } else {
            lag_constants[d - 1] / (d as f64 * n2)
        }
    };
    (0..=max_delay).find(|&d| threshold(d + 1) <= l_sq && l_sq < threshold(d)).unwrap_or(0)
}

fn selection_bound(smoothness: &[f64], lag_constants: &[f64]) -> SelectionBound {
    let n = smoothness.len();
    let mut counts = vec![0usize; lag_constants.len() + 1];
    for &l in smoothness {
        counts[lag_bin(l * l, n, lag_constants)] += 1;
    }
    let bin_fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect();
    let expected = n as f64 * bin_fractions.iter().enumerate().map(|(d, h)| h / (d as f64 + 1.0)).sum::<f64>();
    SelectionBound { expected, bin_fractions }
}

/// Expected workers selected per iteration under per-worker lazy selection.
pub fn selection_bound_workers(inputs: &AnalysisInputs) -> Result<SelectionBound> {
    inputs.validate()?;
    if inputs.worker_smoothness.len() != inputs.workers {
        return Err(Error::config("need one smoothness constant per worker"));
    }
    Ok(selection_bound(&inputs.worker_smoothness, &inputs.lag_constants))
}

/// Expected groups selected per iteration under grouped lazy selection.
pub fn selection_bound_groups(inputs: &AnalysisInputs) -> Result<SelectionBound> {
    inputs.validate()?;
    if inputs.group_smoothness.len() != inputs.groups {
        return Err(Error::config("need one smoothness constant per group"));
    }
    Ok(selection_bound(&inputs.group_smoothness, &inputs.lag_constants))
}

/// Per-iteration communication (downloads + uploads) and computation
/// (gradient samples) for the three Adam-based schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedLoads {
    pub comm_dadam: f64,
    pub comm_cada: f64,
    pub comm_gcada: f64,
    pub comp_dadam: f64,
    pub comp_cada: f64,
    pub comp_gcada: f64,
}

pub fn predicted_loads(inputs: &AnalysisInputs, workers_selected: f64, groups_selected: f64) -> PredictedLoads {
    let m = inputs.workers as f64;
    let mg = inputs.group_size as f64;
    let mu = inputs.batch as f64;
    PredictedLoads {
        comm_dadam: 2.0 * m,
        comm_cada: 2.0 * workers_selected,
        comm_gcada: groups_selected * (mg + 1.0),
        comp_dadam: mu * m,
        comp_cada: mu * workers_selected,
        comp_gcada: mu * groups_selected * mg,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedTimes {
    pub dadam: f64,
    pub cada: f64,
    pub gcada: f64,
}

/// Expected per-iteration wall clock. Fractional selection counts are rounded
/// to the nearest integer before indexing the order statistics.
pub fn predicted_times(inputs: &AnalysisInputs, workers_selected: f64, groups_selected: f64) -> Result<PredictedTimes> {
    inputs.validate()?;
    let eta = inputs.eta;
    let m_bar = (libm::round(workers_selected).max(0.0) as usize).min(inputs.workers);
    let g_bar = (libm::round(groups_selected).max(0.0) as usize).min(inputs.groups);
    Ok(PredictedTimes {
        dadam: expected_order_stat(inputs.workers, inputs.workers, eta)?,
        cada: if m_bar == 0 { 0.0 } else { expected_order_stat(m_bar, m_bar, eta)? },
        gcada: if g_bar == 0 { 0.0 } else { expected_group_max(g_bar, inputs.groups, inputs.group_size, eta)? },
    })
}
