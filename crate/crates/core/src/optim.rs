//! Gradient aggregation with stale gradients, and the parameter updates.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// A gradient held by the server, tagged with the iteration it was computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedGradient {
    pub values: Vec<f64>,
    pub computed_at: usize,
}

/// Server-side gradient estimate for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub values: Vec<f64>,
    /// Age of the gradient used for each unit: `0` for fresh, otherwise the
    /// number of iterations since it was computed.
    pub ages: Vec<usize>,
}

/// Sum one gradient per unit: the fresh one if the unit uploaded at
/// `iteration`, otherwise its cached stale one.
///
/// `fresh` and `stale` must partition `0..units`. Summation runs in ascending
/// unit id starting from zero, so the result is bit-reproducible.
pub fn aggregate(
    units: usize,
    dim: usize,
    iteration: usize,
    fresh: &BTreeMap<usize, CachedGradient>,
    stale: &BTreeMap<usize, CachedGradient>,
) -> Result<GradientEstimate> {
    if let Some(u) = fresh.keys().chain(stale.keys()).find(|&&u| u >= units) {
        return Err(Error::contract(format!("unit {u} out of range")));
    }
    let mut values = vec![0.0; dim];
    let mut ages = Vec::with_capacity(units);
    for unit in 0..units {
        let (g, age) = match (fresh.get(&unit), stale.get(&unit)) {
            (Some(_), Some(_)) => {
                return Err(Error::contract(format!("unit {unit} is both fresh and stale")));
            }
            (Some(g), None) => (g, 0),
            (None, Some(g)) => (g, iteration.saturating_sub(g.computed_at)),
            (None, None) => {
                return Err(Error::State(format!("no gradient cached for unit {unit}")));
            }
        };
        if g.values.len() != dim {
            return Err(Error::contract(format!(
                "unit {unit} gradient has dimension {}, expected {dim}",
                g.values.len()
            )));
        }
        for (acc, v) in values.iter_mut().zip(&g.values) {
            *acc += v;
        }
        ages.push(age);
    }
    Ok(GradientEstimate { values, ages })
}

/// Plain SGD: `theta -= lr * g`.
pub fn sgd_step(theta: &mut [f64], estimate: &[f64], lr: f64) {
    debug_assert_eq!(theta.len(), estimate.len());
    for (t, g) in theta.iter_mut().zip(estimate) {
        *t -= lr * g;
    }
}

/// Which value the second-moment recursion decays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SecondMoment {
    /// `v' = beta2 * v_hat + (1 - beta2) g^2`, decaying the running maximum.
    #[default]
    DecayMax,
    /// `v' = beta2 * v + (1 - beta2) g^2`, the textbook AMSGrad recursion.
    Classical,
}

/// AMSGrad memory and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub h: Vec<f64>,
    pub v: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub step: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lr: f64,
    pub rule: SecondMoment,
}

impl OptimizerState {
    /// Zero-initialized memory. `beta1` may be 0; `beta2` in `[0, 1)`.
    pub fn new(dim: usize, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::config("momentum weights must lie in [0, 1)"));
        }
        if !(epsilon >= 0.0) || !(lr >= 0.0) {
            return Err(Error::config("epsilon and stepsize must be non-negative"));
        }
        Ok(Self {
            h: vec![0.0; dim],
            v: vec![0.0; dim],
            v_hat: vec![0.0; dim],
            step: 0,
            beta1,
            beta2,
            epsilon,
            lr,
            rule: SecondMoment::default(),
        })
    }

    pub fn with_rule(mut self, rule: SecondMoment) -> Self {
        self.rule = rule;
        self
    }

    /// One AMSGrad update of `theta` with gradient estimate `g`:
    ///
    /// ```text
    /// h'     = b1 h + (1 - b1) g
    /// v'     = b2 v_hat + (1 - b2) g^2        (or b2 v with SecondMoment::Classical)
    /// v_hat' = max(v_hat, v')
    /// theta' = theta - lr * h' / sqrt(eps + v_hat')
    /// ```
    pub fn amsgrad_step(&mut self, theta: &mut [f64], g: &[f64]) -> Result<()> {
        if theta.len() != self.h.len() || g.len() != self.h.len() {
            return Err(Error::contract("gradient and model dimension must match optimizer state"));
        }
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical { message: "non-finite gradient entry".into(), estimate: *bad });
        }
        let (b1, b2) = (self.beta1, self.beta2);
        for j in 0..theta.len() {
            let h = b1 * self.h[j] + (1.0 - b1) * g[j];
            let base = match self.rule {
                SecondMoment::DecayMax => self.v_hat[j],
                SecondMoment::Classical => self.v[j],
            };
            let v = b2 * base + (1.0 - b2) * g[j] * g[j];
            let v_hat = if v > self.v_hat[j] { v } else { self.v_hat[j] };
            let denom = libm::sqrt(self.epsilon + v_hat);
            if denom > 0.0 {
                theta[j] -= self.lr * h / denom;
            }
            self.h[j] = h;
            self.v[j] = v;
            self.v_hat[j] = v_hat;
        }
        self.step += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cached(values: Vec<f64>, at: usize) -> CachedGradient {
        CachedGradient { values, computed_at: at }
    }

    #[test]
    fn single_fresh_unit() {
        let mut fresh = BTreeMap::new();
        fresh.insert(0, cached(vec![1.5, -2.0], 4));
        let est = aggregate(1, 2, 4, &fresh, &BTreeMap::new()).unwrap();
        assert_eq!(est.values, vec![1.5, -2.0]);
        assert_eq!(est.ages, vec![0]);
    }

    #[test]
    fn fresh_plus_stale() {
        let mut fresh = BTreeMap::new();
        fresh.insert(0, cached(vec![1.0, 0.0], 5));
        let mut stale = BTreeMap::new();
        stale.insert(1, cached(vec![0.0, 2.0], 3));
        stale.insert(2, cached(vec![4.0, 4.0], 1));
        let est = aggregate(3, 2, 5, &fresh, &stale).unwrap();
        assert_eq!(est.values, vec![5.0, 6.0]);
        assert_eq!(est.ages, vec![0, 2, 4]);
    }

    #[test]
    fn missing_and_overlapping_units() {
        let mut fresh = BTreeMap::new();
        fresh.insert(0, cached(vec![1.0], 0));
        assert!(matches!(aggregate(2, 1, 0, &fresh, &BTreeMap::new()), Err(Error::State(_))));
        let stale = fresh.clone();
        assert!(matches!(aggregate(1, 1, 0, &fresh, &stale), Err(Error::Contract(_))));
        assert!(aggregate(1, 2, 0, &fresh, &BTreeMap::new()).is_err());
    }

    #[test]
    fn sgd_examples() {
        let mut t = vec![1.0, 1.0];
        sgd_step(&mut t, &[2.0, -2.0], 0.0);
        assert_eq!(t, vec![1.0, 1.0]);
        sgd_step(&mut t, &[2.0, -2.0], 0.5);
        assert_eq!(t, vec![0.0, 2.0]);
        let mut z = vec![0.0, 0.0];
        sgd_step(&mut z, &[3.0, -1.0], 1.0);
        assert_eq!(z, vec![-3.0, 1.0]);
    }

    #[test]
    fn amsgrad_without_memory_is_sign_descent() {
        let mut st = OptimizerState::new(3, 0.1, 0.0, 0.0, 0.0).unwrap();
        let mut theta = vec![0.0, 1.0, 2.0];
        st.amsgrad_step(&mut theta, &[3.0, -0.5, 1e-3]).unwrap();
        for (t, e) in theta.iter().zip([-0.1, 1.1, 1.9]) {
            assert!((t - e).abs() < 1e-15, "{theta:?}");
        }
    }

    #[test]
    fn amsgrad_zero_gradient_is_noop() {
        let mut st = OptimizerState::new(2, 0.1, 0.9, 0.999, 1e-8).unwrap();
        let mut theta = vec![0.3, -0.7];
        st.amsgrad_step(&mut theta, &[0.0, 0.0]).unwrap();
        assert_eq!(theta, vec![0.3, -0.7]);
        assert_eq!(st.v_hat, vec![0.0, 0.0]);
    }

    #[test]
    fn amsgrad_rejects_non_finite() {
        let mut st = OptimizerState::new(1, 0.1, 0.9, 0.999, 1e-8).unwrap();
        let mut theta = vec![0.0];
        assert!(matches!(st.amsgrad_step(&mut theta, &[f64::NAN]), Err(Error::Numerical { .. })));
        assert!(st.amsgrad_step(&mut theta, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rules_differ_once_max_exceeds_v() {
        let mut a = OptimizerState::new(1, 0.1, 0.0, 0.5, 0.0).unwrap();
        let mut b = a.clone().with_rule(SecondMoment::Classical);
        let (mut ta, mut tb) = (vec![0.0], vec![0.0]);
        for g in [4.0, 1.0, 1.0] {
            a.amsgrad_step(&mut ta, &[g]).unwrap();
            b.amsgrad_step(&mut tb, &[g]).unwrap();
        }
        // max-decay: v = 8, 4.5, 4.5 ; classical: v = 8, 4.5, 2.75 ; v_hat stays 8 in both
        assert_eq!(a.v, vec![4.5]);
        assert_eq!(b.v, vec![2.75]);
        assert_eq!(a.v_hat, b.v_hat);
    }

    #[test]
    fn bad_hyperparameters() {
        assert!(OptimizerState::new(1, 0.1, 1.0, 0.9, 1e-8).is_err());
        assert!(OptimizerState::new(1, 0.1, 0.9, -0.1, 1e-8).is_err());
        assert!(OptimizerState::new(1, -0.1, 0.9, 0.9, 1e-8).is_err());
    }
}
