//! Quadratic-loss linear regression.
//!
//! The per-sample loss is `(x . theta - y)^2`. Mini-batch gradients are sums
//! over the batch, not averages, so the aggregate over units is a plain sum of
//! per-unit sums and the stepsize absorbs the scale.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use crate::data::{Dataset, Shard};
use crate::rng::{stream, CounterRng};
use crate::{Error, Result};

/// The model iterate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelVector(Vec<f64>);

impl ModelVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl From<Vec<f64>> for ModelVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for ModelVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ModelVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `||a - b||^2`.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean squared residual over the whole dataset.
pub fn global_loss(theta: &[f64], data: &Dataset) -> Result<f64> {
    check_dim(theta, data)?;
    let total: f64 = (0..data.len())
        .map(|i| {
            let r = dot(data.row(i), theta) - data.label(i);
            r * r
        })
        .sum();
    Ok(total / data.len() as f64)
}

/// Sample indices of one mini-batch. All indices come from a single shard.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniBatch {
    pub indices: Vec<usize>,
}

impl MiniBatch {
    /// Uniform draw with replacement of `size` samples from `shard`, keyed by
    /// `(iteration, worker)` so it is independent of any other draw.
    pub fn draw(shard: &Shard, size: usize, rng: &CounterRng, iteration: usize, worker: usize) -> Self {
        let n = shard.samples.len();
        let indices = (0..size)
            .map(|slot| {
                let pick = rng.below(n, stream::MINIBATCH, iteration as u64, worker as u64, slot as u64);
                shard.samples[pick]
            })
            .collect();
        Self { indices }
    }
}

/// `sum_{i in batch} 2 x_i (x_i . theta - y_i)`.
pub fn minibatch_gradient(theta: &[f64], batch: &MiniBatch, data: &Dataset) -> Result<Vec<f64>> {
    check_dim(theta, data)?;
    if batch.indices.is_empty() {
        return Err(Error::contract("mini-batch is empty"));
    }
    let mut grad = vec![0.0; theta.len()];
    for &i in &batch.indices {
        if i >= data.len() {
            return Err(Error::contract(format!("sample index {i} out of range")));
        }
        let x = data.row(i);
        let r = 2.0 * (dot(x, theta) - data.label(i));
        for (g, xi) in grad.iter_mut().zip(x) {
            *g += r * xi;
        }
    }
    Ok(grad)
}

const POWER_ITERATION_CAP: usize = 10_000;
const POWER_ITERATION_TOL: f64 = 1e-6;
const POWER_ITERATION_SEED: u64 = 0x005E_ED0F_5EED;

/// Smoothness constant `scale * 2 * lambda_max(X_s^T X_s)` of a shard's
/// quadratic loss, where `X_s` stacks the shard's feature rows.
///
/// `scale = 1 / |shard|` gives the constant of the shard-averaged local loss.
/// The top eigenvalue comes from matrix-free power iteration, stopped once the
/// eigen-residual is within `1e-6` of the estimate.
pub fn smoothness_constant(shard: &Shard, data: &Dataset, scale: f64) -> Result<f64> {
    if shard.samples.is_empty() {
        return Err(Error::contract("shard is empty"));
    }
    if let Some(&bad) = shard.samples.iter().find(|&&i| i >= data.len()) {
        return Err(Error::contract(format!("sample index {bad} out of range")));
    }
    let dim = data.dim();
    let rng = CounterRng::new(POWER_ITERATION_SEED);
    let mut v: Vec<f64> = (0..dim).map(|j| rng.standard_normal(stream::POWER_ITERATION, j as u64, 0)).collect();
    normalize(&mut v);

    let gram_apply = |v: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &i in &shard.samples {
            let x = data.row(i);
            let xv = dot(x, v);
            for (o, xi) in out.iter_mut().zip(x) {
                *o += xv * xi;
            }
        }
    };

    let mut gv = vec![0.0; dim];
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATION_CAP {
        gram_apply(&v, &mut gv);
        lambda = dot(&v, &gv);
        if lambda <= 0.0 {
            // X_s v = 0 for a random v means X_s = 0
            return Ok(0.0);
        }
        let residual = libm::sqrt(gv.iter().zip(&v).map(|(g, x)| (g - lambda * x) * (g - lambda * x)).sum());
        if residual <= POWER_ITERATION_TOL * lambda {
            return Ok(scale * 2.0 * lambda);
        }
        v.copy_from_slice(&gv);
        normalize(&mut v);
    }
    Err(Error::Numerical {
        message: format!("power iteration did not converge in {POWER_ITERATION_CAP} iterations"),
        estimate: scale * 2.0 * lambda,
    })
}

fn normalize(v: &mut [f64]) {
    let n = libm::sqrt(dot(v, v));
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn check_dim(theta: &[f64], data: &Dataset) -> Result<()> {
    if theta.len() != data.dim() {
        return Err(Error::contract(format!(
            "model dimension {} does not match feature dimension {}",
            theta.len(),
            data.dim()
        )));
    }
    Ok(())
}
