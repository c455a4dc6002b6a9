//! Datasets and sharding with storage redundancy.

use alloc::format;
use alloc::vec::Vec;

use crate::loss::dot;
use crate::rng::{stream, CounterRng};
use crate::{Error, Result};

/// Dense row-major regression dataset: `n` rows of `d` features, one label
/// per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<f64>, dim: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::contract("dataset must hold at least one sample"));
        }
        if dim == 0 {
            return Err(Error::contract("feature dimension must be positive"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::contract(format!(
                "{} feature values do not form {} rows of dimension {}",
                features.len(),
                labels.len(),
                dim
            )));
        }
        Ok(Self { features, labels, dim })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Copy of the dataset with a constant `1.0` feature appended to every row.
    pub fn with_bias(&self) -> Self {
        let dim = self.dim + 1;
        let mut features = Vec::with_capacity(self.len() * dim);
        for i in 0..self.len() {
            features.extend_from_slice(self.row(i));
            features.push(1.0);
        }
        Self { features, labels: self.labels.clone(), dim }
    }

    /// Keep only the first `n` samples.
    pub fn truncate(&mut self, n: usize) {
        if n >= 1 && n < self.len() {
            self.labels.truncate(n);
            self.features.truncate(n * self.dim);
        }
    }
}

/// Seeded synthetic linear-regression data together with its generator.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub ground_truth: Vec<f64>,
}

/// Gaussian regression problem: features and ground-truth weights are i.i.d.
/// standard normal, labels are `x . theta* + noise_sd * z`.
pub fn synth_regression(n: usize, dim: usize, noise_sd: f64, seed: u64) -> Result<Synthetic> {
    if n == 0 || dim == 0 {
        return Err(Error::contract("synthetic data needs n >= 1 and d >= 1"));
    }
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::contract("noise sd must be finite and non-negative"));
    }
    let rng = CounterRng::new(seed);
    let ground_truth: Vec<f64> = (0..dim).map(|j| rng.standard_normal(stream::GROUND_TRUTH, j as u64, 0)).collect();
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let start = features.len();
        features.extend((0..dim).map(|j| rng.standard_normal(stream::FEATURES, i as u64, j as u64)));
        let mut y = dot(&features[start..], &ground_truth);
        if noise_sd > 0.0 {
            y += noise_sd * rng.standard_normal(stream::NOISE, i as u64, 0);
        }
        labels.push(y);
    }
    Ok(Synthetic { dataset: Dataset { features, labels, dim }, ground_truth })
}

/// A block of samples and the workers that store it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shard {
    pub owners: Vec<usize>,
    pub samples: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShardingMode {
    /// One disjoint shard per worker, redundancy 1.
    PerWorkerDisjoint,
    /// One disjoint shard per group, replicated on each of its members.
    PerGroupReplicated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardingPlan {
    pub shards: Vec<Shard>,
    pub redundancy: usize,
    pub mode: ShardingMode,
}

impl ShardingPlan {
    /// Index of the shard each worker owns.
    pub fn shard_of_worker(&self, worker: usize) -> Option<usize> {
        self.shards.iter().position(|s| s.owners.contains(&worker))
    }
}

/// Split `n` samples into contiguous blocks.
///
/// Per-worker mode gives worker `m` the `m`-th block of `n / workers` samples.
/// Per-group mode gives group `g` (workers `g*M_G .. (g+1)*M_G`) the `g`-th
/// block of `n / groups` samples, so every sample is stored `M_G` times.
pub fn shard(n: usize, workers: usize, groups: usize, mode: ShardingMode) -> Result<ShardingPlan> {
    if n == 0 || workers == 0 {
        return Err(Error::config("sharding needs at least one sample and one worker"));
    }
    let (blocks, owners_per_block) = match mode {
        ShardingMode::PerWorkerDisjoint => {
            if n % workers != 0 {
                return Err(Error::config(format!("{n} samples cannot be split evenly across {workers} workers")));
            }
            (workers, 1)
        }
        ShardingMode::PerGroupReplicated => {
            if groups == 0 || workers % groups != 0 {
                return Err(Error::config(format!("{workers} workers cannot form {groups} equal groups")));
            }
            if n % groups != 0 {
                return Err(Error::config(format!("{n} samples cannot be split evenly across {groups} groups")));
            }
            (groups, workers / groups)
        }
    };
    let size = n / blocks;
    let shards = (0..blocks)
        .map(|b| Shard {
            owners: (b * owners_per_block..(b + 1) * owners_per_block).collect(),
            samples: (b * size..(b + 1) * size).collect(),
        })
        .collect();
    Ok(ShardingPlan { shards, redundancy: owners_per_block, mode })
}
