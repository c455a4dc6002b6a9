//! The training loop shared by all schemes, plus metrics and run summaries.
//!
//! One iteration `k` of [`Simulation::step`]:
//!
//! 1. pick units: all of them for `d-sgd`/`d-adam` and at `k = 0`, otherwise
//!    the lazy selection of [`crate::schedule`];
//! 2. dispatch `theta^k` to every member of every selected unit and sample
//!    their compute times;
//! 3. resolve who uploads (all dispatched workers, or the fastest member of
//!    each group) and the iteration's wall clock;
//! 4. compute the uploaders' mini-batch gradients at `theta^k`, refresh the
//!    gradient cache, and aggregate fresh and stale gradients;
//! 5. update `theta`, age the units and record metrics.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::data::{shard, Dataset, ShardingMode, ShardingPlan};
use crate::loss::{global_loss, minibatch_gradient, smoothness_constant, MiniBatch, ModelVector};
use crate::optim::{aggregate, sgd_step, CachedGradient, OptimizerState, SecondMoment};
use crate::rng::CounterRng;
use crate::schedule::{self, ConditionWeights, IterateHistory, SelectionReason, SelectionResult, UnitMeta};
use crate::straggler::{resolve_cada, resolve_gcada, sample_times, ExponentialTimes, IterationTiming};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    /// Synchronous constant-stepsize SGD over all workers.
    DSgd,
    /// Synchronous AMSGrad over all workers.
    DAdam,
    /// Lazy per-worker selection with AMSGrad.
    Cada,
    /// Lazy per-group selection, fastest member uploads, AMSGrad.
    GCada,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::DSgd, Scheme::DAdam, Scheme::Cada, Scheme::GCada];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::DSgd => "d-sgd",
            Scheme::DAdam => "d-adam",
            Scheme::Cada => "cada",
            Scheme::GCada => "g-cada",
        }
    }

    pub fn is_lazy(self) -> bool {
        matches!(self, Scheme::Cada | Scheme::GCada)
    }

    pub fn is_grouped(self) -> bool {
        self == Scheme::GCada
    }
}

impl core::fmt::Display for Scheme {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown scheme `{s}` (expected d-sgd, d-adam, cada or g-cada)")))
    }
}

/// Normalization applied to each unit's local loss when estimating its
/// smoothness constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmoothnessScale {
    /// Shard-averaged loss: scale `1 / |shard|`, i.e. `M / (r N)`.
    #[default]
    Local,
    /// Expected mini-batch sum: scale `b / |shard|`, matching the summed
    /// gradients the units actually upload.
    Batch,
}

/// How the aggregated gradient is scaled before the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientScale {
    /// Plain sum over units of per-unit batch sums.
    #[default]
    Sum,
    /// Divide by `units * batch`: the mean per-sample gradient.
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    /// Total number of workers `M`.
    pub workers: usize,
    /// Number of groups `G` (grouped scheme only).
    pub groups: usize,
    /// Workers per group `M_G` (grouped scheme only). Equals the storage
    /// redundancy.
    pub group_size: usize,
    /// Maximum age of information `D` before a unit is forced.
    pub max_delay: usize,
    /// Constant `c` of the lazy condition.
    pub threshold_c: f64,
    /// Optional per-lag constants replacing `c`.
    pub lag_weights: Option<Vec<f64>>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Mean compute time of one mini-batch gradient, in seconds.
    pub eta: f64,
    /// Mini-batch size in samples.
    pub batch: usize,
    pub max_iters: usize,
    pub loss_threshold: f64,
    pub seed: u64,
    pub smoothness_scale: SmoothnessScale,
    pub gradient_scale: GradientScale,
    pub second_moment: SecondMoment,
    /// Evaluate the training loss every this many iterations.
    pub loss_every: usize,
}

impl ExperimentConfig {
    /// Reference setup: 12 workers in 3 groups of 4, `beta1 = 0.9`,
    /// `beta2 = 0.999`, stepsize 0.01 for the Adam-based schemes, `c = 2` for
    /// per-worker selection and `c = 0.3` for grouped selection, mean compute
    /// time `1e-4` s.
    ///
    /// `d-sgd` uses stepsize 0.05 on the mean per-sample gradient: the
    /// reference stepsize 2.6 diverges on summed gradients of standardized
    /// features. See [`ExperimentConfig::reference_dsgd_lr`].
    pub fn new(scheme: Scheme) -> Self {
        let (lr, threshold_c, gradient_scale) = match scheme {
            Scheme::DSgd => (0.05, 0.0, GradientScale::Mean),
            Scheme::DAdam => (0.01, 0.0, GradientScale::Sum),
            Scheme::Cada => (0.01, 2.0, GradientScale::Sum),
            Scheme::GCada => (0.01, 0.3, GradientScale::Sum),
        };
        Self {
            scheme,
            workers: 12,
            groups: 3,
            group_size: 4,
            max_delay: 10,
            threshold_c,
            lag_weights: None,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            eta: 1e-4,
            batch: 32,
            max_iters: 20_000,
            loss_threshold: 0.1,
            seed: 0,
            smoothness_scale: SmoothnessScale::Local,
            gradient_scale,
            second_moment: SecondMoment::DecayMax,
            loss_every: 1,
        }
    }

    /// The constant-stepsize SGD stepsize of the reference setup.
    pub const fn reference_dsgd_lr() -> f64 {
        2.6
    }

    /// Storage redundancy: `M_G` for the grouped scheme, 1 otherwise.
    pub fn redundancy(&self) -> usize {
        if self.scheme.is_grouped() {
            self.group_size
        } else {
            1
        }
    }

    /// Number of scheduling units: groups or workers.
    pub fn units(&self) -> usize {
        if self.scheme.is_grouped() {
            self.groups
        } else {
            self.workers
        }
    }

    pub fn condition_weights(&self) -> ConditionWeights {
        match &self.lag_weights {
            Some(w) => ConditionWeights::PerLag(w.clone()),
            None => ConditionWeights::Scalar(self.threshold_c),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::config("need at least one worker"));
        }
        if self.scheme.is_grouped() && (self.groups == 0 || self.groups * self.group_size != self.workers) {
            return Err(Error::config(format!(
                "workers ({}) must equal groups ({}) x group size ({})",
                self.workers, self.groups, self.group_size
            )));
        }
        if self.batch == 0 || self.max_delay == 0 || self.max_iters == 0 || self.loss_every == 0 {
            return Err(Error::config("batch, max delay, iteration cap and loss interval must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("stepsize must be positive"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config("mean compute time must be positive"));
        }
        if !(self.threshold_c >= 0.0) {
            return Err(Error::config("threshold constant c must be non-negative"));
        }
        if let Some(w) = &self.lag_weights {
            if w.len() != self.max_delay || w.iter().any(|c| !(*c >= 0.0)) {
                return Err(Error::config("need D non-negative per-lag weights"));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("momentum weights must lie in [0, 1)"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::config("epsilon must be non-negative"));
        }
        Ok(())
    }
}

/// Per-iteration metrics. Communication counts parameter downloads plus
/// gradient uploads; computation counts gradient samples over all dispatched
/// workers.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub iteration: usize,
    pub wall_clock: f64,
    pub wall_clock_cum: f64,
    pub selected_units: usize,
    pub dispatched: usize,
    pub uploaded: usize,
    pub comm: u64,
    pub comm_cum: u64,
    pub comp: u64,
    pub comp_cum: u64,
    /// Training loss after this iteration's update, if evaluated.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub scheme: Scheme,
    pub seed: u64,
    pub iterations: usize,
    pub iterations_to_threshold: Option<usize>,
    pub time_to_threshold: Option<f64>,
    pub comm_to_threshold: Option<u64>,
    pub comp_to_threshold: Option<u64>,
    pub final_loss: f64,
    pub total_time: f64,
    pub total_comm: u64,
    pub total_comp: u64,
    pub config: ExperimentConfig,
}

impl RunSummary {
    pub fn reached(&self) -> bool {
        self.iterations_to_threshold.is_some()
    }
}

/// Everything observable about one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub record: MetricsRecord,
    pub selection: SelectionResult,
    /// Each unit's AoI when the selection was made.
    pub aoi_at_check: Vec<usize>,
    pub timing: IterationTiming,
}

/// Parameter-server state for one run.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    config: ExperimentConfig,
    data: &'a Dataset,
    plan: ShardingPlan,
    units: Vec<UnitMeta>,
    weights: ConditionWeights,
    theta: ModelVector,
    optimizer: OptimizerState,
    history: IterateHistory,
    cache: BTreeMap<usize, CachedGradient>,
    times: ExponentialTimes,
    rng: CounterRng,
    iteration: usize,
    wall_clock: f64,
    comm: u64,
    comp: u64,
    loss: f64,
}

impl<'a> Simulation<'a> {
    /// Shard the data, estimate smoothness constants (lazy schemes only) and
    /// start from `theta = 0`.
    pub fn new(config: ExperimentConfig, data: &'a Dataset) -> Result<Self> {
        config.validate()?;
        let mode =
            if config.scheme.is_grouped() { ShardingMode::PerGroupReplicated } else { ShardingMode::PerWorkerDisjoint };
        let plan = shard(data.len(), config.workers, config.groups, mode)?;
        let mut units = Vec::with_capacity(plan.shards.len());
        for (id, s) in plan.shards.iter().enumerate() {
            let smoothness = if config.scheme.is_lazy() {
                let scale = match config.smoothness_scale {
                    SmoothnessScale::Local => 1.0 / s.samples.len() as f64,
                    SmoothnessScale::Batch => config.batch as f64 / s.samples.len() as f64,
                };
                smoothness_constant(s, data, scale)?
            } else {
                0.0
            };
            units.push(UnitMeta::group(id, s.owners.clone(), smoothness));
        }
        let dim = data.dim();
        let theta = ModelVector::zeros(dim);
        let optimizer = OptimizerState::new(dim, config.lr, config.beta1, config.beta2, config.epsilon)?
            .with_rule(config.second_moment);
        let history = IterateHistory::new(&theta, config.max_delay);
        let loss = global_loss(&theta, data)?;
        Ok(Self {
            weights: config.condition_weights(),
            times: ExponentialTimes::new(config.eta, config.seed)?,
            rng: CounterRng::new(config.seed),
            config,
            data,
            plan,
            units,
            theta,
            optimizer,
            history,
            cache: BTreeMap::new(),
            iteration: 0,
            wall_clock: 0.0,
            comm: 0,
            comp: 0,
            loss,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn theta(&self) -> &ModelVector {
        &self.theta
    }

    pub fn units(&self) -> &[UnitMeta] {
        &self.units
    }

    pub fn plan(&self) -> &ShardingPlan {
        &self.plan
    }

    /// Index of the next iteration to run.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Most recently evaluated training loss.
    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn step(&mut self) -> Result<IterationReport> {
        let k = self.iteration;
        let aoi_at_check: Vec<usize> = self.units.iter().map(|u| u.aoi).collect();
        let selection = if k == 0 {
            SelectionResult::all(&self.units, SelectionReason::ColdStart)
        } else if self.config.scheme.is_lazy() {
            schedule::select(&self.units, &self.history, &self.weights, self.config.max_delay)?
        } else {
            SelectionResult::all(&self.units, SelectionReason::ConditionViolated)
        };

        let mut dispatched: Vec<usize> = selection.ids().flat_map(|u| self.units[u].members.iter().copied()).collect();
        dispatched.sort_unstable();
        let times = sample_times(&self.times, k, &dispatched);
        let timing = if self.config.scheme.is_grouped() {
            let groups: Vec<(usize, &[usize])> =
                selection.ids().map(|g| (g, self.units[g].members.as_slice())).collect();
            resolve_gcada(&times, &groups)?
        } else {
            let workers: Vec<usize> = selection.ids().collect();
            resolve_cada(&times, &workers)?
        };

        let mut fresh = BTreeMap::new();
        for &(unit, worker) in &timing.uploads {
            let batch = MiniBatch::draw(&self.plan.shards[unit], self.config.batch, &self.rng, k, worker);
            let values = minibatch_gradient(&self.theta, &batch, self.data)?;
            self.cache.remove(&unit);
            fresh.insert(unit, CachedGradient { values, computed_at: k });
        }
        let mut estimate = aggregate(self.units.len(), self.theta.len(), k, &fresh, &self.cache)?;
        self.cache.append(&mut fresh);
        if self.config.gradient_scale == GradientScale::Mean {
            let n = (self.units.len() * self.config.batch) as f64;
            estimate.values.iter_mut().for_each(|g| *g /= n);
        }

        match self.config.scheme {
            Scheme::DSgd => sgd_step(&mut self.theta, &estimate.values, self.config.lr),
            _ => self.optimizer.amsgrad_step(&mut self.theta, &estimate.values).map_err(|e| match e {
                Error::Numerical { estimate, .. } => Error::Divergence { iteration: k, loss: estimate },
                other => other,
            })?,
        }
        if self.config.scheme.is_lazy() {
            schedule::update_aoi(&selection, &mut self.units);
        }
        self.history.push(&self.theta);

        let evaluate = (k + 1) % self.config.loss_every == 0 || k + 1 == self.config.max_iters;
        let loss = if evaluate {
            let l = if self.theta.is_finite() { global_loss(&self.theta, self.data)? } else { f64::NAN };
            if !l.is_finite() {
                return Err(Error::Divergence { iteration: k, loss: l });
            }
            self.loss = l;
            Some(l)
        } else {
            None
        };

        let n_dispatch = dispatched.len() as u64;
        let n_upload = timing.uploads.len() as u64;
        let comm = n_dispatch + n_upload;
        let comp = n_dispatch * self.config.batch as u64;
        self.wall_clock += timing.wall_clock;
        self.comm += comm;
        self.comp += comp;
        self.iteration += 1;

        Ok(IterationReport {
            record: MetricsRecord {
                iteration: k,
                wall_clock: timing.wall_clock,
                wall_clock_cum: self.wall_clock,
                selected_units: selection.len(),
                dispatched: dispatched.len(),
                uploaded: timing.uploads.len(),
                comm,
                comm_cum: self.comm,
                comp,
                comp_cum: self.comp,
                loss,
            },
            selection,
            aoi_at_check,
            timing,
        })
    }
}

/// Run until the training loss reaches the threshold or the iteration cap.
pub fn run(config: &ExperimentConfig, data: &Dataset) -> Result<(Vec<MetricsRecord>, RunSummary)> {
    let mut sim = Simulation::new(config.clone(), data)?;
    let mut records = Vec::new();
    let mut hit: Option<MetricsRecord> = None;
    while sim.iteration() < config.max_iters {
        let report = sim.step()?;
        let reached = report.record.loss.is_some_and(|l| l <= config.loss_threshold);
        if reached {
            hit = Some(report.record.clone());
        }
        records.push(report.record);
        if reached {
            break;
        }
    }
    let last = records.last();
    let summary = RunSummary {
        scheme: config.scheme,
        seed: config.seed,
        iterations: records.len(),
        iterations_to_threshold: hit.as_ref().map(|r| r.iteration + 1),
        time_to_threshold: hit.as_ref().map(|r| r.wall_clock_cum),
        comm_to_threshold: hit.as_ref().map(|r| r.comm_cum),
        comp_to_threshold: hit.as_ref().map(|r| r.comp_cum),
        final_loss: sim.loss(),
        total_time: last.map_or(0.0, |r| r.wall_clock_cum),
        total_comm: last.map_or(0, |r| r.comm_cum),
        total_comp: last.map_or(0, |r| r.comp_cum),
        config: config.clone(),
    };
    Ok((records, summary))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparedRun {
    pub config: ExperimentConfig,
    pub records: Vec<MetricsRecord>,
    pub summary: RunSummary,
}

/// Runs of several configurations on shared data and coupled randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub seed: u64,
    pub runs: Vec<ComparedRun>,
}

impl Comparison {
    pub fn get(&self, scheme: Scheme) -> Option<&ComparedRun> {
        self.runs.iter().find(|r| r.config.scheme == scheme)
    }
}

/// Run every configuration with its seed overridden by `seed`, so compute
/// times and mini-batches are drawn from the same keyed streams.
pub fn compare(configs: &[ExperimentConfig], seed: u64, data: &Dataset) -> Result<Comparison> {
    if let Some(first) = configs.first() {
        if configs.iter().any(|c| c.eta != first.eta) {
            return Err(Error::config("compared configurations must share the mean compute time"));
        }
    }
    let runs = configs
        .iter()
        .map(|c| {
            let config = ExperimentConfig { seed, ..c.clone() };
            let (records, summary) = run(&config, data)?;
            Ok(ComparedRun { config, records, summary })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { seed, runs })
}
