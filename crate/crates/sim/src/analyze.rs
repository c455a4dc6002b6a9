//! Closed-form per-iteration predictions next to Monte Carlo checks, for the
//! `analyze` subcommand.

use std::io::{self, Write};

use psgd_core::analysis::{self, AnalysisInputs};
use psgd_core::straggler::{monte_carlo_full_selection, Estimate, ExponentialTimes};
use psgd_core::{Dataset, ExperimentConfig, Scheme, Simulation};

use crate::csv::format_sig;
use crate::SimError;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRow {
    pub scheme: Scheme,
    /// Expected selected units per iteration (workers, or groups for g-cada).
    pub units_selected: f64,
    pub time_predicted: f64,
    /// Simulated wall clock with the rounded number of units all selected.
    pub time_simulated: Estimate,
    pub comm_predicted: f64,
    pub comp_predicted: f64,
}

fn smoothness(config: &ExperimentConfig, data: &Dataset) -> Result<Vec<f64>, SimError> {
    Ok(Simulation::new(config.clone(), data)?.units().iter().map(|u| u.smoothness).collect())
}

/// Predictions for d-adam, cada and g-cada. Per-lag constants default to
/// each lazy scheme's own `c` for every lag.
pub fn analyze(
    cada: &ExperimentConfig,
    gcada: &ExperimentConfig,
    data: &Dataset,
    lag_constants: Option<Vec<f64>>,
    trials: usize,
) -> Result<Vec<AnalysisRow>, SimError> {
    let d = gcada.max_delay;
    let base = AnalysisInputs {
        workers: gcada.workers,
        groups: gcada.groups,
        group_size: gcada.group_size,
        eta: gcada.eta,
        max_delay: d,
        batch: gcada.batch,
        lag_constants: Vec::new(),
        worker_smoothness: smoothness(cada, data)?,
        group_smoothness: smoothness(gcada, data)?,
    };
    let worker_inputs =
        AnalysisInputs { lag_constants: lag_constants.clone().unwrap_or(vec![cada.threshold_c; d]), ..base.clone() };
    let group_inputs = AnalysisInputs { lag_constants: lag_constants.unwrap_or(vec![gcada.threshold_c; d]), ..base };

    let m_bar = analysis::selection_bound_workers(&worker_inputs)?.expected;
    let g_bar = analysis::selection_bound_groups(&group_inputs)?.expected;
    let loads = analysis::predicted_loads(&group_inputs, m_bar, g_bar);
    let times = analysis::predicted_times(&group_inputs, m_bar, g_bar)?;

    let model = ExponentialTimes::new(gcada.eta, gcada.seed)?;
    let simulate = |units: f64, size: usize| -> Result<Estimate, SimError> {
        let n = units.round() as usize;
        if n == 0 {
            return Ok(Estimate { mean: 0.0, std_error: 0.0 });
        }
        Ok(monte_carlo_full_selection(&model, n, size, trials)?)
    };

    Ok(vec![
        AnalysisRow {
            scheme: Scheme::DAdam,
            units_selected: gcada.workers as f64,
            time_predicted: times.dadam,
            time_simulated: simulate(gcada.workers as f64, 1)?,
            comm_predicted: loads.comm_dadam,
            comp_predicted: loads.comp_dadam,
        },
        AnalysisRow {
            scheme: Scheme::Cada,
            units_selected: m_bar,
            time_predicted: times.cada,
            time_simulated: simulate(m_bar, 1)?,
            comm_predicted: loads.comm_cada,
            comp_predicted: loads.comp_cada,
        },
        AnalysisRow {
            scheme: Scheme::GCada,
            units_selected: g_bar,
            time_predicted: times.gcada,
            time_simulated: simulate(g_bar, gcada.group_size)?,
            comm_predicted: loads.comm_gcada,
            comp_predicted: loads.comp_gcada,
        },
    ])
}

pub const ANALYSIS_HEADER: &str = "scheme,units_selected,time_pred,time_mc,time_mc_se,comm_pred,comp_pred";

pub fn write_csv(out: &mut impl Write, rows: &[AnalysisRow]) -> io::Result<()> {
    writeln!(out, "{ANALYSIS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.scheme,
            format_sig(r.units_selected),
            format_sig(r.time_predicted),
            format_sig(r.time_simulated.mean),
            format_sig(r.time_simulated.std_error),
            format_sig(r.comm_predicted),
            format_sig(r.comp_predicted),
        )?;
    }
    Ok(())
}

pub fn write_table(out: &mut impl Write, rows: &[AnalysisRow]) -> io::Result<()> {
    writeln!(
        out,
        "{:<8} {:>10} {:>13} {:>13} {:>11} {:>10} {:>10}",
        "scheme", "units/it", "T pred (s)", "T sim (s)", "sim s.e.", "comm/it", "comp/it"
    )?;
    for r in rows {
        writeln!(
            out,
            "{:<8} {:>10.3} {:>13.6e} {:>13.6e} {:>11.2e} {:>10.3} {:>10.1}",
            r.scheme.name(),
            r.units_selected,
            r.time_predicted,
            r.time_simulated.mean,
            r.time_simulated.std_error,
            r.comm_predicted,
            r.comp_predicted
        )?;
    }
    Ok(())
}
