use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psgd_core::{compare, run, RunSummary, Scheme};
use psgd_sim::analyze::{analyze, write_csv, write_table};
use psgd_sim::config::Settings;
use psgd_sim::csv::{emit_csv, emit_summary_csv, format_sig};
use psgd_sim::SimError;

/// Simulate straggler-tolerant, communication-efficient parameter-server SGD.
#[derive(Parser)]
#[command(name = "psgd-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme and write per-iteration metrics.
    Run(Common),
    /// Run several schemes on coupled randomness.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated schemes (default: all four).
        #[arg(long, value_delimiter = ',')]
        schemes: Vec<String>,
    },
    /// Repeat runs over consecutive seeds and summarize.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        schemes: Vec<String>,
        /// Number of seeds, starting at --seed.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
    /// Print closed-form per-iteration time and load predictions.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Monte Carlo replications for the simulated columns.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Per-lag constants c_1..c_D (default: each scheme's c).
        #[arg(long, value_delimiter = ',')]
        lag_constants: Option<Vec<f64>>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// key=value settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long, value_name = "D")]
    max_delay: Option<usize>,
    #[arg(long)]
    threshold_c: Option<f64>,
    /// Comma-separated per-lag weights replacing --threshold-c.
    #[arg(long)]
    lag_weights: Option<String>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Mean compute time per mini-batch gradient, seconds.
    #[arg(long)]
    eta: Option<f64>,
    /// Mini-batch size in samples.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    loss_threshold: Option<f64>,
    #[arg(long)]
    loss_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// local or batch
    #[arg(long)]
    smoothness_scale: Option<String>,
    /// sum or mean
    #[arg(long)]
    gradient_scale: Option<String>,
    /// decay-max or classical
    #[arg(long)]
    second_moment: Option<String>,
    #[arg(long)]
    mnist_images: Option<PathBuf>,
    #[arg(long)]
    mnist_labels: Option<PathBuf>,
    #[arg(long)]
    limit: Option<usize>,
    /// Synthetic regression data as N,d,sd.
    #[arg(long, value_name = "N,d,sd")]
    synth: Option<String>,
    #[arg(long)]
    data_seed: Option<u64>,
    /// Append a constant feature.
    #[arg(long)]
    bias: Option<bool>,
    /// Output path (file for run/sweep, directory for compare).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn settings(&self) -> Result<Settings, SimError> {
        let mut settings = match &self.config {
            Some(path) => Settings::from_file(path)?,
            None => Settings::default(),
        };
        let mut flags = Settings::default();
        macro_rules! flag {
            ($($field:ident => $key:literal),* $(,)?) => {
                $(if let Some(v) = &self.$field { flags.set($key, v.to_string())?; })*
            };
        }
        flag! {
            scheme => "scheme", workers => "workers", groups => "groups", group_size => "group-size",
            max_delay => "max-delay", threshold_c => "threshold-c", lag_weights => "lag-weights", lr => "lr",
            beta1 => "beta1", beta2 => "beta2", epsilon => "epsilon", eta => "eta", batch => "batch",
            iters => "iters", loss_threshold => "loss-threshold", loss_every => "loss-every", seed => "seed",
            smoothness_scale => "smoothness-scale", gradient_scale => "gradient-scale",
            second_moment => "second-moment", limit => "limit", synth => "synth", data_seed => "data-seed",
            bias => "bias",
        }
        for (field, key) in
            [(&self.mnist_images, "mnist-images"), (&self.mnist_labels, "mnist-labels"), (&self.out, "out")]
        {
            if let Some(p) = field {
                flags.set(key, p.display().to_string())?;
            }
        }
        settings.merge(&flags);
        Ok(settings)
    }
}

fn schemes(list: &[String]) -> Result<Vec<Scheme>, SimError> {
    if list.is_empty() {
        return Ok(Scheme::ALL.to_vec());
    }
    list.iter().map(|s| s.parse().map_err(|e: psgd_core::Error| SimError::Config(e.to_string()))).collect()
}

fn opt_sig(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), format_sig)
}

fn print_summaries(summaries: &[RunSummary]) {
    println!(
        "{:<8} {:>6} {:>8} {:>10} {:>14} {:>12} {:>12} {:>12}",
        "scheme", "seed", "reached", "iters", "time_to_thr", "comm_to_thr", "comp_to_thr", "final_loss"
    );
    for s in summaries {
        println!(
            "{:<8} {:>6} {:>8} {:>10} {:>14} {:>12} {:>12} {:>12}",
            s.scheme.name(),
            s.seed,
            s.reached(),
            s.iterations,
            opt_sig(s.time_to_threshold),
            s.comm_to_threshold.map_or_else(|| "-".into(), |v| v.to_string()),
            s.comp_to_threshold.map_or_else(|| "-".into(), |v| v.to_string()),
            format_sig(s.final_loss)
        );
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn cmd_run(common: &Common) -> Result<(), SimError> {
    let settings = common.settings()?;
    let scheme = settings.scheme()?.unwrap_or(Scheme::GCada);
    let config = settings.experiment(scheme)?;
    let data = settings.load_dataset()?;
    let (records, summary) = run(&config, &data)?;
    if let Some(out) = settings.out() {
        emit_csv(&records, &out)?;
    }
    print_summaries(&[summary]);
    Ok(())
}

fn cmd_compare(common: &Common, list: &[String]) -> Result<(), SimError> {
    let settings = common.settings()?;
    let configs = schemes(list)?.into_iter().map(|s| settings.experiment(s)).collect::<Result<Vec<_>, _>>()?;
    let data = settings.load_dataset()?;
    let seed = configs.first().map_or(0, |c| c.seed);
    let comparison = compare(&configs, seed, &data)?;
    if let Some(dir) = settings.out() {
        std::fs::create_dir_all(&dir).map_err(|e| SimError::io(&dir, e))?;
        for r in &comparison.runs {
            emit_csv(&r.records, &dir.join(format!("{}.csv", r.config.scheme)))?;
        }
        let summaries: Vec<RunSummary> = comparison.runs.iter().map(|r| r.summary.clone()).collect();
        emit_summary_csv(&summaries, &dir.join("summary.csv"))?;
    }
    let summaries: Vec<RunSummary> = comparison.runs.into_iter().map(|r| r.summary).collect();
    print_summaries(&summaries);
    Ok(())
}

fn cmd_sweep(common: &Common, list: &[String], seeds: u64) -> Result<(), SimError> {
    let settings = common.settings()?;
    let schemes = schemes(list)?;
    let first_seed: u64 = settings.experiment(schemes[0])?.seed;
    let jobs: Vec<(Scheme, u64)> =
        schemes.iter().flat_map(|&s| (first_seed..first_seed + seeds).map(move |seed| (s, seed))).collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));

    let run_job = |&(scheme, seed): &(Scheme, u64)| -> Result<RunSummary, SimError> {
        let mut s = settings.clone();
        s.set("seed", seed.to_string())?;
        let config = s.experiment(scheme)?;
        let data = s.load_dataset()?;
        Ok(run(&config, &data)?.1)
    };
    let mut summaries: Vec<RunSummary> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let jobs = &jobs;
                let run_job = &run_job;
                scope.spawn(move || jobs.iter().skip(t).step_by(threads).map(run_job).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("sweep worker panicked")).collect::<Result<Vec<_>, _>>()
    })?;
    summaries.sort_by_key(|s| (s.scheme, s.seed));

    if let Some(out) = settings.out() {
        emit_summary_csv(&summaries, &out)?;
    }
    println!("{:<8} {:>8} {:>14} {:>14} {:>14}", "scheme", "reached", "med_time", "med_comm", "med_comp");
    for scheme in schemes {
        let runs: Vec<&RunSummary> = summaries.iter().filter(|s| s.scheme == scheme).collect();
        let reached = runs.iter().filter(|s| s.reached()).count();
        let med = |f: &dyn Fn(&RunSummary) -> Option<f64>| median(runs.iter().filter_map(|s| f(s)).collect());
        println!(
            "{:<8} {:>8} {:>14} {:>14} {:>14}",
            scheme.name(),
            format!("{reached}/{}", runs.len()),
            opt_sig(med(&|s| s.time_to_threshold)),
            opt_sig(med(&|s| s.comm_to_threshold.map(|v| v as f64))),
            opt_sig(med(&|s| s.comp_to_threshold.map(|v| v as f64))),
        );
    }
    Ok(())
}

fn cmd_analyze(
    common: &Common,
    trials: usize,
    lag_constants: Option<Vec<f64>>,
    csv: Option<&PathBuf>,
) -> Result<(), SimError> {
    let settings = common.settings()?;
    let cada = settings.experiment(Scheme::Cada)?;
    let gcada = settings.experiment(Scheme::GCada)?;
    let data = settings.load_dataset()?;
    let rows = analyze(&cada, &gcada, &data, lag_constants, trials)?;
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    write_table(&mut lock, &rows).and_then(|_| lock.flush()).map_err(|e| SimError::io("<stdout>", e))?;
    if let Some(path) = csv {
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).map_err(|e| SimError::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| SimError::io(path, e))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(common) => cmd_run(common),
        Command::Compare { common, schemes } => cmd_compare(common, schemes),
        Command::Sweep { common, schemes, seeds } => cmd_sweep(common, schemes, *seeds),
        Command::Analyze { common, trials, lag_constants, csv } => {
            cmd_analyze(common, *trials, lag_constants.clone(), csv.as_ref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
