//! Metrics CSV output. Reals are written with 9 significant digits, lines end
//! with `\n`, and the output depends only on the records.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use psgd_core::{MetricsRecord, RunSummary};

use crate::SimError;

pub const RECORD_HEADER: &str = "k,t_iter,t_cum,n_dispatch,n_upload,comm_iter,comm_cum,comp_iter,comp_cum,loss";

pub const SUMMARY_HEADER: &str = "scheme,seed,reached,iterations,iters_to_threshold,time_to_threshold,\
comm_to_threshold,comp_to_threshold,final_loss,total_time,total_comm,total_comp";

/// `%.9g`-style formatting: fixed notation for decimal exponents in
/// `-4..9`, scientific otherwise, trailing zeros trimmed.
pub fn format_sig(v: f64) -> String {
    const DIGITS: i32 = 9;
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..DIGITS).contains(&exp) {
        let fixed = format!("{:.*}", (DIGITS - 1 - exp).max(0) as usize, v);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_records(out: &mut impl Write, records: &[MetricsRecord]) -> io::Result<()> {
    writeln!(out, "{RECORD_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.iteration,
            format_sig(r.wall_clock),
            format_sig(r.wall_clock_cum),
            r.dispatched,
            r.uploaded,
            r.comm,
            r.comm_cum,
            r.comp,
            r.comp_cum,
            opt(r.loss.map(format_sig)),
        )?;
    }
    Ok(())
}

pub fn write_summaries(out: &mut impl Write, summaries: &[RunSummary]) -> io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for s in summaries {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            s.scheme,
            s.seed,
            s.reached(),
            s.iterations,
            opt(s.iterations_to_threshold),
            opt(s.time_to_threshold.map(format_sig)),
            opt(s.comm_to_threshold),
            opt(s.comp_to_threshold),
            format_sig(s.final_loss),
            format_sig(s.total_time),
            s.total_comm,
            s.total_comp,
        )?;
    }
    Ok(())
}

fn write_file(path: &Path, fill: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Result<(), SimError> {
    let mut buf = Vec::new();
    fill(&mut buf).map_err(|e| SimError::io(path, e))?;
    fs::write(path, buf).map_err(|e| SimError::io(path, e))
}

/// Per-iteration metrics CSV.
pub fn emit_csv(records: &[MetricsRecord], path: &Path) -> Result<(), SimError> {
    write_file(path, |b| write_records(b, records))
}

/// One row per run.
pub fn emit_summary_csv(summaries: &[RunSummary], path: &Path) -> Result<(), SimError> {
    write_file(path, |b| write_summaries(b, summaries))
}
