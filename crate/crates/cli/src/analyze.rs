use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rehab_core::log::load;
use rehab_core::session::SessionRecord;

use crate::args::AnalyzeArgs;
use crate::output::{csv_writer, flags_field, num, opt, variant_tag};
use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagnosis {
    /// Trailing ability changes are small.
    Stabilized,
    /// Trailing ability changes alternate in sign.
    Oscillatory,
    NotConverged,
    /// Fewer than one ability change.
    InsufficientData,
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stabilized => "stabilized",
            Self::Oscillatory => "oscillatory",
            Self::NotConverged => "not-converged",
            Self::InsufficientData => "insufficient-data",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Convergence {
    pub diagnosis: Diagnosis,
    /// RMS of the trailing changes; NaN without data.
    pub rms: f64,
    pub window: usize,
}

/// Judges the last `window` ability changes: RMS below `threshold` is
/// stabilized; otherwise strict sign alternation is oscillatory.
pub fn diagnose(deltas: &[f64], window: usize, threshold: f64) -> Convergence {
    let w = window.max(1).min(deltas.len());
    if w == 0 {
        return Convergence { diagnosis: Diagnosis::InsufficientData, rms: f64::NAN, window: 0 };
    }
    let tail = &deltas[deltas.len() - w..];
    let rms = (tail.iter().map(|d| d * d).sum::<f64>() / w as f64).sqrt();
    let diagnosis = if rms < threshold {
        Diagnosis::Stabilized
    } else if w >= 2 && tail.windows(2).all(|p| p[0] * p[1] < 0.0) {
        Diagnosis::Oscillatory
    } else {
        Diagnosis::NotConverged
    };
    Convergence { diagnosis, rms, window: w }
}

/// Ability changes between consecutive sessions, as recorded.
pub fn deltas(records: &[SessionRecord]) -> Vec<f64> {
    records.iter().filter_map(|r| r.delta_ia).collect()
}

/// Log files named directly, plus `*.jsonl` files inside directories, in
/// name order.
pub fn collect_logs(paths: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| CliError::data(e).context(p.display().to_string()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(CliError::data(anyhow::anyhow!("no such log: {}", p.display())));
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("no session logs given"));
    }
    Ok(out)
}

/// Loads logs ordered by session index.
pub fn load_records(paths: &[PathBuf]) -> CliResult<Vec<SessionRecord>> {
    let mut records = Vec::with_capacity(paths.len());
    for p in collect_logs(paths)? {
        records.push(load(&p).map_err(|e| CliError::data(e).context(p.display().to_string()))?);
    }
    records.sort_by_key(|r| r.n);
    if let Some(w) = records.windows(2).find(|w| w[0].n == w[1].n) {
        return Err(CliError::data(anyhow::anyhow!("session {} appears more than once", w[0].n)));
    }
    Ok(records)
}

pub fn write_trajectory(path: &Path, records: &[SessionRecord]) -> CliResult<()> {
    let variant = records.first().map(|r| r.config.variant).unwrap_or_default();
    let tag = variant_tag(variant);
    let mut w = csv_writer(path, "analyze adaptation trajectory", variant)?;
    w.write_record([
        "n".to_string(),
        "phase".into(),
        "alpha_p".into(),
        "alpha_s".into(),
        format!("ia_{tag}"),
        format!("delta_ia_{tag}"),
        "adapted".into(),
        "flags".into(),
    ])?;
    for r in records {
        w.write_record([
            r.n.to_string(),
            r.phase.to_string(),
            num(r.weights.alpha_p),
            num(r.weights.alpha_s),
            num(r.ia),
            opt(r.delta_ia),
            r.adapted.to_string(),
            flags_field(r),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(a: &AnalyzeArgs, out: &mut dyn Write) -> CliResult<()> {
    if !(a.threshold > 0.0) {
        return Err(CliError::usage("--threshold must be positive"));
    }
    let records = load_records(&a.logs)?;
    if let Some(path) = &a.csv {
        write_trajectory(path, &records)?;
    }
    let c = diagnose(&deltas(&records), a.window, a.threshold);
    writeln!(out, "sessions: {}", records.len())?;
    writeln!(
        out,
        "diagnosis: {} (RMS of last {} ability changes {} vs threshold {})",
        c.diagnosis,
        c.window,
        if c.rms.is_nan() { "n/a".into() } else { format!("{:.4}", c.rms) },
        a.threshold
    )?;
    writeln!(out, "flags:")?;
    for r in &records {
        let flags = flags_field(r);
        writeln!(
            out,
            "  n={} {} alpha_p={:.4} I_A={:.4} {}",
            r.n,
            r.phase,
            r.weights.alpha_p,
            r.ia,
            if flags.is_empty() { "-" } else { &flags }
        )?;
    }
    Ok(())
}
