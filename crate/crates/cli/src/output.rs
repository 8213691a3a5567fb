//! Plot-ready CSV files and session log persistence.
//!
//! Every CSV starts with one `#` line naming the producing command, the
//! smoothness variant and the units; column names carry units as suffixes.
//! Numbers use the shortest representation that round-trips, so reruns
//! produce identical bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rehab_core::log::{persist, session_file_name};
use rehab_core::metrics::SmoothnessVariant;
use rehab_core::patient::{load_schedule, severity_schedule, PatientProfile, SCHEDULE_NAMES};
use rehab_core::session::SessionRecord;
use rehab_core::signal::differentiate_series;

use crate::{CliError, CliResult};

pub const UNITS: &str = "angles deg, angular velocities deg/s, time s, torque N m";

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn variant_tag(v: SmoothnessVariant) -> String {
    v.to_string().to_lowercase()
}

pub fn flags_field(r: &SessionRecord) -> String {
    r.flags.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(";")
}

/// Opens `path` for CSV output and writes the comment line.
pub fn csv_writer(path: &Path, what: &str, variant: SmoothnessVariant) -> CliResult<csv::Writer<BufWriter<File>>> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| CliError::runtime(e).context(path.display().to_string()))?);
    writeln!(f, "# {what}; smoothness {variant}; {UNITS}")?;
    Ok(csv::Writer::from_writer(f))
}

/// A named schedule or a schedule file.
pub fn resolve_schedule(source: &str, trials: usize, amplitude: f64, duration: f64) -> CliResult<Vec<PatientProfile>> {
    if SCHEDULE_NAMES.contains(&source) {
        return Ok(severity_schedule(source, amplitude, duration, trials)?);
    }
    let path = Path::new(source);
    if !path.is_file() {
        return Err(CliError::usage(format!(
            "unknown schedule {source:?}: not one of {} and not a readable file",
            SCHEDULE_NAMES.join(", ")
        )));
    }
    load_schedule(path).map_err(|e| CliError::data(e).context(format!("schedule file {}", path.display())))
}

/// Per-trial summary: one row per session.
pub fn write_summary(path: &Path, what: &str, records: &[SessionRecord], variant: SmoothnessVariant) -> CliResult<()> {
    let mut w = csv_writer(path, what, variant)?;
    let tag = variant_tag(variant);
    w.write_record([
        "n".to_string(),
        "phase".into(),
        "condition".into(),
        "alpha_p".into(),
        "alpha_s".into(),
        "eta".into(),
        format!("j_p_{tag}"),
        format!("j_h_{tag}"),
        format!("ia_{tag}"),
        format!("delta_ia_{tag}"),
        "adapted".into(),
        "flags".into(),
        "saturation_events".into(),
        "patient_m".into(),
        "patient_b".into(),
        "amplitude_deg".into(),
        "duration_s".into(),
    ])?;
    for r in records {
        let p = r.patient_profile;
        w.write_record([
            r.n.to_string(),
            r.phase.to_string(),
            r.condition.map(|c| c.to_string()).unwrap_or_default(),
            num(r.weights.alpha_p),
            num(r.weights.alpha_s),
            num(r.weights.eta),
            num(r.j_p),
            num(r.j_h),
            num(r.ia),
            opt(r.delta_ia),
            r.adapted.to_string(),
            flags_field(r),
            r.saturation_events.to_string(),
            p.map(|p| p.m.to_string()).unwrap_or_default(),
            opt(p.map(|p| p.b)),
            num(r.segment.amplitude()),
            num(r.segment.duration),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Patient and avatar kinematics of every repetition, one row per control
/// tick. Patient velocity is the central difference of the raw samples.
pub fn write_trial(path: &Path, record: &SessionRecord) -> CliResult<()> {
    let mut w = csv_writer(path, &format!("trial {} kinematics", record.n), record.config.variant)?;
    w.write_record([
        "rep",
        "t_s",
        "patient_theta_deg",
        "patient_theta_dot_deg_s",
        "avatar_theta_deg",
        "avatar_theta_dot_deg_s",
        "avatar_torque_nm",
        "alpha_p",
        "alpha_s",
        "stale",
        "saturated",
    ])?;
    for rep in &record.traces {
        let p = &rep.patient;
        let vel = differentiate_series(&p.samples, p.dt)?;
        for tick in &rep.avatar {
            let i = ((tick.t / p.dt).round() as usize).min(p.len() - 1);
            w.write_record([
                rep.index.to_string(),
                num(tick.t),
                num(p.samples[i]),
                num(vel[i]),
                num(tick.theta),
                num(tick.theta_dot),
                num(tick.u),
                num(record.weights.alpha_p),
                num(record.weights.alpha_s),
                (tick.stale as u8).to_string(),
                (tick.saturated as u8).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn trial_file_name(n: u32) -> String {
    format!("trial-{n:03}.csv")
}

/// Writes session logs and per-trial kinematics under `dir`.
pub fn write_sessions(dir: &Path, records: &[SessionRecord]) -> CliResult<Vec<PathBuf>> {
    let logs = dir.join("sessions");
    let trials = dir.join("trials");
    fs::create_dir_all(&logs)?;
    fs::create_dir_all(&trials)?;
    let mut paths = Vec::with_capacity(records.len());
    for r in records {
        let p = logs.join(session_file_name(r.n));
        persist(r, &p).map_err(CliError::runtime)?;
        write_trial(&trials.join(trial_file_name(r.n)), r)?;
        paths.push(p);
    }
    Ok(paths)
}
