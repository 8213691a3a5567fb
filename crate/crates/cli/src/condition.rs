use std::fs;
use std::io::Write;

use rehab_core::metrics::{mean_and_sd, paired_t_test, TTest};
use rehab_core::patient::PatientProfile;
use rehab_core::session::{Condition, SessionConfig, SessionEngine, SessionRecord, FIRST_ADAPTED_SESSION};
use rehab_core::Error as CoreError;

use crate::args::ConditionArgs;
use crate::output::{csv_writer, num, resolve_schedule, variant_tag, write_sessions, write_summary};
use crate::simulate::{session_config, SUMMARY_FILE};
use crate::{CliError, CliResult};

pub const CONDITION_SUMMARY_FILE: &str = "condition-summary.csv";

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub condition: Condition,
    pub records: Vec<SessionRecord>,
    /// Trailing trials summarized.
    pub window: usize,
    pub mean_ia: f64,
    pub sd_ia: f64,
    pub solo_mean_ia: f64,
    /// `None` for the Solo condition itself or when the test is undefined.
    pub versus_solo: Option<TTest>,
}

/// Exactly `trials` profiles; a short schedule holds its last profile.
pub fn fit_schedule(mut profiles: Vec<PatientProfile>, trials: usize) -> Vec<PatientProfile> {
    profiles.truncate(trials);
    if let Some(&last) = profiles.last() {
        profiles.resize(trials, last);
    }
    profiles
}

fn run_condition(c: Condition, profiles: &[PatientProfile], cfg: SessionConfig) -> CliResult<Vec<SessionRecord>> {
    let protocol = c.protocol(cfg.eta)?;
    let mut engine = SessionEngine::new(cfg).with_condition(c);
    Ok(engine.run_protocol(profiles, &protocol)?)
}

fn tail(records: &[SessionRecord], window: usize) -> Vec<f64> {
    records[records.len() - window..].iter().map(|r| r.ia).collect()
}

pub fn evaluate(a: &ConditionArgs) -> CliResult<ConditionReport> {
    let min_trials = if a.condition == Condition::Adaptive { FIRST_ADAPTED_SESSION as usize } else { 1 };
    if a.trials < min_trials {
        return Err(CliError::usage(format!(
            "{} needs at least {min_trials} trials (adaptation starts at trial {FIRST_ADAPTED_SESSION}), got {}",
            a.condition, a.trials
        )));
    }
    if a.window == 0 {
        return Err(CliError::usage("--window must be at least 1"));
    }
    let cfg = session_config(&a.run)?;
    let profiles = fit_schedule(resolve_schedule(&a.schedule, a.trials, a.run.amplitude, a.run.duration)?, a.trials);
    let records = run_condition(a.condition, &profiles, cfg)?;
    let window = a.window.min(records.len());
    let ia = tail(&records, window);
    let (mean_ia, sd_ia) = mean_and_sd(&ia);
    let (solo_ia, versus_solo) = if a.condition == Condition::Solo {
        (ia.clone(), None)
    } else {
        let solo = tail(&run_condition(Condition::Solo, &profiles, cfg)?, window);
        let test = match paired_t_test(&ia, &solo) {
            Ok(t) => Some(t),
            Err(CoreError::DegenerateTest(_) | CoreError::InsufficientData { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        (solo, test)
    };
    Ok(ConditionReport {
        condition: a.condition,
        records,
        window,
        mean_ia,
        sd_ia,
        solo_mean_ia: mean_and_sd(&solo_ia).0,
        versus_solo,
    })
}

pub fn run(a: &ConditionArgs, out: &mut dyn Write) -> CliResult<()> {
    let report = evaluate(a)?;
    let dir = a.run.out.join(format!("condition-{}", report.condition));
    fs::create_dir_all(&dir)?;
    write_sessions(&dir, &report.records)?;
    let variant = report.records[0].config.variant;
    write_summary(&dir.join(SUMMARY_FILE), &format!("condition {}", report.condition), &report.records, variant)?;

    let mut w = csv_writer(&dir.join(CONDITION_SUMMARY_FILE), &format!("condition {} summary", report.condition), variant)?;
    let tag = variant_tag(variant);
    w.write_record([
        "condition".to_string(),
        "trials".into(),
        "window".into(),
        format!("mean_ia_{tag}"),
        format!("sd_ia_{tag}"),
        format!("solo_mean_ia_{tag}"),
        "t".into(),
        "df".into(),
        "p".into(),
    ])?;
    let (t, df, p) = match report.versus_solo {
        Some(tt) => (num(tt.t), num(tt.df), num(tt.p)),
        None => ("n/a".into(), "n/a".into(), "n/a".into()),
    };
    w.write_record([
        report.condition.to_string(),
        report.records.len().to_string(),
        report.window.to_string(),
        num(report.mean_ia),
        num(report.sd_ia),
        num(report.solo_mean_ia),
        t.clone(),
        df.clone(),
        p.clone(),
    ])?;
    w.flush()?;

    writeln!(out, "condition {}: {} trials", report.condition, report.records.len())?;
    for r in &report.records {
        writeln!(
            out,
            "  n={} {:<6} alpha_p={:.4} alpha_s={:.4} I_A={:.4}{}",
            r.n,
            r.phase,
            r.weights.alpha_p,
            r.weights.alpha_s,
            r.ia,
            if r.adapted { " adapted" } else { "" }
        )?;
    }
    writeln!(out, "last {} trials: I_A mean {:.4} sd {:.4}", report.window, report.mean_ia, report.sd_ia)?;
    writeln!(out, "paired t-test vs solo (mean {:.4}): t = {t}, df = {df}, p = {p}", report.solo_mean_ia)?;
    writeln!(out, "output in {}", dir.display())?;
    Ok(())
}
