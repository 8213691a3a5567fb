use std::fs;
use std::io::Write;

use rehab_core::controller::ControlWeights;
use rehab_core::session::{scenario_protocol, Protocol, SessionConfig, SessionEngine, SessionRecord, WeightsPolicy};

use crate::args::{RunOptions, SimulateArgs, WeightsArg};
use crate::output::{flags_field, resolve_schedule, write_sessions, write_summary};
use crate::{CliError, CliResult};

pub const SUMMARY_FILE: &str = "summary.csv";

pub fn session_config(run: &RunOptions) -> CliResult<SessionConfig> {
    if run.reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    Ok(SessionConfig { reps: run.reps, eta: run.eta, sign: run.sign, ..SessionConfig::default() })
}

pub fn protocol(weights: WeightsArg, initial_alpha_p: f64, eta: f64) -> CliResult<Protocol> {
    Ok(match weights {
        WeightsArg::Adaptive => scenario_protocol(initial_alpha_p, eta)?,
        WeightsArg::Fixed(a) => Protocol { awing_trials: 0, policy: WeightsPolicy::Fixed(ControlWeights::from_alpha_p(a, eta)?) },
    })
}

/// Runs the schedule in process and returns the session history.
pub fn simulate(a: &SimulateArgs) -> CliResult<Vec<SessionRecord>> {
    let profiles = resolve_schedule(&a.schedule, a.trials, a.run.amplitude, a.run.duration)?;
    let cfg = session_config(&a.run)?;
    let protocol = protocol(a.weights, a.initial_alpha_p, a.run.eta)?;
    let mut engine = SessionEngine::new(cfg);
    Ok(engine.run_protocol(&profiles, &protocol)?)
}

pub fn run(a: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let records = simulate(a)?;
    fs::create_dir_all(&a.run.out)?;
    write_sessions(&a.run.out, &records)?;
    let variant = records.first().map(|r| r.config.variant).unwrap_or_default();
    write_summary(&a.run.out.join(SUMMARY_FILE), &format!("simulate {}", a.schedule), &records, variant)?;
    writeln!(out, "schedule {}: {} trials, {} reps each", a.schedule, records.len(), a.run.reps)?;
    for r in &records {
        writeln!(
            out,
            "  n={} {:<6} alpha_p={:.4} alpha_s={:.4} I_A={:.4} flags={}",
            r.n,
            r.phase,
            r.weights.alpha_p,
            r.weights.alpha_s,
            r.ia,
            flags_field(r)
        )?;
    }
    writeln!(out, "output in {}", a.run.out.display())?;
    Ok(())
}
