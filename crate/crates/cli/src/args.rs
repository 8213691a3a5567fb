use std::net::IpAddr;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rehab_core::controller::DEFAULT_ETA;
use rehab_core::patient::{DEFAULT_AMPLITUDE, DEFAULT_DURATION};
use rehab_core::session::{AdaptationSign, Condition, DEFAULT_REPS};
use rehab_gateway::{serve as serve_gateway, GatewayConfig};

use crate::{CliError, CliResult};

/// Default output directory when neither `--out` nor the environment set one.
pub const DEFAULT_OUT_DIR: &str = "rehab-out";
pub const OUT_DIR_ENV: &str = "REHAB_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "rehab", version, about = "Avatar-guided reaching therapy: simulation, analysis and live sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a severity schedule against synthetic patients.
    Simulate(SimulateArgs),
    /// Run one experimental condition and compare it with Solo.
    Condition(ConditionArgs),
    /// Summarize session logs: adaptation trajectory, convergence, flags.
    Analyze(AnalyzeArgs),
    /// Run the live session gateway.
    Serve(ServeArgs),
}

/// How guidance weights are chosen across trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightsArg {
    /// One measurement trial, then guidance adapting from trial 3.
    Adaptive,
    /// Every trial is a guidance trial with this `alpha_p`.
    Fixed(f64),
}

impl FromStr for WeightsArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "adaptive" {
            return Ok(Self::Adaptive);
        }
        let v = s
            .strip_prefix("fixed:")
            .ok_or_else(|| format!("expected `adaptive` or `fixed:<alpha_p>`, got {s:?}"))?;
        match v.parse::<f64>() {
            Ok(a) if (0.0..=1.0).contains(&a) => Ok(Self::Fixed(a)),
            _ => Err(format!("alpha_p must be a number in [0, 1], got {v:?}")),
        }
    }
}

fn parse_sign(s: &str) -> Result<AdaptationSign, String> {
    match s {
        "worked-example" => Ok(AdaptationSign::WorkedExample),
        "as-printed" => Ok(AdaptationSign::AsPrinted),
        _ => Err(format!("expected `worked-example` or `as-printed`, got {s:?}")),
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

/// Patient movement and scoring options shared by the batch commands.
#[derive(Debug, Clone, Args)]
pub struct RunOptions {
    /// Repetitions per trial.
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: usize,
    /// Control effort weight.
    #[arg(long, default_value_t = DEFAULT_ETA, value_parser = parse_positive)]
    pub eta: f64,
    /// Movement amplitude for named schedules, degrees.
    #[arg(long, default_value_t = DEFAULT_AMPLITUDE, value_parser = parse_positive)]
    pub amplitude: f64,
    /// Movement duration for named schedules, seconds.
    #[arg(long, default_value_t = DEFAULT_DURATION, value_parser = parse_positive)]
    pub duration: f64,
    /// Sign convention of the weight update.
    #[arg(long = "adapt-sign", default_value = "worked-example", value_parser = parse_sign)]
    pub sign: AdaptationSign,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Named schedule (paper-fig6, static, converging) or a schedule file.
    #[arg(long, default_value = "paper-fig6")]
    pub schedule: String,
    /// Trial count for repeating named schedules.
    #[arg(long, default_value_t = 8)]
    pub trials: usize,
    /// `adaptive` or `fixed:<alpha_p>`.
    #[arg(long, default_value = "adaptive")]
    pub weights: WeightsArg,
    /// Starting `alpha_p` of the first guidance trial under `adaptive`.
    #[arg(long, default_value_t = 0.8)]
    pub initial_alpha_p: f64,
    #[command(flatten)]
    pub run: RunOptions,
}

#[derive(Debug, Clone, Args)]
pub struct ConditionArgs {
    /// solo, pawing or adaptive.
    pub condition: Condition,
    #[arg(long, default_value_t = 8)]
    pub trials: usize,
    /// Patient source: named schedule or schedule file.
    #[arg(long, default_value = "converging")]
    pub schedule: String,
    /// Trailing trials summarized.
    #[arg(long, default_value_t = 6)]
    pub window: usize,
    #[command(flatten)]
    pub run: RunOptions,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Session log files or directories containing them.
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    /// Number of trailing adaptation steps judged for convergence.
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    /// RMS of the trailing ability changes below which a run is stabilized.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    /// Write the trajectory CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    #[arg(long, default_value_t = 7700)]
    pub port: u16,
    /// WebSocket endpoint carrying the same lines.
    #[arg(long)]
    pub ws_port: Option<u16>,
    #[arg(long, default_value_t = 10)]
    pub tick_ms: u64,
    #[arg(long, default_value_t = 100)]
    pub staleness_ms: u64,
    #[arg(long, default_value_t = 5000)]
    pub idle_timeout_ms: u64,
    #[arg(long, default_value_t = 120.0, value_parser = parse_positive)]
    pub rom_deg: f64,
    #[arg(long, default_value_t = DEFAULT_ETA, value_parser = parse_positive)]
    pub eta: f64,
    #[arg(long, default_value = "adaptive")]
    pub condition: Condition,
    /// Repetitions per live session.
    #[arg(long, default_value_t = DEFAULT_REPS)]
    pub reps: usize,
    /// Calibration file; loaded at startup and rewritten on CAL.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Directory for completed session logs.
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
}

impl ServeArgs {
    pub fn config(&self) -> CliResult<GatewayConfig> {
        if self.tick_ms == 0 {
            return Err(CliError::usage("--tick-ms must be positive"));
        }
        let mut cfg = GatewayConfig {
            bind: self.bind,
            port: self.port,
            ws_port: self.ws_port,
            tick: Duration::from_millis(self.tick_ms),
            staleness: Duration::from_millis(self.staleness_ms),
            idle_timeout: Duration::from_millis(self.idle_timeout_ms),
            rom_deg: self.rom_deg,
            eta: self.eta,
            condition: self.condition,
            calibration_path: self.calibration.clone(),
            log_dir: self.log_dir.clone(),
            ..GatewayConfig::default()
        };
        cfg.session.reps = self.reps;
        cfg.effective_session().map_err(CliError::usage)?;
        Ok(cfg)
    }
}

pub fn serve(a: &ServeArgs) -> CliResult<()> {
    let handle = serve_gateway(a.config()?).map_err(|e| CliError::runtime(e).context("gateway startup failed"))?;
    handle.wait();
    Ok(())
}
