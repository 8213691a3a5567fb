//! Therapy protocol: measurement sessions (avatar follows), guidance
//! sessions (avatar leads), per-session weight adaptation and clinical flags.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controller::{ControlLoop, ControlWeights, LoopConfig, PatientObservation, TickRecord, DEFAULT_ETA};
use crate::error::{Error, Result};
use crate::metrics::{ability_index, hogan_reference_j_at, smoothness, SmoothnessVariant, METRIC_DT};
use crate::patient::PatientProfile;
use crate::plant::PlantState;
use crate::reference::{fit_segment, FitConfig, HoganSegment};
use crate::signal::{butterworth2_zero_phase, TimedSample, VelocityEstimator, FILTER_ORDER};
use crate::trace::KinematicTrace;

pub const DEFAULT_REPS: usize = 3;
pub const NEEDS_INTERVENTION_BELOW: f64 = 0.3;
pub const NEAR_HEALTHY_ABOVE: f64 = 0.7;
/// Adaptation starts at this session index.
pub const FIRST_ADAPTED_SESSION: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    /// Avatar follows; the patient's unassisted movement is scored.
    Awing,
    /// Avatar leads with blended weights.
    Pawing,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Awing => "AWING",
            Phase::Pawing => "PAWING",
        })
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "awing" => Ok(Phase::Awing),
            "pawing" => Ok(Phase::Pawing),
            _ => Err(Error::InvalidParameter(format!("unknown phase {s:?}"))),
        }
    }
}

/// Experimental conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    /// Measurement only; the avatar exerts no guidance.
    Solo,
    /// Fixed `alpha_s = 0.8`.
    Pawing,
    /// `alpha_s` starts at 0.5 and adapts from session 3.
    Adaptive,
}

impl Condition {
    pub fn protocol(self, eta: f64) -> Result<Protocol> {
        Ok(match self {
            Condition::Solo => Protocol { awing_trials: usize::MAX, policy: WeightsPolicy::Fixed(ControlWeights::follower(eta)) },
            Condition::Pawing => Protocol { awing_trials: 0, policy: WeightsPolicy::Fixed(ControlWeights::new(0.2, 0.8, eta)?) },
            Condition::Adaptive => Protocol {
                awing_trials: 0,
                policy: WeightsPolicy::Adaptive { initial: ControlWeights::new(0.5, 0.5, eta)? },
            },
        })
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Solo => "solo",
            Condition::Pawing => "pawing",
            Condition::Adaptive => "adaptive",
        })
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "solo" => Ok(Condition::Solo),
            "pawing" => Ok(Condition::Pawing),
            "adaptive" | "adaptive-pawing" => Ok(Condition::Adaptive),
            _ => Err(Error::InvalidParameter(format!("unknown condition {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FlagKind {
    NeedsIntervention,
    NearHealthy,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClinicalFlag {
    pub kind: FlagKind,
    /// `alpha_s` for the threshold flags, `delta I_A` for regression.
    pub value: f64,
}

impl fmt::Display for ClinicalFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            FlagKind::NeedsIntervention => "NEEDS_INTERVENTION",
            FlagKind::NearHealthy => "NEAR_HEALTHY",
            FlagKind::Regression => "REGRESSION",
        };
        write!(f, "{name}({})", self.value)
    }
}

pub fn classify(weights: &ControlWeights, delta_ia: Option<f64>) -> Vec<ClinicalFlag> {
    let mut flags = Vec::new();
    if weights.alpha_s < NEEDS_INTERVENTION_BELOW {
        flags.push(ClinicalFlag { kind: FlagKind::NeedsIntervention, value: weights.alpha_s });
    }
    if weights.alpha_s > NEAR_HEALTHY_ABOVE {
        flags.push(ClinicalFlag { kind: FlagKind::NearHealthy, value: weights.alpha_s });
    }
    if let Some(d) = delta_ia.filter(|d| *d < 0.0) {
        flags.push(ClinicalFlag { kind: FlagKind::Regression, value: d });
    }
    flags
}

/// Sign convention of the weight update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptationSign {
    /// `alpha_p(n) = alpha_p(n-1) - dI_A`: guidance grows as the patient
    /// improves (0.8 -> 0.65 when I_A goes 0.6 -> 0.75).
    #[default]
    WorkedExample,
    /// `alpha_p(n) = alpha_p(n-1) + dI_A`.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Adaptation {
    Adapted { weights: ControlWeights, delta_ia: f64 },
    /// Fewer than two prior sessions; weights unchanged.
    NotYet { weights: ControlWeights },
}

impl Adaptation {
    pub fn weights(&self) -> ControlWeights {
        match *self {
            Adaptation::Adapted { weights, .. } | Adaptation::NotYet { weights } => weights,
        }
    }
}

/// Weight update from an ordered ability-index history (oldest first).
pub fn adapt_from_history(ia_history: &[f64], prev: ControlWeights, sign: AdaptationSign) -> Adaptation {
    let n = ia_history.len();
    if n < 2 {
        return Adaptation::NotYet { weights: prev };
    }
    let delta = ia_history[n - 1] - ia_history[n - 2];
    let step = match sign {
        AdaptationSign::WorkedExample => -delta,
        AdaptationSign::AsPrinted => delta,
    };
    let alpha_p = (prev.alpha_p + step).clamp(0.0, 1.0);
    Adaptation::Adapted {
        weights: ControlWeights { alpha_p, alpha_s: 1.0 - alpha_p, eta: prev.eta },
        delta_ia: delta,
    }
}

pub fn adapt_weights(history: &[SessionRecord], prev: ControlWeights, sign: AdaptationSign) -> Adaptation {
    let ia: Vec<f64> = history.iter().map(|r| r.ia).collect();
    adapt_from_history(&ia, prev, sign)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub control: LoopConfig,
    /// Scoring sample interval, seconds.
    pub metric_dt: f64,
    /// Zero-phase low-pass cutoff, Hz.
    pub filter_cutoff: f64,
    pub filter_order: u32,
    pub variant: SmoothnessVariant,
    pub fit_threshold: f64,
    pub velocity_window_ms: f64,
    pub reps: usize,
    pub sign: AdaptationSign,
    pub eta: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            control: LoopConfig::default(),
            metric_dt: METRIC_DT,
            filter_cutoff: 2.0,
            filter_order: FILTER_ORDER,
            variant: SmoothnessVariant::AmplitudeLog,
            fit_threshold: 0.05,
            velocity_window_ms: 50.0,
            reps: DEFAULT_REPS,
            sign: AdaptationSign::WorkedExample,
            eta: DEFAULT_ETA,
        }
    }
}

impl SessionConfig {
    fn fit_config(&self) -> FitConfig {
        FitConfig { threshold_fraction: self.fit_threshold, ..FitConfig::default() }
    }
}

/// One repetition: raw patient movement and the avatar's tick log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepTrace {
    pub index: usize,
    /// Unfiltered patient angle at the metric sample interval.
    pub patient: KinematicTrace,
    pub avatar: Vec<TickRecord>,
    pub saturation_events: usize,
    pub stale_ticks: usize,
}

/// Scores of a set of repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub j_p: f64,
    pub j_h: f64,
    pub ia: f64,
    pub fitted: HoganSegment,
    pub scored_reps: usize,
}

/// Filters each repetition, averages the patient smoothness, and scores the
/// reference on the segment fitted to the patient's movement.
pub fn score_repetitions(patient: &[&KinematicTrace], cfg: &SessionConfig) -> Result<SessionScore> {
    let mut jp = Vec::new();
    let mut jh = Vec::new();
    let mut fits = Vec::new();
    let mut last_err = None;
    for trace in patient {
        let scored = (|| {
            let filtered = butterworth2_zero_phase(trace, cfg.filter_cutoff)?;
            let j = smoothness(&filtered, cfg.variant)?.j;
            let fitted = fit_segment(&filtered, &cfg.fit_config())?;
            let h = hogan_reference_j_at(&fitted, cfg.variant, cfg.metric_dt)?;
            Ok::<_, Error>((j, h, fitted))
        })();
        match scored {
            Ok((j, h, f)) => {
                jp.push(j);
                jh.push(h);
                fits.push(f);
            }
            Err(e) => last_err = Some(e),
        }
    }
    if jp.is_empty() {
        return Err(Error::Session(format!(
            "no movement detected in any repetition ({})",
            last_err.map_or_else(|| "no repetitions".to_string(), |e| e.to_string())
        )));
    }
    let k = jp.len() as f64;
    let j_p = jp.iter().sum::<f64>() / k;
    let j_h = jh.iter().sum::<f64>() / k;
    let mean = |f: fn(&HoganSegment) -> f64| fits.iter().map(f).sum::<f64>() / k;
    let fitted = HoganSegment::new(mean(|s| s.theta0), mean(|s| s.thetaf), mean(|s| s.duration))?;
    Ok(SessionScore { j_p, j_h, ia: ability_index(j_p, j_h)?, fitted, scored_reps: jp.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub n: u32,
    pub phase: Phase,
    pub condition: Option<Condition>,
    pub reps: usize,
    pub j_p: f64,
    pub j_h: f64,
    pub ia: f64,
    pub delta_ia: Option<f64>,
    pub weights: ControlWeights,
    pub adapted: bool,
    pub flags: Vec<ClinicalFlag>,
    /// Reference movement the avatar was driven with.
    pub segment: HoganSegment,
    /// Segment fitted to the patient's movement (internal model update).
    pub fitted: HoganSegment,
    pub saturation_events: usize,
    pub config: SessionConfig,
    pub patient_profile: Option<PatientProfile>,
    /// Sender-to-gateway clock offset, milliseconds, for live sessions.
    pub clock_offset_ms: Option<f64>,
    #[serde(skip)]
    pub traces: Vec<RepTrace>,
}

impl SessionRecord {
    /// Recomputes the score from the stored raw traces.
    pub fn rescore(&self) -> Result<SessionScore> {
        let traces: Vec<&KinematicTrace> = self.traces.iter().map(|r| &r.patient).collect();
        score_repetitions(&traces, &self.config)
    }
}

/// Where the patient's movement comes from for in-process sessions.
pub trait PatientSource {
    /// Patient angle for repetition `rep`, sampled every `dt` seconds.
    fn repetition(&mut self, rep: usize, dt: f64) -> Result<KinematicTrace>;

    fn profile(&self) -> Option<PatientProfile> {
        None
    }
}

/// Scripted synthetic patient; every repetition is identical.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticPatient(pub PatientProfile);

impl PatientSource for SyntheticPatient {
    fn repetition(&mut self, _rep: usize, dt: f64) -> Result<KinematicTrace> {
        crate::patient::synthetic_trace(&self.0, dt)
    }

    fn profile(&self) -> Option<PatientProfile> {
        Some(self.0)
    }
}

/// Replays recorded traces, cycling when asked for more repetitions.
#[derive(Debug, Clone)]
pub struct RecordedPatient(pub Vec<KinematicTrace>);

impl PatientSource for RecordedPatient {
    fn repetition(&mut self, rep: usize, dt: f64) -> Result<KinematicTrace> {
        if self.0.is_empty() {
            return Err(Error::Session("recorded patient has no traces".into()));
        }
        let t = &self.0[rep % self.0.len()];
        if (t.dt - dt).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("recorded trace dt {} differs from {}", t.dt, dt)));
        }
        Ok(t.clone())
    }
}

/// Drives the control loop against one recorded repetition. The avatar
/// starts at rest at the segment's start; the reference clock restarts at
/// zero with the repetition.
pub fn run_repetition(
    index: usize,
    patient: KinematicTrace,
    segment: &HoganSegment,
    weights: ControlWeights,
    cfg: &SessionConfig,
) -> Result<RepTrace> {
    let mut ctl = ControlLoop::new(cfg.control, weights, PlantState::at_rest(segment.theta0))?;
    ctl.set_segment(Some(*segment));
    let tick = cfg.control.horizon.tick;
    let ticks = (patient.duration() / tick + 1e-9).floor() as usize;
    let mut estimator = VelocityEstimator::new(cfg.velocity_window_ms);
    let mut next = 0;
    for k in 0..=ticks {
        let now = k as f64 * tick;
        while next < patient.len() && patient.time(next) <= now + 1e-9 {
            estimator.push(TimedSample::new(patient.samples[next], patient.time(next) * 1000.0));
            next += 1;
        }
        let obs = estimator.latest().map(|s| PatientObservation {
            theta: s.value,
            theta_dot: estimator.estimate().value,
            t: s.t_ms / 1000.0,
        });
        ctl.tick(now, now, obs.as_ref())?;
    }
    let (avatar, events, saturation_events) = ctl.take_records();
    let stale_ticks = events.iter().filter(|e| matches!(e, crate::controller::LoopEvent::Stale { .. })).count();
    Ok(RepTrace { index, patient, avatar, saturation_events, stale_ticks })
}

/// How Pawing weights evolve across sessions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WeightsPolicy {
    Fixed(ControlWeights),
    /// Start from `initial`, adapt from session 3 onward.
    Adaptive { initial: ControlWeights },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protocol {
    /// Number of leading measurement sessions.
    pub awing_trials: usize,
    pub policy: WeightsPolicy,
}

/// Session history plus the weights the next guidance session will use.
#[derive(Debug, Clone)]
pub struct SessionEngine {
    cfg: SessionConfig,
    history: Vec<SessionRecord>,
    condition: Option<Condition>,
}

impl SessionEngine {
    pub fn new(cfg: SessionConfig) -> Self {
        Self { cfg, history: Vec::new(), condition: None }
    }

    pub fn with_condition(mut self, condition: Condition) -> Self {
        self.condition = Some(condition);
        self
    }

    pub fn set_condition(&mut self, condition: Option<Condition>) {
        self.condition = condition;
    }

    pub fn condition(&self) -> Option<Condition> {
        self.condition
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn history(&self) -> &[SessionRecord] {
        &self.history
    }

    pub fn into_history(self) -> Vec<SessionRecord> {
        self.history
    }

    fn next_n(&self) -> u32 {
        self.history.len() as u32 + 1
    }

    fn run(
        &mut self,
        source: &mut dyn PatientSource,
        segment: &HoganSegment,
        phase: Phase,
        weights: ControlWeights,
        adapted: bool,
        reps: usize,
    ) -> Result<SessionRecord> {
        if reps == 0 {
            return Err(Error::InvalidParameter("a session needs at least one repetition".into()));
        }
        let mut traces = Vec::with_capacity(reps);
        for rep in 0..reps {
            let patient = source.repetition(rep, self.cfg.metric_dt)?;
            traces.push(run_repetition(rep, patient, segment, weights, &self.cfg)?);
        }
        let refs: Vec<&KinematicTrace> = traces.iter().map(|t| &t.patient).collect();
        let score = score_repetitions(&refs, &self.cfg)?;
        let record = self.finish(phase, weights, adapted, segment, score, traces, source.profile(), None);
        self.history.push(record.clone());
        Ok(record)
    }

    /// Builds the record for the next session index from a computed score.
    #[allow(clippy::too_many_arguments)]
    pub fn finish(
        &self,
        phase: Phase,
        weights: ControlWeights,
        adapted: bool,
        segment: &HoganSegment,
        score: SessionScore,
        traces: Vec<RepTrace>,
        patient_profile: Option<PatientProfile>,
        clock_offset_ms: Option<f64>,
    ) -> SessionRecord {
        let delta_ia = self.history.last().map(|prev| score.ia - prev.ia);
        let flags = classify(&weights, delta_ia);
        SessionRecord {
            n: self.next_n(),
            phase,
            condition: self.condition,
            reps: traces.len(),
            j_p: score.j_p,
            j_h: score.j_h,
            ia: score.ia,
            delta_ia,
            weights,
            adapted,
            flags,
            segment: *segment,
            fitted: score.fitted,
            saturation_events: traces.iter().map(|t| t.saturation_events).sum(),
            config: self.cfg,
            patient_profile,
            clock_offset_ms,
            traces,
        }
    }

    /// Appends an externally scored session (live gateway sessions).
    pub fn push(&mut self, record: SessionRecord) {
        self.history.push(record);
    }

    /// Measurement session: the avatar is a pure follower.
    pub fn run_awing(&mut self, source: &mut dyn PatientSource, segment: &HoganSegment, reps: usize) -> Result<SessionRecord> {
        let w = ControlWeights::follower(self.cfg.eta);
        self.run(source, segment, Phase::Awing, w, false, reps)
    }

    /// Guidance session with explicit weights.
    pub fn run_pawing(
        &mut self,
        source: &mut dyn PatientSource,
        segment: &HoganSegment,
        weights: ControlWeights,
        reps: usize,
    ) -> Result<SessionRecord> {
        weights.validate()?;
        self.run(source, segment, Phase::Pawing, weights, false, reps)
    }

    /// Weights for the next guidance session under `policy`, and whether
    /// the update rule fired.
    pub fn next_weights(&self, policy: &WeightsPolicy) -> (ControlWeights, bool) {
        match policy {
            WeightsPolicy::Fixed(w) => (*w, false),
            WeightsPolicy::Adaptive { initial } => {
                let prev = self
                    .history
                    .iter()
                    .rev()
                    .find(|r| r.phase == Phase::Pawing)
                    .map_or(*initial, |r| r.weights);
                if self.next_n() < FIRST_ADAPTED_SESSION {
                    return (prev, false);
                }
                match adapt_weights(&self.history, prev, self.cfg.sign) {
                    Adaptation::Adapted { weights, .. } => (weights, true),
                    Adaptation::NotYet { weights } => (weights, false),
                }
            }
        }
    }

    /// Runs one session per profile following `protocol`.
    pub fn run_protocol(&mut self, profiles: &[PatientProfile], protocol: &Protocol) -> Result<Vec<SessionRecord>> {
        let mut out = Vec::with_capacity(profiles.len());
        for (i, profile) in profiles.iter().enumerate() {
            let segment = HoganSegment::new(0.0, profile.amplitude, profile.duration)?;
            let mut source = SyntheticPatient(*profile);
            let record = if i < protocol.awing_trials {
                self.run_awing(&mut source, &segment, self.cfg.reps)?
            } else {
                let (w, adapted) = self.next_weights(&protocol.policy);
                self.run(&mut source, &segment, Phase::Pawing, w, adapted, self.cfg.reps)?
            };
            out.push(record);
        }
        Ok(out)
    }
}

/// The scripted scenario: one measurement session, then guidance sessions
/// starting from `alpha_p = initial_alpha_p` and adapting from session 3.
pub fn scenario_protocol(initial_alpha_p: f64, eta: f64) -> Result<Protocol> {
    Ok(Protocol { awing_trials: 1, policy: WeightsPolicy::Adaptive { initial: ControlWeights::from_alpha_p(initial_alpha_p, eta)? } })
}
