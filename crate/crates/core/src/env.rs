//! Episodic control environment around the transducer.
//!
//! The two actuators are the pump photon numbers of the microwave and
//! optical cavities, controlled on a log10 scale and exposed to the agent
//! normalized to `[-1, 1]`. Each step nudges the actuators by a bounded
//! increment, recomputes the on-resonance conversion efficiency and pays a
//! reward when the efficiency beats the best value seen in the episode.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lindblad;
use crate::model::TransducerParams;
use crate::scattering;

/// Largest actuator increment per step, in normalized units.
pub const DEFAULT_MAX_INCREMENT: f64 = 0.2;
/// Observed efficiency is clipped to this range before exposure.
pub const OBSERVED_ETA_RANGE: (f64, f64) = (0.0, 1.5);
const NOISE_QUANTA_CAP: f64 = 1e12;
const DRIFT_RATE_FLOOR: f64 = 1e-6;
const PROBE_AMPLITUDE: f64 = 1e-4;

/// Mixes a base seed with a stream index (SplitMix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-actuator bounds on `log10(n_pump)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub log10_min: [f64; 2],
    pub log10_max: [f64; 2],
}

impl Default for ActionBounds {
    fn default() -> Self {
        Self { log10_min: [0.0, 0.0], log10_max: [4.0, 4.0] }
    }
}

impl ActionBounds {
    pub fn validate(&self) -> Result<()> {
        for i in 0..2 {
            let (lo, hi) = (self.log10_min[i], self.log10_max[i]);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(invalid(format!("actuator {} bounds must be finite", i + 1)));
            }
            if lo > hi {
                return Err(invalid(format!("actuator {} bounds inverted: min {lo} > max {hi}", i + 1)));
            }
        }
        Ok(())
    }

    fn collapsed(&self, i: usize) -> bool {
        self.log10_min[i] == self.log10_max[i]
    }

    /// Pump photon numbers for normalized actuator positions.
    pub fn pump_photons(&self, normalized: [f64; 2]) -> [f64; 2] {
        let f = |i: usize| {
            let (lo, hi) = (self.log10_min[i], self.log10_max[i]);
            10f64.powf(lo + (normalized[i] + 1.0) * 0.5 * (hi - lo))
        };
        [f(0), f(1)]
    }
}

/// How the per-step reward is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Improvement over the best efficiency so far, otherwise a small signed
    /// shaping term `0.1 (eta_t - eta_{t-1})`.
    #[default]
    BestSoFar,
    /// 1 when the efficiency beats the best so far, else 0.
    Indicator,
}

/// Which model computes the efficiency inside `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfficiencyOracle {
    #[default]
    Scattering,
    /// Weak-probe steady state of the master equation; much slower.
    LindbladProbe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftTarget {
    DeltaM,
    NTh,
    #[serde(rename = "gamma_1")]
    Gamma1,
    #[serde(rename = "gamma_2")]
    Gamma2,
}

impl FromStr for DriftTarget {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta_m" => Ok(Self::DeltaM),
            "n_th" => Ok(Self::NTh),
            "gamma_1" => Ok(Self::Gamma1),
            "gamma_2" => Ok(Self::Gamma2),
            other => Err(invalid(format!(
                "unknown drift target '{other}' (expected delta_m, n_th, gamma_1 or gamma_2)"
            ))),
        }
    }
}

impl fmt::Display for DriftTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::DeltaM => "delta_m",
            Self::NTh => "n_th",
            Self::Gamma1 => "gamma_1",
            Self::Gamma2 => "gamma_2",
        })
    }
}

impl DriftTarget {
    fn get(self, p: &TransducerParams) -> f64 {
        match self {
            Self::DeltaM => p.delta_m,
            Self::NTh => p.n_th,
            Self::Gamma1 => p.gamma[0],
            Self::Gamma2 => p.gamma[1],
        }
    }

    fn set(self, p: &mut TransducerParams, v: f64) {
        let floor = if self == Self::NTh { 0.0 } else { DRIFT_RATE_FLOOR };
        let v = v.max(floor);
        match self {
            Self::DeltaM => p.delta_m = v,
            Self::NTh => p.n_th = v,
            Self::Gamma1 => p.gamma[0] = v,
            Self::Gamma2 => p.gamma[1] = v,
        }
    }
}

/// Slow parameter drift: a one-off multiplicative jump at `onset_step`
/// followed by a Gaussian random walk on every later step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub target: DriftTarget,
    pub walk_sd: f64,
    /// Global step index (counted across episodes) at which drift starts.
    pub onset_step: u64,
    #[serde(default = "one")]
    pub step_factor: f64,
}

fn one() -> f64 {
    1.0
}

impl DriftSpec {
    pub fn random_walk(target: DriftTarget, walk_sd: f64, onset_step: u64) -> Self {
        Self { target, walk_sd, onset_step, step_factor: 1.0 }
    }

    pub fn step_change(target: DriftTarget, factor: f64, onset_step: u64) -> Self {
        Self { target, walk_sd: 0.0, onset_step, step_factor: factor }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.walk_sd >= 0.0) || !self.walk_sd.is_finite() {
            return Err(invalid(format!("walk_sd must be >= 0 (got {})", self.walk_sd)));
        }
        if !(self.step_factor > 0.0) || !self.step_factor.is_finite() {
            return Err(invalid(format!("step_factor must be > 0 (got {})", self.step_factor)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub base_params: TransducerParams,
    pub action_bounds: ActionBounds,
    pub episode_length: usize,
    pub observation_noise_sd: f64,
    pub max_increment: f64,
    pub drift: Option<DriftSpec>,
    pub seed: u64,
    pub reward: RewardMode,
    pub oracle: EfficiencyOracle,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            base_params: TransducerParams::default(),
            action_bounds: ActionBounds::default(),
            episode_length: 64,
            observation_noise_sd: 0.01,
            max_increment: DEFAULT_MAX_INCREMENT,
            drift: None,
            seed: 0,
            reward: RewardMode::BestSoFar,
            oracle: EfficiencyOracle::Scattering,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.base_params.validate()?;
        self.action_bounds.validate()?;
        if self.episode_length < 1 {
            return Err(invalid("episode_length must be >= 1"));
        }
        if !(self.observation_noise_sd >= 0.0) || !self.observation_noise_sd.is_finite() {
            return Err(invalid(format!("observation_noise_sd must be >= 0 (got {})", self.observation_noise_sd)));
        }
        if !(self.max_increment > 0.0) || self.max_increment > 2.0 {
            return Err(invalid(format!("max_increment must be in (0, 2] (got {})", self.max_increment)));
        }
        if let Some(d) = &self.drift {
            d.validate()?;
        }
        Ok(())
    }

    /// Device parameters with the pumps set by normalized actuators.
    pub fn params_at(&self, base: &TransducerParams, normalized: [f64; 2]) -> TransducerParams {
        TransducerParams { n_pump: self.action_bounds.pump_photons(normalized), ..base.clone() }
    }
}

/// What the agent sees after each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub eta_measured: f64,
    pub added_noise_quanta: f64,
    pub actuators_normalized: [f64; 2],
}

impl Observation {
    pub const DIM: usize = 4;

    /// Network input: efficiency, compressed noise figure, actuators.
    pub fn features(&self) -> Vec<f64> {
        vec![
            self.eta_measured,
            self.added_noise_quanta.ln_1p() / 10.0,
            self.actuators_normalized[0],
            self.actuators_normalized[1],
        ]
    }
}

/// Increments on the normalized actuators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub delta: [f64; 2],
}

impl Action {
    pub fn new(delta: [f64; 2]) -> Self {
        Self { delta }
    }

    pub fn zero() -> Self {
        Self { delta: [0.0, 0.0] }
    }

    pub fn clipped(&self, cap: f64) -> Self {
        let c = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(-cap, cap) };
        Self { delta: [c(self.delta[0]), c(self.delta[1])] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_state: Observation,
    pub done: bool,
    /// Noiseless efficiency after the step.
    pub eta_true: f64,
}

#[derive(Debug, Clone)]
struct Episode {
    actuators: [f64; 2],
    step: usize,
    eta: f64,
    best: f64,
    obs: Observation,
    done: bool,
}

/// One row of an exported episode trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub actuators: [f64; 2],
    pub n_pump: [f64; 2],
    pub eta_true: f64,
    pub eta_observed: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub rows: Vec<TraceRow>,
}

impl EpisodeTrace {
    pub const CSV_HEADER: &'static str =
        "step,actuator_1,actuator_2,n_pump_1,n_pump_2,eta_true,eta_observed,reward";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.step, r.actuators[0], r.actuators[1], r.n_pump[0], r.n_pump[1], r.eta_true, r.eta_observed, r.reward
            ));
        }
        out
    }
}

/// Single-owner environment instance.
#[derive(Debug, Clone)]
pub struct TransducerEnv {
    cfg: EnvConfig,
    params: TransducerParams,
    rng: ChaCha8Rng,
    drift_rng: ChaCha8Rng,
    drift: Option<DriftSpec>,
    global_step: u64,
    episode: Option<Episode>,
}

impl TransducerEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            params: cfg.base_params.clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            drift_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX)),
            drift: cfg.drift,
            global_step: 0,
            episode: None,
            cfg,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    /// Current (possibly drifted) device parameters.
    pub fn params(&self) -> &TransducerParams {
        &self.params
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn actuators(&self) -> Option<[f64; 2]> {
        self.episode.as_ref().map(|e| e.actuators)
    }

    /// Noiseless efficiency at the current actuators.
    pub fn true_efficiency(&self) -> Option<f64> {
        self.episode.as_ref().map(|e| e.eta)
    }

    /// Installs or replaces the drift process.
    pub fn inject_drift(&mut self, spec: DriftSpec) -> Result<()> {
        spec.validate()?;
        self.drift = Some(spec);
        Ok(())
    }

    fn efficiency(&self, actuators: [f64; 2]) -> Result<(f64, f64)> {
        let p = self.cfg.params_at(&self.params, actuators);
        let eta = match self.cfg.oracle {
            EfficiencyOracle::Scattering => scattering::spectral_efficiency(&p, 0.0)?,
            EfficiencyOracle::LindbladProbe => lindblad::probe_efficiency(&p, PROBE_AMPLITUDE)?,
        };
        let noise = scattering::added_noise_quanta(&p, 0.0)?.min(NOISE_QUANTA_CAP);
        Ok((eta, noise))
    }

    fn observe(&mut self, actuators: [f64; 2], eta: f64, noise: f64) -> Observation {
        let measured = if self.cfg.observation_noise_sd > 0.0 {
            let n = Normal::new(0.0, self.cfg.observation_noise_sd).expect("validated noise sd");
            eta + n.sample(&mut self.rng)
        } else {
            eta
        };
        Observation {
            eta_measured: measured.clamp(OBSERVED_ETA_RANGE.0, OBSERVED_ETA_RANGE.1),
            added_noise_quanta: noise,
            actuators_normalized: actuators,
        }
    }

    /// Starts an episode with actuators drawn uniformly from the box.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let mut actuators = [0.0; 2];
        for (i, a) in actuators.iter_mut().enumerate() {
            let u: f64 = self.rng.random_range(-1.0..=1.0);
            *a = if self.cfg.action_bounds.collapsed(i) { 0.0 } else { u };
        }
        self.start_episode(actuators)
    }

    /// Starts an episode at given normalized actuators.
    pub fn reset_at(&mut self, seed: u64, actuators: [f64; 2]) -> Result<Observation> {
        if actuators.iter().any(|a| !(-1.0..=1.0).contains(a)) {
            return Err(invalid("normalized actuators must lie in [-1, 1]"));
        }
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.start_episode(actuators)
    }

    fn start_episode(&mut self, actuators: [f64; 2]) -> Result<Observation> {
        let (eta, noise) = self.efficiency(actuators)?;
        let obs = self.observe(actuators, eta, noise);
        self.episode = Some(Episode { actuators, step: 0, eta, best: eta, obs, done: false });
        Ok(obs)
    }

    fn apply_drift(&mut self) {
        let Some(spec) = self.drift else { return };
        if self.global_step < spec.onset_step {
            return;
        }
        let target = spec.target;
        let mut v = target.get(&self.params);
        if self.global_step == spec.onset_step {
            v *= spec.step_factor;
        }
        if spec.walk_sd > 0.0 {
            let n = Normal::new(0.0, spec.walk_sd).expect("validated walk sd");
            v += n.sample(&mut self.drift_rng);
        }
        target.set(&mut self.params, v);
    }

    pub fn step(&mut self, action: Action) -> Result<Transition> {
        let ep = self
            .episode
            .as_ref()
            .ok_or_else(|| Error::ProtocolViolation("step called before reset".into()))?;
        if ep.done {
            return Err(Error::ProtocolViolation("step called after the episode finished".into()));
        }
        let state = ep.obs;
        let action = action.clipped(self.cfg.max_increment);
        let mut actuators = ep.actuators;
        for (i, a) in actuators.iter_mut().enumerate() {
            *a = if self.cfg.action_bounds.collapsed(i) { 0.0 } else { (*a + action.delta[i]).clamp(-1.0, 1.0) };
        }

        self.apply_drift();
        self.global_step += 1;

        let (eta, noise) = self.efficiency(actuators)?;
        let next_state = self.observe(actuators, eta, noise);
        let ep = self.episode.as_mut().expect("episode checked above");
        let reward = match self.cfg.reward {
            RewardMode::BestSoFar if eta > ep.best => eta - ep.best,
            RewardMode::BestSoFar => 0.1 * (eta - ep.eta),
            RewardMode::Indicator => f64::from(u8::from(eta > ep.best)),
        };
        ep.best = ep.best.max(eta);
        ep.eta = eta;
        ep.actuators = actuators;
        ep.obs = next_state;
        ep.step += 1;
        ep.done = ep.step >= self.cfg.episode_length;
        Ok(Transition { state, action, reward, next_state, done: ep.done, eta_true: eta })
    }

    pub fn trace_row(&self, t: &Transition, step: usize) -> TraceRow {
        TraceRow {
            step,
            actuators: t.next_state.actuators_normalized,
            n_pump: self.cfg.action_bounds.pump_photons(t.next_state.actuators_normalized),
            eta_true: t.eta_true,
            eta_observed: t.next_state.eta_measured,
            reward: t.reward,
        }
    }
}

/// Per-step outcome in the flat-vector form used by learners.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Task score after the step, e.g. the noiseless efficiency.
    pub true_metric: f64,
    /// The score as the agent observes it.
    pub observed_metric: f64,
}

/// Interface the learners train against.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Actions are squashed into `[-limit, limit]` per dimension.
    fn action_limit(&self) -> f64;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<EnvStep>;
}

impl Environment for TransducerEnv {
    fn observation_dim(&self) -> usize {
        Observation::DIM
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn action_limit(&self) -> f64 {
        self.cfg.max_increment
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        Ok(TransducerEnv::reset(self, seed)?.features())
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep> {
        if action.len() != 2 {
            return Err(invalid(format!("expected 2 action components, got {}", action.len())));
        }
        let t = TransducerEnv::step(self, Action::new([action[0], action[1]]))?;
        Ok(EnvStep {
            observation: t.next_state.features(),
            reward: t.reward,
            done: t.done,
            true_metric: t.eta_true,
            observed_metric: t.next_state.eta_measured,
        })
    }
}

/// Maps observations to actions for evaluation runs.
pub trait Policy {
    fn act(&mut self, obs: &Observation) -> Action;
}

/// Uniform random increments.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
    cap: f64,
}

impl RandomPolicy {
    pub fn new(seed: u64, cap: f64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), cap }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _obs: &Observation) -> Action {
        Action::new([self.rng.random_range(-self.cap..=self.cap), self.rng.random_range(-self.cap..=self.cap)])
    }
}

/// Moves straight toward a known target at the maximum increment.
#[derive(Debug, Clone)]
pub struct OraclePolicy {
    pub target: [f64; 2],
    pub cap: f64,
}

impl Policy for OraclePolicy {
    fn act(&mut self, obs: &Observation) -> Action {
        let d = |i: usize| (self.target[i] - obs.actuators_normalized[i]).clamp(-self.cap, self.cap);
        Action::new([d(0), d(1)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub episodes: usize,
    pub mean_final_eta: f64,
    pub max_final_eta: f64,
    pub mean_return: f64,
}

/// Runs `policy` without learning on a fresh environment.
pub fn evaluate_policy(
    cfg: &EnvConfig,
    policy: &mut dyn Policy,
    episodes: usize,
    seed: u64,
) -> Result<EvaluationSummary> {
    let mut env = TransducerEnv::new(cfg.clone())?;
    evaluate_on(&mut env, policy, episodes, seed).map(|(s, _)| s)
}

/// Like [`evaluate_policy`] on an existing environment; also returns the
/// trace of the last episode.
pub fn evaluate_on(
    env: &mut TransducerEnv,
    policy: &mut dyn Policy,
    episodes: usize,
    seed: u64,
) -> Result<(EvaluationSummary, EpisodeTrace)> {
    if episodes < 1 {
        return Err(invalid("episodes must be >= 1"));
    }
    let (mut sum_eta, mut max_eta, mut sum_ret) = (0.0, f64::NEG_INFINITY, 0.0);
    let mut trace = EpisodeTrace::default();
    for e in 0..episodes {
        let mut obs = env.reset(derive_seed(seed, e as u64))?;
        let mut ret = 0.0;
        trace.rows.clear();
        let eta = loop {
            let t = env.step(policy.act(&obs))?;
            ret += t.reward;
            obs = t.next_state;
            let row = env.trace_row(&t, trace.rows.len() + 1);
            trace.rows.push(row);
            if t.done {
                break t.eta_true;
            }
        };
        sum_eta += eta;
        max_eta = max_eta.max(eta);
        sum_ret += ret;
    }
    let n = episodes as f64;
    Ok((EvaluationSummary { episodes, mean_final_eta: sum_eta / n, max_final_eta: max_eta, mean_return: sum_ret / n }, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptimum {
    pub actuators: [f64; 2],
    pub eta: f64,
}

/// Exhaustive search of the on-resonance efficiency over a
/// `resolution x resolution` grid of normalized actuators.
pub fn grid_search_optimum(cfg: &EnvConfig, params: &TransducerParams, resolution: usize) -> Result<GridOptimum> {
    if resolution < 2 {
        return Err(invalid("grid resolution must be >= 2"));
    }
    let axis = |k: usize| -1.0 + 2.0 * k as f64 / (resolution - 1) as f64;
    let mut best = GridOptimum { actuators: [0.0, 0.0], eta: f64::NEG_INFINITY };
    for i in 0..resolution {
        for j in 0..resolution {
            let a = [axis(i), axis(j)];
            let eta = scattering::spectral_efficiency(&cfg.params_at(params, a), 0.0)?;
            if eta > best.eta {
                best = GridOptimum { actuators: a, eta };
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless() -> EnvConfig {
        EnvConfig { observation_noise_sd: 0.0, ..Default::default() }
    }

    #[test]
    fn reset_is_deterministic() {
        let mut a = TransducerEnv::new(EnvConfig::default()).unwrap();
        let mut b = TransducerEnv::new(EnvConfig::default()).unwrap();
        let (oa, ob) = (a.reset(7).unwrap(), b.reset(7).unwrap());
        assert_eq!(oa.eta_measured.to_bits(), ob.eta_measured.to_bits());
        assert_eq!(oa, ob);
        assert_ne!(a.reset(8).unwrap(), oa);
    }

    #[test]
    fn noiseless_reset_reports_true_efficiency() {
        let cfg = noiseless();
        let mut env = TransducerEnv::new(cfg.clone()).unwrap();
        let obs = env.reset(3).unwrap();
        let p = cfg.params_at(&cfg.base_params, obs.actuators_normalized);
        assert_eq!(obs.eta_measured, scattering::spectral_efficiency(&p, 0.0).unwrap());
    }

    #[test]
    fn collapsed_bounds_pin_actuators() {
        let cfg = EnvConfig {
            action_bounds: ActionBounds { log10_min: [2.0, 3.0], log10_max: [2.0, 3.0] },
            ..noiseless()
        };
        let mut env = TransducerEnv::new(cfg).unwrap();
        let obs = env.reset(11).unwrap();
        assert_eq!(obs.actuators_normalized, [0.0, 0.0]);
        let t = env.step(Action::new([0.2, -0.2])).unwrap();
        assert_eq!(t.next_state.actuators_normalized, [0.0, 0.0]);
        let n = env.config().action_bounds.pump_photons(t.next_state.actuators_normalized);
        assert!((n[0] - 100.0).abs() < 1e-9 && (n[1] - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_bounds_rejected() {
        let cfg = EnvConfig { action_bounds: ActionBounds { log10_min: [3.0, 0.0], log10_max: [1.0, 4.0] }, ..Default::default() };
        assert!(matches!(TransducerEnv::new(cfg), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_action_pays_nothing() {
        let mut env = TransducerEnv::new(noiseless()).unwrap();
        env.reset(5).unwrap();
        let t = env.step(Action::zero()).unwrap();
        assert_eq!(t.reward, 0.0);
    }

    #[test]
    fn move_toward_optimum_is_rewarded() {
        let cfg = noiseless();
        let opt = grid_search_optimum(&cfg, &cfg.base_params, 41).unwrap();
        let mut env = TransducerEnv::new(cfg).unwrap();
        let start = [-0.5, -0.3];
        env.reset_at(1, start).unwrap();
        let before = env.true_efficiency().unwrap();
        let dir = [(opt.actuators[0] - start[0]).signum() * 0.2, (opt.actuators[1] - start[1]).signum() * 0.2];
        let t = env.step(Action::new(dir)).unwrap();
        assert!(t.eta_true > before);
        assert!(t.reward > 0.0);
    }

    #[test]
    fn actions_saturate_at_bounds() {
        let mut env = TransducerEnv::new(noiseless()).unwrap();
        env.reset_at(1, [0.95, -0.9]).unwrap();
        let t = env.step(Action::new([5.0, -5.0])).unwrap();
        assert_eq!(t.action.delta, [0.2, -0.2]);
        assert_eq!(t.next_state.actuators_normalized, [1.0, -1.0]);
    }

    #[test]
    fn step_after_done_is_protocol_violation() {
        let cfg = EnvConfig { episode_length: 2, ..noiseless() };
        let mut env = TransducerEnv::new(cfg).unwrap();
        assert!(matches!(env.step(Action::zero()), Err(Error::ProtocolViolation(_))));
        env.reset(0).unwrap();
        assert!(!env.step(Action::zero()).unwrap().done);
        assert!(env.step(Action::zero()).unwrap().done);
        assert!(matches!(env.step(Action::zero()), Err(Error::ProtocolViolation(_))));
    }

    #[test]
    fn null_drift_keeps_parameters() {
        let cfg = EnvConfig { drift: Some(DriftSpec::random_walk(DriftTarget::DeltaM, 0.0, 0)), ..noiseless() };
        let mut env = TransducerEnv::new(cfg.clone()).unwrap();
        env.reset(0).unwrap();
        for _ in 0..20 {
            env.step(Action::zero()).unwrap();
            assert_eq!(env.params(), &cfg.base_params);
        }
    }

    #[test]
    fn drift_respects_floor() {
        let cfg = EnvConfig {
            drift: Some(DriftSpec::random_walk(DriftTarget::DeltaM, 50.0, 0)),
            episode_length: 200,
            ..noiseless()
        };
        let mut env = TransducerEnv::new(cfg).unwrap();
        env.reset(0).unwrap();
        let mut hit_floor = false;
        for _ in 0..200 {
            env.step(Action::zero()).unwrap();
            assert!(env.params().delta_m >= 1e-6);
            hit_floor |= env.params().delta_m == 1e-6;
        }
        assert!(hit_floor);
    }

    #[test]
    fn drift_increment_variance_matches_walk() {
        // Monte-Carlo oracle: increments of a Gaussian walk have variance sd^2.
        let sd = 0.01;
        let mut increments = Vec::new();
        for run in 0..1000u64 {
            let cfg = EnvConfig {
                drift: Some(DriftSpec::random_walk(DriftTarget::DeltaM, sd, 0)),
                episode_length: 100,
                seed: run,
                ..noiseless()
            };
            let mut env = TransducerEnv::new(cfg).unwrap();
            env.reset(run).unwrap();
            let mut prev = env.params().delta_m;
            for _ in 0..100 {
                env.step(Action::zero()).unwrap();
                increments.push(env.params().delta_m - prev);
                prev = env.params().delta_m;
            }
        }
        let n = increments.len() as f64;
        let mean = increments.iter().sum::<f64>() / n;
        let var = increments.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // Sample-variance standard error is sqrt(2/(n-1)) sd^2.
        let se = (2.0 / (n - 1.0)).sqrt() * sd * sd;
        assert!((var - sd * sd).abs() < 3.0 * se, "var {var}");
    }

    #[test]
    fn step_drift_multiplies_once() {
        let cfg = EnvConfig { drift: Some(DriftSpec::step_change(DriftTarget::DeltaM, 2.0, 3)), ..noiseless() };
        let mut env = TransducerEnv::new(cfg).unwrap();
        env.reset(0).unwrap();
        let mut seen = Vec::new();
        for _ in 0..6 {
            env.step(Action::zero()).unwrap();
            seen.push(env.params().delta_m);
        }
        assert_eq!(seen, vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn unknown_drift_target_rejected() {
        assert!(matches!("omega_m".parse::<DriftTarget>(), Err(Error::InvalidArgument(_))));
        assert_eq!("gamma_2".parse::<DriftTarget>().unwrap(), DriftTarget::Gamma2);
    }

    #[test]
    fn return_bounded_and_stationary_without_drift() {
        let mut env = TransducerEnv::new(noiseless()).unwrap();
        let mut policy = RandomPolicy::new(9, 0.2);
        for e in 0..30 {
            let mut obs = env.reset(e).unwrap();
            let first = env.true_efficiency().unwrap();
            let mut ret = 0.0;
            loop {
                let t = env.step(policy.act(&obs)).unwrap();
                ret += t.reward;
                obs = t.next_state;
                assert!((0.0..=1.0).contains(&t.eta_true));
                if t.done {
                    break;
                }
            }
            assert!(ret <= 1.0);
            assert!(ret <= 1.0 - first + 1e-12);
        }
        env.reset(99).unwrap();
        let eta0 = env.true_efficiency().unwrap();
        for _ in 0..64 {
            assert_eq!(env.step(Action::zero()).unwrap().eta_true, eta0);
        }
    }

    #[test]
    fn evaluation_against_grid_oracle() {
        let cfg = EnvConfig::default();
        let opt = grid_search_optimum(&cfg, &cfg.base_params, 200).unwrap();
        let random = evaluate_policy(&cfg, &mut RandomPolicy::new(1, 0.2), 20, 5).unwrap();
        assert!(random.mean_final_eta < opt.eta);
        let mut oracle = OraclePolicy { target: opt.actuators, cap: 0.2 };
        let s = evaluate_policy(&cfg, &mut oracle, 20, 5).unwrap();
        assert!((s.mean_final_eta - opt.eta).abs() < 1e-3);
        let again = evaluate_policy(&cfg, &mut OraclePolicy { target: opt.actuators, cap: 0.2 }, 20, 5).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn parallel_instances_are_isolated() {
        let cfg = EnvConfig::default();
        let solo = {
            let mut env = TransducerEnv::new(cfg.clone()).unwrap();
            env.reset(4).unwrap();
            (0..10).map(|_| env.step(Action::new([0.1, 0.05])).unwrap()).collect::<Vec<_>>()
        };
        let runs: Vec<Vec<Transition>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..4)
                .map(|k| {
                    let cfg = cfg.clone();
                    s.spawn(move || {
                        let mut env = TransducerEnv::new(cfg).unwrap();
                        env.reset(if k == 0 { 4 } else { 100 + k }).unwrap();
                        (0..10).map(|_| env.step(Action::new([0.1, 0.05])).unwrap()).collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(runs[0], solo);
    }

    #[test]
    fn lindblad_probe_oracle_agrees_with_scattering() {
        let base = EnvConfig { observation_noise_sd: 0.0, episode_length: 3, ..Default::default() };
        let probe = EnvConfig { oracle: EfficiencyOracle::LindbladProbe, ..base.clone() };
        let mut a = TransducerEnv::new(base).unwrap();
        let mut b = TransducerEnv::new(probe).unwrap();
        a.reset(2).unwrap();
        b.reset(2).unwrap();
        for _ in 0..3 {
            let ta = a.step(Action::new([0.2, 0.1])).unwrap();
            let tb = b.step(Action::new([0.2, 0.1])).unwrap();
            assert!((ta.eta_true - tb.eta_true).abs() < 1e-6 * ta.eta_true.max(1e-3));
        }
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let cfg = EnvConfig { episode_length: 4, ..noiseless() };
        let mut env = TransducerEnv::new(cfg).unwrap();
        let (_, trace) = evaluate_on(&mut env, &mut RandomPolicy::new(0, 0.2), 1, 0).unwrap();
        let csv = trace.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], EpisodeTrace::CSV_HEADER);
        assert_eq!(lines.len(), 5);
    }
}
