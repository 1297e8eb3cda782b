//! Run configuration: a sectioned TOML document with strict keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use transducer_core::agent::{Algorithm, LearningConfig, TriggerConfig};
use transducer_core::env::{ActionBounds, DriftSpec, DriftTarget, EfficiencyOracle, EnvConfig, RewardMode};
use transducer_core::model::TransducerParams;
use transducer_core::quantum::ModeSpace;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub transducer: TransducerSection,
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftSection>,
    #[serde(default)]
    pub learning: LearningSection,
    #[serde(default)]
    pub adaptation: AdaptationSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransducerSection {
    pub omega_m: f64,
    pub omega_c_1: f64,
    pub omega_c_2: f64,
    pub gamma_1: f64,
    pub gamma_2: f64,
    pub epsilon_1: f64,
    pub epsilon_2: f64,
    pub omega_d_1: f64,
    pub omega_d_2: f64,
    pub delta_1: f64,
    pub delta_2: f64,
    pub delta_m: f64,
    pub n_th: f64,
    pub n_pump_1: f64,
    pub n_pump_2: f64,
    /// Fock cutoffs for the master-equation diagnostics.
    pub cutoff_microwave: usize,
    pub cutoff_optical: usize,
    pub cutoff_mechanical: usize,
}

impl Default for TransducerSection {
    fn default() -> Self {
        let p = TransducerParams::default();
        Self {
            omega_m: p.omega_m,
            omega_c_1: p.omega_c[0],
            omega_c_2: p.omega_c[1],
            gamma_1: p.gamma[0],
            gamma_2: p.gamma[1],
            epsilon_1: p.epsilon[0],
            epsilon_2: p.epsilon[1],
            omega_d_1: p.omega_d[0],
            omega_d_2: p.omega_d[1],
            delta_1: p.delta[0],
            delta_2: p.delta[1],
            delta_m: p.delta_m,
            n_th: p.n_th,
            n_pump_1: p.n_pump[0],
            n_pump_2: p.n_pump[1],
            cutoff_microwave: 3,
            cutoff_optical: 3,
            cutoff_mechanical: 3,
        }
    }
}

impl TransducerSection {
    pub fn params(&self) -> TransducerParams {
        TransducerParams {
            omega_m: self.omega_m,
            omega_c: [self.omega_c_1, self.omega_c_2],
            gamma: [self.gamma_1, self.gamma_2],
            epsilon: [self.epsilon_1, self.epsilon_2],
            omega_d: [self.omega_d_1, self.omega_d_2],
            delta: [self.delta_1, self.delta_2],
            delta_m: self.delta_m,
            n_th: self.n_th,
            n_pump: [self.n_pump_1, self.n_pump_2],
        }
    }

    pub fn mode_space(&self) -> transducer_core::Result<ModeSpace> {
        ModeSpace::new(&[self.cutoff_microwave, self.cutoff_optical, self.cutoff_mechanical])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSection {
    pub episode_length: usize,
    pub observation_noise_sd: f64,
    pub max_increment: f64,
    pub log10_pump_min_1: f64,
    pub log10_pump_min_2: f64,
    pub log10_pump_max_1: f64,
    pub log10_pump_max_2: f64,
    pub reward: RewardMode,
    pub oracle: EfficiencyOracle,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        let e = EnvConfig::default();
        Self {
            episode_length: e.episode_length,
            observation_noise_sd: e.observation_noise_sd,
            max_increment: e.max_increment,
            log10_pump_min_1: e.action_bounds.log10_min[0],
            log10_pump_min_2: e.action_bounds.log10_min[1],
            log10_pump_max_1: e.action_bounds.log10_max[0],
            log10_pump_max_2: e.action_bounds.log10_max[1],
            reward: e.reward,
            oracle: e.oracle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    pub target: DriftTarget,
    #[serde(default)]
    pub walk_sd: f64,
    #[serde(default)]
    pub onset_step: u64,
    #[serde(default = "one")]
    pub step_factor: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningSection {
    pub algorithm: Algorithm,
    pub alpha_theta: f64,
    pub alpha_w: f64,
    pub gamma_rl: f64,
    pub episodes: usize,
    pub parallel_envs: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub ma_window: usize,
}

impl Default for LearningSection {
    fn default() -> Self {
        let l = LearningConfig::default();
        Self {
            algorithm: Algorithm::default(),
            alpha_theta: l.alpha_theta,
            alpha_w: l.alpha_w,
            gamma_rl: l.gamma_rl,
            episodes: l.episodes,
            parallel_envs: l.parallel_envs,
            hidden: l.hidden,
            init_log_std: l.init_log_std,
            ma_window: l.ma_window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationSection {
    /// Episodes to run after training.
    pub episodes: usize,
    pub window: usize,
    pub drop_fraction: f64,
    pub burst_episodes: usize,
    pub min_episodes_between_bursts: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_seconds_between_bursts: Option<f64>,
}

impl Default for AdaptationSection {
    fn default() -> Self {
        let t = TriggerConfig::default();
        Self {
            episodes: 300,
            window: t.window,
            drop_fraction: t.drop_fraction,
            burst_episodes: t.burst_episodes,
            min_episodes_between_bursts: t.min_episodes_between_bursts,
            min_seconds_between_bursts: t.min_seconds_between_bursts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Detuning grid runs over `[-omega_span, omega_span]`.
    pub omega_span: f64,
    /// Odd, so the grid contains zero exactly.
    pub omega_points: usize,
    /// Points per actuator axis of the pump grid.
    pub pump_points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { omega_span: 50.0, omega_points: 201, pump_points: 41 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    /// Defaults everywhere except the seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            transducer: Default::default(),
            environment: Default::default(),
            drift: None,
            learning: Default::default(),
            adaptation: Default::default(),
            sweep: Default::default(),
            output: Default::default(),
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        let e = &self.environment;
        EnvConfig {
            base_params: self.transducer.params(),
            action_bounds: ActionBounds {
                log10_min: [e.log10_pump_min_1, e.log10_pump_min_2],
                log10_max: [e.log10_pump_max_1, e.log10_pump_max_2],
            },
            episode_length: e.episode_length,
            observation_noise_sd: e.observation_noise_sd,
            max_increment: e.max_increment,
            drift: None,
            seed: self.seed,
            reward: e.reward,
            oracle: e.oracle,
        }
    }

    pub fn drift_spec(&self) -> Option<DriftSpec> {
        self.drift.as_ref().map(|d| DriftSpec {
            target: d.target,
            walk_sd: d.walk_sd,
            onset_step: d.onset_step,
            step_factor: d.step_factor,
        })
    }

    pub fn learning_config(&self) -> LearningConfig {
        let l = &self.learning;
        LearningConfig {
            alpha_theta: l.alpha_theta,
            alpha_w: l.alpha_w,
            gamma_rl: l.gamma_rl,
            episodes: l.episodes,
            parallel_envs: l.parallel_envs,
            seed: self.seed,
            hidden: l.hidden.clone(),
            init_log_std: l.init_log_std,
            ma_window: l.ma_window,
        }
    }

    pub fn trigger_config(&self) -> TriggerConfig {
        let a = &self.adaptation;
        TriggerConfig {
            window: a.window,
            drop_fraction: a.drop_fraction,
            burst_episodes: a.burst_episodes,
            min_episodes_between_bursts: a.min_episodes_between_bursts,
            min_seconds_between_bursts: a.min_seconds_between_bursts,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn section(name: &'static str) -> impl Fn(transducer_core::Error) -> ConfigError {
            move |e| ConfigError::Invalid(format!("[{name}] {e}"))
        }
        self.transducer.params().validate().map_err(section("transducer"))?;
        self.transducer.mode_space().map_err(section("transducer"))?;
        self.env_config().validate().map_err(section("environment"))?;
        if let Some(d) = self.drift_spec() {
            d.validate().map_err(section("drift"))?;
        }
        self.learning_config().validate().map_err(section("learning"))?;
        self.trigger_config().validate().map_err(section("adaptation"))?;
        let s = &self.sweep;
        if !(s.omega_span > 0.0) || !s.omega_span.is_finite() {
            return Err(ConfigError::Invalid(format!("[sweep] omega_span must be > 0 (got {})", s.omega_span)));
        }
        if s.omega_points < 3 || s.omega_points.is_multiple_of(2) {
            return Err(ConfigError::Invalid(format!(
                "[sweep] omega_points must be odd and >= 3 (got {})",
                s.omega_points
            )));
        }
        if s.pump_points < 2 {
            return Err(ConfigError::Invalid(format!("[sweep] pump_points must be >= 2 (got {})", s.pump_points)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Invalid(format!("cannot serialize config: {e}")))
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash(&self) -> Result<String, ConfigError> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}
