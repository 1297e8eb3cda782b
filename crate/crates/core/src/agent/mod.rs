//! Actor-critic learners built on small hand-rolled networks.

mod adapt;
mod mlp;
mod policy;
pub mod testbeds;
mod train;
mod update;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adapt::{adapt_online, AdaptationReport, Burst, TriggerConfig};
pub use mlp::{Layer, MlpParams};
pub use policy::{
    policy_sample, CriticMode, CriticParams, PolicyGradient, PolicyParams, PolicySample, LOG_STD_MAX, LOG_STD_MIN,
};
pub use train::{moving_average, train, train_on, EpisodeOutcome, TrainingReport};
pub use update::{advantage_update, qac_update};

use crate::env::{derive_seed, Action, Environment, Observation, Policy};
use crate::error::{invalid, Error, Result};

/// Stream id for the agent's own generator, kept apart from env streams.
const AGENT_STREAM: u64 = 0xA6E7_0000_0000_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Q-weighted actor update with an action-value critic.
    Qac,
    /// Advantage-weighted episode update with a state-value critic.
    #[default]
    Advantage,
}

impl Algorithm {
    pub fn critic_mode(self) -> CriticMode {
        match self {
            Algorithm::Qac => CriticMode::ActionValue,
            Algorithm::Advantage => CriticMode::StateValue,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Qac => "qac",
            Algorithm::Advantage => "advantage",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qac" => Ok(Algorithm::Qac),
            "advantage" => Ok(Algorithm::Advantage),
            other => Err(invalid(format!("unknown algorithm '{other}' (expected qac or advantage)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub alpha_theta: f64,
    pub alpha_w: f64,
    pub gamma_rl: f64,
    pub episodes: usize,
    pub parallel_envs: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Window of the moving-average return.
    pub ma_window: usize,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            alpha_theta: 3e-4,
            alpha_w: 1e-3,
            gamma_rl: 0.98,
            episodes: 1000,
            parallel_envs: 4,
            seed: 0,
            hidden: vec![32, 32],
            init_log_std: -1.0,
            ma_window: 20,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha_theta", self.alpha_theta), ("alpha_w", self.alpha_w)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be a finite rate >= 0 (got {v})")));
            }
        }
        if !(0.0..1.0).contains(&self.gamma_rl) {
            return Err(invalid(format!("gamma_rl must be in [0, 1) (got {})", self.gamma_rl)));
        }
        if self.parallel_envs < 1 {
            return Err(invalid("parallel_envs must be >= 1"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("hidden layer widths must be positive"));
        }
        if !(LOG_STD_MIN..=LOG_STD_MAX).contains(&self.init_log_std) {
            return Err(invalid(format!(
                "init_log_std must be in [{LOG_STD_MIN}, {LOG_STD_MAX}] (got {})",
                self.init_log_std
            )));
        }
        if self.ma_window < 1 {
            return Err(invalid("ma_window must be >= 1"));
        }
        Ok(())
    }
}

/// One step of experience as the learners consume it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    /// Pre-squash action, needed for the log-density gradient.
    pub raw: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Actor, critic and the generator that drives exploration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub algorithm: Algorithm,
    pub policy: PolicyParams,
    pub critic: CriticParams,
    pub rng: ChaCha8Rng,
    pub episodes_trained: u64,
    /// Mean return at the end of training; the adaptation baseline.
    pub reference_return: Option<f64>,
}

impl Agent {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        action_limit: f64,
        algorithm: Algorithm,
        cfg: &LearningConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, AGENT_STREAM));
        let policy = PolicyParams::new(obs_dim, &cfg.hidden, act_dim, action_limit, cfg.init_log_std, &mut rng)?;
        let critic =
            CriticParams::new(algorithm.critic_mode(), obs_dim, act_dim, action_limit, &cfg.hidden, &mut rng)?;
        Ok(Self { algorithm, policy, critic, rng, episodes_trained: 0, reference_return: None })
    }

    pub fn for_env<E: Environment + ?Sized>(env: &E, algorithm: Algorithm, cfg: &LearningConfig) -> Result<Self> {
        Self::new(env.observation_dim(), env.action_dim(), env.action_limit(), algorithm, cfg)
    }

    /// Mean action, no exploration.
    pub fn greedy_action(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.policy.mean_action(s)
    }
}

/// Adapts a trained agent to the transducer's evaluation interface.
pub struct AgentPolicy<'a> {
    agent: &'a Agent,
    sampler: Option<ChaCha8Rng>,
}

impl<'a> AgentPolicy<'a> {
    pub fn greedy(agent: &'a Agent) -> Self {
        Self { agent, sampler: None }
    }

    pub fn stochastic(agent: &'a Agent, seed: u64) -> Self {
        Self { agent, sampler: Some(ChaCha8Rng::seed_from_u64(seed)) }
    }
}

impl Policy for AgentPolicy<'_> {
    fn act(&mut self, obs: &Observation) -> Action {
        let s = obs.features();
        let a = match &mut self.sampler {
            Some(rng) => self.agent.policy.sample(&s, rng).map(|p| p.action),
            None => self.agent.greedy_action(&s),
        };
        // Shapes are fixed at construction, so failure here is a logic error.
        let a = a.expect("agent built for the transducer observation shape");
        Action::new([a[0], a[1]])
    }
}
