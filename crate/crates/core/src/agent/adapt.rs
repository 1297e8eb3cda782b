//! Online adaptation: watch the return, fine-tune in short bursts when it sags.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::train::{apply_trajectory, next_job, rollout, rollout_online_qac, EpisodeOutcome};
use super::{Agent, Algorithm, LearningConfig};
use crate::env::{derive_seed, Environment};
use crate::error::{invalid, Error, Result};

/// Keeps adaptation episodes on seeds disjoint from training.
const ADAPT_STREAM: u64 = 0xADA9_0000_0000_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerConfig {
    pub window: usize,
    /// Fire when the moving average falls below `(1 - drop_fraction)` of
    /// the reference return. `1.0` or more disables the trigger.
    pub drop_fraction: f64,
    pub burst_episodes: usize,
    /// Minimum episodes between the starts of two bursts.
    pub min_episodes_between_bursts: usize,
    /// Optional real-time gate between bursts, for live runs.
    pub min_seconds_between_bursts: Option<f64>,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        Self {
            window: 20,
            drop_fraction: 0.2,
            burst_episodes: 10,
            min_episodes_between_bursts: 50,
            min_seconds_between_bursts: None,
        }
    }
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(invalid("window must be >= 1"));
        }
        if !(self.drop_fraction >= 0.0) {
            return Err(invalid(format!("drop_fraction must be >= 0 (got {})", self.drop_fraction)));
        }
        if self.burst_episodes < 1 {
            return Err(invalid("burst_episodes must be >= 1"));
        }
        if let Some(s) = self.min_seconds_between_bursts {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(invalid(format!("min_seconds_between_bursts must be >= 0 (got {s})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Burst {
    /// Episode after which the trigger fired.
    pub trigger_episode: usize,
    pub first_episode: usize,
    pub last_episode: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    pub reference_return: f64,
    pub returns: Vec<f64>,
    pub final_eta: Vec<f64>,
    pub final_observed_eta: Vec<f64>,
    pub moving_average: Vec<f64>,
    /// Whether each episode updated the agent.
    pub learning: Vec<bool>,
    pub bursts: Vec<Burst>,
}

impl AdaptationReport {
    /// Mean return over `range`, clipped to the episodes that ran.
    pub fn mean_return(&self, range: std::ops::Range<usize>) -> Option<f64> {
        let end = range.end.min(self.returns.len());
        let tail = self.returns.get(range.start..end)?;
        (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

/// Runs `episodes` episodes on `env`. Episodes outside bursts use the
/// stochastic policy without learning; burst episodes train as usual.
pub fn adapt_online<E: Environment + ?Sized>(
    agent: &mut Agent,
    env: &mut E,
    trigger: &TriggerConfig,
    cfg: &LearningConfig,
    episodes: usize,
) -> Result<AdaptationReport> {
    trigger.validate()?;
    cfg.validate()?;
    let reference = agent
        .reference_return
        .ok_or_else(|| Error::Precondition("agent has no reference return; train it first".into()))?;
    let threshold = (1.0 - trigger.drop_fraction) * reference;
    let enabled = trigger.drop_fraction < 1.0;
    let seed = derive_seed(cfg.seed, ADAPT_STREAM);

    let mut report = AdaptationReport {
        reference_return: reference,
        returns: Vec::with_capacity(episodes),
        final_eta: Vec::with_capacity(episodes),
        final_observed_eta: Vec::with_capacity(episodes),
        moving_average: Vec::with_capacity(episodes),
        learning: Vec::with_capacity(episodes),
        bursts: Vec::new(),
    };
    let mut burst_left = 0usize;
    let mut last_burst_wall: Option<Instant> = None;

    for e in 0..episodes {
        let job = next_job(agent, seed, e as u64);
        let learning = burst_left > 0;
        let outcome: EpisodeOutcome = if !learning {
            rollout(env, &agent.policy, &job)?.1
        } else if agent.algorithm == Algorithm::Qac {
            rollout_online_qac(env, agent, cfg, &job)?
        } else {
            let (traj, outcome) = rollout(env, &agent.policy, &job)?;
            apply_trajectory(agent, &traj, cfg)?;
            outcome
        };
        if learning {
            burst_left -= 1;
            agent.episodes_trained += 1;
        }
        report.returns.push(outcome.ret);
        report.final_eta.push(outcome.final_true);
        report.final_observed_eta.push(outcome.final_observed);
        report.learning.push(learning);
        let from = report.returns.len().saturating_sub(trigger.window);
        let tail = &report.returns[from..];
        let ma = tail.iter().sum::<f64>() / tail.len() as f64;
        report.moving_average.push(ma);

        let spaced = report
            .bursts
            .last()
            .is_none_or(|b| e + 1 - b.first_episode >= trigger.min_episodes_between_bursts);
        let wall_ok = match (trigger.min_seconds_between_bursts, last_burst_wall) {
            (Some(s), Some(t)) => t.elapsed() >= Duration::from_secs_f64(s),
            _ => true,
        };
        if enabled && burst_left == 0 && tail.len() >= trigger.window && ma < threshold && spaced && wall_ok {
            burst_left = trigger.burst_episodes;
            last_burst_wall = Some(Instant::now());
            report.bursts.push(Burst {
                trigger_episode: e,
                first_episode: e + 1,
                last_episode: e + trigger.burst_episodes,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::testbeds::QuadraticBandit;
    use crate::agent::{train_on, TrainingReport};

    fn trained_bandit_agent() -> (Agent, LearningConfig) {
        let cfg = LearningConfig { parallel_envs: 1, seed: 2, alpha_theta: 0.05, alpha_w: 0.05, ..Default::default() };
        let mut envs = [QuadraticBandit::default()];
        let mut agent = Agent::for_env(&envs[0], Algorithm::Advantage, &cfg).unwrap();
        let mut report = TrainingReport::new(Algorithm::Advantage, &cfg);
        train_on(&mut envs, &mut agent, &cfg, 300, &mut report).unwrap();
        (agent, cfg)
    }

    #[test]
    fn untrained_agent_is_rejected() {
        let cfg = LearningConfig::default();
        let mut env = QuadraticBandit::default();
        let mut agent = Agent::for_env(&env, Algorithm::Advantage, &cfg).unwrap();
        let err = adapt_online(&mut agent, &mut env, &TriggerConfig::default(), &cfg, 5).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn disabled_threshold_never_fires() {
        let (mut agent, cfg) = trained_bandit_agent();
        // Shift the optimum so the return collapses.
        let mut env = QuadraticBandit::new(-0.9, 1.0, 1.0);
        let trig = TriggerConfig { drop_fraction: 1.0, ..Default::default() };
        let report = adapt_online(&mut agent, &mut env, &trig, &cfg, 200).unwrap();
        assert!(report.bursts.is_empty());
        assert!(report.learning.iter().all(|l| !l));
    }

    #[test]
    fn bursts_respect_spacing() {
        let (mut agent, cfg) = trained_bandit_agent();
        // Bandit returns are negative; a big shift still pushes the average down.
        agent.reference_return = Some(agent.reference_return.unwrap().abs().max(1e-3));
        let mut env = QuadraticBandit::new(-0.9, 1.0, 1.0);
        let report = adapt_online(&mut agent, &mut env, &TriggerConfig::default(), &cfg, 200).unwrap();
        assert!(!report.bursts.is_empty());
        for w in report.bursts.windows(2) {
            assert!(w[1].first_episode - w[0].first_episode >= 50);
        }
        assert_eq!(report.learning.iter().filter(|&&l| l).count(), 10 * report.bursts.len());
    }
}
