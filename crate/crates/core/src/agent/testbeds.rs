//! Small environments with known optima for checking the learners.

use serde::{Deserialize, Serialize};

use crate::env::{EnvStep, Environment};
use crate::error::{invalid, Error, Result};

/// One step, constant observation, reward `-(a - target)^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticBandit {
    pub target: f64,
    pub limit: f64,
    pub reward_scale: f64,
    pending: bool,
}

impl Default for QuadraticBandit {
    fn default() -> Self {
        Self { target: 0.3, limit: 1.0, reward_scale: 1.0, pending: false }
    }
}

impl QuadraticBandit {
    pub const OBSERVATION: [f64; 1] = [1.0];

    pub fn new(target: f64, limit: f64, reward_scale: f64) -> Self {
        Self { target, limit, reward_scale, pending: false }
    }
}

impl Environment for QuadraticBandit {
    fn observation_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_limit(&self) -> f64 {
        self.limit
    }

    fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
        self.pending = true;
        Ok(Self::OBSERVATION.to_vec())
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep> {
        if !self.pending {
            return Err(Error::ProtocolViolation("bandit stepped without reset".into()));
        }
        let [a] = action else { return Err(invalid("bandit takes one action component")) };
        self.pending = false;
        let reward = -self.reward_scale * (a - self.target).powi(2);
        Ok(EnvStep { observation: Self::OBSERVATION.to_vec(), reward, done: true, true_metric: reward, observed_metric: reward })
    }
}

/// Two states, two actions (`a >= 0` selects action 1), fixed horizon.
///
/// State 0: action 0 pays 0.1 and stays, action 1 pays 0 and moves to 1.
/// State 1: action 1 pays 1 and stays, action 0 pays 0 and moves to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStateChain {
    pub horizon: usize,
    state: usize,
    t: usize,
}

impl Default for TwoStateChain {
    fn default() -> Self {
        Self { horizon: 10, state: 0, t: 0 }
    }
}

impl TwoStateChain {
    pub const REWARDS: [[f64; 2]; 2] = [[0.1, 0.0], [0.0, 1.0]];
    pub const NEXT: [[usize; 2]; 2] = [[0, 1], [0, 1]];

    pub fn one_hot(state: usize) -> Vec<f64> {
        let mut v = vec![0.0; 2];
        v[state] = 1.0;
        v
    }

    pub fn discrete(action: f64) -> usize {
        usize::from(action >= 0.0)
    }

    /// Discounted return of a deterministic policy from state 0.
    pub fn policy_return(&self, policy: [usize; 2], gamma: f64) -> f64 {
        let (mut s, mut g, mut ret) = (0, 1.0, 0.0);
        for _ in 0..self.horizon {
            let a = policy[s];
            ret += g * Self::REWARDS[s][a];
            s = Self::NEXT[s][a];
            g *= gamma;
        }
        ret
    }

    /// Best of the four deterministic policies by exhaustive enumeration.
    pub fn optimal_policy(&self, gamma: f64) -> [usize; 2] {
        let all = [[0, 0], [0, 1], [1, 0], [1, 1]];
        let mut best = all[0];
        for p in all {
            if self.policy_return(p, gamma) > self.policy_return(best, gamma) {
                best = p;
            }
        }
        best
    }
}

impl Environment for TwoStateChain {
    fn observation_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_limit(&self) -> f64 {
        1.0
    }

    fn reset(&mut self, _seed: u64) -> Result<Vec<f64>> {
        self.state = 0;
        self.t = 0;
        Ok(Self::one_hot(0))
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep> {
        if self.t >= self.horizon {
            return Err(Error::ProtocolViolation("chain stepped after the horizon".into()));
        }
        let [a] = action else { return Err(invalid("chain takes one action component")) };
        let a = Self::discrete(*a);
        let reward = Self::REWARDS[self.state][a];
        self.state = Self::NEXT[self.state][a];
        self.t += 1;
        Ok(EnvStep {
            observation: Self::one_hot(self.state),
            reward,
            done: self.t >= self.horizon,
            true_metric: reward,
            observed_metric: reward,
        })
    }
}
