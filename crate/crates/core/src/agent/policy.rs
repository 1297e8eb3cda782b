//! Squashed-Gaussian actor and the critic networks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::MlpParams;
use crate::error::{invalid, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(1 - tanh(u)^2)` without cancellation for large `|u|`.
fn log_sech2(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Gaussian in an unbounded space, squashed by `limit * tanh(.)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub trunk: MlpParams,
    pub log_std: Vec<f64>,
    pub action_limit: f64,
}

/// A drawn action with its pre-squash value and exact log-density.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub action: Vec<f64>,
    pub raw: Vec<f64>,
    pub log_prob: f64,
}

/// Gradient of `log pi(a|s)` with respect to the policy parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradient {
    pub trunk: MlpParams,
    pub log_std: Vec<f64>,
}

impl PolicyGradient {
    pub fn zeros_like(p: &PolicyParams) -> Self {
        Self { trunk: p.trunk.zeros_like(), log_std: vec![0.0; p.log_std.len()] }
    }

    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        self.trunk.add_scaled(&other.trunk, scale);
        for (a, b) in self.log_std.iter_mut().zip(&other.log_std) {
            *a += scale * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.trunk.is_finite() && self.log_std.iter().all(|v| v.is_finite())
    }
}

impl PolicyParams {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        act_dim: usize,
        action_limit: f64,
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(action_limit > 0.0) || !action_limit.is_finite() {
            return Err(invalid(format!("action limit must be positive (got {action_limit})")));
        }
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(act_dim);
        let trunk = MlpParams::new(&sizes, rng)?;
        let log_std = vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); act_dim];
        Ok(Self { trunk, log_std, action_limit })
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    /// Pre-squash mean.
    pub fn mean(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.trunk.forward(s)
    }

    /// Squashed mean, the deterministic action.
    pub fn mean_action(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.mean(s)?.into_iter().map(|m| self.action_limit * m.tanh()).collect())
    }

    pub fn squash(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().map(|u| self.action_limit * u.tanh()).collect()
    }

    /// Log-density of the squashed action whose pre-squash value is `raw`.
    pub fn log_prob(&self, s: &[f64], raw: &[f64]) -> Result<f64> {
        let mu = self.mean(s)?;
        self.check_raw(raw)?;
        Ok(self.log_prob_given_mean(&mu, raw))
    }

    /// Log-density at a squashed action strictly inside the bounds.
    pub fn log_prob_action(&self, s: &[f64], action: &[f64]) -> Result<f64> {
        if action.iter().any(|a| a.abs() >= self.action_limit) {
            return Err(invalid("action must lie strictly inside the bounds"));
        }
        let raw: Vec<f64> = action.iter().map(|a| (a / self.action_limit).atanh()).collect();
        self.log_prob(s, &raw)
    }

    fn check_raw(&self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.action_dim() {
            return Err(invalid(format!("expected {} action components, got {}", self.action_dim(), raw.len())));
        }
        Ok(())
    }

    fn log_prob_given_mean(&self, mu: &[f64], raw: &[f64]) -> f64 {
        let ln_limit = self.action_limit.ln();
        mu.iter()
            .zip(raw)
            .zip(&self.log_std)
            .map(|((m, u), ls)| {
                let z = (u - m) / ls.exp();
                -0.5 * z * z - ls - HALF_LN_2PI - ln_limit - log_sech2(*u)
            })
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<PolicySample> {
        let mu = self.mean(s)?;
        let raw: Vec<f64> = mu
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let xi: f64 = StandardNormal.sample(rng);
                m + ls.exp() * xi
            })
            .collect();
        let log_prob = self.log_prob_given_mean(&mu, &raw);
        Ok(PolicySample { action: self.squash(&raw), raw, log_prob })
    }

    /// `grad log pi(a|s)`. The squashing term does not depend on the
    /// parameters once the pre-squash value is fixed.
    pub fn log_prob_gradient(&self, s: &[f64], raw: &[f64]) -> Result<PolicyGradient> {
        self.check_raw(raw)?;
        let mu = self.mean(s)?;
        let mut d_mu = Vec::with_capacity(mu.len());
        let mut d_log_std = Vec::with_capacity(mu.len());
        for ((m, u), ls) in mu.iter().zip(raw).zip(&self.log_std) {
            let var = (2.0 * ls).exp();
            let diff = u - m;
            d_mu.push(diff / var);
            d_log_std.push(diff * diff / var - 1.0);
        }
        Ok(PolicyGradient { trunk: self.trunk.gradient(s, &d_mu)?, log_std: d_log_std })
    }

    /// `theta += scale * grad`, then re-clamps the log standard deviations.
    pub fn apply(&mut self, grad: &PolicyGradient, scale: f64) {
        self.trunk.add_scaled(&grad.trunk, scale);
        for (ls, g) in self.log_std.iter_mut().zip(&grad.log_std) {
            *ls = (*ls + scale * g).clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.trunk.is_finite() && self.log_std.iter().all(|v| v.is_finite())
    }
}

/// Draws `a ~ pi(.|s)`.
pub fn policy_sample<R: Rng + ?Sized>(theta: &PolicyParams, s: &[f64], rng: &mut R) -> Result<PolicySample> {
    theta.sample(s, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticMode {
    /// `Q(s, a)`; the action enters scaled by the action limit.
    ActionValue,
    /// `V(s)`.
    StateValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticParams {
    pub trunk: MlpParams,
    pub mode: CriticMode,
    pub action_limit: f64,
}

impl CriticParams {
    pub fn new<R: Rng + ?Sized>(
        mode: CriticMode,
        obs_dim: usize,
        act_dim: usize,
        action_limit: f64,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let input = match mode {
            CriticMode::ActionValue => obs_dim + act_dim,
            CriticMode::StateValue => obs_dim,
        };
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(Self { trunk: MlpParams::new(&sizes, rng)?, mode, action_limit })
    }

    fn input(&self, s: &[f64], a: Option<&[f64]>) -> Result<Vec<f64>> {
        match (self.mode, a) {
            (CriticMode::StateValue, _) => Ok(s.to_vec()),
            (CriticMode::ActionValue, Some(a)) => {
                Ok(s.iter().copied().chain(a.iter().map(|x| x / self.action_limit)).collect())
            }
            (CriticMode::ActionValue, None) => Err(invalid("action-value critic needs an action")),
        }
    }

    pub fn value(&self, s: &[f64], a: Option<&[f64]>) -> Result<f64> {
        Ok(self.trunk.forward(&self.input(s, a)?)?[0])
    }

    /// `(grad_w value, value)`.
    pub fn gradient(&self, s: &[f64], a: Option<&[f64]>) -> Result<(MlpParams, f64)> {
        let (g, out) = self.trunk.gradient_with_output(&self.input(s, a)?, &[1.0])?;
        Ok((g, out[0]))
    }
}
