//! Single-transition Q actor-critic step and the per-episode advantage step.

use super::policy::{CriticParams, PolicyGradient, PolicyParams};
use super::{Experience, LearningConfig};
use crate::error::{invalid, Error, Result};

fn unstable(step: usize, detail: impl Into<String>) -> Error {
    Error::NumericalInstability { step, detail: detail.into() }
}

/// One step of the Q actor-critic. `next_action` is the squashed action
/// drawn from the current policy at `t.next_state`. Returns the TD error.
pub fn qac_update(
    theta: &mut PolicyParams,
    w: &mut CriticParams,
    t: &Experience,
    next_action: &[f64],
    cfg: &LearningConfig,
) -> Result<f64> {
    let (grad_q, q_sa) = w.gradient(&t.state, Some(&t.action))?;
    let q_next = if t.done { 0.0 } else { w.value(&t.next_state, Some(next_action))? };
    let td = t.reward + cfg.gamma_rl * q_next - q_sa;
    let grad_log_pi = theta.log_prob_gradient(&t.state, &t.raw)?;
    if !td.is_finite() || !grad_q.is_finite() || !grad_log_pi.is_finite() {
        return Err(unstable(0, format!("non-finite qac quantities: td={td}, Q(s,a)={q_sa}")));
    }
    theta.apply(&grad_log_pi, cfg.alpha_theta * q_sa);
    w.trunk.add_scaled(&grad_q, cfg.alpha_w * td);
    Ok(td)
}

/// Advantage-weighted policy gradient over a whole episode, with a
/// semi-gradient TD fit of the state-value critic. Both updates use the
/// parameters as they were before the call. Returns the advantages.
pub fn advantage_update(
    trajectory: &[Experience],
    theta: &mut PolicyParams,
    v: &mut CriticParams,
    cfg: &LearningConfig,
) -> Result<Vec<f64>> {
    if trajectory.is_empty() {
        return Err(invalid("advantage update needs a non-empty trajectory"));
    }
    let mut actor = PolicyGradient::zeros_like(theta);
    let mut critic = v.trunk.zeros_like();
    let mut advantages = Vec::with_capacity(trajectory.len());
    for (k, t) in trajectory.iter().enumerate() {
        let (grad_v, v_s) = v.gradient(&t.state, None)?;
        let v_next = if t.done { 0.0 } else { v.value(&t.next_state, None)? };
        let adv = t.reward + cfg.gamma_rl * v_next - v_s;
        let grad_log_pi = theta.log_prob_gradient(&t.state, &t.raw)?;
        if !adv.is_finite() || !grad_v.is_finite() || !grad_log_pi.is_finite() {
            return Err(unstable(k, format!("non-finite advantage quantities: A={adv}, V(s)={v_s}")));
        }
        actor.add_scaled(&grad_log_pi, adv);
        // The advantage is also the TD error of the critic.
        critic.add_scaled(&grad_v, adv);
        advantages.push(adv);
    }
    theta.apply(&actor, cfg.alpha_theta);
    v.trunk.add_scaled(&critic, cfg.alpha_w);
    Ok(advantages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::policy::CriticMode;
    use crate::agent::MlpParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn actor(seed: u64) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PolicyParams::new(2, &[6], 1, 1.0, -0.5, &mut rng).unwrap()
    }

    /// Critic whose output is exactly `c` everywhere.
    fn constant_critic(mode: CriticMode, c: f64) -> CriticParams {
        let input = if mode == CriticMode::ActionValue { 3 } else { 2 };
        let mut trunk = MlpParams::zeros(&[input, 4, 1]).unwrap();
        trunk.layers[1].biases[0] = c;
        CriticParams { trunk, mode, action_limit: 1.0 }
    }

    fn exp(reward: f64, done: bool) -> Experience {
        Experience {
            state: vec![0.2, -0.1],
            action: vec![0.4f64.tanh()],
            raw: vec![0.4],
            reward,
            next_state: vec![0.3, 0.0],
            done,
        }
    }

    fn cfg(alpha_theta: f64, alpha_w: f64, gamma: f64) -> LearningConfig {
        LearningConfig { alpha_theta, alpha_w, gamma_rl: gamma, ..Default::default() }
    }

    #[test]
    fn td_error_by_hand() {
        let mut th = actor(0);
        let mut w = constant_critic(CriticMode::ActionValue, 2.0);
        let td = qac_update(&mut th, &mut w, &exp(1.0, false), &[0.1], &cfg(0.0, 0.0, 0.9)).unwrap();
        assert!((td - 0.8).abs() < 1e-12);
    }

    #[test]
    fn terminal_transition_has_no_bootstrap() {
        let mut th = actor(0);
        let mut w = constant_critic(CriticMode::ActionValue, 0.5);
        let td = qac_update(&mut th, &mut w, &exp(0.5, true), &[0.1], &cfg(0.0, 0.0, 0.9)).unwrap();
        assert_eq!(td, 0.0);
    }

    #[test]
    fn zero_rates_leave_parameters_unchanged() {
        let mut th = actor(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut w = CriticParams::new(CriticMode::ActionValue, 2, 1, 1.0, &[5], &mut rng).unwrap();
        let (th0, w0) = (th.clone(), w.clone());
        qac_update(&mut th, &mut w, &exp(1.0, false), &[0.2], &cfg(0.0, 0.0, 0.9)).unwrap();
        assert_eq!((th, w), (th0, w0));
    }

    #[test]
    fn positive_q_raises_log_prob() {
        let t = exp(1.0, false);
        let mut th = actor(3);
        let before = th.log_prob(&t.state, &t.raw).unwrap();
        let mut w = constant_critic(CriticMode::ActionValue, 1.5);
        qac_update(&mut th, &mut w, &t, &[0.0], &cfg(1e-4, 0.0, 0.9)).unwrap();
        assert!(th.log_prob(&t.state, &t.raw).unwrap() > before);
    }

    #[test]
    fn critic_moves_toward_target() {
        let t = exp(1.0, true);
        let mut th = actor(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut w = CriticParams::new(CriticMode::ActionValue, 2, 1, 1.0, &[5], &mut rng).unwrap();
        let err = |w: &CriticParams| (w.value(&t.state, Some(&t.action)).unwrap() - 1.0).abs();
        let e0 = err(&w);
        qac_update(&mut th, &mut w, &t, &[0.0], &cfg(0.0, 1e-2, 0.9)).unwrap();
        assert!(err(&w) < e0);
    }

    #[test]
    fn non_finite_reward_is_reported() {
        let mut th = actor(0);
        let mut w = constant_critic(CriticMode::ActionValue, 0.0);
        let err = qac_update(&mut th, &mut w, &exp(f64::NAN, false), &[0.0], &cfg(1e-3, 1e-3, 0.9)).unwrap_err();
        assert!(matches!(err, Error::NumericalInstability { .. }));
        let mut v = constant_critic(CriticMode::StateValue, 0.0);
        let err = advantage_update(&[exp(f64::INFINITY, true)], &mut th, &mut v, &cfg(1e-3, 1e-3, 0.9)).unwrap_err();
        assert!(matches!(err, Error::NumericalInstability { .. }));
    }

    #[test]
    fn empty_trajectory_rejected() {
        let mut th = actor(0);
        let mut v = constant_critic(CriticMode::StateValue, 0.0);
        assert!(matches!(advantage_update(&[], &mut th, &mut v, &cfg(1e-3, 1e-3, 0.9)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn null_signal_leaves_actor_unchanged() {
        let mut th = actor(6);
        let th0 = th.clone();
        let mut v = constant_critic(CriticMode::StateValue, 0.0);
        let traj: Vec<_> = (0..5).map(|k| exp(0.0, k == 4)).collect();
        let adv = advantage_update(&traj, &mut th, &mut v, &cfg(0.1, 0.1, 0.9)).unwrap();
        assert!(adv.iter().all(|&a| a == 0.0));
        assert_eq!(th, th0);
    }

    #[test]
    fn single_step_actor_gradient_is_log_prob_gradient() {
        let t = exp(1.0, true);
        let mut th = actor(7);
        let th0 = th.clone();
        let mut v = constant_critic(CriticMode::StateValue, 0.0);
        let alpha = 1e-3;
        advantage_update(std::slice::from_ref(&t), &mut th, &mut v, &cfg(alpha, 0.0, 0.9)).unwrap();
        let g = th0.log_prob_gradient(&t.state, &t.raw).unwrap();
        let mut expected = th0.clone();
        expected.apply(&g, alpha);
        for (a, b) in th.trunk.params().zip(expected.trunk.params()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(th.log_std, expected.log_std);
    }

    #[test]
    fn advantage_vanishes_at_critic_fixed_point() {
        // One state, reward 1, no discount: V converges to 1 and A to 0.
        let mut th = actor(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut v = CriticParams::new(CriticMode::StateValue, 2, 1, 1.0, &[4], &mut rng).unwrap();
        let t = Experience { next_state: vec![0.2, -0.1], ..exp(1.0, false) };
        let mut adv = vec![f64::NAN];
        for _ in 0..2000 {
            adv = advantage_update(std::slice::from_ref(&t), &mut th, &mut v, &cfg(0.0, 0.05, 0.0)).unwrap();
        }
        assert!(adv[0].abs() < 1e-6, "advantage {}", adv[0]);
        assert!((v.value(&t.state, None).unwrap() - 1.0).abs() < 1e-6);
    }
}
