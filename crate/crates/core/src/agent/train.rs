//! Episode rollouts and the training loop.

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::PolicyParams;
use super::update::{advantage_update, qac_update};
use super::{Agent, Algorithm, Experience, LearningConfig};
use crate::env::{derive_seed, EnvConfig, Environment, TransducerEnv};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub episode: u64,
    pub ret: f64,
    pub final_true: f64,
    pub final_observed: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub config_echo: String,
    pub ma_window: usize,
    pub returns: Vec<f64>,
    pub final_eta: Vec<f64>,
    pub final_observed_eta: Vec<f64>,
    pub moving_average: Vec<f64>,
    /// Environment steps taken up to and including each episode.
    pub cumulative_steps: Vec<u64>,
    pub wall_time_secs: f64,
}

impl TrainingReport {
    pub fn new(algorithm: Algorithm, cfg: &LearningConfig) -> Self {
        Self {
            algorithm,
            seed: cfg.seed,
            config_echo: format!("{cfg:?}"),
            ma_window: cfg.ma_window,
            returns: Vec::new(),
            final_eta: Vec::new(),
            final_observed_eta: Vec::new(),
            moving_average: Vec::new(),
            cumulative_steps: Vec::new(),
            wall_time_secs: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn push(&mut self, o: &EpisodeOutcome) {
        self.returns.push(o.ret);
        self.final_eta.push(o.final_true);
        self.final_observed_eta.push(o.final_observed);
        let from = self.returns.len().saturating_sub(self.ma_window);
        let tail = &self.returns[from..];
        self.moving_average.push(tail.iter().sum::<f64>() / tail.len() as f64);
        let before = self.cumulative_steps.last().copied().unwrap_or(0);
        self.cumulative_steps.push(before + o.steps as u64);
    }

    /// Equality ignoring wall time.
    pub fn same_results(&self, other: &Self) -> bool {
        Self { wall_time_secs: 0.0, ..self.clone() } == Self { wall_time_secs: 0.0, ..other.clone() }
    }
}

/// Trailing mean over at most `window` values.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let tail = &values[(i + 1).saturating_sub(window)..=i];
            tail.iter().sum::<f64>() / tail.len() as f64
        })
        .collect()
}

pub(crate) struct Job {
    pub episode: u64,
    pub env_seed: u64,
    pub sample_seed: u64,
}

fn at_step(err: Error, step: usize) -> Error {
    match err {
        Error::NumericalInstability { detail, .. } => Error::NumericalInstability { step, detail },
        other => other,
    }
}

/// Runs one episode with a fixed policy and records it.
pub(crate) fn rollout<E: Environment + ?Sized>(
    env: &mut E,
    policy: &PolicyParams,
    job: &Job,
) -> Result<(Vec<Experience>, EpisodeOutcome)> {
    let mut rng = ChaCha8Rng::seed_from_u64(job.sample_seed);
    let mut state = env.reset(job.env_seed)?;
    let mut traj = Vec::new();
    let mut ret = 0.0;
    loop {
        let sample = policy.sample(&state, &mut rng)?;
        let st = env.step(&sample.action)?;
        ret += st.reward;
        let done = st.done;
        traj.push(Experience {
            state,
            action: sample.action,
            raw: sample.raw,
            reward: st.reward,
            next_state: st.observation.clone(),
            done,
        });
        if done {
            let outcome = EpisodeOutcome {
                episode: job.episode,
                ret,
                final_true: st.true_metric,
                final_observed: st.observed_metric,
                steps: traj.len(),
            };
            return Ok((traj, outcome));
        }
        state = st.observation;
    }
}

/// Q actor-critic with an update after every step, on the live parameters.
pub(crate) fn rollout_online_qac<E: Environment + ?Sized>(
    env: &mut E,
    agent: &mut Agent,
    cfg: &LearningConfig,
    job: &Job,
) -> Result<EpisodeOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(job.sample_seed);
    let mut state = env.reset(job.env_seed)?;
    let mut current = agent.policy.sample(&state, &mut rng)?;
    let mut ret = 0.0;
    let mut steps = 0;
    loop {
        let st = env.step(&current.action)?;
        ret += st.reward;
        let next = if st.done { None } else { Some(agent.policy.sample(&st.observation, &mut rng)?) };
        let zeros = vec![0.0; current.action.len()];
        let next_action = next.as_ref().map_or(&zeros, |n| &n.action);
        let t = Experience {
            state,
            action: current.action,
            raw: current.raw,
            reward: st.reward,
            next_state: st.observation.clone(),
            done: st.done,
        };
        qac_update(&mut agent.policy, &mut agent.critic, &t, next_action, cfg).map_err(|e| at_step(e, steps))?;
        steps += 1;
        match next {
            Some(n) => {
                current = n;
                state = st.observation;
            }
            None => {
                return Ok(EpisodeOutcome {
                    episode: job.episode,
                    ret,
                    final_true: st.true_metric,
                    final_observed: st.observed_metric,
                    steps,
                })
            }
        }
    }
}

/// Applies a finished trajectory to the agent. The Q actor-critic replays
/// it step by step, bootstrapping from the recorded next action.
pub(crate) fn apply_trajectory(agent: &mut Agent, traj: &[Experience], cfg: &LearningConfig) -> Result<()> {
    match agent.algorithm {
        Algorithm::Advantage => advantage_update(traj, &mut agent.policy, &mut agent.critic, cfg).map(|_| ()),
        Algorithm::Qac => {
            let zeros = vec![0.0; agent.policy.action_dim()];
            for (k, t) in traj.iter().enumerate() {
                let next = traj.get(k + 1).map_or(&zeros, |n| &n.action);
                qac_update(&mut agent.policy, &mut agent.critic, t, next, cfg).map_err(|e| at_step(e, k))?;
            }
            Ok(())
        }
    }
}

pub(crate) fn next_job(agent: &mut Agent, seed: u64, episode: u64) -> Job {
    Job { episode, env_seed: derive_seed(seed, episode), sample_seed: agent.rng.next_u64() }
}

/// Continues training `agent` for `episodes` more episodes on `envs`, one
/// rollout per environment per round. Trajectories from a round are
/// applied in environment order, so results do not depend on scheduling.
pub fn train_on<E: Environment + Send>(
    envs: &mut [E],
    agent: &mut Agent,
    cfg: &LearningConfig,
    episodes: usize,
    report: &mut TrainingReport,
) -> Result<()> {
    cfg.validate()?;
    if envs.is_empty() {
        return Err(invalid("training needs at least one environment"));
    }
    let started = Instant::now();
    let online = agent.algorithm == Algorithm::Qac && envs.len() == 1;
    let mut remaining = episodes;
    while remaining > 0 {
        let n = remaining.min(envs.len());
        let jobs: Vec<Job> =
            (0..n as u64).map(|k| next_job(agent, cfg.seed, agent.episodes_trained + k)).collect();
        if online {
            let outcome = rollout_online_qac(&mut envs[0], agent, cfg, &jobs[0])?;
            report.push(&outcome);
            agent.episodes_trained += 1;
        } else {
            let snapshot = agent.policy.clone();
            let results: Vec<_> = envs[..n]
                .par_iter_mut()
                .zip(jobs.par_iter())
                .map(|(env, job)| rollout(env, &snapshot, job))
                .collect();
            for r in results {
                let (traj, outcome) = r?;
                apply_trajectory(agent, &traj, cfg)?;
                report.push(&outcome);
                agent.episodes_trained += 1;
            }
        }
        remaining -= n;
    }
    if !report.is_empty() {
        let from = report.len().saturating_sub(cfg.ma_window);
        let tail = &report.returns[from..];
        agent.reference_return = Some(tail.iter().sum::<f64>() / tail.len() as f64);
    }
    report.wall_time_secs += started.elapsed().as_secs_f64();
    Ok(())
}

/// Trains a fresh agent on `parallel_envs` copies of the transducer.
pub fn train(env_cfg: &EnvConfig, cfg: &LearningConfig, algorithm: Algorithm) -> Result<(Agent, TrainingReport)> {
    env_cfg.validate()?;
    let mut envs =
        (0..cfg.parallel_envs.max(1)).map(|_| TransducerEnv::new(env_cfg.clone())).collect::<Result<Vec<_>>>()?;
    let mut agent = Agent::for_env(&envs[0], algorithm, cfg)?;
    let mut report = TrainingReport::new(algorithm, cfg);
    train_on(&mut envs, &mut agent, cfg, cfg.episodes, &mut report)?;
    Ok((agent, report))
}
