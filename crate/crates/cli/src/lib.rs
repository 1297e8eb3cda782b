//! Command-line front end: config loading, runs, CSV export and checkpoints.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod metrics;

use std::error::Error;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use transducer_core::agent::{adapt_online, train_on, Agent, AgentPolicy, Algorithm, TrainingReport};
use transducer_core::env::{
    evaluate_on, evaluate_policy, grid_search_optimum, OraclePolicy, RandomPolicy, TransducerEnv,
};
use transducer_core::lindblad::{beam_splitter_liouvillian, steady_state};
use transducer_core::quantum::{MECHANICAL, MICROWAVE, OPTICAL};
use transducer_core::scattering::{added_noise_quanta, spectral_efficiency};

use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use config::{load_config, RunConfig};

/// Output directory override, below `--out` in precedence.
pub const OUT_DIR_ENV: &str = "TRANSDUCER_OUT_DIR";

type RunResult<T> = Result<T, Box<dyn Error>>;

/// Bad invocation detected after argument parsing; exits with code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(name = "transducer", version, about = "Simulate and tune an optomechanical transducer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured algorithm.
    #[arg(long, value_parser = ["qac", "advantage"])]
    algorithm: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Efficiency versus detuning and versus pump strengths.
    Sweep(Common),
    /// Steady-state diagnostics of the master equation.
    Steady(Common),
    /// Train an agent.
    Train {
        #[command(flatten)]
        common: Common,
        /// Where to write the checkpoint (default: <out>/checkpoint.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue from a checkpoint written with the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop once this many episodes are complete.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Evaluate a trained agent against baselines.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
    },
    /// Run online adaptation under the configured drift.
    Adapt {
        #[command(flatten)]
        common: Common,
        /// Start from this agent instead of training one first.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

/// Parses `argv` and runs the command. Returns the process exit code:
/// 0 on success, 1 on runtime failure, 2 on usage errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(dir) => {
            eprintln!("wrote results to {}", dir.display());
            0
        }
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> RunResult<PathBuf> {
    match cmd {
        Command::Sweep(c) => Run::new(&c)?.sweep(),
        Command::Steady(c) => Run::new(&c)?.steady(),
        Command::Train { common, checkpoint, resume, stop_after } => {
            Run::new(&common)?.train(checkpoint, resume, stop_after)
        }
        Command::Evaluate { common, checkpoint, episodes } => Run::new(&common)?.evaluate(&checkpoint, episodes),
        Command::Adapt { common, checkpoint } => Run::new(&common)?.adapt(checkpoint),
    }
}

/// Config with overrides applied, plus where to write.
pub fn resolve_config(
    config: Option<&Path>,
    seed: Option<u64>,
    algorithm: Option<&str>,
) -> RunResult<RunConfig> {
    let mut cfg = match (config, seed) {
        (Some(path), _) => load_config(path)?,
        (None, Some(seed)) => RunConfig::with_seed(seed),
        (None, None) => return Err(UsageError("either --config or --seed is required".into()).into()),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(alg) = algorithm {
        cfg.learning.algorithm = alg.parse::<Algorithm>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn resolve_out_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output.dir.clone())
}

struct Run {
    cfg: RunConfig,
    hash: String,
    out: PathBuf,
}

impl Run {
    fn new(c: &Common) -> RunResult<Self> {
        let cfg = resolve_config(c.config.as_deref(), c.seed, c.algorithm.as_deref())?;
        let hash = cfg.hash()?;
        let out = resolve_out_dir(c.out.as_deref(), &cfg);
        std::fs::create_dir_all(&out)?;
        Ok(Self { cfg, hash, out })
    }

    fn write(&self, name: &str, contents: &str) -> RunResult<()> {
        std::fs::write(self.out.join(name), contents)?;
        Ok(())
    }

    fn summary(&self, command: &str, body: serde_json::Value) -> RunResult<()> {
        let doc = json!({
            "command": command,
            "seed": self.cfg.seed,
            "config_hash": self.hash,
            "config": self.cfg.to_toml()?,
            "results": body,
        });
        self.write("summary.json", &serde_json::to_string_pretty(&doc)?)
    }

    fn sweep(self) -> RunResult<PathBuf> {
        let p = self.cfg.transducer.params();
        let s = &self.cfg.sweep;
        let half = (s.omega_points - 1) as f64;
        let mut omega_csv = String::from("omega,eta,added_noise\n");
        for k in 0..s.omega_points {
            // Numerator is exactly zero at the centre of the grid.
            let omega = s.omega_span * (2.0 * k as f64 - half) / half;
            let eta = spectral_efficiency(&p, omega)?;
            let noise = added_noise_quanta(&p, omega)?;
            writeln!(omega_csv, "{omega},{eta},{noise}")?;
        }
        let env_cfg = self.cfg.env_config();
        let axis = |k: usize| -1.0 + 2.0 * k as f64 / (s.pump_points - 1) as f64;
        let mut pump_csv = String::from("actuator_1,actuator_2,n_pump_1,n_pump_2,c1,c2,eta\n");
        for i in 0..s.pump_points {
            for j in 0..s.pump_points {
                let a = [axis(i), axis(j)];
                let q = env_cfg.params_at(&p, a);
                let c = q.cooperativities()?;
                let eta = spectral_efficiency(&q, 0.0)?;
                writeln!(pump_csv, "{},{},{},{},{},{},{eta}", a[0], a[1], q.n_pump[0], q.n_pump[1], c.c1, c.c2)?;
            }
        }
        self.write("sweep_omega.csv", &metrics::with_provenance(&omega_csv, self.cfg.seed, &self.hash))?;
        self.write("sweep_pump.csv", &metrics::with_provenance(&pump_csv, self.cfg.seed, &self.hash))?;
        let opt = grid_search_optimum(&env_cfg, &p, s.pump_points)?;
        self.summary(
            "sweep",
            json!({
                "efficiency_on_resonance": p.efficiency()?,
                "cooperativities": p.cooperativities()?,
                "grid_optimum": opt,
            }),
        )?;
        Ok(self.out)
    }

    fn steady(self) -> RunResult<PathBuf> {
        let p = self.cfg.transducer.params();
        let space = self.cfg.transducer.mode_space()?;
        let l = beam_splitter_liouvillian(&p, &space)?;
        let rho = steady_state(&l, &space)?;
        let rows = [
            ("mean_number_microwave", rho.mean_number(MICROWAVE)?),
            ("mean_number_optical", rho.mean_number(OPTICAL)?),
            ("mean_number_mechanical", rho.mean_number(MECHANICAL)?),
            ("purity", rho.purity()),
            ("min_eigenvalue", rho.min_eigenvalue()),
            ("trace", rho.matrix().trace().re),
        ];
        let mut csv = String::from("quantity,value\n");
        for (name, v) in rows {
            writeln!(csv, "{name},{v}")?;
        }
        self.write("steady.csv", &metrics::with_provenance(&csv, self.cfg.seed, &self.hash))?;
        let body: serde_json::Map<_, _> = rows.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
        self.summary("steady", serde_json::Value::Object(body))?;
        Ok(self.out)
    }

    fn envs(&self) -> RunResult<Vec<TransducerEnv>> {
        let mut env_cfg = self.cfg.env_config();
        env_cfg.drift = self.cfg.drift_spec();
        let n = self.cfg.learning.parallel_envs;
        Ok((0..n).map(|_| TransducerEnv::new(env_cfg.clone())).collect::<Result<_, _>>()?)
    }

    fn checkpoint(&self, agent: &Agent, report: &TrainingReport) -> RunResult<Checkpoint> {
        Ok(Checkpoint {
            seed: self.cfg.seed,
            config_hash: self.hash.clone(),
            config_echo: self.cfg.to_toml()?,
            agent: agent.clone(),
            report: report.clone(),
        })
    }

    fn train(
        self,
        checkpoint: Option<PathBuf>,
        resume: Option<PathBuf>,
        stop_after: Option<usize>,
    ) -> RunResult<PathBuf> {
        let lcfg = self.cfg.learning_config();
        let mut envs = self.envs()?;
        let (mut agent, mut report) = match &resume {
            Some(path) => {
                let ck = load_checkpoint(path)?;
                if ck.config_hash != self.hash {
                    return Err(format!("checkpoint {} was written for a different config", path.display()).into());
                }
                (ck.agent, ck.report)
            }
            None => {
                let alg = self.cfg.learning.algorithm;
                (Agent::for_env(&envs[0], alg, &lcfg)?, TrainingReport::new(alg, &lcfg))
            }
        };
        let target = lcfg.episodes;
        let stop = stop_after.unwrap_or(target).min(target);
        if !stop.is_multiple_of(lcfg.parallel_envs) && stop != target {
            let msg = format!("--stop-after must be a multiple of parallel_envs ({})", lcfg.parallel_envs);
            return Err(UsageError(msg).into());
        }
        let done = agent.episodes_trained as usize;
        train_on(&mut envs, &mut agent, &lcfg, stop.saturating_sub(done), &mut report)?;

        let rows = metrics::training_rows(&report);
        self.write("metrics.csv", &metrics::metrics_csv(&rows, self.cfg.seed, &self.hash))?;
        let ck_path = checkpoint.unwrap_or_else(|| self.out.join("checkpoint.ckpt"));
        save_checkpoint(&self.checkpoint(&agent, &report)?, &ck_path)?;
        let tail = report.final_eta.len().saturating_sub(100);
        let last = &report.final_eta[tail..];
        self.summary(
            "train",
            json!({
                "algorithm": report.algorithm,
                "episodes_completed": report.len(),
                "episodes_target": target,
                "mean_final_eta_last_100": (!last.is_empty()).then(|| last.iter().sum::<f64>() / last.len() as f64),
                "final_ma_return": report.moving_average.last(),
                "reference_return": agent.reference_return,
                "wall_time_secs": report.wall_time_secs,
                "checkpoint": ck_path,
            }),
        )?;
        Ok(self.out)
    }

    fn evaluate(self, checkpoint: &Path, episodes: usize) -> RunResult<PathBuf> {
        let ck = load_checkpoint(checkpoint)?;
        let env_cfg = self.cfg.env_config();
        let seed = self.cfg.seed;
        let mut env = TransducerEnv::new(env_cfg.clone())?;
        let (agent_eval, trace) = evaluate_on(&mut env, &mut AgentPolicy::greedy(&ck.agent), episodes, seed)?;
        let opt = grid_search_optimum(&env_cfg, &env_cfg.base_params, 200)?;
        let cap = env_cfg.max_increment;
        let random = evaluate_policy(&env_cfg, &mut RandomPolicy::new(seed, cap), episodes, seed)?;
        let oracle = evaluate_policy(&env_cfg, &mut OraclePolicy { target: opt.actuators, cap }, episodes, seed)?;
        self.write("trace.csv", &metrics::with_provenance(&trace.to_csv(), seed, &self.hash))?;
        self.summary(
            "evaluate",
            json!({
                "checkpoint_config_hash": ck.config_hash,
                "agent": agent_eval,
                "random": random,
                "oracle": oracle,
                "grid_optimum": opt,
            }),
        )?;
        Ok(self.out)
    }

    fn adapt(self, checkpoint: Option<PathBuf>) -> RunResult<PathBuf> {
        let lcfg = self.cfg.learning_config();
        let (mut agent, report) = match checkpoint {
            Some(path) => {
                let ck = load_checkpoint(&path)?;
                (ck.agent, ck.report)
            }
            None => {
                let mut envs: Vec<_> = (0..lcfg.parallel_envs)
                    .map(|_| TransducerEnv::new(self.cfg.env_config()))
                    .collect::<Result<_, _>>()?;
                let alg = self.cfg.learning.algorithm;
                let mut agent = Agent::for_env(&envs[0], alg, &lcfg)?;
                let mut report = TrainingReport::new(alg, &lcfg);
                train_on(&mut envs, &mut agent, &lcfg, lcfg.episodes, &mut report)?;
                (agent, report)
            }
        };
        let mut env_cfg = self.cfg.env_config();
        env_cfg.drift = self.cfg.drift_spec();
        let mut env = TransducerEnv::new(env_cfg)?;
        let adapted =
            adapt_online(&mut agent, &mut env, &self.cfg.trigger_config(), &lcfg, self.cfg.adaptation.episodes)?;
        self.write("adaptation.csv", &metrics::adaptation_csv(&adapted, self.cfg.seed, &self.hash))?;
        save_checkpoint(&self.checkpoint(&agent, &report)?, &self.out.join("adapted.ckpt"))?;
        self.summary(
            "adapt",
            json!({
                "reference_return": adapted.reference_return,
                "bursts": adapted.bursts,
                "final_params": env.params(),
            }),
        )?;
        Ok(self.out)
    }
}
