//! Training, evaluation and run artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::prior::build_prior;
use super::rollout::{action_dim, Agent, EpisodeOptions, EpisodeResult, Runner};
use crate::envs::{make_env, write_trajectory_csv};
use crate::error::{PptError, Result};
use crate::metrics::{moving_average, ContinuityMode, EpisodeMetrics};
use crate::policy::{write_stats_csv, Checkpoint, Ppo, RolloutBuffer, UpdateStats};
use crate::promp::PrimitiveModel;

/// One row of a training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub update: usize,
    pub episodes: usize,
    pub success: f64,
    pub max_power: f64,
    pub mean_return: f64,
    pub eval_success: Option<f64>,
    pub eval_max_power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedRow {
    pub update: usize,
    pub success: f64,
    pub max_power: f64,
    /// Running maximum of the smoothed success.
    pub best_success: f64,
}

pub fn smooth_curve(rows: &[CurveRow], window: usize) -> Vec<SmoothedRow> {
    let s = moving_average(&rows.iter().map(|r| r.success).collect::<Vec<_>>(), window);
    let p = moving_average(&rows.iter().map(|r| r.max_power).collect::<Vec<_>>(), window);
    let mut best = f64::NEG_INFINITY;
    rows.iter()
        .zip(s.into_iter().zip(p))
        .map(|(r, (s, p))| {
            best = best.max(s);
            SmoothedRow {
                update: r.update,
                success: s,
                max_power: p,
                best_success: best,
            }
        })
        .collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut wr = csv::Writer::from_path(path)?;
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_curve(path: &Path) -> Result<Vec<CurveRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.deserialize().map(|r| r.map_err(PptError::from)).collect()
}

/// Metrics of one finished episode; episodes that produced no samples count as failures.
pub fn episode_metrics(result: &EpisodeResult, p_max: f64) -> EpisodeMetrics {
    result.log.metrics(p_max, ContinuityMode::LongestRun).unwrap_or_default()
}

fn max_delivered(result: &EpisodeResult) -> f64 {
    result.log.delivered_power().into_iter().fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean: EpisodeMetrics,
    pub se: EpisodeMetrics,
    pub per_episode: Vec<EpisodeMetrics>,
    pub failures: Vec<String>,
}

/// Files written for exported evaluation episodes, relative to the run directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Exports {
    pub tank_traces: Vec<String>,
    pub trajectories: Vec<String>,
}

/// Deterministic rollouts with privileged fields zeroed and a frozen normalizer.
pub fn evaluate(
    runner: &Runner,
    agent: &Agent,
    episodes: usize,
    opts: EpisodeOptions,
    export: Option<(&Path, &str)>,
) -> Result<(Evaluation, Exports)> {
    let cfg = runner.config();
    if episodes == 0 {
        return Err(PptError::InvalidInput("evaluation needs at least one episode".into()));
    }
    let mut agent = agent.clone();
    agent.norm.freeze();
    let mut env = make_env(&cfg.eval_env())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.eval.seed_offset);
    let p_max = cfg.env.power_budget;
    let mut per_episode = Vec::with_capacity(episodes);
    let mut failures = Vec::new();
    let mut exports = Exports::default();
    for i in 0..episodes {
        let record = export.is_some() && i < cfg.eval.export_episodes;
        let mut o = opts;
        o.record = record;
        let r = runner.run_episode(env.as_mut(), &mut agent, cfg.eval.seed_offset + i as u64, o, &mut rng)?;
        if let Some(d) = &r.diverged {
            failures.push(format!("eval episode {i}: {d}"));
        }
        if let (true, Some((dir, prefix))) = (record, export) {
            fs::create_dir_all(dir)?;
            let tank = format!("{prefix}episode_{i:03}_tank.csv");
            let traj = format!("{prefix}episode_{i:03}_trajectory.csv");
            r.tank.save(&dir.join(&tank))?;
            write_trajectory_csv(fs::File::create(dir.join(&traj))?, &r.trajectory)?;
            exports.tank_traces.push(tank);
            exports.trajectories.push(traj);
        }
        per_episode.push(episode_metrics(&r, p_max));
    }
    let mean = EpisodeMetrics::mean(&per_episode)?;
    let mut se = [0.0; 7];
    for (k, s) in se.iter_mut().enumerate() {
        let v: Vec<f64> = per_episode.iter().map(|m| m.values()[k]).collect();
        *s = crate::metrics::mean_se(&v)?.1;
    }
    Ok((
        Evaluation {
            episodes,
            success_rate: mean.success,
            mean,
            se: EpisodeMetrics::from_values(se),
            per_episode,
            failures,
        },
        exports,
    ))
}

/// Everything a run leaves behind, with paths relative to its directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub task: String,
    pub variant: String,
    pub seed: u64,
    pub config_hash: String,
    pub updates: usize,
    pub episodes: usize,
    pub early_stopped: bool,
    pub initial_eval_success: f64,
    pub final_eval: Evaluation,
    pub curve: String,
    pub smoothed_curve: String,
    pub ppo_stats: String,
    pub prior: Option<String>,
    pub checkpoints: Vec<String>,
    pub tank_traces: Vec<String>,
    pub trajectories: Vec<String>,
    pub training_failures: Vec<String>,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Identification stored next to the network in each checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub task: String,
    pub variant: String,
    pub config_hash: String,
    pub update: usize,
}

fn save_checkpoint(dir: &Path, name: &str, agent: &Agent, cfg: &RunConfig, update: usize) -> Result<String> {
    let rel = format!("checkpoints/{name}");
    fs::create_dir_all(dir.join("checkpoints"))?;
    let info = CheckpointInfo {
        task: cfg.task.to_string(),
        variant: cfg.variant.to_string(),
        config_hash: cfg.hash()?,
        update,
    };
    Checkpoint {
        model: agent.model.clone(),
        normalizer: agent.norm.clone(),
        config: cfg.ppo.clone(),
        extra: serde_json::to_value(info)?,
    }
    .save(&dir.join(&rel))?;
    Ok(rel)
}

/// Loads a checkpoint and checks it fits `cfg` and its prior.
pub fn load_agent(path: &Path, cfg: &RunConfig, prior: Option<&PrimitiveModel>) -> Result<Agent> {
    let ck = Checkpoint::load(path)?;
    let info: CheckpointInfo = serde_json::from_value(ck.extra.clone())
        .map_err(|e| PptError::Checkpoint(format!("missing run information: {e}")))?;
    if info.task != cfg.task.to_string() || info.variant != cfg.variant.to_string() {
        return Err(PptError::Checkpoint(format!(
            "checkpoint is for {} {}, config asks for {} {}",
            info.task, info.variant, cfg.task, cfg.variant
        )));
    }
    let expected = action_dim(cfg, prior)?;
    if ck.model.action_dim() != expected || ck.model.obs_dim() != crate::envs::obs::DIM {
        return Err(PptError::DimensionMismatch { expected, got: ck.model.action_dim() });
    }
    Ok(Agent {
        model: ck.model,
        norm: ck.normalizer,
    })
}

/// Prior for primitive variants, `None` for servo variants.
pub fn prior_for(cfg: &RunConfig) -> Result<Option<PrimitiveModel>> {
    if cfg.variant.uses_promp() {
        Ok(Some(build_prior(cfg)?))
    } else {
        Ok(None)
    }
}

/// Full training run for one seed, writing artifacts under `dir`.
pub fn train(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    let prior = prior_for(cfg)?;
    let prior_path = match &prior {
        Some(p) => {
            fs::write(dir.join("prior.json"), p.to_json()? + "\n")?;
            Some("prior.json".to_string())
        }
        None => None,
    };
    let runner = Runner::new(cfg, prior.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agent = Agent::new(cfg, action_dim(cfg, prior.as_ref())?, &mut rng)?;
    let mut ppo = Ppo::new(cfg.ppo.clone(), agent.model.num_params(), ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15))?;
    let mut env = make_env(&cfg.env)?;

    let (initial, _) = evaluate(&runner, &agent, cfg.eval.episodes, EpisodeOptions::evaluation(), None)?;
    let mut curve = Vec::new();
    let mut stats: Vec<UpdateStats> = Vec::new();
    let mut checkpoints = Vec::new();
    let mut failures = Vec::new();
    let mut early_stopped = false;
    let mut episodes = 0;
    let updates = cfg.ppo.episodes;
    for update in 0..updates {
        let mut buffer = RolloutBuffer::new(agent.model.log_std().to_vec());
        let (mut wins, mut power, mut ret) = (0usize, 0.0, 0.0);
        for _ in 0..cfg.num_envs {
            let ep_seed: u64 = rng.random();
            let r = runner.run_episode(env.as_mut(), &mut agent, ep_seed, EpisodeOptions::training(), &mut rng)?;
            if let Some(d) = &r.diverged {
                failures.push(format!("update {update}, episode seed {ep_seed}: {d}"));
            }
            wins += r.success as usize;
            power += max_delivered(&r);
            ret += r.episode_return;
            for t in r.transitions {
                buffer.push(t.obs, t.action, t.log_prob, t.reward, t.value, t.done, t.mean);
            }
        }
        episodes += cfg.num_envs;
        let n = cfg.num_envs as f64;
        stats.push(ppo.update(&mut agent.model, &mut buffer)?);
        let mut row = CurveRow {
            update: update + 1,
            episodes,
            success: wins as f64 / n,
            max_power: power / n,
            mean_return: ret / n,
            eval_success: None,
            eval_max_power: None,
        };
        let last = update + 1 == updates;
        if (update + 1) % cfg.eval.interval == 0 || last {
            let (ev, _) = evaluate(&runner, &agent, cfg.eval.episodes, EpisodeOptions::evaluation(), None)?;
            row.eval_success = Some(ev.success_rate);
            row.eval_max_power = Some(ev.mean.max_power);
            if cfg.eval.early_stop.is_some_and(|s| ev.success_rate >= s) && !last {
                early_stopped = true;
            }
        }
        curve.push(row);
        if cfg.checkpoint_interval > 0 && (update + 1) % cfg.checkpoint_interval == 0 && !last && !early_stopped {
            checkpoints.push(save_checkpoint(dir, &format!("update_{:04}.ckpt", update + 1), &agent, cfg, update + 1)?);
        }
        if early_stopped {
            break;
        }
    }
    checkpoints.push(save_checkpoint(dir, "final.ckpt", &agent, cfg, curve.len())?);
    write_rows(&dir.join("curve.csv"), &curve)?;
    write_rows(&dir.join("curve_smoothed.csv"), &smooth_curve(&curve, cfg.smoothing_window))?;
    write_stats_csv(fs::File::create(dir.join("ppo_stats.csv"))?, &stats)?;
    let (final_eval, exports) = evaluate(
        &runner,
        &agent,
        cfg.eval.episodes,
        EpisodeOptions::evaluation(),
        Some((&dir.join("eval"), "")),
    )?;
    fs::write(dir.join("eval_metrics.csv"), metrics_csv(&final_eval.per_episode)?)?;
    let manifest = RunManifest {
        task: cfg.task.to_string(),
        variant: cfg.variant.to_string(),
        seed,
        config_hash: cfg.hash()?,
        updates: curve.len(),
        episodes,
        early_stopped,
        initial_eval_success: initial.success_rate,
        final_eval,
        curve: "curve.csv".into(),
        smoothed_curve: "curve_smoothed.csv".into(),
        ppo_stats: "ppo_stats.csv".into(),
        prior: prior_path,
        checkpoints,
        tank_traces: exports.tank_traces.iter().map(|p| format!("eval/{p}")).collect(),
        trajectories: exports.trajectories.iter().map(|p| format!("eval/{p}")).collect(),
        training_failures: failures,
    };
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Per-episode metrics as CSV with the metric names as header.
pub fn metrics_csv(rows: &[EpisodeMetrics]) -> Result<String> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(EpisodeMetrics::NAMES.iter().map(|(n, _)| *n))?;
    for m in rows {
        wr.write_record(m.values().iter().map(|v| v.to_string()))?;
    }
    let bytes = wr.into_inner().map_err(|e| PptError::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Directory of one run inside an output root.
pub fn run_dir(root: &Path, cfg: &RunConfig, seed: u64) -> PathBuf {
    root.join(format!("{}_{}_seed{seed}", cfg.task, cfg.variant))
}
