//! Run configuration, variant matrix and default provenance.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::energy_tank::TankConfig;
use crate::envs::{TaskConfig, TaskKind, WaypointConfig};
use crate::error::{PptError, Result};
use crate::impedance::ImpedanceGains;
use crate::policy::{ActionMode, PpoConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    PP,
    PPT,
    S,
    ST,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::PP, Variant::PPT, Variant::S, Variant::ST];

    pub fn uses_promp(self) -> bool {
        matches!(self, Self::PP | Self::PPT)
    }

    pub fn uses_tank(self) -> bool {
        matches!(self, Self::PPT | Self::ST)
    }

    pub fn default_action(self) -> ActionMode {
        if self.uses_promp() {
            ActionMode::EpisodePromp
        } else {
            ActionMode::CartesianVelocity
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = PptError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PP" => Ok(Self::PP),
            "PPT" => Ok(Self::PPT),
            "S" => Ok(Self::S),
            "ST" => Ok(Self::ST),
            other => Err(PptError::Config(format!("unknown variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::PP => "PP",
            Self::PPT => "PPT",
            Self::S => "S",
            Self::ST => "ST",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrimitiveSettings {
    pub num_basis: usize,
    pub demos: usize,
    pub demo_seed: u64,
    pub ridge: f64,
    /// Variance of the start via-point.
    pub start_variance: f64,
    /// Scale of the whitened weight residual.
    pub residual_scale: f64,
    /// Decision interval of step-wise residuals, in control steps.
    pub replan_interval: usize,
    /// Re-condition on contact-inferred waypoints.
    pub replan: bool,
    /// Inward press of maze demonstrations beyond wall contact, m.
    pub press: f64,
    /// Isotropic weight variance added to the prior before re-conditioning.
    pub replan_variance: f64,
}

impl Default for PrimitiveSettings {
    fn default() -> Self {
        Self {
            num_basis: 8,
            demos: 32,
            demo_seed: 12_345,
            ridge: 1e-6,
            start_variance: 1e-6,
            residual_scale: 1.0,
            replan_interval: 25,
            replan: true,
            press: 0.005,
            replan_variance: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainSettings {
    pub kp: [f64; 3],
    pub kd: [f64; 3],
    pub kp_rot: [f64; 3],
    pub kd_rot: [f64; 3],
}

impl Default for GainSettings {
    fn default() -> Self {
        Self {
            kp: [300.0; 3],
            kd: [35.0; 3],
            kp_rot: [2.0; 3],
            kd_rot: [0.25; 3],
        }
    }
}

impl GainSettings {
    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::Pushing => Self::default(),
            TaskKind::Maze => Self {
                kp: [300.0, 300.0, 60.0],
                kd: [35.0, 35.0, 15.0],
                ..Self::default()
            },
        }
    }

    pub fn gains(&self) -> Result<ImpedanceGains> {
        ImpedanceGains::diagonal(self.kp, self.kd, self.kp_rot, self.kd_rot)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TankSettings {
    pub e_max: f64,
    pub e_0: f64,
    pub u_in: f64,
    pub epsilon: f64,
    /// Optional explicit switch; must agree with the variant when given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub enabled: Option<bool>,
}

impl Default for TankSettings {
    fn default() -> Self {
        Self {
            e_max: 10.0,
            e_0: 10.0,
            u_in: 0.0,
            epsilon: 1e-9,
            enabled: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VelocitySettings {
    /// Control steps each velocity command is held.
    pub control_interval: usize,
}

impl Default for VelocitySettings {
    fn default() -> Self {
        Self { control_interval: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub episodes: usize,
    /// Evaluate every `interval` updates.
    pub interval: usize,
    /// Stop training once evaluation success reaches this fraction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub early_stop: Option<f64>,
    pub seed_offset: u64,
    /// Bends of evaluation mazes; training mazes are straight.
    pub maze_bends: usize,
    pub maze_undulation: f64,
    /// Evaluation episodes whose trajectories and tank traces are written.
    pub export_episodes: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            episodes: 50,
            interval: 10,
            early_stop: None,
            seed_offset: 1_000_000,
            maze_bends: 1,
            maze_undulation: 0.04,
            export_episodes: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub task: TaskKind,
    pub variant: Variant,
    pub action: ActionMode,
    pub seeds: Vec<u64>,
    pub num_envs: usize,
    pub checkpoint_interval: usize,
    pub smoothing_window: usize,
    pub out_dir: PathBuf,
    pub env: TaskConfig,
    pub primitive: PrimitiveSettings,
    pub gains: GainSettings,
    pub tank: TankSettings,
    pub velocity: VelocitySettings,
    pub eval: EvalSettings,
    pub waypoints: WaypointConfig,
    pub ppo: PpoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::defaults(TaskKind::Pushing, Variant::PPT)
    }
}

/// Where a default value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Paper,
    SpecDefault,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Paper => "paper",
            Self::SpecDefault => "spec-default",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultEntry {
    pub key: String,
    pub value: String,
    pub provenance: Provenance,
}

/// Keys tagged `paper` in the provenance listing.
const PAPER_KEYS: &[&str] = &[
    "env.dt",
    "env.pushing.mu_k",
    "env.pushing.mu_s_ratio",
    "env.pushing.boxes",
    "env.pushing.mass_jitter",
    "ppo.hidden",
    "ppo.episodes",
];

impl RunConfig {
    pub fn defaults(task: TaskKind, variant: Variant) -> Self {
        Self {
            task,
            variant,
            action: variant.default_action(),
            seeds: (0..10).collect(),
            num_envs: 16,
            checkpoint_interval: 50,
            smoothing_window: 20,
            out_dir: PathBuf::from("runs"),
            env: TaskConfig::for_task(task),
            primitive: PrimitiveSettings::default(),
            gains: GainSettings::for_task(task),
            tank: TankSettings::default(),
            velocity: VelocitySettings::default(),
            eval: EvalSettings::default(),
            waypoints: WaypointConfig::default(),
            ppo: PpoConfig::default(),
        }
    }

    /// Switches the variant and the action mode that goes with it.
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self.action = variant.default_action();
        self
    }

    /// Switches the task, resetting task-dependent sections to their defaults.
    pub fn with_task(mut self, task: TaskKind) -> Self {
        self.task = task;
        self.env = TaskConfig::for_task(task);
        self.gains = GainSettings::for_task(task);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ppo.validate()?;
        if self.env.task != self.task {
            return Err(PptError::Config(format!("task {} but env section describes {}", self.task, self.env.task)));
        }
        if let Some(enabled) = self.tank.enabled {
            if enabled != self.variant.uses_tank() {
                return Err(PptError::Config(format!(
                    "variant {} {} the energy tank but tank.enabled = {enabled}",
                    self.variant,
                    if self.variant.uses_tank() { "requires" } else { "excludes" }
                )));
            }
        }
        let promp_action = self.action != ActionMode::CartesianVelocity;
        if promp_action != self.variant.uses_promp() {
            return Err(PptError::Config(format!(
                "variant {} cannot use action mode {:?}",
                self.variant, self.action
            )));
        }
        if self.num_envs == 0 || self.seeds.is_empty() {
            return Err(PptError::Config("need at least one environment and one seed".into()));
        }
        if self.primitive.num_basis < 2 || self.primitive.demos < 2 {
            return Err(PptError::Config("need at least two basis functions and two demonstrations".into()));
        }
        if self.velocity.control_interval == 0 || self.primitive.replan_interval == 0 || self.eval.interval == 0 {
            return Err(PptError::Config("intervals must be positive".into()));
        }
        if !(self.primitive.residual_scale >= 0.0) || !(self.primitive.replan_variance >= 0.0) {
            return Err(PptError::Config("residual scale and replan variance must be non-negative".into()));
        }
        if let Some(s) = self.eval.early_stop {
            if !(0.0..=1.0).contains(&s) {
                return Err(PptError::Config("early stop threshold must lie in [0, 1]".into()));
            }
        }
        self.tank_config()?.validate()?;
        self.gains.gains()?;
        Ok(())
    }

    /// Tank for the variant: the configured budgets, or sentinels when gating is off.
    pub fn tank_config(&self) -> Result<TankConfig> {
        if !self.variant.uses_tank() {
            return Ok(TankConfig::disabled(self.env.dt));
        }
        let t = &self.tank;
        let mut c = TankConfig::new(t.e_max, t.e_0, self.env.power_budget, self.env.dt)?;
        c.epsilon = t.epsilon;
        c.with_refill(t.u_in)
    }

    /// Environment used for evaluation rollouts.
    pub fn eval_env(&self) -> TaskConfig {
        let mut env = self.env.clone();
        if self.task == TaskKind::Maze {
            env.maze.bends = self.eval.maze_bends;
            env.maze.undulation = self.eval.maze_undulation;
        }
        env
    }

    /// Parses a possibly partial file; missing keys take the defaults of the
    /// task and variant it names.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let err = |e: &dyn std::fmt::Display| PptError::Config(e.to_string());
        let file: toml::Table = toml::from_str(text).map_err(|e| err(&e))?;
        let pick = |key: &str| file.get(key).and_then(toml::Value::as_str);
        let task = pick("task").map_or(Ok(TaskKind::Pushing), str::parse)?;
        let variant = pick("variant").map_or(Ok(Variant::PPT), str::parse)?;
        let mut base = toml::Table::try_from(Self::defaults(task, variant)).map_err(|e| err(&e))?;
        merge(&mut base, file);
        toml::Value::Table(base).try_into().map_err(|e| err(&e))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PptError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&c)?;
        Ok(hex::encode(Sha256::digest(&json)))
    }

    /// Every leaf value with its dotted key and provenance tag.
    pub fn provenance(&self) -> Result<Vec<DefaultEntry>> {
        let value = serde_json::to_value(self)?;
        let mut out = Vec::new();
        flatten("", &value, &mut out);
        for e in &mut out {
            let maze_paper = self.task == TaskKind::Maze && e.key == "env.horizon";
            if maze_paper || PAPER_KEYS.contains(&e.key.as_str()) {
                e.provenance = Provenance::Paper;
            }
        }
        Ok(out)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<DefaultEntry>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        other => out.push(DefaultEntry {
            key: prefix.to_string(),
            value: other.to_string(),
            provenance: Provenance::SpecDefault,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gating_matrix() {
        let rows: Vec<(Variant, bool, bool)> = Variant::ALL.iter().map(|v| (*v, v.uses_promp(), v.uses_tank())).collect();
        assert_eq!(
            rows,
            vec![
                (Variant::PP, true, false),
                (Variant::PPT, true, true),
                (Variant::S, false, false),
                (Variant::ST, false, true)
            ]
        );
        for v in Variant::ALL {
            let cfg = RunConfig::defaults(TaskKind::Pushing, v);
            cfg.validate().unwrap();
            assert_eq!(cfg.tank_config().unwrap().is_disabled(), !v.uses_tank());
        }
    }

    #[test]
    fn inconsistent_gating_is_rejected() {
        let mut cfg = RunConfig::defaults(TaskKind::Pushing, Variant::PP);
        cfg.tank.enabled = Some(true);
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::defaults(TaskKind::Pushing, Variant::ST);
        cfg.action = ActionMode::EpisodePromp;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::defaults(TaskKind::Maze, Variant::PPT);
        cfg.env = TaskConfig::pushing();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_roundtrip_and_hash() {
        let cfg = RunConfig::defaults(TaskKind::Maze, Variant::ST);
        let text = cfg.to_toml_string().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
        let partial = RunConfig::from_toml_str("variant = \"S\"\naction = \"cartesian_velocity\"\n").unwrap();
        assert_eq!(partial.variant, Variant::S);
        assert_eq!(partial.num_envs, 16);
        let maze = RunConfig::from_toml_str("task = \"maze\"\n[ppo]\nepisodes = 7\n").unwrap();
        assert_eq!(maze.env, TaskConfig::maze());
        assert_eq!(maze.gains, GainSettings::for_task(TaskKind::Maze));
        assert_eq!(maze.ppo.episodes, 7);
        assert!(RunConfig::from_toml_str("task = \"walk\"\n").is_err());
        let mut other = cfg.clone();
        other.num_envs = 3;
        assert_ne!(other.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn provenance_tags() {
        let entries = RunConfig::defaults(TaskKind::Maze, Variant::PPT).provenance().unwrap();
        let tag = |k: &str| entries.iter().find(|e| e.key == k).unwrap().provenance;
        assert_eq!(tag("ppo.hidden"), Provenance::Paper);
        assert_eq!(tag("env.horizon"), Provenance::Paper);
        assert_eq!(tag("env.power_budget"), Provenance::SpecDefault);
        assert_eq!(tag("tank.e_max"), Provenance::SpecDefault);
    }
}
