//! Contact-rich toy environments: planar box pushing and maze sliding.

pub mod contact;
pub mod maze;
pub mod pushing;
pub mod reward;
pub mod tool;
pub mod waypoints;

use std::io::Write;

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

pub use contact::{Contact, ContactParams};
pub use maze::{MazeConfig, MazeEnv, MazeGeometry};
pub use pushing::{BoxState, PushingConfig, PushingEnv};
pub use reward::{reward, RewardInput, RewardWeights};
pub use tool::{EnergyAudit, ServoParams, ToolParams, ToolState};
pub use waypoints::{infer_waypoints, ContactSample, Waypoint, WaypointConfig, WaypointDetector};

use crate::error::{PptError, Result};

/// Observation layout shared by both tasks.
pub mod obs {
    pub const TOOL_POS: usize = 0;
    pub const TOOL_YAW: usize = 3;
    pub const TOOL_VEL: usize = 4;
    pub const TOOL_YAW_RATE: usize = 7;
    pub const WRENCH: usize = 8;
    pub const PHASE: usize = 11;
    pub const START: usize = 12;
    pub const GOAL: usize = 14;
    pub const PRIVILEGED: usize = 16;
    pub const DIM: usize = 19;

    /// Indices visible to the actor.
    pub fn actor_inputs() -> Vec<usize> {
        (0..PRIVILEGED).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Pushing,
    Maze,
}

impl std::str::FromStr for TaskKind {
    type Err = PptError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pushing" => Ok(Self::Pushing),
            "maze" => Ok(Self::Maze),
            other => Err(PptError::Config(format!("unknown task {other:?}"))),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Pushing => "pushing",
            Self::Maze => "maze",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub task: TaskKind,
    pub horizon: f64,
    pub dt: f64,
    pub substeps: usize,
    pub power_budget: f64,
    /// Delivered power above `safety_factor · power_budget` ends the episode.
    pub safety_factor: f64,
    pub contact: ContactParams,
    pub tool: ToolParams,
    pub servo: ServoParams,
    pub reward: RewardWeights,
    pub pushing: PushingConfig,
    pub maze: MazeConfig,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self::pushing()
    }
}

impl TaskConfig {
    pub fn pushing() -> Self {
        Self {
            task: TaskKind::Pushing,
            horizon: 10.0,
            dt: 0.01,
            substeps: 10,
            power_budget: 5.0,
            safety_factor: 3.0,
            contact: ContactParams::default(),
            tool: ToolParams::default(),
            servo: ServoParams::default(),
            reward: RewardWeights::default(),
            pushing: PushingConfig::default(),
            maze: MazeConfig::default(),
        }
    }

    pub fn maze() -> Self {
        Self {
            task: TaskKind::Maze,
            horizon: 20.0,
            ..Self::pushing()
        }
    }

    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::Pushing => Self::pushing(),
            TaskKind::Maze => Self::maze(),
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.horizon >= self.dt) || self.substeps == 0 {
            return Err(PptError::Config("need dt > 0, horizon ≥ dt and substeps ≥ 1".into()));
        }
        if !(self.power_budget > 0.0) || !(self.safety_factor >= 1.0) {
            return Err(PptError::Config("power budget must be positive, safety factor ≥ 1".into()));
        }
        self.pushing.validate()?;
        self.maze.validate()
    }
}

fn ordered(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
        return Err(PptError::Config(format!("range {name} = {r:?} is not ordered")));
    }
    Ok(())
}

/// Planar rigid transform between the world and a task frame.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub origin: Vector3<f64>,
    pub yaw: f64,
}

impl Frame {
    pub fn rotate(&self, v: &Vector3<f64>, angle: f64) -> Vector3<f64> {
        let (s, c) = angle.sin_cos();
        Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
    }

    pub fn point_to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotate(&(p - self.origin), -self.yaw)
    }

    pub fn point_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotate(p, self.yaw) + self.origin
    }

    pub fn vector_to_local(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotate(v, -self.yaw)
    }

    pub fn vector_to_world(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotate(v, self.yaw)
    }
}

/// Control input for one step, already gated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    Wrench(Vector6<f64>),
    Velocity { linear: Vector3<f64>, yaw_rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    pub progress: f64,
    pub contact: bool,
    /// Norm of the contact force on the tool.
    pub wrench_norm: f64,
    pub safety_violation: bool,
}

/// One row of the exported episode trajectory and contact log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub body_x: f64,
    pub body_y: f64,
    pub body_yaw: f64,
    pub contact: bool,
    pub contact_force: f64,
    pub normal_x: f64,
    pub normal_y: f64,
    pub normal_z: f64,
    pub power: f64,
    pub gamma: f64,
}

pub fn write_trajectory_csv<W: Write>(w: W, rows: &[TrajectoryRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Common interface of the two tasks.
pub trait Environment {
    fn config(&self) -> &TaskConfig;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, command: &Command, delivered_power: f64) -> Result<StepOutcome>;
    fn observe(&self, privileged: bool) -> Vec<f64>;
    fn tool(&self) -> &ToolState;
    fn time(&self) -> f64;
    fn audit(&self) -> EnergyAudit;
    /// Frame in which primitives and observations are expressed.
    fn task_frame(&self) -> Frame;
    /// Strongest contact on the tool in the task frame, if any.
    fn last_contact(&self) -> Option<ContactSample>;
    /// Task body pose `(x, y, yaw)` for logging.
    fn body_pose(&self) -> Option<[f64; 3]>;
    fn progress(&self) -> f64;

    fn phase(&self) -> f64 {
        (self.time() / self.config().horizon).clamp(0.0, 1.0)
    }

    /// Nominal servo wrench for a velocity command given in the world frame.
    fn servo_wrench(&self, linear: &Vector3<f64>, yaw_rate: f64) -> Vector6<f64> {
        let c = self.config();
        tool::servo_wrench(self.tool(), &c.tool, &c.servo, linear, yaw_rate)
    }
}

pub fn make_env(config: &TaskConfig) -> Result<Box<dyn Environment + Send>> {
    config.validate()?;
    Ok(match config.task {
        TaskKind::Pushing => Box::new(PushingEnv::new(config.clone())),
        TaskKind::Maze => Box::new(MazeEnv::new(config.clone())),
    })
}

/// Fills the tool part of an observation vector from task-frame quantities.
pub(crate) fn write_tool_obs(out: &mut [f64], frame: &Frame, tool: &ToolState, force: &Vector3<f64>, torque: f64, phase: f64) {
    let p = frame.point_to_local(&tool.pos);
    let v = frame.vector_to_local(&tool.vel);
    let f = frame.vector_to_local(force);
    out[obs::TOOL_POS..obs::TOOL_POS + 3].copy_from_slice(p.as_slice());
    out[obs::TOOL_YAW] = tool.yaw - frame.yaw;
    out[obs::TOOL_VEL..obs::TOOL_VEL + 3].copy_from_slice(v.as_slice());
    out[obs::TOOL_YAW_RATE] = tool.yaw_rate;
    out[obs::WRENCH] = f.x;
    out[obs::WRENCH + 1] = f.y;
    out[obs::WRENCH + 2] = torque;
    out[obs::PHASE] = phase;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_roundtrip() {
        let f = Frame { origin: Vector3::new(0.3, -0.2, 0.1), yaw: 0.7 };
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert!((f.point_to_world(&f.point_to_local(&p)) - p).norm() < 1e-12);
        let l = f.point_to_local(&(f.origin + f.vector_to_world(&Vector3::x())));
        assert!((l - Vector3::x()).norm() < 1e-12);
    }

    #[test]
    fn task_parsing() {
        assert_eq!("Maze".parse::<TaskKind>().unwrap(), TaskKind::Maze);
        assert!("walk".parse::<TaskKind>().is_err());
    }

    #[test]
    fn defaults_validate() {
        TaskConfig::pushing().validate().unwrap();
        TaskConfig::maze().validate().unwrap();
        assert_eq!(TaskConfig::maze().steps(), 2000);
    }
}
