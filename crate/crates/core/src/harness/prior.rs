//! Demonstrations and ProMP priors for both tasks.
//!
//! Pushing demonstrations are planar paths (d = 2, world frame) that carry the
//! paddle from its start to the point that leaves the box on the goal. Maze
//! demonstrations (d = 3, start frame) slide along the right wall of straight
//! corridors of random width and length.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use crate::envs::{Environment, PushingEnv, TaskKind};
use crate::error::Result;
use crate::promp::{fit_prior, BasisConfig, PrimitiveModel, Trajectory};

/// Demonstration samples per trajectory.
pub const DEMO_SAMPLES: usize = 101;
/// Phase at which pushing demonstrations reach their end point.
pub const PUSH_END_PHASE: f64 = 0.85;
/// Phase at which maze demonstrations reach their end point.
pub const MAZE_END_PHASE: f64 = 0.9;
/// How far maze demonstrations aim past the corridor end, m.
pub const MAZE_OVERSHOOT: f64 = 0.05;

/// Quintic minimum-jerk profile on `[0, 1]`.
pub fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

pub fn pushing_demos(cfg: &RunConfig) -> Result<Vec<Trajectory>> {
    let mut env = PushingEnv::new(cfg.env.clone());
    (0..cfg.primitive.demos)
        .map(|i| {
            env.reset(cfg.primitive.demo_seed.wrapping_add(i as u64))?;
            let start = env.tool().pos.xy();
            let end = env.push_endpoint();
            Trajectory::from_fn(DEMO_SAMPLES, |phi| {
                let s = min_jerk(phi / PUSH_END_PHASE);
                let p = start + (end - start) * s;
                vec![p.x, p.y]
            })
        })
        .collect()
}

pub fn maze_demos(cfg: &RunConfig) -> Result<Vec<Trajectory>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.primitive.demo_seed);
    let m = &cfg.env.maze;
    (0..cfg.primitive.demos)
        .map(|_| {
            let width = rng.random_range(m.width[0]..=m.width[1]);
            let length = rng.random_range(m.length[0]..=m.length[1]);
            let lateral = -(0.5 * width - m.tool_radius) - cfg.primitive.press;
            let reach = length - m.start_offset + MAZE_OVERSHOOT;
            Trajectory::from_fn(DEMO_SAMPLES, |phi| {
                let s = min_jerk(phi / MAZE_END_PHASE);
                // Move onto the wall early, then slide along it.
                let side = min_jerk(phi / 0.1);
                vec![reach * s, lateral * side, -cfg.primitive.press]
            })
        })
        .collect()
}

pub fn primitive_dims(task: TaskKind) -> usize {
    match task {
        TaskKind::Pushing => 2,
        TaskKind::Maze => 3,
    }
}

/// Fits the unconditioned prior from the task's demonstrations.
pub fn build_prior(cfg: &RunConfig) -> Result<PrimitiveModel> {
    let demos = match cfg.task {
        TaskKind::Pushing => pushing_demos(cfg)?,
        TaskKind::Maze => maze_demos(cfg)?,
    };
    let basis = BasisConfig::uniform(cfg.primitive.num_basis, primitive_dims(cfg.task))?;
    let dist = fit_prior(&basis, &demos, cfg.primitive.ridge)?;
    PrimitiveModel::new(basis, dist)
}
