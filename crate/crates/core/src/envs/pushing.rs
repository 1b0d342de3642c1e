//! Planar box pushing with a paddle-shaped tool.
//!
//! The box is a light SE(2) body whose table friction follows an ellipsoidal limit
//! surface: it stays put while the applied wrench is inside the static ellipse and
//! otherwise slides with the kinetic one.

use nalgebra::{Vector2, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::contact::{bristle_friction, closest_on_segment, cross2, lift, normal_force, rotate2, Contact};
use super::reward::{reward, RewardInput};
use super::tool::{EnergyAudit, ToolState};
use super::waypoints::ContactSample;
use super::{obs, ordered, write_tool_obs, Command, Environment, Frame, StepOutcome, TaskConfig};
use crate::error::{PptError, Result};

const GRAVITY: f64 = 9.81;
/// Mean distance from the center of a unit square to its points.
const SQUARE_LEVER: f64 = 0.3826;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PushingConfig {
    pub mu_k: [f64; 2],
    pub mu_s_ratio: f64,
    /// Paired nominal `(edge m, mass kg)`.
    pub boxes: Vec<[f64; 2]>,
    pub mass_jitter: f64,
    pub pusher_friction: f64,
    pub paddle_length: f64,
    pub paddle_radius: f64,
    pub start_jitter: f64,
    pub start_yaw_deg: f64,
    pub tool_gap: f64,
    pub tool_lateral_jitter: f64,
    pub goal_angle_deg: f64,
    pub goal_distance: [f64; 2],
    pub success_distance: f64,
    pub success_yaw_deg: f64,
    pub rest_speed: f64,
}

impl Default for PushingConfig {
    fn default() -> Self {
        Self {
            mu_k: [0.20, 0.60],
            mu_s_ratio: 1.25,
            boxes: vec![[0.06, 0.05], [0.08, 0.08]],
            mass_jitter: 0.15,
            pusher_friction: 0.6,
            paddle_length: 0.12,
            paddle_radius: 0.005,
            start_jitter: 0.02,
            start_yaw_deg: 5.0,
            tool_gap: 0.015,
            tool_lateral_jitter: 0.01,
            goal_angle_deg: 25.0,
            goal_distance: [0.15, 0.30],
            success_distance: 0.02,
            success_yaw_deg: 15.0,
            rest_speed: 0.01,
        }
    }
}

impl PushingConfig {
    pub fn validate(&self) -> Result<()> {
        ordered("mu_k", self.mu_k)?;
        ordered("goal_distance", self.goal_distance)?;
        if self.mu_k[0] < 0.0 || self.mu_s_ratio < 1.0 {
            return Err(PptError::Config("friction must be non-negative with μ_s ≥ μ_k".into()));
        }
        if self.boxes.is_empty() || self.boxes.iter().any(|b| !(b[0] > 0.0 && b[1] > 0.0)) {
            return Err(PptError::Config("box sizes and masses must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.mass_jitter) {
            return Err(PptError::Config("mass jitter must lie in [0, 1)".into()));
        }
        if !(self.paddle_length > 0.0 && self.paddle_radius > 0.0 && self.success_distance > 0.0) {
            return Err(PptError::Config("paddle and success sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoxState {
    pub pos: Vector2<f64>,
    pub yaw: f64,
    pub vel: Vector2<f64>,
    pub yaw_rate: f64,
    pub edge: f64,
    pub mass: f64,
    pub mu_k: f64,
    pub mu_s: f64,
}

impl BoxState {
    pub fn inertia(&self) -> f64 {
        self.mass * self.edge * self.edge / 6.0
    }

    pub fn corners(&self) -> [Vector2<f64>; 4] {
        let h = 0.5 * self.edge;
        [(h, h), (-h, h), (-h, -h), (h, -h)].map(|(x, y)| self.pos + rotate2(&Vector2::new(x, y), self.yaw))
    }

    pub fn speed(&self) -> f64 {
        self.vel.norm() + (self.yaw_rate * 0.5 * self.edge).abs()
    }

    /// Closest point of the box to `p`, the outward normal there and the signed
    /// distance (negative inside).
    pub fn closest(&self, p: &Vector2<f64>) -> (Vector2<f64>, Vector2<f64>, f64) {
        let h = 0.5 * self.edge;
        let l = rotate2(&(p - self.pos), -self.yaw);
        let c = Vector2::new(l.x.clamp(-h, h), l.y.clamp(-h, h));
        let (c, n, d) = if l.x.abs() < h && l.y.abs() < h {
            let (dx, dy) = (h - l.x.abs(), h - l.y.abs());
            if dx < dy {
                let s = l.x.signum();
                (Vector2::new(s * h, l.y), Vector2::new(s, 0.0), -dx)
            } else {
                let s = l.y.signum();
                (Vector2::new(l.x, s * h), Vector2::new(0.0, s), -dy)
            }
        } else {
            let diff = l - c;
            let d = diff.norm();
            (c, diff / d, d)
        };
        (self.pos + rotate2(&c, self.yaw), rotate2(&n, self.yaw), d)
    }

    /// Table friction with an ellipsoidal limit surface, applied to the momentum
    /// produced by `force` and `torque` over `dt`.
    pub fn integrate(&mut self, force: &Vector2<f64>, torque: f64, dt: f64) {
        let inertia = self.inertia();
        let lin = self.vel * self.mass + force * dt;
        let ang = self.yaw_rate * inertia + torque * dt;
        let lever = SQUARE_LEVER * self.edge;
        let scaled = |mu: f64| {
            let f = mu * self.mass * GRAVITY * dt;
            ((lin.norm() / f).powi(2) + (ang.abs() / (f * lever)).powi(2)).sqrt()
        };
        let moving = self.vel.norm() > 1e-12 || self.yaw_rate.abs() > 1e-12;
        let factor = if !moving && scaled(self.mu_s) <= 1.0 {
            0.0
        } else {
            let s = scaled(self.mu_k);
            if s <= 1.0 {
                0.0
            } else {
                1.0 - 1.0 / s
            }
        };
        self.vel = lin * (factor / self.mass);
        self.yaw_rate = ang * factor / inertia;
        self.pos += self.vel * dt;
        self.yaw += self.yaw_rate * dt;
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = (a + std::f64::consts::PI) % two_pi;
    if r < 0.0 {
        r += two_pi;
    }
    r - std::f64::consts::PI
}

#[derive(Debug, Clone)]
pub struct PushingEnv {
    cfg: TaskConfig,
    tool: ToolState,
    body: BoxState,
    start: Vector2<f64>,
    goal: Vector2<f64>,
    t: f64,
    audit: EnergyAudit,
    force: Vector3<f64>,
    torque: f64,
    strongest: Option<Contact>,
    /// Friction anchors for the four box corners and the two paddle ends.
    anchors: [Option<Vector3<f64>>; 6],
    progress: f64,
    done: bool,
    success: bool,
    last_obs: Vec<f64>,
}

impl PushingEnv {
    pub fn new(cfg: TaskConfig) -> Self {
        Self {
            cfg,
            tool: ToolState::default(),
            body: BoxState::default(),
            start: Vector2::zeros(),
            goal: Vector2::zeros(),
            t: 0.0,
            audit: EnergyAudit::default(),
            force: Vector3::zeros(),
            torque: 0.0,
            strongest: None,
            anchors: [None; 6],
            progress: 0.0,
            done: false,
            success: false,
            last_obs: vec![0.0; obs::DIM],
        }
    }

    pub fn body(&self) -> &BoxState {
        &self.body
    }

    pub fn goal(&self) -> Vector2<f64> {
        self.goal
    }

    pub fn box_start(&self) -> Vector2<f64> {
        self.start
    }

    /// Tool position that leaves the box centered on the goal after a straight push.
    pub fn push_endpoint(&self) -> Vector2<f64> {
        self.goal - Vector2::new(0.5 * self.body.edge + self.cfg.pushing.paddle_radius, 0.0)
    }

    pub fn paddle(&self) -> (Vector2<f64>, Vector2<f64>) {
        let c = self.tool.pos.xy();
        let u = Vector2::new(-self.tool.yaw.sin(), self.tool.yaw.cos()) * (0.5 * self.cfg.pushing.paddle_length);
        (c - u, c + u)
    }

    fn distance_to_goal(&self) -> f64 {
        (self.body.pos - self.goal).norm()
    }

    fn compute_progress(&self) -> f64 {
        let d0 = (self.start - self.goal).norm().max(1e-9);
        (1.0 - self.distance_to_goal() / d0).clamp(0.0, 1.0)
    }

    fn at_goal(&self) -> bool {
        let p = &self.cfg.pushing;
        self.distance_to_goal() < p.success_distance
            && wrap_angle(self.body.yaw).abs() < p.success_yaw_deg.to_radians()
            && self.body.speed() < p.rest_speed
    }

    fn contacts(&mut self, dt: f64) -> Vec<Contact> {
        let pc = &self.cfg.pushing;
        let r = pc.paddle_radius;
        let (a, b) = self.paddle();
        let tool_c = self.tool.pos.xy();
        let mut raw: [Option<(Vector2<f64>, Vector2<f64>, f64)>; 6] = [None; 6];
        for (i, v) in self.body.corners().into_iter().enumerate() {
            let (q, _) = closest_on_segment(&v, &a, &b);
            let diff = q - v;
            let d = diff.norm();
            if d < r {
                let n = if d > 1e-12 {
                    diff / d
                } else {
                    let face = Vector2::new(self.tool.yaw.cos(), self.tool.yaw.sin());
                    face * (tool_c - self.body.pos).dot(&face).signum()
                };
                raw[i] = Some((v, n, r - d));
            }
        }
        for (i, e) in [a, b].into_iter().enumerate() {
            let (c, n, d) = self.body.closest(&e);
            if d < r {
                raw[4 + i] = Some((c, n, r - d));
            }
        }
        // Damping above half-critical for the light pair makes the contact chatter.
        let m_red = self.cfg.tool.mass * self.body.mass / (self.cfg.tool.mass + self.body.mass);
        let mut params = self.cfg.contact;
        params.d_n = params.d_n.min((params.k_n * m_red).sqrt());
        let mut out = Vec::new();
        for (slot, hit) in self.anchors.iter_mut().zip(raw) {
            let Some((p, n, depth)) = hit else {
                *slot = None;
                continue;
            };
            let rt = p - tool_c;
            let rb = p - self.body.pos;
            let v_tool = self.tool.vel.xy() + Vector2::new(-rt.y, rt.x) * self.tool.yaw_rate;
            let v_box = self.body.vel + Vector2::new(-rb.y, rb.x) * self.body.yaw_rate;
            let v_rel = lift(&(v_tool - v_box), 0.0);
            let normal = lift(&n, 0.0);
            let vn = v_rel.dot(&normal);
            let fn_ = normal_force(&params, depth, -vn);
            let anchor = slot.get_or_insert_with(Vector3::zeros);
            let friction = bristle_friction(&params, pc.pusher_friction, fn_, &normal, &(v_rel - normal * vn), anchor, dt);
            out.push(Contact {
                point: lift(&p, self.tool.pos.z),
                normal,
                depth,
                normal_force: fn_,
                friction,
            });
        }
        out
    }

    fn frozen_outcome(&self) -> StepOutcome {
        StepOutcome {
            obs: self.last_obs.clone(),
            reward: 0.0,
            done: true,
            success: self.success,
            progress: self.progress,
            contact: false,
            wrench_norm: 0.0,
            safety_violation: false,
        }
    }

    /// Places the tool, box and goal directly; used by tests and scripted rollouts.
    pub fn set_state(&mut self, tool: ToolState, body: BoxState, goal: Vector2<f64>) {
        self.tool = tool;
        self.body = body;
        self.start = body.pos;
        self.goal = goal;
        self.t = 0.0;
        self.anchors = [None; 6];
        self.done = false;
        self.success = false;
        self.progress = 0.0;
        self.audit = EnergyAudit {
            initial_kinetic: tool.kinetic_energy(&self.cfg.tool),
            kinetic: tool.kinetic_energy(&self.cfg.tool),
            ..Default::default()
        };
        self.last_obs = self.observe(true);
    }
}

impl Environment for PushingEnv {
    fn config(&self) -> &TaskConfig {
        &self.cfg
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let pc = self.cfg.pushing.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [edge, mass0] = pc.boxes[rng.random_range(0..pc.boxes.len())];
        let mass = mass0 * (1.0 + rng.random_range(-pc.mass_jitter..=pc.mass_jitter));
        let mu_k = rng.random_range(pc.mu_k[0]..=pc.mu_k[1]);
        let j = pc.start_jitter;
        let start = Vector2::new(rng.random_range(-j..=j), rng.random_range(-j..=j));
        let yaw_lim = pc.start_yaw_deg.to_radians();
        let yaw = if yaw_lim > 0.0 { rng.random_range(-yaw_lim..=yaw_lim) } else { 0.0 };
        let ga = pc.goal_angle_deg.to_radians();
        let theta = if ga > 0.0 { rng.random_range(-ga..=ga) } else { 0.0 };
        let dist = rng.random_range(pc.goal_distance[0]..=pc.goal_distance[1]);
        let lat = pc.tool_lateral_jitter;
        let lateral = if lat > 0.0 { rng.random_range(-lat..=lat) } else { 0.0 };
        let body = BoxState {
            pos: start,
            yaw,
            edge,
            mass,
            mu_k,
            mu_s: pc.mu_s_ratio * mu_k,
            ..Default::default()
        };
        // Back face of the (slightly rotated) box, then the paddle radius and the gap.
        let back = 0.5 * edge * (yaw.cos() + yaw.sin().abs());
        let tool = ToolState {
            pos: Vector3::new(start.x - back - pc.paddle_radius - pc.tool_gap, start.y + lateral, 0.0),
            ..Default::default()
        };
        let goal = start + Vector2::new(theta.cos(), theta.sin()) * dist;
        self.set_state(tool, body, goal);
        Ok(self.last_obs.clone())
    }

    fn step(&mut self, command: &Command, delivered_power: f64) -> Result<StepOutcome> {
        if self.done {
            return Ok(self.frozen_outcome());
        }
        let cfg = self.cfg.clone();
        let control: Vector6<f64> = match command {
            Command::Wrench(w) => *w,
            Command::Velocity { linear, yaw_rate } => self.servo_wrench(linear, *yaw_rate),
        };
        if control.iter().any(|v| !v.is_finite()) {
            return Err(PptError::InvalidInput("non-finite command".into()));
        }
        let sub_dt = cfg.dt / cfg.substeps as f64;
        let mut in_contact = false;
        let mut peak_force = 0.0f64;
        for _ in 0..cfg.substeps {
            let contacts = self.contacts(sub_dt);
            let mut f_tool = Vector3::zeros();
            let mut t_tool = 0.0;
            let mut f_box = Vector2::zeros();
            let mut t_box = 0.0;
            self.strongest = None;
            for c in &contacts {
                let f = c.force();
                let p = c.point.xy();
                f_tool += f;
                t_tool += cross2(&(p - self.tool.pos.xy()), &f.xy());
                f_box -= f.xy();
                t_box -= cross2(&(p - self.body.pos), &f.xy());
                if self.strongest.is_none_or(|s| s.normal_force < c.normal_force) {
                    self.strongest = Some(*c);
                }
            }
            in_contact |= !contacts.is_empty();
            peak_force = peak_force.max(f_tool.norm());
            self.force = f_tool;
            self.torque = t_tool;
            self.tool.integrate(&cfg.tool, &control, &f_tool, t_tool, sub_dt, &mut self.audit);
            self.body.integrate(&f_box, t_box, sub_dt);
        }
        self.t += cfg.dt;
        if !self.tool.is_finite() || !self.body.pos.iter().all(|v| v.is_finite()) {
            return Err(PptError::SimulationDiverged { t: self.t });
        }
        let progress = self.compute_progress();
        let delta = progress - self.progress;
        self.progress = progress;
        let success = self.at_goal();
        let safety = delivered_power > cfg.safety_factor * cfg.power_budget;
        let timeout = self.t >= cfg.horizon - 1e-9;
        let r = reward(
            &cfg.reward,
            &RewardInput {
                progress_delta: delta,
                reached_goal: success,
                path_score: 0.0,
                contact: false,
                power: delivered_power,
                p_max: cfg.power_budget,
                dt: cfg.dt,
            },
        );
        self.success = success;
        self.done = success || safety || timeout;
        self.last_obs = self.observe(true);
        Ok(StepOutcome {
            obs: self.last_obs.clone(),
            reward: r,
            done: self.done,
            success,
            progress,
            contact: in_contact,
            wrench_norm: peak_force,
            safety_violation: safety && !success,
        })
    }

    fn observe(&self, privileged: bool) -> Vec<f64> {
        let mut o = vec![0.0; obs::DIM];
        write_tool_obs(&mut o, &Frame::default(), &self.tool, &self.force, self.torque, self.phase());
        o[obs::START] = self.start.x;
        o[obs::START + 1] = self.start.y;
        o[obs::GOAL] = self.goal.x;
        o[obs::GOAL + 1] = self.goal.y;
        if privileged {
            o[obs::PRIVILEGED] = self.body.pos.x;
            o[obs::PRIVILEGED + 1] = self.body.pos.y;
            o[obs::PRIVILEGED + 2] = self.body.yaw;
        }
        o
    }

    fn tool(&self) -> &ToolState {
        &self.tool
    }

    fn time(&self) -> f64 {
        self.t
    }

    fn audit(&self) -> EnergyAudit {
        self.audit
    }

    fn task_frame(&self) -> Frame {
        Frame::default()
    }

    fn last_contact(&self) -> Option<ContactSample> {
        self.strongest.map(|c| ContactSample {
            t: self.t,
            phase: self.phase(),
            position: self.tool.pos,
            normal: c.normal,
            force: c.normal_force,
        })
    }

    fn body_pose(&self) -> Option<[f64; 3]> {
        Some([self.body.pos.x, self.body.pos.y, self.body.yaw])
    }

    fn progress(&self) -> f64 {
        self.progress
    }
}
