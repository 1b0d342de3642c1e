//! Maze sliding: a polyline corridor with offset walls, rounded end caps and a
//! height profile along its arclength.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::contact::{closest_on_segment, lift, resolve, Contact};
use super::reward::{reward, RewardInput};
use super::tool::{EnergyAudit, ToolState};
use super::waypoints::ContactSample;
use super::{obs, ordered, write_tool_obs, Command, Environment, Frame, StepOutcome, TaskConfig};
use crate::error::{PptError, Result};

const MAX_GEOMETRY_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MazeConfig {
    pub width: [f64; 2],
    pub length: [f64; 2],
    /// Number of bends; 0 gives straight training corridors.
    pub bends: usize,
    pub bend_deg: [f64; 2],
    /// Bend location as a fraction of the length.
    pub bend_position: [f64; 2],
    pub disc_segment: bool,
    pub disc_radius: f64,
    pub undulation: f64,
    pub wall_friction: [f64; 2],
    pub floor_friction: f64,
    pub tool_radius: f64,
    pub start_offset: f64,
    pub success_radius: f64,
    pub random_heading: bool,
}

impl Default for MazeConfig {
    fn default() -> Self {
        Self {
            width: [0.05, 0.06],
            length: [0.95, 1.10],
            bends: 0,
            bend_deg: [20.0, 45.0],
            bend_position: [0.35, 0.65],
            disc_segment: false,
            disc_radius: 0.08,
            undulation: 0.0,
            wall_friction: [0.2, 0.4],
            floor_friction: 0.1,
            tool_radius: 0.0125,
            start_offset: 0.02,
            success_radius: 0.03,
            random_heading: true,
        }
    }
}

impl MazeConfig {
    /// Unseen evaluation layouts: one bend and height variation.
    pub fn evaluation() -> Self {
        Self {
            bends: 1,
            undulation: 0.04,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        ordered("width", self.width)?;
        ordered("length", self.length)?;
        ordered("bend_deg", self.bend_deg)?;
        ordered("bend_position", self.bend_position)?;
        ordered("wall_friction", self.wall_friction)?;
        if !(self.width[0] > 2.0 * self.tool_radius) {
            return Err(PptError::Config("corridor must be wider than the tool".into()));
        }
        if !(self.length[0] > 0.0) || !(0.0..=0.1).contains(&self.undulation) {
            return Err(PptError::Config("length must be positive and undulation within 10 cm".into()));
        }
        if !(self.bend_position[0] > 0.0 && self.bend_position[1] < 1.0) {
            return Err(PptError::Config("bend positions must lie inside (0, 1)".into()));
        }
        Ok(())
    }
}

/// Corridor layout, stored as structured text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeGeometry {
    /// Centerline vertices in the world frame.
    pub vertices: Vec<[f64; 2]>,
    pub width: f64,
    /// Floor height knots `(s, z)` along the centerline arclength.
    pub heights: Vec<[f64; 2]>,
    pub wall_friction: f64,
    pub floor_friction: f64,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

/// Closest centerline point to a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub point: Vector2<f64>,
    pub distance: f64,
    pub s: f64,
    pub tangent: Vector2<f64>,
}

fn cosine_blend(a: f64, b: f64, u: f64) -> (f64, f64) {
    let w = 0.5 - 0.5 * (PI * u).cos();
    let dw = 0.5 * PI * (PI * u).sin();
    (a + (b - a) * w, (b - a) * dw)
}

impl MazeGeometry {
    pub fn new(vertices: Vec<[f64; 2]>, width: f64, heights: Vec<[f64; 2]>, wall_friction: f64, floor_friction: f64) -> Result<Self> {
        let mut g = Self {
            vertices,
            width,
            heights,
            wall_friction,
            floor_friction,
            cumulative: Vec::new(),
        };
        g.finish()?;
        Ok(g)
    }

    fn finish(&mut self) -> Result<()> {
        if self.vertices.len() < 2 {
            return Err(PptError::InvalidInput("maze needs at least two vertices".into()));
        }
        if !(self.width > 0.0) {
            return Err(PptError::InvalidInput("maze width must be positive".into()));
        }
        let mut acc = vec![0.0];
        for w in self.vertices.windows(2) {
            let len = (Vector2::from(w[1]) - Vector2::from(w[0])).norm();
            if !(len > 0.0) {
                return Err(PptError::InvalidInput("degenerate maze segment".into()));
            }
            acc.push(acc.last().unwrap() + len);
        }
        if self.heights.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return Err(PptError::InvalidInput("height knots must increase in s".into()));
        }
        self.cumulative = acc;
        Ok(())
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn start(&self) -> Vector2<f64> {
        Vector2::from(self.vertices[0])
    }

    pub fn end(&self) -> Vector2<f64> {
        Vector2::from(*self.vertices.last().unwrap())
    }

    pub fn heading(&self) -> f64 {
        let d = Vector2::from(self.vertices[1]) - self.start();
        d.y.atan2(d.x)
    }

    pub fn locate(&self, p: &Vector2<f64>) -> Location {
        let mut best = Location {
            point: self.start(),
            distance: f64::INFINITY,
            s: 0.0,
            tangent: Vector2::x(),
        };
        for (i, w) in self.vertices.windows(2).enumerate() {
            let (a, b) = (Vector2::from(w[0]), Vector2::from(w[1]));
            let (q, t) = closest_on_segment(p, &a, &b);
            let d = (p - q).norm();
            if d < best.distance {
                let seg = self.cumulative[i + 1] - self.cumulative[i];
                best = Location {
                    point: q,
                    distance: d,
                    s: self.cumulative[i] + t * seg,
                    tangent: (b - a) / seg,
                };
            }
        }
        best
    }

    /// Floor height and its slope `dz/ds`.
    pub fn floor(&self, s: f64) -> (f64, f64) {
        let h = &self.heights;
        match h.len() {
            0 => (0.0, 0.0),
            1 => (h[0][1], 0.0),
            _ => {
                if s <= h[0][0] {
                    return (h[0][1], 0.0);
                }
                if s >= h[h.len() - 1][0] {
                    return (h[h.len() - 1][1], 0.0);
                }
                let i = h.partition_point(|k| k[0] <= s) - 1;
                let span = h[i + 1][0] - h[i][0];
                let (z, dz) = cosine_blend(h[i][1], h[i + 1][1], (s - h[i][0]) / span);
                (z, dz / span)
            }
        }
    }

    /// Total turning of the centerline, radians.
    pub fn turn_angles(&self) -> Vec<f64> {
        self.vertices
            .windows(3)
            .map(|w| {
                let a = Vector2::from(w[1]) - Vector2::from(w[0]);
                let b = Vector2::from(w[2]) - Vector2::from(w[1]);
                (a.x * b.y - a.y * b.x).atan2(a.dot(&b))
            })
            .collect()
    }

    fn feasible(&self, tool_radius: f64) -> bool {
        let n = self.vertices.len();
        let c = &self.cumulative;
        if self.width <= 2.0 * tool_radius {
            return false;
        }
        // Straight runs at both ends must fit the tool comfortably.
        if c[1] - c[0] < 3.0 * self.width || c[n - 1] - c[n - 2] < 3.0 * self.width {
            return false;
        }
        // Parts of the centerline that are far apart along the path must stay apart in space.
        for k in 0..n {
            let p = Vector2::from(self.vertices[k]);
            for j in 0..n - 1 {
                let along = if c[j] > c[k] { c[j] - c[k] } else { c[k] - c[j + 1] };
                if along < 4.0 * self.width {
                    continue;
                }
                let (q, _) = closest_on_segment(&p, &Vector2::from(self.vertices[j]), &Vector2::from(self.vertices[j + 1]));
                if (p - q).norm() < 2.0 * self.width {
                    return false;
                }
            }
        }
        true
    }

    /// Seeded layout; resamples infeasible draws up to a fixed attempt budget.
    pub fn generate(cfg: &MazeConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..MAX_GEOMETRY_ATTEMPTS {
            let g = Self::sample(cfg, &mut rng)?;
            if g.feasible(cfg.tool_radius) {
                return Ok(g);
            }
        }
        Err(PptError::InfeasibleGeometry { attempts: MAX_GEOMETRY_ATTEMPTS })
    }

    fn sample(cfg: &MazeConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let uni = |rng: &mut ChaCha8Rng, r: [f64; 2]| if r[1] > r[0] { rng.random_range(r[0]..=r[1]) } else { r[0] };
        let width = uni(rng, cfg.width);
        let length = uni(rng, cfg.length);
        let mut heading = if cfg.random_heading { rng.random_range(-PI..PI) } else { 0.0 };
        let wall_friction = uni(rng, cfg.wall_friction);
        // Bend locations along the length, sorted.
        let mut cuts: Vec<f64> = (0..cfg.bends)
            .map(|i| {
                let lo = cfg.bend_position[0] + (cfg.bend_position[1] - cfg.bend_position[0]) * i as f64 / cfg.bends as f64;
                let hi = cfg.bend_position[0] + (cfg.bend_position[1] - cfg.bend_position[0]) * (i + 1) as f64 / cfg.bends as f64;
                uni(rng, [lo, hi]) * length
            })
            .collect();
        cuts.push(length);
        let disc_at = if cfg.disc_segment && cfg.bends > 0 { Some(rng.random_range(0..cfg.bends)) } else { None };
        let mut p = Vector2::zeros();
        let mut verts = vec![[0.0, 0.0]];
        let mut travelled = 0.0;
        for (i, &cut) in cuts.iter().enumerate() {
            let dir = Vector2::new(heading.cos(), heading.sin());
            p += dir * (cut - travelled);
            travelled = cut;
            verts.push([p.x, p.y]);
            if i == cuts.len() - 1 {
                break;
            }
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let turn = sign * uni(rng, cfg.bend_deg).to_radians();
            if disc_at == Some(i) {
                // Replace the corner by a circular arc of the same turn.
                let r = cfg.disc_radius;
                let half = r * (turn.abs() / 2.0).tan();
                let back = p - dir * half;
                verts.pop();
                verts.push([back.x, back.y]);
                let center = back + Vector2::new(-dir.y, dir.x) * (r * sign);
                let steps = ((turn.abs() / 3f64.to_radians()).ceil() as usize).max(2);
                for k in 1..=steps {
                    let a = heading - sign * PI / 2.0 + turn * k as f64 / steps as f64;
                    let q = center + Vector2::new(a.cos(), a.sin()) * r;
                    verts.push([q.x, q.y]);
                }
                let exit = Vector2::from(*verts.last().unwrap());
                heading += turn;
                let new_dir = Vector2::new(heading.cos(), heading.sin());
                p = exit - new_dir * half;
                // Shift bookkeeping so the straight part after the arc keeps its length.
                travelled -= half;
                continue;
            }
            heading += turn;
        }
        let heights = if cfg.undulation > 0.0 {
            let knots = 6;
            (0..=knots)
                .map(|k| {
                    let s = length * k as f64 / knots as f64;
                    let z = if k == 0 { 0.0 } else { rng.random_range(0.0..=cfg.undulation) };
                    [s, z]
                })
                .collect()
        } else {
            Vec::new()
        };
        let mut g = Self {
            vertices: verts,
            width,
            heights,
            wall_friction,
            floor_friction: cfg.floor_friction,
            cumulative: Vec::new(),
        };
        g.finish()?;
        Ok(g)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut g: Self = serde_json::from_str(text)?;
        g.finish()?;
        Ok(g)
    }
}

#[derive(Debug, Clone)]
pub struct MazeEnv {
    cfg: TaskConfig,
    geometry: Option<MazeGeometry>,
    fixed_geometry: Option<MazeGeometry>,
    frame: Frame,
    tool: ToolState,
    t: f64,
    audit: EnergyAudit,
    force: Vector3<f64>,
    wall: Option<Contact>,
    progress: f64,
    done: bool,
    success: bool,
    last_obs: Vec<f64>,
}

impl MazeEnv {
    pub fn new(cfg: TaskConfig) -> Self {
        Self {
            cfg,
            geometry: None,
            fixed_geometry: None,
            frame: Frame::default(),
            tool: ToolState::default(),
            t: 0.0,
            audit: EnergyAudit::default(),
            force: Vector3::zeros(),
            wall: None,
            progress: 0.0,
            done: false,
            success: false,
            last_obs: vec![0.0; obs::DIM],
        }
    }

    /// Uses `geometry` for every subsequent reset instead of generating one.
    pub fn with_geometry(mut self, geometry: MazeGeometry) -> Self {
        self.fixed_geometry = Some(geometry);
        self
    }

    pub fn geometry(&self) -> Option<&MazeGeometry> {
        self.geometry.as_ref()
    }

    fn geo(&self) -> &MazeGeometry {
        self.geometry.as_ref().expect("reset before stepping")
    }

    pub fn place_tool(&mut self, tool: ToolState) {
        self.tool = tool;
        self.audit = EnergyAudit {
            initial_kinetic: tool.kinetic_energy(&self.cfg.tool),
            kinetic: tool.kinetic_energy(&self.cfg.tool),
            ..Default::default()
        };
    }

    fn contacts(&self, dt: f64) -> (Option<Contact>, Option<Contact>) {
        let g = self.geo();
        let r = self.cfg.maze.tool_radius;
        let p = self.tool.pos.xy();
        let loc = g.locate(&p);
        let m = self.cfg.tool.mass;
        let wall = {
            let depth = loc.distance - (0.5 * g.width - r);
            if depth > 0.0 && loc.distance > 1e-12 {
                let n = (loc.point - p) / loc.distance;
                resolve(&self.cfg.contact, g.wall_friction, self.tool.pos, lift(&n, 0.0), depth, &self.tool.vel, m, dt)
            } else {
                None
            }
        };
        let floor = {
            let (z, slope) = g.floor(loc.s);
            let n = Vector3::new(-slope * loc.tangent.x, -slope * loc.tangent.y, 1.0);
            let norm = n.norm();
            let depth = (z - self.tool.pos.z) / norm;
            resolve(&self.cfg.contact, g.floor_friction, self.tool.pos, n / norm, depth, &self.tool.vel, m, dt)
        };
        (wall, floor)
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

    fn compute_progress(&self) -> f64 {
        let g = self.geo();
        (g.locate(&self.tool.pos.xy()).s / g.length()).clamp(0.0, 1.0)
    }
}

impl Environment for MazeEnv {
    fn config(&self) -> &TaskConfig {
        &self.cfg
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let g = match &self.fixed_geometry {
            Some(g) => g.clone(),
            None => MazeGeometry::generate(&self.cfg.maze, seed)?,
        };
        let heading = g.heading();
        let start = g.start() + Vector2::new(heading.cos(), heading.sin()) * self.cfg.maze.start_offset;
        let (z0, _) = g.floor(self.cfg.maze.start_offset);
        self.geometry = Some(g);
        self.frame = Frame {
            origin: Vector3::new(start.x, start.y, z0),
            yaw: heading,
        };
        self.place_tool(ToolState {
            pos: self.frame.origin,
            yaw: heading,
            ..Default::default()
        });
        self.t = 0.0;
        self.force = Vector3::zeros();
        self.wall = None;
        self.done = false;
        self.success = false;
        self.progress = self.compute_progress();
        self.last_obs = self.observe(true);
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
        let mut wall_contact = false;
        let mut peak = 0.0f64;
        let mut strongest: Option<Contact> = None;
        for _ in 0..cfg.substeps {
            let (wall, floor) = self.contacts(sub_dt);
            let mut f = Vector3::zeros();
            for c in wall.iter().chain(floor.iter()) {
                f += c.force();
            }
            if let Some(w) = wall {
                wall_contact = true;
                if strongest.is_none_or(|s| s.normal_force < w.normal_force) {
                    strongest = Some(w);
                }
            }
            peak = peak.max(f.norm());
            self.force = f;
            self.tool.integrate(&cfg.tool, &control, &f, 0.0, sub_dt, &mut self.audit);
        }
        self.wall = strongest;
        self.t += cfg.dt;
        if !self.tool.is_finite() {
            return Err(PptError::SimulationDiverged { t: self.t });
        }
        let progress = self.compute_progress();
        let delta = progress - self.progress;
        self.progress = progress;
        let g = self.geo();
        let success = (self.tool.pos.xy() - g.end()).norm() < cfg.maze.success_radius;
        let safety = delivered_power > cfg.safety_factor * cfg.power_budget;
        let timeout = self.t >= cfg.horizon - 1e-9;
        let r = reward(
            &cfg.reward,
            &RewardInput {
                progress_delta: delta,
                reached_goal: success,
                path_score: 0.0,
                contact: wall_contact,
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
            contact: wall_contact,
            wrench_norm: peak,
            safety_violation: safety && !success,
        })
    }

    fn observe(&self, _privileged: bool) -> Vec<f64> {
        let mut o = vec![0.0; obs::DIM];
        write_tool_obs(&mut o, &self.frame, &self.tool, &self.force, 0.0, self.phase());
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
        self.frame
    }

    fn last_contact(&self) -> Option<ContactSample> {
        self.wall.map(|c| ContactSample {
            t: self.t,
            phase: self.phase(),
            position: self.frame.point_to_local(&self.tool.pos),
            normal: self.frame.vector_to_local(&c.normal),
            force: c.normal_force,
        })
    }

    fn body_pose(&self) -> Option<[f64; 3]> {
        None
    }

    fn progress(&self) -> f64 {
        self.progress
    }
}
