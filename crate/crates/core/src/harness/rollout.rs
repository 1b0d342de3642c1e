//! One episode of any variant: policy decision, reference or servo command,
//! tank gating and environment stepping.

use nalgebra::{DMatrix, DVector, Vector2, Vector3, Vector6};
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::prior::{primitive_dims, MAZE_END_PHASE};
use crate::energy_tank::{instantaneous_power, step_power, TankConfig, TankState, TankTrace};
use crate::envs::{Command, Environment, Frame, TaskKind, TrajectoryRow, Waypoint, WaypointDetector};
use crate::error::{PptError, Result};
use crate::impedance::{compute_wrench, saturate, yaw_rotation, ImpedanceGains, PoseTarget};
use crate::metrics::EpisodeLog;
use crate::policy::{ActionMode, ActorCritic, RunningNorm};
use crate::promp::{PrimitiveModel, ViaPoint, ViaPointSet, WeightDistribution};

/// Policy network plus its observation normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub model: ActorCritic,
    pub norm: RunningNorm,
}

impl Agent {
    pub fn new(cfg: &RunConfig, action_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let obs_dim = crate::envs::obs::DIM;
        let model = ActorCritic::new(
            obs_dim,
            Some(crate::envs::obs::actor_inputs()),
            action_dim,
            &cfg.ppo.hidden,
            cfg.ppo.init_log_std,
            rng,
        )?;
        Ok(Self {
            model,
            norm: RunningNorm::new(obs_dim),
        })
    }
}

/// Action width for a configuration: all weights for primitives, three
/// velocity components otherwise.
pub fn action_dim(cfg: &RunConfig, prior: Option<&PrimitiveModel>) -> Result<usize> {
    if cfg.variant.uses_promp() {
        prior
            .map(|p| p.basis.weight_len())
            .ok_or_else(|| PptError::Config("primitive variants need a prior".into()))
    } else {
        Ok(3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOptions {
    pub deterministic: bool,
    /// Expose privileged observation fields to the critic.
    pub privileged: bool,
    pub update_norm: bool,
    /// Use the policy; otherwise the action is zero (prior mean / idle servo).
    pub use_policy: bool,
    /// Condition the prior on the start before acting.
    pub condition_start: bool,
    pub replan: bool,
    pub record: bool,
}

impl EpisodeOptions {
    pub fn training() -> Self {
        Self {
            deterministic: false,
            privileged: true,
            update_norm: true,
            use_policy: true,
            condition_start: true,
            replan: true,
            record: false,
        }
    }

    pub fn evaluation() -> Self {
        Self {
            deterministic: true,
            privileged: false,
            update_norm: false,
            ..Self::training()
        }
    }

    /// The unconditioned prior mean, executed open loop.
    pub fn open_loop_prior() -> Self {
        Self {
            use_policy: false,
            condition_start: false,
            replan: false,
            ..Self::evaluation()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub log: EpisodeLog,
    pub tank: TankTrace,
    pub transitions: Vec<Transition>,
    pub trajectory: Vec<TrajectoryRow>,
    pub waypoints: Vec<Waypoint>,
    pub episode_return: f64,
    pub success: bool,
    pub safety_violation: bool,
    pub diverged: Option<String>,
    pub audit_residual: f64,
}

/// Shared, read-only pieces of a rollout.
#[derive(Debug, Clone)]
pub struct Runner {
    cfg: RunConfig,
    prior: Option<PrimitiveModel>,
    gains: ImpedanceGains,
    tank: TankConfig,
}

struct Plan {
    base: ViaPointSet,
    weights: Vec<f64>,
    residual: Vec<f64>,
    dims: usize,
}

impl Runner {
    pub fn new(cfg: &RunConfig, prior: Option<PrimitiveModel>) -> Result<Self> {
        cfg.validate()?;
        if cfg.variant.uses_promp() && prior.is_none() {
            return Err(PptError::Config("primitive variants need a prior".into()));
        }
        Ok(Self {
            gains: cfg.gains.gains()?,
            tank: cfg.tank_config()?,
            cfg: cfg.clone(),
            prior,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn prior(&self) -> Option<&PrimitiveModel> {
        self.prior.as_ref()
    }

    pub fn tank(&self) -> &TankConfig {
        &self.tank
    }

    fn weights_for(&self, vias: &ViaPointSet, residual: &[f64], flex: f64) -> Result<Vec<f64>> {
        let prior = self.prior.as_ref().expect("checked at construction");
        let model = if vias.is_empty() {
            prior.clone()
        } else if flex > 0.0 {
            let n = prior.dist.len();
            let widened = WeightDistribution::new(prior.dist.mean().clone(), prior.dist.cov() + DMatrix::identity(n, n) * flex)?;
            PrimitiveModel::new(prior.basis.clone(), widened)?.condition(vias)?
        } else {
            prior.condition(vias)?
        };
        let mean = model.dist.mean();
        if residual.iter().all(|a| *a == 0.0) {
            return Ok(mean.iter().copied().collect());
        }
        let l: DMatrix<f64> = model.dist.sqrt_factor()?;
        let a = DVector::from_column_slice(residual);
        let w = mean + l * a * self.cfg.primitive.residual_scale;
        Ok(w.iter().copied().collect())
    }

    fn start_via(&self, frame: &Frame, env: &dyn Environment, dims: usize) -> Result<ViaPoint> {
        let p = frame.point_to_local(&env.tool().pos);
        ViaPoint::isotropic(0.0, &p.as_slice()[..dims], self.cfg.primitive.start_variance)
    }

    /// Via-points after a new waypoint: the waypoints, the current position and a
    /// terminal point continuing along the new wall for the remaining prior length.
    fn replan_vias(&self, plan: &Plan, waypoints: &[Waypoint], here: &Vector3<f64>, phase: f64) -> Result<ViaPointSet> {
        let prior = self.prior.as_ref().expect("checked at construction");
        let d = plan.dims;
        let mut vias = plan.base.clone();
        for w in waypoints {
            if w.phase < phase {
                vias.push(w.to_via(d)?)?;
            }
        }
        let zvar = self.cfg.waypoints.z_variance;
        let var = |n: usize| DMatrix::from_fn(n, n, |i, j| if i != j { 0.0 } else if i == 2 { zvar } else { 1e-6 });
        vias.push(ViaPoint::new(phase, DVector::from_column_slice(&here.as_slice()[..d]), Some(var(d)))?)?;
        let last = waypoints.last().expect("called with a waypoint");
        let p0 = prior.basis.decode(prior.dist.mean().as_slice(), 0.0)?;
        let p1 = prior.basis.decode(prior.dist.mean().as_slice(), 1.0)?;
        let total = (Vector2::new(p1[0], p1[1]) - Vector2::new(p0[0], p0[1])).norm();
        let mut travelled = 0.0;
        let mut prev = Vector2::new(p0[0], p0[1]);
        for w in waypoints {
            let q = w.position.xy();
            travelled += (q - prev).norm();
            prev = q;
        }
        let remaining = (total - travelled).max(0.0);
        let perp = |n: &Vector3<f64>| Vector2::new(-n.y, n.x).normalize();
        let mut before = perp(&last.normal_before);
        if before.dot(&(Vector2::new(p1[0], p1[1]) - Vector2::new(p0[0], p0[1]))) < 0.0 {
            before = -before;
        }
        let mut after = perp(&last.normal_after);
        if after.dot(&before) < 0.0 {
            after = -after;
        }
        let n_after = last.normal_after.xy().normalize();
        let end = last.position.xy() + after * remaining - n_after * self.cfg.primitive.press;
        let end_phase = MAZE_END_PHASE.max((phase + 0.05).min(1.0));
        let mut target = vec![end.x, end.y];
        if d > 2 {
            target.push(p1[2]);
        }
        let mut cov = var(d);
        cov[(0, 0)] = 1e-4;
        cov[(1, 1)] = 1e-4;
        for ph in [end_phase, 1.0] {
            vias.push(ViaPoint::new(ph, DVector::from_vec(target.clone()), Some(cov.clone()))?)?;
        }
        Ok(vias)
    }

    fn reference(&self, plan: &Plan, phase: f64) -> Result<(Vector3<f64>, Vector3<f64>)> {
        let prior = self.prior.as_ref().expect("checked at construction");
        let horizon = self.cfg.env.horizon;
        let h = self.cfg.env.dt / horizon;
        let lo = (phase - h).max(0.0);
        let hi = (phase + h).min(1.0);
        let y = prior.basis.decode(&plan.weights, phase.clamp(0.0, 1.0))?;
        let y_lo = prior.basis.decode(&plan.weights, lo)?;
        let y_hi = prior.basis.decode(&plan.weights, hi)?;
        let mut p = Vector3::zeros();
        let mut v = Vector3::zeros();
        for i in 0..plan.dims.min(3) {
            p[i] = y[i];
            v[i] = (y_hi[i] - y_lo[i]) / ((hi - lo) * horizon);
        }
        Ok((p, v))
    }

    fn velocity_command(&self, frame: &Frame, action: &[f64]) -> (Vector3<f64>, f64) {
        let s = &self.cfg.env.servo;
        let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let (local, yaw_rate) = match self.cfg.task {
            TaskKind::Pushing => (Vector3::new(a[0], a[1], 0.0) * s.v_max, a[2] * s.w_max),
            TaskKind::Maze => (Vector3::new(a[0], a[1], a[2]) * s.v_max, 0.0),
        };
        (frame.vector_to_world(&local), yaw_rate)
    }

    fn decide(
        &self,
        env: &dyn Environment,
        agent: &mut Agent,
        opts: &EpisodeOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, Transition)> {
        let raw = env.observe(opts.privileged);
        if opts.update_norm {
            agent.norm.update(&raw)?;
        }
        let obs = agent.norm.normalize(&raw);
        let dim = agent.model.action_dim();
        let (action, log_prob, mean, value) = if opts.use_policy {
            let s = agent.model.act(&obs, rng, opts.deterministic)?;
            (s.action, s.log_prob, s.mean, s.value)
        } else {
            (vec![0.0; dim], 0.0, vec![0.0; dim], 0.0)
        };
        let t = Transition {
            obs,
            action: action.clone(),
            log_prob,
            reward: 0.0,
            value,
            done: false,
            mean,
        };
        Ok((action, t))
    }

    /// Runs one episode from `reset(seed)` until termination.
    pub fn run_episode(
        &self,
        env: &mut dyn Environment,
        agent: &mut Agent,
        seed: u64,
        opts: EpisodeOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<EpisodeResult> {
        let cfg = &self.cfg;
        env.reset(seed)?;
        let frame = env.task_frame();
        let steps = env.config().steps();
        let dt = env.config().dt;
        let tool_params = env.config().tool;
        let mut log = EpisodeLog::new(dt, env.config().horizon);
        let mut trace = TankTrace::default();
        let mut tank_state = TankState::new(&self.tank);
        let mut transitions: Vec<Transition> = Vec::new();
        let mut trajectory = Vec::new();
        let mut detector = WaypointDetector::new(cfg.waypoints);
        let promp = cfg.variant.uses_promp();
        let interval = match cfg.action {
            ActionMode::EpisodePromp => usize::MAX,
            ActionMode::ResidualPrompStep => cfg.primitive.replan_interval,
            ActionMode::CartesianVelocity => cfg.velocity.control_interval,
        };
        let replan = promp && opts.replan && cfg.primitive.replan && cfg.task == TaskKind::Maze;
        let mut plan = if promp {
            let dims = primitive_dims(cfg.task);
            let mut base = ViaPointSet::new();
            if opts.condition_start {
                base.push(self.start_via(&frame, env, dims)?)?;
            }
            Some(Plan {
                base,
                weights: Vec::new(),
                residual: Vec::new(),
                dims,
            })
        } else {
            None
        };
        let mut velocity = (Vector3::zeros(), 0.0);
        let mut pending: Option<Transition> = None;
        let mut episode_return = 0.0;
        let mut success = false;
        let mut safety = false;
        let mut diverged = None;

        for k in 0..steps {
            if k == 0 || (interval != usize::MAX && k % interval == 0) {
                let (action, t) = self.decide(env, agent, &opts, rng)?;
                if let Some(prev) = pending.replace(t) {
                    transitions.push(prev);
                }
                match plan.as_mut() {
                    Some(p) => {
                        p.residual = action;
                        p.weights = if detector.waypoints().is_empty() {
                            self.weights_for(&p.base, &p.residual, 0.0)?
                        } else {
                            let here = frame.point_to_local(&env.tool().pos);
                            let vias = self.replan_vias(p, detector.waypoints(), &here, env.phase())?;
                            self.weights_for(&vias, &p.residual, cfg.primitive.replan_variance)?
                        };
                    }
                    None => velocity = self.velocity_command(&frame, &action),
                }
            }
            let tool = *env.tool();
            let twist = tool.twist();
            let nominal: Vector6<f64> = match plan.as_ref() {
                Some(p) => {
                    let (pos, vel) = self.reference(p, env.phase())?;
                    let mut target_pos = frame.point_to_world(&pos);
                    if p.dims < 3 {
                        target_pos.z = frame.origin.z;
                    }
                    let target = PoseTarget::new(target_pos, yaw_rotation(frame.yaw))?
                        .with_velocity(frame.vector_to_world(&vel), Vector3::zeros());
                    compute_wrench(&self.gains, &target, &tool.pose(), &twist)?
                }
                None => env.servo_wrench(&velocity.0, velocity.1),
            };
            let nominal = saturate(&nominal, tool_params.max_force, tool_params.max_torque);
            let (_, p) = instantaneous_power(&nominal, &twist);
            let (gamma, next) = step_power(&self.tank, &tank_state, p);
            next.check(&self.tank)?;
            tank_state = next;
            let delivered = gamma * p;
            let out = match env.step(&Command::Wrench(nominal * gamma), delivered) {
                Ok(o) => o,
                Err(PptError::SimulationDiverged { t }) => {
                    diverged = Some(format!("simulation diverged at t = {t}"));
                    break;
                }
                Err(e) => return Err(e),
            };
            let t = env.time();
            episode_return += out.reward;
            if let Some(pt) = pending.as_mut() {
                pt.reward += out.reward;
            }
            let pos = env.tool().pos;
            log.push(t, [pos.x, pos.y, pos.z], out.wrench_norm, p, gamma, out.contact, out.progress);
            trace.push(t, p, gamma, tank_state.energy);
            let contact = env.last_contact();
            if opts.record {
                let body = env.body_pose().unwrap_or([f64::NAN; 3]);
                let n = contact.map(|c| frame.vector_to_world(&c.normal)).unwrap_or_else(Vector3::zeros);
                trajectory.push(TrajectoryRow {
                    t,
                    x: pos.x,
                    y: pos.y,
                    z: pos.z,
                    yaw: env.tool().yaw,
                    body_x: body[0],
                    body_y: body[1],
                    body_yaw: body[2],
                    contact: out.contact,
                    contact_force: contact.map_or(0.0, |c| c.force),
                    normal_x: n.x,
                    normal_y: n.y,
                    normal_z: n.z,
                    power: p,
                    gamma,
                });
            }
            if replan {
                if detector.push(contact.as_ref()).is_some() {
                    let p = plan.as_mut().expect("replanning implies a plan");
                    let here = frame.point_to_local(&pos);
                    let vias = self.replan_vias(p, detector.waypoints(), &here, env.phase())?;
                    p.weights = self.weights_for(&vias, &p.residual, cfg.primitive.replan_variance)?;
                }
            }
            success = out.success;
            safety = out.safety_violation;
            if out.done {
                break;
            }
        }
        if let Some(mut last) = pending.take() {
            last.done = true;
            transitions.push(last);
        }
        log.success = success;
        Ok(EpisodeResult {
            log,
            tank: trace,
            transitions,
            trajectory,
            waypoints: detector.waypoints().to_vec(),
            episode_return,
            success,
            safety_violation: safety,
            diverged,
            audit_residual: env.audit().relative_residual(),
        })
    }
}
