//! Contact-inferred waypoints.
//!
//! Consecutive contact samples whose normals stay within a tolerance of the first
//! sample form a cluster; clusters with at least `min_samples` samples are
//! sustained. When a sustained cluster's mean normal differs from the last anchor
//! cluster by more than the turn threshold, a waypoint is emitted at the anchor's
//! exit and the new cluster becomes the anchor.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::promp::{ViaPoint, ViaPointSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactSample {
    pub t: f64,
    pub phase: f64,
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub force: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaypointConfig {
    pub min_force: f64,
    pub min_samples: usize,
    pub cluster_tol_deg: f64,
    pub turn_deg: f64,
    /// Contact-free steps tolerated inside a cluster.
    pub max_gap: usize,
    /// Trailing samples of the anchor used for the covariance.
    pub spread_samples: usize,
    pub min_variance: f64,
    pub z_variance: f64,
}

impl Default for WaypointConfig {
    fn default() -> Self {
        Self {
            min_force: 0.05,
            min_samples: 10,
            cluster_tol_deg: 5.0,
            turn_deg: 15.0,
            max_gap: 3,
            spread_samples: 10,
            min_variance: 1e-6,
            z_variance: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waypoint {
    pub t: f64,
    pub phase: f64,
    pub position: Vector3<f64>,
    pub cov: Matrix3<f64>,
    pub normal_before: Vector3<f64>,
    pub normal_after: Vector3<f64>,
}

impl Waypoint {
    /// Via-point over the first `dims` coordinates.
    pub fn to_via(&self, dims: usize) -> Result<ViaPoint> {
        let target = DVector::from_column_slice(&self.position.as_slice()[..dims]);
        let cov = DMatrix::from_fn(dims, dims, |i, j| self.cov[(i, j)]);
        ViaPoint::new(self.phase, target, Some(cov))
    }

    /// Turn angle between the walls before and after, in radians.
    pub fn turn(&self) -> f64 {
        angle(&self.normal_before, &self.normal_after)
    }
}

fn angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let c = a.dot(b) / (a.norm() * b.norm()).max(1e-300);
    c.clamp(-1.0, 1.0).acos()
}

#[derive(Debug, Clone, Default)]
struct Cluster {
    samples: Vec<ContactSample>,
    normal_sum: Vector3<f64>,
}

impl Cluster {
    fn start(s: ContactSample) -> Self {
        Self {
            normal_sum: s.normal,
            samples: vec![s],
        }
    }

    fn first_normal(&self) -> Vector3<f64> {
        self.samples[0].normal
    }

    fn mean_normal(&self) -> Vector3<f64> {
        self.normal_sum.normalize()
    }

    fn push(&mut self, s: ContactSample) {
        self.normal_sum += s.normal;
        self.samples.push(s);
    }
}

#[derive(Debug, Clone, Default)]
pub struct WaypointDetector {
    cfg: WaypointConfig,
    current: Option<Cluster>,
    anchor: Option<Cluster>,
    current_is_anchor: bool,
    gap: usize,
    emitted: Vec<Waypoint>,
}

impl WaypointDetector {
    pub fn new(cfg: WaypointConfig) -> Self {
        Self {
            cfg,
            ..Default::default()
        }
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.emitted
    }

    fn close_current(&mut self) {
        if let Some(c) = self.current.take() {
            if self.current_is_anchor {
                self.anchor = Some(c);
            }
        }
        self.current_is_anchor = false;
    }

    /// Feeds one control step; `None` or weak samples count as no contact.
    pub fn push(&mut self, sample: Option<&ContactSample>) -> Option<Waypoint> {
        let s = match sample {
            Some(s) if s.force >= self.cfg.min_force && s.normal.norm() > 0.0 => *s,
            _ => {
                self.gap += 1;
                if self.gap > self.cfg.max_gap {
                    self.close_current();
                }
                return None;
            }
        };
        self.gap = 0;
        let tol = self.cfg.cluster_tol_deg.to_radians();
        match &mut self.current {
            Some(c) if angle(&c.first_normal(), &s.normal) <= tol => c.push(s),
            _ => {
                self.close_current();
                self.current = Some(Cluster::start(s));
            }
        }
        let cur = self.current.as_ref().expect("cluster just updated");
        if cur.samples.len() != self.cfg.min_samples {
            return None;
        }
        let Some(anchor) = &self.anchor else {
            self.current_is_anchor = true;
            return None;
        };
        if angle(&anchor.mean_normal(), &cur.mean_normal()) <= self.cfg.turn_deg.to_radians() {
            return None;
        }
        let wp = self.waypoint_from(anchor, cur);
        self.anchor = None;
        self.current_is_anchor = true;
        self.emitted.push(wp.clone());
        Some(wp)
    }

    fn waypoint_from(&self, anchor: &Cluster, next: &Cluster) -> Waypoint {
        let exit = *anchor.samples.last().expect("non-empty cluster");
        let k = self.cfg.spread_samples.clamp(1, anchor.samples.len());
        let tail = &anchor.samples[anchor.samples.len() - k..];
        let mean = tail.iter().map(|s| s.position).sum::<Vector3<f64>>() / k as f64;
        let mut cov = Matrix3::zeros();
        for s in tail {
            let d = s.position - mean;
            cov += d * d.transpose();
        }
        cov /= k as f64;
        cov += Matrix3::identity() * self.cfg.min_variance;
        cov[(2, 2)] = cov[(2, 2)].max(self.cfg.z_variance);
        Waypoint {
            t: exit.t,
            phase: exit.phase,
            position: exit.position,
            cov,
            normal_before: anchor.mean_normal(),
            normal_after: next.mean_normal(),
        }
    }
}

/// Offline detection over a whole episode; samples with zero force are gaps.
pub fn infer_waypoints(log: &[ContactSample], cfg: &WaypointConfig) -> Result<(ViaPointSet, Vec<Waypoint>)> {
    let mut det = WaypointDetector::new(*cfg);
    for s in log {
        det.push(Some(s));
    }
    let wps = det.waypoints().to_vec();
    let set = ViaPointSet::from_points(wps.iter().map(|w| w.to_via(3)).collect::<Result<_>>()?)?;
    Ok((set, wps))
}
