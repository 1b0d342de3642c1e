//! Penalty contact with smoothed Coulomb friction, plus 2-D closest-point helpers.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    pub k_n: f64,
    pub d_n: f64,
    /// tanh regularization scale of the friction law, m/s.
    pub velocity_scale: f64,
    /// Tangential stiffness and damping of the sticking (bristle) friction model.
    pub k_t: f64,
    pub d_t: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            k_n: 5000.0,
            d_n: 50.0,
            velocity_scale: 1e-3,
            k_t: 2000.0,
            d_t: 10.0,
        }
    }
}

/// Contact between a moving body and an obstacle or second body.
///
/// `normal` points from the obstacle toward the body receiving `force`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub depth: f64,
    pub normal_force: f64,
    pub friction: Vector3<f64>,
}

impl Contact {
    /// Total force on the body along `normal`.
    pub fn force(&self) -> Vector3<f64> {
        self.normal * self.normal_force + self.friction
    }
}

/// `max(0, k_n·δ + d_n·δ̇)`.
pub fn normal_force(params: &ContactParams, depth: f64, depth_rate: f64) -> f64 {
    if depth <= 0.0 {
        return 0.0;
    }
    (params.k_n * depth + params.d_n * depth_rate).max(0.0)
}

/// Friction opposing the tangential slip `v_t`, capped so one step of length `dt`
/// cannot reverse the slip of an effective mass `m_eff`.
pub fn friction_force(
    params: &ContactParams,
    mu: f64,
    normal_force: f64,
    v_t: &Vector3<f64>,
    m_eff: f64,
    dt: f64,
) -> Vector3<f64> {
    let speed = v_t.norm();
    if speed < 1e-15 || normal_force <= 0.0 {
        return Vector3::zeros();
    }
    let coulomb = mu * normal_force * (speed / params.velocity_scale).tanh();
    let cap = m_eff * speed / dt;
    -v_t * (coulomb.min(cap) / speed)
}

/// Friction from a tangential spring anchored where sticking began.
///
/// `anchor` is the accumulated tangential displacement; it is advanced by `v_t·dt`
/// and pulled back onto the cone boundary while slipping.
pub fn bristle_friction(
    params: &ContactParams,
    mu: f64,
    normal_force: f64,
    normal: &Vector3<f64>,
    v_t: &Vector3<f64>,
    anchor: &mut Vector3<f64>,
    dt: f64,
) -> Vector3<f64> {
    *anchor -= normal * anchor.dot(normal);
    *anchor += v_t * dt;
    if normal_force <= 0.0 {
        *anchor = Vector3::zeros();
        return Vector3::zeros();
    }
    let mut f = -(*anchor * params.k_t + v_t * params.d_t);
    let limit = mu * normal_force;
    let mag = f.norm();
    if mag > limit {
        f *= limit / mag;
        *anchor = -f / params.k_t;
    }
    f
}

/// Resolves one contact given the relative velocity of the body w.r.t. the obstacle.
#[allow(clippy::too_many_arguments)]
pub fn resolve(
    params: &ContactParams,
    mu: f64,
    point: Vector3<f64>,
    normal: Vector3<f64>,
    depth: f64,
    v_rel: &Vector3<f64>,
    m_eff: f64,
    dt: f64,
) -> Option<Contact> {
    if depth <= 0.0 {
        return None;
    }
    let vn = v_rel.dot(&normal);
    let n = normal_force(params, depth, -vn);
    let v_t = v_rel - normal * vn;
    Some(Contact {
        point,
        normal,
        depth,
        normal_force: n,
        friction: friction_force(params, mu, n, &v_t, m_eff, dt),
    })
}

/// Closest point on segment `[a, b]` to `p`, with its parameter in `[0, 1]`.
pub fn closest_on_segment(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> (Vector2<f64>, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (a + ab * t, t)
}

pub fn cross2(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

pub fn rotate2(v: &Vector2<f64>, angle: f64) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

pub fn lift(v: &Vector2<f64>, z: f64) -> Vector3<f64> {
    Vector3::new(v.x, v.y, z)
}
