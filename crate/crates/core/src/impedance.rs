//! Cartesian impedance law.
//!
//! `f = K_p e_x + K_d ė_x` with `e_x = x_d − x`, and a rotational spring-damper
//! driven by the SO(3) error `e_R = ½(R_dᵀR − RᵀR_d)^∨`. Because `e_R` measures
//! the current attitude relative to the desired one (the opposite sense of
//! `e_x`), the restoring torque is `τ = −K_{p,R} e_R + K_{d,R} ω_e`.

use nalgebra::{Matrix3, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{PptError, Result};

const ROTATION_TOL: f64 = 1e-9;

/// `S ↦ [S₂₁, S₀₂, S₁₀]`, the inverse of the hat map so that `hat(ω)·v = ω × v`.
pub fn vee(s: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)])
}

/// Skew-symmetric matrix of `w`.
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rotation about the world z axis.
pub fn yaw_rotation(yaw: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix()
}

pub fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err(PptError::InvalidRotation("non-finite entry".into()));
    }
    let ortho = (r.transpose() * r - Matrix3::identity()).amax();
    let det = r.determinant();
    if ortho > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
        return Err(PptError::InvalidRotation(format!(
            "orthogonality residual {ortho:e}, det {det}"
        )));
    }
    Ok(())
}

/// `½(R_dᵀR − RᵀR_d)^∨`.
pub fn orientation_error(desired: &Matrix3<f64>, current: &Matrix3<f64>) -> Result<Vector3<f64>> {
    check_rotation(desired)?;
    check_rotation(current)?;
    let a = desired.transpose() * current;
    Ok(vee(&(a - a.transpose())) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: Matrix3<f64>,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: Matrix3<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    /// Position plus a yaw about z.
    pub fn from_yaw(position: Vector3<f64>, yaw: f64) -> Self {
        Self::new(position, yaw_rotation(yaw))
    }
}

/// Desired pose and feed-forward velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseTarget {
    pub position: Vector3<f64>,
    pub orientation: Matrix3<f64>,
    pub linear_velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
}

impl PoseTarget {
    pub fn new(position: Vector3<f64>, orientation: Matrix3<f64>) -> Result<Self> {
        check_rotation(&orientation)?;
        Ok(Self {
            position,
            orientation,
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
        })
    }

    pub fn with_velocity(mut self, linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        self.linear_velocity = linear;
        self.angular_velocity = angular;
        self
    }
}

/// Stiffness and damping for the translational and rotational channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceGains {
    pub kp: Matrix3<f64>,
    pub kd: Matrix3<f64>,
    pub kp_rot: Matrix3<f64>,
    pub kd_rot: Matrix3<f64>,
}

impl ImpedanceGains {
    pub fn new(
        kp: Matrix3<f64>,
        kd: Matrix3<f64>,
        kp_rot: Matrix3<f64>,
        kd_rot: Matrix3<f64>,
    ) -> Result<Self> {
        for (name, m) in [("K_p", &kp), ("K_d", &kd), ("K_pR", &kp_rot), ("K_dR", &kd_rot)] {
            if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) || m.cholesky().is_none() {
                return Err(PptError::InvalidInput(format!(
                    "{name} must be symmetric positive definite"
                )));
            }
        }
        Ok(Self {
            kp,
            kd,
            kp_rot,
            kd_rot,
        })
    }

    pub fn diagonal(kp: [f64; 3], kd: [f64; 3], kp_rot: [f64; 3], kd_rot: [f64; 3]) -> Result<Self> {
        let diag = |v: [f64; 3]| Matrix3::from_diagonal(&Vector3::from(v));
        Self::new(diag(kp), diag(kd), diag(kp_rot), diag(kd_rot))
    }
}

/// A 6-D wrench `[f; τ]` and twist `[ẋ; ω]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrenchTwist {
    pub wrench: Vector6<f64>,
    pub twist: Vector6<f64>,
}

impl WrenchTwist {
    pub fn new(wrench: Vector6<f64>, twist: Vector6<f64>) -> Result<Self> {
        if wrench.iter().chain(twist.iter()).any(|v| !v.is_finite()) {
            return Err(PptError::InvalidInput("non-finite wrench or twist".into()));
        }
        Ok(Self { wrench, twist })
    }

    /// `λᵀν`.
    pub fn power(&self) -> f64 {
        self.wrench.dot(&self.twist)
    }
}

pub fn stack(top: &Vector3<f64>, bottom: &Vector3<f64>) -> Vector6<f64> {
    Vector6::new(top.x, top.y, top.z, bottom.x, bottom.y, bottom.z)
}

/// Commanded wrench `λ = [f; τ]` for the current pose and twist.
pub fn compute_wrench(
    gains: &ImpedanceGains,
    target: &PoseTarget,
    pose: &Pose,
    twist: &Vector6<f64>,
) -> Result<Vector6<f64>> {
    let e_rot = orientation_error(&target.orientation, &pose.orientation)?;
    let e_pos = target.position - pose.position;
    let e_vel = target.linear_velocity - twist.fixed_rows::<3>(0);
    let e_omega = target.angular_velocity - twist.fixed_rows::<3>(3);
    let force = gains.kp * e_pos + gains.kd * e_vel;
    let torque = -(gains.kp_rot * e_rot) + gains.kd_rot * e_omega;
    Ok(stack(&force, &torque))
}

/// Scales the force and torque parts independently so their norms do not exceed
/// the given caps.
pub fn saturate(wrench: &Vector6<f64>, max_force: f64, max_torque: f64) -> Vector6<f64> {
    let mut out = *wrench;
    let f = wrench.fixed_rows::<3>(0).norm();
    if f > max_force && f > 0.0 {
        out.fixed_rows_mut::<3>(0).scale_mut(max_force / f);
    }
    let t = wrench.fixed_rows::<3>(3).norm();
    if t > max_torque && t > 0.0 {
        out.fixed_rows_mut::<3>(3).scale_mut(max_torque / t);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rot(axis: Vector3<f64>, angle: f64) -> Matrix3<f64> {
        *Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle).matrix()
    }

    #[test]
    fn identical_rotations_have_zero_error() {
        let r = rot(Vector3::new(0.3, -1.0, 0.5), 1.1);
        assert!(orientation_error(&r, &r).unwrap().norm() < 1e-15);
    }

    #[test]
    fn yaw_error_matches_direct_matrix_evaluation() {
        let theta: f64 = 0.3;
        let (s, c) = theta.sin_cos();
        // R_d = Rz(θ), R = I ⇒ R_dᵀR − RᵀR_d = [[0, 2s], [−2s, 0]] in the xy block.
        let rd = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        let mut diff = rd.transpose() - rd;
        diff *= 0.5;
        let expected = Vector3::new(diff[(2, 1)], diff[(0, 2)], diff[(1, 0)]);
        let e = orientation_error(&rd, &Matrix3::identity()).unwrap();
        assert!((e - expected).norm() < 1e-15);
        assert!((e.z.abs() - theta.sin()).abs() < 1e-15);
        assert!(e.z < 0.0);
    }

    #[test]
    fn swapping_arguments_negates() {
        let a = rot(Vector3::new(1.0, 2.0, 0.5), 0.7);
        let b = rot(Vector3::new(-0.2, 0.1, 1.0), -0.4);
        let e1 = orientation_error(&a, &b).unwrap();
        let e2 = orientation_error(&b, &a).unwrap();
        assert!((e1 + e2).norm() < 1e-15);
    }

    #[test]
    fn rejects_non_rotation() {
        let bad = Matrix3::identity() * 1.01;
        assert!(matches!(
            orientation_error(&bad, &Matrix3::identity()),
            Err(PptError::InvalidRotation(_))
        ));
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(check_rotation(&reflect).is_err());
    }

    #[test]
    fn zero_error_zero_wrench() {
        let gains = ImpedanceGains::diagonal([300.0; 3], [35.0; 3], [2.0; 3], [0.2; 3]).unwrap();
        let pose = Pose::from_yaw(Vector3::new(0.1, 0.2, 0.0), 0.4);
        let target = PoseTarget::new(pose.position, pose.orientation).unwrap();
        let w = compute_wrench(&gains, &target, &pose, &Vector6::zeros()).unwrap();
        assert!(w.norm() < 1e-15);
    }

    #[test]
    fn stiffness_scales_position_error() {
        let tiny = [1e-12; 3];
        let gains = ImpedanceGains::diagonal([100.0; 3], tiny, [1.0; 3], tiny).unwrap();
        let pose = Pose::from_yaw(Vector3::zeros(), 0.0);
        let target = PoseTarget::new(Vector3::new(0.01, 0.0, 0.0), Matrix3::identity()).unwrap();
        let w = compute_wrench(&gains, &target, &pose, &Vector6::zeros()).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12);
        assert!(w.rows(1, 5).norm() < 1e-12);
    }

    #[test]
    fn rotational_spring_restores() {
        let gains = ImpedanceGains::diagonal([1.0; 3], [1.0; 3], [2.0; 3], [1.0; 3]).unwrap();
        let pose = Pose::from_yaw(Vector3::zeros(), 0.2);
        let target = PoseTarget::new(Vector3::zeros(), Matrix3::identity()).unwrap();
        let w = compute_wrench(&gains, &target, &pose, &Vector6::zeros()).unwrap();
        assert!(w[5] < 0.0, "torque must turn the tool back toward yaw 0");
    }

    #[test]
    fn saturation_caps_norms() {
        let w = Vector6::new(30.0, 40.0, 0.0, 0.0, 0.0, 5.0);
        let s = saturate(&w, 10.0, 1.0);
        assert!((s.fixed_rows::<3>(0).norm() - 10.0).abs() < 1e-12);
        assert!((s[5] - 1.0).abs() < 1e-12);
        assert_eq!(saturate(&Vector6::repeat(0.1), 10.0, 1.0), Vector6::repeat(0.1));
    }

    fn spd(seed: [f64; 6]) -> Matrix3<f64> {
        let a = Matrix3::new(seed[0], seed[1], seed[2], 0.0, seed[3], seed[4], 0.0, 0.0, seed[5]);
        a * a.transpose() + Matrix3::identity() * 0.1
    }

    fn reference_law(
        g: &ImpedanceGains,
        e_x: Vector3<f64>,
        e_v: Vector3<f64>,
        e_r: Vector3<f64>,
        e_w: Vector3<f64>,
    ) -> Vector6<f64> {
        let f = g.kp * e_x + g.kd * e_v;
        let t = g.kd_rot * e_w - g.kp_rot * e_r;
        Vector6::new(f[0], f[1], f[2], t[0], t[1], t[2])
    }

    proptest! {
        #[test]
        fn matches_reference_law(
            a in prop::array::uniform6(-2.0f64..2.0),
            b in prop::array::uniform6(-2.0f64..2.0),
            c in prop::array::uniform6(-2.0f64..2.0),
            d in prop::array::uniform6(-2.0f64..2.0),
            xs in prop::array::uniform12(-1.0f64..1.0),
            angles in prop::array::uniform2(-3.0f64..3.0),
        ) {
            let gains = ImpedanceGains::new(spd(a), spd(b), spd(c), spd(d)).unwrap();
            let r_d = rot(Vector3::new(xs[0], xs[1], xs[2] + 1.5), angles[0]);
            let r = rot(Vector3::new(xs[3] + 1.5, xs[4], xs[5]), angles[1]);
            let target = PoseTarget::new(Vector3::new(xs[6], xs[7], xs[8]), r_d)
                .unwrap()
                .with_velocity(Vector3::new(xs[9], xs[10], xs[11]), Vector3::new(xs[2], xs[0], xs[1]));
            let pose = Pose::new(Vector3::new(xs[1], xs[9], xs[4]), r);
            let twist = Vector6::new(xs[5], xs[6], xs[7], xs[8], xs[3], xs[10]);
            let w = compute_wrench(&gains, &target, &pose, &twist).unwrap();
            let e_r = orientation_error(&r_d, &r).unwrap();
            let expected = reference_law(
                &gains,
                target.position - pose.position,
                target.linear_velocity - twist.fixed_rows::<3>(0),
                e_r,
                target.angular_velocity - twist.fixed_rows::<3>(3),
            );
            prop_assert!((w - expected).norm() < 1e-9);
        }

        #[test]
        fn passive_spring(a in prop::array::uniform6(-3.0f64..3.0), e in prop::array::uniform3(-1.0f64..1.0)) {
            let tiny = Matrix3::identity() * 1e-12;
            let gains = ImpedanceGains::new(spd(a), tiny, Matrix3::identity(), tiny).unwrap();
            let e_x = Vector3::from(e);
            let target = PoseTarget::new(e_x, Matrix3::identity()).unwrap();
            let pose = Pose::from_yaw(Vector3::zeros(), 0.0);
            let w = compute_wrench(&gains, &target, &pose, &Vector6::zeros()).unwrap();
            prop_assert!(w.fixed_rows::<3>(0).dot(&e_x) >= 0.0);
        }

        #[test]
        fn linear_in_errors(k in 0.1f64..5.0, e in prop::array::uniform3(-0.1f64..0.1), v in prop::array::uniform3(-0.1f64..0.1)) {
            let gains = ImpedanceGains::diagonal([200.0, 150.0, 90.0], [20.0, 15.0, 9.0], [2.0; 3], [0.2; 3]).unwrap();
            let pose = Pose::from_yaw(Vector3::zeros(), 0.0);
            let at = |s: f64| {
                let target = PoseTarget::new(Vector3::from(e) * s, Matrix3::identity())
                    .unwrap()
                    .with_velocity(Vector3::from(v) * s, Vector3::zeros());
                compute_wrench(&gains, &target, &pose, &Vector6::zeros()).unwrap()
            };
            prop_assert!((at(k) - at(1.0) * k).norm() < 1e-10);
        }

        #[test]
        fn zero_error_iff_symmetric_relative_rotation(axis in prop::array::uniform3(-1.0f64..1.0), angle in -3.1f64..3.1) {
            let r_d = rot(Vector3::new(0.2, 0.3, 1.0), 0.4);
            let r = r_d * rot(Vector3::new(axis[0], axis[1], axis[2] + 1.2), angle);
            let rel = r_d.transpose() * r;
            let symmetric = (rel - rel.transpose()).amax() < 1e-12;
            let zero = orientation_error(&r_d, &r).unwrap().norm() < 1e-12;
            prop_assert_eq!(symmetric, zero);
            // Half-turns make the relative rotation symmetric and the error vanish.
            let flipped = r_d * rot(Vector3::new(axis[0], axis[1], axis[2] + 1.2), std::f64::consts::PI);
            prop_assert!(orientation_error(&r_d, &flipped).unwrap().norm() < 1e-12);
        }
    }
}
