//! Point-mass tool with a yaw channel, integrated with semi-implicit Euler.

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::impedance::{stack, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolParams {
    pub mass: f64,
    pub damping: f64,
    pub inertia: f64,
    pub rot_damping: f64,
    pub max_force: f64,
    pub max_torque: f64,
}

impl Default for ToolParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            damping: 5.0,
            inertia: 0.01,
            rot_damping: 0.05,
            max_force: 20.0,
            max_torque: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoParams {
    pub k_v: f64,
    pub k_w: f64,
    pub v_max: f64,
    pub w_max: f64,
}

impl Default for ServoParams {
    fn default() -> Self {
        Self {
            k_v: 80.0,
            k_w: 0.8,
            v_max: 0.25,
            w_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolState {
    pub pos: Vector3<f64>,
    pub vel: Vector3<f64>,
    pub yaw: f64,
    pub yaw_rate: f64,
}

/// Running work-energy bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyAudit {
    pub control_work: f64,
    pub contact_work: f64,
    pub dissipated: f64,
    pub initial_kinetic: f64,
    pub kinetic: f64,
}

impl EnergyAudit {
    /// `|W_ctrl + W_contact − ΔKE − D| / max(|W_ctrl| + |W_contact|, ε)`.
    pub fn relative_residual(&self) -> f64 {
        let residual = self.control_work + self.contact_work
            - (self.kinetic - self.initial_kinetic)
            - self.dissipated;
        residual.abs() / (self.control_work.abs() + self.contact_work.abs()).max(1e-12)
    }
}

impl ToolState {
    pub fn pose(&self) -> Pose {
        Pose::from_yaw(self.pos, self.yaw)
    }

    pub fn twist(&self) -> Vector6<f64> {
        stack(&self.vel, &Vector3::new(0.0, 0.0, self.yaw_rate))
    }

    pub fn kinetic_energy(&self, p: &ToolParams) -> f64 {
        0.5 * p.mass * self.vel.norm_squared() + 0.5 * p.inertia * self.yaw_rate * self.yaw_rate
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().chain(self.vel.iter()).all(|v| v.is_finite())
            && self.yaw.is_finite()
            && self.yaw_rate.is_finite()
    }

    /// One substep under a control wrench and contact forces.
    pub fn integrate(
        &mut self,
        p: &ToolParams,
        control: &Vector6<f64>,
        contact_force: &Vector3<f64>,
        contact_torque: f64,
        dt: f64,
        audit: &mut EnergyAudit,
    ) {
        let f_ctrl = Vector3::new(control[0], control[1], control[2]);
        let v0 = self.vel;
        let w0 = self.yaw_rate;
        self.vel += (f_ctrl + contact_force - v0 * p.damping) * (dt / p.mass);
        self.yaw_rate += (control[5] + contact_torque - w0 * p.rot_damping) * (dt / p.inertia);
        let dx = self.vel * dt;
        let dyaw = self.yaw_rate * dt;
        self.pos += dx;
        self.yaw += dyaw;
        audit.control_work += f_ctrl.dot(&dx) + control[5] * dyaw;
        audit.contact_work += contact_force.dot(&dx) + contact_torque * dyaw;
        audit.dissipated += 0.5
            * dt
            * (p.damping * (v0.norm_squared() + self.vel.norm_squared())
                + p.rot_damping * (w0 * w0 + self.yaw_rate * self.yaw_rate));
        audit.kinetic = self.kinetic_energy(p);
    }
}

/// Wrench produced by the velocity servo for command `(v, ω_z)`.
pub fn servo_wrench(
    tool: &ToolState,
    tp: &ToolParams,
    sp: &ServoParams,
    v_cmd: &Vector3<f64>,
    w_cmd: f64,
) -> Vector6<f64> {
    let f = (v_cmd - tool.vel) * sp.k_v + v_cmd * tp.damping;
    let t = sp.k_w * (w_cmd - tool.yaw_rate) + tp.rot_damping * w_cmd;
    stack(&f, &Vector3::new(0.0, 0.0, t))
}
