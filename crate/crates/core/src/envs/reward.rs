use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    /// Scale on the per-step progress increment.
    pub w_g: f64,
    pub success_bonus: f64,
    /// Path-following bonus along the reference.
    pub w_p: f64,
    /// Contact bonus per second in contact (maze).
    pub w_c: f64,
    pub w_e: f64,
    pub alpha: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_g: 10.0,
            success_bonus: 10.0,
            w_p: 0.0,
            w_c: 0.25,
            w_e: 1.0,
            alpha: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardInput {
    pub progress_delta: f64,
    pub reached_goal: bool,
    /// In `[0, 1]`, 1 when on the reference path.
    pub path_score: f64,
    pub contact: bool,
    pub power: f64,
    pub p_max: f64,
    pub dt: f64,
}

/// Energy term `−max(0, p − P_max) − α·p`, per second.
pub fn energy_penalty(w: &RewardWeights, power: f64, p_max: f64) -> f64 {
    -(power - p_max).max(0.0) - w.alpha * power
}

pub fn reward(w: &RewardWeights, r: &RewardInput) -> f64 {
    let goal = w.w_g * r.progress_delta + if r.reached_goal { w.success_bonus } else { 0.0 };
    let path = w.w_p * r.path_score * r.dt;
    let contact = if r.contact { w.w_c * r.dt } else { 0.0 };
    goal + path + contact + w.w_e * energy_penalty(w, r.power, r.p_max) * r.dt
}
