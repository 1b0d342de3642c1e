//! Scalar energy tank gating a command channel.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::error::{PptError, Result};

pub const DEFAULT_POWER_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TankConfig {
    pub e_max: f64,
    pub e_0: f64,
    pub p_max: f64,
    #[serde(default = "default_floor")]
    pub epsilon: f64,
    #[serde(default)]
    pub u_in: f64,
    pub dt: f64,
}

fn default_floor() -> f64 {
    DEFAULT_POWER_FLOOR
}

impl TankConfig {
    pub fn new(e_max: f64, e_0: f64, p_max: f64, dt: f64) -> Result<Self> {
        let cfg = Self {
            e_max,
            e_0,
            p_max,
            epsilon: DEFAULT_POWER_FLOOR,
            u_in: 0.0,
            dt,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Infinite budgets: `gate` always returns 1.
    pub fn disabled(dt: f64) -> Self {
        Self {
            e_max: f64::INFINITY,
            e_0: f64::INFINITY,
            p_max: f64::INFINITY,
            epsilon: DEFAULT_POWER_FLOOR,
            u_in: 0.0,
            dt,
        }
    }

    pub fn with_refill(mut self, u_in: f64) -> Result<Self> {
        self.u_in = u_in;
        self.validate()?;
        Ok(self)
    }

    pub fn is_disabled(&self) -> bool {
        self.p_max.is_infinite() && self.e_max.is_infinite()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && !v.is_nan();
        if !positive(self.e_max) || !positive(self.p_max) {
            return Err(PptError::Config("E_max and P_max must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(PptError::Config("power floor must be positive".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(PptError::Config("dt must be positive".into()));
        }
        if !(self.u_in >= 0.0 && self.u_in.is_finite()) {
            return Err(PptError::Config("u_in must be non-negative".into()));
        }
        if !(self.e_0 >= 0.0 && self.e_0 <= self.e_max) {
            return Err(PptError::Config(format!(
                "E_0 = {} must lie in [0, E_max = {}]",
                self.e_0, self.e_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TankState {
    pub energy: f64,
    pub last_gamma: f64,
    pub cumulative_injected: f64,
}

impl TankState {
    pub fn new(config: &TankConfig) -> Self {
        Self {
            energy: config.e_0,
            last_gamma: 1.0,
            cumulative_injected: 0.0,
        }
    }

    pub fn check(&self, config: &TankConfig) -> Result<()> {
        if !(self.energy >= 0.0 && self.energy <= config.e_max) {
            return Err(PptError::InvariantViolation(format!(
                "tank energy {} outside [0, {}]",
                self.energy, config.e_max
            )));
        }
        if !(0.0..=1.0).contains(&self.last_gamma) {
            return Err(PptError::InvariantViolation(format!(
                "gamma {} outside [0, 1]",
                self.last_gamma
            )));
        }
        Ok(())
    }
}

/// Signed power `λᵀν` and its magnitude.
pub fn instantaneous_power(wrench: &Vector6<f64>, twist: &Vector6<f64>) -> (f64, f64) {
    let signed = wrench.dot(twist);
    (signed, signed.abs())
}

pub fn gate(config: &TankConfig, state: &TankState, p: f64) -> f64 {
    let denom = config.epsilon.max(p);
    let power_bound = config.p_max / denom;
    let energy_bound = (state.energy + config.u_in) / (config.dt * denom);
    let mut gamma = 1.0f64.min(power_bound).min(energy_bound).max(0.0);
    // Division can round up by an ulp; step down until the product respects the cap.
    while gamma > 0.0 && gamma * p > config.p_max {
        gamma = f64::from_bits(gamma.to_bits() - 1);
    }
    gamma
}

/// Advances the tank by one control step and returns the scaling factor.
pub fn step(
    config: &TankConfig,
    state: &TankState,
    wrench_nom: &Vector6<f64>,
    twist: &Vector6<f64>,
) -> (f64, TankState) {
    let (_, p) = instantaneous_power(wrench_nom, twist);
    step_power(config, state, p)
}

/// `step` for a precomputed power magnitude.
pub fn step_power(config: &TankConfig, state: &TankState, p: f64) -> (f64, TankState) {
    let gamma = gate(config, state, p);
    let spent = gamma * p * config.dt;
    let energy = if config.e_max.is_infinite() {
        state.energy
    } else {
        (state.energy - spent + config.u_in).max(0.0).min(config.e_max)
    };
    let next = TankState {
        energy,
        last_gamma: gamma,
        cumulative_injected: state.cumulative_injected + spent,
    };
    (gamma, next)
}

pub fn scale_command<const N: usize>(gamma: f64, command: &[f64; N]) -> [f64; N] {
    command.map(|c| gamma * c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TankTraceRow {
    pub t: f64,
    pub p: f64,
    pub gamma: f64,
    #[serde(rename = "E")]
    pub energy: f64,
}

/// Per-episode `(t, p, γ, E)` log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TankTrace {
    pub rows: Vec<TankTraceRow>,
}

impl TankTrace {
    pub fn push(&mut self, t: f64, p: f64, gamma: f64, energy: f64) {
        self.rows.push(TankTraceRow { t, p, gamma, energy });
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let rows = rd.deserialize().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> TankConfig {
        TankConfig::new(10.0, 10.0, 5.0, 0.01).unwrap()
    }

    fn v6(a: [f64; 6]) -> Vector6<f64> {
        Vector6::from_row_slice(&a)
    }

    #[test]
    fn power_examples() {
        assert_eq!(instantaneous_power(&v6([1., 0., 0., 0., 0., 0.]), &v6([2., 0., 0., 0., 0., 0.])), (2.0, 2.0));
        assert_eq!(instantaneous_power(&v6([1., 0., 0., 0., 0., 0.]), &v6([0., 3., 0., 0., 0., 0.])).0, 0.0);
        assert_eq!(instantaneous_power(&v6([1., 1., 0., 0., 0., 1.]), &v6([-1., 2., 0., 0., 0., 3.])).0, 4.0);
        assert_eq!(instantaneous_power(&v6([-1., 0., 0., 0., 0., 0.]), &v6([2., 0., 0., 0., 0., 0.])), (-2.0, 2.0));
    }

    #[test]
    fn gate_examples() {
        let c = cfg();
        let s = TankState::new(&c);
        assert_eq!(gate(&c, &s, 3.0), 1.0);
        let c10 = TankConfig::new(1e6, 1e6, 10.0, 0.01).unwrap();
        assert!((gate(&c10, &TankState::new(&c10), 25.0) - 0.4).abs() < 1e-15);
        let empty = TankState { energy: 0.0, ..s };
        assert_eq!(gate(&c, &empty, 3.0), 0.0);
    }

    #[test]
    fn step_debits_energy() {
        let c = TankConfig::new(2.0, 1.0, 100.0, 0.1).unwrap();
        let s = TankState::new(&c);
        let (g, n) = step_power(&c, &s, 3.0);
        assert_eq!(g, 1.0);
        assert!((n.energy - 0.7).abs() < 1e-15);
        assert!((n.cumulative_injected - 0.3).abs() < 1e-15);
    }

    #[test]
    fn refill_saturates_at_cap() {
        let c = TankConfig::new(2.0, 2.0, 5.0, 0.1).unwrap().with_refill(0.5).unwrap();
        let (_, n) = step_power(&c, &TankState::new(&c), 0.0);
        assert_eq!(n.energy, 2.0);
    }

    #[test]
    fn drains_within_closed_form_step_count() {
        let c = cfg();
        let bound = (c.e_0 / (c.p_max * c.dt)).ceil() as usize;
        let mut s = TankState::new(&c);
        let mut steps = 0;
        while s.energy > 0.0 {
            s = step_power(&c, &s, 50.0).1;
            steps += 1;
            assert!(steps <= bound, "tank still holds {} J after {steps} steps", s.energy);
        }
        let (g, _) = step_power(&c, &s, 50.0);
        assert_eq!(g, 0.0);
    }

    #[test]
    fn disabled_tank_never_gates() {
        let c = TankConfig::disabled(0.01);
        c.validate().unwrap();
        let mut s = TankState::new(&c);
        for p in [0.0, 1.0, 1e3, 1e9] {
            let (g, n) = step_power(&c, &s, p);
            assert_eq!(g, 1.0);
            s = n;
        }
        assert!(s.energy.is_infinite());
    }

    #[test]
    fn scale_examples() {
        assert_eq!(scale_command(0.5, &[4.0, -2.0]), [2.0, -1.0]);
        assert_eq!(scale_command(0.0, &[4.0, -2.0]), [0.0, 0.0]);
        assert_eq!(scale_command(1.0, &[4.0, -2.0]), [4.0, -2.0]);
    }

    #[test]
    fn config_validation() {
        assert!(TankConfig::new(1.0, 2.0, 1.0, 0.01).is_err());
        assert!(TankConfig::new(0.0, 0.0, 1.0, 0.01).is_err());
        assert!(TankConfig::new(1.0, 1.0, -1.0, 0.01).is_err());
        assert!(cfg().with_refill(-0.1).is_err());
    }

    #[test]
    fn trace_roundtrip() {
        let mut t = TankTrace::default();
        t.push(0.0, 1.5, 1.0, 10.0);
        t.push(0.01, 7.0, 0.714, 9.95);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("t,p,gamma,E\n"));
        assert_eq!(TankTrace::read_csv(&buf[..]).unwrap(), t);
    }

    proptest! {
        #[test]
        fn invariants_hold_over_random_runs(
            e_max in 0.1f64..50.0,
            frac in 0.0f64..1.0,
            p_max in 0.1f64..20.0,
            u_in in 0.0f64..0.05,
            powers in prop::collection::vec(0.0f64..100.0, 1..300),
        ) {
            let c = TankConfig::new(e_max, e_max * frac, p_max, 0.01).unwrap().with_refill(u_in).unwrap();
            let mut s = TankState::new(&c);
            for (i, &p) in powers.iter().enumerate() {
                let (g, n) = step_power(&c, &s, p);
                prop_assert!((0.0..=1.0).contains(&g));
                prop_assert!(g * p <= c.p_max + c.epsilon);
                prop_assert!(n.energy >= 0.0 && n.energy <= c.e_max);
                let horizon = (i + 1) as f64;
                prop_assert!(n.cumulative_injected <= c.e_0 + horizon * c.u_in + 1e-9);
                s = n;
            }
        }

        #[test]
        fn gate_monotone(
            e1 in 0.0f64..10.0, e2 in 0.0f64..10.0,
            p1 in 0.0f64..100.0, p2 in 0.0f64..100.0,
        ) {
            let c = cfg();
            let st = |e| TankState { energy: e, last_gamma: 1.0, cumulative_injected: 0.0 };
            let (plo, phi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let (elo, ehi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(gate(&c, &st(e1), phi) <= gate(&c, &st(e1), plo));
            prop_assert!(gate(&c, &st(elo), p1) <= gate(&c, &st(ehi), p1));
        }
    }
}
