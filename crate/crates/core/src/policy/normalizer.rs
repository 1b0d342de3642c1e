//! Running observation normalization.

use serde::{Deserialize, Serialize};

use crate::error::{PptError, Result};

pub const OBS_CLIP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub frozen: bool,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            frozen: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Welford update; ignored once frozen.
    pub fn update(&mut self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.dim() {
            return Err(PptError::DimensionMismatch { expected: self.dim(), got: obs.len() });
        }
        if self.frozen {
            return Ok(());
        }
        self.count += 1.0;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(obs) {
            let d = x - *m;
            *m += d / self.count;
            *s += d * (x - *m);
        }
        Ok(())
    }

    pub fn std(&self) -> Vec<f64> {
        self.m2
            .iter()
            .map(|s| {
                if self.count > 1.0 {
                    (s / self.count).sqrt().max(1e-4)
                } else {
                    1.0
                }
            })
            .collect()
    }

    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        let std = self.std();
        obs.iter()
            .zip(&self.mean)
            .zip(&std)
            .map(|((x, m), s)| ((x - m) / s).clamp(-OBS_CLIP, OBS_CLIP))
            .collect()
    }
}
