//! Checkpoint file layout:
//!
//! ```text
//! PPTCKPT1\n
//! <single-line JSON header>\n
//! <num_params little-endian f64 values>
//! ```
//!
//! The parameter block follows the flat `[actor | critic | log_std]` order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::MlpLayout;
use super::normalizer::RunningNorm;
use super::ppo::{ActorCritic, PpoConfig};
use crate::error::{PptError, Result};

pub const MAGIC: &str = "PPTCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub actor_sizes: Vec<usize>,
    pub critic_sizes: Vec<usize>,
    pub actor_inputs: Vec<usize>,
    pub num_params: usize,
    pub normalizer: RunningNorm,
    pub config: PpoConfig,
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ActorCritic,
    pub normalizer: RunningNorm,
    pub config: PpoConfig,
    pub extra: serde_json::Value,
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = CheckpointHeader {
            actor_sizes: self.model.actor.sizes().to_vec(),
            critic_sizes: self.model.critic.sizes().to_vec(),
            actor_inputs: self.model.actor_inputs.clone(),
            num_params: self.model.theta.len(),
            normalizer: self.normalizer.clone(),
            config: self.config.clone(),
            extra: self.extra.clone(),
        };
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        let mut bytes = Vec::with_capacity(8 * self.model.theta.len());
        for v in &self.model.theta {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(PptError::Checkpoint("missing magic line".into()));
        }
        line.clear();
        r.read_line(&mut line)?;
        let h: CheckpointHeader = serde_json::from_str(line.trim_end())?;
        let actor = MlpLayout::new(h.actor_sizes)?;
        let critic = MlpLayout::new(h.critic_sizes)?;
        let expected = actor.len() + critic.len() + actor.output_dim();
        if h.num_params != expected {
            return Err(PptError::Checkpoint(format!(
                "header declares {} parameters, layout needs {expected}",
                h.num_params
            )));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * expected {
            return Err(PptError::Checkpoint(format!(
                "parameter block holds {} bytes, expected {}",
                bytes.len(),
                8 * expected
            )));
        }
        let theta: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(PptError::Checkpoint("non-finite parameter".into()));
        }
        if h.actor_inputs.iter().any(|&i| i >= critic.input_dim()) {
            return Err(PptError::Checkpoint("actor input index out of range".into()));
        }
        Ok(Self {
            model: ActorCritic {
                actor,
                critic,
                actor_inputs: h.actor_inputs,
                theta,
            },
            normalizer: h.normalizer,
            config: h.config,
            extra: h.extra,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }
}
