pub mod error;
pub mod harness;
pub mod energy_tank;
pub mod envs;
pub mod impedance;
pub mod metrics;
pub mod policy;
pub mod promp;

pub use error::{PptError, Result};
