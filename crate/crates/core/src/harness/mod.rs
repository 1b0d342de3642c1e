//! Experiment orchestration: configs, rollouts, training, evaluation and artifacts.

pub mod config;
pub mod matrix;
pub mod prior;
pub mod rollout;
pub mod train;

pub use config::{DefaultEntry, EvalSettings, GainSettings, PrimitiveSettings, Provenance, RunConfig, TankSettings, Variant, VelocitySettings};
pub use matrix::{aggregate_curves, export_plots, gen_mazes, run_matrix, AggregateRow, MatrixCell, MatrixManifest, MatrixResult};
pub use prior::build_prior;
pub use rollout::{action_dim, Agent, EpisodeOptions, EpisodeResult, Runner, Transition};
pub use train::{evaluate, load_agent, prior_for, run_dir, smooth_curve, train, CurveRow, Evaluation, RunManifest};
