use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ppt_core::envs::{MazeConfig, TaskKind};
use ppt_core::harness::{
    evaluate, export_plots, gen_mazes, load_agent, prior_for, run_dir, run_matrix, train, EpisodeOptions, Evaluation,
    Provenance, RunConfig, Runner, Variant,
};
use ppt_core::metrics::EpisodeMetrics;
use ppt_core::{PptError, Result};

#[derive(Parser)]
#[command(name = "ppt", version, about = "Primitive-policy training with energy-tank gating")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML config; missing keys take the defaults of its task and variant.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// PP, PPT, S or ST.
    #[arg(long, global = true)]
    variant: Option<Variant>,
    /// pushing or maze.
    #[arg(long, global = true)]
    task: Option<TaskKind>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Training updates (train, matrix), evaluation episodes (eval) or maze count (gen-maze).
    #[arg(long, global = true)]
    episodes: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per seed.
    Train,
    /// Evaluate a run directory or checkpoint file.
    Eval { run: PathBuf },
    /// Train all variants over all seeds and write comparison tables.
    Matrix,
    /// Collect curves, trajectories and tank traces from a run or matrix directory.
    ExportPlots { src: PathBuf },
    /// Write generated maze geometries as JSON.
    GenMaze {
        /// Straight training corridors instead of evaluation mazes.
        #[arg(long)]
        straight: bool,
    },
    /// Print every config default with its provenance tag.
    Defaults,
}

fn config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::defaults(common.task.unwrap_or(TaskKind::Pushing), common.variant.unwrap_or(Variant::PPT)),
    };
    if let Some(task) = common.task.filter(|t| *t != cfg.task) {
        cfg = cfg.with_task(task);
    }
    if let Some(variant) = common.variant {
        cfg = cfg.with_variant(variant);
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn seeds(common: &Common, cfg: &RunConfig) -> Vec<u64> {
    common.seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s])
}

fn print_metrics(label: &str, ev: &Evaluation) {
    println!("{label}: {} episodes, success {:.3}", ev.episodes, ev.success_rate);
    for (k, (name, unit)) in EpisodeMetrics::NAMES.iter().enumerate() {
        println!("  {name:<20} {:>12.6} ± {:<10.6} {unit}", ev.mean.values()[k], ev.se.values()[k]);
    }
    for f in &ev.failures {
        println!("  failure: {f}");
    }
}

fn cmd_train(common: &Common) -> Result<()> {
    let mut cfg = config(common)?;
    if let Some(n) = common.episodes {
        cfg.ppo.episodes = n;
    }
    cfg.validate()?;
    for seed in seeds(common, &cfg) {
        let dir = run_dir(&cfg.out_dir, &cfg, seed);
        let m = train(&cfg, seed, &dir)?;
        println!(
            "{} {} seed {seed}: {} updates, success {:.3} -> {:.3}{}, {}",
            m.task,
            m.variant,
            m.updates,
            m.initial_eval_success,
            m.final_eval.success_rate,
            if m.early_stopped { " (early stop)" } else { "" },
            dir.display()
        );
        for f in &m.training_failures {
            println!("  failure: {f}");
        }
    }
    Ok(())
}

fn cmd_eval(common: &Common, run: &Path) -> Result<()> {
    let (dir, ckpt) = if run.is_dir() {
        (Some(run.to_path_buf()), run.join("checkpoints").join("final.ckpt"))
    } else {
        (run.parent().and_then(Path::parent).map(Path::to_path_buf), run.to_path_buf())
    };
    let stored = dir.map(|d| d.join("config.toml")).filter(|p| p.is_file());
    let mut cfg = match (&common.config, stored) {
        (None, Some(path)) => config(&Common { config: Some(path), ..common.clone() })?,
        _ => config(common)?,
    };
    if let Some(seed) = common.seed {
        cfg.eval.seed_offset = seed;
    }
    let episodes = common.episodes.unwrap_or(cfg.eval.episodes);
    let prior = prior_for(&cfg)?;
    let agent = load_agent(&ckpt, &cfg, prior.as_ref())?;
    let runner = Runner::new(&cfg, prior)?;
    let export = common.out.as_deref().map(|o| (o, ""));
    let (ev, _) = evaluate(&runner, &agent, episodes, EpisodeOptions::evaluation(), export)?;
    print_metrics(&format!("{} {}", cfg.task, cfg.variant), &ev);
    if let Some(out) = &common.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("evaluation.json"), serde_json::to_string_pretty(&ev)? + "\n")?;
        fs::write(out.join("eval_metrics.csv"), ppt_core::harness::train::metrics_csv(&ev.per_episode)?)?;
    }
    Ok(())
}

fn cmd_matrix(common: &Common) -> Result<()> {
    let mut cfg = config(&Common { variant: None, ..common.clone() })?;
    if let Some(n) = common.episodes {
        cfg.ppo.episodes = n;
    }
    let variants = common.variant.map_or_else(|| Variant::ALL.to_vec(), |v| vec![v]);
    let out = common.out.clone().unwrap_or_else(|| cfg.out_dir.join(format!("matrix_{}", cfg.task)));
    let result = run_matrix(&cfg, &variants, &seeds(common, &cfg), &out)?;
    let mut text = Vec::new();
    result.table.write_mean_csv(&mut text)?;
    print!("{}", String::from_utf8_lossy(&text));
    for cell in result.manifest.cells.iter().filter(|c| !c.ok || !c.failures.is_empty()) {
        match &cell.error {
            Some(e) => println!("cell {} seed {} failed: {e}", cell.variant, cell.seed),
            None => println!("cell {} seed {}: {} diverged episodes", cell.variant, cell.seed, cell.failures.len()),
        }
    }
    println!("{}", out.display());
    Ok(())
}

fn cmd_export(common: &Common, src: &Path) -> Result<()> {
    let window = match &common.config {
        Some(path) => RunConfig::load(path)?.smoothing_window,
        None => RunConfig::default().smoothing_window,
    };
    let out = common.out.clone().unwrap_or_else(|| src.join("plots"));
    let files = export_plots(src, &out, window)?;
    println!("{} files written to {}", files.len(), out.display());
    Ok(())
}

fn cmd_gen_maze(common: &Common, straight: bool) -> Result<()> {
    let cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::defaults(TaskKind::Maze, common.variant.unwrap_or(Variant::PPT)),
    };
    let maze: MazeConfig = if straight { cfg.env.maze.clone() } else { cfg.with_task(TaskKind::Maze).eval_env().maze };
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("mazes"));
    let paths = gen_mazes(&maze, common.seed.unwrap_or(0), common.episodes.unwrap_or(10), &out)?;
    for p in &paths {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_defaults(common: &Common) -> Result<()> {
    let cfg = config(common)?;
    for e in cfg.provenance()? {
        let tag = match e.provenance {
            Provenance::Paper => "paper",
            Provenance::SpecDefault => "spec-default",
        };
        println!("{} = {}  [{tag}]", e.key, e.value);
    }
    if let Some(out) = &common.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(out, cfg.to_toml_string()?)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = cli.common.clone();
    let result = match &cli.command {
        Command::Train => cmd_train(&common),
        Command::Eval { run } => cmd_eval(&common, run),
        Command::Matrix => cmd_matrix(&common),
        Command::ExportPlots { src } => cmd_export(&common, src),
        Command::GenMaze { straight } => cmd_gen_maze(&common, *straight),
        Command::Defaults => cmd_defaults(&common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                PptError::Config(_) | PptError::Checkpoint(_) | PptError::DimensionMismatch { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
