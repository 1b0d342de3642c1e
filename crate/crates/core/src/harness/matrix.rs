//! Variant matrix, plot data export and maze geometry files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Variant};
use super::train::{read_curve, run_dir, smooth_curve, train, CurveRow, RunManifest};
use crate::envs::{MazeConfig, MazeGeometry};
use crate::error::{PptError, Result};
use crate::metrics::{mean_se, moving_average, EpisodeMetrics, MetricsTable};

/// Outcome of one (variant, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub variant: String,
    pub seed: u64,
    pub run_dir: String,
    pub ok: bool,
    pub error: Option<String>,
    /// Diverged episodes recorded during the run.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixManifest {
    pub task: String,
    pub variants: Vec<String>,
    pub seeds: Vec<u64>,
    pub cells: Vec<MatrixCell>,
    pub curves: Vec<String>,
    pub table: String,
    pub table_se: String,
}

/// Seed-aggregated training curve row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub update: usize,
    pub seeds: usize,
    pub success_mean: f64,
    pub success_se: f64,
    pub max_power_mean: f64,
    pub max_power_se: f64,
    pub success_smoothed: f64,
    pub max_power_smoothed: f64,
}

pub struct MatrixResult {
    pub manifest: MatrixManifest,
    pub table: MetricsTable,
    /// Successful runs per variant, in seed order.
    pub runs: BTreeMap<Variant, Vec<RunManifest>>,
    pub curves: BTreeMap<Variant, Vec<Vec<CurveRow>>>,
}

impl MatrixResult {
    pub fn aggregate(&self, variant: Variant) -> Vec<AggregateRow> {
        self.curves
            .get(&variant)
            .map(|c| aggregate_curves(c, 1))
            .unwrap_or_default()
    }
}

/// Mean ± SE across seeds per update; shorter (early-stopped) curves drop out.
pub fn aggregate_curves(curves: &[Vec<CurveRow>], window: usize) -> Vec<AggregateRow> {
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    let mut rows = Vec::with_capacity(len);
    for u in 0..len {
        let present: Vec<&CurveRow> = curves.iter().filter_map(|c| c.get(u)).collect();
        let s: Vec<f64> = present.iter().map(|r| r.success).collect();
        let p: Vec<f64> = present.iter().map(|r| r.max_power).collect();
        let (sm, ss) = mean_se(&s).unwrap_or((0.0, 0.0));
        let (pm, ps) = mean_se(&p).unwrap_or((0.0, 0.0));
        rows.push(AggregateRow {
            update: u + 1,
            seeds: present.len(),
            success_mean: sm,
            success_se: ss,
            max_power_mean: pm,
            max_power_se: ps,
            success_smoothed: 0.0,
            max_power_smoothed: 0.0,
        });
    }
    let s = moving_average(&rows.iter().map(|r| r.success_mean).collect::<Vec<_>>(), window.max(1));
    let p = moving_average(&rows.iter().map(|r| r.max_power_mean).collect::<Vec<_>>(), window.max(1));
    for (r, (s, p)) in rows.iter_mut().zip(s.into_iter().zip(p)) {
        r.success_smoothed = s;
        r.max_power_smoothed = p;
    }
    rows
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut wr = csv::Writer::from_path(path)?;
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Trains every variant for every seed under `out`. A failing cell is
/// recorded and the matrix carries on.
pub fn run_matrix(base: &RunConfig, variants: &[Variant], seeds: &[u64], out: &Path) -> Result<MatrixResult> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(PptError::InvalidInput("matrix needs at least one variant and one seed".into()));
    }
    fs::create_dir_all(out)?;
    let mut cells = Vec::new();
    let mut runs: BTreeMap<Variant, Vec<RunManifest>> = BTreeMap::new();
    let mut curves: BTreeMap<Variant, Vec<Vec<CurveRow>>> = BTreeMap::new();
    let mut table = MetricsTable::default();
    let mut curve_files = Vec::new();
    for &variant in variants {
        let cfg = base.clone().with_variant(variant);
        let mut finals: Vec<EpisodeMetrics> = Vec::new();
        for &seed in seeds {
            let dir = run_dir(out, &cfg, seed);
            let rel = dir.strip_prefix(out).unwrap_or(&dir).display().to_string();
            let outcome = cfg.validate().and_then(|_| train(&cfg, seed, &dir)).and_then(|m| {
                let c = read_curve(&dir.join(&m.curve))?;
                Ok((m, c))
            });
            match outcome {
                Ok((m, c)) => {
                    cells.push(MatrixCell {
                        variant: variant.to_string(),
                        seed,
                        run_dir: rel,
                        ok: true,
                        error: None,
                        failures: m.training_failures.clone(),
                    });
                    finals.push(m.final_eval.mean.clone());
                    curves.entry(variant).or_default().push(c);
                    runs.entry(variant).or_default().push(m);
                }
                Err(e) => cells.push(MatrixCell {
                    variant: variant.to_string(),
                    seed,
                    run_dir: rel,
                    ok: false,
                    error: Some(e.to_string()),
                    failures: Vec::new(),
                }),
            }
        }
        let name = format!("curves_{variant}.csv");
        let agg = aggregate_curves(curves.get(&variant).map_or(&[][..], Vec::as_slice), cfg.smoothing_window);
        write_rows(&out.join(&name), &agg)?;
        curve_files.push(name);
        if !finals.is_empty() {
            table.add_column(&variant.to_string(), &finals)?;
        }
    }
    table.write_mean_csv(fs::File::create(out.join("table.csv"))?)?;
    table.write_se_csv(fs::File::create(out.join("table_se.csv"))?)?;
    let manifest = MatrixManifest {
        task: base.task.to_string(),
        variants: variants.iter().map(Variant::to_string).collect(),
        seeds: seeds.to_vec(),
        cells,
        curves: curve_files,
        table: "table.csv".into(),
        table_se: "table_se.csv".into(),
    };
    fs::write(out.join("matrix.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(MatrixResult {
        manifest,
        table,
        runs,
        curves,
    })
}

fn run_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join("manifest.json").is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    for entry in fs::read_dir(root)? {
        let p = entry?.path();
        if p.join("manifest.json").is_file() {
            dirs.push(p);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Collects plot data from a run or matrix directory into `out`: smoothed
/// curves (re-smoothed with `window`), evaluation trajectories and tank
/// traces, and matrix curve files. Returns the written file names.
pub fn export_plots(src: &Path, out: &Path, window: usize) -> Result<Vec<String>> {
    let dirs = run_dirs(src)?;
    let matrix_curves: Vec<PathBuf> = if src.join("matrix.json").is_file() {
        let m: MatrixManifest = serde_json::from_str(&fs::read_to_string(src.join("matrix.json"))?)?;
        m.curves.iter().chain([&m.table, &m.table_se]).map(|c| src.join(c)).collect()
    } else {
        Vec::new()
    };
    if dirs.is_empty() && matrix_curves.is_empty() {
        return Err(PptError::InvalidInput(format!("no runs found under {}", src.display())));
    }
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for dir in dirs {
        let m = RunManifest::load(&dir.join("manifest.json"))?;
        let tag = dir.file_name().map_or_else(|| "run".into(), |n| n.to_string_lossy().into_owned());
        let curve = read_curve(&dir.join(&m.curve))?;
        let name = format!("{tag}_curve_smoothed.csv");
        write_rows(&out.join(&name), &smooth_curve(&curve, window))?;
        written.push(name);
        for rel in m.trajectories.iter().chain(&m.tank_traces) {
            let file = Path::new(rel).file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
            let name = format!("{tag}_{file}");
            fs::copy(dir.join(rel), out.join(&name))?;
            written.push(name);
        }
    }
    for path in matrix_curves {
        let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        fs::copy(&path, out.join(&name))?;
        written.push(name);
    }
    Ok(written)
}

/// Writes `count` generated mazes as `maze_<seed>.json` and returns the paths.
pub fn gen_mazes(cfg: &MazeConfig, first_seed: u64, count: usize, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out)?;
    let mut paths = Vec::with_capacity(count);
    for i in 0..count as u64 {
        let seed = first_seed + i;
        let g = MazeGeometry::generate(cfg, seed)?;
        let path = out.join(format!("maze_{seed:06}.json"));
        fs::write(&path, g.to_json()? + "\n")?;
        paths.push(path);
    }
    Ok(paths)
}
