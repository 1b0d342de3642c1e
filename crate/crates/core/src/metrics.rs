//! Episode metrics and seed aggregation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{PptError, Result};

/// Per-step episode record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub dt: f64,
    pub t: Vec<f64>,
    pub positions: Vec<[f64; 3]>,
    pub wrench_norm: Vec<f64>,
    /// Nominal power magnitude `p_t`.
    pub power: Vec<f64>,
    pub gamma: Vec<f64>,
    pub contact: Vec<bool>,
    pub progress: Vec<f64>,
    pub success: bool,
    pub horizon: f64,
}

impl EpisodeLog {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            horizon,
            ..Self::default()
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        t: f64,
        position: [f64; 3],
        wrench_norm: f64,
        power: f64,
        gamma: f64,
        contact: bool,
        progress: f64,
    ) {
        self.t.push(t);
        self.positions.push(position);
        self.wrench_norm.push(wrench_norm);
        self.power.push(power);
        self.gamma.push(gamma);
        self.contact.push(contact);
        self.progress.push(progress);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// `γ_t p_t`, the power actually delivered.
    pub fn delivered_power(&self) -> Vec<f64> {
        self.power.iter().zip(&self.gamma).map(|(p, g)| p * g).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.t.len();
        let lens = [
            self.positions.len(),
            self.wrench_norm.len(),
            self.power.len(),
            self.gamma.len(),
            self.contact.len(),
            self.progress.len(),
        ];
        if let Some(&bad) = lens.iter().find(|&&l| l != n) {
            return Err(PptError::DimensionMismatch { expected: n, got: bad });
        }
        if !(self.dt > 0.0) {
            return Err(PptError::InvalidInput("dt must be positive".into()));
        }
        for w in self.t.windows(2) {
            if (w[1] - w[0] - self.dt).abs() > 1e-6 * self.dt.max(1.0) {
                return Err(PptError::InvalidInput("time stamps are not uniform".into()));
            }
        }
        Ok(())
    }

    pub fn metrics(&self, p_max: f64, continuity: ContinuityMode) -> Result<EpisodeMetrics> {
        self.validate()?;
        if self.is_empty() {
            return Err(PptError::EmptyInput("episode log".into()));
        }
        let delivered = self.delivered_power();
        let jerk = if self.len() >= 4 {
            jerk_rms(&self.positions, self.dt)?
        } else {
            0.0
        };
        Ok(EpisodeMetrics {
            max_power: delivered.iter().copied().fold(0.0, f64::max),
            success: if self.success { 1.0 } else { 0.0 },
            jerk_rms: jerk,
            peak_wrench_p95: peak_wrench_p95(&self.wrench_norm)?,
            overload_ratio: overload_ratio(&delivered, p_max)?,
            contact_continuity: contact_continuity_with(&self.contact, continuity),
            progress_at_t: progress_at_t(&self.progress),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub max_power: f64,
    pub success: f64,
    pub jerk_rms: f64,
    pub peak_wrench_p95: f64,
    pub overload_ratio: f64,
    pub contact_continuity: f64,
    pub progress_at_t: f64,
}

impl EpisodeMetrics {
    pub const NAMES: [(&'static str, &'static str); 7] = [
        ("max_power", "W"),
        ("success", "fraction"),
        ("jerk_rms", "m/s^3"),
        ("peak_wrench_p95", "N"),
        ("overload_ratio", "fraction"),
        ("contact_continuity", "fraction"),
        ("progress_at_T", "fraction"),
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.max_power,
            self.success,
            self.jerk_rms,
            self.peak_wrench_p95,
            self.overload_ratio,
            self.contact_continuity,
            self.progress_at_t,
        ]
    }

    pub fn from_values(v: [f64; 7]) -> Self {
        Self {
            max_power: v[0],
            success: v[1],
            jerk_rms: v[2],
            peak_wrench_p95: v[3],
            overload_ratio: v[4],
            contact_continuity: v[5],
            progress_at_t: v[6],
        }
    }

    /// Field-wise mean over episodes.
    pub fn mean(all: &[EpisodeMetrics]) -> Result<Self> {
        if all.is_empty() {
            return Err(PptError::EmptyInput("metrics".into()));
        }
        let mut acc = [0.0; 7];
        for m in all {
            for (a, v) in acc.iter_mut().zip(m.values()) {
                *a += v;
            }
        }
        Ok(Self::from_values(acc.map(|a| a / all.len() as f64)))
    }
}

fn third_diff_forward(x: &[f64], i: usize) -> f64 {
    -x[i] + 3.0 * x[i + 1] - 3.0 * x[i + 2] + x[i + 3]
}

fn third_diff_backward(x: &[f64], i: usize) -> f64 {
    x[i] - 3.0 * x[i - 1] + 3.0 * x[i - 2] - x[i - 3]
}

fn third_diff_central(x: &[f64], i: usize) -> f64 {
    0.5 * (x[i + 2] - 2.0 * x[i + 1] + 2.0 * x[i - 1] - x[i - 2])
}

/// Third derivative of a scalar series at every sample.
pub fn third_derivative(x: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 4 {
        return Err(PptError::InvalidInput(format!("jerk needs at least 4 samples, got {n}")));
    }
    let scale = dt.powi(3);
    Ok((0..n)
        .map(|i| {
            let d = if i >= 2 && i + 2 < n {
                third_diff_central(x, i)
            } else if i < 2 {
                third_diff_forward(x, i.min(n - 4))
            } else {
                third_diff_backward(x, i.max(3))
            };
            d / scale
        })
        .collect())
}

pub fn jerk_rms(positions: &[[f64; 3]], dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(PptError::InvalidInput("dt must be positive".into()));
    }
    let axes: Vec<Vec<f64>> = (0..3)
        .map(|k| third_derivative(&positions.iter().map(|p| p[k]).collect::<Vec<_>>(), dt))
        .collect::<Result<_>>()?;
    let n = positions.len();
    let sq: f64 = (0..n).map(|i| axes.iter().map(|a| a[i] * a[i]).sum::<f64>()).sum();
    Ok((sq / n as f64).sqrt())
}

/// Linear interpolation between closest ranks.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(PptError::EmptyInput("percentile of empty series".into()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(PptError::InvalidInput(format!("percentile {q} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = q / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (rank - lo as f64) * (v[hi] - v[lo]))
}

pub fn peak_wrench_p95(wrench_norms: &[f64]) -> Result<f64> {
    percentile(wrench_norms, 95.0)
}

pub fn overload_ratio(powers: &[f64], p_max: f64) -> Result<f64> {
    if powers.is_empty() {
        return Err(PptError::EmptyInput("power series".into()));
    }
    Ok(powers.iter().filter(|&&p| p > p_max).count() as f64 / powers.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuityMode {
    #[default]
    LongestRun,
    MeanSegment,
}

fn contact_runs(flags: &[bool]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut cur = 0;
    for &f in flags {
        if f {
            cur += 1;
        } else if cur > 0 {
            runs.push(cur);
            cur = 0;
        }
    }
    if cur > 0 {
        runs.push(cur);
    }
    runs
}

pub fn contact_continuity(flags: &[bool]) -> f64 {
    contact_continuity_with(flags, ContinuityMode::LongestRun)
}

pub fn contact_continuity_with(flags: &[bool], mode: ContinuityMode) -> f64 {
    let runs = contact_runs(flags);
    let total: usize = runs.iter().sum();
    if total == 0 {
        return 0.0;
    }
    match mode {
        ContinuityMode::LongestRun => *runs.iter().max().unwrap() as f64 / total as f64,
        ContinuityMode::MeanSegment => total as f64 / runs.len() as f64 / total as f64,
    }
}

pub fn progress_at_t(progress: &[f64]) -> f64 {
    progress
        .iter()
        .map(|p| p.clamp(0.0, 1.0))
        .fold(0.0, f64::max)
}

/// Mean and standard error (sample standard deviation over `√n`).
pub fn mean_se(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(PptError::EmptyInput("aggregation".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Trailing moving average; the first entries average over what is available.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for i in 0..series.len() {
        sum += series[i];
        if i >= w {
            sum -= series[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}

/// Seed-aggregated metrics per column (variant).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    pub columns: Vec<String>,
    /// `mean[column][metric]`
    pub mean: Vec<[f64; 7]>,
    pub se: Vec<[f64; 7]>,
}

impl MetricsTable {
    /// Adds a column from one `EpisodeMetrics` per seed.
    pub fn add_column(&mut self, name: &str, per_seed: &[EpisodeMetrics]) -> Result<()> {
        let mut mean = [0.0; 7];
        let mut se = [0.0; 7];
        for k in 0..7 {
            let vals: Vec<f64> = per_seed.iter().map(|m| m.values()[k]).collect();
            (mean[k], se[k]) = mean_se(&vals)?;
        }
        self.columns.push(name.to_string());
        self.mean.push(mean);
        self.se.push(se);
        Ok(())
    }

    pub fn get(&self, column: &str, metric: &str) -> Option<(f64, f64)> {
        let c = self.columns.iter().position(|n| n == column)?;
        let m = EpisodeMetrics::NAMES.iter().position(|(n, _)| *n == metric)?;
        Some((self.mean[c][m], self.se[c][m]))
    }

    fn write<W: Write>(&self, w: W, values: &[[f64; 7]]) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["metric".to_string(), "unit".to_string()];
        header.extend(self.columns.iter().cloned());
        wr.write_record(&header)?;
        for (k, (name, unit)) in EpisodeMetrics::NAMES.iter().enumerate() {
            let mut row = vec![name.to_string(), unit.to_string()];
            row.extend(values.iter().map(|col| format!("{}", col[k])));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_mean_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write(w, &self.mean)
    }

    pub fn write_se_csv<W: Write>(&self, w: W) -> Result<()> {
        self.write(w, &self.se)
    }
}
