use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::distribution::symmetrize;
use crate::error::{PptError, Result};

/// Observation noise used for via-points when the caller gives none.
pub const DEFAULT_VIA_NOISE: f64 = 1e-6;

/// A sampled trajectory on a phase grid that starts at 0 and ends at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    phases: Vec<f64>,
    points: Vec<Vec<f64>>,
    /// Optional per-point covariance, row-major `d × d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    covariances: Option<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn new(phases: Vec<f64>, points: Vec<Vec<f64>>) -> Result<Self> {
        let traj = Self {
            phases,
            points,
            covariances: None,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn with_covariances(mut self, covariances: Vec<Vec<f64>>) -> Result<Self> {
        let d = self.dims();
        if covariances.len() != self.points.len() || covariances.iter().any(|c| c.len() != d * d) {
            return Err(PptError::InvalidInput(
                "one d×d covariance per point required".into(),
            ));
        }
        self.covariances = Some(covariances);
        Ok(self)
    }

    /// Uniform phase grid with `n` samples, `n >= 2`.
    pub fn uniform_phases(n: usize) -> Vec<f64> {
        let n = n.max(2);
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    /// Samples `f` on a uniform grid of `n` phases.
    pub fn from_fn<F: Fn(f64) -> Vec<f64>>(n: usize, f: F) -> Result<Self> {
        let phases = Self::uniform_phases(n);
        let points = phases.iter().map(|&p| f(p)).collect();
        Self::new(phases, points)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.len() < 2 {
            return Err(PptError::InvalidInput("trajectory needs >= 2 samples".into()));
        }
        if self.points.len() != self.phases.len() {
            return Err(PptError::DimensionMismatch {
                expected: self.phases.len(),
                got: self.points.len(),
            });
        }
        if self.phases[0] != 0.0 || *self.phases.last().unwrap() != 1.0 {
            return Err(PptError::InvalidInput(
                "trajectory phases must start at 0 and end at 1".into(),
            ));
        }
        if self.phases.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PptError::InvalidInput(
                "trajectory phases must be strictly increasing".into(),
            ));
        }
        let d = self.points[0].len();
        if d == 0 || self.points.iter().any(|p| p.len() != d) {
            return Err(PptError::InvalidInput(
                "trajectory points must share a non-zero dimension".into(),
            ));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PptError::InvalidInput("non-finite trajectory point".into()));
        }
        Ok(())
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn covariances(&self) -> Option<&[Vec<f64>]> {
        self.covariances.as_deref()
    }

    pub fn dims(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// Column `dim` of the point list.
    pub fn dimension(&self, dim: usize) -> Vec<f64> {
        self.points.iter().map(|p| p[dim]).collect()
    }

    /// CSV with header `phase,dim0,...,dimN`.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["phase".to_string()];
        header.extend((0..self.dims()).map(|i| format!("dim{i}")));
        wtr.write_record(&header)?;
        for (phase, point) in self.phases.iter().zip(&self.points) {
            let mut row = vec![phase.to_string()];
            row.extend(point.iter().map(f64::to_string));
            wtr.write_record(&row)?;
        }
        let bytes = wtr
            .into_inner()
            .map_err(|e| PptError::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut phases = Vec::new();
        let mut points = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let mut values = record.iter().map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| PptError::InvalidInput(format!("bad csv value {s:?}: {e}")))
            });
            let phase = values
                .next()
                .ok_or_else(|| PptError::InvalidInput("empty csv row".into()))??;
            phases.push(phase);
            points.push(values.collect::<Result<Vec<f64>>>()?);
        }
        Self::new(phases, points)
    }
}

/// A single phase-indexed target with observation covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ViaPoint {
    pub phase: f64,
    pub target: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl ViaPoint {
    /// Builds a via-point; `cov = None` selects `DEFAULT_VIA_NOISE · I`.
    /// The covariance is symmetrized and, if not positive definite, regularized
    /// with a diagonal floor.
    pub fn new(phase: f64, target: DVector<f64>, cov: Option<DMatrix<f64>>) -> Result<Self> {
        super::basis::check_phase(phase)?;
        let d = target.len();
        if d == 0 {
            return Err(PptError::InvalidInput("via-point target is empty".into()));
        }
        let cov = match cov {
            Some(c) => {
                if c.nrows() != d || c.ncols() != d {
                    return Err(PptError::DimensionMismatch {
                        expected: d,
                        got: c.nrows(),
                    });
                }
                regularize_spd(symmetrize(c))?
            }
            None => DMatrix::identity(d, d) * DEFAULT_VIA_NOISE,
        };
        if target.iter().any(|v| !v.is_finite()) {
            return Err(PptError::InvalidInput("non-finite via-point target".into()));
        }
        Ok(Self {
            phase: phase.clamp(0.0, 1.0),
            target,
            cov,
        })
    }

    pub fn isotropic(phase: f64, target: &[f64], variance: f64) -> Result<Self> {
        let d = target.len();
        Self::new(
            phase,
            DVector::from_column_slice(target),
            Some(DMatrix::identity(d, d) * variance),
        )
    }
}

/// Ordered collection of via-points sharing one dimensionality.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViaPointSet {
    points: Vec<ViaPoint>,
}

impl ViaPointSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points(points: Vec<ViaPoint>) -> Result<Self> {
        let mut set = Self::new();
        for p in points {
            set.push(p)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, point: ViaPoint) -> Result<()> {
        if let Some(first) = self.points.first() {
            if first.target.len() != point.target.len() {
                return Err(PptError::DimensionMismatch {
                    expected: first.target.len(),
                    got: point.target.len(),
                });
            }
        }
        self.points.push(point);
        Ok(())
    }

    pub fn points(&self) -> &[ViaPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn extend(&mut self, other: &ViaPointSet) -> Result<()> {
        for p in &other.points {
            self.push(p.clone())?;
        }
        Ok(())
    }
}

fn regularize_spd(c: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if c.iter().any(|v| !v.is_finite()) {
        return Err(PptError::InvalidInput("non-finite via-point covariance".into()));
    }
    if c.clone().cholesky().is_some() {
        return Ok(c);
    }
    let d = c.nrows();
    let floor = (c.trace().abs() / d as f64).max(DEFAULT_VIA_NOISE) * 1e-9 + 1e-12;
    let mut reg = c;
    let mut jitter = floor;
    for _ in 0..40 {
        let mut trial = reg.clone();
        for i in 0..d {
            trial[(i, i)] += jitter;
        }
        if trial.clone().cholesky().is_some() {
            reg = trial;
            return Ok(reg);
        }
        jitter *= 10.0;
    }
    Err(PptError::NumericalConditioning(
        "via-point covariance cannot be made positive definite".into(),
    ))
}
