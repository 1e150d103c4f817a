//! Temporal split, z-score normalization and lookback windowing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{BraceRecord, Series};

/// Index of the first test sample for a series of length `n` (ceiling half).
pub fn split_index(n: usize) -> usize {
    n.div_ceil(2)
}

/// First `ceil(N/2)` samples train, the rest test. No shuffling.
pub fn split_half(x: &Series, y: &Series) -> Result<(BraceRecord, BraceRecord)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.dt() != y.dt() {
        return Err(Error::invalid("dt", "displacement and force sample intervals differ"));
    }
    let n = x.len();
    if n < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            available: n,
        });
    }
    let cut = split_index(n);
    let train = BraceRecord::new(x.slice(0, cut)?, y.slice(0, cut)?)?;
    let test = BraceRecord::new(x.slice(cut, n)?, y.slice(cut, n)?)?;
    Ok((train, test))
}

/// Per-channel mean and population standard deviation of the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub mean_x: f64,
    pub std_x: f64,
    pub mean_y: f64,
    pub std_y: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn fit_norm(train_x: &Series, train_y: &Series) -> Result<NormStats> {
    let (mean_x, std_x) = mean_std(train_x.values());
    let (mean_y, std_y) = mean_std(train_y.values());
    if !(std_x > 0.0 && std_x.is_finite()) {
        return Err(Error::DegenerateStats("displacement"));
    }
    if !(std_y > 0.0 && std_y.is_finite()) {
        return Err(Error::DegenerateStats("force"));
    }
    Ok(NormStats {
        mean_x,
        std_x,
        mean_y,
        std_y,
    })
}

impl NormStats {
    pub const IDENTITY: NormStats = NormStats {
        mean_x: 0.0,
        std_x: 1.0,
        mean_y: 0.0,
        std_y: 1.0,
    };

    pub fn normalize_x(&self, v: f64) -> f64 {
        (v - self.mean_x) / self.std_x
    }

    pub fn normalize_y(&self, v: f64) -> f64 {
        (v - self.mean_y) / self.std_y
    }

    pub fn denormalize_y(&self, v: f64) -> f64 {
        v * self.std_y + self.mean_y
    }
}

pub fn denormalize(pred: &[f64], stats: &NormStats) -> Vec<f64> {
    pred.iter().map(|&v| stats.denormalize_y(v)).collect()
}

/// Overlapping stride-1 windows, stored flat as
/// `(num_windows, lookback, input_dim)` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    lookback: usize,
    input_dim: usize,
}

impl WindowedDataset {
    /// Builds a dataset from already-normalized, flat inputs.
    pub fn from_parts(
        inputs: Vec<f64>,
        targets: Vec<f64>,
        lookback: usize,
        input_dim: usize,
    ) -> Result<Self> {
        if lookback == 0 || input_dim == 0 {
            return Err(Error::Shape("lookback and input_dim must be positive".into()));
        }
        if targets.is_empty() {
            return Err(Error::Shape("dataset has no windows".into()));
        }
        if inputs.len() != targets.len() * lookback * input_dim {
            return Err(Error::Shape(format!(
                "inputs hold {} values, expected {} windows x {lookback} x {input_dim}",
                inputs.len(),
                targets.len()
            )));
        }
        Ok(WindowedDataset {
            inputs,
            targets,
            lookback,
            input_dim,
        })
    }

    pub fn num_windows(&self) -> usize {
        self.targets.len()
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Window `w`, flattened `(lookback, input_dim)`.
    pub fn window(&self, w: usize) -> &[f64] {
        let len = self.lookback * self.input_dim;
        &self.inputs[w * len..(w + 1) * len]
    }

    pub fn target(&self, w: usize) -> f64 {
        self.targets[w]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Keeps only the windows in `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<WindowedDataset> {
        let mut inputs = Vec::with_capacity(indices.len() * self.lookback * self.input_dim);
        let mut targets = Vec::with_capacity(indices.len());
        for &w in indices {
            if w >= self.num_windows() {
                return Err(Error::Shape(format!("window {w} out of range")));
            }
            inputs.extend_from_slice(self.window(w));
            targets.push(self.targets[w]);
        }
        WindowedDataset::from_parts(inputs, targets, self.lookback, self.input_dim)
    }
}

/// Normalized displacement windows, each targeting the normalized force at
/// its last step.
pub fn window_displacement(x: &[f64], stats: &NormStats, lookback: usize) -> Result<Vec<f64>> {
    if lookback == 0 {
        return Err(Error::invalid("lookback", "must be at least 1"));
    }
    if x.len() < lookback {
        return Err(Error::InsufficientData {
            needed: lookback,
            available: x.len(),
        });
    }
    let xn: Vec<f64> = x.iter().map(|&v| stats.normalize_x(v)).collect();
    let count = x.len() - lookback + 1;
    let mut inputs = Vec::with_capacity(count * lookback);
    for w in 0..count {
        inputs.extend_from_slice(&xn[w..w + lookback]);
    }
    Ok(inputs)
}

pub fn window(x: &Series, y: &Series, stats: &NormStats, lookback: usize) -> Result<WindowedDataset> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let inputs = window_displacement(x.values(), stats, lookback)?;
    let targets = y.values()[lookback - 1..]
        .iter()
        .map(|&v| stats.normalize_y(v))
        .collect();
    WindowedDataset::from_parts(inputs, targets, lookback, 1)
}
