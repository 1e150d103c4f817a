use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Displacement,
    Force,
}

/// Uniformly sampled scalar time history.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    dt: f64,
    values: Vec<f64>,
    unit: Unit,
}

impl Series {
    pub fn new(dt: f64, values: Vec<f64>, unit: Unit) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be finite and positive, got {dt}")));
        }
        if values.is_empty() {
            return Err(Error::invalid("values", "series must be non-empty"));
        }
        Ok(Series { dt, values, unit })
    }

    pub fn displacement(dt: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(dt, values, Unit::Displacement)
    }

    pub fn force(dt: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(dt, values, Unit::Force)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sample times `i * dt`.
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| i as f64 * self.dt)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Contiguous sub-range `[start, end)` with the same `dt` and unit.
    pub fn slice(&self, start: usize, end: usize) -> Result<Series> {
        if start >= end || end > self.values.len() {
            return Err(Error::Shape(format!(
                "slice [{start}, {end}) out of range for length {}",
                self.values.len()
            )));
        }
        Series::new(self.dt, self.values[start..end].to_vec(), self.unit)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// A displacement history paired with the force it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct BraceRecord {
    pub displacement: Series,
    pub force: Series,
}

impl BraceRecord {
    pub fn new(displacement: Series, force: Series) -> Result<Self> {
        if displacement.len() != force.len() {
            return Err(Error::LengthMismatch {
                left: displacement.len(),
                right: force.len(),
            });
        }
        if displacement.dt() != force.dt() {
            return Err(Error::invalid(
                "dt",
                format!("displacement dt {} != force dt {}", displacement.dt(), force.dt()),
            ));
        }
        Ok(BraceRecord {
            displacement,
            force,
        })
    }

    pub fn len(&self) -> usize {
        self.displacement.len()
    }

    pub fn is_empty(&self) -> bool {
        self.displacement.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.displacement.dt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_bad_dt() {
        assert!(Series::displacement(0.1, vec![]).is_err());
        assert!(Series::displacement(0.0, vec![1.0]).is_err());
        assert!(Series::displacement(f64::NAN, vec![1.0]).is_err());
        assert!(Series::displacement(0.1, vec![1.0]).is_ok());
    }

    #[test]
    fn record_requires_matching_lengths() {
        let x = Series::displacement(0.1, vec![0.0, 1.0]).unwrap();
        let y = Series::force(0.1, vec![0.0]).unwrap();
        assert!(matches!(
            BraceRecord::new(x, y),
            Err(Error::LengthMismatch { left: 2, right: 1 })
        ));
    }
}
