use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Series;

/// Peak multipliers of the yield displacement, two cycles each.
pub const DEFAULT_AMPLITUDE_FACTORS: [f64; 13] =
    [0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];

/// Cyclic displacement protocol with amplitudes stepping through multiples
/// of the yield displacement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadingProtocol {
    pub delta_y: f64,
    pub amplitude_factors: Vec<f64>,
    pub cycles_per_amplitude: usize,
    pub points_per_cycle: usize,
    /// Sample interval in seconds.
    pub dt: f64,
}

impl Default for LoadingProtocol {
    fn default() -> Self {
        LoadingProtocol {
            delta_y: 0.1,
            amplitude_factors: DEFAULT_AMPLITUDE_FACTORS.to_vec(),
            cycles_per_amplitude: 2,
            points_per_cycle: 200,
            dt: 0.01,
        }
    }
}

impl LoadingProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_y.is_finite() && self.delta_y > 0.0) {
            return Err(Error::invalid("delta_y", "must be finite and positive"));
        }
        if self.amplitude_factors.is_empty() {
            return Err(Error::invalid("amplitude_factors", "must not be empty"));
        }
        if self
            .amplitude_factors
            .iter()
            .any(|a| !(a.is_finite() && *a > 0.0))
        {
            return Err(Error::invalid("amplitude_factors", "entries must be positive"));
        }
        if self.amplitude_factors.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "amplitude_factors",
                "must be strictly increasing",
            ));
        }
        if self.cycles_per_amplitude == 0 {
            return Err(Error::invalid("cycles_per_amplitude", "must be at least 1"));
        }
        if self.points_per_cycle < 8 {
            return Err(Error::invalid("points_per_cycle", "must be at least 8"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be finite and positive"));
        }
        Ok(())
    }

    pub fn total_cycles(&self) -> usize {
        self.amplitude_factors.len() * self.cycles_per_amplitude
    }

    pub fn sample_count(&self) -> usize {
        self.total_cycles() * self.points_per_cycle + 1
    }

    /// Peak displacement of every cycle, in order.
    pub fn cycle_peaks(&self) -> Vec<f64> {
        self.amplitude_factors
            .iter()
            .flat_map(|a| std::iter::repeat(a * self.delta_y).take(self.cycles_per_amplitude))
            .collect()
    }

    /// Sample range `[start, end]` (inclusive) covered by cycle `c`.
    pub fn cycle_range(&self, c: usize) -> (usize, usize) {
        (c * self.points_per_cycle, (c + 1) * self.points_per_cycle)
    }
}

/// One period of the unit wave at sample `j` of `period`: up to +1, down to
/// -1, back to 0. Evaluated so that the second half is the exact negation of
/// the first and the zero crossings are exact.
fn unit_wave(j: usize, period: usize) -> f64 {
    if j == 0 || j == period || 2 * j == period {
        0.0
    } else if 2 * j < period {
        (2.0 * PI * j as f64 / period as f64).sin()
    } else {
        -(2.0 * PI * (period - j) as f64 / period as f64).sin()
    }
}

pub fn generate_protocol(protocol: &LoadingProtocol) -> Result<Series> {
    protocol.validate()?;
    let ppc = protocol.points_per_cycle;
    let mut values = Vec::with_capacity(protocol.sample_count());
    values.push(0.0);
    for peak in protocol.cycle_peaks() {
        values.extend((1..=ppc).map(|j| peak * unit_wave(j, ppc)));
    }
    Series::displacement(protocol.dt, values)
}
