use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{Series, Unit};

/// Degrading Bouc-Wen law with an asymmetric (buckling-like) compression branch.
///
/// Restoring force is `alpha*k*x + (1-alpha)*k*z`. Strength (`nu`) and
/// stiffness (`eta`) degradation grow linearly with the hysteretic energy
/// `eps = (1-alpha)*k*∫ z dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoucWenParams {
    pub k: f64,
    pub alpha: f64,
    pub a0: f64,
    pub beta: f64,
    pub gamma: f64,
    pub n: f64,
    pub delta_nu: f64,
    pub delta_eta: f64,
    /// Multiplies `beta` and `gamma` while `z < 0`.
    pub asym: f64,
    pub substeps: usize,
}

impl Default for BoucWenParams {
    fn default() -> Self {
        Self::specimen_a()
    }
}

impl BoucWenParams {
    /// Steel-like brace: pronounced compression softening and degradation.
    pub fn specimen_a() -> Self {
        BoucWenParams {
            k: 10.0,
            alpha: 0.05,
            a0: 1.0,
            beta: 5.0,
            gamma: 5.0,
            n: 1.5,
            delta_nu: 0.02,
            delta_eta: 0.01,
            asym: 1.5,
            substeps: 4,
        }
    }

    /// Aluminium-like brace: softer, sharper yield, milder asymmetry.
    pub fn specimen_b() -> Self {
        BoucWenParams {
            k: 8.0,
            alpha: 0.03,
            a0: 1.0,
            beta: 6.0,
            gamma: 4.0,
            n: 2.0,
            delta_nu: 0.03,
            delta_eta: 0.005,
            asym: 1.25,
            substeps: 4,
        }
    }

    /// Purely elastic-hysteretic parameters with the degradation switched off.
    pub fn without_degradation(mut self) -> Self {
        self.delta_nu = 0.0;
        self.delta_eta = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        if !(finite(self.k) && self.k > 0.0) {
            return Err(Error::invalid("k", "must be finite and positive"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha", "must lie in [0, 1]"));
        }
        if !(finite(self.a0) && self.a0 >= 0.0) {
            return Err(Error::invalid("a0", "must be finite and non-negative"));
        }
        if !(finite(self.beta) && self.beta >= 0.0) {
            return Err(Error::invalid("beta", "must be finite and non-negative"));
        }
        if !finite(self.gamma) {
            return Err(Error::invalid("gamma", "must be finite"));
        }
        if !(finite(self.n) && self.n >= 1.0) {
            return Err(Error::invalid("n", "must be at least 1"));
        }
        if !(finite(self.delta_nu) && self.delta_nu >= 0.0) {
            return Err(Error::invalid("delta_nu", "must be non-negative"));
        }
        if !(finite(self.delta_eta) && self.delta_eta >= 0.0) {
            return Err(Error::invalid("delta_eta", "must be non-negative"));
        }
        if !(finite(self.asym) && self.asym >= 1.0) {
            return Err(Error::invalid("asym", "must be at least 1"));
        }
        if self.substeps == 0 {
            return Err(Error::invalid("substeps", "must be at least 1"));
        }
        Ok(())
    }

    /// Closed-form ceiling on `|z|` without degradation or asymmetry.
    pub fn z_bound(&self) -> f64 {
        (self.a0 / (self.beta + self.gamma)).powf(1.0 / self.n)
    }

    fn restoring_force(&self, x: f64, z: f64) -> f64 {
        self.alpha * self.k * x + (1.0 - self.alpha) * self.k * z
    }

    /// Time derivatives of `(z, eps)` at velocity `v`.
    fn rates(&self, z: f64, eps: f64, v: f64) -> (f64, f64) {
        let nu = 1.0 + self.delta_nu * eps;
        let eta = 1.0 + self.delta_eta * eps;
        let (beta, gamma) = if z < 0.0 {
            (self.asym * self.beta, self.asym * self.gamma)
        } else {
            (self.beta, self.gamma)
        };
        let az = z.abs();
        let shape = beta * v.abs() * az.powf(self.n - 1.0) * z + gamma * v * az.powf(self.n);
        let dz = (self.a0 * v - nu * shape) / eta;
        let deps = (1.0 - self.alpha) * self.k * z * v;
        (dz, deps)
    }
}

/// Full oracle output: force plus the internal hysteretic states.
#[derive(Debug, Clone)]
pub struct HystereticResponse {
    pub force: Series,
    pub z: Vec<f64>,
    pub energy: Vec<f64>,
}

/// Central differences in the interior, one-sided at both ends.
pub fn finite_difference_velocity(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    (x[1] - x[0]) / dt
                } else if i == n - 1 {
                    (x[n - 1] - x[n - 2]) / dt
                } else {
                    (x[i + 1] - x[i - 1]) / (2.0 * dt)
                }
            })
            .collect(),
    }
}

pub fn simulate(params: &BoucWenParams, disp: &Series) -> Result<Series> {
    simulate_detailed(params, disp).map(|r| r.force)
}

/// Integrates the law with classical RK4, `substeps` steps per sample
/// interval. Velocity between samples is the linear interpolation of the
/// finite-difference velocities at the interval ends.
pub fn simulate_detailed(params: &BoucWenParams, disp: &Series) -> Result<HystereticResponse> {
    params.validate()?;
    if disp.unit() != Unit::Displacement {
        return Err(Error::invalid("disp", "expected a displacement series"));
    }
    let dt = disp.dt();
    let x = disp.values();
    let v = finite_difference_velocity(x, dt);
    let n = x.len();

    let mut z_hist = Vec::with_capacity(n);
    let mut e_hist = Vec::with_capacity(n);
    let mut force = Vec::with_capacity(n);
    let (mut z, mut eps) = (0.0_f64, 0.0_f64);
    z_hist.push(z);
    e_hist.push(eps);
    force.push(params.restoring_force(x[0], z));

    let h = dt / params.substeps as f64;
    for i in 0..n - 1 {
        let (v0, v1) = (v[i], v[i + 1]);
        let vel = |s: f64| v0 + (v1 - v0) * s;
        for q in 0..params.substeps {
            let s0 = q as f64 / params.substeps as f64;
            let s_mid = (q as f64 + 0.5) / params.substeps as f64;
            let s1 = (q as f64 + 1.0) / params.substeps as f64;
            let (k1z, k1e) = params.rates(z, eps, vel(s0));
            let (k2z, k2e) = params.rates(z + 0.5 * h * k1z, eps + 0.5 * h * k1e, vel(s_mid));
            let (k3z, k3e) = params.rates(z + 0.5 * h * k2z, eps + 0.5 * h * k2e, vel(s_mid));
            let (k4z, k4e) = params.rates(z + h * k3z, eps + h * k3e, vel(s1));
            z += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
            eps += h / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e);
        }
        let f = params.restoring_force(x[i + 1], z);
        if !(z.is_finite() && eps.is_finite() && f.is_finite()) {
            return Err(Error::OracleDivergence { index: i + 1 });
        }
        z_hist.push(z);
        e_hist.push(eps);
        force.push(f);
    }

    Ok(HystereticResponse {
        force: Series::new(dt, force, Unit::Force)?,
        z: z_hist,
        energy: e_hist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::protocol::{generate_protocol, LoadingProtocol};

    fn default_disp() -> Series {
        generate_protocol(&LoadingProtocol::default()).unwrap()
    }

    #[test]
    fn linear_limit_is_exact_scaling() {
        let params = BoucWenParams {
            alpha: 1.0,
            k: 2.0,
            ..BoucWenParams::specimen_a()
        };
        let disp = default_disp();
        let f = simulate(&params, &disp).unwrap();
        for (fi, xi) in f.values().iter().zip(disp.values()) {
            let expect = 2.0 * xi;
            assert!((fi - expect).abs() <= 1e-12 * expect.abs().max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn zero_input_gives_zero_force() {
        let disp = Series::displacement(0.01, vec![0.0; 300]).unwrap();
        let f = simulate(&BoucWenParams::default(), &disp).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
        assert_eq!(f.len(), 300);
        assert_eq!(f.dt(), 0.01);
    }

    #[test]
    fn velocity_stencil() {
        let v = finite_difference_velocity(&[0.0, 1.0, 4.0, 9.0], 0.5);
        assert_eq!(v, vec![2.0, 4.0, 8.0, 10.0]);
    }

    #[test]
    fn rejects_force_input_and_bad_params() {
        let f = Series::force(0.01, vec![0.0, 1.0]).unwrap();
        assert!(simulate(&BoucWenParams::default(), &f).is_err());
        let disp = Series::displacement(0.01, vec![0.0, 1.0]).unwrap();
        for bad in [
            BoucWenParams { alpha: 1.5, ..Default::default() },
            BoucWenParams { n: 0.5, ..Default::default() },
            BoucWenParams { asym: 0.9, ..Default::default() },
            BoucWenParams { substeps: 0, ..Default::default() },
        ] {
            assert!(matches!(simulate(&bad, &disp), Err(Error::Validation { .. })));
        }
    }

    #[test]
    fn divergence_reports_sample_index() {
        // Negative-stiffness-like growth: huge a0 with a shape term that feeds z.
        let params = BoucWenParams {
            a0: 1.0,
            beta: 0.0,
            gamma: -1e6,
            n: 3.0,
            delta_nu: 0.0,
            delta_eta: 0.0,
            asym: 1.0,
            alpha: 0.0,
            ..Default::default()
        };
        let disp = generate_protocol(&LoadingProtocol::default()).unwrap();
        match simulate(&params, &disp) {
            Err(Error::OracleDivergence { index }) => assert!(index > 0 && index < disp.len()),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
