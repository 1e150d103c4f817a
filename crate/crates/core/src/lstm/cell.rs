use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    /// Candidate content `g`.
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    fn offset(self) -> usize {
        match self {
            Gate::Input => 0,
            Gate::Forget => 1,
            Gate::Output => 2,
            Gate::Candidate => 3,
        }
    }
}

pub(crate) fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// Four gates of one LSTM cell, packed.
///
/// `weights` is `(4*hidden) x (input + hidden)` row-major. Row block `k`
/// holds gate `k` in the order input, forget, output, candidate; the first
/// `input` columns multiply `x_t` and the rest multiply `h_{t-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CellBlocks", try_from = "CellBlocks")]
pub struct CellParams {
    input_size: usize,
    hidden_size: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl CellParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        CellParams {
            input_size,
            hidden_size,
            weights: vec![0.0; 4 * hidden_size * (input_size + hidden_size)],
            bias: vec![0.0; 4 * hidden_size],
        }
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub(crate) fn cols(&self) -> usize {
        self.input_size + self.hidden_size
    }

    fn row(&self, gate: Gate, unit: usize) -> usize {
        gate.offset() * self.hidden_size + unit
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Input weights `Wx_gate` as a `hidden x input` row-major copy.
    pub fn input_weights(&self, gate: Gate) -> Vec<f64> {
        let cols = self.cols();
        (0..self.hidden_size)
            .flat_map(|u| {
                let r = self.row(gate, u) * cols;
                self.weights[r..r + self.input_size].iter().copied()
            })
            .collect()
    }

    /// Recurrent weights `Wh_gate` as a `hidden x hidden` row-major copy.
    pub fn recurrent_weights(&self, gate: Gate) -> Vec<f64> {
        let cols = self.cols();
        (0..self.hidden_size)
            .flat_map(|u| {
                let r = self.row(gate, u) * cols + self.input_size;
                self.weights[r..r + self.hidden_size].iter().copied()
            })
            .collect()
    }

    pub fn gate_bias(&self, gate: Gate) -> &[f64] {
        let s = gate.offset() * self.hidden_size;
        &self.bias[s..s + self.hidden_size]
    }

    pub fn gate_bias_mut(&mut self, gate: Gate) -> &mut [f64] {
        let s = gate.offset() * self.hidden_size;
        &mut self.bias[s..s + self.hidden_size]
    }

    pub fn input_weight_mut(&mut self, gate: Gate, unit: usize, col: usize) -> &mut f64 {
        assert!(unit < self.hidden_size && col < self.input_size);
        let idx = self.row(gate, unit) * self.cols() + col;
        &mut self.weights[idx]
    }

    pub fn recurrent_weight_mut(&mut self, gate: Gate, unit: usize, col: usize) -> &mut f64 {
        assert!(unit < self.hidden_size && col < self.hidden_size);
        let idx = self.row(gate, unit) * self.cols() + self.input_size + col;
        &mut self.weights[idx]
    }

    pub fn set_input_weights(&mut self, gate: Gate, values: &[f64]) -> Result<()> {
        if values.len() != self.hidden_size * self.input_size {
            return Err(Error::Shape(format!(
                "Wx block needs {} values, got {}",
                self.hidden_size * self.input_size,
                values.len()
            )));
        }
        for u in 0..self.hidden_size {
            for c in 0..self.input_size {
                *self.input_weight_mut(gate, u, c) = values[u * self.input_size + c];
            }
        }
        Ok(())
    }

    pub fn set_recurrent_weights(&mut self, gate: Gate, values: &[f64]) -> Result<()> {
        if values.len() != self.hidden_size * self.hidden_size {
            return Err(Error::Shape(format!(
                "Wh block needs {} values, got {}",
                self.hidden_size * self.hidden_size,
                values.len()
            )));
        }
        for u in 0..self.hidden_size {
            for c in 0..self.hidden_size {
                *self.recurrent_weight_mut(gate, u, c) = values[u * self.hidden_size + c];
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.hidden_size == 0 {
            return Err(Error::Shape("cell sizes must be positive".into()));
        }
        if self.weights.len() != 4 * self.hidden_size * self.cols() || self.bias.len() != 4 * self.hidden_size {
            return Err(Error::Shape("cell parameter blocks have inconsistent sizes".into()));
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("cell parameters"));
        }
        Ok(())
    }
}

/// Serialized form: the twelve Eq.-style blocks, each row-major.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellBlocks {
    input_size: usize,
    hidden_size: usize,
    wx_i: Vec<f64>,
    wx_f: Vec<f64>,
    wx_o: Vec<f64>,
    wx_g: Vec<f64>,
    wh_i: Vec<f64>,
    wh_f: Vec<f64>,
    wh_o: Vec<f64>,
    wh_g: Vec<f64>,
    b_i: Vec<f64>,
    b_f: Vec<f64>,
    b_o: Vec<f64>,
    b_g: Vec<f64>,
}

impl From<CellParams> for CellBlocks {
    fn from(p: CellParams) -> Self {
        use Gate::*;
        CellBlocks {
            input_size: p.input_size,
            hidden_size: p.hidden_size,
            wx_i: p.input_weights(Input),
            wx_f: p.input_weights(Forget),
            wx_o: p.input_weights(Output),
            wx_g: p.input_weights(Candidate),
            wh_i: p.recurrent_weights(Input),
            wh_f: p.recurrent_weights(Forget),
            wh_o: p.recurrent_weights(Output),
            wh_g: p.recurrent_weights(Candidate),
            b_i: p.gate_bias(Input).to_vec(),
            b_f: p.gate_bias(Forget).to_vec(),
            b_o: p.gate_bias(Output).to_vec(),
            b_g: p.gate_bias(Candidate).to_vec(),
        }
    }
}

impl TryFrom<CellBlocks> for CellParams {
    type Error = Error;

    fn try_from(b: CellBlocks) -> Result<Self> {
        use Gate::*;
        let mut p = CellParams::zeros(b.input_size, b.hidden_size);
        p.set_input_weights(Input, &b.wx_i)?;
        p.set_input_weights(Forget, &b.wx_f)?;
        p.set_input_weights(Output, &b.wx_o)?;
        p.set_input_weights(Candidate, &b.wx_g)?;
        p.set_recurrent_weights(Input, &b.wh_i)?;
        p.set_recurrent_weights(Forget, &b.wh_f)?;
        p.set_recurrent_weights(Output, &b.wh_o)?;
        p.set_recurrent_weights(Candidate, &b.wh_g)?;
        for (gate, v) in [(Input, &b.b_i), (Forget, &b.b_f), (Output, &b.b_o), (Candidate, &b.b_g)] {
            if v.len() != b.hidden_size {
                return Err(Error::Shape(format!("bias block needs {} values", b.hidden_size)));
            }
            p.gate_bias_mut(gate).copy_from_slice(v);
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    /// Short-term state.
    pub h: Vec<f64>,
    /// Long-term state.
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden_size: usize) -> Self {
        CellState {
            h: vec![0.0; hidden_size],
            c: vec![0.0; hidden_size],
        }
    }
}

/// Post-activation gate values of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GateActivations {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
}

/// Dot product with four independent accumulators (fixed summation order).
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// One step of the cell. `z` is `[x_t; h_{t-1}]`; `gates` receives the
/// activated `[i; f; o; g]`; `c` and `h` receive the new states and
/// `tanh_c` the squashed long-term state.
pub(crate) fn step(
    p: &CellParams,
    z: &[f64],
    c_prev: &[f64],
    gates: &mut [f64],
    c: &mut [f64],
    tanh_c: &mut [f64],
    h: &mut [f64],
) {
    let n = p.hidden_size;
    let cols = p.cols();
    for (r, (out, row)) in gates
        .iter_mut()
        .zip(p.weights.chunks_exact(cols))
        .enumerate()
    {
        *out = p.bias[r] + dot(row, z);
    }
    let (ifo, g) = gates.split_at_mut(3 * n);
    for a in ifo.iter_mut() {
        *a = sigmoid(*a);
    }
    for a in g.iter_mut() {
        *a = a.tanh();
    }
    let (i, rest) = ifo.split_at(n);
    let (f, o) = rest.split_at(n);
    for u in 0..n {
        c[u] = f[u] * c_prev[u] + i[u] * g[u];
        tanh_c[u] = c[u].tanh();
        h[u] = o[u] * tanh_c[u];
    }
}

pub fn cell_forward(p: &CellParams, x: &[f64], prev: &CellState) -> Result<CellState> {
    cell_forward_detailed(p, x, prev).map(|(s, _)| s)
}

pub fn cell_forward_detailed(
    p: &CellParams,
    x: &[f64],
    prev: &CellState,
) -> Result<(CellState, GateActivations)> {
    p.validate()?;
    let n = p.hidden_size;
    if x.len() != p.input_size {
        return Err(Error::Shape(format!(
            "input has {} entries, cell expects {}",
            x.len(),
            p.input_size
        )));
    }
    if prev.h.len() != n || prev.c.len() != n {
        return Err(Error::Shape(format!("previous state must have {n} entries")));
    }
    if x.iter().chain(&prev.h).chain(&prev.c).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("cell inputs"));
    }
    let mut z = Vec::with_capacity(p.cols());
    z.extend_from_slice(x);
    z.extend_from_slice(&prev.h);
    let mut gates = vec![0.0; 4 * n];
    let mut state = CellState::zeros(n);
    let mut tanh_c = vec![0.0; n];
    step(p, &z, &prev.c, &mut gates, &mut state.c, &mut tanh_c, &mut state.h);
    if state.h.iter().chain(&state.c).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("cell output"));
    }
    let acts = GateActivations {
        i: gates[..n].to_vec(),
        f: gates[n..2 * n].to_vec(),
        o: gates[2 * n..3 * n].to_vec(),
        g: gates[3 * n..].to_vec(),
    };
    Ok((state, acts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_cell_stays_at_rest() {
        let p = CellParams::zeros(3, 2);
        let s = cell_forward(&p, &[0.3, -1.0, 2.0], &CellState::zeros(2)).unwrap();
        assert_eq!(s, CellState::zeros(2));
    }

    #[test]
    fn scalar_cell_hand_evaluation() {
        let p = CellParams::zeros(1, 1);
        let prev = CellState { h: vec![0.0], c: vec![1.0] };
        let (s, g) = cell_forward_detailed(&p, &[1.0], &prev).unwrap();
        assert_eq!((g.i[0], g.f[0], g.o[0], g.g[0]), (0.5, 0.5, 0.5, 0.0));
        assert!((s.c[0] - 0.5).abs() < 1e-15);
        assert!((s.h[0] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
        assert!((s.h[0] - 0.231059).abs() < 1e-6);
    }

    #[test]
    fn saturated_forget_gate_keeps_memory() {
        let mut p = CellParams::zeros(1, 1);
        p.gate_bias_mut(Gate::Forget)[0] = 20.0;
        let prev = CellState { h: vec![0.0], c: vec![0.7] };
        let s = cell_forward(&p, &[0.0], &prev).unwrap();
        assert!((s.c[0] - 0.7).abs() < 1e-8);
    }

    #[test]
    fn block_accessors_address_the_right_entries() {
        let mut p = CellParams::zeros(2, 3);
        *p.input_weight_mut(Gate::Output, 1, 0) = 4.0;
        *p.recurrent_weight_mut(Gate::Candidate, 2, 1) = -3.0;
        assert_eq!(p.input_weights(Gate::Output), vec![0.0, 0.0, 4.0, 0.0, 0.0, 0.0]);
        let wh = p.recurrent_weights(Gate::Candidate);
        assert_eq!(wh[2 * 3 + 1], -3.0);
        assert_eq!(wh.iter().filter(|v| **v != 0.0).count(), 1);
        assert!(p.input_weights(Gate::Input).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let p = CellParams::zeros(2, 2);
        assert!(matches!(
            cell_forward(&p, &[1.0], &CellState::zeros(2)),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            cell_forward(&p, &[1.0, 0.0], &CellState::zeros(3)),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            cell_forward(&p, &[f64::NAN, 0.0], &CellState::zeros(2)),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
