use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cell::{axpy, dot, step, CellParams};
use crate::error::{Error, Result};

/// Fully connected layer of the output head. Hidden head layers use tanh;
/// the final layer is linear with a single unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.weights.len() != self.inputs * self.outputs || self.bias.len() != self.outputs {
            return Err(Error::Shape("dense layer blocks have inconsistent sizes".into()));
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("head parameters"));
        }
        Ok(())
    }
}

/// Shape of a stacked network: every LSTM layer has `hidden_size` units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_size: usize,
    pub layers: usize,
    /// Dense layers in the output head, the last being the linear output.
    pub head_layers: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden_size: usize, layers: usize) -> Self {
        Architecture {
            input_dim,
            hidden_size,
            layers,
            head_layers: 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim", "must be at least 1"));
        }
        if self.hidden_size == 0 {
            return Err(Error::invalid("neurons", "must be at least 1"));
        }
        if self.layers == 0 {
            return Err(Error::invalid("hidden_layers", "must be at least 1"));
        }
        if self.head_layers == 0 {
            return Err(Error::invalid("head_layers", "must be at least 1"));
        }
        Ok(())
    }
}

/// Stacked LSTM cells followed by the dense output head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkParams {
    pub cells: Vec<CellParams>,
    pub head: Vec<DenseLayer>,
}

/// Gradients share the parameter layout.
pub type Gradients = NetworkParams;

fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize, out: &mut [f64]) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in out {
        *v = rng.gen_range(-bound..=bound);
    }
}

impl NetworkParams {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let n = arch.hidden_size;
        let cells = (0..arch.layers)
            .map(|l| CellParams::zeros(if l == 0 { arch.input_dim } else { n }, n))
            .collect();
        let head = (0..arch.head_layers)
            .map(|k| DenseLayer::zeros(n, if k + 1 == arch.head_layers { 1 } else { n }))
            .collect();
        Ok(NetworkParams { cells, head })
    }

    /// Glorot-uniform weights per gate block, zero biases except the forget
    /// gate at 1.
    pub fn init(arch: Architecture, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        for cell in &mut net.cells {
            let (input, hidden, cols) = (cell.input_size(), cell.hidden_size(), cell.cols());
            let mut wx = vec![0.0; hidden * input];
            let mut wh = vec![0.0; hidden * hidden];
            for row_block in cell.weights.chunks_exact_mut(hidden * cols) {
                glorot(rng, input, hidden, &mut wx);
                glorot(rng, hidden, hidden, &mut wh);
                for (u, row) in row_block.chunks_exact_mut(cols).enumerate() {
                    row[..input].copy_from_slice(&wx[u * input..(u + 1) * input]);
                    row[input..].copy_from_slice(&wh[u * hidden..(u + 1) * hidden]);
                }
            }
            cell.gate_bias_mut(super::cell::Gate::Forget).fill(1.0);
        }
        for layer in &mut net.head {
            glorot(rng, layer.inputs, layer.outputs, &mut layer.weights);
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.cells[0].input_size()
    }

    pub fn hidden_size(&self) -> usize {
        self.cells[0].hidden_size()
    }

    pub fn layers(&self) -> usize {
        self.cells.len()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.input_dim(),
            hidden_size: self.hidden_size(),
            layers: self.layers(),
            head_layers: self.head.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() || self.head.is_empty() {
            return Err(Error::Shape("network needs at least one cell and one head layer".into()));
        }
        let mut width = self.cells[0].input_size();
        for cell in &self.cells {
            cell.validate()?;
            if cell.input_size() != width {
                return Err(Error::Shape(format!(
                    "layer input {} does not match previous width {width}",
                    cell.input_size()
                )));
            }
            width = cell.hidden_size();
        }
        for layer in &self.head {
            layer.validate()?;
            if layer.inputs != width {
                return Err(Error::Shape("head input width mismatch".into()));
            }
            width = layer.outputs;
        }
        if width != 1 {
            return Err(Error::Shape("head must end in a single output".into()));
        }
        Ok(())
    }

    /// The final linear unit `(W_out, b_out)`.
    pub fn output_layer(&self) -> &DenseLayer {
        self.head.last().expect("validated network has a head")
    }

    pub fn output_layer_mut(&mut self) -> &mut DenseLayer {
        self.head.last_mut().expect("validated network has a head")
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// Every parameter block in a fixed order.
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(2 * (self.cells.len() + self.head.len()));
        for c in &self.cells {
            out.push(&c.weights);
            out.push(&c.bias);
        }
        for h in &self.head {
            out.push(&h.weights);
            out.push(&h.bias);
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(2 * (self.cells.len() + self.head.len()));
        for c in &mut self.cells {
            out.push(&mut c.weights);
            out.push(&mut c.bias);
        }
        for h in &mut self.head {
            out.push(&mut h.weights);
            out.push(&mut h.bias);
        }
        out
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn fill(&mut self, v: f64) {
        for b in self.blocks_mut() {
            b.fill(v);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for b in self.blocks_mut() {
            for x in b {
                *x *= s;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.blocks()
            .iter()
            .map(|b| b.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Flat copy in `blocks()` order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().concat()
    }
}

/// Per-layer activations recorded by a forward pass.
#[derive(Debug, Clone, Default)]
pub struct LayerTape {
    input_size: usize,
    hidden_size: usize,
    /// `[x_t; h_{t-1}]` per step, `steps x (input + hidden)`.
    z: Vec<f64>,
    /// Activated `[i; f; o; g]` per step.
    gates: Vec<f64>,
    /// Long-term state, `(steps + 1) x hidden`, row 0 is the zero initial state.
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    /// Short-term state, `(steps + 1) x hidden`.
    h: Vec<f64>,
}

impl LayerTape {
    fn reset(&mut self, input_size: usize, hidden_size: usize, steps: usize) {
        let cols = input_size + hidden_size;
        self.input_size = input_size;
        self.hidden_size = hidden_size;
        self.z.clear();
        self.z.resize(steps * cols, 0.0);
        self.gates.clear();
        self.gates.resize(steps * 4 * hidden_size, 0.0);
        self.c.clear();
        self.c.resize((steps + 1) * hidden_size, 0.0);
        self.tanh_c.clear();
        self.tanh_c.resize(steps * hidden_size, 0.0);
        self.h.clear();
        self.h.resize((steps + 1) * hidden_size, 0.0);
    }

    /// `h` after step `t` (0-based).
    pub fn h_at(&self, t: usize) -> &[f64] {
        let n = self.hidden_size;
        &self.h[(t + 1) * n..(t + 2) * n]
    }

    /// `c` after step `t` (0-based).
    pub fn c_at(&self, t: usize) -> &[f64] {
        let n = self.hidden_size;
        &self.c[(t + 1) * n..(t + 2) * n]
    }

    /// Activated `[i; f; o; g]` at step `t`.
    pub fn gates_at(&self, t: usize) -> &[f64] {
        let g = 4 * self.hidden_size;
        &self.gates[t * g..(t + 1) * g]
    }
}

/// Everything backward needs from one forward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    steps: usize,
    layers: Vec<LayerTape>,
    /// Input to each head layer.
    head_inputs: Vec<Vec<f64>>,
    prediction: f64,
    complete: bool,
}

impl Tape {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn layer(&self, l: usize) -> &LayerTape {
        &self.layers[l]
    }

    pub fn prediction(&self) -> f64 {
        self.prediction
    }

    fn matches(&self, net: &NetworkParams) -> Result<()> {
        if !self.complete {
            return Err(Error::StaleTape("tape was not produced by a completed forward pass".into()));
        }
        if self.layers.len() != net.cells.len() || self.head_inputs.len() != net.head.len() {
            return Err(Error::StaleTape("layer count differs from the network".into()));
        }
        for (lt, cell) in self.layers.iter().zip(&net.cells) {
            if lt.input_size != cell.input_size() || lt.hidden_size != cell.hidden_size() {
                return Err(Error::StaleTape("layer widths differ from the network".into()));
            }
        }
        for (inp, layer) in self.head_inputs.iter().zip(&net.head) {
            if inp.len() != layer.inputs {
                return Err(Error::StaleTape("head widths differ from the network".into()));
            }
        }
        Ok(())
    }
}

/// Runs one window (`lookback x input_dim`, row-major) through the stack with
/// zero initial states and returns `W_out * h_last + b_out`.
pub fn forward(net: &NetworkParams, window: &[f64], lookback: usize) -> Result<(f64, Tape)> {
    net.validate()?;
    let mut tape = Tape::default();
    let y = forward_into(net, window, lookback, &mut tape)?;
    Ok((y, tape))
}

/// [`forward`] reusing `tape`'s buffers. Skips the full parameter
/// validation; callers validate once up front.
pub fn forward_into(
    net: &NetworkParams,
    window: &[f64],
    lookback: usize,
    tape: &mut Tape,
) -> Result<f64> {
    tape.complete = false;
    let d = net.input_dim();
    if lookback == 0 || window.len() != lookback * d {
        return Err(Error::Shape(format!(
            "window has {} values, expected lookback {lookback} x input_dim {d}",
            window.len()
        )));
    }
    tape.steps = lookback;
    tape.layers.resize_with(net.cells.len(), LayerTape::default);
    for (l, cell) in net.cells.iter().enumerate() {
        let (below, rest) = tape.layers.split_at_mut(l);
        let lt = &mut rest[0];
        let (inp, n) = (cell.input_size(), cell.hidden_size());
        let cols = inp + n;
        lt.reset(inp, n, lookback);
        for t in 0..lookback {
            let x_t: &[f64] = match below.last() {
                None => &window[t * d..(t + 1) * d],
                Some(prev) => prev.h_at(t),
            };
            let z = &mut lt.z[t * cols..(t + 1) * cols];
            z[..inp].copy_from_slice(x_t);
            z[inp..].copy_from_slice(&lt.h[t * n..(t + 1) * n]);
            let (c_prev, c_next) = lt.c.split_at_mut((t + 1) * n);
            let h_next = &mut lt.h[(t + 1) * n..(t + 2) * n];
            step(
                cell,
                &lt.z[t * cols..(t + 1) * cols],
                &c_prev[t * n..],
                &mut lt.gates[t * 4 * n..(t + 1) * 4 * n],
                &mut c_next[..n],
                &mut lt.tanh_c[t * n..(t + 1) * n],
                h_next,
            );
        }
    }

    let top = tape.layers.last().expect("network has cells");
    let mut act = top.h_at(lookback - 1).to_vec();
    tape.head_inputs.resize_with(net.head.len(), Vec::new);
    let last = net.head.len() - 1;
    for (k, layer) in net.head.iter().enumerate() {
        tape.head_inputs[k].clear();
        tape.head_inputs[k].extend_from_slice(&act);
        let mut out: Vec<f64> = layer
            .weights
            .chunks_exact(layer.inputs)
            .zip(&layer.bias)
            .map(|(row, b)| b + dot(row, &tape.head_inputs[k]))
            .collect();
        if k != last {
            for v in &mut out {
                *v = v.tanh();
            }
        }
        act = out;
    }
    let y = act[0];
    if !y.is_finite() {
        return Err(Error::Numeric("network prediction"));
    }
    tape.prediction = y;
    tape.complete = true;
    Ok(y)
}

/// Reusable buffers for [`backward_into`].
#[derive(Debug, Default)]
pub struct BpttScratch {
    dh_above: Vec<f64>,
    dh_below: Vec<f64>,
    dh_next: Vec<f64>,
    dc_next: Vec<f64>,
    da: Vec<f64>,
    dz: Vec<f64>,
}

/// Exact gradients of the prediction scaled by `d_prediction`.
pub fn backward(net: &NetworkParams, tape: &Tape, d_prediction: f64) -> Result<Gradients> {
    let mut grads = net.zeros_like();
    backward_into(net, tape, d_prediction, &mut grads, &mut BpttScratch::default())?;
    Ok(grads)
}

/// Accumulates `d_prediction * dPrediction/dParams` into `grads`.
pub fn backward_into(
    net: &NetworkParams,
    tape: &Tape,
    d_prediction: f64,
    grads: &mut Gradients,
    scratch: &mut BpttScratch,
) -> Result<()> {
    backward_impl(net, tape, d_prediction, grads, scratch, true)
}

/// `carry_cell = false` severs the `dc_t -> dc_{t-1}` path; only the
/// gradient-check mutation fixture uses it.
pub(crate) fn backward_impl(
    net: &NetworkParams,
    tape: &Tape,
    d_prediction: f64,
    grads: &mut Gradients,
    s: &mut BpttScratch,
    carry_cell: bool,
) -> Result<()> {
    tape.matches(net)?;
    if grads.architecture() != net.architecture() {
        return Err(Error::Shape("gradient buffer does not match the network".into()));
    }
    let steps = tape.steps;

    // Head, top to bottom.
    let mut d_out = vec![d_prediction];
    for k in (0..net.head.len()).rev() {
        let layer = &net.head[k];
        let g = &mut grads.head[k];
        let input = &tape.head_inputs[k];
        let mut d_in = vec![0.0; layer.inputs];
        for (o, &dy) in d_out.iter().enumerate() {
            g.bias[o] += dy;
            axpy(dy, input, &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs]);
            axpy(dy, &layer.weights[o * layer.inputs..(o + 1) * layer.inputs], &mut d_in);
        }
        if k > 0 {
            // Input of layer k is the tanh output of layer k-1.
            for (d, a) in d_in.iter_mut().zip(input) {
                *d *= 1.0 - a * a;
            }
        }
        d_out = d_in;
    }

    // LSTM stack: dh from above is only the head gradient at the last step
    // for the top layer, and the full dx sequence for the layers beneath.
    let n_top = net.hidden_size();
    s.dh_above.clear();
    s.dh_above.resize(steps * n_top, 0.0);
    s.dh_above[(steps - 1) * n_top..].copy_from_slice(&d_out);

    for l in (0..net.cells.len()).rev() {
        let cell = &net.cells[l];
        let lt = &tape.layers[l];
        let g = &mut grads.cells[l];
        let (inp, n) = (cell.input_size(), cell.hidden_size());
        let cols = inp + n;
        s.dh_next.clear();
        s.dh_next.resize(n, 0.0);
        s.dc_next.clear();
        s.dc_next.resize(n, 0.0);
        s.da.resize(4 * n, 0.0);
        s.dz.resize(cols, 0.0);
        s.dh_below.clear();
        s.dh_below.resize(steps * inp, 0.0);

        for t in (0..steps).rev() {
            let gates = lt.gates_at(t);
            let (i, f, o, gg) = (&gates[..n], &gates[n..2 * n], &gates[2 * n..3 * n], &gates[3 * n..]);
            let tc = &lt.tanh_c[t * n..(t + 1) * n];
            let c_prev = &lt.c[t * n..(t + 1) * n];
            for u in 0..n {
                let dh = s.dh_above[t * n + u] + s.dh_next[u];
                let dc = s.dc_next[u] + dh * o[u] * (1.0 - tc[u] * tc[u]);
                s.da[u] = dc * gg[u] * i[u] * (1.0 - i[u]);
                s.da[n + u] = dc * c_prev[u] * f[u] * (1.0 - f[u]);
                s.da[2 * n + u] = dh * tc[u] * o[u] * (1.0 - o[u]);
                s.da[3 * n + u] = dc * i[u] * (1.0 - gg[u] * gg[u]);
                s.dc_next[u] = if carry_cell { dc * f[u] } else { 0.0 };
            }
            let z = &lt.z[t * cols..(t + 1) * cols];
            s.dz.fill(0.0);
            for (r, &da) in s.da.iter().enumerate() {
                g.bias[r] += da;
                axpy(da, z, &mut g.weights[r * cols..(r + 1) * cols]);
                axpy(da, &cell.weights[r * cols..(r + 1) * cols], &mut s.dz);
            }
            s.dh_below[t * inp..(t + 1) * inp].copy_from_slice(&s.dz[..inp]);
            s.dh_next.copy_from_slice(&s.dz[inp..]);
        }
        std::mem::swap(&mut s.dh_above, &mut s.dh_below);
    }
    Ok(())
}
