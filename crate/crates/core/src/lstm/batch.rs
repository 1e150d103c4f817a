//! Forward and BPTT over a block of windows at once.
//!
//! Same mathematics as [`forward_into`](super::forward_into) and
//! [`backward_into`](super::backward_into), but each time step of a layer is
//! one matrix product over the whole block, and the weight gradients of a
//! layer are a single product over all steps. Training and bulk prediction
//! use this path; the per-window functions remain the reference.

use matrixmultiply::dgemm;

use super::cell::{axpy, dot, sigmoid};
use super::network::{Gradients, NetworkParams};
use crate::error::{Error, Result};

/// `c = a * b + beta * c` for row-major `a` (m x k) and general strides on `b`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(a.len() >= (m - 1) * rsa + (k - 1) * csa + 1);
    debug_assert!(b.len() >= (k - 1) * rsb + (n - 1) * csb + 1);
    debug_assert!(c.len() >= m * n);
    // SAFETY: the slices cover every element addressed by the given
    // shapes and strides (checked above in debug builds, and by
    // construction at every call site), and `c` does not alias `a` or `b`.
    unsafe {
        dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Default, Clone)]
struct BlockLayer {
    inp: usize,
    n: usize,
    /// `steps x batch x (inp + n)`.
    z: Vec<f64>,
    /// `steps x batch x 4n`, activated.
    gates: Vec<f64>,
    /// `(steps + 1) x batch x n`; slot 0 is the zero initial state.
    c: Vec<f64>,
    h: Vec<f64>,
    /// `steps x batch x n`.
    tanh_c: Vec<f64>,
}

/// Activations of a block forward pass.
#[derive(Debug, Default, Clone)]
pub struct BlockTape {
    batch: usize,
    steps: usize,
    layers: Vec<BlockLayer>,
    /// Per head layer, `batch x inputs`.
    head_inputs: Vec<Vec<f64>>,
    predictions: Vec<f64>,
}

impl BlockTape {
    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }
}

/// Runs every window in `windows` (each `lookback x input_dim`) through the
/// network and returns the predictions in order.
pub fn forward_block<'t>(
    net: &NetworkParams,
    windows: &[&[f64]],
    lookback: usize,
    tape: &'t mut BlockTape,
) -> Result<&'t [f64]> {
    let d = net.input_dim();
    let bsz = windows.len();
    if bsz == 0 || lookback == 0 {
        return Err(Error::Shape("empty block".into()));
    }
    if let Some(w) = windows.iter().find(|w| w.len() != lookback * d) {
        return Err(Error::Shape(format!(
            "window has {} values, expected lookback {lookback} x input_dim {d}",
            w.len()
        )));
    }
    tape.batch = bsz;
    tape.steps = lookback;
    tape.layers.resize_with(net.cells.len(), BlockLayer::default);

    for (l, cell) in net.cells.iter().enumerate() {
        let (below, rest) = tape.layers.split_at_mut(l);
        let lt = &mut rest[0];
        let (inp, n) = (cell.input_size(), cell.hidden_size());
        let cols = inp + n;
        lt.inp = inp;
        lt.n = n;
        lt.z.resize(lookback * bsz * cols, 0.0);
        lt.gates.resize(lookback * bsz * 4 * n, 0.0);
        lt.c.resize((lookback + 1) * bsz * n, 0.0);
        lt.h.resize((lookback + 1) * bsz * n, 0.0);
        lt.tanh_c.resize(lookback * bsz * n, 0.0);
        lt.c[..bsz * n].fill(0.0);
        lt.h[..bsz * n].fill(0.0);

        for t in 0..lookback {
            let z = &mut lt.z[t * bsz * cols..(t + 1) * bsz * cols];
            for (b, row) in z.chunks_exact_mut(cols).enumerate() {
                match below.last() {
                    None => row[..inp].copy_from_slice(&windows[b][t * d..(t + 1) * d]),
                    Some(prev) => {
                        let at = ((t + 1) * bsz + b) * inp;
                        row[..inp].copy_from_slice(&prev.h[at..at + inp]);
                    }
                }
                let at = (t * bsz + b) * n;
                row[inp..].copy_from_slice(&lt.h[at..at + n]);
            }
            let a = &mut lt.gates[t * bsz * 4 * n..(t + 1) * bsz * 4 * n];
            gemm(bsz, cols, 4 * n, z, (cols, 1), &cell.weights, (1, cols), 0.0, a);

            let (c_old, c_new) = lt.c.split_at_mut((t + 1) * bsz * n);
            let c_prev = &c_old[t * bsz * n..];
            let h_new = &mut lt.h[(t + 1) * bsz * n..(t + 2) * bsz * n];
            let tc = &mut lt.tanh_c[t * bsz * n..(t + 1) * bsz * n];
            for b in 0..bsz {
                let g = &mut a[b * 4 * n..(b + 1) * 4 * n];
                for (v, bias) in g.iter_mut().zip(&cell.bias) {
                    *v += bias;
                }
                for v in &mut g[..3 * n] {
                    *v = sigmoid(*v);
                }
                for v in &mut g[3 * n..] {
                    *v = v.tanh();
                }
                for u in 0..n {
                    let k = b * n + u;
                    let c = g[n + u] * c_prev[k] + g[u] * g[3 * n + u];
                    c_new[k] = c;
                    tc[k] = c.tanh();
                    h_new[k] = g[2 * n + u] * tc[k];
                }
            }
        }
    }

    let top = tape.layers.last().expect("network has cells");
    let n_top = top.n;
    let last_h = &top.h[lookback * bsz * n_top..(lookback + 1) * bsz * n_top];
    tape.head_inputs.resize_with(net.head.len(), Vec::new);
    tape.head_inputs[0].clear();
    tape.head_inputs[0].extend_from_slice(last_h);
    let last = net.head.len() - 1;
    tape.predictions.clear();
    for (k, layer) in net.head.iter().enumerate() {
        let mut out = Vec::with_capacity(bsz * layer.outputs);
        for x in tape.head_inputs[k].chunks_exact(layer.inputs) {
            for (row, b) in layer.weights.chunks_exact(layer.inputs).zip(&layer.bias) {
                let v = b + dot(row, x);
                out.push(if k == last { v } else { v.tanh() });
            }
        }
        if k == last {
            tape.predictions = out;
        } else {
            tape.head_inputs[k + 1] = out;
        }
    }
    if tape.predictions.iter().any(|y| !y.is_finite()) {
        return Err(Error::Numeric("network prediction"));
    }
    Ok(&tape.predictions)
}

/// Reusable buffers for [`backward_block`].
#[derive(Debug, Default)]
pub struct BlockScratch {
    dh_above: Vec<f64>,
    dh_below: Vec<f64>,
    dh_next: Vec<f64>,
    dc_next: Vec<f64>,
    da: Vec<f64>,
    dz: Vec<f64>,
}

/// Accumulates `sum_b seeds[b] * dPrediction_b/dParams` into `grads`.
pub fn backward_block(
    net: &NetworkParams,
    tape: &BlockTape,
    seeds: &[f64],
    grads: &mut Gradients,
    s: &mut BlockScratch,
) -> Result<()> {
    let bsz = tape.batch;
    let steps = tape.steps;
    if seeds.len() != bsz || tape.layers.len() != net.cells.len() || tape.predictions.len() != bsz
    {
        return Err(Error::StaleTape("block tape does not match the network or seeds".into()));
    }
    if grads.architecture() != net.architecture() {
        return Err(Error::Shape("gradient buffer does not match the network".into()));
    }

    let mut d_out = seeds.to_vec();
    for k in (0..net.head.len()).rev() {
        let layer = &net.head[k];
        let g = &mut grads.head[k];
        let mut d_in = vec![0.0; bsz * layer.inputs];
        for b in 0..bsz {
            let input = &tape.head_inputs[k][b * layer.inputs..(b + 1) * layer.inputs];
            let di = &mut d_in[b * layer.inputs..(b + 1) * layer.inputs];
            for o in 0..layer.outputs {
                let dy = d_out[b * layer.outputs + o];
                g.bias[o] += dy;
                axpy(dy, input, &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs]);
                axpy(dy, &layer.weights[o * layer.inputs..(o + 1) * layer.inputs], di);
            }
            if k > 0 {
                for (d, a) in di.iter_mut().zip(input) {
                    *d *= 1.0 - a * a;
                }
            }
        }
        d_out = d_in;
    }

    let n_top = net.hidden_size();
    s.dh_above.clear();
    s.dh_above.resize(steps * bsz * n_top, 0.0);
    s.dh_above[(steps - 1) * bsz * n_top..].copy_from_slice(&d_out);

    for l in (0..net.cells.len()).rev() {
        let cell = &net.cells[l];
        let lt = &tape.layers[l];
        let g = &mut grads.cells[l];
        let (inp, n) = (lt.inp, lt.n);
        let cols = inp + n;
        s.dh_next.clear();
        s.dh_next.resize(bsz * n, 0.0);
        s.dc_next.clear();
        s.dc_next.resize(bsz * n, 0.0);
        s.da.resize(steps * bsz * 4 * n, 0.0);
        s.dz.resize(bsz * cols, 0.0);
        s.dh_below.clear();
        s.dh_below.resize(steps * bsz * inp, 0.0);

        for t in (0..steps).rev() {
            let gates = &lt.gates[t * bsz * 4 * n..(t + 1) * bsz * 4 * n];
            let da = &mut s.da[t * bsz * 4 * n..(t + 1) * bsz * 4 * n];
            let tc = &lt.tanh_c[t * bsz * n..(t + 1) * bsz * n];
            let c_prev = &lt.c[t * bsz * n..(t + 1) * bsz * n];
            let dh_above = &s.dh_above[t * bsz * n..(t + 1) * bsz * n];
            for b in 0..bsz {
                let gt = &gates[b * 4 * n..(b + 1) * 4 * n];
                let (i, f, o, gg) = (&gt[..n], &gt[n..2 * n], &gt[2 * n..3 * n], &gt[3 * n..]);
                let dab = &mut da[b * 4 * n..(b + 1) * 4 * n];
                for u in 0..n {
                    let k = b * n + u;
                    let dh = dh_above[k] + s.dh_next[k];
                    let dc = s.dc_next[k] + dh * o[u] * (1.0 - tc[k] * tc[k]);
                    dab[u] = dc * gg[u] * i[u] * (1.0 - i[u]);
                    dab[n + u] = dc * c_prev[k] * f[u] * (1.0 - f[u]);
                    dab[2 * n + u] = dh * tc[k] * o[u] * (1.0 - o[u]);
                    dab[3 * n + u] = dc * i[u] * (1.0 - gg[u] * gg[u]);
                    s.dc_next[k] = dc * f[u];
                }
            }
            gemm(bsz, 4 * n, cols, da, (4 * n, 1), &cell.weights, (cols, 1), 0.0, &mut s.dz);
            for b in 0..bsz {
                let row = &s.dz[b * cols..(b + 1) * cols];
                s.dh_below[(t * bsz + b) * inp..(t * bsz + b + 1) * inp].copy_from_slice(&row[..inp]);
                s.dh_next[b * n..(b + 1) * n].copy_from_slice(&row[inp..]);
            }
        }

        let rows = steps * bsz;
        gemm(4 * n, rows, cols, &s.da, (1, 4 * n), &lt.z, (cols, 1), 1.0, &mut g.weights);
        for row in s.da.chunks_exact(4 * n) {
            for (gb, v) in g.bias.iter_mut().zip(row) {
                *gb += v;
            }
        }
        std::mem::swap(&mut s.dh_above, &mut s.dh_below);
    }
    Ok(())
}
