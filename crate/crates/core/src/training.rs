//! Mini-batch Adam over lookback windows, plus the loss and NRMSE metrics.

use std::cell::RefCell;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::WindowedDataset;
use crate::error::{Error, Result};
use crate::lstm::{backward_block, forward_block, BlockScratch, BlockTape, Gradients, NetworkParams};
use crate::par::Execution;

/// Windows per work item when evaluating a batch gradient. Fixed so the
/// reduction order never depends on the thread count.
pub const GRAD_CHUNK: usize = 64;

const PREDICT_CHUNK: usize = 64;

/// Minimum decrease of the epoch loss that counts as progress.
pub const IMPROVEMENT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
    pub early_stop_patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            clip_norm: 1.0,
            seed: 0,
            early_stop_patience: 25,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning_rate", "must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs", "must be at least 1"));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm >= 0.0) {
            return Err(Error::invalid("clip_norm", "must be finite and non-negative"));
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0) {
            return Err(Error::invalid("adam_beta1", "must lie in (0, 1)"));
        }
        if !(self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return Err(Error::invalid("adam_beta2", "must lie in (0, 1)"));
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(Error::invalid("adam_eps", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss (normalized units) per epoch.
    pub loss_curve: Vec<f64>,
    /// Percent, physical units.
    pub train_nrmse: f64,
    /// Percent, physical units; absent until evaluated on a held-out split.
    pub test_nrmse: Option<f64>,
    pub epochs_run: usize,
    pub wall_time_seconds: f64,
    pub seed: u64,
}

/// `epoch,loss` rows, epochs counted from 1.
pub fn write_loss_csv<W: Write>(report: &TrainReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["epoch", "loss"]).map_err(csv_err)?;
    for (i, l) in report.loss_curve.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<loss csv>", e))
}

pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            available: 0,
        });
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sum / pred.len() as f64)
}

/// `100 * RMSE / (max(target) - min(target))`.
pub fn nrmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: target.len(),
        });
    }
    if pred.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            available: pred.len(),
        });
    }
    let max = target.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = target.iter().copied().fold(f64::INFINITY, f64::min);
    let range = max - min;
    if !(range > 0.0) {
        return Err(Error::DegenerateRange);
    }
    Ok(100.0 * mse_loss(pred, target)?.sqrt() / range)
}

/// Rescales `grads` in place so its global norm is at most `max_norm`
/// (0 disables). Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Adam with bias-corrected moments over the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(param_count: usize, cfg: &TrainConfig) -> Self {
        Adam {
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            lr: cfg.learning_rate,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut NetworkParams, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut k = 0;
        for (p, g) in params.blocks_mut().into_iter().zip(grads.blocks()) {
            for (pi, gi) in p.iter_mut().zip(g) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *pi -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

struct ChunkResult {
    grads: Gradients,
    squared_errors: Vec<f64>,
}

fn chunk_gradient(
    net: &NetworkParams,
    data: &WindowedDataset,
    indices: &[usize],
    seed_scale: f64,
) -> Result<ChunkResult> {
    thread_local! {
        static BUFFERS: RefCell<(BlockTape, BlockScratch)> = RefCell::default();
    }
    let mut grads = net.zeros_like();
    let windows: Vec<&[f64]> = indices.iter().map(|&w| data.window(w)).collect();
    let residuals = BUFFERS.with(|cell| -> Result<Vec<f64>> {
        let (tape, scratch) = &mut *cell.borrow_mut();
        let preds = forward_block(net, &windows, data.lookback(), tape)?;
        let residuals: Vec<f64> = preds
            .iter()
            .zip(indices)
            .map(|(y, &w)| y - data.target(w))
            .collect();
        let seeds: Vec<f64> = residuals.iter().map(|r| seed_scale * 2.0 * r).collect();
        backward_block(net, tape, &seeds, &mut grads, scratch)?;
        Ok(residuals)
    })?;
    Ok(ChunkResult {
        grads,
        squared_errors: residuals.iter().map(|r| r * r).collect(),
    })
}

/// Mean squared-error gradient over the windows in `indices`, and each
/// window's squared error in `indices` order. Chunks of [`GRAD_CHUNK`]
/// windows are evaluated independently and summed in chunk order.
pub fn batch_gradient(
    net: &NetworkParams,
    data: &WindowedDataset,
    indices: &[usize],
    execution: Execution,
) -> Result<(Gradients, Vec<f64>)> {
    if indices.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            available: 0,
        });
    }
    let scale = 1.0 / indices.len() as f64;
    let chunks: Vec<&[usize]> = indices.chunks(GRAD_CHUNK).collect();
    let results = execution.map(&chunks, |c| chunk_gradient(net, data, c, scale));
    let mut total = net.zeros_like();
    let mut squared_errors = Vec::with_capacity(indices.len());
    for r in results {
        let r = r?;
        total.add_assign(&r.grads);
        squared_errors.extend(r.squared_errors);
    }
    Ok((total, squared_errors))
}

/// Predictions (normalized units) for every window, in window order.
pub fn predict_windows(
    net: &NetworkParams,
    data: &WindowedDataset,
    execution: Execution,
) -> Result<Vec<f64>> {
    net.validate()?;
    let starts: Vec<usize> = (0..data.num_windows()).step_by(PREDICT_CHUNK).collect();
    let parts = execution.map(&starts, |&s| -> Result<Vec<f64>> {
        let windows: Vec<&[f64]> = (s..(s + PREDICT_CHUNK).min(data.num_windows()))
            .map(|w| data.window(w))
            .collect();
        let mut tape = BlockTape::default();
        Ok(forward_block(net, &windows, data.lookback(), &mut tape)?.to_vec())
    });
    let mut out = Vec::with_capacity(data.num_windows());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Trains a copy of `net` on `train_set`.
pub fn train(
    net: &NetworkParams,
    train_set: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, TrainReport)> {
    train_observed(net, train_set, cfg, |_, _, _| {})
}

/// [`train`], calling `observe(epoch, params, epoch_loss)` after every epoch.
pub fn train_observed<F>(
    net: &NetworkParams,
    train_set: &WindowedDataset,
    cfg: &TrainConfig,
    mut observe: F,
) -> Result<(NetworkParams, TrainReport)>
where
    F: FnMut(usize, &NetworkParams, f64),
{
    cfg.validate()?;
    net.validate()?;
    if train_set.input_dim() != net.input_dim() {
        return Err(Error::Shape(format!(
            "dataset input_dim {} does not match network input {}",
            train_set.input_dim(),
            net.input_dim()
        )));
    }
    let started = Instant::now();
    let mut params = net.clone();
    let mut adam = Adam::new(params.param_count(), cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.num_windows()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.max_epochs);
    let mut last_finite = f64::NAN;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    // Indexed by window so the epoch mean is summed in a fixed order.
    let mut window_loss = vec![0.0; train_set.num_windows()];

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let diverged = Error::TrainingDivergence {
                epoch,
                last_finite_loss: last_finite,
            };
            let (mut grads, errors) = match batch_gradient(&params, train_set, batch, cfg.execution) {
                Ok(v) => v,
                Err(e) if e.is_divergence() => return Err(diverged),
                Err(e) => return Err(e),
            };
            let batch_loss = errors.iter().sum::<f64>() / batch.len() as f64;
            if !batch_loss.is_finite() || !grads.norm().is_finite() {
                return Err(diverged);
            }
            last_finite = batch_loss;
            for (&w, e) in batch.iter().zip(errors) {
                window_loss[w] = e;
            }
            clip_global_norm(&mut grads, cfg.clip_norm);
            adam.step(&mut params, &grads);
        }
        let epoch_loss = window_loss.iter().sum::<f64>() / train_set.num_windows() as f64;
        loss_curve.push(epoch_loss);
        observe(epoch, &params, epoch_loss);
        if epoch_loss < best - IMPROVEMENT_TOLERANCE {
            best = epoch_loss;
            stalled = 0;
        } else {
            stalled += 1;
            if cfg.early_stop_patience > 0 && stalled >= cfg.early_stop_patience {
                break;
            }
        }
    }

    if params.to_flat().iter().any(|v| !v.is_finite()) {
        return Err(Error::TrainingDivergence {
            epoch: loss_curve.len(),
            last_finite_loss: last_finite,
        });
    }
    let preds = predict_windows(&params, train_set, cfg.execution)?;
    // NRMSE is invariant under the affine map back to physical units.
    let train_nrmse = nrmse(&preds, train_set.targets()).unwrap_or(f64::NAN);
    let report = TrainReport {
        epochs_run: loss_curve.len(),
        loss_curve,
        train_nrmse,
        test_nrmse: None,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        seed: cfg.seed,
    };
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::Architecture;
    use proptest::prelude::*;

    fn toy_dataset(windows: usize, lookback: usize) -> WindowedDataset {
        let n = windows + lookback - 1;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.21).sin()).collect();
        let mut inputs = Vec::new();
        for w in 0..windows {
            inputs.extend_from_slice(&x[w..w + lookback]);
        }
        let targets = (0..windows).map(|w| 0.8 * x[w + lookback - 1].powi(3) - 0.1).collect();
        WindowedDataset::from_parts(inputs, targets, lookback, 1).unwrap()
    }

    fn net(hidden: usize, layers: usize, seed: u64) -> NetworkParams {
        NetworkParams::init(Architecture::new(1, hidden, layers), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert!((mse_loss(&[1.0, 2.0, 3.0], &[0.0, 2.0, 5.0]).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert!(matches!(mse_loss(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn nrmse_examples() {
        assert_eq!(nrmse(&[0.0, 3.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((nrmse(&[1.0, 1.0], &[0.0, 2.0]).unwrap() - 50.0).abs() < 1e-12);
        assert!(matches!(nrmse(&[1.0, 2.0], &[4.0, 4.0]), Err(Error::DegenerateRange)));
    }

    proptest! {
        #[test]
        fn nrmse_is_scale_and_shift_invariant(
            pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..50),
            s in 0.01f64..100.0,
            shift in -100.0f64..100.0,
        ) {
            let pred: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let target: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let range = target.iter().copied().fold(f64::MIN, f64::max) - target.iter().copied().fold(f64::MAX, f64::min);
            prop_assume!(range > 1e-3);
            let base = nrmse(&pred, &target).unwrap();
            let scaled = nrmse(
                &pred.iter().map(|v| v * s).collect::<Vec<_>>(),
                &target.iter().map(|v| v * s).collect::<Vec<_>>(),
            ).unwrap();
            let shifted = nrmse(
                &pred.iter().map(|v| v + shift).collect::<Vec<_>>(),
                &target.iter().map(|v| v + shift).collect::<Vec<_>>(),
            ).unwrap();
            prop_assert!((scaled - base).abs() <= 1e-9 * base.max(1.0));
            prop_assert!((shifted - base).abs() <= 1e-7 * base.max(1.0));
        }
    }

    #[test]
    fn clipping_hits_the_ceiling_exactly() {
        let data = toy_dataset(16, 4);
        let n = net(6, 2, 3);
        let idx: Vec<usize> = (0..16).collect();
        let (mut g, _) = batch_gradient(&n, &data, &idx, Execution::Sequential).unwrap();
        g.scale(50.0 / g.norm());
        let before = clip_global_norm(&mut g, 1.0);
        assert!((before - 50.0).abs() < 1e-9);
        assert!((g.norm() - 1.0).abs() < 1e-12);

        let mut small = g.clone();
        small.scale(0.5);
        let untouched = small.clone();
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small, untouched);
    }

    #[test]
    fn first_adam_step_is_bounded() {
        let data = toy_dataset(16, 4);
        let n = net(5, 1, 9);
        let cfg = TrainConfig { learning_rate: 0.01, ..Default::default() };
        let idx: Vec<usize> = (0..16).collect();
        let (g, _) = batch_gradient(&n, &data, &idx, Execution::Sequential).unwrap();
        let mut p = n.clone();
        Adam::new(p.param_count(), &cfg).step(&mut p, &g);
        let bound = cfg.learning_rate / (1.0 - cfg.adam_beta1) * (1.0 + 1e-6);
        for (a, b) in p.to_flat().iter().zip(n.to_flat()) {
            assert!((a - b).abs() <= bound);
        }
    }

    #[test]
    fn batch_gradient_is_the_mean_of_window_gradients() {
        let data = toy_dataset(19, 3);
        let n = net(3, 2, 4);
        let idx: Vec<usize> = (0..19).rev().collect();
        let (g, errors) = batch_gradient(&n, &data, &idx, Execution::Parallel).unwrap();
        let loss_sum: f64 = errors.iter().sum();
        let mut manual = n.zeros_like();
        let mut manual_loss = 0.0;
        for &w in &idx {
            let (y, tape) = crate::lstm::forward(&n, data.window(w), 3).unwrap();
            let r = y - data.target(w);
            manual_loss += r * r;
            manual.add_assign(&crate::lstm::backward(&n, &tape, 2.0 * r / 19.0).unwrap());
        }
        assert!((loss_sum - manual_loss).abs() < 1e-12);
        for (a, b) in g.to_flat().iter().zip(manual.to_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let data = toy_dataset(40, 5);
        let n = net(4, 2, 6);
        let idx: Vec<usize> = (0..40).collect();
        let (a, la) = batch_gradient(&n, &data, &idx, Execution::Parallel).unwrap();
        let (b, lb) = batch_gradient(&n, &data, &idx, Execution::Sequential).unwrap();
        assert!(la.iter().zip(&lb).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a, b);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let data = toy_dataset(20, 4);
        let n = net(4, 1, 1);
        let cfg = TrainConfig { learning_rate: 0.0, max_epochs: 5, batch_size: 7, ..Default::default() };
        let (trained, report) = train(&n, &data, &cfg).unwrap();
        assert_eq!(trained, n);
        assert!(report.loss_curve.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn seeds_control_the_loss_curve() {
        let data = toy_dataset(30, 4);
        let n = net(4, 1, 2);
        let cfg = TrainConfig { max_epochs: 6, batch_size: 8, learning_rate: 0.01, ..Default::default() };
        let (_, a) = train(&n, &data, &cfg).unwrap();
        let (_, b) = train(&n, &data, &cfg).unwrap();
        let (_, c) = train(&n, &data, &TrainConfig { seed: 1, ..cfg.clone() }).unwrap();
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_ne!(a.loss_curve, c.loss_curve);
    }

    #[test]
    fn divergence_carries_epoch() {
        let data = toy_dataset(10, 3);
        let mut n = net(3, 1, 2);
        n.output_layer_mut().weights[0] = f64::MAX;
        n.output_layer_mut().weights[1] = f64::MAX;
        let cfg = TrainConfig { max_epochs: 3, ..Default::default() };
        match train(&n, &data, &cfg) {
            Err(Error::TrainingDivergence { epoch, .. }) => assert_eq!(epoch, 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn early_stopping_halts_a_stalled_run() {
        let data = toy_dataset(10, 3);
        let n = net(3, 1, 2);
        let cfg = TrainConfig { learning_rate: 0.0, max_epochs: 100, early_stop_patience: 4, ..Default::default() };
        let (_, report) = train(&n, &data, &cfg).unwrap();
        // Epoch 1 sets the best loss; four flat epochs follow.
        assert_eq!(report.epochs_run, 5);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { adam_beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn loss_csv_rows() {
        let report = TrainReport {
            loss_curve: vec![0.5, 0.25],
            train_nrmse: 1.0,
            test_nrmse: None,
            epochs_run: 2,
            wall_time_seconds: 0.0,
            seed: 0,
        };
        let mut buf = Vec::new();
        write_loss_csv(&report, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,loss\n1,0.5\n2,0.25\n");
    }
}
