//! Central finite-difference check of the BPTT gradients.

use super::network::{backward_impl, forward, BpttScratch, NetworkParams};
use crate::error::Result;

pub const GRADCHECK_EPSILON: f64 = 1e-5;

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn squared_error(net: &NetworkParams, window: &[f64], lookback: usize, target: f64) -> Result<f64> {
    let (y, _) = forward(net, window, lookback)?;
    Ok((y - target) * (y - target))
}

fn check(
    net: &NetworkParams,
    window: &[f64],
    lookback: usize,
    target: f64,
    carry_cell: bool,
) -> Result<f64> {
    let (y, tape) = forward(net, window, lookback)?;
    let mut analytic = net.zeros_like();
    backward_impl(
        net,
        &tape,
        2.0 * (y - target),
        &mut analytic,
        &mut BpttScratch::default(),
        carry_cell,
    )?;
    let analytic = analytic.to_flat();

    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut idx = 0;
    let block_lens: Vec<usize> = net.blocks().iter().map(|b| b.len()).collect();
    for (b, len) in block_lens.into_iter().enumerate() {
        for j in 0..len {
            let orig = probe.blocks()[b][j];
            probe.blocks_mut()[b][j] = orig + GRADCHECK_EPSILON;
            let plus = squared_error(&probe, window, lookback, target)?;
            probe.blocks_mut()[b][j] = orig - GRADCHECK_EPSILON;
            let minus = squared_error(&probe, window, lookback, target)?;
            probe.blocks_mut()[b][j] = orig;
            let numeric = (plus - minus) / (2.0 * GRADCHECK_EPSILON);
            worst = worst.max(relative_error(analytic[idx], numeric));
            idx += 1;
        }
    }
    Ok(worst)
}

/// Largest relative discrepancy, `|a-b| / max(|a|, |b|, 1e-12)`, between
/// the backward-pass gradient of `(prediction - target)^2` and its central
/// difference over every parameter.
pub fn grad_check(net: &NetworkParams, window: &[f64], lookback: usize, target: f64) -> Result<f64> {
    check(net, window, lookback, target, true)
}

/// Same check against a backward pass with the long-term state recurrence
/// cut, so the checker can be shown to fail.
pub fn grad_check_corrupted(
    net: &NetworkParams,
    window: &[f64],
    lookback: usize,
    target: f64,
) -> Result<f64> {
    check(net, window, lookback, target, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::network::Architecture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(arch: Architecture, lookback: usize, seed: u64) -> (NetworkParams, Vec<f64>, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = NetworkParams::init(arch, &mut rng).unwrap();
        let window: Vec<f64> = (0..lookback * arch.input_dim)
            .map(|_| rng.gen_range(-1.5..1.5))
            .collect();
        (net, window, rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn passes_on_random_nets() {
        for seed in 0..5 {
            let (net, w, t) = setup(Architecture::new(1, 4, 2), 5, seed);
            let err = grad_check(&net, &w, 5, t).unwrap();
            assert!(err <= 1e-5, "seed {seed}: {err}");
        }
    }

    #[test]
    fn passes_with_deep_head_and_wide_input() {
        let arch = Architecture {
            head_layers: 3,
            ..Architecture::new(3, 3, 2)
        };
        let (net, w, t) = setup(arch, 4, 99);
        assert!(grad_check(&net, &w, 4, t).unwrap() <= 1e-5);
    }

    #[test]
    fn corrupted_path_is_caught() {
        let (net, w, t) = setup(Architecture::new(1, 4, 2), 5, 1);
        assert!(grad_check_corrupted(&net, &w, 5, t).unwrap() > 1e-2);
    }

    #[test]
    fn tiny_parameter_scale() {
        let (mut net, w, _) = setup(Architecture::new(1, 4, 2), 5, 2);
        for b in net.blocks_mut() {
            for v in b {
                *v *= 1e-8;
            }
        }
        assert!(grad_check(&net, &w, 5, 0.0).unwrap() <= 1e-5);
    }
}
