use brace_lstm::Error;
use brace_lstm::oracle::{
    generate_protocol, generate_record, simulate, simulate_detailed, BoucWenParams, LoadingProtocol,
};
use proptest::prelude::*;

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn bound_params() -> BoucWenParams {
    BoucWenParams {
        a0: 1.0,
        beta: 0.5,
        gamma: 0.5,
        n: 1.0,
        delta_nu: 0.0,
        delta_eta: 0.0,
        asym: 1.0,
        ..BoucWenParams::default()
    }
}

#[test]
fn z_stays_under_closed_form_bound() {
    let protocol = LoadingProtocol {
        delta_y: 1.0,
        ..LoadingProtocol::default()
    };
    let disp = generate_protocol(&protocol).unwrap();
    let params = bound_params();
    assert_eq!(params.z_bound(), 1.0);

    let coarse = simulate_detailed(&params, &disp).unwrap();
    let dense = simulate_detailed(
        &BoucWenParams {
            substeps: params.substeps * 100,
            ..params.clone()
        },
        &disp,
    )
    .unwrap();
    let peak = |z: &[f64]| z.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let (pc, pd) = (peak(&coarse.z), peak(&dense.z));
    assert!(pc <= 1.0, "{pc}");
    assert!(pd <= 1.0, "{pd}");
    assert!((pc - pd).abs() <= 1e-6, "{pc} vs {pd}");
    // The kink of |z| at sign changes limits pointwise agreement to ~1e-5.
    assert!(max_abs_diff(&coarse.z, &dense.z) < 1e-4);
}

#[test]
fn small_signal_secant_stiffness() {
    let base = BoucWenParams::specimen_a().without_degradation();
    let expect = base.alpha * base.k + (1.0 - base.alpha) * base.k * base.a0;
    for amp in [1e-3, 1e-4] {
        let protocol = LoadingProtocol {
            delta_y: amp,
            amplitude_factors: vec![1.0],
            cycles_per_amplitude: 1,
            ..LoadingProtocol::default()
        };
        let rec = generate_record(&protocol, &base).unwrap();
        let peak = rec.force.max();
        let secant = peak / amp;
        assert!((secant - expect).abs() <= 0.05 * expect, "amp {amp}: {secant}");
    }
}

/// Peak compressive force (magnitude) for each cycle.
fn compression_peaks(params: &BoucWenParams) -> Vec<f64> {
    let protocol = LoadingProtocol::default();
    let rec = generate_record(&protocol, params).unwrap();
    let f = rec.force.values();
    (0..protocol.total_cycles())
        .map(|c| {
            let (s, e) = protocol.cycle_range(c);
            -f[s..=e].iter().copied().fold(f64::INFINITY, f64::min)
        })
        .collect()
}

#[test]
fn repeated_cycles_lose_strength() {
    for params in [
        BoucWenParams::specimen_a(),
        BoucWenParams::specimen_b(),
        BoucWenParams {
            asym: 1.0,
            ..BoucWenParams::specimen_a()
        },
    ] {
        let peaks = compression_peaks(&params);
        for pair in peaks.chunks(2) {
            assert!(pair[1] <= pair[0], "{params:?}: {pair:?}");
        }
    }
}

#[test]
fn rk4_refinement_ratio() {
    let disp = generate_protocol(&LoadingProtocol::default()).unwrap();
    let params = BoucWenParams {
        n: 3.0,
        asym: 1.0,
        ..BoucWenParams::specimen_a()
    };
    let runs: Vec<Vec<f64>> = [2, 4, 8]
        .iter()
        .map(|&s| {
            simulate(&BoucWenParams { substeps: s, ..params.clone() }, &disp)
                .unwrap()
                .into_values()
        })
        .collect();
    let e1 = max_abs_diff(&runs[0], &runs[1]);
    let e2 = max_abs_diff(&runs[1], &runs[2]);
    let ratio = e1 / e2;
    assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn correlation_flips_under_degradation() {
    let protocol = LoadingProtocol::default();
    let rec = generate_record(&protocol, &BoucWenParams::specimen_a()).unwrap();
    let (x, f) = (rec.displacement.values(), rec.force.values());
    let (s, e) = protocol.cycle_range(0);
    assert!(pearson(&x[s..=e], &f[s..=e]) > 0.9);

    let per_level: Vec<f64> = (0..protocol.amplitude_factors.len())
        .map(|level| {
            let (s, _) = protocol.cycle_range(level * protocol.cycles_per_amplitude);
            let (_, e) = protocol.cycle_range((level + 1) * protocol.cycles_per_amplitude - 1);
            f[s..=e].iter().fold(0.0_f64, |m, v| m.max(v.abs()))
        })
        .collect();
    let top = per_level
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert!(top < per_level.len() - 1, "{per_level:?}");
    assert!(per_level.last().unwrap() < &per_level[top]);
    assert!(per_level[top..].windows(2).all(|w| w[1] <= w[0]), "{per_level:?}");
}

#[test]
fn energy_grows_cycle_over_cycle() {
    let protocol = LoadingProtocol::default();
    let disp = generate_protocol(&protocol).unwrap();
    for params in [BoucWenParams::specimen_a(), BoucWenParams::specimen_b()] {
        let r = simulate_detailed(&params, &disp).unwrap();
        let half = protocol.points_per_cycle / 2;
        let marks: Vec<f64> = (0..=2 * protocol.total_cycles())
            .map(|k| r.energy[k * half])
            .collect();
        assert!(marks.windows(2).all(|w| w[1] >= w[0]), "{marks:?}");
        assert!(*marks.last().unwrap() > 0.0);
    }
}

#[test]
fn csv_round_trip_of_generated_record() {
    let protocol = LoadingProtocol {
        amplitude_factors: vec![1.0, 2.0],
        points_per_cycle: 16,
        ..LoadingProtocol::default()
    };
    let rec = generate_record(&protocol, &BoucWenParams::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rec.csv");
    brace_lstm::oracle::io::write_record_file(&rec, &path).unwrap();
    let back = brace_lstm::oracle::io::read_record_file(&path).unwrap();
    assert_eq!(back.displacement.values(), rec.displacement.values());
    assert_eq!(back.force.values(), rec.force.values());
    assert_eq!(back.force.dt(), rec.force.dt());
}

#[test]
fn unbounded_shape_is_reported_as_divergence() {
    let protocol = LoadingProtocol { points_per_cycle: 40, ..LoadingProtocol::default() };
    let disp = generate_protocol(&protocol).unwrap();
    let params = BoucWenParams { alpha: 1.0, beta: 0.0, gamma: -4.0, n: 3.75, ..BoucWenParams::default() };
    assert!(matches!(simulate(&params, &disp), Err(Error::OracleDivergence { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn protocol_is_symmetric_and_sized(
        delta_y in 0.01f64..5.0,
        n_levels in 1usize..6,
        cycles in 1usize..4,
        ppc_quarters in 2usize..30,
    ) {
        let protocol = LoadingProtocol {
            delta_y,
            amplitude_factors: (1..=n_levels).map(|i| i as f64).collect(),
            cycles_per_amplitude: cycles,
            points_per_cycle: 4 * ppc_quarters,
            ..LoadingProtocol::default()
        };
        let d = generate_protocol(&protocol).unwrap();
        prop_assert_eq!(d.len(), n_levels * cycles * 4 * ppc_quarters + 1);
        prop_assert_eq!(d.max(), -d.min());
        let top = n_levels as f64 * delta_y;
        prop_assert!((d.max() - top).abs() <= 1e-12 * top);
        prop_assert_eq!(d.values()[0], 0.0);
        prop_assert_eq!(*d.values().last().unwrap(), 0.0);
    }

    #[test]
    fn linear_limit_for_any_hysteretic_shape(
        k in 0.1f64..50.0,
        beta in 0.0f64..20.0,
        sum in 0.1f64..25.0,
        n in 1.0f64..4.0,
    ) {
        let gamma = sum - beta;
        let protocol = LoadingProtocol { points_per_cycle: 40, ..LoadingProtocol::default() };
        let disp = generate_protocol(&protocol).unwrap();
        let params = BoucWenParams { k, alpha: 1.0, beta, gamma, n, ..BoucWenParams::default() };
        let f = simulate(&params, &disp).unwrap();
        for (fi, xi) in f.values().iter().zip(disp.values()) {
            let want = k * xi;
            prop_assert!((fi - want).abs() <= 1e-12 * want.abs().max(f64::MIN_POSITIVE));
        }
    }
}
