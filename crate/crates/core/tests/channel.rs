use num_complex::Complex64;
use xpmcap::channel::{apply_lumped_channel, discrete_channel, sigma_u_sq_lumped, PhaseNoiseChannelSpec};
use xpmcap::stats::normality_test;
use xpmcap::xpm_stats::{sigma_nu_sq, ChannelSum};
use xpmcap::{LinkConfig, SignalGrid, SimGrid};

const N: usize = 100_000;

fn ring_symbols(n: usize) -> Vec<Complex64> {
    (0..n).map(|k| Complex64::from_polar(1.0 + 0.5 * (k % 2) as f64, 0.25 * k as f64)).collect()
}

#[test]
fn uniform_phase_limit() {
    let x = ring_symbols(N);
    let y = discrete_channel(&x, &PhaseNoiseChannelSpec::new(1e4, 0.0, 1).unwrap()).unwrap();
    let mut circ = Complex64::new(0.0, 0.0);
    for (a, b) in y.iter().zip(&x) {
        assert!((a.norm() - b.norm()).abs() <= 1e-12 * b.norm());
        let r = a / b;
        circ += r / r.norm();
    }
    assert!((circ / N as f64).norm() < 0.02);
}

#[test]
fn conditional_mean_follows_characteristic_function() {
    let x = ring_symbols(N);
    for (su, seed) in [(0.2, 2), (1.0, 3), (2.0, 4)] {
        let y = discrete_channel(&x, &PhaseNoiseChannelSpec::new(su, 0.0, seed).unwrap()).unwrap();
        let mean: Complex64 = y.iter().zip(&x).map(|(a, b)| a / b).sum::<Complex64>() / N as f64;
        let target = (-su / 2.0f64).exp();
        assert!((mean - target).norm() <= 0.02 * target, "σ²_U = {su}: {mean}");
    }
}

#[test]
fn small_angle_phase_variance() {
    let x = ring_symbols(N);
    for su in [0.01, 0.05, 0.1] {
        let y = discrete_channel(&x, &PhaseNoiseChannelSpec::new(su, 0.0, 5).unwrap()).unwrap();
        let ph: Vec<f64> = y.iter().zip(&x).map(|(a, b)| (a / b).arg()).collect();
        let m = ph.iter().sum::<f64>() / N as f64;
        let v = ph.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (N - 1) as f64;
        assert!((v - su).abs() <= 0.03 * su, "σ²_U = {su}: {v}");
    }
}

#[test]
fn zero_phase_noise_is_awgn() {
    let x = ring_symbols(N);
    let sn = 0.04;
    let y = discrete_channel(&x, &PhaseNoiseChannelSpec::new(0.0, sn, 6).unwrap()).unwrap();
    let n: Vec<Complex64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
    let re: Vec<f64> = n.iter().map(|v| v.re).collect();
    let im: Vec<f64> = n.iter().map(|v| v.im).collect();
    let var = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64;
    assert!((var(&re) - sn / 2.0).abs() <= 0.02 * sn / 2.0);
    assert!((var(&im) - sn / 2.0).abs() <= 0.02 * sn / 2.0);
    let cross = re.iter().zip(&im).map(|(a, b)| a * b).sum::<f64>() / N as f64;
    assert!(cross.abs() <= 0.02 * sn / 2.0);
    assert!(normality_test(&re).unwrap().p_value > 0.01);
    assert!(normality_test(&im).unwrap().p_value > 0.01);
}

#[test]
fn lumped_channel_applies_one_phase_per_block() {
    let g = SimGrid::new(100.0, 256, 1, 50.0);
    let x = SignalGrid::from_fn(g, 0, |t| Complex64::new(1.0 + 0.01 * t, 0.3));
    let spec = PhaseNoiseChannelSpec::new(0.7, 0.0, 9).unwrap();
    let y = apply_lumped_channel(&x, &spec).unwrap();
    let r0 = y.samples()[0] / x.samples()[0];
    assert!((r0.norm() - 1.0).abs() < 1e-14);
    for (a, b) in y.samples().iter().zip(x.samples()) {
        assert!((a / b - r0).norm() < 1e-13);
    }
    assert_eq!(y, apply_lumped_channel(&x, &spec).unwrap());
}

#[test]
fn lumped_variance_for_nominal_link() {
    let c = LinkConfig::nominal();
    let s = sigma_nu_sq(&c, ChannelSum::Harmonic);
    // 2·(1e-3)²·H_50/(20·0.05²) · 50/200000 · 50²
    let h50 = 4.499_205_338_329_425;
    let expect = 2.0 * 1e-6 * h50 / (20.0 * 0.0025) * (50.0 / 200_000.0) * 2500.0;
    assert!((sigma_u_sq_lumped(s, &c) - expect).abs() <= 1e-13 * expect);
}
