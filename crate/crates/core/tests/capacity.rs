use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use proptest::prelude::*;
use xpmcap::capacity::{
    capacity_bound_entropy_form, capacity_bound_param_form, capacity_sweep, gaussian_differential_entropy,
    phase_variance, CapacityOptions, LogBase, MiSettings, Sweep,
};
use xpmcap::channel::PhaseNoiseChannelSpec;
use xpmcap::mi::{mi_monte_carlo, Constellation};
use xpmcap::xpm_stats::ChannelSum;
use xpmcap::LinkConfig;

/// I(X;Y) of a finite constellation over AWGN by a Riemann sum over the
/// output plane.
fn awgn_mi_by_quadrature(c: &Constellation, sigma_n_sq: f64) -> f64 {
    let pts = c.points();
    let probs = c.probabilities();
    let r = pts.iter().map(|p| p.norm()).fold(0.0, f64::max) + 8.0 * sigma_n_sq.sqrt();
    let n = 600;
    let h = 2.0 * r / n as f64;
    let pdf = |y: Complex64, x: Complex64| (-(y - x).norm_sqr() / sigma_n_sq).exp() / (PI * sigma_n_sq);
    let mut mi = 0.0;
    for i in 0..n {
        for j in 0..n {
            let y = Complex64::new(-r + (i as f64 + 0.5) * h, -r + (j as f64 + 0.5) * h);
            let cond: Vec<f64> = pts.iter().map(|&x| pdf(y, x)).collect();
            let marginal: f64 = cond.iter().zip(probs).map(|(p, q)| p * q).sum();
            for (p, q) in cond.iter().zip(probs) {
                if *p > 0.0 {
                    mi += q * p * (p / marginal).ln() * h * h;
                }
            }
        }
    }
    mi
}

#[test]
fn awgn_estimate_matches_quadrature_oracle() {
    for (rings, phases, sn) in [(1, 4, 0.5), (2, 4, 0.2)] {
        let c = Constellation::rings(rings, phases, 1.0).unwrap();
        let spec = PhaseNoiseChannelSpec::new(0.0, sn, 31).unwrap();
        let est = mi_monte_carlo(&c, &spec, 20_000, 31).unwrap();
        let oracle = awgn_mi_by_quadrature(&c, sn);
        assert!(
            (est.estimate - oracle).abs() <= 2.0 * est.stderr,
            "{rings}x{phases}: {} ± {} vs {oracle}",
            est.estimate,
            est.stderr
        );
    }
}

#[test]
fn strong_phase_noise_erases_phase_but_not_amplitude() {
    let spec = PhaseNoiseChannelSpec::new(10.0, 1e-3, 41).unwrap();
    let psk = mi_monte_carlo(&Constellation::rings(1, 8, 1.0).unwrap(), &spec, 4000, 41).unwrap();
    assert!(psk.estimate.abs() <= 3.0 * psk.stderr + 0.01, "{psk:?}");
    let ask = mi_monte_carlo(&Constellation::rings(4, 1, 1.0).unwrap(), &spec, 4000, 42).unwrap();
    assert!(ask.estimate > 1.0, "{ask:?}");
}

#[test]
fn estimate_stays_below_input_entropy() {
    let c = Constellation::rings(2, 4, 1.0).unwrap();
    let spec = PhaseNoiseChannelSpec::new(0.05, 1e-4, 3).unwrap();
    let est = mi_monte_carlo(&c, &spec, 2000, 3).unwrap();
    assert!(est.estimate <= 8f64.ln() + 3.0 * est.stderr);
    assert!(est.estimate > 1.5);
}

#[test]
fn constellation_over_power_limit_rejected() {
    let c = Constellation::rings(1, 4, 2.0).unwrap();
    let spec = PhaseNoiseChannelSpec::new(0.1, 0.1, 0).unwrap().with_power_limit(1.0);
    assert!(mi_monte_carlo(&c, &spec, 1000, 0).is_err());
}

#[test]
fn descending_power_sweep_gives_increasing_bound() {
    let s = Sweep::parse("P=1,0.1,0.01,0.001").unwrap();
    let r = capacity_sweep(&LinkConfig::nominal(), &s, &CapacityOptions::new(1e-6)).unwrap();
    let b: Vec<f64> = r.rows.iter().map(|x| x.bound_params).collect();
    assert!(b.windows(2).all(|w| w[1] > w[0]), "{b:?}");
    assert!(r.max_form_gap() <= 1e-12);
}

#[test]
fn length_doubling_sweep_decreases_bound() {
    let s = Sweep::parse("L=geom:10:160:5").unwrap();
    let r = capacity_sweep(&LinkConfig::nominal(), &s, &CapacityOptions::new(1e-6)).unwrap();
    assert!(r.rows.windows(2).all(|w| w[1].bound_params < w[0].bound_params));
}

#[test]
fn sweep_with_mutual_information_columns() {
    let mut opts = CapacityOptions::new(1e-7);
    opts.base = LogBase::Bits;
    opts.harmonic = true;
    opts.mi = Some(MiSettings {
        constellation: Constellation::rings(1, 4, 1.0).unwrap(),
        n_samples: 1000,
        seed: 8,
    });
    let r = capacity_sweep(&LinkConfig::nominal(), &Sweep::parse("P=0.001,0.002").unwrap(), &opts).unwrap();
    let rep = r.to_report();
    for col in ["mi_estimate", "mi_stderr", "bound_harmonic"] {
        let v = rep.column(col).unwrap();
        assert!(v.iter().all(|s| s.parse::<f64>().is_ok()), "{col}: {v:?}");
    }
    assert_eq!(rep.get_meta("units"), Some("bits"));
    for row in &r.rows {
        let mi = row.mi.unwrap();
        assert!(mi.estimate <= row.bound_entropy + 3.0 * mi.stderr);
    }
}

#[test]
fn harmonic_sum_bound_is_below_log_bound() {
    // H_m > ln m, so the harmonic form predicts more phase noise
    let mut opts = CapacityOptions::new(1e-6);
    opts.harmonic = true;
    let r = capacity_sweep(&LinkConfig::nominal(), &Sweep::parse("N=10,100,1000").unwrap(), &opts).unwrap();
    for row in &r.rows {
        assert!(row.bound_harmonic.unwrap() < row.bound_params);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn entropy_and_parametric_forms_agree(
        beta2 in 1.0..60.0f64,
        spacing in 10.0..200.0f64,
        vg in 1.5e5..2.5e5f64,
        length in 1.0..300.0f64,
        half in 2u32..500,
        log_p in -5.0..0.0f64,
        log_sn in -10.0..-2.0f64,
    ) {
        let mut c = LinkConfig::nominal();
        c.beta2 = beta2;
        c.channel_spacing = spacing;
        c.group_velocity = vg;
        c.length_l = length;
        c.n_channels = 2 * half;
        let (p, sn) = (10f64.powf(log_p), 10f64.powf(log_sn));
        let h = gaussian_differential_entropy(phase_variance(&c, p, ChannelSum::Log).unwrap()).unwrap();
        let a = capacity_bound_entropy_form(p, sn, h).unwrap();
        let b = capacity_bound_param_form(&c, p, sn).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b);
        prop_assert!((LogBase::Bits.from_nats(b) - b / LN_2).abs() <= 1e-14 * b / LN_2);
    }
}
