//! Split-step integration of the channel equations of motion.
//!
//! Two solvers share one linear operator. Per z-step of length `dz` the
//! envelope of channel `k` is filtered by `exp(iβ₂ω²dz/2 - iω·τ_k·dz)`
//! (dispersion plus walk-off delay `τ_k = k·beta1_slope`, in the frame
//! co-moving with channel 0), which is the frequency response of the
//! Fresnel kernel in [`fresnel`]. Steps are Strang-split: half linear,
//! full nonlinear or potential phase, half linear. The time window is
//! periodic.

pub mod fresnel;
mod signal;
pub(crate) mod spectral;

use num_complex::Complex64;
use rayon::prelude::*;

pub use fresnel::{chirp_transform, free_propagator, inverse_chirp_transform};
pub use signal::SignalGrid;
use spectral::Spectral;

use crate::config::{LinkConfig, SimGrid};
use crate::error::{Error, Result};
use crate::xpm_stats::PotentialField;

/// ∫_{z}^{z+dz} e^{-αz'} dz'.
pub(crate) fn loss_weighted_length(alpha: f64, z: f64, dz: f64) -> f64 {
    if alpha == 0.0 {
        dz
    } else {
        (-alpha * z).exp() * -(-alpha * dz).exp_m1() / alpha
    }
}

fn check_power(x: &SignalGrid, limit: f64) -> Result<()> {
    let p = x.mean_power();
    if p > limit * (1.0 + 1e-12) {
        return Err(Error::PowerConstraint {
            channel: x.channel_index(),
            power: p,
            limit,
        });
    }
    Ok(())
}

/// Integrates the coupled equations for every channel slot k = -N/2 ..= N/2
/// up to z = L and returns the outputs in input order.
///
/// The nonlinear step multiplies channel `k` by
/// `exp(iγ[|x_k|² + 2Σ_{l≠k}|x_l|²]·∫e^{-αz}dz)` over the step; the
/// intensities are frozen at the step midpoint, which is exact for the
/// phase-only nonlinear flow. The result does not depend on the number of
/// rayon workers.
pub fn propagate_coupled(
    inputs: &[SignalGrid],
    config: &LinkConfig,
    grid: &SimGrid,
) -> Result<Vec<SignalGrid>> {
    let expected: Vec<i64> = config.channel_indices().collect();
    let mut seen: Vec<i64> = inputs.iter().map(|s| s.channel_index()).collect();
    seen.sort_unstable();
    if seen != expected {
        return Err(Error::invalid(format!(
            "expected one input per channel index {}..={}, got {:?}",
            -config.half_channels(),
            config.half_channels(),
            seen
        )));
    }
    for x in inputs {
        if !x.grid().same_lattice(grid) {
            return Err(Error::GridMismatch(format!(
                "channel {} is not on the simulation grid",
                x.channel_index()
            )));
        }
        check_power(x, config.channel_power)?;
    }

    let m = grid.n_zsteps();
    let dz = config.length_l / m as f64;
    let spectral = Spectral::new(grid);
    let half: Vec<Vec<Complex64>> = inputs
        .iter()
        .map(|x| spectral.transfer(0.5 * config.beta2 * dz, 0.5 * config.walk_off(x.channel_index()) * dz))
        .collect();

    let mut fields: Vec<Vec<Complex64>> = inputs.iter().map(|x| x.samples().to_vec()).collect();
    let n = grid.n_time();
    let mut intensity = vec![0.0; n];

    for step in 0..m {
        fields
            .par_iter_mut()
            .zip(half.par_iter())
            .for_each(|(f, h)| spectral.filter(f, h));

        if config.gamma != 0.0 {
            intensity.iter_mut().for_each(|v| *v = 0.0);
            for f in &fields {
                for (acc, s) in intensity.iter_mut().zip(f) {
                    *acc += s.norm_sqr();
                }
            }
            let leff = loss_weighted_length(config.alpha, step as f64 * dz, dz);
            let g = config.gamma * leff;
            let total = &intensity;
            fields.par_iter_mut().for_each(|f| {
                for (s, &tot) in f.iter_mut().zip(total) {
                    let own = s.norm_sqr();
                    *s *= Complex64::from_polar(1.0, g * (own + 2.0 * (tot - own)));
                }
            });
        }

        fields
            .par_iter_mut()
            .zip(half.par_iter())
            .for_each(|(f, h)| spectral.filter(f, h));
    }

    inputs
        .iter()
        .zip(fields)
        .map(|(x, f)| SignalGrid::new(f, *x.grid(), x.channel_index()))
        .collect()
}

/// Integrates the linear central-channel equation with a frozen random
/// potential: `i∂_z x - (β₂/2)∂_t² x = ν(z,t)·x`.
///
/// Step `k` applies `exp(-iν_k(t)·dz)` with slice `k` of the potential, so
/// the number of steps is the potential's `n_zsteps`.
pub fn propagate_surrogate(
    x0: &SignalGrid,
    potential: &PotentialField,
    config: &LinkConfig,
) -> Result<SignalGrid> {
    let pg = potential.grid();
    if !x0.grid().same_lattice(pg) {
        return Err(Error::GridMismatch(
            "signal and potential use different time lattices".into(),
        ));
    }
    if (pg.length() - config.length_l).abs() > 1e-12 * config.length_l {
        return Err(Error::GridMismatch(format!(
            "potential spans {} km but the link is {} km",
            pg.length(),
            config.length_l
        )));
    }
    let m = pg.n_zsteps();
    let dz = pg.dz();
    let spectral = Spectral::new(pg);
    let half = spectral.transfer(0.5 * config.beta2 * dz, 0.0);
    let full = spectral.transfer(config.beta2 * dz, 0.0);

    let mut x = x0.samples().to_vec();
    spectral.filter(&mut x, &half);
    for k in 0..m {
        for (s, &v) in x.iter_mut().zip(potential.slice(k)) {
            *s *= Complex64::from_polar(1.0, -v * dz);
        }
        spectral.filter(&mut x, if k + 1 == m { &half } else { &full });
    }
    SignalGrid::new(x, *x0.grid(), x0.channel_index())
}

/// Σ_k ∫|x_k|² dt of the envelopes.
pub fn total_energy(signals: &[SignalGrid]) -> f64 {
    signals.iter().map(SignalGrid::energy).sum()
}

/// Energy of the physical field `x·e^{-αz/2}` at distance `z`.
///
/// The envelopes themselves carry no loss; attenuation lives in the carrier
/// factor and in the loss-weighted nonlinear coefficient.
pub fn physical_energy(signals: &[SignalGrid], config: &LinkConfig, z: f64) -> f64 {
    (-config.alpha * z).exp() * total_energy(signals)
}

/// Temporal spread β₂·L·Δω_rms caused by dispersion over the link.
pub fn dispersion_spread(x: &SignalGrid, config: &LinkConfig) -> f64 {
    config.beta2_length().abs() * x.rms_bandwidth()
}

/// Requires the periodic window to be at least four times the largest
/// dispersion-induced spread among `signals`.
pub fn check_guard_band(signals: &[SignalGrid], config: &LinkConfig, grid: &SimGrid) -> Result<()> {
    let worst = signals
        .iter()
        .map(|s| dispersion_spread(s, config))
        .fold(0.0, f64::max);
    if grid.t_window() < 4.0 * worst {
        return Err(Error::invalid(format!(
            "time window {} ps is shorter than 4x the dispersion spread {} ps",
            grid.t_window(),
            worst
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(grid: SimGrid, k: i64, t0: f64, amp: f64) -> SignalGrid {
        SignalGrid::from_fn(grid, k, |t| Complex64::new(amp * (-t * t / (2.0 * t0 * t0)).exp(), 0.0))
    }

    fn small_link() -> LinkConfig {
        LinkConfig::new(20.0, 1.2, 0.0, 50.0, 200_000.0, 2, 50.0, 1e-3)
    }

    #[test]
    fn zero_inputs_stay_zero() {
        let c = small_link();
        let g = SimGrid::new(256.0, 256, 10, c.length_l);
        let inputs: Vec<_> = c.channel_indices().map(|k| SignalGrid::zeros(g, k)).collect();
        let out = propagate_coupled(&inputs, &c, &g).unwrap();
        assert!(out.iter().all(|s| s.samples().iter().all(|v| v.norm() == 0.0)));
    }

    #[test]
    fn missing_channel_rejected() {
        let c = small_link();
        let g = SimGrid::new(256.0, 256, 10, c.length_l);
        let inputs = vec![SignalGrid::zeros(g, 0), SignalGrid::zeros(g, 1)];
        assert!(propagate_coupled(&inputs, &c, &g).is_err());
    }

    #[test]
    fn power_constraint_enforced() {
        let c = small_link();
        let g = SimGrid::new(256.0, 256, 10, c.length_l);
        let mut inputs: Vec<_> = c.channel_indices().map(|k| SignalGrid::zeros(g, k)).collect();
        inputs[0] = SignalGrid::from_fn(g, -1, |_| Complex64::new(0.1, 0.0));
        assert!(matches!(
            propagate_coupled(&inputs, &c, &g),
            Err(Error::PowerConstraint { channel: -1, .. })
        ));
    }

    #[test]
    fn grid_mismatch_rejected() {
        let c = small_link();
        let g = SimGrid::new(256.0, 256, 10, c.length_l);
        let other = SimGrid::new(128.0, 256, 10, c.length_l);
        let mut inputs: Vec<_> = c.channel_indices().map(|k| SignalGrid::zeros(g, k)).collect();
        inputs[2] = SignalGrid::zeros(other, 1);
        assert!(matches!(propagate_coupled(&inputs, &c, &g), Err(Error::GridMismatch(_))));
        let p = PotentialField::zeros(other);
        assert!(matches!(
            propagate_surrogate(&inputs[0], &p, &c),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn walk_off_delays_neighbour() {
        // γ = 0, β₂ tiny: channel +1 is delayed by beta1_slope·L
        let mut c = small_link();
        c.gamma = 0.0;
        c.beta2 = 1e-9;
        c.beta1_slope = 0.5;
        let g = SimGrid::new(512.0, 512, 4, c.length_l);
        let inputs: Vec<_> = c.channel_indices().map(|k| gaussian(g, k, 10.0, 0.01)).collect();
        let out = propagate_coupled(&inputs, &c, &g).unwrap();
        let centroid = |s: &SignalGrid| {
            let (m0, m1) = g
                .times()
                .zip(s.samples())
                .fold((0.0, 0.0), |(a, b), (t, v)| (a + v.norm_sqr(), b + t * v.norm_sqr()));
            m1 / m0
        };
        assert!((centroid(&out[2]) - 25.0).abs() < 1e-6);
        assert!((centroid(&out[0]) + 25.0).abs() < 1e-6);
        assert!(centroid(&out[1]).abs() < 1e-9);
    }

    #[test]
    fn surrogate_zero_potential_is_free_propagation() {
        let c = small_link();
        let g = SimGrid::new(512.0, 512, 16, c.length_l);
        let x = gaussian(g, 0, 15.0, 0.03);
        let y = propagate_surrogate(&x, &PotentialField::zeros(g), &c).unwrap();
        let z = chirp_transform(&x, &c);
        for (a, b) in y.samples().iter().zip(z.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn surrogate_constant_potential_without_dispersion() {
        let mut c = small_link();
        c.beta2 = 0.0;
        let g = SimGrid::new(64.0, 64, 7, c.length_l);
        let x = gaussian(g, 0, 5.0, 0.03);
        let cval = 0.013;
        let y = propagate_surrogate(&x, &PotentialField::constant(g, cval), &c).unwrap();
        let rot = Complex64::from_polar(1.0, -cval * c.length_l);
        let peak = x.samples().iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (a, b) in y.samples().iter().zip(x.samples()) {
            assert!((a - b * rot).norm() < 1e-12 * peak);
        }
    }

    #[test]
    fn loss_weighted_length_integrates_exponential() {
        let a = 0.05;
        let exact = ((-a * 10.0f64).exp() - (-a * 12.5f64).exp()) / a;
        assert!((loss_weighted_length(a, 10.0, 2.5) - exact).abs() < 1e-14);
        assert_eq!(loss_weighted_length(0.0, 10.0, 2.5), 2.5);
    }

    #[test]
    fn guard_band() {
        let c = small_link();
        let g = SimGrid::new(1024.0, 1024, 1, c.length_l);
        assert!(check_guard_band(&[gaussian(g, 0, 20.0, 0.01)], &c, &g).is_ok());
        assert!(check_guard_band(&[gaussian(g, 0, 1.0, 0.01)], &c, &g).is_err());
        assert!(check_guard_band(&[SignalGrid::zeros(g, 0)], &c, &g).is_ok());
    }
}
