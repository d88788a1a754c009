use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::config::SimGrid;

/// Forward/inverse FFT pair for one time lattice.
#[derive(Clone)]
pub(crate) struct Spectral {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    pub(crate) omega: Vec<f64>,
}

impl Spectral {
    pub(crate) fn new(grid: &SimGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fwd: planner.plan_fft_forward(grid.n_time()),
            inv: planner.plan_fft_inverse(grid.n_time()),
            omega: grid.angular_frequencies(),
        }
    }

    /// Transfer function `exp(i·a·ω²/2 - i·ω·τ)`: dispersion with
    /// `a = β₂·Δz` followed by a delay of `τ`.
    pub(crate) fn transfer(&self, a: f64, delay: f64) -> Vec<Complex64> {
        self.omega
            .iter()
            .map(|&w| Complex64::from_polar(1.0, 0.5 * a * w * w - w * delay))
            .collect()
    }

    /// Filters `x` in place by the frequency response `h`.
    pub(crate) fn filter(&self, x: &mut [Complex64], h: &[Complex64]) {
        let scale = 1.0 / x.len() as f64;
        self.fwd.process(x);
        for (v, hv) in x.iter_mut().zip(h) {
            *v *= hv * scale;
        }
        self.inv.process(x);
    }
}
