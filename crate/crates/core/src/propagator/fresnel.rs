//! Free (Fresnel) propagation over the full fiber length.
//!
//! The kernel `exp(-i(t-t')²/(2β₂L))` is scaled by `e^{iπ/4}/√(2πβ₂L)` so that
//! its frequency response is the pure phase `exp(iβ₂Lω²/2)`. With that
//! scaling the free-propagation operator is unitary.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;

use super::spectral::Spectral;
use super::SignalGrid;
use crate::config::LinkConfig;
use crate::error::{Error, Result};

/// Normalization constant of the Fresnel kernel for `a = β₂·L`.
pub fn fresnel_normalization(a: f64) -> Result<Complex64> {
    if a == 0.0 || !a.is_finite() {
        return Err(Error::invalid("degenerate Fresnel kernel: beta2*L must be non-zero"));
    }
    Ok(Complex64::from_polar(
        1.0 / (2.0 * PI * a.abs()).sqrt(),
        FRAC_PI_4 * a.signum(),
    ))
}

/// Free-space kernel G₀(t, t') for propagation length `a/β₂`.
pub fn fresnel_kernel(t: f64, t_prime: f64, a: f64) -> Result<Complex64> {
    let d = t - t_prime;
    Ok(fresnel_normalization(a)? * Complex64::from_polar(1.0, -d * d / (2.0 * a)))
}

/// Free propagator over the whole link, G₀(L; t, t').
pub fn free_propagator(t: f64, t_prime: f64, config: &LinkConfig) -> Result<Complex64> {
    fresnel_kernel(t, t_prime, config.beta2_length())
}

fn chirp_filter(x: &SignalGrid, config: &LinkConfig, sign: f64) -> SignalGrid {
    let a = config.beta2_length();
    if a == 0.0 {
        return x.clone();
    }
    let spectral = Spectral::new(x.grid());
    let h = spectral.transfer(sign * a, 0.0);
    let mut out = x.clone();
    spectral.filter(out.samples_mut(), &h);
    out
}

/// Convolution of `x` with the normalized Fresnel kernel of length `L`,
/// evaluated as a quadratic-phase filter. Identity when `β₂L = 0`.
pub fn chirp_transform(x: &SignalGrid, config: &LinkConfig) -> SignalGrid {
    chirp_filter(x, config, 1.0)
}

/// Inverse of [`chirp_transform`]: convolution with the conjugate kernel.
pub fn inverse_chirp_transform(x: &SignalGrid, config: &LinkConfig) -> SignalGrid {
    chirp_filter(x, config, -1.0)
}
