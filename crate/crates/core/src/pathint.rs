//! Discretized path-integral Green's function and the phase process U.
//!
//! [`green_discrete`] evaluates the M-step path integral as a transfer-matrix
//! cascade on the time lattice: free Fresnel steps (dense circulant kernels
//! built by direct summation, no FFT) alternate with potential phase factors
//! `exp(-iν·ΔL)`. It is the same operator product that
//! [`crate::propagator::propagate_surrogate`] applies spectrally, so the two
//! must agree on impulse inputs.
//!
//! [`compute_u`] evaluates the Fresnel-weighted potential integral
//!
//! ```text
//! U(L; t, t') = ∫₀¹ dα ∫_{t'}^{t} exp(-i (s - s_α)² / (2β₂Lα(1-α))) ν((1-α)L, s) ds,
//! s_α = (1-α)t + αt'
//! ```
//!
//! with the potential restricted to the interval between `t'` and `t`. The
//! common factor `exp(-i(t-t')²/(2β₂L))` is not included; it belongs to the
//! free propagator in [`green_resummed`].

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::{LinkConfig, SimGrid};
use crate::error::{Error, Result};
use crate::propagator::fresnel::free_propagator;
use crate::propagator::spectral::Spectral;
use crate::report::{format_f64, Report};
use crate::stats::normality_test;
use crate::xpm_stats::{
    sample_surrogate_potential_stream, sigma_nu_sq, white_discrete_sample_variance, ChannelSum,
    PotentialField,
};

/// Default number of quadrature sub-nodes per lattice cell and axis.
pub const DEFAULT_REFINEMENT: usize = 4;

/// One evaluation of the discretized Green's function.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenEvaluation {
    pub value: Complex64,
    /// Output time actually used (nearest lattice point), ps.
    pub t: f64,
    /// Input time actually used, ps.
    pub t_prime: f64,
    pub m_steps: usize,
    pub potential_seed: Option<u64>,
    pub potential_sigma_nu_sq: f64,
}

/// Periodic lattice kernel of the dispersion filter `exp(iaω²/2)`:
/// `h_n = (1/N)·Σ_j exp(iaω_j²/2)·exp(2πijn/N)`, by direct summation.
pub fn discrete_fresnel_kernel(grid: &SimGrid, a: f64) -> Vec<Complex64> {
    let n = grid.n_time();
    let omega = grid.angular_frequencies();
    let roots: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64))
        .collect();
    let response: Vec<Complex64> = omega
        .iter()
        .map(|&w| Complex64::from_polar(1.0, 0.5 * a * w * w))
        .collect();
    (0..n)
        .map(|m| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, r) in response.iter().enumerate() {
                acc += r * roots[(j * m) % n];
            }
            acc / n as f64
        })
        .collect()
}

/// Circulant product `y_n = Σ_m h_{(n-m) mod N}·x_m`.
fn circulant_apply(h: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, xm) in x.iter().enumerate() {
                if xm.re != 0.0 || xm.im != 0.0 {
                    acc += h[(i + n - m) % n] * xm;
                }
            }
            acc
        })
        .collect()
}

fn check_potential_length(potential: &PotentialField, config: &LinkConfig) -> Result<()> {
    let len = potential.grid().length();
    if (len - config.length_l).abs() > 1e-12 * config.length_l {
        return Err(Error::GridMismatch(format!(
            "potential spans {len} km but the link is {} km",
            config.length_l
        )));
    }
    Ok(())
}

fn lattice_index(grid: &SimGrid, t: f64, name: &str) -> Result<usize> {
    grid.index_of(t)
        .ok_or_else(|| Error::invalid(format!("{name} = {t} ps lies outside the potential window")))
}

/// Column `G(L; ·, t')` of the discretized propagator for `m` z-steps.
///
/// Step `k` uses the potential at the step midpoint `(k + 1/2)·L/m`.
pub fn green_column(
    t_prime: f64,
    potential: &PotentialField,
    config: &LinkConfig,
    m: usize,
) -> Result<Vec<Complex64>> {
    if m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    check_potential_length(potential, config)?;
    let grid = potential.grid();
    let j0 = lattice_index(grid, t_prime, "t'")?;
    let dl = config.length_l / m as f64;
    let half = discrete_fresnel_kernel(grid, 0.5 * config.beta2 * dl);

    let mut x = vec![Complex64::new(0.0, 0.0); grid.n_time()];
    x[j0] = Complex64::new(1.0 / grid.dt(), 0.0);
    for k in 0..m {
        x = circulant_apply(&half, &x);
        let nu = potential.slice_at((k as f64 + 0.5) * dl);
        for (s, &v) in x.iter_mut().zip(nu) {
            *s *= Complex64::from_polar(1.0, -v * dl);
        }
        x = circulant_apply(&half, &x);
    }
    Ok(x)
}

/// Discretized path integral G(L; t, t') with `m` z-steps, read at the
/// lattice points nearest `t` and `t'`.
pub fn green_discrete(
    t: f64,
    t_prime: f64,
    potential: &PotentialField,
    config: &LinkConfig,
    m: usize,
) -> Result<GreenEvaluation> {
    let grid = potential.grid();
    let i = lattice_index(grid, t, "t")?;
    let j = lattice_index(grid, t_prime, "t'")?;
    let column = green_column(grid.time(j), potential, config, m)?;
    Ok(GreenEvaluation {
        value: column[i],
        t: grid.time(i),
        t_prime: grid.time(j),
        m_steps: m,
        potential_seed: potential.seed(),
        potential_sigma_nu_sq: potential.sigma_nu_sq(),
    })
}

/// Free propagator times the resummed phase factor: `G₀(t, t')·exp(-iL·u)`.
pub fn green_resummed(t: f64, t_prime: f64, u_value: Complex64, config: &LinkConfig) -> Result<Complex64> {
    let phase = Complex64::new(0.0, -config.length_l) * u_value;
    Ok(free_propagator(t, t_prime, config)? * phase.exp())
}

/// First-order coefficient of the discretized propagator.
///
/// Returns the `u` for which `G₀(t,t')·(1 - iL·u)` equals
/// [`green_discrete`] (with the potential's own step count) to first order
/// in ν. It is the lattice counterpart of [`compute_u`] with normalized
/// Fresnel kernels.
pub fn first_order_u(t: f64, t_prime: f64, potential: &PotentialField, config: &LinkConfig) -> Result<Complex64> {
    check_potential_length(potential, config)?;
    let grid = potential.grid();
    let i = lattice_index(grid, t, "t")?;
    let j = lattice_index(grid, t_prime, "t'")?;
    let m = grid.n_zsteps();
    let dl = grid.dz();
    let spectral = Spectral::new(grid);
    let mut delta = vec![Complex64::new(0.0, 0.0); grid.n_time()];
    delta[j] = Complex64::new(1.0 / grid.dt(), 0.0);

    let mut total = Complex64::new(0.0, 0.0);
    for k in 0..m {
        let before = spectral.transfer(config.beta2 * dl * (k as f64 + 0.5), 0.0);
        let after = spectral.transfer(config.beta2 * dl * (m as f64 - k as f64 - 0.5), 0.0);
        let mut x = delta.clone();
        spectral.filter(&mut x, &before);
        for (s, &v) in x.iter_mut().zip(potential.slice(k)) {
            *s *= v;
        }
        spectral.filter(&mut x, &after);
        total += x[i] * dl;
    }
    let g0 = free_propagator(grid.time(i), grid.time(j), config)?;
    Ok(total / (g0 * config.length_l))
}

/// Quadrature weights of [`compute_u`] for one (grid, t, t') triple.
///
/// `U = Σ_{k,j} W[k][j]·ν[k][j]`, where potential sample `ν[k][j]` is held
/// constant over the cell `[t_j, t_j + dt)` of z-step `k`. Each cell is
/// integrated with the midpoint rule on at least `refinement` nodes per
/// axis, refined wherever the kernel phase would otherwise change by more
/// than a quarter radian between nodes.
#[derive(Debug, Clone)]
pub struct UWeights {
    grid: SimGrid,
    first_cell: usize,
    /// `n_zsteps` rows of weights for cells `first_cell..first_cell + width`.
    weights: Vec<Vec<Complex64>>,
}

impl UWeights {
    pub fn new(grid: &SimGrid, t: f64, t_prime: f64, config: &LinkConfig, refinement: usize) -> Result<Self> {
        if refinement == 0 {
            return Err(Error::invalid("refinement must be at least 1"));
        }
        let a = config.beta2_length();
        if a == 0.0 || !a.is_finite() {
            return Err(Error::invalid("U is undefined for beta2*L = 0"));
        }
        let (lo, hi) = if t_prime <= t { (t_prime, t) } else { (t, t_prime) };
        let t0 = grid.time(0);
        let end = t0 + grid.t_window();
        let slack = 1e-9 * grid.dt();
        if lo < t0 - slack || hi > end + slack {
            return Err(Error::invalid(format!(
                "interval [{lo}, {hi}] ps is not covered by the potential window [{t0}, {end}]"
            )));
        }
        let m = grid.n_zsteps();
        if hi == lo {
            return Ok(Self {
                grid: *grid,
                first_cell: 0,
                weights: vec![Vec::new(); m],
            });
        }
        let dt = grid.dt();
        let first_cell = (((lo - t0) / dt + 1e-9).floor().max(0.0)) as usize;
        let last_cell = ((((hi - t0) / dt - 1e-9).ceil()) as usize).min(grid.n_time());
        let phase_scale = (hi - lo).powi(2) / (2.0 * a.abs());

        let weights = (0..m)
            .into_par_iter()
            .map(|k| {
                // z-step k covers α ∈ (1 - (k+1)/m, 1 - k/m]
                let a_lo = 1.0 - (k + 1) as f64 / m as f64;
                let a_hi = 1.0 - k as f64 / m as f64;
                let nodes = alpha_nodes(a_lo.max(0.0), a_hi.min(1.0), refinement, phase_scale);
                let mut row = vec![Complex64::new(0.0, 0.0); last_cell - first_cell];
                for &(alpha, width) in &nodes {
                    let centre = (1.0 - alpha) * t + alpha * t_prime;
                    let scale = 1.0 / (2.0 * a * alpha * (1.0 - alpha));
                    for (jc, w) in (first_cell..last_cell).zip(row.iter_mut()) {
                        let c_lo = (t0 + jc as f64 * dt).max(lo);
                        let c_hi = (t0 + (jc + 1) as f64 * dt).min(hi);
                        if c_hi <= c_lo {
                            continue;
                        }
                        let reach = (c_lo - centre).abs().max((c_hi - centre).abs());
                        let needed = ((c_hi - c_lo) * 2.0 * reach * scale.abs() / PHASE_STEP).ceil();
                        let n_s = (needed as usize).clamp(refinement, MAX_CELL_NODES);
                        let ds = (c_hi - c_lo) / n_s as f64;
                        let mut acc = Complex64::new(0.0, 0.0);
                        for q in 0..n_s {
                            let d = c_lo + (q as f64 + 0.5) * ds - centre;
                            acc += Complex64::from_polar(1.0, -d * d * scale);
                        }
                        *w += acc * (width * ds);
                    }
                }
                row
            })
            .collect();
        Ok(Self {
            grid: *grid,
            first_cell,
            weights,
        })
    }

    pub fn apply(&self, potential: &PotentialField) -> Result<Complex64> {
        if !potential.grid().same_lattice(&self.grid) || potential.grid().n_zsteps() != self.grid.n_zsteps() {
            return Err(Error::GridMismatch("potential does not match the quadrature grid".into()));
        }
        let mut u = Complex64::new(0.0, 0.0);
        for (k, row) in self.weights.iter().enumerate() {
            let nu = &potential.slice(k)[self.first_cell..];
            for (w, v) in row.iter().zip(nu) {
                u += w * v;
            }
        }
        Ok(u)
    }

    /// Σ|W|²: multiplied by the per-sample variance this is Var(U) for a
    /// white-discrete potential.
    pub fn squared_norm(&self) -> f64 {
        self.weights.iter().flatten().map(|w| w.norm_sqr()).sum()
    }
}

/// Largest kernel phase change allowed between neighbouring quadrature nodes.
const PHASE_STEP: f64 = 0.25;
const MAX_CELL_NODES: usize = 1 << 14;

/// Kernel phase scale `C/(α(1-α))` for the widest separation in the interval.
fn alpha_phase(c: f64, alpha: f64) -> f64 {
    c / (alpha * (1.0 - alpha))
}

/// Midpoint nodes `(α, width)` covering `[lo, hi]`: `refinement` equal
/// pieces, each bisected until the kernel phase changes by at most
/// [`PHASE_STEP`] across it. Pieces touching α = 0 or 1, where the phase
/// diverges, stop splitting at width `0.1·c`; the oscillating kernel there
/// contributes O(width²/c).
fn alpha_nodes(lo: f64, hi: f64, refinement: usize, c: f64) -> Vec<(f64, f64)> {
    let floor = 0.1 * c;
    let h = (hi - lo) / refinement as f64;
    let mut stack: Vec<(f64, f64)> = (0..refinement).map(|i| (lo + i as f64 * h, lo + (i + 1) as f64 * h)).collect();
    let mut out = Vec::new();
    while let Some((x, y)) = stack.pop() {
        let change = if x < 0.5 && y > 0.5 {
            (alpha_phase(c, x) - alpha_phase(c, 0.5)).max(alpha_phase(c, y) - alpha_phase(c, 0.5))
        } else {
            (alpha_phase(c, x) - alpha_phase(c, y)).abs()
        };
        let width = y - x;
        if change > PHASE_STEP && width > floor && width > 1e-12 {
            let mid = 0.5 * (x + y);
            stack.push((x, mid));
            stack.push((mid, y));
        } else {
            out.push((0.5 * (x + y), width));
        }
    }
    out
}

/// U(L; t, t') for a given potential, with the default quadrature refinement.
/// Returns 0 when `t = t'`.
pub fn compute_u(potential: &PotentialField, t: f64, t_prime: f64, config: &LinkConfig) -> Result<Complex64> {
    compute_u_with(potential, t, t_prime, config, DEFAULT_REFINEMENT)
}

pub fn compute_u_with(
    potential: &PotentialField,
    t: f64,
    t_prime: f64,
    config: &LinkConfig,
    refinement: usize,
) -> Result<Complex64> {
    if t == t_prime {
        return Ok(Complex64::new(0.0, 0.0));
    }
    check_potential_length(potential, config)?;
    UWeights::new(potential.grid(), t, t_prime, config, refinement)?.apply(potential)
}

/// Monte Carlo moments of U over independent surrogate potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct UStatistics {
    pub sample_mean: Complex64,
    /// E|U - mean|², unbiased.
    pub sample_variance: f64,
    pub real_variance: f64,
    pub imag_variance: f64,
    pub n_trials: usize,
    /// σ²_ν·|t - t'|.
    pub target_variance: f64,
    /// Var(U) implied by the quadrature weights for this lattice.
    pub quadrature_variance: f64,
    /// Bonferroni-combined omnibus p-value of the real and imaginary parts.
    pub gaussianity_pvalue: f64,
    pub interval: f64,
    pub sigma_nu_sq: f64,
    pub seed: u64,
}

impl UStatistics {
    /// Sample variance over target; 1 when both vanish.
    pub fn variance_ratio(&self) -> f64 {
        if self.target_variance == 0.0 && self.sample_variance == 0.0 {
            1.0
        } else {
            self.sample_variance / self.target_variance
        }
    }

    /// Standard error of the complex sample mean.
    pub fn mean_standard_error(&self) -> f64 {
        (self.sample_variance / self.n_trials as f64).sqrt()
    }

    pub fn mean_within(&self, n_se: f64) -> bool {
        self.sample_mean.norm() <= n_se * self.mean_standard_error()
    }

    /// Variance ratio within `1 ± tolerance`, mean within three standard
    /// errors, and Gaussianity not rejected at `level`.
    pub fn passes(&self, tolerance: f64, level: f64) -> bool {
        (self.variance_ratio() - 1.0).abs() <= tolerance && self.mean_within(3.0) && self.gaussianity_pvalue >= level
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new(&[
            "mean_re",
            "mean_im",
            "variance",
            "target",
            "ratio",
            "quadrature_variance",
            "p_value",
            "trials",
            "seed",
        ]);
        r.meta("interval_ps", format_f64(self.interval))
            .meta("sigma_nu_sq", format_f64(self.sigma_nu_sq))
            .meta("potential_convention", "white-discrete");
        r.push_row(vec![
            format_f64(self.sample_mean.re),
            format_f64(self.sample_mean.im),
            format_f64(self.sample_variance),
            format_f64(self.target_variance),
            format_f64(self.variance_ratio()),
            format_f64(self.quadrature_variance),
            format_f64(self.gaussianity_pvalue),
            self.n_trials.to_string(),
            self.seed.to_string(),
        ]);
        r
    }
}

/// Lattice used for Monte Carlo over the interval `[t', t]`: cells of width
/// close to `grid.dt` tile the interval exactly.
fn interval_grid(grid: &SimGrid, interval: f64) -> SimGrid {
    let cells = ((interval / grid.dt()).round() as usize).max(1);
    let dt = interval / cells as f64;
    let n_time = cells.next_power_of_two().max(8);
    SimGrid::new(dt * n_time as f64, n_time, grid.n_zsteps(), grid.length())
}

/// Draws `n_trials` independent white-discrete potentials (trial `i` uses
/// stream `i` of `seed`), evaluates U for each, and summarizes.
///
/// Only the cells inside the interval influence U, so the potentials are
/// drawn on a lattice that just covers it, with the time spacing of `grid`.
pub fn validate_u_distribution(
    config: &LinkConfig,
    grid: &SimGrid,
    t: f64,
    t_prime: f64,
    n_trials: usize,
    seed: u64,
) -> Result<UStatistics> {
    if n_trials < 100 {
        return Err(Error::invalid(format!("need at least 100 trials, got {n_trials}")));
    }
    let sigma = sigma_nu_sq(config, ChannelSum::Harmonic);
    let interval = (t - t_prime).abs();
    let target_variance = sigma * interval;

    let samples: Vec<Complex64> = if interval == 0.0 {
        vec![Complex64::new(0.0, 0.0); n_trials]
    } else {
        let local = interval_grid(grid, interval);
        let tp = local.time(0);
        let weights = UWeights::new(&local, tp + interval, tp, config, DEFAULT_REFINEMENT)?;
        (0..n_trials as u64)
            .into_par_iter()
            .map(|i| {
                let p = sample_surrogate_potential_stream(&local, sigma, seed, i)?;
                weights.apply(&p)
            })
            .collect::<Result<_>>()?
    };
    let quadrature_variance = if interval == 0.0 {
        0.0
    } else {
        let local = interval_grid(grid, interval);
        let tp = local.time(0);
        UWeights::new(&local, tp + interval, tp, config, DEFAULT_REFINEMENT)?.squared_norm()
            * white_discrete_sample_variance(sigma, &local)
    };

    let n = n_trials as f64;
    let mean: Complex64 = samples.iter().sum::<Complex64>() / n;
    let re: Vec<f64> = samples.iter().map(|u| u.re).collect();
    let im: Vec<f64> = samples.iter().map(|u| u.im).collect();
    let var = |x: &[f64], m: f64| x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    let real_variance = var(&re, mean.re);
    let imag_variance = var(&im, mean.im);
    let p_re = normality_test(&re)?.p_value;
    let p_im = normality_test(&im)?.p_value;

    Ok(UStatistics {
        sample_mean: mean,
        sample_variance: real_variance + imag_variance,
        real_variance,
        imag_variance,
        n_trials,
        target_variance,
        quadrature_variance,
        gaussianity_pvalue: (2.0 * p_re.min(p_im)).min(1.0),
        interval,
        sigma_nu_sq: sigma,
        seed,
    })
}
