//! Monte Carlo mutual information of the discrete phase-noise channel.
//!
//! The conditional density of `y = exp(-iu)·x + n` integrates the phase out:
//!
//! ```text
//! p(y|x) = exp(-(|y|-|x|)²/σ²_N)/(πσ²_N) · ∫_{-π}^{π} w(θ)·exp(-κ(1 - cos(θ + φ))) dθ
//! ```
//!
//! with `κ = 2|x||y|/σ²_N`, `φ = arg(y·x̄)` and `w` the wrapped normal density
//! of `u`. The θ integral uses the periodic trapezoid rule in the log domain,
//! doubling the node count until it changes by less than 1e-6 relative.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::PhaseNoiseChannelSpec;
use crate::error::{Error, Result};
use crate::rng::{purpose, stream_rng};

/// Smallest Monte Carlo sample count accepted.
pub const MIN_SAMPLES: usize = 1000;

const REL_TOL: f64 = 1e-6;
const MAX_NODES: usize = 1 << 18;
/// Mixture terms whose radial exponent exceeds the best one by this much are
/// dropped.
const PRUNE_NATS: f64 = 60.0;
/// Half-width of the θ window in units of the noise-kernel width 1/√κ.
const WINDOW_HALF_WIDTH: f64 = 10.0;
/// Log-integrand drop, in nats, treated as negligible.
const PEAK_DROP: f64 = 60.0;
/// Scan nodes per side when locating peaks.
const SCAN_NODES: usize = 128;

/// Finite input alphabet with its probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    probs: Vec<f64>,
}

impl Constellation {
    pub fn new(points: Vec<Complex64>, probs: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != probs.len() {
            return Err(Error::invalid("constellation needs one probability per point"));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("probabilities must be non-negative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        if points.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(Error::invalid("constellation points must be finite"));
        }
        Ok(Self { points, probs })
    }

    pub fn uniform(points: Vec<Complex64>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n.max(1) as f64; n])
    }

    /// `rings` concentric rings with radii proportional to 1..=rings, each
    /// carrying `phases` equally spaced points, scaled to average power
    /// `power`. `rings = 1` is PSK; `phases = 1` is pure amplitude keying.
    pub fn rings(rings: usize, phases: usize, power: f64) -> Result<Self> {
        if rings == 0 || phases == 0 {
            return Err(Error::invalid("ring constellation needs at least one ring and one phase"));
        }
        let mut points = Vec::with_capacity(rings * phases);
        for r in 1..=rings {
            for p in 0..phases {
                points.push(Complex64::from_polar(r as f64, 2.0 * PI * p as f64 / phases as f64));
            }
        }
        Self::uniform(points)?.scaled_to_power(power)
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn average_power(&self) -> f64 {
        self.points.iter().zip(&self.probs).map(|(x, p)| p * x.norm_sqr()).sum()
    }

    pub fn scaled_to_power(&self, power: f64) -> Result<Self> {
        let current = self.average_power();
        if !(power > 0.0) || current == 0.0 {
            return Err(Error::invalid("cannot scale a zero-power constellation or to non-positive power"));
        }
        let s = (power / current).sqrt();
        Ok(Self {
            points: self.points.iter().map(|x| x * s).collect(),
            probs: self.probs.clone(),
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        let r: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if r < acc {
                return i;
            }
        }
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// Monte Carlo estimate with its standard error, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

fn log_sum_exp(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log of the wrapped normal density with variance `var` at `theta`.
struct WrappedNormal {
    var: f64,
    /// Fourier coefficients e^{-n²σ²/2} for the wide case.
    fourier: Option<Vec<f64>>,
    images: i64,
}

impl WrappedNormal {
    fn new(var: f64) -> Self {
        let sd = var.sqrt();
        if sd > 2.0 {
            let coeffs = (1..)
                .map(|n: i32| (-0.5 * f64::from(n * n) * var).exp())
                .take_while(|c| *c > 1e-18)
                .collect();
            Self { var, fourier: Some(coeffs), images: 0 }
        } else {
            Self {
                var,
                fourier: None,
                images: (6.0 * sd / (2.0 * PI)).ceil() as i64 + 1,
            }
        }
    }

    fn ln_pdf(&self, theta: f64) -> f64 {
        match &self.fourier {
            Some(c) => {
                let s: f64 = c.iter().enumerate().map(|(n, a)| a * ((n + 1) as f64 * theta).cos()).sum();
                ((1.0 + 2.0 * s) / (2.0 * PI)).ln()
            }
            None => {
                let norm = -0.5 * (2.0 * PI * self.var).ln();
                let exponent = |k: i64| {
                    let d = theta + 2.0 * PI * k as f64;
                    -d * d / (2.0 * self.var)
                };
                let top = (-self.images..=self.images).map(exponent).fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = (-self.images..=self.images).map(|k| (exponent(k) - top).exp()).sum();
                norm + top + sum.ln()
            }
        }
    }

    fn width(&self) -> f64 {
        self.var.sqrt().min(PI)
    }
}

/// Wrapped normal with its log-density tabulated on every trapezoid level.
struct PhasePrior {
    w: WrappedNormal,
    /// Level `j` holds `ln w` at the `2^j` nodes `-π + 2πi/2^j`.
    levels: Vec<OnceLock<Vec<f64>>>,
}

impl PhasePrior {
    fn new(var: f64) -> Self {
        Self {
            w: WrappedNormal::new(var),
            levels: (0..=MAX_NODES.trailing_zeros()).map(|_| OnceLock::new()).collect(),
        }
    }

    fn table(&self, n: usize) -> &[f64] {
        self.levels[n.trailing_zeros() as usize].get_or_init(|| {
            let h = 2.0 * PI / n as f64;
            (0..n).map(|j| self.w.ln_pdf(-PI + j as f64 * h)).collect()
        })
    }

    /// Log of `∫ w(θ)·exp(-κ(1 - cos(θ + φ))) dθ` over one period.
    fn ln_integral(&self, kappa: f64, phi: f64) -> f64 {
        if self.is_narrow() {
            return self.ln_integral_peaks(kappa, phi);
        }
        let kernel_width = if kappa > 0.0 { 1.0 / kappa.sqrt() } else { PI };
        let spacing = 0.25 * self.w.width().min(kernel_width);
        let half = WINDOW_HALF_WIDTH * kernel_width;
        if half < 0.5 * PI {
            return self.ln_integral_window(kappa, phi, -half, half, spacing);
        }
        let mut n = ((2.0 * PI / spacing).ceil() as usize).next_power_of_two().clamp(64, MAX_NODES);
        let eval = |n: usize| {
            let h = 2.0 * PI / n as f64;
            let table = self.table(n);
            log_sum_exp(table.iter().enumerate().map(|(j, lw)| {
                let theta = -PI + j as f64 * h;
                lw - kappa * (1.0 - (theta + phi).cos())
            })) + h.ln()
        };
        refine(&mut n, eval)
    }

    /// Prior concentrated well inside one period.
    fn is_narrow(&self) -> bool {
        self.w.fourier.is_none() && PEAK_DROP.sqrt() * 2.0 * self.w.var.sqrt() < PI
    }

    /// Integral for a narrow prior: every local maximum of the log-integrand
    /// in `d = θ + φ` within [`PEAK_DROP`] of the largest gets its own window.
    ///
    /// Maxima lie between the kernel centre `d = 0` and a prior centre
    /// `d = φ` or `d = φ ± 2π`, so a scan over one period
    /// from a prior centre through `d = 0` brackets them.
    fn ln_integral_peaks(&self, kappa: f64, phi: f64) -> f64 {
        let phi = wrap(phi);
        let g = |d: f64| self.w.ln_pdf(wrap(d - phi)) - kappa * (1.0 - d.cos());
        let (a, b) = if phi > 0.0 { (phi - 2.0 * PI, phi) } else { (phi, phi + 2.0 * PI) };
        let mut nodes: Vec<f64> = Vec::with_capacity(2 * SCAN_NODES);
        if a != 0.0 {
            nodes.extend((0..SCAN_NODES).map(|i| a * (1.0 - i as f64 / SCAN_NODES as f64)));
        }
        nodes.extend((0..SCAN_NODES).map(|i| b * i as f64 / SCAN_NODES as f64));
        let vals: Vec<f64> = nodes.iter().map(|&d| g(d)).collect();

        // the scan covers one period, so neighbours wrap around
        let n = nodes.len();
        let mut peaks = Vec::new();
        for i in 0..n {
            let (l, r) = ((i + n - 1) % n, (i + 1) % n);
            if vals[i] >= vals[l] && vals[i] > vals[r] {
                let a = if i == 0 { nodes[l] - 2.0 * PI } else { nodes[l] };
                let b = if i == n - 1 { nodes[r] + 2.0 * PI } else { nodes[r] };
                let d = golden_max(&g, a, b);
                peaks.push((d, g(d)));
            }
        }
        let best = peaks.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let mut windows: Vec<(f64, f64, f64)> = peaks
            .iter()
            .filter(|p| p.1 >= best - PEAK_DROP)
            .map(|&(d, top)| {
                let reach = |dir: f64, drop: f64| drop_distance(&g, d, top, dir, drop);
                let spacing = 0.25 * reach(-1.0, 0.5).min(reach(1.0, 0.5));
                (d - reach(-1.0, PEAK_DROP), d + reach(1.0, PEAK_DROP), spacing)
            })
            .collect();
        windows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64, f64)> = Vec::new();
        for w in windows {
            match merged.last_mut() {
                Some(m) if w.0 <= m.1 => {
                    m.1 = m.1.max(w.1);
                    m.2 = m.2.min(w.2);
                }
                _ => merged.push(w),
            }
        }
        log_sum_exp(
            merged
                .into_iter()
                .map(|(lo, hi, spacing)| self.ln_integral_window(kappa, phi, lo, hi, spacing)),
        )
    }

    /// Same integral restricted to `θ + φ ∈ [lo, hi]`; the integrand must be
    /// negligible at the window edges.
    fn ln_integral_window(&self, kappa: f64, phi: f64, lo: f64, hi: f64, spacing: f64) -> f64 {
        let mut n = (((hi - lo) / spacing).ceil() as usize).next_power_of_two().clamp(32, MAX_NODES);
        let eval = |n: usize| {
            let h = (hi - lo) / n as f64;
            log_sum_exp((0..=n).map(|j| {
                let d = lo + j as f64 * h;
                let edge = if j == 0 || j == n { 0.5f64.ln() } else { 0.0 };
                edge + self.w.ln_pdf(wrap(d - phi)) - kappa * (1.0 - d.cos())
            })) + h.ln()
        };
        refine(&mut n, eval)
    }
}

/// Doubles `n` until successive values of `eval` agree to [`REL_TOL`].
fn refine(n: &mut usize, eval: impl Fn(usize) -> f64) -> f64 {
    let mut prev = eval(*n);
    while *n < MAX_NODES {
        *n *= 2;
        let next = eval(*n);
        if (next - prev).abs() < REL_TOL {
            return next;
        }
        prev = next;
    }
    prev
}

/// Maximiser of `f` on `[a, b]`, assuming a single interior peak.
fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Distance from the peak `d` (value `top`) in direction `dir` at which `f`
/// has fallen by `drop`, capped at one period.
fn drop_distance(f: &impl Fn(f64) -> f64, d: f64, top: f64, dir: f64, drop: f64) -> f64 {
    let below = |x: f64| f(d + dir * x) < top - drop;
    let mut hi = 1e-9;
    while !below(hi) {
        if hi >= 2.0 * PI {
            return 2.0 * PI;
        }
        hi *= 2.0;
    }
    let mut lo = 0.5 * hi;
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Maps an angle into [-π, π).
fn wrap(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Conditional density model for one channel specification.
struct Density {
    sigma_n_sq: f64,
    phase: Option<PhasePrior>,
}

impl Density {
    fn new(spec: &PhaseNoiseChannelSpec) -> Self {
        Self {
            sigma_n_sq: spec.sigma_n_sq,
            phase: (spec.sigma_u_sq > 0.0).then(|| PhasePrior::new(spec.sigma_u_sq)),
        }
    }

    /// Exponent that depends only on magnitudes; used for pruning.
    fn radial(&self, y: Complex64, x: Complex64) -> f64 {
        match self.phase {
            Some(_) => (y.norm() - x.norm()).powi(2) / self.sigma_n_sq,
            None => (y - x).norm_sqr() / self.sigma_n_sq,
        }
    }

    fn ln_pdf(&self, y: Complex64, x: Complex64) -> f64 {
        let base = -(PI * self.sigma_n_sq).ln() - self.radial(y, x);
        match &self.phase {
            None => base,
            Some(prior) => {
                let kappa = 2.0 * x.norm() * y.norm() / self.sigma_n_sq;
                let phi = (y * x.conj()).arg();
                base + prior.ln_integral(kappa, phi)
            }
        }
    }
}

/// `ln p(y|x)` for the discrete channel of `spec`.
pub fn ln_conditional_density(y: Complex64, x: Complex64, spec: &PhaseNoiseChannelSpec) -> Result<f64> {
    if !(spec.sigma_n_sq > 0.0) {
        return Err(Error::invalid("conditional density needs sigma_n_sq > 0"));
    }
    Ok(Density::new(spec).ln_pdf(y, x))
}

/// Estimates I(X;Y) with stream 0 of `seed`.
pub fn mi_monte_carlo(
    constellation: &Constellation,
    spec: &PhaseNoiseChannelSpec,
    n_samples: usize,
    seed: u64,
) -> Result<MiEstimate> {
    mi_monte_carlo_stream(constellation, spec, n_samples, seed, 0)
}

/// Estimates I(X;Y) in nats by averaging `ln p(y|x) - ln p(y)` over
/// `n_samples` channel uses. Sample `i` draws from its own generator, so the
/// result does not depend on the number of worker threads.
pub fn mi_monte_carlo_stream(
    constellation: &Constellation,
    spec: &PhaseNoiseChannelSpec,
    n_samples: usize,
    seed: u64,
    stream: u64,
) -> Result<MiEstimate> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    if !(spec.sigma_n_sq > 0.0) || !spec.sigma_n_sq.is_finite() {
        return Err(Error::invalid("mutual information needs a finite sigma_n_sq > 0"));
    }
    if !(spec.sigma_u_sq >= 0.0) || !spec.sigma_u_sq.is_finite() {
        return Err(Error::invalid("sigma_u_sq must be finite and non-negative"));
    }
    if let Some(limit) = spec.power_limit {
        let p = constellation.average_power();
        if p > limit * (1.0 + 1e-12) {
            return Err(Error::PowerConstraint { channel: 0, power: p, limit });
        }
    }
    let density = Density::new(spec);
    let phase_sd = spec.sigma_u_sq.sqrt();
    let noise_sd = (0.5 * spec.sigma_n_sq).sqrt();
    let points = constellation.points();
    let ln_probs: Vec<f64> = constellation.probabilities().iter().map(|p| p.ln()).collect();

    let base = purpose::MUTUAL_INFORMATION + (stream << 32);
    let values: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, base + i);
            let k = constellation.draw(&mut rng);
            let u: f64 = StandardNormal.sample(&mut rng);
            let nr: f64 = StandardNormal.sample(&mut rng);
            let ni: f64 = StandardNormal.sample(&mut rng);
            let y = points[k] * Complex64::from_polar(1.0, -phase_sd * u) + Complex64::new(nr, ni) * noise_sd;

            let radial: Vec<f64> = points.iter().map(|&x| density.radial(y, x)).collect();
            let best = radial.iter().cloned().fold(f64::INFINITY, f64::min);
            let ln_own = density.ln_pdf(y, points[k]);
            let ln_marginal = log_sum_exp(points.iter().enumerate().filter_map(|(j, &x)| {
                if ln_probs[j] == f64::NEG_INFINITY {
                    None
                } else if j == k {
                    Some(ln_probs[j] + ln_own)
                } else if radial[j] > best + PRUNE_NATS {
                    None
                } else {
                    Some(ln_probs[j] + density.ln_pdf(y, x))
                }
            }));
            ln_own - ln_marginal
        })
        .collect();

    let n = n_samples as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MiEstimate {
        estimate: mean,
        stderr: (var / n).sqrt(),
    })
}
