//! XPM potential statistics and the Gaussian surrogate potential.
//!
//! The surrogate potential ν(z, t) is zero-mean Gaussian noise that is white
//! in both time and distance. On a lattice with spacings `dt` and `dz` each
//! sample is drawn independently with variance `σ²_ν·L/(dt·dz)`, which is
//! the discrete form of `E[ν(z,t)ν(z',t')] = σ²_ν·L·δ(z-z')·δ(t-t')`. With
//! this normalization any weighted integral `∫₀¹dα ∫ w(α,t) ν((1-α)L, t) dt`
//! with unit-modulus weights over a time interval of length `T` has variance
//! `σ²_ν·T`, independent of the lattice.

use std::io::{BufRead, Write};

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{LinkConfig, SimGrid};
use crate::error::{Error, Result};
use crate::propagator::SignalGrid;
use crate::report::{format_f64, parse_header_line};
use crate::rng::{purpose, stream_rng};

/// How the samples of a [`PotentialField`] are correlated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationConvention {
    /// Independent Gaussian lattice samples (see module docs).
    WhiteDiscrete,
    /// Built from data, e.g. the XPM term of a coupled simulation.
    Empirical,
}

impl CorrelationConvention {
    pub fn tag(self) -> &'static str {
        match self {
            Self::WhiteDiscrete => "white-discrete",
            Self::Empirical => "empirical",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "white-discrete" => Some(Self::WhiteDiscrete),
            "empirical" => Some(Self::Empirical),
            _ => None,
        }
    }
}

/// Real potential on the (z-step, time-sample) lattice, units 1/km.
///
/// Row `k` holds the potential applied over the z-step `[k·dz, (k+1)·dz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    values: Array2<f64>,
    grid: SimGrid,
    convention: CorrelationConvention,
    sigma_nu_sq: f64,
    seed: Option<u64>,
}

impl PotentialField {
    pub fn from_values(values: Array2<f64>, grid: SimGrid) -> Result<Self> {
        if values.dim() != (grid.n_zsteps(), grid.n_time()) {
            return Err(Error::GridMismatch(format!(
                "potential shape {:?} does not match grid ({}, {})",
                values.dim(),
                grid.n_zsteps(),
                grid.n_time()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("potential values must be finite"));
        }
        Ok(Self {
            values,
            grid,
            convention: CorrelationConvention::Empirical,
            sigma_nu_sq: 0.0,
            seed: None,
        })
    }

    pub fn zeros(grid: SimGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: SimGrid, c: f64) -> Self {
        Self {
            values: Array2::from_elem((grid.n_zsteps(), grid.n_time()), c),
            grid,
            convention: CorrelationConvention::Empirical,
            sigma_nu_sq: 0.0,
            seed: None,
        }
    }

    /// Samples `f(z, t)` at z-step midpoints and time nodes.
    pub fn from_fn(grid: SimGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let dz = grid.dz();
        let values = Array2::from_shape_fn((grid.n_zsteps(), grid.n_time()), |(k, n)| {
            f((k as f64 + 0.5) * dz, grid.time(n))
        });
        Self {
            values,
            grid,
            convention: CorrelationConvention::Empirical,
            sigma_nu_sq: 0.0,
            seed: None,
        }
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn convention(&self) -> CorrelationConvention {
        self.convention
    }

    pub fn sigma_nu_sq(&self) -> f64 {
        self.sigma_nu_sq
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Time slice for z-step `k`.
    pub fn slice(&self, k: usize) -> &[f64] {
        self.values
            .row(k)
            .to_slice()
            .expect("potential rows are contiguous")
    }

    /// Slice covering distance `z` (clamped to the last step).
    pub fn slice_at(&self, z: f64) -> &[f64] {
        let k = ((z / self.grid.dz()).floor().max(0.0) as usize).min(self.grid.n_zsteps() - 1);
        self.slice(k)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values.mapv_inplace(|v| v * factor);
        out.sigma_nu_sq *= factor * factor;
        out
    }

    /// Text matrix dump: metadata header then one tab-separated row per
    /// z-step.
    pub fn write_text<W: Write>(&self, mut w: W, extra: &[(String, String)]) -> Result<()> {
        let g = &self.grid;
        writeln!(w, "# n_time = {}", g.n_time())?;
        writeln!(w, "# t_window = {}", format_f64(g.t_window()))?;
        writeln!(w, "# n_zsteps = {}", g.n_zsteps())?;
        writeln!(w, "# length = {}", format_f64(g.length()))?;
        writeln!(w, "# convention = {}", self.convention.tag())?;
        writeln!(w, "# sigma_nu_sq = {}", format_f64(self.sigma_nu_sq))?;
        writeln!(
            w,
            "# sample_variance = {}",
            format_f64(white_discrete_sample_variance(self.sigma_nu_sq, g))
        )?;
        match self.seed {
            Some(s) => writeln!(w, "# seed = {s}")?,
            None => writeln!(w, "# seed = none")?,
        }
        for (k, v) in extra {
            writeln!(w, "# {k} = {v}")?;
        }
        for row in self.values.rows() {
            let line: Vec<String> = row.iter().map(|v| format_f64(*v)).collect();
            writeln!(w, "{}", line.join("\t"))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let bad = |what: &str| Error::Parse(format!("potential file: {what}"));
        let (mut n_time, mut t_window, mut n_zsteps, mut length) = (None, None, None, None);
        let mut convention = CorrelationConvention::Empirical;
        let mut sigma_nu_sq = 0.0;
        let mut seed = None;
        let mut data = Vec::new();
        for line in r.lines() {
            let line = line?;
            if let Some((k, v)) = parse_header_line(&line) {
                match k {
                    "n_time" => n_time = Some(v.parse::<usize>().map_err(|_| bad(k))?),
                    "t_window" => t_window = Some(v.parse::<f64>().map_err(|_| bad(k))?),
                    "n_zsteps" => n_zsteps = Some(v.parse::<usize>().map_err(|_| bad(k))?),
                    "length" => length = Some(v.parse::<f64>().map_err(|_| bad(k))?),
                    "convention" => {
                        convention = CorrelationConvention::from_tag(v).ok_or_else(|| bad(k))?
                    }
                    "sigma_nu_sq" => sigma_nu_sq = v.parse().map_err(|_| bad(k))?,
                    "seed" => seed = v.parse().ok(),
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            for c in line.split_whitespace() {
                data.push(c.parse::<f64>().map_err(|_| bad("non-numeric value"))?);
            }
        }
        let grid = SimGrid::new(
            t_window.ok_or_else(|| bad("missing t_window"))?,
            n_time.ok_or_else(|| bad("missing n_time"))?,
            n_zsteps.ok_or_else(|| bad("missing n_zsteps"))?,
            length.ok_or_else(|| bad("missing length"))?,
        );
        let values = Array2::from_shape_vec((grid.n_zsteps(), grid.n_time()), data)
            .map_err(|_| bad("wrong number of values"))?;
        let mut field = Self::from_values(values, grid)?;
        field.convention = convention;
        field.sigma_nu_sq = sigma_nu_sq;
        field.seed = seed;
        Ok(field)
    }
}

/// XPM potential acting on the central channel at distance `z`:
/// `2γ·Σ_{l≠0}|x_l(z,t)|²·e^{-αz}`.
pub fn xpm_potential_from_signals(
    neighbor_signals: &[SignalGrid],
    config: &LinkConfig,
    z: f64,
) -> Result<Vec<f64>> {
    let first = neighbor_signals
        .first()
        .ok_or_else(|| Error::invalid("at least one neighbour signal is required"))?;
    let grid = first.grid();
    let mut out = vec![0.0; grid.n_time()];
    for s in neighbor_signals {
        if !s.grid().same_lattice(grid) {
            return Err(Error::GridMismatch(format!(
                "neighbour {} is on a different grid",
                s.channel_index()
            )));
        }
        if s.channel_index() == 0 {
            return Err(Error::invalid("the central channel is not a neighbour"));
        }
        for (acc, v) in out.iter_mut().zip(s.samples()) {
            *acc += v.norm_sqr();
        }
    }
    let scale = 2.0 * config.gamma * (-config.alpha * z).exp();
    out.iter_mut().for_each(|v| *v *= scale);
    Ok(out)
}

/// H_m = Σ_{n=1}^{m} 1/n, summed from the smallest term up.
pub fn harmonic_number(m: u64) -> f64 {
    (1..=m).rev().map(|n| 1.0 / n as f64).sum()
}

/// Which form of the channel-count factor to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelSum {
    /// Σ_{n=1}^{N/2} 1/n.
    #[default]
    Harmonic,
    /// ln(N/2).
    Log,
}

impl ChannelSum {
    pub fn evaluate(self, n_channels: u32) -> f64 {
        let half = u64::from(n_channels / 2);
        match self {
            ChannelSum::Harmonic => harmonic_number(half),
            ChannelSum::Log => (half as f64).ln(),
        }
    }
}

/// `2P²/(β₂·δν²)·S(N)` in whatever consistent units the caller uses.
pub fn sigma_nu_sq_formula(power: f64, beta2: f64, spacing: f64, n_channels: u32, sum: ChannelSum) -> f64 {
    2.0 * power * power / (beta2 * spacing * spacing) * sum.evaluate(n_channels)
}

/// Potential variance σ²_ν for a link, with δν converted to cycles/ps.
pub fn sigma_nu_sq(config: &LinkConfig, sum: ChannelSum) -> f64 {
    sigma_nu_sq_formula(
        config.channel_power,
        config.beta2,
        config.spacing_inv_ps(),
        config.n_channels,
        sum,
    )
}

/// Per-sample variance `σ²_ν·L/(dt·dz)` of a white-discrete field.
pub fn white_discrete_sample_variance(sigma_nu_sq: f64, grid: &SimGrid) -> f64 {
    sigma_nu_sq * grid.length() / (grid.dt() * grid.dz())
}

/// Draws a white-discrete Gaussian potential from stream 0 of `seed`.
pub fn sample_surrogate_potential(grid: &SimGrid, sigma_nu_sq: f64, seed: u64) -> Result<PotentialField> {
    sample_surrogate_potential_stream(grid, sigma_nu_sq, seed, 0)
}

/// Draws trial `stream` of an ensemble seeded by `seed`.
pub fn sample_surrogate_potential_stream(
    grid: &SimGrid,
    sigma_nu_sq: f64,
    seed: u64,
    stream: u64,
) -> Result<PotentialField> {
    if !(sigma_nu_sq >= 0.0) || !sigma_nu_sq.is_finite() {
        return Err(Error::invalid(format!(
            "potential variance must be finite and non-negative, got {sigma_nu_sq}"
        )));
    }
    let sd = white_discrete_sample_variance(sigma_nu_sq, grid).sqrt();
    let mut rng = stream_rng(seed, purpose::POTENTIAL + stream);
    let values = if sd == 0.0 {
        Array2::zeros((grid.n_zsteps(), grid.n_time()))
    } else {
        Array2::from_shape_simple_fn((grid.n_zsteps(), grid.n_time()), || {
            let n: f64 = StandardNormal.sample(&mut rng);
            sd * n
        })
    };
    Ok(PotentialField {
        values,
        grid: *grid,
        convention: CorrelationConvention::WhiteDiscrete,
        sigma_nu_sq,
        seed: Some(seed),
    })
}

/// Ensemble moments of potential slices.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialMoments {
    /// Mean at each time sample.
    pub mean: Vec<f64>,
    /// Second central moment (divided by the ensemble size) at each sample.
    pub variance: Vec<f64>,
    /// Average of `variance` over the slice.
    pub pooled_variance: f64,
    /// Average covariance between neighbouring time samples.
    pub lag1_covariance: f64,
    pub n_members: usize,
}

/// Sample mean and second moments over an ensemble of equal-length slices.
pub fn empirical_potential_moments<S: AsRef<[f64]>>(fields: &[S]) -> Result<PotentialMoments> {
    if fields.len() < 2 {
        return Err(Error::invalid("ensemble needs at least two members"));
    }
    let n = fields[0].as_ref().len();
    if n == 0 || fields.iter().any(|f| f.as_ref().len() != n) {
        return Err(Error::GridMismatch("ensemble slices differ in length".into()));
    }
    let members = fields.len() as f64;
    let mut mean = vec![0.0; n];
    for f in fields {
        for (m, v) in mean.iter_mut().zip(f.as_ref()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= members);
    let mut variance = vec![0.0; n];
    let mut lag1 = 0.0;
    for f in fields {
        let f = f.as_ref();
        for i in 0..n {
            let d = f[i] - mean[i];
            variance[i] += d * d;
            if i + 1 < n {
                lag1 += d * (f[i + 1] - mean[i + 1]);
            }
        }
    }
    variance.iter_mut().for_each(|v| *v /= members);
    let pooled_variance = variance.iter().sum::<f64>() / n as f64;
    let lag1_covariance = if n > 1 {
        lag1 / (members * (n - 1) as f64)
    } else {
        0.0
    };
    Ok(PotentialMoments {
        mean,
        variance,
        pooled_variance,
        lag1_covariance,
        n_members: fields.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    fn grid() -> SimGrid {
        SimGrid::new(64.0, 128, 8, 50.0)
    }

    #[test]
    fn zero_neighbours_give_zero_potential() {
        let c = LinkConfig::nominal();
        let g = grid();
        let v = xpm_potential_from_signals(&[SignalGrid::zeros(g, 1), SignalGrid::zeros(g, -1)], &c, 3.0).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_unit_neighbour() {
        let mut c = LinkConfig::nominal();
        c.alpha = 0.0;
        let g = grid();
        let x = SignalGrid::from_fn(g, 1, |t| Complex64::from_polar(1.0, t));
        let v = xpm_potential_from_signals(&[x], &c, 17.0).unwrap();
        assert!(v.iter().all(|&p| (p - 2.4).abs() < 1e-12));
    }

    #[test]
    fn two_neighbours_with_loss() {
        let mut c = LinkConfig::nominal();
        c.alpha = 0.05;
        let g = grid();
        let a = SignalGrid::from_fn(g, 1, |_| Complex64::new(1.0, 0.0));
        let b = SignalGrid::from_fn(g, -1, |_| Complex64::new(0.0, 1.0));
        let v = xpm_potential_from_signals(&[a, b], &c, 10.0).unwrap();
        // 2·1.2·2·e^{-0.5} = 4.8·0.6065306597126334
        let expect: f64 = 4.8 * 0.606_530_659_712_633_4;
        assert!(v.iter().all(|&p| (p - expect).abs() < 1e-12));
    }

    #[test]
    fn mismatched_neighbour_grids() {
        let c = LinkConfig::nominal();
        let a = SignalGrid::zeros(grid(), 1);
        let b = SignalGrid::zeros(SimGrid::new(32.0, 128, 8, 50.0), 2);
        assert!(matches!(
            xpm_potential_from_signals(&[a, b], &c, 0.0),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn sigma_nu_sq_small_cases() {
        assert_eq!(sigma_nu_sq_formula(1.0, 1.0, 1.0, 2, ChannelSum::Harmonic), 2.0);
        assert_eq!(sigma_nu_sq_formula(1.0, 1.0, 1.0, 4, ChannelSum::Harmonic), 3.0);
        assert_eq!(sigma_nu_sq_formula(1.0, 1.0, 1.0, 2, ChannelSum::Log), 0.0);
    }

    #[test]
    fn nominal_harmonic_vs_log() {
        // direct summation oracle for H_50
        let mut h50 = 0.0;
        for n in 1..=50 {
            h50 += 1.0 / n as f64;
        }
        assert!((h50 - 4.499_205_338_329_425).abs() < 1e-12);
        let c = LinkConfig::nominal();
        let exact = sigma_nu_sq(&c, ChannelSum::Harmonic);
        let approx = sigma_nu_sq(&c, ChannelSum::Log);
        let prefactor = 2.0 * c.channel_power.powi(2) / (c.beta2 * 0.05 * 0.05);
        assert!((exact / prefactor - h50).abs() < 1e-12);
        assert!((approx / prefactor - 50f64.ln()).abs() < 1e-12);
        let gap = (exact - approx) / prefactor;
        assert!((gap - EULER_GAMMA).abs() < 1.0 / 100.0);
    }

    #[test]
    fn sigma_nu_sq_monotone() {
        let base = LinkConfig::nominal();
        let s0 = sigma_nu_sq(&base, ChannelSum::Harmonic);
        for f in [1.1, 2.0, 10.0] {
            let mut c = base;
            c.channel_spacing *= f;
            assert!(sigma_nu_sq(&c, ChannelSum::Harmonic) < s0);
            let mut c = base;
            c.beta2 *= f;
            assert!(sigma_nu_sq(&c, ChannelSum::Harmonic) < s0);
            let mut c = base;
            c.channel_power *= f;
            assert!(sigma_nu_sq(&c, ChannelSum::Harmonic) > s0);
        }
        for n in [102, 120, 1000] {
            let mut c = base;
            c.n_channels = n;
            assert!(sigma_nu_sq(&c, ChannelSum::Harmonic) > s0);
        }
    }

    #[test]
    fn harmonic_bounds() {
        for m in 1..=2000u64 {
            let h = harmonic_number(m);
            let l = (m as f64).ln();
            assert!(l <= h && h <= l + 1.0, "m = {m}");
            let gap = h - l;
            assert!(gap >= EULER_GAMMA - 1e-12 && gap <= EULER_GAMMA + 0.5 / m as f64 + 1e-12, "m = {m}");
        }
    }

    #[test]
    fn zero_variance_field_is_zero() {
        let p = sample_surrogate_potential(&grid(), 0.0, 3).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
        assert!(sample_surrogate_potential(&grid(), -1.0, 3).is_err());
    }

    #[test]
    fn surrogate_is_deterministic() {
        let a = sample_surrogate_potential(&grid(), 1.0, 42).unwrap();
        let b = sample_surrogate_potential(&grid(), 1.0, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_surrogate_potential(&grid(), 1.0, 43).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.convention(), CorrelationConvention::WhiteDiscrete);
    }

    #[test]
    fn lattice_variance_matches_convention() {
        // 8 z-steps x 128 samples x 100 draws ≈ 10⁵ samples
        let g = grid();
        let target = white_discrete_sample_variance(1.0, &g);
        assert_eq!(target, 8.0 / 0.5);
        let mut sum2 = 0.0;
        let mut count = 0.0;
        for s in 0..100 {
            let p = sample_surrogate_potential_stream(&g, 1.0, 5, s).unwrap();
            sum2 += p.values().iter().map(|v| v * v).sum::<f64>();
            count += p.values().len() as f64;
        }
        assert!(count >= 1e5);
        assert!((sum2 / count / target - 1.0).abs() < 0.02);
    }

    #[test]
    fn moments_of_constant_and_two_point_ensembles() {
        let c = vec![vec![1.5; 10]; 5];
        let m = empirical_potential_moments(&c).unwrap();
        assert!(m.mean.iter().all(|&v| v == 1.5));
        assert!(m.variance.iter().all(|&v| v == 0.0));

        let pm = vec![vec![1.0; 6], vec![-1.0; 6], vec![1.0; 6], vec![-1.0; 6]];
        let m = empirical_potential_moments(&pm).unwrap();
        assert!(m.mean.iter().all(|&v| v == 0.0));
        assert!(m.variance.iter().all(|&v| v == 1.0));

        let empty: Vec<Vec<f64>> = vec![];
        assert!(empirical_potential_moments(&empty).is_err());
    }

    #[test]
    fn surrogate_ensemble_moments() {
        // 10⁴ draws of one time slice
        let g = SimGrid::new(8.0, 8, 1, 1.0);
        let slices: Vec<Vec<f64>> = (0..10_000 / 8)
            .map(|s| sample_surrogate_potential_stream(&g, 1.0, 11, s).unwrap().slice(0).to_vec())
            .collect();
        let m = empirical_potential_moments(&slices).unwrap();
        let target = white_discrete_sample_variance(1.0, &g);
        assert!((m.pooled_variance / target - 1.0).abs() < 0.05);
        assert!(m.lag1_covariance.abs() < 0.05 * target);
    }

    #[test]
    fn surrogate_mean_shrinks_like_inverse_sqrt() {
        let g = SimGrid::new(8.0, 8, 1, 1.0);
        let sd = white_discrete_sample_variance(1.0, &g).sqrt();
        for n in [100usize, 10_000] {
            let draws: Vec<f64> = (0..n.div_ceil(8) as u64)
                .flat_map(|s| sample_surrogate_potential_stream(&g, 1.0, 99, s).unwrap().slice(0).to_vec())
                .take(n)
                .collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let se = sd / (n as f64).sqrt();
            assert!(mean.abs() < 3.0 * se, "n = {n}, mean = {mean}, se = {se}");
        }
    }

    #[test]
    fn text_round_trip() {
        let p = sample_surrogate_potential(&SimGrid::new(8.0, 8, 3, 2.0), 0.7, 21).unwrap();
        let mut buf = Vec::new();
        p.write_text(&mut buf, &[]).unwrap();
        let back = PotentialField::read_text(&buf[..]).unwrap();
        assert_eq!(back, p);
    }
}
