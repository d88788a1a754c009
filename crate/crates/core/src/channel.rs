//! Phase-noise channel models.
//!
//! Two forms are provided. [`apply_lumped_channel`] multiplies a whole
//! waveform by a single phase `exp(-iU)` and adds white noise; it models the
//! fiber-end lumping of distributed XPM. [`discrete_channel`] draws an
//! independent phase per symbol, `y_k = exp(-iu_k)·x_k + n_k`, which is the
//! form the capacity analysis uses.
//!
//! Additive noise is circularly-symmetric complex Gaussian with total
//! variance `sigma_n_sq` per symbol (each quadrature gets half).

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::LinkConfig;
use crate::error::{Error, Result};
use crate::propagator::SignalGrid;
use crate::report::{format_f64, Report};
use crate::rng::{purpose, stream_rng};

/// Parameters of a phase-noise channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseNoiseChannelSpec {
    /// Phase-noise variance, rad².
    pub sigma_u_sq: f64,
    /// Additive-noise variance per symbol, W.
    pub sigma_n_sq: f64,
    pub seed: u64,
    /// Average input power limit, W. `None` disables the check.
    pub power_limit: Option<f64>,
}

impl PhaseNoiseChannelSpec {
    pub fn new(sigma_u_sq: f64, sigma_n_sq: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            sigma_u_sq,
            sigma_n_sq,
            seed,
            power_limit: None,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn with_power_limit(mut self, limit: f64) -> Self {
        self.power_limit = Some(limit);
        self
    }

    fn check(&self) -> Result<()> {
        for (name, v) in [("sigma_u_sq", self.sigma_u_sq), ("sigma_n_sq", self.sigma_n_sq)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Lumped phase variance `σ²_ν·(L/ν_g)·L²`, with `L` in km and `ν_g` in km/s.
pub fn sigma_u_sq_lumped(sigma_nu_sq: f64, config: &LinkConfig) -> f64 {
    let l = config.length_l;
    sigma_nu_sq * (l / config.group_velocity) * l * l
}

struct NoiseSource<R> {
    rng: R,
    phase_sd: f64,
    noise_sd: f64,
}

impl<R: Rng> NoiseSource<R> {
    fn phase(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.phase_sd * z
    }

    fn noise(&mut self) -> Complex64 {
        let re: f64 = StandardNormal.sample(&mut self.rng);
        let im: f64 = StandardNormal.sample(&mut self.rng);
        Complex64::new(re, im) * self.noise_sd
    }
}

fn noise_source(spec: &PhaseNoiseChannelSpec) -> Result<NoiseSource<impl Rng>> {
    spec.check()?;
    Ok(NoiseSource {
        rng: stream_rng(spec.seed, purpose::CHANNEL),
        phase_sd: spec.sigma_u_sq.sqrt(),
        noise_sd: (0.5 * spec.sigma_n_sq).sqrt(),
    })
}

fn check_power(x: &[Complex64], spec: &PhaseNoiseChannelSpec) -> Result<()> {
    if let Some(limit) = spec.power_limit {
        let power = if x.is_empty() {
            0.0
        } else {
            x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64
        };
        if power > limit * (1.0 + 1e-12) {
            return Err(Error::PowerConstraint { channel: 0, power, limit });
        }
    }
    Ok(())
}

/// `y(t) = exp(-iU)·x̃(t) + n(t)` with a single `U ~ N(0, σ²_U)` for the
/// whole block. Noise is skipped entirely when `σ²_N = 0`, so the noiseless
/// channel is an exact phase rotation.
pub fn apply_lumped_channel(x_tilde: &SignalGrid, spec: &PhaseNoiseChannelSpec) -> Result<SignalGrid> {
    check_power(x_tilde.samples(), spec)?;
    let mut src = noise_source(spec)?;
    let rot = Complex64::from_polar(1.0, -src.phase());
    let mut out = x_tilde.clone();
    for s in out.samples_mut() {
        *s *= rot;
        if spec.sigma_n_sq > 0.0 {
            *s += src.noise();
        }
    }
    Ok(out)
}

/// `y_k = exp(-iu_k)·x_k + n_k` with independent `u_k ~ N(0, σ²_U)` and
/// `n_k ~ CN(0, σ²_N)`.
pub fn discrete_channel(x_seq: &[Complex64], spec: &PhaseNoiseChannelSpec) -> Result<Vec<Complex64>> {
    if x_seq.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::invalid("input symbols must be finite"));
    }
    check_power(x_seq, spec)?;
    let mut src = noise_source(spec)?;
    Ok(x_seq
        .iter()
        .map(|&x| {
            let y = x * Complex64::from_polar(1.0, -src.phase());
            if spec.sigma_n_sq > 0.0 {
                y + src.noise()
            } else {
                y
            }
        })
        .collect())
}

/// Input/output symbol pairs as a report with columns
/// `index, Re_in, Im_in, Re_out, Im_out`.
pub fn symbol_report(x: &[Complex64], y: &[Complex64], spec: &PhaseNoiseChannelSpec) -> Result<Report> {
    if x.len() != y.len() {
        return Err(Error::invalid("input and output sequences differ in length"));
    }
    let mut r = Report::new(&["index", "Re_in", "Im_in", "Re_out", "Im_out"]);
    r.meta("sigma_u_sq", format_f64(spec.sigma_u_sq))
        .meta("sigma_n_sq", format_f64(spec.sigma_n_sq))
        .meta("seed", spec.seed);
    for (i, (a, b)) in x.iter().zip(y).enumerate() {
        r.push_row(vec![
            i.to_string(),
            format_f64(a.re),
            format_f64(a.im),
            format_f64(b.re),
            format_f64(b.im),
        ]);
    }
    Ok(r)
}

pub fn write_symbols<W: Write>(w: W, x: &[Complex64], y: &[Complex64], spec: &PhaseNoiseChannelSpec) -> Result<()> {
    symbol_report(x, y, spec)?.write(w)
}

/// Reads back `(inputs, outputs)` written by [`write_symbols`].
pub fn read_symbols<R: BufRead>(mut r: R) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let rep = Report::parse(&text);
    let col = |name: &str| -> Result<Vec<f64>> {
        rep.column(name)
            .ok_or_else(|| Error::Parse(format!("missing column {name}")))?
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("{name}: {e}"))))
            .collect()
    };
    let (ri, ii, ro, io) = (col("Re_in")?, col("Im_in")?, col("Re_out")?, col("Im_out")?);
    let x = ri.iter().zip(&ii).map(|(&a, &b)| Complex64::new(a, b)).collect();
    let y = ro.iter().zip(&io).map(|(&a, &b)| Complex64::new(a, b)).collect();
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimGrid;

    fn spec(u: f64, n: f64) -> PhaseNoiseChannelSpec {
        PhaseNoiseChannelSpec::new(u, n, 17).unwrap()
    }

    fn symbols(n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|k| Complex64::from_polar(1.0 + (k % 3) as f64, 0.5 * k as f64))
            .collect()
    }

    #[test]
    fn lumped_variance_plug_in() {
        let mut c = LinkConfig::nominal();
        assert_eq!(sigma_u_sq_lumped(0.0, &c), 0.0);
        c.length_l = 1.0;
        c.group_velocity = 1.0;
        assert_eq!(sigma_u_sq_lumped(1.0, &c), 1.0);
        let c = LinkConfig::nominal();
        assert!((sigma_u_sq_lumped(2.0, &c) - 2.0 * 50.0 / 200_000.0 * 2500.0).abs() < 1e-15);
    }

    #[test]
    fn noiseless_is_identity() {
        let x = symbols(100);
        assert_eq!(discrete_channel(&x, &spec(0.0, 0.0)).unwrap(), x);
        let g = SimGrid::new(10.0, 16, 1, 1.0);
        let s = SignalGrid::from_fn(g, 0, |t| Complex64::new(t, -t));
        assert_eq!(apply_lumped_channel(&s, &spec(0.0, 0.0)).unwrap(), s);
    }

    #[test]
    fn phase_noise_preserves_magnitude() {
        let x = symbols(1000);
        let y = discrete_channel(&x, &spec(2.0, 0.0)).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a.norm() - b.norm()).abs() <= 1e-14 * a.norm());
        }
        let g = SimGrid::new(10.0, 16, 1, 1.0);
        let s = SignalGrid::from_fn(g, 0, |t| Complex64::new(1.0, t));
        let out = apply_lumped_channel(&s, &spec(0.5, 0.0)).unwrap();
        let rot: Vec<Complex64> = out.samples().iter().zip(s.samples()).map(|(b, a)| b / a).collect();
        for r in &rot {
            assert!((r - rot[0]).norm() < 1e-14);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let x = symbols(50);
        let a = discrete_channel(&x, &spec(0.3, 0.1)).unwrap();
        let b = discrete_channel(&x, &spec(0.3, 0.1)).unwrap();
        assert_eq!(a, b);
        let mut other = spec(0.3, 0.1);
        other.seed = 18;
        assert_ne!(a, discrete_channel(&x, &other).unwrap());
    }

    #[test]
    fn power_limit_enforced() {
        let x = vec![Complex64::new(2.0, 0.0); 10];
        let s = spec(0.1, 0.1).with_power_limit(1.0);
        assert!(matches!(discrete_channel(&x, &s), Err(Error::PowerConstraint { .. })));
        assert!(discrete_channel(&x, &spec(0.1, 0.1).with_power_limit(4.0)).is_ok());
    }

    #[test]
    fn negative_variance_rejected() {
        assert!(PhaseNoiseChannelSpec::new(-1.0, 0.0, 0).is_err());
        assert!(PhaseNoiseChannelSpec::new(0.0, f64::NAN, 0).is_err());
    }

    #[test]
    fn symbol_text_round_trip() {
        let x = symbols(20);
        let s = spec(0.2, 0.01);
        let y = discrete_channel(&x, &s).unwrap();
        let mut buf = Vec::new();
        write_symbols(&mut buf, &x, &y, &s).unwrap();
        let (x2, y2) = read_symbols(buf.as_slice()).unwrap();
        assert_eq!(x, x2);
        assert_eq!(y, y2);
    }
}
