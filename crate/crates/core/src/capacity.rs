//! High-SNR capacity upper bound of the phase-noise channel.
//!
//! With phase-noise entropy `h(u)` the bound reads
//! `C ≤ ½·ln(1 + 2π²·e^{-2h(u)}·P/σ²_N)`; the o(1) correction is omitted, so
//! every value here is a high-SNR asymptotic. Substituting the lumped XPM
//! variance gives the parametric form `½·ln(1 + c/(P·σ²_N))` with
//! `c = (π/e)·β₂δν²/(2·S(N))·ν_g/L³`.
//!
//! Units follow the printed formula: β₂ in ps²/km, δν in cycles/ps, ν_g in
//! km/s, L in km. The nominal link gives c ≈ 0.0118.

use std::f64::consts::{E, LN_2, PI};

use rayon::prelude::*;

use crate::channel::PhaseNoiseChannelSpec;
use crate::config::LinkConfig;
use crate::error::{Error, Result};
use crate::mi::{mi_monte_carlo_stream, Constellation, MiEstimate};
use crate::report::{format_f64, Report};
use crate::xpm_stats::ChannelSum;

/// Label attached to every reported bound.
pub const BOUND_LABEL: &str = "high-SNR asymptotic";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Nats,
    Bits,
}

impl LogBase {
    pub fn from_nats(self, v: f64) -> f64 {
        match self {
            LogBase::Nats => v,
            LogBase::Bits => v / LN_2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LogBase::Nats => "nats",
            LogBase::Bits => "bits",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nats" => Ok(LogBase::Nats),
            "bits" => Ok(LogBase::Bits),
            _ => Err(Error::Parse(format!("unknown unit {s:?}, expected nats or bits"))),
        }
    }
}

/// ½·ln(2πe·σ²), in nats.
pub fn gaussian_differential_entropy(sigma_sq: f64) -> Result<f64> {
    if !(sigma_sq > 0.0) || !sigma_sq.is_finite() {
        return Err(Error::invalid(format!("variance must be positive, got {sigma_sq}")));
    }
    Ok(0.5 * (2.0 * PI * E * sigma_sq).ln())
}

fn check_snr(p: f64, sigma_n_sq: f64) -> Result<()> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::invalid(format!("power must be positive, got {p}")));
    }
    if !(sigma_n_sq > 0.0) || !sigma_n_sq.is_finite() {
        return Err(Error::invalid(format!("noise variance must be positive, got {sigma_n_sq}")));
    }
    Ok(())
}

/// ½·ln(1 + 2π²·e^{-2h_u}·P/σ²_N), in nats.
pub fn capacity_bound_entropy_form(p: f64, sigma_n_sq: f64, h_u: f64) -> Result<f64> {
    check_snr(p, sigma_n_sq)?;
    if h_u.is_nan() || h_u == f64::NEG_INFINITY {
        return Err(Error::invalid(format!("entropy must be a number above -inf, got {h_u}")));
    }
    let snr_term = 2.0 * PI * PI * (-2.0 * h_u).exp() * p / sigma_n_sq;
    Ok(0.5 * snr_term.ln_1p())
}

fn channel_factor(config: &LinkConfig, sum: ChannelSum) -> Result<f64> {
    if config.n_channels < 2 {
        return Err(Error::invalid("the bound needs at least two neighbouring channels"));
    }
    let s = sum.evaluate(config.n_channels);
    if !(s > 0.0) {
        return Err(Error::invalid(format!(
            "channel factor vanishes for N = {}; the logarithmic form needs N >= 4",
            config.n_channels
        )));
    }
    Ok(s)
}

fn check_link(config: &LinkConfig) -> Result<()> {
    for (name, v) in [
        ("beta2", config.beta2),
        ("channel_spacing", config.channel_spacing),
        ("group_velocity", config.group_velocity),
        ("length_L", config.length_l),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// The scalar `c` in `½·ln(1 + c/(P·σ²_N))`.
pub fn bound_coefficient(config: &LinkConfig, sum: ChannelSum) -> Result<f64> {
    check_link(config)?;
    let s = channel_factor(config, sum)?;
    let dnu = config.spacing_inv_ps();
    let l = config.length_l;
    Ok(PI / E * config.beta2 * dnu * dnu / (2.0 * s) * config.group_velocity / (l * l * l))
}

/// Lumped phase variance `2P²·S(N)/(β₂δν²)·L³/ν_g` that links the two forms.
pub fn phase_variance(config: &LinkConfig, p: f64, sum: ChannelSum) -> Result<f64> {
    check_link(config)?;
    let s = channel_factor(config, sum)?;
    let dnu = config.spacing_inv_ps();
    let l = config.length_l;
    Ok(2.0 * p * p * s / (config.beta2 * dnu * dnu) * l * l * l / config.group_velocity)
}

/// Parametric form with the ln(N/2) channel factor, in nats.
pub fn capacity_bound_param_form(config: &LinkConfig, p: f64, sigma_n_sq: f64) -> Result<f64> {
    capacity_bound_param_form_with(config, p, sigma_n_sq, ChannelSum::Log)
}

pub fn capacity_bound_param_form_with(config: &LinkConfig, p: f64, sigma_n_sq: f64, sum: ChannelSum) -> Result<f64> {
    check_snr(p, sigma_n_sq)?;
    let c = bound_coefficient(config, sum)?;
    Ok(0.5 * (c / (p * sigma_n_sq)).ln_1p())
}

/// Link parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// Channel power P, W.
    Power,
    /// Fiber length L, km.
    Length,
    /// Number of neighbouring channels N.
    Channels,
    /// Dispersion β₂, ps²/km.
    Beta2,
    /// Channel spacing δν, GHz.
    Spacing,
    /// Group velocity ν_g, km/s.
    GroupVelocity,
}

impl SweepVariable {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "P" | "power" => SweepVariable::Power,
            "L" | "length" => SweepVariable::Length,
            "N" | "channels" => SweepVariable::Channels,
            "beta2" => SweepVariable::Beta2,
            "spacing" | "delta_nu" => SweepVariable::Spacing,
            "group_velocity" | "nu_g" => SweepVariable::GroupVelocity,
            other => return Err(Error::Parse(format!("unknown sweep variable {other:?}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Power => "P",
            SweepVariable::Length => "L",
            SweepVariable::Channels => "N",
            SweepVariable::Beta2 => "beta2",
            SweepVariable::Spacing => "spacing",
            SweepVariable::GroupVelocity => "group_velocity",
        }
    }

    /// Copy of `config` with this variable set to `value`.
    pub fn apply(self, config: &LinkConfig, value: f64) -> std::result::Result<LinkConfig, String> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(format!("{} must be positive and finite, got {value}", self.name()));
        }
        let mut c = *config;
        match self {
            SweepVariable::Power => c.channel_power = value,
            SweepVariable::Length => c.length_l = value,
            SweepVariable::Beta2 => c.beta2 = value,
            SweepVariable::Spacing => c.channel_spacing = value,
            SweepVariable::GroupVelocity => c.group_velocity = value,
            SweepVariable::Channels => {
                if value.fract() != 0.0 || value > f64::from(u32::MAX) {
                    return Err(format!("N must be an integer, got {value}"));
                }
                let n = value as u32;
                if !n.is_multiple_of(2) || n < 4 {
                    return Err(format!("N must be even and at least 4, got {n}"));
                }
                c.n_channels = n;
            }
        }
        Ok(c)
    }
}

/// A variable and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

impl Sweep {
    /// Parses `name=v1,v2,...`, `name=lin:a:b:n` or `name=geom:a:b:n`.
    /// Explicit values may also be separated by whitespace or newlines.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, rest) = spec
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("sweep {spec:?} lacks '='")))?;
        let variable = SweepVariable::parse(name)?;
        let rest = rest.trim();
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {s:?} in sweep")))
        };
        let values = if let Some(r) = rest.strip_prefix("lin:").or_else(|| rest.strip_prefix("geom:")) {
            let parts: Vec<&str> = r.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Parse(format!("range {rest:?} must be kind:start:stop:count")));
            }
            let (a, b) = (num(parts[0])?, num(parts[1])?);
            let n: usize = parts[2]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad count {:?}", parts[2])))?;
            if n == 0 {
                return Err(Error::Parse("range count must be positive".into()));
            }
            let geometric = rest.starts_with("geom:");
            if geometric && !(a > 0.0 && b > 0.0) {
                return Err(Error::Parse("geometric range needs positive endpoints".into()));
            }
            (0..n)
                .map(|i| {
                    let f = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                    if geometric {
                        a * (b / a).powf(f)
                    } else {
                        a + (b - a) * f
                    }
                })
                .collect()
        } else {
            rest.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(num)
                .collect::<Result<Vec<_>>>()?
        };
        if values.is_empty() {
            return Err(Error::Parse("sweep has no values".into()));
        }
        Ok(Self { variable, values })
    }

    pub fn single(variable: SweepVariable, value: f64) -> Self {
        Self {
            variable,
            values: vec![value],
        }
    }
}

/// Monte Carlo mutual-information settings for a sweep. The constellation is
/// rescaled to each row's power.
#[derive(Debug, Clone, PartialEq)]
pub struct MiSettings {
    pub constellation: Constellation,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityOptions {
    pub sigma_n_sq: f64,
    pub base: LogBase,
    /// Also report the bound with the exact harmonic channel sum.
    pub harmonic: bool,
    pub mi: Option<MiSettings>,
}

impl CapacityOptions {
    pub fn new(sigma_n_sq: f64) -> Self {
        Self {
            sigma_n_sq,
            base: LogBase::Nats,
            harmonic: false,
            mi: None,
        }
    }
}

/// One evaluated sweep point; bounds are stored in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityRow {
    pub value: f64,
    pub power: f64,
    pub sigma_u_sq: f64,
    pub bound_entropy: f64,
    pub bound_params: f64,
    pub coefficient: f64,
    pub bound_harmonic: Option<f64>,
    pub mi: Option<MiEstimate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityReport {
    pub variable: SweepVariable,
    pub base: LogBase,
    pub sigma_n_sq: f64,
    pub seed: Option<u64>,
    pub rows: Vec<CapacityRow>,
}

impl CapacityReport {
    /// Largest relative gap between the two bound forms.
    pub fn max_form_gap(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.bound_entropy - r.bound_params).abs() / r.bound_params.abs())
            .fold(0.0, f64::max)
    }

    pub fn to_report(&self) -> Report {
        let mut cols = vec![
            "value",
            "bound_entropy",
            "bound_params",
            "difference",
            "bound_nats",
            "bound_bits",
            "coefficient",
            "sigma_u_sq",
        ];
        let harmonic = self.rows.iter().any(|r| r.bound_harmonic.is_some());
        if harmonic {
            cols.push("bound_harmonic");
        }
        cols.extend(["mi_estimate", "mi_stderr", "seed"]);
        let mut rep = Report::new(&cols);
        rep.meta("bound", BOUND_LABEL)
            .meta("sweep_variable", self.variable.name())
            .meta("units", self.base.name())
            .meta("sigma_n_sq", format_f64(self.sigma_n_sq))
            .meta("channel_sum", "ln(N/2)");
        let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_else(|| "NA".into());
        for r in &self.rows {
            let b = self.base;
            let mut row = vec![
                format_f64(r.value),
                format_f64(b.from_nats(r.bound_entropy)),
                format_f64(b.from_nats(r.bound_params)),
                format_f64(b.from_nats(r.bound_entropy - r.bound_params)),
                format_f64(r.bound_params),
                format_f64(LogBase::Bits.from_nats(r.bound_params)),
                format_f64(r.coefficient),
                format_f64(r.sigma_u_sq),
            ];
            if harmonic {
                row.push(opt(r.bound_harmonic.map(|v| b.from_nats(v))));
            }
            row.push(opt(r.mi.map(|m| b.from_nats(m.estimate))));
            row.push(opt(r.mi.map(|m| b.from_nats(m.stderr))));
            row.push(self.seed.map(|s| s.to_string()).unwrap_or_else(|| "NA".into()));
            rep.push_row(row);
        }
        rep
    }
}

fn evaluate_point(config: &LinkConfig, value: f64, variable: SweepVariable, opts: &CapacityOptions, index: usize) -> Result<CapacityRow> {
    let invalid = |reason: String| Error::InvalidSweepPoint { index, reason };
    let c = variable.apply(config, value).map_err(invalid)?;
    let p = c.channel_power;
    let coefficient = bound_coefficient(&c, ChannelSum::Log).map_err(|e| invalid(e.to_string()))?;
    let bound_params = capacity_bound_param_form(&c, p, opts.sigma_n_sq).map_err(|e| invalid(e.to_string()))?;
    let sigma_u_sq = phase_variance(&c, p, ChannelSum::Log).map_err(|e| invalid(e.to_string()))?;
    let h = gaussian_differential_entropy(sigma_u_sq).map_err(|e| invalid(e.to_string()))?;
    let bound_entropy = capacity_bound_entropy_form(p, opts.sigma_n_sq, h).map_err(|e| invalid(e.to_string()))?;
    let bound_harmonic = if opts.harmonic {
        Some(
            capacity_bound_param_form_with(&c, p, opts.sigma_n_sq, ChannelSum::Harmonic)
                .map_err(|e| invalid(e.to_string()))?,
        )
    } else {
        None
    };
    let mi = match &opts.mi {
        None => None,
        Some(s) => {
            let constellation = s.constellation.scaled_to_power(p).map_err(|e| invalid(e.to_string()))?;
            let spec = PhaseNoiseChannelSpec::new(sigma_u_sq, opts.sigma_n_sq, s.seed)
                .map_err(|e| invalid(e.to_string()))?
                .with_power_limit(p);
            Some(
                mi_monte_carlo_stream(&constellation, &spec, s.n_samples, s.seed, index as u64)
                    .map_err(|e| invalid(e.to_string()))?,
            )
        }
    };
    Ok(CapacityRow {
        value,
        power: p,
        sigma_u_sq,
        bound_entropy,
        bound_params,
        coefficient,
        bound_harmonic,
        mi,
    })
}

/// Evaluates both bound forms (and optionally MI) at every sweep point.
/// The first invalid point aborts the sweep with its index.
pub fn capacity_sweep(config: &LinkConfig, sweep: &Sweep, opts: &CapacityOptions) -> Result<CapacityReport> {
    if sweep.values.is_empty() {
        return Err(Error::invalid("sweep grid is empty"));
    }
    let results: Vec<Result<CapacityRow>> = sweep
        .values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| evaluate_point(config, v, sweep.variable, opts, i))
        .collect();
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CapacityReport {
        variable: sweep.variable,
        base: opts.base,
        sigma_n_sq: opts.sigma_n_sq,
        seed: opts.mi.as_ref().map(|m| m.seed),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_values() {
        assert!(gaussian_differential_entropy(1.0 / (2.0 * PI * E)).unwrap().abs() < 1e-15);
        assert!((gaussian_differential_entropy(1.0).unwrap() - 1.418_938_533_204_672_7).abs() < 1e-14);
        let d = gaussian_differential_entropy(8.0).unwrap() - gaussian_differential_entropy(2.0).unwrap();
        assert!((d - LN_2).abs() < 1e-14);
        assert!(gaussian_differential_entropy(0.0).is_err());
        assert!(gaussian_differential_entropy(-1.0).is_err());
    }

    #[test]
    fn unit_coefficient_case() {
        let h = gaussian_differential_entropy(PI / E).unwrap();
        let b = capacity_bound_entropy_form(3.0, 1.5, h).unwrap();
        assert!((b - 0.5 * 3.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn bound_limits() {
        assert!(capacity_bound_entropy_form(1e-30, 1.0, 0.0).unwrap() < 1e-28);
        assert!(capacity_bound_entropy_form(1.0, 1.0, 400.0).unwrap() < 1e-300);
        assert!(capacity_bound_entropy_form(0.0, 1.0, 0.0).is_err());
        assert!(capacity_bound_entropy_form(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn nominal_coefficient() {
        let c = bound_coefficient(&LinkConfig::nominal(), ChannelSum::Log).unwrap();
        assert!((c - 0.011_82).abs() < 5e-6, "{c}");
    }

    #[test]
    fn two_channels_rejected_for_log_form() {
        let mut c = LinkConfig::nominal();
        c.n_channels = 2;
        assert!(capacity_bound_param_form(&c, 1e-3, 1e-6).is_err());
    }

    #[test]
    fn bits_are_nats_over_ln2() {
        let v = 1.234_567;
        assert!((LogBase::Bits.from_nats(v) - v / LN_2).abs() <= 1e-14 * v);
    }

    #[test]
    fn sweep_parsing() {
        let s = Sweep::parse("P=0.001,0.01, 0.1 1").unwrap();
        assert_eq!(s.variable, SweepVariable::Power);
        assert_eq!(s.values, vec![0.001, 0.01, 0.1, 1.0]);
        let s = Sweep::parse("L=geom:10:80:4").unwrap();
        assert_eq!(s.variable, SweepVariable::Length);
        assert!((s.values[1] - 20.0).abs() < 1e-12 && (s.values[3] - 80.0).abs() < 1e-12);
        let s = Sweep::parse("beta2=lin:10:20:3").unwrap();
        assert_eq!(s.values, vec![10.0, 15.0, 20.0]);
        assert!(Sweep::parse("Q=1").is_err());
        assert!(Sweep::parse("P").is_err());
        assert!(Sweep::parse("P=").is_err());
        assert!(Sweep::parse("P=lin:1:2").is_err());
    }

    #[test]
    fn invalid_point_reports_index() {
        let s = Sweep::parse("N=100,50,7").unwrap();
        match capacity_sweep(&LinkConfig::nominal(), &s, &CapacityOptions::new(1e-6)) {
            Err(Error::InvalidSweepPoint { index, .. }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn single_point_sweep_matches_param_form() {
        let c = LinkConfig::nominal();
        let r = capacity_sweep(&c, &Sweep::single(SweepVariable::Power, 2e-3), &CapacityOptions::new(1e-6)).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].bound_params, capacity_bound_param_form(&c, 2e-3, 1e-6).unwrap());
        let text = r.to_report().to_text();
        assert!(text.contains("high-SNR asymptotic"));
    }
}
