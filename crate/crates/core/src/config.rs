//! Physical link parameters and simulation grids.
//!
//! All values are stored in the canonical units of [`crate::units`]:
//! ps, km, GHz and W. The on-disk format is a flat TOML document whose keys
//! are exactly the field names of [`LinkConfig`] plus the three primary
//! [`SimGrid`] fields (`t_window`, `n_time`, `n_zsteps`).

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::units::ghz_to_inv_ps;

/// Fiber and WDM parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    /// Group-velocity dispersion, ps²/km.
    pub beta2: f64,
    /// Nonlinear coefficient, 1/(W·km).
    pub gamma: f64,
    /// Loss coefficient, 1/km.
    pub alpha: f64,
    /// Fiber length, km.
    pub length_l: f64,
    /// Group velocity of the central channel, km/s.
    pub group_velocity: f64,
    /// Number of neighbouring channels N; slots run over k = -N/2 ..= N/2.
    pub n_channels: u32,
    /// Channel spacing, GHz.
    pub channel_spacing: f64,
    /// Per-channel power constraint, W.
    pub channel_power: f64,
    /// Walk-off delay per unit length per channel index, ps/km.
    pub beta1_slope: f64,
}

impl LinkConfig {
    /// Builds a configuration, deriving `beta1_slope` from dispersion and
    /// channel spacing.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        beta2: f64,
        gamma: f64,
        alpha: f64,
        length_l: f64,
        group_velocity: f64,
        n_channels: u32,
        channel_spacing: f64,
        channel_power: f64,
    ) -> Self {
        Self {
            beta2,
            gamma,
            alpha,
            length_l,
            group_velocity,
            n_channels,
            channel_spacing,
            channel_power,
            beta1_slope: derived_beta1_slope(beta2, channel_spacing),
        }
    }

    /// Typical WDM link: β₂ = 20 ps²/km, γ = 1.2 /(W·km), δν = 50 GHz,
    /// ν_g = 200000 km/s, L = 50 km, N = 100. Loss is 0.2 dB/km and the
    /// channel power 1 mW.
    pub fn nominal() -> Self {
        Self::new(
            20.0,
            1.2,
            0.2 * std::f64::consts::LN_10 / 10.0,
            50.0,
            200_000.0,
            100,
            50.0,
            1e-3,
        )
    }

    pub fn half_channels(&self) -> i64 {
        i64::from(self.n_channels / 2)
    }

    /// Channel indices -N/2 ..= N/2.
    pub fn channel_indices(&self) -> impl Iterator<Item = i64> {
        let h = self.half_channels();
        -h..=h
    }

    /// Channel spacing in cycles per ps.
    pub fn spacing_inv_ps(&self) -> f64 {
        ghz_to_inv_ps(self.channel_spacing)
    }

    /// β₂·L in ps².
    pub fn beta2_length(&self) -> f64 {
        self.beta2 * self.length_l
    }

    /// Group delay per km of channel `k` relative to the central channel.
    pub fn walk_off(&self, k: i64) -> f64 {
        self.beta1_slope * k as f64
    }

    /// True when the dispersion, spacing, group velocity, length and channel
    /// count match the typical link of [`LinkConfig::nominal`].
    pub fn matches_nominal(&self) -> bool {
        let n = Self::nominal();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs();
        close(self.beta2, n.beta2)
            && close(self.channel_spacing, n.channel_spacing)
            && close(self.group_velocity, n.group_velocity)
            && close(self.length_l, n.length_l)
            && self.n_channels == n.n_channels
    }
}

/// 2π·β₂·δν: walk-off in ps/km per channel index.
pub fn derived_beta1_slope(beta2: f64, channel_spacing_ghz: f64) -> f64 {
    2.0 * PI * beta2 * ghz_to_inv_ps(channel_spacing_ghz)
}

/// Uniform (z, t) lattice.
///
/// Time samples sit at `t_n = (n - n_time/2)·dt`; the window is periodic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimGrid {
    t_window: f64,
    n_time: usize,
    n_zsteps: usize,
    length: f64,
    dt: f64,
    dz: f64,
}

impl SimGrid {
    pub fn new(t_window: f64, n_time: usize, n_zsteps: usize, length: f64) -> Self {
        let dt = t_window / n_time as f64;
        let dz = length / n_zsteps as f64;
        Self {
            t_window,
            n_time,
            n_zsteps,
            length,
            dt,
            dz,
        }
    }

    /// Grid whose spacing satisfies `n_time·dt² = 2π·β₂·L`.
    ///
    /// On this lattice the sampled continuous Fresnel kernel of length `L` is
    /// exactly periodic, so the discrete and continuous free propagators
    /// coincide sample by sample.
    pub fn fresnel_matched(n_time: usize, n_zsteps: usize, config: &LinkConfig) -> Self {
        let dt = (2.0 * PI * config.beta2_length() / n_time as f64).sqrt();
        Self::new(dt * n_time as f64, n_time, n_zsteps, config.length_l)
    }

    pub fn t_window(&self) -> f64 {
        self.t_window
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn n_zsteps(&self) -> usize {
        self.n_zsteps
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    pub fn time(&self, n: usize) -> f64 {
        (n as f64 - (self.n_time / 2) as f64) * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_time).map(|n| self.time(n))
    }

    /// Nearest lattice index to `t`, or `None` if `t` lies outside the window.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let pos = t / self.dt + (self.n_time / 2) as f64;
        let idx = pos.round();
        if idx < 0.0 || idx >= self.n_time as f64 || !idx.is_finite() {
            None
        } else {
            Some(idx as usize)
        }
    }

    /// Same time lattice with a different number of z-steps.
    pub fn with_zsteps(&self, n_zsteps: usize) -> Self {
        Self::new(self.t_window, self.n_time, n_zsteps, self.length)
    }

    /// Angular frequencies of the FFT bins, rad/ps, in FFT order.
    pub fn angular_frequencies(&self) -> Vec<f64> {
        let n = self.n_time;
        let df = 2.0 * PI / self.t_window;
        (0..n)
            .map(|j| {
                let j = if j < n.div_ceil(2) { j as f64 } else { j as f64 - n as f64 };
                j * df
            })
            .collect()
    }

    pub fn same_lattice(&self, other: &SimGrid) -> bool {
        self.n_time == other.n_time
            && (self.t_window - other.t_window).abs() <= 1e-12 * self.t_window.abs()
    }
}

/// Checks every invariant of the pair and returns it unchanged if all hold.
pub fn validate(config: LinkConfig, grid: SimGrid) -> Result<(LinkConfig, SimGrid)> {
    let mut v = Vec::new();
    let mut check = |ok: bool, field: &'static str, message: &str| {
        if !ok {
            v.push(Violation {
                field,
                message: message.to_string(),
            });
        }
    };
    let pos = |x: f64| x.is_finite() && x > 0.0;
    let nonneg = |x: f64| x.is_finite() && x >= 0.0;

    check(pos(config.beta2), "beta2", "beta2 must be positive");
    check(nonneg(config.gamma), "gamma", "gamma must be non-negative");
    check(nonneg(config.alpha), "alpha", "alpha must be non-negative");
    check(pos(config.length_l), "length_L", "length_L must be positive");
    check(
        pos(config.group_velocity),
        "group_velocity",
        "group_velocity must be positive",
    );
    check(
        config.n_channels.is_multiple_of(2),
        "n_channels",
        "n_channels must be even",
    );
    check(
        config.n_channels >= 2,
        "n_channels",
        "n_channels must be at least 2",
    );
    check(
        pos(config.channel_spacing),
        "channel_spacing",
        "channel_spacing must be positive",
    );
    check(
        pos(config.channel_power),
        "channel_power",
        "channel_power must be positive",
    );
    check(
        config.beta1_slope.is_finite(),
        "beta1_slope",
        "beta1_slope must be finite",
    );

    check(pos(grid.t_window), "t_window", "t_window must be positive");
    check(grid.n_time >= 8, "n_time", "n_time must be at least 8");
    check(
        grid.n_time.is_power_of_two(),
        "n_time",
        "n_time must be a power of two",
    );
    check(grid.n_zsteps >= 1, "n_zsteps", "n_zsteps must be at least 1");
    check(
        grid.length == config.length_l,
        "length_L",
        "grid length must equal length_L",
    );

    if v.is_empty() {
        Ok((config, grid))
    } else {
        Err(Error::InvalidConfig(v))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    beta2: f64,
    gamma: f64,
    alpha: f64,
    #[serde(rename = "length_L")]
    length_l: f64,
    group_velocity: f64,
    n_channels: u32,
    channel_spacing: f64,
    channel_power: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta1_slope: Option<f64>,
    t_window: f64,
    n_time: usize,
    n_zsteps: usize,
}

/// Parses the flat key-value config format. The result is not validated.
///
/// `beta1_slope` may be omitted, in which case it is derived from `beta2`
/// and `channel_spacing`.
pub fn parse_config(text: &str) -> Result<(LinkConfig, SimGrid)> {
    let f: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let config = LinkConfig {
        beta2: f.beta2,
        gamma: f.gamma,
        alpha: f.alpha,
        length_l: f.length_l,
        group_velocity: f.group_velocity,
        n_channels: f.n_channels,
        channel_spacing: f.channel_spacing,
        channel_power: f.channel_power,
        beta1_slope: f
            .beta1_slope
            .unwrap_or_else(|| derived_beta1_slope(f.beta2, f.channel_spacing)),
    };
    let grid = SimGrid::new(f.t_window, f.n_time, f.n_zsteps, f.length_l);
    Ok((config, grid))
}

/// Serializes a config/grid pair into the flat key-value format.
pub fn format_config(config: &LinkConfig, grid: &SimGrid) -> String {
    let f = ConfigFile {
        beta2: config.beta2,
        gamma: config.gamma,
        alpha: config.alpha,
        length_l: config.length_l,
        group_velocity: config.group_velocity,
        n_channels: config.n_channels,
        channel_spacing: config.channel_spacing,
        channel_power: config.channel_power,
        beta1_slope: Some(config.beta1_slope),
        t_window: grid.t_window,
        n_time: grid.n_time,
        n_zsteps: grid.n_zsteps,
    };
    toml::to_string(&f).expect("flat config always serializes")
}

/// Reads and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<(LinkConfig, SimGrid)> {
    let text = std::fs::read_to_string(path)?;
    let (c, g) = parse_config(&text)?;
    validate(c, g)
}

pub fn save_config(path: impl AsRef<Path>, config: &LinkConfig, grid: &SimGrid) -> Result<()> {
    std::fs::write(path, format_config(config, grid))?;
    Ok(())
}
