use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::config::SimGrid;
use crate::error::{Error, Result};
use crate::report::{format_f64, parse_header_line};

const BINARY_MAGIC: &[u8; 8] = b"XPMSIG01";

/// Complex envelope of one WDM channel on a uniform time lattice, units √W.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalGrid {
    samples: Vec<Complex64>,
    grid: SimGrid,
    channel_index: i64,
}

impl SignalGrid {
    pub fn new(samples: Vec<Complex64>, grid: SimGrid, channel_index: i64) -> Result<Self> {
        if samples.len() != grid.n_time() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {}",
                samples.len(),
                grid.n_time()
            )));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::invalid("signal samples must be finite"));
        }
        Ok(Self {
            samples,
            grid,
            channel_index,
        })
    }

    pub fn zeros(grid: SimGrid, channel_index: i64) -> Self {
        Self {
            samples: vec![Complex64::new(0.0, 0.0); grid.n_time()],
            grid,
            channel_index,
        }
    }

    /// Samples `f(t)` on the grid.
    pub fn from_fn(grid: SimGrid, channel_index: i64, f: impl Fn(f64) -> Complex64) -> Self {
        Self {
            samples: grid.times().map(f).collect(),
            grid,
            channel_index,
        }
    }

    /// Discrete unit-area impulse at the lattice point nearest `t0`.
    pub fn delta(grid: SimGrid, channel_index: i64, t0: f64) -> Result<Self> {
        let j = grid
            .index_of(t0)
            .ok_or_else(|| Error::invalid(format!("t = {t0} outside the time window")))?;
        let mut s = Self::zeros(grid, channel_index);
        s.samples[j] = Complex64::new(1.0 / grid.dt(), 0.0);
        Ok(s)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn grid(&self) -> &SimGrid {
        &self.grid
    }

    pub fn channel_index(&self) -> i64 {
        self.channel_index
    }

    /// Time-averaged power E_t|x|², W.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    /// ∫|x|² dt, in W·ps.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() * self.grid.dt()
    }

    /// Standard deviation of the intensity profile |x(t)|² about its centroid.
    pub fn rms_width(&self) -> f64 {
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (t, s) in self.grid.times().zip(&self.samples) {
            let p = s.norm_sqr();
            m0 += p;
            m1 += p * t;
            m2 += p * t * t;
        }
        if m0 == 0.0 {
            return 0.0;
        }
        let mean = m1 / m0;
        (m2 / m0 - mean * mean).max(0.0).sqrt()
    }

    /// RMS angular bandwidth of the spectrum, rad/ps.
    pub fn rms_bandwidth(&self) -> f64 {
        use rustfft::FftPlanner;
        let mut spec = self.samples.clone();
        FftPlanner::new()
            .plan_fft_forward(spec.len())
            .process(&mut spec);
        let omega = self.grid.angular_frequencies();
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (w, s) in omega.iter().zip(&spec) {
            let p = s.norm_sqr();
            m0 += p;
            m1 += p * w;
            m2 += p * w * w;
        }
        if m0 == 0.0 {
            return 0.0;
        }
        let mean = m1 / m0;
        (m2 / m0 - mean * mean).max(0.0).sqrt()
    }

    /// Writes the columnar text form: a `#` metadata header followed by
    /// rows of `t re im`. `extra` entries are appended to the header.
    pub fn write_text<W: Write>(&self, mut w: W, extra: &[(String, String)]) -> Result<()> {
        writeln!(w, "# channel_index = {}", self.channel_index)?;
        writeln!(w, "# n_time = {}", self.grid.n_time())?;
        writeln!(w, "# t_window = {}", format_f64(self.grid.t_window()))?;
        writeln!(w, "# n_zsteps = {}", self.grid.n_zsteps())?;
        writeln!(w, "# length = {}", format_f64(self.grid.length()))?;
        for (k, v) in extra {
            writeln!(w, "# {k} = {v}")?;
        }
        writeln!(w, "t\tre\tim")?;
        for (t, s) in self.grid.times().zip(&self.samples) {
            writeln!(
                w,
                "{}\t{}\t{}",
                format_f64(t),
                format_f64(s.re),
                format_f64(s.im)
            )?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut channel = None;
        let mut n_time = None;
        let mut t_window = None;
        let mut n_zsteps = 1usize;
        let mut length = 1.0;
        let mut samples = Vec::new();
        let bad = |what: &str| Error::Parse(format!("signal file: {what}"));
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some((k, v)) = parse_header_line(line) {
                match k {
                    "channel_index" => channel = Some(v.parse().map_err(|_| bad("channel_index"))?),
                    "n_time" => n_time = Some(v.parse().map_err(|_| bad("n_time"))?),
                    "t_window" => t_window = Some(v.parse().map_err(|_| bad("t_window"))?),
                    "n_zsteps" => n_zsteps = v.parse().map_err(|_| bad("n_zsteps"))?,
                    "length" => length = v.parse().map_err(|_| bad("length"))?,
                    _ => {}
                }
                continue;
            }
            if line.starts_with('#') || line.starts_with('t') {
                continue;
            }
            let cols: Vec<f64> = line
                .split_whitespace()
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("non-numeric row"))?;
            if cols.len() != 3 {
                return Err(bad("expected 3 columns (t re im)"));
            }
            samples.push(Complex64::new(cols[1], cols[2]));
        }
        let grid = SimGrid::new(
            t_window.ok_or_else(|| bad("missing t_window"))?,
            n_time.ok_or_else(|| bad("missing n_time"))?,
            n_zsteps,
            length,
        );
        Self::new(samples, grid, channel.ok_or_else(|| bad("missing channel_index"))?)
    }

    /// Binary dump: 8-byte magic, channel index, n_time, n_zsteps,
    /// t_window, length, then interleaved (re, im) pairs, all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&self.channel_index.to_le_bytes())?;
        w.write_all(&(self.grid.n_time() as u64).to_le_bytes())?;
        w.write_all(&(self.grid.n_zsteps() as u64).to_le_bytes())?;
        w.write_all(&self.grid.t_window().to_le_bytes())?;
        w.write_all(&self.grid.length().to_le_bytes())?;
        for s in &self.samples {
            w.write_all(&s.re.to_le_bytes())?;
            w.write_all(&s.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: std::io::Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Parse("not a signal dump".into()));
        }
        let mut b = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut b)?;
            Ok(b)
        };
        let channel = i64::from_le_bytes(next(&mut r)?);
        let n_time = u64::from_le_bytes(next(&mut r)?) as usize;
        let n_zsteps = u64::from_le_bytes(next(&mut r)?) as usize;
        let t_window = f64::from_le_bytes(next(&mut r)?);
        let length = f64::from_le_bytes(next(&mut r)?);
        let mut samples = Vec::with_capacity(n_time);
        for _ in 0..n_time {
            let re = f64::from_le_bytes(next(&mut r)?);
            let im = f64::from_le_bytes(next(&mut r)?);
            samples.push(Complex64::new(re, im));
        }
        Self::new(samples, SimGrid::new(t_window, n_time, n_zsteps, length), channel)
    }
}
