//! Subcommand implementations.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use xpmcap::capacity::{bound_coefficient, capacity_sweep, CapacityOptions, LogBase, MiSettings, Sweep, SweepVariable};
use xpmcap::config::load_config;
use xpmcap::mi::Constellation;
use xpmcap::pathint::validate_u_distribution;
use xpmcap::propagator::{check_guard_band, physical_energy, propagate_coupled, propagate_surrogate};
use xpmcap::report::{format_f64, Report};
use xpmcap::xpm_stats::{sample_surrogate_potential, sigma_nu_sq, ChannelSum};
use xpmcap::{LinkConfig, PotentialField, SignalGrid, SimGrid};

use crate::manifest::Manifest;

/// Bad command-line input, reported with exit status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Coupled,
    Surrogate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Units {
    Nats,
    Bits,
}

/// Link and grid used when no config file is given.
pub fn builtin_config() -> (LinkConfig, SimGrid) {
    let c = LinkConfig::nominal();
    (c, SimGrid::new(1024.0, 1024, 100, c.length_l))
}

pub fn load(path: Option<&Path>) -> anyhow::Result<(LinkConfig, SimGrid, String)> {
    match path {
        Some(p) => {
            let (c, g) = load_config(p).with_context(|| format!("loading {}", p.display()))?;
            Ok((c, g, p.display().to_string()))
        }
        None => {
            let (c, g) = builtin_config();
            Ok((c, g, "builtin-nominal".into()))
        }
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_report(path: &Path, report: &Report) -> anyhow::Result<()> {
    let mut w = create(path)?;
    report.write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn with_manifest(report: &mut Report, manifest: &Manifest) {
    let mut meta = manifest.entries();
    meta.append(&mut report.metadata);
    report.metadata = meta;
}

fn signal_path(dir: &Path, k: i64) -> PathBuf {
    dir.join(format!("channel_{k}.sig.txt"))
}

fn read_signal(path: &Path, k: i64, grid: &SimGrid) -> anyhow::Result<SignalGrid> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let s = SignalGrid::read_text(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?;
    if s.channel_index() != k {
        bail!("{} holds channel {} instead of {k}", path.display(), s.channel_index());
    }
    if !s.grid().same_lattice(grid) {
        bail!("{} does not use the configured time lattice", path.display());
    }
    Ok(SignalGrid::new(s.into_samples(), *grid, k)?)
}

fn write_signal(path: &Path, s: &SignalGrid, meta: &[(String, String)]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    s.write_text(&mut w, meta)?;
    w.flush()?;
    Ok(())
}

pub struct PropagateArgs {
    pub inputs: PathBuf,
    pub mode: Mode,
    pub potential: Option<PathBuf>,
    pub zero_potential: bool,
}

pub fn propagate(cfg: Option<&Path>, seed: u64, out: &Path, args: &PropagateArgs) -> anyhow::Result<bool> {
    let (config, grid, cfg_name) = load(cfg)?;
    let mode_name = match args.mode {
        Mode::Coupled => "coupled",
        Mode::Surrogate => "surrogate",
    };
    let manifest = Manifest {
        command: format!("propagate --mode {mode_name}"),
        config: cfg_name,
        seed,
        out: out.to_path_buf(),
    };
    let meta = manifest.entries();

    let central = signal_path(&args.inputs, 0);
    if !central.exists() {
        bail!("missing central channel input {}", central.display());
    }
    let indices: Vec<i64> = match args.mode {
        Mode::Coupled => config.channel_indices().collect(),
        Mode::Surrogate => vec![0],
    };
    let mut inputs = Vec::with_capacity(indices.len());
    for &k in &indices {
        let p = signal_path(&args.inputs, k);
        inputs.push(if p.exists() {
            read_signal(&p, k, &grid)?
        } else {
            SignalGrid::zeros(grid, k)
        });
    }
    check_guard_band(&inputs, &config, &grid)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let outputs = match args.mode {
        Mode::Coupled => propagate_coupled(&inputs, &config, &grid)?,
        Mode::Surrogate => {
            let potential = match (&args.potential, args.zero_potential) {
                (Some(p), _) => {
                    let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
                    PotentialField::read_text(BufReader::new(f))?
                }
                (None, true) => PotentialField::zeros(grid),
                (None, false) => sample_surrogate_potential(&grid, sigma_nu_sq(&config, ChannelSum::Harmonic), seed)?,
            };
            let mut w = create(&out.join("potential.txt"))?;
            potential.write_text(&mut w, &meta)?;
            w.flush()?;
            vec![propagate_surrogate(&inputs[0], &potential, &config)?]
        }
    };

    let mut audit = Report::new(&["channel", "energy_in", "energy_out", "physical_energy_out"]);
    for (x, y) in inputs.iter().zip(&outputs) {
        write_signal(&signal_path(out, y.channel_index()), y, &meta)?;
        audit.push_row(vec![
            y.channel_index().to_string(),
            format_f64(x.energy()),
            format_f64(y.energy()),
            format_f64(physical_energy(std::slice::from_ref(y), &config, config.length_l)),
        ]);
    }
    let e_in: f64 = inputs.iter().map(SignalGrid::energy).sum();
    let e_out: f64 = outputs.iter().map(SignalGrid::energy).sum();
    let drift = if e_in > 0.0 { (e_out - e_in) / e_in } else { 0.0 };
    with_manifest(&mut audit, &manifest);
    audit
        .meta("mode", mode_name)
        .meta("total_energy_in", format_f64(e_in))
        .meta("total_energy_out", format_f64(e_out))
        .meta("relative_drift", format_f64(drift));
    write_report(&out.join("energy.txt"), &audit)?;
    manifest.write(out)?;
    println!(
        "propagated {} channel(s) in {mode_name} mode; energy {e_in:.6e} -> {e_out:.6e} (relative drift {drift:.3e})",
        outputs.len()
    );
    Ok(true)
}

pub struct ValidateArgs {
    pub trials: usize,
    pub interval: f64,
    pub tolerance: f64,
    pub level: f64,
}

pub fn validate_u(cfg: Option<&Path>, seed: u64, out: &Path, args: &ValidateArgs) -> anyhow::Result<bool> {
    if args.trials < 100 {
        return Err(UsageError(format!("--trials must be at least 100, got {}", args.trials)).into());
    }
    if !(args.interval >= 0.0) || !args.interval.is_finite() {
        return Err(UsageError(format!("--interval must be finite and non-negative, got {}", args.interval)).into());
    }
    let (config, grid, cfg_name) = load(cfg)?;
    let manifest = Manifest {
        command: "validate-u".into(),
        config: cfg_name,
        seed,
        out: out.to_path_buf(),
    };
    let stats = validate_u_distribution(&config, &grid, args.interval, 0.0, args.trials, seed)?;
    let pass = stats.passes(args.tolerance, args.level);

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut report = stats.to_report();
    with_manifest(&mut report, &manifest);
    report
        .meta("tolerance", format_f64(args.tolerance))
        .meta("level", format_f64(args.level))
        .meta("status", if pass { "pass" } else { "fail" });
    write_report(&out.join("u_statistics.txt"), &report)?;
    manifest.write(out)?;

    println!(
        "variance ratio {:.4} (sample {:.4e}, target {:.4e}); |mean|/SE {:.2}; gaussianity p {:.3}; {}",
        stats.variance_ratio(),
        stats.sample_variance,
        stats.target_variance,
        if stats.mean_standard_error() > 0.0 {
            stats.sample_mean.norm() / stats.mean_standard_error()
        } else {
            0.0
        },
        stats.gaussianity_pvalue,
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

pub struct CapacityArgs {
    pub sweep: Option<String>,
    pub sigma_n: f64,
    pub with_mi: bool,
    pub constellation: String,
    pub mi_samples: usize,
    pub units: Units,
    pub harmonic: bool,
}

/// `RINGSxPHASES`, e.g. `1x4` for QPSK.
pub fn parse_constellation(s: &str) -> Result<(usize, usize), UsageError> {
    let bad = || UsageError(format!("constellation {s:?} must look like RINGSxPHASES, e.g. 1x4"));
    let (r, p) = s.split_once('x').ok_or_else(bad)?;
    let r: usize = r.trim().parse().map_err(|_| bad())?;
    let p: usize = p.trim().parse().map_err(|_| bad())?;
    if r == 0 || p == 0 {
        return Err(bad());
    }
    Ok((r, p))
}

fn read_sweep(spec: &str) -> anyhow::Result<Sweep> {
    let text = match spec.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading sweep file {path}"))?,
        None => spec.to_string(),
    };
    let text: String = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    Sweep::parse(&text).map_err(|e| UsageError(e.to_string()).into())
}

pub fn capacity(cfg: Option<&Path>, seed: u64, out: &Path, args: &CapacityArgs) -> anyhow::Result<bool> {
    let (config, _, cfg_name) = load(cfg)?;
    let manifest = Manifest {
        command: "capacity".into(),
        config: cfg_name,
        seed,
        out: out.to_path_buf(),
    };
    let sweep = match &args.sweep {
        Some(s) => read_sweep(s)?,
        None => Sweep::single(SweepVariable::Power, config.channel_power),
    };
    let mut opts = CapacityOptions::new(args.sigma_n);
    opts.base = match args.units {
        Units::Nats => LogBase::Nats,
        Units::Bits => LogBase::Bits,
    };
    opts.harmonic = args.harmonic;
    if args.with_mi {
        let (rings, phases) = parse_constellation(&args.constellation)?;
        opts.mi = Some(MiSettings {
            constellation: Constellation::rings(rings, phases, 1.0)?,
            n_samples: args.mi_samples,
            seed,
        });
    }

    if config.matches_nominal() {
        let c = bound_coefficient(&config, ChannelSum::Log)?;
        println!("coefficient {c:.4}");
    }
    let result = capacity_sweep(&config, &sweep, &opts)?;

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut report = result.to_report();
    with_manifest(&mut report, &manifest);
    if args.with_mi {
        report.meta("constellation", &args.constellation).meta("mi_samples", args.mi_samples);
    }
    write_report(&out.join("capacity.txt"), &report)?;
    manifest.write(out)?;

    let units = opts.base.name();
    for r in &result.rows {
        let mut line = format!(
            "{} = {:.6e}: bound {:.6e} {units}",
            sweep.variable.name(),
            r.value,
            opts.base.from_nats(r.bound_params)
        );
        if let Some(m) = r.mi {
            line.push_str(&format!(
                ", MI {:.6e} ± {:.2e} {units}",
                opts.base.from_nats(m.estimate),
                opts.base.from_nats(m.stderr)
            ));
        }
        println!("{line}");
    }
    Ok(true)
}
