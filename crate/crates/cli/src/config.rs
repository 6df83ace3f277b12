//! Run configuration: a plain `key = value` text file with `#` comments.
//!
//! Unknown keys are rejected so a typo cannot silently fall back to a
//! default. Command-line flags override the corresponding file keys.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pkggrid::particles::ParticleFormat;
use pkggrid::{ExecutionPolicy, LevelSetParams};

/// Which surface the pipeline is built from.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySpec {
    /// Spherical shell, radii 0.3 / 0.31 around the domain center.
    Shell,
    /// Solid sphere, radius 0.3 around the domain center.
    Sphere,
    /// Triangle mesh loaded from an STL file.
    Stl(PathBuf),
}

/// Parsed and validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    pub domain_lower: [f64; 3],
    pub domain_extent: [f64; 3],
    pub params: LevelSetParams,
    /// Run sign-consistency correction after the build.
    pub correct: bool,
    pub parallel: bool,
    pub threads: usize,
    pub out: PathBuf,
    /// Particle lattice spacing; enables particle output for `relax` and
    /// `export`.
    pub dp: Option<f64>,
    pub relax_steps: usize,
    pub step_scale: f64,
    /// Bounding depth; defaults to half the particle spacing.
    pub surface_offset: Option<f64>,
    pub format: ParticleFormat,
    /// Benchmark lattice resolution (data points per unit length).
    pub resolution: usize,
    /// Timed repetitions per benchmark measurement (after one warm-up).
    pub bench_runs: usize,
    pub window_lower: Option<[f64; 3]>,
    pub window_upper: Option<[f64; 3]>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: GeometrySpec::Shell,
            domain_lower: [0.0; 3],
            domain_extent: [1.0; 3],
            params: LevelSetParams::default(),
            correct: false,
            parallel: false,
            threads: 0,
            out: PathBuf::from("."),
            dp: None,
            relax_steps: 100,
            step_scale: 0.2,
            surface_offset: None,
            format: ParticleFormat::Csv,
            resolution: 256,
            bench_runs: 5,
            window_lower: None,
            window_upper: None,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (number, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected `key = value`", number + 1))?;
            let (key, value) = (key.trim(), value.trim());
            cfg.apply(key, value)
                .with_context(|| format!("line {}: key `{key}`", number + 1))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "geometry" => {
                self.geometry = match value {
                    "analytic:shell" => GeometrySpec::Shell,
                    "analytic:sphere" => GeometrySpec::Sphere,
                    path => GeometrySpec::Stl(PathBuf::from(path)),
                }
            }
            "domain_lower" => self.domain_lower = triple(value)?,
            "domain_extent" => self.domain_extent = triple(value)?,
            "coarsest_spacing" => self.params.coarsest_spacing = number(value)?,
            "target_spacing" => self.params.target_spacing = number(value)?,
            "trust_band" => self.params.trust_band = number(value)?,
            "kernel_h_ratio" => self.params.kernel_h_ratio = number(value)?,
            "clean_threshold" => self.params.clean_threshold = number(value)?,
            "reinit_steps" => self.params.reinit_steps = count(value)?,
            "cfl" => self.params.cfl = number(value)?,
            "pkg_size" => self.params.pkg_size = count(value)?,
            "correct" => self.correct = flag(value)?,
            "policy" => {
                self.parallel = match value {
                    "seq" => false,
                    "par" => true,
                    other => bail!("unknown policy `{other}` (expected seq|par)"),
                }
            }
            "threads" => self.threads = count(value)?,
            "out" => self.out = PathBuf::from(value),
            "dp" => self.dp = Some(number(value)?),
            "relax_steps" => self.relax_steps = count(value)?,
            "step_scale" => self.step_scale = number(value)?,
            "surface_offset" => self.surface_offset = Some(number(value)?),
            "format" => self.format = ParticleFormat::from_tag(value)?,
            "resolution" => self.resolution = count(value)?,
            "bench_runs" => self.bench_runs = count(value)?,
            "window_lower" => self.window_lower = Some(triple(value)?),
            "window_upper" => self.window_upper = Some(triple(value)?),
            other => bail!("unknown configuration key `{other}`"),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let p = &self.params;
        for (name, v) in [
            ("coarsest_spacing", p.coarsest_spacing),
            ("target_spacing", p.target_spacing),
            ("trust_band", p.trust_band),
            ("kernel_h_ratio", p.kernel_h_ratio),
            ("cfl", p.cfl),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                bail!("{name} must be positive, got {v}");
            }
        }
        if !(self.params.clean_threshold > 0.0 && self.params.clean_threshold < 1.0) {
            bail!("clean_threshold must lie in (0, 1)");
        }
        if self.params.pkg_size < 2 {
            bail!("pkg_size must be at least 2");
        }
        for axis in 0..3 {
            if !(self.domain_extent[axis] > 0.0) {
                bail!("domain_extent must be positive along axis {axis}");
            }
        }
        if let Some(dp) = self.dp {
            if !(dp > 0.0) || !dp.is_finite() {
                bail!("dp must be positive, got {dp}");
            }
        }
        if let Some(offset) = self.surface_offset {
            if !(offset >= 0.0) || !offset.is_finite() {
                bail!("surface_offset must be non-negative, got {offset}");
            }
        }
        if !(self.step_scale > 0.0 && self.step_scale <= 1.0) {
            bail!("step_scale must lie in (0, 1]");
        }
        if self.resolution == 0 || self.resolution % self.params.pkg_size != 0 {
            bail!(
                "resolution must be a positive multiple of pkg_size ({})",
                self.params.pkg_size
            );
        }
        if self.bench_runs == 0 {
            bail!("bench_runs must be at least 1");
        }
        Ok(())
    }

    /// Effective execution policy after flag overrides.
    pub fn policy(&self) -> ExecutionPolicy {
        if self.parallel {
            ExecutionPolicy::ParallelHost {
                threads: self.threads,
            }
        } else {
            ExecutionPolicy::Sequential
        }
    }
}

fn number(value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .with_context(|| format!("`{value}` is not a number"))
}

fn count(value: &str) -> Result<usize> {
    value
        .parse::<usize>()
        .with_context(|| format!("`{value}` is not a count"))
}

fn flag(value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => bail!("`{other}` is not a flag (expected true|false)"),
    }
}

fn triple(value: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        bail!("`{value}` is not a comma-separated triple");
    }
    let mut out = [0.0; 3];
    for (k, part) in parts.iter().enumerate() {
        out[k] = number(part)?;
    }
    Ok(out)
}
