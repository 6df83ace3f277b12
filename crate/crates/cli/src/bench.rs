//! Benchmark harness: times the two band workloads on each storage
//! backend and cross-checks the results before any number is reported.
//!
//! The scene is a thin spherical shell (radii 0.3 / 0.31 around the domain
//! center) on the unit cube, so the activated band is a realistic sparse
//! set that never touches the domain boundary. Every backend executes the
//! identical run sequence; afterwards the bit-level checksums of both
//! value arrays must agree across backends or the harness refuses to
//! report timings.

use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use nalgebra::vector;

use pkggrid::sdf::SphericalShell;
use pkggrid::{ExecutionPolicy, GridGeometry, LevelSetLayer};

use crate::backends::{DenseBackend, GridBackend, HashBackend, PackageBackend};

/// Dense mirrors above this resolution would need tens of gigabytes.
pub const MAX_RESOLUTION: usize = 512;

#[derive(Debug, Clone, Copy)]
pub struct BenchConfig {
    /// Data points per unit length (so the lattice is `resolution³`).
    pub resolution: usize,
    pub pkg_size: usize,
    /// Timed repetitions per measurement; one warm-up run precedes them.
    pub runs: usize,
    /// Thread count of the parallel rows (0 picks four).
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub workload: &'static str,
    pub backend: &'static str,
    pub threads: usize,
    pub median_s: f64,
    pub points: usize,
    pub overhead_bytes_per_point: f64,
    pub checksum_a: u64,
    pub checksum_b: u64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub points: usize,
}

impl BenchReport {
    /// Median seconds for one backend/workload/thread-count cell.
    pub fn median(&self, backend: &str, workload: &str, threads: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.backend == backend && r.workload == workload && r.threads == threads)
            .map(|r| r.median_s)
    }
}

/// Build the shell band the benchmark runs on.
pub fn shell_layer(resolution: usize, pkg_size: usize) -> Result<LevelSetLayer<3>> {
    ensure!(
        resolution % pkg_size == 0,
        "resolution {resolution} is not a multiple of the package size {pkg_size}"
    );
    let cells = resolution / pkg_size;
    let geometry = GridGeometry::new(
        vector![0.0, 0.0, 0.0],
        1.0 / cells as f64,
        [cells; 3],
        pkg_size,
    )?;
    let mut layer = LevelSetLayer::new(geometry)?;
    let shell = SphericalShell::<3> {
        center: vector![0.5, 0.5, 0.5],
        inner_radius: 0.3,
        outer_radius: 0.31,
    };
    layer
        .initialize(&shell, None, ExecutionPolicy::Sequential)
        .context("building the benchmark band")?;
    Ok(layer)
}

pub fn run(config: &BenchConfig) -> Result<BenchReport> {
    if config.resolution > MAX_RESOLUTION {
        bail!(
            "resolution {} exceeds {MAX_RESOLUTION}: the dense mirror alone would allocate \
             {:.1} GiB",
            config.resolution,
            2.0 * 8.0 * (config.resolution as f64).powi(3) / f64::powi(1024.0, 3)
        );
    }
    let layer = shell_layer(config.resolution, config.pkg_size)?;
    ensure!(
        crate::backends::band_is_detached(&layer),
        "resolution {} is too coarse: the shell band touches the domain boundary, which \
         the flat comparison backends cannot represent",
        config.resolution
    );
    let dense = DenseBackend::new(&layer);
    let hash = HashBackend::new(&layer);
    let package = PackageBackend::new(layer);

    let threads = if config.threads == 0 { 4 } else { config.threads };
    let mut backends: Vec<Box<dyn GridBackend>> =
        vec![Box::new(package), Box::new(dense), Box::new(hash)];
    let points = backends[0].active_points();

    let mut rows = Vec::new();
    let mut checksums = Vec::new();
    for backend in &mut backends {
        ensure!(
            backend.active_points() == points,
            "backend {} disagrees on the active point count",
            backend.name()
        );
        // Self-check: one pass must shift the sum by exactly one per point
        // (up to accumulation error).
        let before = backend.sum();
        backend.add_one(ExecutionPolicy::Sequential);
        let drift = backend.sum() - before - points as f64;
        ensure!(
            drift.abs() <= 1e-9 * points as f64,
            "backend {} failed the add-one sum check (drift {drift:e})",
            backend.name()
        );

        let mut timed = Vec::new();
        for (workload, thread_count) in
            [("add_one", 1), ("add_one", threads), ("laplacian", 1), ("laplacian", threads)]
        {
            let policy = if thread_count == 1 {
                ExecutionPolicy::Sequential
            } else {
                ExecutionPolicy::ParallelHost {
                    threads: thread_count,
                }
            };
            let pass = |b: &mut dyn GridBackend| match workload {
                "add_one" => b.add_one(policy),
                _ => b.laplacian(policy),
            };
            pass(backend.as_mut()); // warm-up
            let mut samples = Vec::with_capacity(config.runs);
            for _ in 0..config.runs {
                let start = Instant::now();
                pass(backend.as_mut());
                samples.push(start.elapsed().as_secs_f64());
            }
            timed.push((workload, thread_count, median(&mut samples)));
        }
        let (checksum_a, checksum_b) = backend.checksums();
        checksums.push((backend.name(), checksum_a, checksum_b));
        for (workload, thread_count, median_s) in timed {
            rows.push(BenchRow {
                workload,
                backend: backend.name(),
                threads: thread_count,
                median_s,
                points,
                overhead_bytes_per_point: backend.overhead_bytes_per_point(),
                checksum_a,
                checksum_b,
            });
        }
    }

    let reference = (checksums[0].1, checksums[0].2);
    for &(name, a, b) in &checksums[1..] {
        ensure!(
            (a, b) == reference,
            "checksum mismatch: {name} produced ({a:016x}, {b:016x}), {} produced \
             ({:016x}, {:016x}) — refusing to report timings",
            checksums[0].0,
            reference.0,
            reference.1
        );
    }
    Ok(BenchReport { rows, points })
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

pub fn render_table(report: &BenchReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("active data points: {}\n", report.points));
    out.push_str(&format!(
        "{:<10} {:<8} {:>7} {:>12} {:>10}\n",
        "workload", "backend", "threads", "median_ms", "ovh_B/pt"
    ));
    for row in &report.rows {
        out.push_str(&format!(
            "{:<10} {:<8} {:>7} {:>12.3} {:>10.2}\n",
            row.workload,
            row.backend,
            row.threads,
            row.median_s * 1e3,
            row.overhead_bytes_per_point
        ));
    }
    out
}

pub fn to_csv(report: &BenchReport) -> String {
    let mut out = String::from(
        "workload,backend,threads,median_s,points,overhead_bytes_per_point,checksum_a,checksum_b\n",
    );
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:016x},{:016x}\n",
            row.workload,
            row.backend,
            row.threads,
            row.median_s,
            row.points,
            row.overhead_bytes_per_point,
            row.checksum_a,
            row.checksum_b
        ));
    }
    out
}
