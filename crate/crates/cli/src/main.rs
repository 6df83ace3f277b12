//! Command-line driver for the package-grid level-set pipeline.
//!
//! `build` runs geometry → multi-resolution level set and saves it as an
//! artifact; `clean` and `relax` continue from that artifact; `export`
//! writes VTK files for inspection; `bench` times the band workloads
//! across storage backends. Exit code 1 flags a pipeline failure, 2 a
//! usage or input problem.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use nalgebra::vector;

use pkggrid::levelset::{
    clean_small_features, compute_gradient, compute_kernel_integrals, correct_sign_consistency,
    SignScope,
};
use pkggrid::particles::{
    export_particles, generate_lattice_particles, import_particles, relax_particles,
};
use pkggrid::sdf::{SignedDistance, Sphere, SphericalShell};
use pkggrid::{
    stencil, ExecutionPolicy, MultiResolutionLevelSet, ParticleFormat, ParticleSet,
    RelaxationParams,
};

use pkggrid_cli::config::{GeometrySpec, RunConfig};
use pkggrid_cli::{artifact, bench, vtk};

#[derive(Parser)]
#[command(name = "pkggrid", version, about = "Sparse package-grid level-set pipeline")]
struct Cli {
    /// Run configuration file (`key = value` lines).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured execution policy.
    #[arg(long, global = true, value_parser = ["seq", "par"])]
    policy: Option<String>,
    /// Override the configured thread count (0 = global pool).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the configured benchmark resolution.
    #[arg(long, global = true)]
    resolution: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the multi-resolution level set and save it as an artifact.
    Build,
    /// Carve sub-resolution features out of a saved artifact's finest layer.
    Clean,
    /// Seed and relax body-fitted particles on a saved artifact.
    Relax,
    /// Write a VTK window of the level set, plus the particle cloud if
    /// `dp` is configured.
    Export,
    /// Time the band workloads across storage backends.
    Bench,
}

/// Failures split by exit code: pipeline errors (1) versus usage and
/// input errors (2). Clap's own exit code for malformed command lines is
/// also 2.
enum CliError {
    Pipeline(anyhow::Error),
    Usage(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Pipeline(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Pipeline(e.into())
    }
}

impl From<pkggrid::LevelSetError> for CliError {
    fn from(e: pkggrid::LevelSetError) -> Self {
        CliError::Pipeline(e.into())
    }
}

impl From<pkggrid::ParticleError> for CliError {
    fn from(e: pkggrid::ParticleError) -> Self {
        CliError::Pipeline(e.into())
    }
}

fn usage(e: anyhow::Error) -> CliError {
    CliError::Usage(e)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Pipeline(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path).map_err(usage)?,
        None if matches!(cli.command, Command::Bench) => RunConfig::default(),
        None => return Err(usage(anyhow!("this command needs --config"))),
    };
    if let Some(policy) = &cli.policy {
        cfg.parallel = policy == "par";
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(resolution) = cli.resolution {
        cfg.resolution = resolution;
    }
    match cli.command {
        Command::Build => cmd_build(&cfg),
        Command::Clean => cmd_clean(&cfg),
        Command::Relax => cmd_relax(&cfg),
        Command::Export => cmd_export(&cfg),
        Command::Bench => cmd_bench(&cfg),
    }
}

fn artifact_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("levelset.pkggrid")
}

fn particle_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join(match cfg.format {
        ParticleFormat::Csv => "particles.csv",
        ParticleFormat::Ply => "particles.ply",
    })
}

fn load_artifact(
    path: &Path,
    policy: ExecutionPolicy,
) -> Result<MultiResolutionLevelSet<3>, CliError> {
    if !path.exists() {
        return Err(usage(anyhow!(
            "artifact {} not found — run `build` first",
            path.display()
        )));
    }
    artifact::load(path, policy).map_err(CliError::Pipeline)
}

fn make_geometry(cfg: &RunConfig) -> Result<Box<dyn SignedDistance<3>>, CliError> {
    let center = vector![
        cfg.domain_lower[0] + 0.5 * cfg.domain_extent[0],
        cfg.domain_lower[1] + 0.5 * cfg.domain_extent[1],
        cfg.domain_lower[2] + 0.5 * cfg.domain_extent[2]
    ];
    Ok(match &cfg.geometry {
        GeometrySpec::Shell => Box::new(SphericalShell::<3> {
            center,
            inner_radius: 0.3,
            outer_radius: 0.31,
        }),
        GeometrySpec::Sphere => Box::new(Sphere::<3> {
            center,
            radius: 0.3,
        }),
        GeometrySpec::Stl(path) => {
            if !path.exists() {
                return Err(usage(anyhow!("geometry file {} not found", path.display())));
            }
            let mesh = pkggrid::trimesh::stl::load(path)
                .with_context(|| format!("loading {}", path.display()))
                .map_err(usage)?;
            println!(
                "loaded {}: {} vertices, {} triangles",
                path.display(),
                mesh.vertex_count(),
                mesh.triangle_count()
            );
            Box::new(mesh)
        }
    })
}

fn cmd_build(cfg: &RunConfig) -> Result<(), CliError> {
    let geometry = make_geometry(cfg)?;
    let policy = cfg.policy();
    let start = Instant::now();
    let mut set = MultiResolutionLevelSet::initialize(
        geometry.as_ref(),
        vector![cfg.domain_lower[0], cfg.domain_lower[1], cfg.domain_lower[2]],
        vector![cfg.domain_extent[0], cfg.domain_extent[1], cfg.domain_extent[2]],
        &cfg.params,
        policy,
    )?;
    println!(
        "built {} layer(s) in {:.2}s",
        set.layers.len(),
        start.elapsed().as_secs_f64()
    );
    for (index, layer) in set.layers.iter().enumerate() {
        println!(
            "layer {index}: spacing {:.6}, {} activated cells, {} data points",
            layer.data_spacing(),
            layer.mesh.activated_packages(),
            layer.mesh.activated_packages() * layer.mesh.block_len()
        );
    }
    if cfg.correct {
        for index in 0..set.layers.len() {
            let scope = if index == 0 {
                SignScope::AllCells
            } else {
                SignScope::ActivatedBand
            };
            let trust = cfg.params.trust_band * set.layers[index].data_spacing();
            let report = correct_sign_consistency(&mut set.layers[index], trust, scope, policy)?;
            println!(
                "layer {index}: sign correction flipped {} points ({} trusted seeds, \
                 {} cell sweeps, {} point sweeps, {} unreached)",
                report.flipped_points,
                report.trusted_points,
                report.cell_sweeps,
                report.point_sweeps,
                report.unreached_points
            );
        }
    }
    std::fs::create_dir_all(&cfg.out)?;
    let path = artifact_path(cfg);
    artifact::save(&set, &path)?;
    println!("saved {}", path.display());
    Ok(())
}

fn cmd_clean(cfg: &RunConfig) -> Result<(), CliError> {
    let policy = cfg.policy();
    let path = artifact_path(cfg);
    let mut set = load_artifact(&path, policy)?;
    let layer = set.finest_mut();
    let kernel = layer.kernel(cfg.params.kernel_h_ratio);
    let rounds = clean_small_features(
        layer,
        &kernel,
        cfg.params.clean_threshold,
        cfg.params.reinit_steps,
        cfg.params.cfl,
        policy,
    );
    println!(
        "cleaning carved {:?} near-interface points over {} round(s)",
        rounds,
        rounds.len()
    );
    artifact::save(&set, &path)?;
    println!("saved {}", path.display());
    Ok(())
}

fn cmd_relax(cfg: &RunConfig) -> Result<(), CliError> {
    let dp = cfg
        .dp
        .ok_or_else(|| usage(anyhow!("relax needs `dp` in the config")))?;
    let policy = cfg.policy();
    let mut set = load_artifact(&artifact_path(cfg), policy)?;
    let layer = set.finest_mut();
    compute_gradient(layer, policy);
    let kernel = layer.kernel(cfg.params.kernel_h_ratio);
    compute_kernel_integrals(layer, &kernel, policy);

    let seeded = generate_lattice_particles(layer, dp);
    println!("seeded {} particles at spacing {dp}", seeded.len());
    let mut params = RelaxationParams::for_spacing(dp);
    params.steps = cfg.relax_steps;
    params.step_scale = cfg.step_scale;
    if let Some(offset) = cfg.surface_offset {
        params.surface_offset = offset;
    }
    let relaxed = if params.steps > 0 {
        let start = Instant::now();
        let relaxed = relax_particles(layer, &seeded, &params, policy);
        println!(
            "relaxed for {} steps in {:.2}s",
            params.steps,
            start.elapsed().as_secs_f64()
        );
        relaxed
    } else {
        seeded
    };

    let phi = layer.phi.read();
    let violations = relaxed
        .positions
        .iter()
        .filter(|&&p| !matches!(stencil::probe(&layer.mesh, &phi, p), Ok(v) if v <= 0.0))
        .count();
    drop(phi);
    if violations > 0 {
        return Err(CliError::Pipeline(anyhow!(
            "{violations} of {} particles ended outside the body",
            relaxed.len()
        )));
    }
    println!("all {} particles are contained", relaxed.len());

    std::fs::create_dir_all(&cfg.out)?;
    let path = particle_path(cfg);
    std::fs::write(&path, export_particles(&relaxed, cfg.format))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_export(cfg: &RunConfig) -> Result<(), CliError> {
    let policy = cfg.policy();
    let set = load_artifact(&artifact_path(cfg), policy)?;
    let layer = set.finest();
    let (window, values) =
        vtk::sample_phi(layer, cfg.window_lower, cfg.window_upper).map_err(usage)?;
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("phi.vtk");
    std::fs::write(&path, vtk::structured_points(&window, "phi", &values))
        .with_context(|| format!("writing {}", path.display()))?;
    println!(
        "wrote {} ({}x{}x{} samples)",
        path.display(),
        window.dims[0],
        window.dims[1],
        window.dims[2]
    );

    if let Some(dp) = cfg.dp {
        let source = particle_path(cfg);
        if !source.exists() {
            return Err(usage(anyhow!(
                "no particle file at {} — run `relax` first or drop `dp`",
                source.display()
            )));
        }
        let bytes = std::fs::read(&source)?;
        let particles: ParticleSet<3> = import_particles(&bytes, cfg.format, dp)?;
        let cloud = cfg.out.join("particles.vtk");
        std::fs::write(&cloud, vtk::point_cloud(&particles.positions))
            .with_context(|| format!("writing {}", cloud.display()))?;
        println!("wrote {} ({} particles)", cloud.display(), particles.len());
    }
    Ok(())
}

fn cmd_bench(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.resolution == 0 || cfg.resolution % cfg.params.pkg_size != 0 {
        return Err(usage(anyhow!(
            "resolution {} must be a positive multiple of pkg_size {}",
            cfg.resolution,
            cfg.params.pkg_size
        )));
    }
    if cfg.resolution > bench::MAX_RESOLUTION {
        return Err(usage(anyhow!(
            "resolution {} exceeds the dense-mirror limit {}",
            cfg.resolution,
            bench::MAX_RESOLUTION
        )));
    }
    let report = bench::run(&bench::BenchConfig {
        resolution: cfg.resolution,
        pkg_size: cfg.params.pkg_size,
        runs: cfg.bench_runs,
        threads: cfg.threads,
    })
    .map_err(CliError::Pipeline)?;
    print!("{}", bench::render_table(&report));
    let threads = if cfg.threads == 0 { 4 } else { cfg.threads };
    if let (Some(one), Some(many)) = (
        report.median("package", "laplacian", 1),
        report.median("package", "laplacian", threads),
    ) {
        println!(
            "package laplacian speedup at {threads} threads: {:.2}x",
            one / many
        );
    }
    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("bench.csv");
    std::fs::write(&path, bench::to_csv(&report))
        .with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}
