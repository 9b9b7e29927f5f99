//! Command-line driver: configuration, subcommand dispatch and CSV output.

pub mod config;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use darcy_uq::exec::{with_workers, Execution};
use darcy_uq::harness::{run_cost_comparison, run_fe_convergence, run_moment_decay, ConvergenceConfig, CostConfig};
use darcy_uq::mesh::Mesh;
use darcy_uq::mfem::{solve_hybridized, MixedSolution, ProblemData};
use darcy_uq::mlmc::{mc_estimate, mlmc_run, FlowHierarchy, MlmcConfig};
use darcy_uq::qoi::{effective_permeability, travel_time, QoiKind};
use darcy_uq::randfield::{FieldModel, FieldRealization, SeedId};

use config::{ConfigError, RawConfig, RunConfig, OUTPUT_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_COMPUTE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "darcy-uq", version, about = "Mixed finite element Darcy flow with random permeability")]
pub struct Cli {
    /// INI run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration entry, `section.key=value`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads, or `auto`.
    #[arg(long, global = true)]
    pub workers: Option<String>,
    /// Output directory (default: $DARCY_UQ_OUT, then ./darcy-uq-out).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Replace the random field by a ≡ 1.
    #[arg(long, global = true)]
    pub unit_field: bool,
    /// Mesh subdivisions per side for single-mesh commands.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Sample index for single-sample commands.
    #[arg(long, global = true)]
    pub sample: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Draw one field realization and write its vertex log-values.
    SampleField,
    /// Solve one realization and write fluxes, pressures and k_eff.
    Solve,
    /// Evaluate the configured quantity of interest for one realization.
    Qoi,
    /// Standard Monte Carlo on one mesh.
    Mc,
    /// Adaptive multilevel Monte Carlo.
    Mlmc,
    /// Finite element error rates against a reference mesh.
    Convergence,
    /// Decay of |E[Q_h - Q_ref]| and V[Q_h - Q_2h].
    MomentDecay,
    /// Cost of MLMC versus standard MC per finest mesh.
    CostCompare,
    /// Particle track for one realization.
    Track,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_INVALID,
            CliError::Compute(_) => EXIT_COMPUTE,
        }
    }
}

/// Builds the validated configuration from the file, flags and environment.
pub fn resolve_config(cli: &Cli, env_output: Option<&str>) -> Result<RunConfig, ConfigError> {
    let mut raw = match &cli.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    for o in &cli.overrides {
        raw.apply_override(o)?;
    }
    if let Some(seed) = cli.seed {
        raw.set("run.seed", &seed.to_string())?;
    }
    if let Some(w) = &cli.workers {
        raw.set("run.workers", w)?;
    }
    if let Some(out) = &cli.output {
        raw.set("run.output", &out.to_string_lossy())?;
    }
    if cli.unit_field {
        raw.set("field.sampler", "constant")?;
        raw.set("field.value", "1")?;
    }
    if let Some(n) = cli.n {
        raw.set("mesh.n", &n.to_string())?;
    }
    if let Some(s) = cli.sample {
        raw.set("run.sample", &s.to_string())?;
    }
    RunConfig::from_raw(&raw, env_output)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let env_output = std::env::var(OUTPUT_ENV).ok();
    let cfg = match resolve_config(&cli, env_output.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    match dispatch(cli.command, &cfg) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs `command` inside the configured worker pool. Returns a one-line summary.
pub fn dispatch(command: Command, cfg: &RunConfig) -> Result<String, CliError> {
    with_workers(cfg.workers, || run_command(command, cfg)).map_err(|e| match e {
        CliError::Compute(m) if !m.contains("seed=") => CliError::Compute(format!("{m} (run seed={})", cfg.seed)),
        other => other,
    })
}

fn compute(context: impl std::fmt::Display) -> impl FnOnce(darcy_uq::Error) -> CliError {
    move |e| CliError::Compute(format!("{context}: {e}"))
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Compute(format!("cannot write {}: {e}", path.display()))
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(io_error(&path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(io_error(&path))?;
    Ok(path)
}

struct Single {
    mesh: Mesh,
    field: FieldRealization,
    seed: SeedId,
}

fn single_sample(cfg: &RunConfig) -> Result<Single, CliError> {
    let seed = SeedId::new(cfg.seed, 0, cfg.sample);
    let field_and_mesh = || -> darcy_uq::Result<(Mesh, FieldRealization)> {
        let mesh = Mesh::uniform(cfg.mesh.n)?;
        let field = cfg.field.model()?.prepare(&mesh)?.sample(&mesh, seed)?;
        Ok((mesh, field))
    };
    let (mesh, field) = field_and_mesh().map_err(compute(format!("sample {seed} failed")))?;
    Ok(Single { mesh, field, seed })
}

fn solve_single(s: &Single) -> Result<MixedSolution, CliError> {
    solve_hybridized(&s.mesh, &s.field, &ProblemData::flow_cell()).map_err(compute(format!("sample {} failed", s.seed)))
}

fn model(cfg: &RunConfig) -> Result<FieldModel, CliError> {
    cfg.field.model().map_err(compute(format!("field setup (seed={}) failed", cfg.seed)))
}

fn convergence_config(cfg: &RunConfig, field: FieldModel) -> ConvergenceConfig {
    let mut c = ConvergenceConfig::new(field, cfg.seed);
    c.n0 = cfg.mesh.n0;
    c.levels = cfg.mesh.levels;
    c.n_ref = cfg.mesh.n_ref;
    c.samples = cfg.harness.samples;
    c.qois = cfg.harness.qois.clone();
    c.bootstrap = cfg.harness.bootstrap;
    c.exclude_coarsest = cfg.harness.exclude_coarsest;
    c.exec = Execution::Parallel;
    c.timings = cfg.harness.timings;
    c
}

fn run_command(command: Command, cfg: &RunConfig) -> Result<String, CliError> {
    let out = &cfg.output;
    let tag = format!("{}_{}", cfg.seed, cfg.sample);
    match command {
        Command::SampleField => {
            let s = single_sample(cfg)?;
            let path = write_file(out, &format!("field_{tag}.csv"), |w| s.field.write_csv(&s.mesh, w))?;
            Ok(format!("field {} min_a={} max_a={} -> {}", s.seed, s.field.min_value(), s.field.max_value(), path.display()))
        }
        Command::Solve => {
            let s = single_sample(cfg)?;
            let sol = solve_single(&s)?;
            let k = effective_permeability(&s.mesh, &sol);
            let path = write_file(out, &format!("solve_{tag}.csv"), |w| {
                writeln!(w, "# summary")?;
                writeln!(w, "n,seed,sample,k_eff,iterations,residual")?;
                writeln!(w, "{},{},{},{k},{},{:e}", s.mesh.n(), cfg.seed, cfg.sample, sol.iterations, sol.residual)?;
                sol.write_csv(w)
            })?;
            Ok(format!("k_eff={k} -> {}", path.display()))
        }
        Command::Qoi => {
            let s = single_sample(cfg)?;
            let sol = solve_single(&s)?;
            let value = cfg.qoi.evaluate(&s.mesh, &sol).map_err(compute(format!("sample {} failed", s.seed)))?;
            let path = write_file(out, &format!("qoi_{}_{tag}.csv", cfg.qoi.name()), |w| {
                writeln!(w, "qoi,n,seed,sample,value")?;
                writeln!(w, "{},{},{},{},{value}", cfg.qoi, s.mesh.n(), cfg.seed, cfg.sample)
            })?;
            Ok(format!("{}={value} -> {}", cfg.qoi, path.display()))
        }
        Command::Track => {
            // Other quantities of interest fall back to the default release point.
            let x0 = match cfg.qoi {
                QoiKind::TravelTime { x0 } => x0,
                _ => [0.0, 0.5],
            };
            let s = single_sample(cfg)?;
            let sol = solve_single(&s)?;
            let track = travel_time(&s.mesh, &sol, x0).map_err(compute(format!("sample {} failed", s.seed)))?;
            let path = write_file(out, &format!("track_{tag}.csv"), |w| track.write_csv(w))?;
            Ok(format!(
                "travel_time={} termination={} steps={} -> {}",
                track.travel_time,
                track.termination.as_str(),
                track.path.len(),
                path.display()
            ))
        }
        Command::Mc => {
            let hierarchy = FlowHierarchy::new(cfg.mesh.n, 0, model(cfg)?, cfg.qoi).map_err(compute("setup"))?;
            let est = mc_estimate(|s| hierarchy.single_sample(0, s), cfg.mlmc.samples, cfg.seed, 0, Execution::Parallel)
                .map_err(compute(format!("Monte Carlo (seed={}) failed", cfg.seed)))?;
            let path = write_file(out, &format!("mc_{}_{}.csv", cfg.qoi.name(), cfg.seed), |w| {
                writeln!(w, "qoi,n,N,mean,variance,standard_error,cost_units")?;
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    cfg.qoi,
                    cfg.mesh.n,
                    est.n,
                    est.mean,
                    est.variance,
                    est.standard_error(),
                    est.cost
                )
            })?;
            Ok(format!("mean={} standard_error={} -> {}", est.mean, est.standard_error(), path.display()))
        }
        Command::Mlmc => {
            let hierarchy = FlowHierarchy::new(cfg.mesh.n0, cfg.mlmc.max_level, model(cfg)?, cfg.qoi)
                .map_err(compute("setup"))?
                .with_timings(cfg.harness.timings);
            let mut ml = MlmcConfig::new(cfg.mlmc.eps, cfg.seed);
            ml.pilot = cfg.mlmc.pilot;
            ml.max_level = cfg.mlmc.max_level;
            ml.fixed_levels = cfg.mlmc.fixed_levels;
            let result = mlmc_run(&hierarchy, &ml).map_err(compute(format!("MLMC (seed={}) failed", cfg.seed)))?;
            let path = write_file(out, &format!("mlmc_{}_{}.csv", cfg.qoi.name(), cfg.seed), |w| {
                result.write_levels_csv(&mut *w)?;
                result.write_summary_csv(&cfg.qoi.to_string(), w)
            })?;
            Ok(format!(
                "estimate={} sampling_error={} L={} bias_converged={} -> {}",
                result.estimate,
                result.sampling_error,
                result.finest_level(),
                result.bias_converged,
                path.display()
            ))
        }
        Command::Convergence | Command::MomentDecay => {
            let c = convergence_config(cfg, model(cfg)?);
            c.validate().map_err(|e| ConfigError::Inconsistent(e.to_string()))?;
            let report = if command == Command::Convergence { run_fe_convergence(&c) } else { run_moment_decay(&c) }
                .map_err(compute(format!("experiment (seed={}) failed", cfg.seed)))?;
            let path = report.save(out).map_err(compute("saving report"))?;
            let fits: Vec<String> = report
                .fits
                .iter()
                .map(|f| format!("{}={}", f.series, f.slope.map_or("undefined".to_string(), |s| format!("{s:.3}"))))
                .collect();
            Ok(format!("{} -> {}", fits.join(" "), path.display()))
        }
        Command::CostCompare => {
            let mut c = CostConfig::new(model(cfg)?, cfg.qoi, cfg.mlmc.eps, cfg.seed);
            c.n0 = cfg.mesh.n0;
            c.finest_levels = cfg.harness.finest_levels.clone();
            c.pilot = cfg.mlmc.pilot;
            c.mc_seed = cfg.harness.mc_seed;
            c.timings = cfg.harness.timings;
            let report = run_cost_comparison(&c).map_err(compute(format!("cost comparison (seed={}) failed", cfg.seed)))?;
            let path = report.save(out).map_err(compute("saving report"))?;
            let ratios: Vec<String> = report.rows.iter().map(|r| format!("n={}:{:.3}", r.n, r.ratio())).collect();
            Ok(format!("mlmc/mc cost {} -> {}", ratios.join(" "), path.display()))
        }
    }
}
