//! Command-line front end: `kernel-fit`, `tensor`, `optimize`, `geometry-gen`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::Matrix3;
use serde::Serialize;

use crate::config::RunConfig;
use crate::deformation::DeformationBasis;
use crate::error::{Error, Result};
use crate::geometry::{GeometryFile, PolynomialSurface};
use crate::homogenization::{effective_tensor, shape_functional};
use crate::kernel::{fit_correction, read_coefficients, write_coefficients, KernelCoefficients, PeriodicKernel};
use crate::optimizer::{run, OptimizationState};
use crate::output::{export_vtk, round_json, trace_data, ArtifactWriter, ConvergenceLog};
use crate::solver::solve_n2d;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "SCAFFOLD_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_OPTIMIZATION: i32 = 2;
pub const EXIT_MISSING_KERNEL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "scaffold", version, about = "Periodic cavity shape optimization for a target effective tensor")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit the periodic kernel correction and write the coefficient cache.
    KernelFit {
        #[arg(long, default_value_t = 12)]
        degree: usize,
        #[arg(long, default_value_t = crate::kernel::DEFAULT_FIT_SAMPLES)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the cell problem once and print the effective tensor as JSON.
    Tensor {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        fit_kernel_if_missing: bool,
    },
    /// Run the shape optimization and write VTK, CSV and a JSON summary.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.directory`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        fit_kernel_if_missing: bool,
    },
    /// Write the configured initial shape as a geometry file.
    GeometryGen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also export the surface as VTK.
        #[arg(long)]
        vtk: Option<PathBuf>,
    },
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::MissingKernelCache(_) => EXIT_MISSING_KERNEL,
        Error::LineSearchFailure { .. }
        | Error::StepRejected(_)
        | Error::NonFinite
        | Error::Solver(_)
        | Error::Assembly { .. }
        | Error::NumericalBreakdown { .. } => EXIT_OPTIMIZATION,
        _ => EXIT_INPUT,
    }
}

/// Reads the kernel cache, or fits and stores it when allowed.
pub fn load_kernel(cfg: &RunConfig, fit_if_missing: bool) -> Result<PeriodicKernel> {
    let path = &cfg.kernel.cache;
    let coeffs = match read_coefficients(path) {
        Err(Error::MissingKernelCache(_)) if fit_if_missing => {
            log::info!("fitting kernel N = {} into {}", cfg.kernel.degree, path.display());
            let c = fit_correction(cfg.kernel.degree, cfg.kernel.samples)?;
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            write_coefficients(path, &c)?;
            c
        }
        other => other?,
    };
    if coeffs.degree != cfg.kernel.degree {
        return Err(Error::Schema(format!(
            "{} holds degree {} but the config asks for {}",
            path.display(),
            coeffs.degree,
            cfg.kernel.degree
        )));
    }
    Ok(PeriodicKernel::new(coeffs))
}

pub fn cmd_kernel_fit(degree: usize, samples: usize, out: &Path) -> Result<KernelCoefficients> {
    let c = fit_correction(degree, samples)?;
    write_coefficients(out, &c)?;
    Ok(c)
}

#[derive(Clone, Debug, Serialize)]
pub struct TensorReport {
    pub tensor: [[f64; 3]; 3],
    pub functional: f64,
    pub cavity_volume: f64,
    pub elements: usize,
    pub unknowns: usize,
    pub condition: f64,
    pub residual: f64,
}

fn rows(a: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [a[(i, 0)], a[(i, 1)], a[(i, 2)]])
}

pub fn cmd_tensor(cfg: &RunConfig, fit_if_missing: bool) -> Result<TensorReport> {
    let surface = cfg.reference_surface()?;
    let kernel = load_kernel(cfg, fit_if_missing)?;
    let (dir, neu) = crate::bem::build_spaces(&surface, cfg.bem.degree)?;
    let ops = crate::bem::assemble_operators(&surface, (&dir, &neu), &kernel, &cfg.bem.quadrature)?;
    let sol = solve_n2d(&ops, &dir)?;
    let a = effective_tensor(&surface, &sol)?;
    Ok(TensorReport {
        tensor: rows(&a),
        functional: shape_functional(&a, &cfg.target_tensor()?),
        cavity_volume: surface.cavity_volume()?,
        elements: surface.element_count(),
        unknowns: dir.dof_count(),
        condition: sol.condition,
        residual: sol.residual,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizeSummary {
    pub converged: bool,
    /// Accepted steps.
    pub iterations: usize,
    pub functional: f64,
    pub tensor: [[f64; 3]; 3],
    pub y: Vec<f64>,
    pub evaluations: usize,
    pub final_geometry: Option<PathBuf>,
    pub error: Option<String>,
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const FINAL_GEOMETRY_FILE: &str = "final_geometry.json";

/// Runs the optimization with artifacts in `out_dir`; the summary is written
/// even when the run fails.
pub fn cmd_optimize(cfg: &RunConfig, out_dir: &Path, fit_if_missing: bool) -> Result<(OptimizeSummary, Option<OptimizationState>)> {
    let reference = cfg.reference_surface()?;
    let kernel = load_kernel(cfg, fit_if_missing)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let basis = DeformationBasis::build(&reference, &cfg.basis)?;
    let mut writer = ArtifactWriter {
        log: Some(ConvergenceLog::create(&out_dir.join(&cfg.output.csv))?),
        vtk_dir: cfg.output.vtk.then_some(out_dir),
        per_edge: cfg.output.vtk_samples,
        reference: &reference,
    };
    let result = run(&cfg.optimization_config(), &reference, &basis, &kernel, &mut [&mut writer]);
    let summary = match &result {
        Ok(state) => {
            let geo = out_dir.join(FINAL_GEOMETRY_FILE);
            GeometryFile::from_surface(&state.surface).write(&geo)?;
            OptimizeSummary {
                converged: state.converged,
                iterations: state.history.len().saturating_sub(1),
                functional: state.j,
                tensor: rows(&state.tensor),
                y: state.y.iter().copied().collect(),
                evaluations: state.evaluations,
                final_geometry: Some(geo),
                error: None,
            }
        }
        Err(e) => OptimizeSummary {
            converged: false,
            iterations: 0,
            functional: f64::NAN,
            tensor: [[f64::NAN; 3]; 3],
            y: Vec::new(),
            evaluations: 0,
            final_geometry: None,
            error: Some(e.to_string()),
        },
    };
    write_json(&out_dir.join(SUMMARY_FILE), &summary)?;
    match result {
        Ok(state) => Ok((summary, Some(state))),
        Err(e) => Err(e),
    }
}

pub fn cmd_geometry_gen(cfg: &RunConfig, out: &Path, vtk: Option<&Path>) -> Result<PolynomialSurface> {
    let surface = cfg.reference_surface()?;
    GeometryFile::from_surface(&surface).write(out)?;
    if let Some(path) = vtk {
        export_vtk(&surface, cfg.output.vtk_samples, &[], path)?;
    }
    Ok(surface)
}

/// Traces of the reference configuration as VTK, for inspection.
pub fn export_solution_vtk(cfg: &RunConfig, kernel: &PeriodicKernel, path: &Path) -> Result<()> {
    let surface = cfg.reference_surface()?;
    let (dir, neu) = crate::bem::build_spaces(&surface, cfg.bem.degree)?;
    let ops = crate::bem::assemble_operators(&surface, (&dir, &neu), kernel, &cfg.bem.quadrature)?;
    let sol = solve_n2d(&ops, &dir)?;
    let per_edge = cfg.output.vtk_samples;
    export_vtk(&surface, per_edge, &trace_data(&surface, &sol, per_edge), path)
}

fn to_json_text<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&round_json(serde_json::to_value(value)?))?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_text(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::param(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::param(format!("{THREADS_ENV} must be positive")));
        }
        // a pool that is already set up is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<i32> {
    configure_threads()?;
    match cli.command {
        Command::KernelFit { degree, samples, out } => {
            let c = cmd_kernel_fit(degree, samples, &out)?;
            println!(
                "{}",
                to_json_text(&serde_json::json!({
                    "path": out,
                    "degree": c.degree,
                    "residual": c.residual,
                    "gradient_residual": c.gradient_residual,
                }))?
            );
            Ok(EXIT_OK)
        }
        Command::Tensor { config, fit_kernel_if_missing } => {
            let cfg = RunConfig::load(&config)?;
            let report = cmd_tensor(&cfg, fit_kernel_if_missing)?;
            println!("{}", to_json_text(&report)?);
            Ok(EXIT_OK)
        }
        Command::Optimize { config, out, fit_kernel_if_missing } => {
            let cfg = RunConfig::load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output.directory.clone());
            let (summary, _) = cmd_optimize(&cfg, &dir, fit_kernel_if_missing)?;
            println!("{}", to_json_text(&summary)?);
            Ok(if summary.converged { EXIT_OK } else { EXIT_OPTIMIZATION })
        }
        Command::GeometryGen { config, out, vtk } => {
            let cfg = RunConfig::load(&config)?;
            let s = cmd_geometry_gen(&cfg, &out, vtk.as_deref())?;
            println!("{} patches, {} elements -> {}", s.patch_count(), s.element_count(), out.display());
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
