//! Gradient-descent shape optimization towards a target tensor, with the
//! CSV log and per-iterate VTK files.
//!
//! `cargo run --release --example optimize -- [b1|b2|b3|b4] [sphere|cube] [level] [out_dir]`

use std::path::PathBuf;

use nalgebra::{Matrix3, Vector3};
use scaffold_core::deformation::{BasisConfig, DeformationBasis};
use scaffold_core::geometry::{generate_primitive, rotation_t, PolynomialSurface, Primitive};
use scaffold_core::homogenization::TargetTensor;
use scaffold_core::kernel::PeriodicKernel;
use scaffold_core::optimizer::{run, Evaluation, IterationRecord, OptimizationConfig};
use scaffold_core::output::{ArtifactWriter, ConvergenceLog};

fn main() -> scaffold_core::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let b3 = Matrix3::from_diagonal(&Vector3::new(0.9, 0.88, 0.86));
    let t = rotation_t();
    let target = match arg(0, "b1").as_str() {
        "b1" => TargetTensor::isotropic(0.9),
        "b2" => TargetTensor::isotropic(0.6),
        "b3" => TargetTensor::new(b3)?,
        "b4" => TargetTensor::new(t * b3 * t.transpose())?,
        other => panic!("unknown target {other}"),
    };
    let start = match arg(1, "sphere").as_str() {
        "sphere" => Primitive::Sphere { center: [0.0; 3], radius: 0.3 },
        "cube" => Primitive::Cube { center: [0.0; 3], half_width: 0.15 },
        other => panic!("unknown initial shape {other}"),
    };
    let level: u32 = arg(2, "2").parse().expect("level");
    let out = PathBuf::from(arg(3, "optimize_out"));
    std::fs::create_dir_all(&out).map_err(|e| scaffold_core::Error::io(out.clone(), e))?;

    let kernel = PeriodicKernel::fit(12, 20)?;
    let p = 4.min(1 << level);
    let reference = PolynomialSurface::from_maps(&generate_primitive(&start)?, level, (p, p))?;
    let basis = DeformationBasis::build(&reference, &BasisConfig::default())?;
    let config = OptimizationConfig::new(target);

    let mut writer = ArtifactWriter {
        log: Some(ConvergenceLog::create(&out.join("convergence.csv"))?),
        vtk_dir: Some(&out),
        per_edge: 5,
        reference: &reference,
    };
    let mut progress = |r: &IterationRecord, _: &Evaluation| {
        println!(
            "{:>3}  J = {:.4e}  |g| = {:.3e}  step = {:.3e}  rejected = {}  diag(A) = ({:.5}, {:.5}, {:.5})",
            r.iteration, r.j, r.gradient_norm, r.step, r.rejected, r.a[0][0], r.a[1][1], r.a[2][2]
        );
        Ok(())
    };
    let state = run(&config, &reference, &basis, &kernel, &mut [&mut writer, &mut progress])?;

    let pts = state.surface.points();
    let centroid = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let dist: Vec<f64> = pts.iter().map(|x| (x - centroid).norm()).collect();
    let mean = dist.iter().sum::<f64>() / dist.len() as f64;
    let ratio = dist.iter().copied().fold(0.0, f64::max) / dist.iter().copied().fold(f64::INFINITY, f64::min);
    println!(
        "converged: {}, {} evaluations, mean radius {mean:.4}, max/min {ratio:.4}",
        state.converged, state.evaluations
    );
    println!("final tensor {:.6}", state.tensor);
    Ok(())
}
