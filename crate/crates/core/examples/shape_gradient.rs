//! Hadamard shape gradient of the functional against central finite
//! differences along random directions in the deformation parameters.
//!
//! `cargo run --release --example shape_gradient -- [level]`

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scaffold_core::deformation::{BasisConfig, DeformationBasis};
use scaffold_core::geometry::{generate_primitive, PolynomialSurface, Primitive};
use scaffold_core::homogenization::TargetTensor;
use scaffold_core::kernel::PeriodicKernel;
use scaffold_core::optimizer::{OptimizationConfig, ShapeProblem};

fn main() -> scaffold_core::Result<()> {
    let level: u32 = std::env::args().nth(1).map_or(2, |s| s.parse().expect("level"));
    let kernel = PeriodicKernel::fit(12, 20)?;
    let p = 4.min(1 << level);
    let maps = generate_primitive(&Primitive::Sphere { center: [0.0; 3], radius: 0.3 })?;
    let reference = PolynomialSurface::from_maps(&maps, level, (p, p))?;
    let basis = DeformationBasis::build(&reference, &BasisConfig::default())?;
    let config = OptimizationConfig::new(TargetTensor::isotropic(0.9));
    let problem = ShapeProblem::new(&reference, &basis, &kernel, &config);

    let y0 = DVector::zeros(basis.len());
    let eval = problem.evaluate(&y0)?;
    let g = problem.gradient(&eval)?;
    println!("J(0) = {:.6e}, |g| = {:.4e}", eval.j, g.norm());
    println!("largest gradient components: {}", {
        let mut idx: Vec<usize> = (0..g.len()).collect();
        idx.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()));
        idx.iter().take(4).map(|&k| format!("g[{k}] = {:.3e}", g[k])).collect::<Vec<_>>().join(", ")
    });

    let t = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    println!("\n{:>12} {:>12} {:>10}", "<g,u>", "FD", "rel. err");
    for _ in 0..5 {
        let u = DVector::from_fn(basis.len(), |_, _| rng.gen_range(-1.0..1.0)).normalize();
        let fd = (problem.evaluate(&(&y0 + &u * t))?.j - problem.evaluate(&(&y0 - &u * t))?.j) / (2.0 * t);
        let gu = g.dot(&u);
        println!("{gu:>12.5e} {fd:>12.5e} {:>10.2e}", (fd - gu).abs() / gu.abs().max(1e-8));
    }
    Ok(())
}
