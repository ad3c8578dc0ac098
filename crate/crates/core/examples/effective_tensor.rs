//! Effective tensor of spherical cavities against the dilute-limit estimate
//! `1 - 3f/2`, and of the cube in two frames.
//!
//! `cargo run --release --example effective_tensor -- [level]`

use std::f64::consts::PI;

use nalgebra::Matrix3;
use scaffold_core::bem::{assemble_operators, build_spaces, QuadratureScheme};
use scaffold_core::geometry::{generate_primitive, rotation_t, PolynomialSurface, Primitive};
use scaffold_core::homogenization::effective_tensor;
use scaffold_core::kernel::PeriodicKernel;
use scaffold_core::solver::solve_n2d;

fn tensor(prim: &Primitive, level: u32, kernel: &PeriodicKernel) -> scaffold_core::Result<(Matrix3<f64>, f64)> {
    let p = 4.min(1 << level);
    let s = PolynomialSurface::from_maps(&generate_primitive(prim)?, level, (p, p))?;
    let (dir, neu) = build_spaces(&s, 2)?;
    let ops = assemble_operators(&s, (&dir, &neu), kernel, &QuadratureScheme::default())?;
    let sol = solve_n2d(&ops, &dir)?;
    Ok((effective_tensor(&s, &sol)?, sol.condition))
}

fn main() -> scaffold_core::Result<()> {
    let level: u32 = std::env::args().nth(1).map_or(2, |s| s.parse().expect("level"));
    let kernel = PeriodicKernel::fit(12, 20)?;

    println!("{:>6} {:>9} {:>10} {:>10} {:>10}", "R", "f", "a_11", "1-3f/2", "cond");
    for r in [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4] {
        let (a, cond) = tensor(&Primitive::Sphere { center: [0.0; 3], radius: r }, level, &kernel)?;
        let f = 4.0 * PI * r.powi(3) / 3.0;
        println!("{r:>6.2} {f:>9.5} {:>10.6} {:>10.6} {cond:>10.1}", a[(0, 0)], 1.0 - 1.5 * f);
    }

    let (a, _) = tensor(&Primitive::Cube { center: [0.0; 3], half_width: 0.15 }, level, &kernel)?;
    let (ar, _) = tensor(&Primitive::RotatedCube { center: [0.0; 3], half_width: 0.15, rotation: None }, level, &kernel)?;
    let t = rotation_t();
    println!("\ncube [-0.15, 0.15]^3: {a:.6}");
    println!("rotated cube vs T A T^T: max difference {:.2e}", (ar - t * a * t.transpose()).amax());
    Ok(())
}
