//! Fits the periodic Laplace kernel correction and inspects the result.
//!
//! `cargo run --release --example kernel_fit -- [degree] [cache.json]`

use nalgebra::Vector3;
use scaffold_core::kernel::{fit_correction, write_coefficients, PeriodicKernel, DEFAULT_FIT_SAMPLES};

fn main() -> scaffold_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let degree: usize = args.next().map_or(12, |s| s.parse().expect("degree"));
    let cache = args.next();

    let started = std::time::Instant::now();
    let coeffs = fit_correction(degree, DEFAULT_FIT_SAMPLES)?;
    println!("N = {degree}: fitted in {:.2?}", started.elapsed());
    println!("  value mismatch across faces    {:.2e}", coeffs.residual);
    println!("  gradient mismatch across faces {:.2e}", coeffs.gradient_residual);
    if let Some(path) = cache {
        write_coefficients(path.as_ref(), &coeffs)?;
        println!("  written to {path}");
    }

    let kernel = PeriodicKernel::new(coeffs);
    println!("\n{:>24}  {:>14}  {:>14}", "z", "k_per(z)", "k_per - 1/4pir");
    for z in [
        Vector3::new(0.1, 0.0, 0.0),
        Vector3::new(0.5, 0.0, 0.0),
        Vector3::new(0.5, 0.5, 0.5),
        Vector3::new(-0.3, 0.2, 0.45),
        Vector3::new(0.7, 0.2, -0.55),
    ] {
        let v = kernel.eval(&z)?;
        let (r, _) = kernel.smooth_remainder(&z);
        println!("{:>24}  {v:>14.8}  {r:>14.8}", format!("({}, {}, {})", z.x, z.y, z.z));
    }
    Ok(())
}
