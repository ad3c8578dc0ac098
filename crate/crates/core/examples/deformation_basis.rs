//! Matérn-9/2 displacement basis on a sphere: pivoted Cholesky rank,
//! spectrum, and VTK files of the leading modes.
//!
//! `cargo run --release --example deformation_basis -- [level] [out_dir]`

use std::path::PathBuf;

use scaffold_core::deformation::{BasisConfig, DeformationBasis};
use scaffold_core::geometry::{generate_primitive, PolynomialSurface, Primitive};
use scaffold_core::output::{export_vtk, field_data};

fn main() -> scaffold_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let level: u32 = args.next().map_or(3, |s| s.parse().expect("level"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "basis_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| scaffold_core::Error::io(out.clone(), e))?;

    let p = 4.min(1 << level);
    let maps = generate_primitive(&Primitive::Sphere { center: [0.0; 3], radius: 0.3 })?;
    let s = PolynomialSurface::from_maps(&maps, level, (p, p))?;

    for length in [0.5, 1.0, 2.0] {
        let cfg = BasisConfig { length, ..Default::default() };
        let started = std::time::Instant::now();
        let basis = DeformationBasis::build(&s, &cfg)?;
        let lam: Vec<String> = basis.fields.iter().map(|f| format!("{:.3e}", f.eigenvalue)).collect();
        println!(
            "l = {length}: {} points, rank {}, trace residual {:.2e}, {:.2?}",
            s.points().len(),
            basis.rank,
            basis.trace_residual,
            started.elapsed()
        );
        println!("  eigenvalues {}", lam.join(" "));
    }

    let basis = DeformationBasis::build(&s, &BasisConfig::default())?;
    for (k, f) in basis.fields.iter().enumerate().take(6) {
        let path = out.join(format!("mode_{k:02}.vtk"));
        export_vtk(&s, 5, &[field_data(&s, "v", &f.values, 5)], &path)?;
    }
    println!("leading modes written to {}", out.display());
    Ok(())
}
