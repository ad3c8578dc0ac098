//! Builds the initial shapes, checks their interpolation quality and writes
//! geometry and VTK files.
//!
//! `cargo run --release --example geometry -- [out_dir]`

use std::f64::consts::PI;
use std::path::PathBuf;

use scaffold_core::geometry::{generate_primitive, GeometryFile, PolynomialSurface, Primitive};
use scaffold_core::output::export_vtk;

fn main() -> scaffold_core::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "geometry_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| scaffold_core::Error::io(out.clone(), e))?;

    let r = 0.3;
    let maps = generate_primitive(&Primitive::Sphere { center: [0.0; 3], radius: r })?;
    let exact = 4.0 * PI * r.powi(3) / 3.0;
    println!("sphere R = {r}, degree 4 interpolation");
    println!("{:>3} {:>9} {:>12} {:>12}", "j", "elements", "volume err", "max |x|-R");
    for j in 2..=4 {
        let s = PolynomialSurface::from_maps(&maps, j, (4, 4))?;
        let mut dev: f64 = 0.0;
        for e in 0..s.element_count() {
            for (u, v) in [(0.5, 0.5), (0.25, 0.75), (0.1, 0.3)] {
                dev = dev.max((s.position(e, u, v).norm() - r).abs());
            }
        }
        println!("{j:>3} {:>9} {:>12.3e} {:>12.3e}", s.element_count(), (s.cavity_volume()? - exact).abs(), dev);
    }

    let shapes = [
        ("sphere", Primitive::Sphere { center: [0.0; 3], radius: 0.3 }),
        ("cube", Primitive::Cube { center: [0.0; 3], half_width: 0.15 }),
        ("rotated_cube", Primitive::RotatedCube { center: [0.0; 3], half_width: 0.15, rotation: None }),
        ("two_body", Primitive::two_body()),
    ];
    println!();
    for (name, prim) in shapes {
        let s = PolynomialSurface::from_maps(&generate_primitive(&prim)?, 2, (4, 4))?;
        let geo = out.join(format!("{name}.json"));
        GeometryFile::from_surface(&s).write(&geo)?;
        export_vtk(&s, 5, &[], &out.join(format!("{name}.vtk")))?;
        println!(
            "{name:>13}: {} patches, {} components, volume {:.6}, area {:.6} -> {}",
            s.patch_count(),
            s.component_count(),
            s.cavity_volume()?,
            s.area(),
            geo.display()
        );
    }
    Ok(())
}
