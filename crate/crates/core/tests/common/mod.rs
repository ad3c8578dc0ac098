#![allow(dead_code)]

use std::sync::OnceLock;

use nalgebra::Matrix3;
use scaffold_core::bem::{assemble_operators, build_spaces, QuadratureScheme};
use scaffold_core::geometry::{generate_primitive, PolynomialSurface, Primitive};
use scaffold_core::homogenization::effective_tensor;
use scaffold_core::kernel::{PeriodicKernel, DEFAULT_FIT_SAMPLES, DEFAULT_KERNEL_DEGREE};
use scaffold_core::solver::{solve_n2d, CellSolution};

pub fn kernel() -> &'static PeriodicKernel {
    static K: OnceLock<PeriodicKernel> = OnceLock::new();
    K.get_or_init(|| PeriodicKernel::fit(DEFAULT_KERNEL_DEGREE, DEFAULT_FIT_SAMPLES).unwrap())
}

/// Geometry degree used throughout: `min(4, 2^j)`.
pub fn geometry_degree(j: u32) -> usize {
    4.min(1 << j)
}

pub fn surface(primitive: &Primitive, j: u32) -> PolynomialSurface {
    let maps = generate_primitive(primitive).unwrap();
    let p = geometry_degree(j);
    PolynomialSurface::from_maps(&maps, j, (p, p)).unwrap()
}

pub fn sphere(radius: f64, j: u32) -> PolynomialSurface {
    surface(&Primitive::Sphere { center: [0.0; 3], radius }, j)
}

pub fn cube(half_width: f64, j: u32) -> PolynomialSurface {
    surface(&Primitive::Cube { center: [0.0; 3], half_width }, j)
}

pub fn rotated_cube(half_width: f64, j: u32) -> PolynomialSurface {
    surface(&Primitive::RotatedCube { center: [0.0; 3], half_width, rotation: None }, j)
}

pub fn solve(surface: &PolynomialSurface) -> CellSolution {
    let (dir, neu) = build_spaces(surface, 2).unwrap();
    let ops = assemble_operators(surface, (&dir, &neu), kernel(), &QuadratureScheme::default()).unwrap();
    solve_n2d(&ops, &dir).unwrap()
}

pub fn tensor(surface: &PolynomialSurface) -> Matrix3<f64> {
    effective_tensor(surface, &solve(surface)).unwrap()
}

/// `1 - 3f/2` for a ball of radius `r`.
pub fn dilute_diagonal(r: f64) -> f64 {
    1.0 - 1.5 * (4.0 * std::f64::consts::PI * r.powi(3) / 3.0)
}

/// Largest `|w_i - c x_i| / R` over a 5x5 sampling of every element.
pub fn sphere_trace_error(surface: &PolynomialSurface, sol: &CellSolution, r: f64, c: f64) -> f64 {
    let mut err: f64 = 0.0;
    for e in 0..surface.element_count() {
        for a in 0..5 {
            for b in 0..5 {
                let (u, v) = (a as f64 / 4.0, b as f64 / 4.0);
                let x = surface.position(e, u, v);
                for i in 0..3 {
                    err = err.max((sol.trace_eval(e, u, v, i) - c * x[i]).abs() / r);
                }
            }
        }
    }
    err
}

/// Mean distance of the surface points from their centroid and the max/min ratio.
pub fn radius_and_sphericity(surface: &PolynomialSurface) -> (f64, f64) {
    let pts = surface.points();
    let c = pts.iter().sum::<nalgebra::Vector3<f64>>() / pts.len() as f64;
    let d: Vec<f64> = pts.iter().map(|p| (p - c).norm()).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let max = d.iter().copied().fold(0.0, f64::max);
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    (mean, max / min)
}
