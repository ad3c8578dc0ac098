//! Multipatch cavity boundaries: primitive generators, dyadic stencil grids and
//! piecewise polynomial reinterpolation.

mod file;
mod grid;
mod patch;
mod primitives;
mod surface;

use nalgebra::Vector3;

pub use file::{GeometryFile, GeometryPatch};
pub use grid::{refine_to_level, ElementGrid};
pub use patch::{CubeFace, LagrangePatch, PatchMap};
pub use primitives::{generate_primitive, rotation_t, Primitive};
pub use surface::{reinterpolate, PolynomialSurface, SurfaceSample, MAX_GEOMETRY_DEGREE};

pub type Point = Vector3<f64>;

/// Minimum distance between the cavity boundary and the cell faces.
pub const IN_CELL_MARGIN: f64 = 1e-3;
/// Two stencil points closer than this are the same global point.
pub const DEDUP_TOLERANCE: f64 = 1e-12;
/// Threshold on `|d_u s x d_v s|` below which an element counts as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-14;

/// The centered periodicity cell `[-1/2, 1/2]^3`.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnitCell;

impl UnitCell {
    pub const HALF: f64 = 0.5;

    pub fn contains_with_margin(p: &Point, margin: f64) -> bool {
        p.iter().all(|c| c.abs() <= Self::HALF - margin)
    }
}
