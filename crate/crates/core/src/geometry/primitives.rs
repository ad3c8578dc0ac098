use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::patch::{CubeFace, PatchMap};
use super::{Point, UnitCell, IN_CELL_MARGIN};
use crate::error::{Error, Result};

/// The orthogonal transformation used for the rotated cube and rotated targets.
pub fn rotation_t() -> Matrix3<f64> {
    let s3 = 3f64.sqrt();
    let s2 = 2f64.sqrt();
    let s6 = 6f64.sqrt();
    Matrix3::new(
        1.0 / s3,
        0.0,
        2.0 / s6,
        1.0 / s3,
        -1.0 / s2,
        -1.0 / s6,
        1.0 / s3,
        1.0 / s2,
        -1.0 / s6,
    )
}

fn default_two_body_sphere_center() -> [f64; 3] {
    [-0.25; 3]
}
fn default_two_body_sphere_radius() -> f64 {
    0.15
}
fn default_two_body_cube_center() -> [f64; 3] {
    [0.25; 3]
}
fn default_two_body_cube_half_width() -> f64 {
    0.075
}

/// Initial cavity shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    Sphere {
        #[serde(default)]
        center: [f64; 3],
        radius: f64,
    },
    Cube {
        #[serde(default)]
        center: [f64; 3],
        half_width: f64,
    },
    /// Cube rotated by `rotation` (defaults to [`rotation_t`]).
    RotatedCube {
        #[serde(default)]
        center: [f64; 3],
        half_width: f64,
        #[serde(default)]
        rotation: Option<[[f64; 3]; 3]>,
    },
    /// A ball and a disjoint cube; defaults reproduce the standard two-body layout.
    TwoBody {
        #[serde(default = "default_two_body_sphere_center")]
        sphere_center: [f64; 3],
        #[serde(default = "default_two_body_sphere_radius")]
        sphere_radius: f64,
        #[serde(default = "default_two_body_cube_center")]
        cube_center: [f64; 3],
        #[serde(default = "default_two_body_cube_half_width")]
        cube_half_width: f64,
    },
    DrilledCubeStub,
}

impl Primitive {
    pub fn two_body() -> Self {
        Primitive::TwoBody {
            sphere_center: default_two_body_sphere_center(),
            sphere_radius: default_two_body_sphere_radius(),
            cube_center: default_two_body_cube_center(),
            cube_half_width: default_two_body_cube_half_width(),
        }
    }
}

fn check_sphere(center: &Point, radius: f64) -> Result<()> {
    if radius <= 0.0 {
        return Err(Error::param(format!("sphere radius {radius} must be positive")));
    }
    let reach = center.abs().max() + radius;
    if reach > UnitCell::HALF - IN_CELL_MARGIN {
        return Err(Error::GeometryOutOfCell(format!(
            "sphere of radius {radius} at {center:?} reaches {reach}"
        )));
    }
    Ok(())
}

fn check_cube(center: &Point, half_width: f64, rot: &Matrix3<f64>) -> Result<()> {
    if half_width <= 0.0 {
        return Err(Error::param(format!("cube half-width {half_width} must be positive")));
    }
    let ortho = (rot.transpose() * rot - Matrix3::identity()).abs().max();
    if ortho > 1e-12 {
        return Err(Error::param(format!("rotation is not orthogonal (defect {ortho:e})")));
    }
    if rot.determinant() < 0.0 {
        return Err(Error::param("rotation must preserve orientation"));
    }
    let mut reach: f64 = 0.0;
    for corner in 0..8 {
        let c = Vector3::new(
            if corner & 1 == 0 { -1.0 } else { 1.0 },
            if corner & 2 == 0 { -1.0 } else { 1.0 },
            if corner & 4 == 0 { -1.0 } else { 1.0 },
        );
        reach = reach.max((center + rot * c * half_width).abs().max());
    }
    if reach > UnitCell::HALF - IN_CELL_MARGIN {
        return Err(Error::GeometryOutOfCell(format!(
            "cube of half-width {half_width} at {center:?} reaches {reach}"
        )));
    }
    Ok(())
}

fn sphere_patches(center: Point, radius: f64) -> Vec<PatchMap> {
    CubeFace::all()
        .into_iter()
        .map(|face| PatchMap::SphereFace {
            center,
            radius,
            rotation: Matrix3::identity(),
            face,
        })
        .collect()
}

fn cube_patches(center: Point, half_width: f64, rotation: Matrix3<f64>) -> Vec<PatchMap> {
    CubeFace::all()
        .into_iter()
        .map(|face| PatchMap::CubeFace {
            center,
            half_width,
            rotation,
            face,
        })
        .collect()
}

/// Builds the patch maps of an initial shape after checking that it fits in the cell.
pub fn generate_primitive(primitive: &Primitive) -> Result<Vec<PatchMap>> {
    match primitive {
        Primitive::Sphere { center, radius } => {
            let c = Vector3::from(*center);
            check_sphere(&c, *radius)?;
            Ok(sphere_patches(c, *radius))
        }
        Primitive::Cube { center, half_width } => {
            let c = Vector3::from(*center);
            check_cube(&c, *half_width, &Matrix3::identity())?;
            Ok(cube_patches(c, *half_width, Matrix3::identity()))
        }
        Primitive::RotatedCube {
            center,
            half_width,
            rotation,
        } => {
            let c = Vector3::from(*center);
            let rot = match rotation {
                Some(r) => Matrix3::from_fn(|i, j| r[i][j]),
                None => rotation_t(),
            };
            check_cube(&c, *half_width, &rot)?;
            Ok(cube_patches(c, *half_width, rot))
        }
        Primitive::TwoBody {
            sphere_center,
            sphere_radius,
            cube_center,
            cube_half_width,
        } => {
            let sc = Vector3::from(*sphere_center);
            let cc = Vector3::from(*cube_center);
            check_sphere(&sc, *sphere_radius)?;
            check_cube(&cc, *cube_half_width, &Matrix3::identity())?;
            // axis-aligned boxes of the two bodies must not touch
            let gap = (0..3)
                .map(|d| (sc[d] - cc[d]).abs() - sphere_radius - cube_half_width)
                .fold(f64::NEG_INFINITY, f64::max);
            if gap <= 0.0 {
                return Err(Error::param("two-body components overlap"));
            }
            let mut patches = sphere_patches(sc, *sphere_radius);
            patches.extend(cube_patches(cc, *cube_half_width, Matrix3::identity()));
            Ok(patches)
        }
        Primitive::DrilledCubeStub => Err(Error::NotImplemented("the 48-patch drilled cube")),
    }
}
