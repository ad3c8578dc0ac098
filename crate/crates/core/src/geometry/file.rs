use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::patch::{LagrangePatch, PatchMap};
use super::surface::PolynomialSurface;
use crate::error::{Error, Result};

pub const GEOMETRY_FORMAT_VERSION: u32 = 1;

/// One tensor-product Lagrange patch on a uniform parameter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryPatch {
    pub degree: [usize; 2],
    /// `+1` when `d_u s x d_v s` points out of the cavity, `-1` otherwise.
    pub orientation: i8,
    /// `(p1+1) x (p2+1)` points, `u` fastest.
    pub points: Vec<[f64; 3]>,
}

/// On-disk multipatch geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFile {
    pub version: u32,
    pub patches: Vec<GeometryPatch>,
}

impl GeometryPatch {
    fn validate(&self, index: usize) -> Result<()> {
        let [p1, p2] = self.degree;
        if p1 == 0 || p2 == 0 {
            return Err(Error::Schema(format!("patch {index}: degree must be at least 1")));
        }
        if self.points.len() != (p1 + 1) * (p2 + 1) {
            return Err(Error::Schema(format!(
                "patch {index}: expected {} points for degree ({p1},{p2}), found {}",
                (p1 + 1) * (p2 + 1),
                self.points.len()
            )));
        }
        if self.orientation != 1 && self.orientation != -1 {
            return Err(Error::Schema(format!("patch {index}: orientation must be +1 or -1")));
        }
        if self.points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Schema(format!("patch {index}: non-finite coordinate")));
        }
        Ok(())
    }

    /// Patch map with outward orientation; inward patches are transposed.
    pub fn to_map(&self) -> PatchMap {
        let [p1, p2] = self.degree;
        if self.orientation > 0 {
            PatchMap::Lagrange(LagrangePatch {
                degree: (p1, p2),
                points: self.points.iter().map(|p| Vector3::from(*p)).collect(),
            })
        } else {
            let mut points = Vec::with_capacity(self.points.len());
            for i in 0..=p1 {
                for j in 0..=p2 {
                    points.push(Vector3::from(self.points[i + (p1 + 1) * j]));
                }
            }
            PatchMap::Lagrange(LagrangePatch {
                degree: (p2, p1),
                points,
            })
        }
    }
}

impl GeometryFile {
    /// Resamples patch maps on a uniform `(p+1) x (p+1)` grid.
    pub fn from_maps(maps: &[PatchMap], degree: usize) -> Self {
        let patches = maps
            .iter()
            .map(|m| {
                let lag = m.to_lagrange((degree, degree));
                GeometryPatch {
                    degree: [degree, degree],
                    orientation: 1,
                    points: lag.points.iter().map(|p| [p[0], p[1], p[2]]).collect(),
                }
            })
            .collect();
        GeometryFile {
            version: GEOMETRY_FORMAT_VERSION,
            patches,
        }
    }

    /// Stores each patch of a surface as the degree-`2^j` Lagrange patch through
    /// its level-`j` stencil points, so refining the file at the same level
    /// reproduces the surface exactly.
    pub fn from_surface(surface: &PolynomialSurface) -> Self {
        let grid = surface.grid();
        let n = grid.subdivisions();
        let pts = grid.points();
        let patches = (0..grid.patch_count())
            .map(|patch| {
                let mut points = Vec::with_capacity((n + 1) * (n + 1));
                for lp in 0..=n {
                    for l in 0..=n {
                        let p = pts[grid.global_index(patch, l, lp)];
                        points.push([p[0], p[1], p[2]]);
                    }
                }
                GeometryPatch {
                    degree: [n, n],
                    orientation: 1,
                    points,
                }
            })
            .collect();
        GeometryFile {
            version: GEOMETRY_FORMAT_VERSION,
            patches,
        }
    }

    pub fn to_maps(&self) -> Result<Vec<PatchMap>> {
        if self.version != GEOMETRY_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported geometry version {}",
                self.version
            )));
        }
        if self.patches.is_empty() {
            return Err(Error::Schema("geometry has no patches".into()));
        }
        for (i, p) in self.patches.iter().enumerate() {
            p.validate(i)?;
        }
        Ok(self.patches.iter().map(GeometryPatch::to_map).collect())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_primitive, Primitive};

    #[test]
    fn surface_round_trip_is_exact() {
        let maps = generate_primitive(&Primitive::Sphere {
            center: [0.05, 0.0, 0.0],
            radius: 0.3,
        })
        .unwrap();
        let s = PolynomialSurface::from_maps(&maps, 3, (4, 4)).unwrap();
        let file = GeometryFile::from_surface(&s);
        let text = serde_json::to_string(&file).unwrap();
        let back: GeometryFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
        let t = PolynomialSurface::from_maps(&back.to_maps().unwrap(), 3, (4, 4)).unwrap();
        assert_eq!(t.points(), s.points());
    }

    #[test]
    fn inward_patches_are_flipped() {
        let maps = generate_primitive(&Primitive::Cube {
            center: [0.0; 3],
            half_width: 0.2,
        })
        .unwrap();
        let mut file = GeometryFile::from_maps(&maps, 2);
        // transpose every patch and mark it inward
        for p in &mut file.patches {
            let old = p.points.clone();
            for i in 0..3 {
                for j in 0..3 {
                    p.points[i + 3 * j] = old[j + 3 * i];
                }
            }
            p.orientation = -1;
        }
        let s = PolynomialSurface::from_maps(&file.to_maps().unwrap(), 1, (1, 1)).unwrap();
        assert!((s.cavity_volume().unwrap() - 0.064).abs() < 1e-12);
    }

    #[test]
    fn malformed_patch_is_a_schema_error() {
        let file = GeometryFile {
            version: 1,
            patches: vec![GeometryPatch {
                degree: [2, 2],
                orientation: 1,
                points: vec![[0.0; 3]; 4],
            }],
        };
        assert!(matches!(file.to_maps(), Err(Error::Schema(_))));
    }
}
