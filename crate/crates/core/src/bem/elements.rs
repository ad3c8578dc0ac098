use std::sync::OnceLock;

use nalgebra::Vector3;

use super::space::TraceSpace;
use crate::error::Result;
use crate::geometry::PolynomialSurface;
use crate::quadrature::gauss;

/// Tensor Gauss data on one element: points, unit normals, weights including
/// the surface measure, and basis values (`nl` per point).
#[derive(Clone, Debug)]
pub(crate) struct ElementQuad {
    pub x: Vec<Vector3<f64>>,
    pub n: Vec<Vector3<f64>>,
    pub w: Vec<f64>,
    pub phi: Vec<f64>,
}

impl ElementQuad {
    pub fn len(&self) -> usize {
        self.w.len()
    }
}

/// Per-element geometric and basis data shared by all assembly stages.
pub(crate) struct ElementData<'a> {
    pub surface: &'a PolynomialSurface,
    pub space: &'a TraceSpace,
    pub nl: usize,
    /// Broken dof indices, `nl` per element.
    pub dofs: Vec<usize>,
    /// Element positions `(patch, k, k')`.
    pub pos: Vec<(usize, usize, usize)>,
    pub corners: Vec<[usize; 4]>,
    /// Bounding sphere center and radius.
    pub centers: Vec<Vector3<f64>>,
    pub radii: Vec<f64>,
    cache: Vec<Vec<OnceLock<ElementQuad>>>,
}

impl<'a> ElementData<'a> {
    pub fn new(surface: &'a PolynomialSurface, space: &'a TraceSpace, max_order: usize) -> Self {
        let grid = surface.grid();
        let ne = surface.element_count();
        let nl = space.local_count();
        let mut dofs = vec![0; ne * nl];
        let mut pos = Vec::with_capacity(ne);
        let mut corners = Vec::with_capacity(ne);
        let mut centers = Vec::with_capacity(ne);
        let mut radii = Vec::with_capacity(ne);
        for e in 0..ne {
            let (p, k, kp) = grid.element_position(e);
            space.element_broken_dofs(p, k, kp, &mut dofs[e * nl..(e + 1) * nl]);
            pos.push((p, k, kp));
            corners.push(grid.element_corners(e));
            let c = surface.position(e, 0.5, 0.5);
            let mut r: f64 = 0.0;
            for i in 0..=6 {
                for j in 0..=6 {
                    let x = surface.position(e, i as f64 / 6.0, j as f64 / 6.0);
                    r = r.max((x - c).norm());
                }
            }
            centers.push(c);
            // sampled radius plus a safety margin for curvature between samples
            radii.push(1.05 * r);
        }
        let cache = (0..ne)
            .map(|_| (0..=max_order).map(|_| OnceLock::new()).collect())
            .collect();
        ElementData {
            surface,
            space,
            nl,
            dofs,
            pos,
            corners,
            centers,
            radii,
            cache,
        }
    }

    pub fn element_count(&self) -> usize {
        self.pos.len()
    }

    pub fn element_dofs(&self, e: usize) -> &[usize] {
        &self.dofs[e * self.nl..(e + 1) * self.nl]
    }

    /// Basis values of element `e` at local `(u, v)`.
    #[inline]
    pub fn basis(&self, e: usize, u: f64, v: f64, val: &mut [f64]) {
        let (_, k, kp) = self.pos[e];
        self.space.element_values(k, kp, u, v, val);
    }

    /// Cached Gauss data of order `q` per direction.
    pub fn quad(&self, e: usize, q: usize) -> Result<&ElementQuad> {
        let cell = &self.cache[e][q];
        if let Some(d) = cell.get() {
            return Ok(d);
        }
        let d = self.build_quad(e, q)?;
        Ok(cell.get_or_init(|| d))
    }

    fn build_quad(&self, e: usize, q: usize) -> Result<ElementQuad> {
        let g = gauss(q);
        let nl = self.nl;
        let mut out = ElementQuad {
            x: Vec::with_capacity(q * q),
            n: Vec::with_capacity(q * q),
            w: Vec::with_capacity(q * q),
            phi: vec![0.0; q * q * nl],
        };
        let mut i = 0;
        for (v, wv) in g.iter() {
            for (u, wu) in g.iter() {
                let s = self.surface.sample(e, u, v)?;
                out.x.push(s.position);
                out.n.push(s.normal);
                out.w.push(wu * wv * s.measure);
                self.basis(e, u, v, &mut out.phi[i * nl..(i + 1) * nl]);
                i += 1;
            }
        }
        Ok(out)
    }

    /// Distance between bounding spheres relative to the larger diameter.
    pub fn separation(&self, e: usize, f: usize) -> f64 {
        let d = (self.centers[e] - self.centers[f]).norm() - self.radii[e] - self.radii[f];
        d / (2.0 * self.radii[e].max(self.radii[f]))
    }
}
