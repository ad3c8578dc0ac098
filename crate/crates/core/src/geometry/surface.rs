use nalgebra::Vector3;

use super::grid::{refine_to_level, ElementGrid};
use super::patch::PatchMap;
use super::{Point, UnitCell, DEGENERACY_THRESHOLD, IN_CELL_MARGIN};
use crate::error::{Error, Result};
use crate::quadrature::gauss_square;

/// Largest supported reinterpolation degree per direction.
pub const MAX_GEOMETRY_DEGREE: usize = 8;
const MAXN: usize = MAX_GEOMETRY_DEGREE + 1;

/// Position, tangents, unit normal and surface measure at one surface point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceSample {
    pub position: Point,
    pub du: Vector3<f64>,
    pub dv: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub measure: f64,
}

/// Piecewise tensor-product polynomial surface over a dyadic element grid.
///
/// Each element carries the Newton form of the Lagrange interpolant through
/// `(p1+1) x (p2+1)` stencil points of its patch. Local element coordinates
/// live in `[0,1]^2`; the interpolation nodes sit at the integers
/// `m - k + l`, so neighbouring stencils share nodes exactly.
#[derive(Clone, Debug)]
pub struct PolynomialSurface {
    grid: ElementGrid,
    degree: (usize, usize),
    /// `(m - k, m' - k')` per element.
    offsets: Vec<(i32, i32)>,
    /// Global stencil indices, `(p1+1)(p2+1)` per element, `u` fastest.
    stencils: Vec<usize>,
    /// Newton coefficients, same layout as `stencils`.
    coeffs: Vec<[f64; 3]>,
    components: Vec<usize>,
    component_count: usize,
}

fn stencil_offset(k: usize, n: usize, p: usize) -> usize {
    k.min(n - p)
}

/// Lagrange weights and derivatives at `x` for nodes `o, o+1, ..., o+p`.
fn lagrange_1d(o: f64, p: usize, x: f64, val: &mut [f64; MAXN], der: &mut [f64; MAXN]) {
    for l in 0..=p {
        let mut den = 1.0;
        let mut num = 1.0;
        let mut dsum = 0.0;
        for r in 0..=p {
            if r == l {
                continue;
            }
            den *= l as f64 - r as f64;
            let t = x - (o + r as f64);
            dsum = dsum * t + num;
            num *= t;
        }
        val[l] = num / den;
        der[l] = dsum / den;
    }
}

/// Builds the surface by interpolating each element through its stencil.
pub fn reinterpolate(grid: ElementGrid, degree: (usize, usize)) -> Result<PolynomialSurface> {
    PolynomialSurface::new(grid, degree)
}

impl PolynomialSurface {
    pub fn new(grid: ElementGrid, degree: (usize, usize)) -> Result<Self> {
        let surf = Self::build(grid, degree)?;
        surf.check_nondegenerate()?;
        let vols = surf.component_volumes();
        for (c, v) in vols.iter().enumerate() {
            if !(*v > 0.0) {
                return Err(Error::Orientation(format!(
                    "component {c} has signed volume {v:e}; normals must point out of the cavity"
                )));
            }
        }
        surf.check_in_cell(IN_CELL_MARGIN)?;
        Ok(surf)
    }

    /// Generates, refines and reinterpolates patch maps in one go.
    pub fn from_maps(maps: &[PatchMap], level: u32, degree: (usize, usize)) -> Result<Self> {
        Self::new(refine_to_level(maps, level), degree)
    }

    fn build(grid: ElementGrid, degree: (usize, usize)) -> Result<Self> {
        let (p1, p2) = degree;
        let n = grid.subdivisions();
        if p1 == 0 || p2 == 0 {
            return Err(Error::param("geometry degree must be at least 1"));
        }
        if p1 > n || p2 > n {
            return Err(Error::param(format!(
                "geometry degree ({p1},{p2}) exceeds 2^j = {n}"
            )));
        }
        if p1 > MAX_GEOMETRY_DEGREE || p2 > MAX_GEOMETRY_DEGREE {
            return Err(Error::param(format!(
                "geometry degree ({p1},{p2}) exceeds {MAX_GEOMETRY_DEGREE}"
            )));
        }
        let ne = grid.element_count();
        let nc = (p1 + 1) * (p2 + 1);
        let mut offsets = Vec::with_capacity(ne);
        let mut stencils = Vec::with_capacity(ne * nc);
        let mut coeffs = Vec::with_capacity(ne * nc);
        let pts = grid.points();
        for e in 0..ne {
            let (patch, k, kp) = grid.element_position(e);
            let m = stencil_offset(k, n, p1);
            let mp = stencil_offset(kp, n, p2);
            offsets.push((m as i32 - k as i32, mp as i32 - kp as i32));
            let start = coeffs.len();
            for j in 0..=p2 {
                for i in 0..=p1 {
                    let g = grid.global_index(patch, m + i, mp + j);
                    stencils.push(g);
                    coeffs.push([pts[g][0], pts[g][1], pts[g][2]]);
                }
            }
            let c = &mut coeffs[start..];
            // divided differences on unit-spaced nodes, first along u then v
            for j in 0..=p2 {
                for r in 1..=p1 {
                    for i in (r..=p1).rev() {
                        let a = i + (p1 + 1) * j;
                        for d in 0..3 {
                            c[a][d] = (c[a][d] - c[a - 1][d]) / r as f64;
                        }
                    }
                }
            }
            for i in 0..=p1 {
                for r in 1..=p2 {
                    for j in (r..=p2).rev() {
                        let a = i + (p1 + 1) * j;
                        let b = i + (p1 + 1) * (j - 1);
                        for d in 0..3 {
                            c[a][d] = (c[a][d] - c[b][d]) / r as f64;
                        }
                    }
                }
            }
        }
        let (components, component_count) = label_components(&grid);
        Ok(PolynomialSurface {
            grid,
            degree,
            offsets,
            stencils,
            coeffs,
            components,
            component_count,
        })
    }

    pub fn grid(&self) -> &ElementGrid {
        &self.grid
    }

    pub fn level(&self) -> u32 {
        self.grid.level()
    }

    pub fn degree(&self) -> (usize, usize) {
        self.degree
    }

    pub fn patch_count(&self) -> usize {
        self.grid.patch_count()
    }

    pub fn element_count(&self) -> usize {
        self.grid.element_count()
    }

    pub fn points(&self) -> &[Point] {
        self.grid.points()
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    /// Component label of every element.
    pub fn element_components(&self) -> &[usize] {
        &self.components
    }

    /// Global point indices of the interpolation stencil of element `e`.
    pub fn stencil(&self, e: usize) -> &[usize] {
        let nc = (self.degree.0 + 1) * (self.degree.1 + 1);
        &self.stencils[e * nc..(e + 1) * nc]
    }

    /// Position and tangents at local coordinates `(u, v)` by the Horner scheme.
    #[inline]
    pub fn eval(&self, e: usize, u: f64, v: f64) -> (Point, Vector3<f64>, Vector3<f64>) {
        match self.degree {
            (1, 1) => self.eval_fixed::<1, 1>(e, u, v),
            (2, 2) => self.eval_fixed::<2, 2>(e, u, v),
            (3, 3) => self.eval_fixed::<3, 3>(e, u, v),
            (4, 4) => self.eval_fixed::<4, 4>(e, u, v),
            _ => self.eval_dyn(e, u, v),
        }
    }

    fn eval_fixed<const P1: usize, const P2: usize>(&self, e: usize, u: f64, v: f64) -> (Point, Vector3<f64>, Vector3<f64>) {
        let nc = (P1 + 1) * (P2 + 1);
        let c = &self.coeffs[e * nc..(e + 1) * nc];
        let (ou, ov) = self.offsets[e];
        let (ou, ov) = (ou as f64, ov as f64);
        let mut x = [0.0; 3];
        let mut xu = [0.0; 3];
        let mut xv = [0.0; 3];
        for i in (0..=P1).rev() {
            let mut b = c[i + (P1 + 1) * P2];
            let mut db = [0.0; 3];
            for j in (0..P2).rev() {
                let t = v - (ov + j as f64);
                let cij = c[i + (P1 + 1) * j];
                for d in 0..3 {
                    db[d] = db[d] * t + b[d];
                    b[d] = b[d] * t + cij[d];
                }
            }
            if i == P1 {
                x = b;
                xv = db;
            } else {
                let t = u - (ou + i as f64);
                for d in 0..3 {
                    xu[d] = xu[d] * t + x[d];
                    x[d] = x[d] * t + b[d];
                    xv[d] = xv[d] * t + db[d];
                }
            }
        }
        (Vector3::from(x), Vector3::from(xu), Vector3::from(xv))
    }

    fn eval_dyn(&self, e: usize, u: f64, v: f64) -> (Point, Vector3<f64>, Vector3<f64>) {
        let (p1, p2) = self.degree;
        let nc = (p1 + 1) * (p2 + 1);
        let c = &self.coeffs[e * nc..(e + 1) * nc];
        let (ou, ov) = self.offsets[e];
        let (ou, ov) = (ou as f64, ov as f64);
        let mut q = [[0.0f64; 3]; MAXN];
        let mut dq = [[0.0f64; 3]; MAXN];
        for i in 0..=p1 {
            let mut b = c[i + (p1 + 1) * p2];
            let mut db = [0.0; 3];
            for j in (0..p2).rev() {
                let t = v - (ov + j as f64);
                let cij = c[i + (p1 + 1) * j];
                for d in 0..3 {
                    db[d] = db[d] * t + b[d];
                    b[d] = b[d] * t + cij[d];
                }
            }
            q[i] = b;
            dq[i] = db;
        }
        let mut x = q[p1];
        let mut xu = [0.0; 3];
        let mut xv = dq[p1];
        for i in (0..p1).rev() {
            let t = u - (ou + i as f64);
            for d in 0..3 {
                xu[d] = xu[d] * t + x[d];
                x[d] = x[d] * t + q[i][d];
                xv[d] = xv[d] * t + dq[i][d];
            }
        }
        (Vector3::from(x), Vector3::from(xu), Vector3::from(xv))
    }

    pub fn position(&self, e: usize, u: f64, v: f64) -> Point {
        self.eval(e, u, v).0
    }

    /// Full geometric sample; fails on a vanishing tangent cross product.
    pub fn sample(&self, e: usize, u: f64, v: f64) -> Result<SurfaceSample> {
        let (x, du, dv) = self.eval(e, u, v);
        let cr = du.cross(&dv);
        let g = cr.norm();
        if !(g >= DEGENERACY_THRESHOLD) {
            return Err(Error::DegenerateElement {
                element: e,
                detail: format!("|d_u s x d_v s| = {g:e} at ({u}, {v})"),
            });
        }
        Ok(SurfaceSample {
            position: x,
            du,
            dv,
            normal: cr / g,
            measure: g,
        })
    }

    /// Lagrange weights of the element stencil at `(u, v)`; value and both derivatives.
    pub fn stencil_weights(&self, e: usize, u: f64, v: f64, w: &mut [f64], wu: &mut [f64], wv: &mut [f64]) {
        let (p1, p2) = self.degree;
        let (ou, ov) = self.offsets[e];
        let mut lu = [0.0; MAXN];
        let mut du = [0.0; MAXN];
        let mut lv = [0.0; MAXN];
        let mut dv = [0.0; MAXN];
        lagrange_1d(ou as f64, p1, u, &mut lu, &mut du);
        lagrange_1d(ov as f64, p2, v, &mut lv, &mut dv);
        for j in 0..=p2 {
            for i in 0..=p1 {
                let a = i + (p1 + 1) * j;
                w[a] = lu[i] * lv[j];
                wu[a] = du[i] * lv[j];
                wv[a] = lu[i] * dv[j];
            }
        }
    }

    /// Interpolates a vector field given at the global points with the geometry stencil.
    pub fn interpolate_field(&self, e: usize, u: f64, v: f64, field: &[Vector3<f64>]) -> Vector3<f64> {
        let nc = (self.degree.0 + 1) * (self.degree.1 + 1);
        let mut w = [0.0; MAXN * MAXN];
        let mut wu = [0.0; MAXN * MAXN];
        let mut wv = [0.0; MAXN * MAXN];
        self.stencil_weights(e, u, v, &mut w[..nc], &mut wu[..nc], &mut wv[..nc]);
        self.stencil(e)
            .iter()
            .zip(&w[..nc])
            .map(|(&g, &wi)| field[g] * wi)
            .sum()
    }

    fn volume_rule(&self) -> Vec<(f64, f64, f64)> {
        let p = self.degree.0.max(self.degree.1);
        gauss_square((3 * p + 2) / 2)
    }

    /// Signed volume enclosed by each connected component, `(1/3) int <x, n>`.
    pub fn component_volumes(&self) -> Vec<f64> {
        let rule = self.volume_rule();
        let mut vols = vec![0.0; self.component_count];
        for e in 0..self.element_count() {
            let mut s = 0.0;
            for &(u, v, w) in &rule {
                let (x, du, dv) = self.eval(e, u, v);
                s += w * x.dot(&du.cross(&dv));
            }
            vols[self.components[e]] += s / 3.0;
        }
        vols
    }

    /// Total cavity volume `|Omega|`.
    pub fn cavity_volume(&self) -> Result<f64> {
        let vols = self.component_volumes();
        if let Some(v) = vols.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Orientation(format!("negative component volume {v:e}")));
        }
        Ok(vols.iter().sum())
    }

    pub fn area(&self) -> f64 {
        let rule = self.volume_rule();
        let mut a = 0.0;
        for e in 0..self.element_count() {
            for &(u, v, w) in &rule {
                let (_, du, dv) = self.eval(e, u, v);
                a += w * du.cross(&dv).norm();
            }
        }
        a
    }

    pub fn check_in_cell(&self, margin: f64) -> Result<()> {
        const S: usize = 4;
        for e in 0..self.element_count() {
            for a in 0..=S {
                for b in 0..=S {
                    let x = self.position(e, a as f64 / S as f64, b as f64 / S as f64);
                    if !UnitCell::contains_with_margin(&x, margin) {
                        return Err(Error::GeometryOutOfCell(format!(
                            "element {e} reaches {:?} (margin {margin})",
                            [x[0], x[1], x[2]]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn check_nondegenerate(&self) -> Result<()> {
        let mut pts: Vec<(f64, f64)> = gauss_square(3).iter().map(|&(u, v, _)| (u, v)).collect();
        pts.extend([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        for e in 0..self.element_count() {
            for &(u, v) in &pts {
                self.sample(e, u, v)?;
            }
        }
        Ok(())
    }

    /// New surface with every global point moved by `displacement`.
    ///
    /// Any failure of the admissibility checks is reported as a rejected step.
    pub fn displaced(&self, displacement: &[Vector3<f64>]) -> Result<Self> {
        let pts: Vec<Point> = self
            .points()
            .iter()
            .zip(displacement)
            .map(|(p, d)| p + d)
            .collect();
        if pts.len() != self.points().len() {
            return Err(Error::param("displacement length differs from point count"));
        }
        if pts.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::StepRejected("non-finite displacement".into()));
        }
        Self::new(self.grid.with_points(pts), self.degree).map_err(|e| match e {
            Error::StepRejected(_) => e,
            other => Error::StepRejected(other.to_string()),
        })
    }

    /// Same topology and degree at new point positions, with full checks.
    pub fn with_points(&self, points: Vec<Point>) -> Result<Self> {
        Self::new(self.grid.with_points(points), self.degree)
    }
}

fn label_components(grid: &ElementGrid) -> (Vec<usize>, usize) {
    let np = grid.points().len();
    let mut parent: Vec<usize> = (0..np).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for e in 0..grid.element_count() {
        let c = grid.element_corners(e);
        for &o in &c[1..] {
            let a = find(&mut parent, c[0]);
            let b = find(&mut parent, o);
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut label = vec![usize::MAX; np];
    let mut count = 0;
    let mut out = Vec::with_capacity(grid.element_count());
    for e in 0..grid.element_count() {
        let r = find(&mut parent, grid.element_corners(e)[0]);
        if label[r] == usize::MAX {
            label[r] = count;
            count += 1;
        }
        out.push(label[r]);
    }
    (out, count)
}
