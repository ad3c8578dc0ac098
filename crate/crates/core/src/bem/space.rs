use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::PolynomialSurface;

/// Uniform open-knot B-splines of degree `d` on `[0,1]` with `2^j` intervals.
#[derive(Clone, Debug)]
pub struct BSplineBasis1D {
    intervals: usize,
    degree: usize,
    knots: Vec<f64>,
    /// Monomial coefficients in the local coordinate, `(d+1)^2` per interval.
    monomials: Vec<f64>,
}

impl BSplineBasis1D {
    pub fn new(level: u32, degree: usize) -> Self {
        let n = 1usize << level;
        let mut knots = vec![0.0; degree];
        knots.extend((0..=n).map(|i| i as f64 / n as f64));
        knots.extend(std::iter::repeat(1.0).take(degree));
        let mut basis = BSplineBasis1D {
            intervals: n,
            degree,
            knots,
            monomials: Vec::new(),
        };
        basis.monomials = (0..n).flat_map(|k| basis.local_monomials(k)).collect();
        basis
    }

    /// Interpolates the table values at `d+1` local nodes by monomials.
    fn local_monomials(&self, k: usize) -> Vec<f64> {
        let d = self.degree;
        let nodes: Vec<f64> = (0..=d).map(|i| if d == 0 { 0.5 } else { i as f64 / d as f64 }).collect();
        let vander = DMatrix::from_fn(d + 1, d + 1, |i, c| nodes[i].powi(c as i32));
        let lu = vander.lu();
        let mut out = vec![0.0; (d + 1) * (d + 1)];
        for r in 0..=d {
            let rhs = DVector::from_iterator(d + 1, nodes.iter().map(|&u| self.table(k, u)[r][d]));
            let c = lu.solve(&rhs).expect("distinct interpolation nodes");
            out[r * (d + 1)..(r + 1) * (d + 1)].copy_from_slice(c.as_slice());
        }
        out
    }

    pub fn count(&self) -> usize {
        self.intervals + self.degree
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Triangular table of lower-degree values and knot differences on interval `k`.
    fn table(&self, k: usize, u: f64) -> [[f64; 8]; 8] {
        let p = self.degree;
        let span = k + p;
        let x = (k as f64 + u) / self.intervals as f64;
        let t = &self.knots;
        let mut ndu = [[0.0f64; 8]; 8];
        let mut left = [0.0f64; 8];
        let mut right = [0.0f64; 8];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let tmp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            ndu[j][j] = saved;
        }
        ndu
    }

    /// Values of the `d+1` functions `k, ..., k+d` that live on interval `k`.
    #[inline]
    pub fn values(&self, k: usize, u: f64, val: &mut [f64]) {
        let m = self.degree + 1;
        let c = &self.monomials[k * m * m..(k + 1) * m * m];
        for (r, out) in val[..m].iter_mut().enumerate() {
            let cr = &c[r * m..(r + 1) * m];
            *out = cr.iter().rev().fold(0.0, |acc, &ci| acc * u + ci);
        }
    }

    /// Values and local-coordinate derivatives of the functions on interval `k`.
    pub fn eval(&self, k: usize, u: f64, val: &mut [f64], der: &mut [f64]) {
        let p = self.degree;
        let ndu = self.table(k, u);
        for r in 0..=p {
            val[r] = ndu[r][p];
        }
        if p == 0 {
            der[0] = 0.0;
            return;
        }
        let scale = p as f64 / self.intervals as f64;
        for r in 0..=p {
            let mut d = 0.0;
            if r >= 1 {
                d += ndu[r - 1][p - 1] / ndu[p][r - 1];
            }
            if r + 1 <= p {
                d -= ndu[r][p - 1] / ndu[p][r];
            }
            der[r] = d * scale;
        }
    }
}

/// Which trace space a [`TraceSpace`] represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpaceKind {
    DirichletContinuous,
    NeumannPatchwise,
}

/// Tensor B-spline space over all patches, optionally glued to be continuous.
///
/// Both kinds share the patchwise ("broken") numbering
/// `patch * N^2 + a + N b`, `N = 2^j + d`; the continuous space maps every
/// broken function to exactly one global function.
#[derive(Clone, Debug)]
pub struct TraceSpace {
    kind: SpaceKind,
    basis: BSplineBasis1D,
    level: u32,
    patch_count: usize,
    glue: Vec<usize>,
    dofs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum GlueKey {
    Interior(usize, usize, usize),
    Edge(usize, usize, usize),
    Vertex(usize),
}

impl TraceSpace {
    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn basis(&self) -> &BSplineBasis1D {
        &self.basis
    }

    pub fn dof_count(&self) -> usize {
        self.dofs
    }

    pub fn broken_count(&self) -> usize {
        self.patch_count * self.basis.count().pow(2)
    }

    /// Global index of each broken function.
    pub fn glue(&self) -> &[usize] {
        &self.glue
    }

    /// Functions per element, `(d+1)^2`.
    pub fn local_count(&self) -> usize {
        (self.degree() + 1).pow(2)
    }

    /// Broken indices of the functions supported on element `(patch, k, k')`,
    /// ordered `a + (d+1) b`.
    pub fn element_broken_dofs(&self, patch: usize, k: usize, kp: usize, out: &mut [usize]) {
        let nb = self.basis.count();
        let d = self.degree();
        for b in 0..=d {
            for a in 0..=d {
                out[a + (d + 1) * b] = patch * nb * nb + (k + a) + nb * (kp + b);
            }
        }
    }

    /// `(patch, k, k')` of element `e`.
    pub fn element_location(&self, e: usize) -> (usize, usize, usize) {
        let n = self.basis.intervals;
        let r = e % (n * n);
        (e / (n * n), r % n, r / n)
    }

    pub fn element_count(&self) -> usize {
        self.patch_count * self.basis.intervals * self.basis.intervals
    }

    /// Global indices of the functions supported on element `e`, ordered `a + (d+1) b`.
    pub fn element_dofs(&self, e: usize, out: &mut [usize]) {
        let (p, k, kp) = self.element_location(e);
        self.element_broken_dofs(p, k, kp, out);
        for g in out[..self.local_count()].iter_mut() {
            *g = self.glue[*g];
        }
    }

    /// Tensor values of the element functions at `(u, v)`.
    #[inline]
    pub fn element_values(&self, k: usize, kp: usize, u: f64, v: f64, val: &mut [f64]) {
        match self.degree() {
            1 => self.element_values_fixed::<2>(k, kp, u, v, val),
            2 => self.element_values_fixed::<3>(k, kp, u, v, val),
            3 => self.element_values_fixed::<4>(k, kp, u, v, val),
            _ => {
                let d = self.degree();
                let mut vu = [0.0; 8];
                let mut vv = [0.0; 8];
                self.basis.values(k, u, &mut vu);
                self.basis.values(kp, v, &mut vv);
                for b in 0..=d {
                    for a in 0..=d {
                        val[a + (d + 1) * b] = vu[a] * vv[b];
                    }
                }
            }
        }
    }

    fn element_values_fixed<const M: usize>(&self, k: usize, kp: usize, u: f64, v: f64, val: &mut [f64]) {
        let m = &self.basis.monomials;
        let cu = &m[k * M * M..(k + 1) * M * M];
        let cv = &m[kp * M * M..(kp + 1) * M * M];
        let mut vu = [0.0; M];
        let mut vv = [0.0; M];
        for r in 0..M {
            let (mut a, mut b) = (cu[r * M + M - 1], cv[r * M + M - 1]);
            for i in (0..M - 1).rev() {
                a = a * u + cu[r * M + i];
                b = b * v + cv[r * M + i];
            }
            vu[r] = a;
            vv[r] = b;
        }
        let val = &mut val[..M * M];
        for b in 0..M {
            for a in 0..M {
                val[a + M * b] = vu[a] * vv[b];
            }
        }
    }

    /// Tensor values and local derivatives of the element functions at `(u, v)`.
    pub fn element_eval(&self, k: usize, kp: usize, u: f64, v: f64, val: &mut [f64], du: &mut [f64], dv: &mut [f64]) {
        let d = self.degree();
        let mut vu = [0.0; 8];
        let mut gu = [0.0; 8];
        let mut vv = [0.0; 8];
        let mut gv = [0.0; 8];
        self.basis.eval(k, u, &mut vu, &mut gu);
        self.basis.eval(kp, v, &mut vv, &mut gv);
        for b in 0..=d {
            for a in 0..=d {
                let i = a + (d + 1) * b;
                val[i] = vu[a] * vv[b];
                du[i] = gu[a] * vv[b];
                dv[i] = vu[a] * gv[b];
            }
        }
    }
}

/// Builds the globally continuous Dirichlet space and the patchwise Neumann space.
pub fn build_spaces(surface: &PolynomialSurface, degree: usize) -> Result<(TraceSpace, TraceSpace)> {
    if degree == 0 {
        return Err(Error::param("continuous trace space needs B-spline degree >= 1"));
    }
    if degree > 6 {
        return Err(Error::param(format!("B-spline degree {degree} exceeds 6")));
    }
    let level = surface.level();
    let basis = BSplineBasis1D::new(level, degree);
    let grid = surface.grid();
    let np = grid.patch_count();
    let n = grid.subdivisions();
    let nb = basis.count();
    let last = nb - 1;
    let mut keys = Vec::with_capacity(np * nb * nb);
    for patch in 0..np {
        let corner = |a: usize, b: usize| grid.global_index(patch, if a == 0 { 0 } else { n }, if b == 0 { 0 } else { n });
        for b in 0..nb {
            for a in 0..nb {
                let on_u = a == 0 || a == last;
                let on_v = b == 0 || b == last;
                let key = match (on_u, on_v) {
                    (false, false) => GlueKey::Interior(patch, a, b),
                    (true, true) => GlueKey::Vertex(corner(a, b)),
                    (true, false) => {
                        let (g0, g1) = (corner(a, 0), corner(a, last));
                        edge_key(g0, g1, b, last)
                    }
                    (false, true) => {
                        let (g0, g1) = (corner(0, b), corner(last, b));
                        edge_key(g0, g1, a, last)
                    }
                };
                keys.push(key);
            }
        }
    }
    let mut groups: BTreeMap<GlueKey, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        groups.entry(*k).or_default().push(i);
    }
    for (k, members) in &groups {
        let ok = match k {
            GlueKey::Interior(..) => members.len() == 1,
            GlueKey::Edge(..) => members.len() == 2,
            GlueKey::Vertex(_) => members.len() >= 3,
        };
        if !ok {
            return Err(Error::Topology(format!(
                "{k:?} is shared by {} patch functions",
                members.len()
            )));
        }
    }
    // number global functions in order of first appearance
    let mut first: BTreeMap<GlueKey, usize> = BTreeMap::new();
    let mut glue = Vec::with_capacity(keys.len());
    for k in &keys {
        let next = first.len();
        glue.push(*first.entry(*k).or_insert(next));
    }
    let dirichlet = TraceSpace {
        kind: SpaceKind::DirichletContinuous,
        basis: basis.clone(),
        level,
        patch_count: np,
        dofs: first.len(),
        glue,
    };
    let broken = np * nb * nb;
    let neumann = TraceSpace {
        kind: SpaceKind::NeumannPatchwise,
        basis,
        level,
        patch_count: np,
        dofs: broken,
        glue: (0..broken).collect(),
    };
    Ok((dirichlet, neumann))
}

fn edge_key(g0: usize, g1: usize, index: usize, last: usize) -> GlueKey {
    if g0 < g1 {
        GlueKey::Edge(g0, g1, index)
    } else {
        GlueKey::Edge(g1, g0, last - index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_primitive, Primitive};

    fn cube(j: u32) -> PolynomialSurface {
        let maps = generate_primitive(&Primitive::Cube {
            center: [0.0; 3],
            half_width: 0.15,
        })
        .unwrap();
        PolynomialSurface::from_maps(&maps, j, (1, 1)).unwrap()
    }

    #[test]
    fn bspline_partition_of_unity_and_derivatives() {
        for d in 1..=4 {
            let b = BSplineBasis1D::new(3, d);
            let mut v = [0.0; 8];
            let mut g = [0.0; 8];
            let mut vp = [0.0; 8];
            let mut vm = [0.0; 8];
            for k in 0..8 {
                for &u in &[0.0, 0.13, 0.5, 0.77, 1.0] {
                    b.eval(k, u, &mut v, &mut g);
                    let s: f64 = v[..=d].iter().sum();
                    assert!((s - 1.0).abs() < 1e-14);
                    let gs: f64 = g[..=d].iter().sum();
                    assert!(gs.abs() < 1e-12);
                    // second-order differences, one-sided at the interval ends
                    let h = 1e-5;
                    let side = if u == 0.0 { 1.0 } else if u == 1.0 { -1.0 } else { 0.0 };
                    let mut gg = [0.0; 8];
                    b.eval(k, u, &mut v, &mut gg);
                    let mut v2 = [0.0; 8];
                    if side == 0.0 {
                        b.eval(k, u + h, &mut vp, &mut g);
                        b.eval(k, u - h, &mut vm, &mut g);
                    } else {
                        b.eval(k, u + side * h, &mut vp, &mut g);
                        b.eval(k, u + 2.0 * side * h, &mut v2, &mut g);
                    }
                    for r in 0..=d {
                        let fd = if side == 0.0 {
                            (vp[r] - vm[r]) / (2.0 * h)
                        } else {
                            side * (-3.0 * v[r] + 4.0 * vp[r] - v2[r]) / (2.0 * h)
                        };
                        assert!((fd - gg[r]).abs() < 1e-6, "d={d} k={k} u={u} r={r}");
                    }
                }
            }
        }
    }

    #[test]
    fn monomial_values_match_the_recursion() {
        for d in 1..=5 {
            let b = BSplineBasis1D::new(3, d);
            let mut v = [0.0; 8];
            let mut g = [0.0; 8];
            let mut m = [0.0; 8];
            for k in 0..8 {
                for i in 0..=20 {
                    let u = i as f64 / 20.0;
                    b.eval(k, u, &mut v, &mut g);
                    b.values(k, u, &mut m);
                    for r in 0..=d {
                        assert!((v[r] - m[r]).abs() < 1e-13, "d={d} k={k} u={u}");
                    }
                }
            }
        }
    }

    #[test]
    fn counts() {
        let s = cube(2);
        let (dir, neu) = build_spaces(&s, 2).unwrap();
        assert_eq!(neu.dof_count(), 216);
        // 6 (n+d-2)^2 interior + 12 (n+d-2) edge + 8 vertex functions
        assert_eq!(dir.dof_count(), 6 * 16 + 12 * 4 + 8);
        let (dir1, _) = build_spaces(&s, 1).unwrap();
        // degree 1 functions correspond to mesh vertices
        assert_eq!(dir1.dof_count(), s.points().len());
    }

    #[test]
    fn degree_zero_is_rejected() {
        assert!(matches!(build_spaces(&cube(1), 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn glued_functions_are_continuous() {
        let maps = generate_primitive(&Primitive::Sphere {
            center: [0.0; 3],
            radius: 0.3,
        })
        .unwrap();
        let s = PolynomialSurface::from_maps(&maps, 2, (4, 4)).unwrap();
        let (dir, _) = build_spaces(&s, 2).unwrap();
        // a random global coefficient vector must give the same value from
        // both sides of every patch seam
        let coef: Vec<f64> = (0..dir.dof_count()).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
        let grid = s.grid();
        let n = grid.subdivisions();
        let mut seen = std::collections::HashMap::new();
        let nl = dir.local_count();
        let mut dofs = vec![0; nl];
        let (mut v, mut du, mut dv) = (vec![0.0; nl], vec![0.0; nl], vec![0.0; nl]);
        for e in 0..s.element_count() {
            let (p, k, kp) = grid.element_position(e);
            dir.element_broken_dofs(p, k, kp, &mut dofs);
            for &(u, w) in &[(0.0, 0.37), (1.0, 0.37), (0.37, 0.0), (0.37, 1.0), (0.0, 0.0)] {
                let on_seam = (k == 0 && u == 0.0) || (k == n - 1 && u == 1.0) || (kp == 0 && w == 0.0) || (kp == n - 1 && w == 1.0);
                if !on_seam {
                    continue;
                }
                dir.element_eval(k, kp, u, w, &mut v, &mut du, &mut dv);
                let val: f64 = dofs.iter().zip(&v).map(|(&i, &b)| coef[dir.glue()[i]] * b).sum();
                let x = s.position(e, u, w);
                let key = [(x[0] * 1e9).round() as i64, (x[1] * 1e9).round() as i64, (x[2] * 1e9).round() as i64];
                if let Some(old) = seen.insert(key, val) {
                    assert!((old - val).abs() < 1e-12, "seam mismatch {old} vs {val}");
                }
            }
        }
    }
}
