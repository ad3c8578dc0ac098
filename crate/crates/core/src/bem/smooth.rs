//! Smooth part `k_per - 1/(4 pi r)` of the operators through separable
//! Chebyshev interpolation of `R(x - y)` on boxes around each surface
//! component.

use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;

use super::elements::ElementData;
use super::QuadratureScheme;
use crate::error::Result;
use crate::kernel::PeriodicKernel;
use crate::quadrature::{barycentric_weights, chebyshev_nodes, lagrange_values};

/// Points of one cluster (a surface component) with its dof rows.
struct Cluster {
    elements: Vec<usize>,
    /// Broken dofs touched by the cluster, ascending.
    dofs: Vec<usize>,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
}

/// Tensor interpolation nodes on a box.
struct Grid3 {
    nodes: [Vec<f64>; 3],
    bary: [Vec<f64>; 3],
}

impl Grid3 {
    fn count(&self) -> usize {
        self.nodes.iter().map(Vec::len).product()
    }

    fn node(&self, a: usize) -> Vector3<f64> {
        let n0 = self.nodes[0].len();
        let n1 = self.nodes[1].len();
        Vector3::new(
            self.nodes[0][a % n0],
            self.nodes[1][(a / n0) % n1],
            self.nodes[2][a / (n0 * n1)],
        )
    }

    fn lagrange(&self, x: &Vector3<f64>, out: &mut [f64]) {
        let mut l: [Vec<f64>; 3] = Default::default();
        for d in 0..3 {
            l[d] = vec![0.0; self.nodes[d].len()];
            lagrange_values(&self.nodes[d], &self.bary[d], x[d], &mut l[d]);
        }
        let mut i = 0;
        for c in &l[2] {
            for b in &l[1] {
                let bc = b * c;
                for a in &l[0] {
                    out[i] = a * bc;
                    i += 1;
                }
            }
        }
    }
}

/// Interpolation order needed on `[lo, hi]` when the nearest singularity of
/// the interpolant lies `dist` outside the interval.
fn axis_order(half: f64, dist: f64, scheme: &QuadratureScheme) -> usize {
    if half <= 1e-12 {
        return 1;
    }
    let a = 1.0 + dist.max(1e-3) / half;
    let rho = a + (a * a - 1.0).sqrt();
    let q = ((1.0 / scheme.smooth_tolerance).ln() / rho.ln()).ceil() as usize;
    q.clamp(scheme.smooth_min_order, scheme.smooth_max_order)
}

fn grid_for(a: &Cluster, b: &Cluster, scheme: &QuadratureScheme) -> Grid3 {
    let mut nodes: [Vec<f64>; 3] = Default::default();
    let mut bary: [Vec<f64>; 3] = Default::default();
    for d in 0..3 {
        let c = 0.5 * (a.lo[d] + a.hi[d]);
        let h = 0.5 * (a.hi[d] - a.lo[d]);
        // R(x - y) is singular where x_d - y_d = +-1
        let dist = ((b.lo[d] + 1.0) - a.hi[d]).min(a.lo[d] - (b.hi[d] - 1.0));
        let q = axis_order(h, dist, scheme);
        nodes[d] = if q == 1 {
            vec![c]
        } else {
            chebyshev_nodes(q).into_iter().map(|t| c + h * t).collect()
        };
        bary[d] = barycentric_weights(&nodes[d]);
    }
    Grid3 { nodes, bary }
}

/// `P[r, a] = sum phi_r w L_a` over the cluster's quadrature points, and the
/// same weighted by each normal component. Returned transposed, nodes by dofs.
fn projections(
    data: &ElementData,
    cl: &Cluster,
    grid: &Grid3,
    q: usize,
    with_normals: bool,
) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let nn = grid.count();
    let row = |g: usize| cl.dofs.binary_search(&g).expect("dof belongs to cluster");
    let mut p = DMatrix::zeros(nn, cl.dofs.len());
    let mut pn = if with_normals {
        vec![DMatrix::zeros(nn, cl.dofs.len()); 3]
    } else {
        Vec::new()
    };
    let mut l = vec![0.0; nn];
    let nl = data.nl;
    for &e in &cl.elements {
        let eq = data.quad(e, q)?;
        let rows: Vec<usize> = data.element_dofs(e).iter().map(|&g| row(g)).collect();
        for i in 0..eq.len() {
            grid.lagrange(&eq.x[i], &mut l);
            for (a, &r) in rows.iter().enumerate() {
                let c = eq.phi[i * nl + a] * eq.w[i];
                if c == 0.0 {
                    continue;
                }
                axpy(c, &l, p.column_mut(r).as_mut_slice());
                for (d, m) in pn.iter_mut().enumerate() {
                    axpy(c * eq.n[i][d], &l, m.column_mut(r).as_mut_slice());
                }
            }
        }
    }
    Ok((p, pn))
}

#[inline]
fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

/// Kernel samples `R(xa - xb)` and `grad R(xa - xb)` on the node grids.
///
/// With `same` both grids coincide and only the upper triangle is evaluated,
/// using that `R` is even.
fn samples(kernel: &PeriodicKernel, ga: &Grid3, gb: &Grid3, grad: bool, same: bool) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let na = ga.count();
    let nb = gb.count();
    let xb: Vec<Vector3<f64>> = (0..nb).map(|b| gb.node(b)).collect();
    let rows: Vec<(Vec<f64>, Vec<[f64; 3]>)> = (0..na)
        .into_par_iter()
        .map(|a| {
            let xa = ga.node(a);
            let first = if same { a } else { 0 };
            let mut v = Vec::with_capacity(nb - first);
            let mut g = Vec::with_capacity(if grad { nb - first } else { 0 });
            for y in &xb[first..] {
                let (rv, rg) = kernel.smooth_remainder(&(xa - y));
                v.push(rv);
                if grad {
                    g.push([rg[0], rg[1], rg[2]]);
                }
            }
            (v, g)
        })
        .collect();
    let at = |a: usize, b: usize| -> (usize, usize, f64) {
        if !same {
            (a, b, 1.0)
        } else if b >= a {
            (a, b - a, 1.0)
        } else {
            (b, a - b, -1.0)
        }
    };
    let r = DMatrix::from_fn(na, nb, |a, b| {
        let (i, j, _) = at(a, b);
        rows[i].0[j]
    });
    let g = if grad {
        (0..3)
            .map(|d| {
                DMatrix::from_fn(na, nb, |a, b| {
                    let (i, j, s) = at(a, b);
                    s * rows[i].1[j][d]
                })
            })
            .collect()
    } else {
        Vec::new()
    };
    (r, g)
}

/// Adds the smooth parts of the broken single- and double-layer matrices.
pub(crate) fn add_smooth_part(
    data: &ElementData,
    kernel: &PeriodicKernel,
    scheme: &QuadratureScheme,
    q: usize,
    mut s: Option<&mut DMatrix<f64>>,
    mut k: Option<&mut DMatrix<f64>>,
) -> Result<()> {
    let surface = data.surface;
    let ncomp = surface.component_count();
    let comp = surface.element_components();
    let mut clusters: Vec<Cluster> = (0..ncomp)
        .map(|_| Cluster {
            elements: Vec::new(),
            dofs: Vec::new(),
            lo: Vector3::repeat(f64::INFINITY),
            hi: Vector3::repeat(f64::NEG_INFINITY),
        })
        .collect();
    for e in 0..data.element_count() {
        let cl = &mut clusters[comp[e]];
        cl.elements.push(e);
        cl.dofs.extend_from_slice(data.element_dofs(e));
        for x in &data.quad(e, q)?.x {
            cl.lo = cl.lo.inf(x);
            cl.hi = cl.hi.sup(x);
        }
    }
    for cl in &mut clusters {
        cl.dofs.sort_unstable();
        cl.dofs.dedup();
    }
    let want_k = k.is_some();
    for ia in 0..ncomp {
        for ib in ia..ncomp {
            let (ca, cb) = (&clusters[ia], &clusters[ib]);
            let ga = grid_for(ca, cb, scheme);
            let gb = grid_for(cb, ca, scheme);
            let (pa, pna) = projections(data, ca, &ga, q, want_k)?;
            let (pb, pnb) = if ia == ib {
                (pa.clone(), pna.clone())
            } else {
                projections(data, cb, &gb, q, want_k)?
            };
            let (r, g) = samples(kernel, &ga, &gb, want_k, ia == ib);
            if let Some(s) = s.as_deref_mut() {
                let block = pa.transpose() * (&r * &pb);
                for (i, &gi) in ca.dofs.iter().enumerate() {
                    for (j, &gj) in cb.dofs.iter().enumerate() {
                        s[(gi, gj)] += block[(i, j)];
                        if ia != ib {
                            s[(gj, gi)] += block[(i, j)];
                        }
                    }
                }
            }
            if let Some(k) = k.as_deref_mut() {
                // K[x, y] = -sum_d d_d R(x - y) n_y,d
                let pat = pa.transpose();
                let mut ab = DMatrix::zeros(ca.dofs.len(), cb.dofs.len());
                // transposed block of the (b, a) interaction
                let mut ba = DMatrix::zeros(ca.dofs.len(), cb.dofs.len());
                for d in 0..3 {
                    ab -= &pat * (&g[d] * &pnb[d]);
                    if ia != ib {
                        ba += pna[d].transpose() * (&g[d] * &pb);
                    }
                }
                for (i, &gi) in ca.dofs.iter().enumerate() {
                    for (j, &gj) in cb.dofs.iter().enumerate() {
                        k[(gi, gj)] += ab[(i, j)];
                        if ia != ib {
                            k[(gj, gi)] += ba[(i, j)];
                        }
                    }
                }
            }
        }
    }
    Ok(())
}
