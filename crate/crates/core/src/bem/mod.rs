//! Galerkin boundary element discretization of the periodic single- and
//! double-layer operators on B-spline trace spaces.

mod elements;
pub mod singular;
mod smooth;
mod space;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DMatrixView, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use space::{build_spaces, BSplineBasis1D, SpaceKind, TraceSpace};

use elements::ElementData;
use singular::{classify, coincident_rule, edge_rule, vertex_rule, PairClass, PairRule};

use crate::error::{Error, Result};
use crate::geometry::PolynomialSurface;
use crate::kernel::PeriodicKernel;

const FOUR_PI: f64 = 4.0 * PI;

/// Quadrature settings for operator assembly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureScheme {
    /// Gauss points per direction of the regularized rules for coincident,
    /// edge-adjacent and vertex-adjacent pairs.
    pub singular_orders: [usize; 3],
    /// Target relative error of the separated-pair tensor Gauss rule.
    pub far_tolerance: f64,
    pub far_min_order: usize,
    pub far_max_order: usize,
    /// Target error of the Chebyshev interpolant of the smooth kernel part.
    pub smooth_tolerance: f64,
    pub smooth_min_order: usize,
    pub smooth_max_order: usize,
    /// Split the kernel into its free-space part and a smooth remainder. When
    /// false the full kernel is integrated with the far-field rule on
    /// separated pairs and touching pairs fall back to the split.
    pub kernel_split: bool,
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        QuadratureScheme {
            singular_orders: [5, 5, 5],
            far_tolerance: 1e-9,
            far_min_order: 3,
            far_max_order: 12,
            smooth_tolerance: 1e-8,
            smooth_min_order: 4,
            smooth_max_order: 12,
            kernel_split: true,
        }
    }
}

impl QuadratureScheme {
    fn validate(&self) -> Result<()> {
        if self.singular_orders.contains(&0)
            || self.far_min_order == 0
            || self.far_min_order > self.far_max_order
            || self.far_max_order > 40
            || self.smooth_min_order == 0
            || self.smooth_min_order > self.smooth_max_order
            || !(self.far_tolerance > 0.0 && self.smooth_tolerance > 0.0)
        {
            return Err(Error::param(format!("invalid quadrature scheme {self:?}")));
        }
        Ok(())
    }

    /// Tensor Gauss order for a separated pair at relative distance `sep`
    /// (gap between bounding spheres over the larger diameter).
    pub fn far_order(&self, sep: f64) -> usize {
        if sep <= 0.0 {
            return self.far_max_order;
        }
        let a = 1.0 + 2.0 * sep;
        let rho = a + (a * a - 1.0).sqrt();
        let q = ((1.0 / self.far_tolerance).ln() / (2.0 * rho.ln())).ceil() as usize;
        q.clamp(self.far_min_order, self.far_max_order)
    }
}

/// Dense Galerkin matrices of one surface.
///
/// `single_layer` is Dirichlet-test x Neumann-trial, `double_layer`
/// Dirichlet x Dirichlet, `mass_mix` Dirichlet x Neumann, `mass_neumann`
/// Neumann x Neumann, and `rhs[i]` holds `int <e_i, n> psi_k` over the
/// Neumann functions. `gram` is the Neumann x Neumann single layer.
#[derive(Clone, Debug)]
pub struct OperatorSet {
    pub single_layer: DMatrix<f64>,
    pub double_layer: DMatrix<f64>,
    pub mass_mix: DMatrix<f64>,
    pub mass_neumann: DMatrix<f64>,
    pub mass_dirichlet: DMatrix<f64>,
    pub rhs: [DVector<f64>; 3],
    pub gram: DMatrix<f64>,
}

impl OperatorSet {
    /// Smallest eigenvalue of the Neumann single-layer Gram matrix restricted
    /// to densities with zero mean.
    pub fn gram_min_eigenvalue(&self) -> f64 {
        let m = self.mass_neumann.row_sum().transpose();
        let z = orthogonal_complement(&m);
        let a = z.transpose() * &self.gram * &z;
        let sym = (&a + a.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.min()
    }

    pub fn all_finite(&self) -> bool {
        [
            &self.single_layer,
            &self.double_layer,
            &self.mass_mix,
            &self.mass_neumann,
            &self.mass_dirichlet,
            &self.gram,
        ]
        .iter()
        .all(|m| m.iter().all(|x| x.is_finite()))
            && self.rhs.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }
}

/// Orthonormal basis of the complement of `v` through a Householder reflection.
fn orthogonal_complement(v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    let mut u = v.normalize();
    let s = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    u[0] += s;
    let un = u.norm_squared();
    let mut h = DMatrix::identity(n, n);
    h -= (&u * u.transpose()) * (2.0 / un);
    h.columns(1, n - 1).into_owned()
}

/// Which broken operators to assemble.
#[derive(Clone, Copy)]
struct Want {
    s: bool,
    k: bool,
}

/// Local blocks of one element pair in broken element numbering.
struct PairBlock {
    f: usize,
    s: Vec<f64>,
    k_ef: Vec<f64>,
    k_fe: Vec<f64>,
}

/// Quadrature order of the element rule used for mass, right-hand sides and
/// the smooth kernel part.
fn element_order(surface: &PolynomialSurface, space: &TraceSpace) -> usize {
    let (p1, p2) = surface.degree();
    space.degree() + p1.max(p2) + 1
}

fn check_space(surface: &PolynomialSurface, space: &TraceSpace) -> Result<()> {
    if space.level() != surface.level() {
        return Err(Error::param(format!(
            "space level {} differs from surface level {}",
            space.level(),
            surface.level()
        )));
    }
    if space.broken_count() != surface.patch_count() * space.basis().count().pow(2) {
        return Err(Error::param("space does not match the surface patches"));
    }
    Ok(())
}

/// Singular part of a touching pair with a regularizing rule.
#[allow(clippy::too_many_arguments)]
fn touching_pair(
    data: &ElementData,
    e: usize,
    f: usize,
    rule: &PairRule,
    sym_e: singular::Symmetry,
    sym_f: singular::Symmetry,
    want: Want,
    out: &mut PairBlock,
) -> Result<()> {
    let nl = data.nl;
    let np = rule.len();
    let coincident = e == f;
    // column-major nl x np blocks: weighted test functions per kernel, plain trial functions
    let with_fe = want.k && !coincident;
    let mut a_s = vec![0.0; if want.s { np * nl } else { 0 }];
    let mut a_ef = vec![0.0; if want.k { np * nl } else { 0 }];
    let mut a_fe = vec![0.0; if with_fe { np * nl } else { 0 }];
    let mut b_f = vec![0.0; np * nl];
    let mut b_e = vec![0.0; if with_fe { np * nl } else { 0 }];
    let mut pe = [0.0; 49];
    for (i, &(xh, yh, w)) in rule.points.iter().enumerate() {
        let [ue, ve] = sym_e.apply(xh);
        let [uf, vf] = sym_f.apply(yh);
        let se = data.surface.sample(e, ue, ve)?;
        let sf = data.surface.sample(f, uf, vf)?;
        let pf = &mut b_f[i * nl..(i + 1) * nl];
        data.basis(e, ue, ve, &mut pe[..nl]);
        data.basis(f, uf, vf, pf);
        let z = se.position - sf.position;
        let ir = 1.0 / z.norm();
        let ir3 = ir * ir * ir / FOUR_PI;
        let ww = w * se.measure * sf.measure;
        let r = i * nl..(i + 1) * nl;
        if want.s {
            let ks = ww * ir / FOUR_PI;
            a_s[r.clone()].iter_mut().zip(&pe[..nl]).for_each(|(o, &p)| *o = ks * p);
        }
        if want.k {
            let kef = ww * z.dot(&sf.normal) * ir3;
            a_ef[r.clone()].iter_mut().zip(&pe[..nl]).for_each(|(o, &p)| *o = kef * p);
            if with_fe {
                // K(f, e) pairs f-test with e-trial; accumulated transposed
                let kfe = -ww * z.dot(&se.normal) * ir3;
                a_fe[r.clone()].iter_mut().zip(pf.iter()).for_each(|(o, &p)| *o = kfe * p);
                b_e[r].copy_from_slice(&pe[..nl]);
            }
        }
    }
    let store = |a: &[f64], b: &[f64], dst: &mut [f64], transpose: bool| {
        // dst (+)= A B^T with A, B stored point-major (nl values per point)
        let (rs, cs) = if transpose { (1, nl as isize) } else { (nl as isize, 1) };
        unsafe {
            matrixmultiply::dgemm(
                nl,
                np,
                nl,
                1.0,
                a.as_ptr(),
                1,
                nl as isize,
                b.as_ptr(),
                nl as isize,
                1,
                1.0,
                dst.as_mut_ptr(),
                rs,
                cs,
            );
        }
    };
    if want.s {
        store(&a_s, &b_f, &mut out.s, false);
    }
    if want.k {
        store(&a_ef, &b_f, &mut out.k_ef, false);
        if with_fe {
            store(&a_fe, &b_e, &mut out.k_fe, true);
        }
    }
    Ok(())
}

/// Separated pair with the tensor Gauss rule on both elements.
fn separated_pair(
    data: &ElementData,
    e: usize,
    f: usize,
    q: usize,
    free_space: bool,
    kernel: &PeriodicKernel,
    want: Want,
    out: &mut PairBlock,
) -> Result<()> {
    let nl = data.nl;
    let qe = data.quad(e, q)?;
    let qf = data.quad(f, q)?;
    let (ne, nf) = (qe.len(), qf.len());
    // kernel values for (S, K_ef, K_fe), stored as column-major nf x 3ne
    let nk = if want.k { 3 } else { 1 };
    let mut kk = vec![0.0; nk * ne * nf];
    for i in 0..ne {
        for j in 0..nf {
            let z = qe.x[i] - qf.x[j];
            let (s, a, b) = if free_space {
                let ir = 1.0 / z.norm();
                let ir3 = ir * ir * ir / FOUR_PI;
                (ir / FOUR_PI, z.dot(&qf.n[j]) * ir3, -z.dot(&qe.n[i]) * ir3)
            } else {
                let (v, g) = kernel.eval_with_gradient(&z)?;
                (v, -g.dot(&qf.n[j]), g.dot(&qe.n[i]))
            };
            let w = qe.w[i] * qf.w[j];
            kk[i * nf + j] = s * w;
            if want.k {
                kk[(ne + i) * nf + j] = a * w;
                kk[(2 * ne + i) * nf + j] = b * w;
            }
        }
    }
    let phi_f = DMatrixView::from_slice(&qf.phi, nl, nf);
    let phi_e = DMatrixView::from_slice(&qe.phi, nl, ne);
    let t = phi_f * DMatrixView::from_slice(&kk, nf, nk * ne);
    let store = |m: usize, dst: &mut [f64]| {
        let r = phi_e * t.columns(m * ne, ne).transpose();
        for a in 0..nl {
            for b in 0..nl {
                dst[a * nl + b] += r[(a, b)];
            }
        }
    };
    if want.s {
        store(0, &mut out.s);
    }
    if want.k {
        store(1, &mut out.k_ef);
        if e != f {
            store(2, &mut out.k_fe);
        }
    }
    Ok(())
}

/// All blocks of row `e` against trial elements `f >= e`.
fn row_blocks(
    data: &ElementData,
    e: usize,
    kernel: &PeriodicKernel,
    scheme: &QuadratureScheme,
    rules: &[PairRule; 3],
    want: Want,
) -> Result<Vec<PairBlock>> {
    let nl = data.nl;
    let ne = data.element_count();
    let mut out = Vec::with_capacity(ne - e);
    for f in e..ne {
        let mut block = PairBlock {
            f,
            s: vec![0.0; nl * nl],
            k_ef: vec![0.0; nl * nl],
            k_fe: vec![0.0; nl * nl],
        };
        match classify(&data.corners[e], &data.corners[f]) {
            PairClass::Separated => {
                let q = scheme.far_order(data.separation(e, f));
                separated_pair(data, e, f, q, scheme.kernel_split, kernel, want, &mut block)?;
            }
            PairClass::Coincident => {
                let id = singular::Symmetry::IDENTITY;
                touching_pair(data, e, f, &rules[0], id, id, want, &mut block)?;
            }
            PairClass::Edge { sym_test, sym_trial } => {
                touching_pair(data, e, f, &rules[1], sym_test, sym_trial, want, &mut block)?;
            }
            PairClass::Vertex { sym_test, sym_trial } => {
                touching_pair(data, e, f, &rules[2], sym_test, sym_trial, want, &mut block)?;
            }
        }
        let finite = block
            .s
            .iter()
            .chain(&block.k_ef)
            .chain(&block.k_fe)
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Assembly { test: e, trial: f });
        }
        out.push(block);
    }
    Ok(out)
}

/// Elements per parallel batch; the scatter runs sequentially in element order.
const ROW_BATCH: usize = 16;

/// Broken single- and double-layer matrices over the patchwise numbering.
fn assemble_broken(
    surface: &PolynomialSurface,
    space: &TraceSpace,
    kernel: &PeriodicKernel,
    scheme: &QuadratureScheme,
    want: Want,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    scheme.validate()?;
    check_space(surface, space)?;
    let qm = element_order(surface, space);
    let data = ElementData::new(surface, space, scheme.far_max_order.max(qm));
    let nb = space.broken_count();
    let nl = data.nl;
    let ne = data.element_count();
    let [nc, ned, nv] = scheme.singular_orders;
    let rules = [coincident_rule(nc), edge_rule(ned), vertex_rule(nv)];
    let mut s = DMatrix::zeros(if want.s { nb } else { 0 }, if want.s { nb } else { 0 });
    let mut k = DMatrix::zeros(if want.k { nb } else { 0 }, if want.k { nb } else { 0 });
    let clock = std::time::Instant::now();
    let mut start = 0;
    while start < ne {
        let end = (start + ROW_BATCH).min(ne);
        let batch: Vec<Result<Vec<PairBlock>>> = (start..end)
            .into_par_iter()
            .map(|e| row_blocks(&data, e, kernel, scheme, &rules, want))
            .collect();
        for (e, blocks) in (start..end).zip(batch) {
            let de = data.element_dofs(e);
            for block in blocks? {
                let df = data.element_dofs(block.f);
                let same = block.f == e;
                for (a, &ga) in de.iter().enumerate() {
                    for (b, &gb) in df.iter().enumerate() {
                        let i = a * nl + b;
                        if want.s {
                            s[(ga, gb)] += block.s[i];
                            if !same {
                                s[(gb, ga)] += block.s[i];
                            }
                        }
                        if want.k {
                            k[(ga, gb)] += block.k_ef[i];
                            if !same {
                                k[(gb, ga)] += block.k_fe[i];
                            }
                        }
                    }
                }
            }
        }
        start = end;
    }
    log::debug!("pair quadrature on {ne} elements: {:?}", clock.elapsed());
    let clock = std::time::Instant::now();
    if scheme.kernel_split {
        smooth::add_smooth_part(
            &data,
            kernel,
            scheme,
            qm,
            want.s.then_some(&mut s),
            want.k.then_some(&mut k),
        )?;
    } else {
        touching_smooth_part(&data, kernel, qm, want, &mut s, &mut k)?;
    }
    log::debug!("smooth part: {:?}", clock.elapsed());
    Ok((s, k))
}

/// Smooth remainder on touching pairs by plain Gauss, used when separated
/// pairs carry the full kernel.
fn touching_smooth_part(
    data: &ElementData,
    kernel: &PeriodicKernel,
    q: usize,
    want: Want,
    s: &mut DMatrix<f64>,
    k: &mut DMatrix<f64>,
) -> Result<()> {
    let ne = data.element_count();
    for e in 0..ne {
        let qe = data.quad(e, q)?;
        for f in 0..ne {
            if classify(&data.corners[e], &data.corners[f]) == PairClass::Separated {
                continue;
            }
            let qf = data.quad(f, q)?;
            let (de, df) = (data.element_dofs(e), data.element_dofs(f));
            for i in 0..qe.len() {
                for j in 0..qf.len() {
                    let (v, g) = kernel.smooth_remainder(&(qe.x[i] - qf.x[j]));
                    let w = qe.w[i] * qf.w[j];
                    let kd = -g.dot(&qf.n[j]);
                    for (a, &ga) in de.iter().enumerate() {
                        let pa = qe.phi[i * data.nl + a] * w;
                        for (b, &gb) in df.iter().enumerate() {
                            let pb = qf.phi[j * data.nl + b];
                            if want.s {
                                s[(ga, gb)] += pa * v * pb;
                            }
                            if want.k {
                                k[(ga, gb)] += pa * kd * pb;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Broken mass matrix and right-hand sides `int <e_i, n> phi`.
fn broken_mass(surface: &PolynomialSurface, space: &TraceSpace) -> Result<(DMatrix<f64>, [DVector<f64>; 3])> {
    check_space(surface, space)?;
    let q = element_order(surface, space);
    let data = ElementData::new(surface, space, q);
    let nb = space.broken_count();
    let nl = data.nl;
    let mut m = DMatrix::zeros(nb, nb);
    let mut b = [DVector::zeros(nb), DVector::zeros(nb), DVector::zeros(nb)];
    for e in 0..data.element_count() {
        let eq = data.quad(e, q)?;
        let dofs = data.element_dofs(e);
        for i in 0..eq.len() {
            let phi = &eq.phi[i * nl..(i + 1) * nl];
            for (a, &ga) in dofs.iter().enumerate() {
                let c = phi[a] * eq.w[i];
                for (bb, &gb) in dofs.iter().enumerate() {
                    m[(ga, gb)] += c * phi[bb];
                }
                for d in 0..3 {
                    b[d][ga] += c * eq.n[i][d];
                }
            }
        }
    }
    Ok((m, b))
}

/// `G^T A` for the glue map `G` (rows summed into global functions).
fn glue_rows(space: &TraceSpace, a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(space.dof_count(), a.ncols());
    for (i, &g) in space.glue().iter().enumerate() {
        let mut row = out.row_mut(g);
        row += a.row(i);
    }
    out
}

/// `A G` for the glue map `G`.
fn glue_cols(space: &TraceSpace, a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), space.dof_count());
    for (j, &g) in space.glue().iter().enumerate() {
        let mut col = out.column_mut(g);
        col += a.column(j);
    }
    out
}

fn check_pair(dirichlet: &TraceSpace, neumann: &TraceSpace) -> Result<()> {
    if dirichlet.kind() != SpaceKind::DirichletContinuous || neumann.kind() != SpaceKind::NeumannPatchwise {
        return Err(Error::param("expected (dirichlet_continuous, neumann_patchwise) spaces"));
    }
    if dirichlet.degree() != neumann.degree() || dirichlet.broken_count() != neumann.broken_count() {
        return Err(Error::param("trace spaces must share degree and level"));
    }
    Ok(())
}

/// Single-layer matrix, Dirichlet-test x Neumann-trial.
pub fn assemble_single_layer(
    surface: &PolynomialSurface,
    spaces: (&TraceSpace, &TraceSpace),
    kernel: &PeriodicKernel,
    scheme: &QuadratureScheme,
) -> Result<DMatrix<f64>> {
    check_pair(spaces.0, spaces.1)?;
    let (s, _) = assemble_broken(surface, spaces.1, kernel, scheme, Want { s: true, k: false })?;
    Ok(glue_rows(spaces.0, &s))
}

/// Double-layer matrix, Dirichlet x Dirichlet, kernel `d/dn_y k_per(x - y)`.
pub fn assemble_double_layer(
    surface: &PolynomialSurface,
    spaces: (&TraceSpace, &TraceSpace),
    kernel: &PeriodicKernel,
    scheme: &QuadratureScheme,
) -> Result<DMatrix<f64>> {
    check_pair(spaces.0, spaces.1)?;
    let (_, k) = assemble_broken(surface, spaces.1, kernel, scheme, Want { s: false, k: true })?;
    Ok(glue_cols(spaces.0, &glue_rows(spaces.0, &k)))
}

/// Mass matrices and right-hand sides: `(M_mix, M_N, b)`.
pub fn assemble_mass_and_rhs(
    surface: &PolynomialSurface,
    spaces: (&TraceSpace, &TraceSpace),
) -> Result<(DMatrix<f64>, DMatrix<f64>, [DVector<f64>; 3])> {
    check_pair(spaces.0, spaces.1)?;
    let (m, b) = broken_mass(surface, spaces.1)?;
    Ok((glue_rows(spaces.0, &m), m, b))
}

/// Everything the cell solver needs, sharing one pass over the element pairs.
pub fn assemble_operators(
    surface: &PolynomialSurface,
    spaces: (&TraceSpace, &TraceSpace),
    kernel: &PeriodicKernel,
    scheme: &QuadratureScheme,
) -> Result<OperatorSet> {
    check_pair(spaces.0, spaces.1)?;
    let (d, _) = spaces;
    let (s, k) = assemble_broken(surface, spaces.1, kernel, scheme, Want { s: true, k: true })?;
    let (m, rhs) = broken_mass(surface, spaces.1)?;
    let mass_mix = glue_rows(d, &m);
    let ops = OperatorSet {
        single_layer: glue_rows(d, &s),
        double_layer: glue_cols(d, &glue_rows(d, &k)),
        mass_dirichlet: glue_cols(d, &mass_mix),
        mass_mix,
        mass_neumann: m,
        rhs,
        gram: s,
    };
    if !ops.all_finite() {
        return Err(Error::Assembly { test: usize::MAX, trial: usize::MAX });
    }
    Ok(ops)
}

/// Local single- and double-layer blocks of one element pair with the full
/// kernel and a given far-field order, for quadrature convergence checks.
pub fn separated_pair_blocks(
    surface: &PolynomialSurface,
    space: &TraceSpace,
    kernel: &PeriodicKernel,
    e: usize,
    f: usize,
    order: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let data = ElementData::new(surface, space, order);
    let nl = data.nl;
    let mut block = PairBlock {
        f,
        s: vec![0.0; nl * nl],
        k_ef: vec![0.0; nl * nl],
        k_fe: vec![0.0; nl * nl],
    };
    separated_pair(&data, e, f, order, false, kernel, Want { s: true, k: true }, &mut block)?;
    Ok((block.s, block.k_ef))
}

/// Pair classification of two elements of a surface.
pub fn classify_elements(surface: &PolynomialSurface, e: usize, f: usize) -> PairClass {
    let g = surface.grid();
    classify(&g.element_corners(e), &g.element_corners(f))
}

/// Far-field quadrature order the scheme selects for a separated pair.
pub fn far_order_for(surface: &PolynomialSurface, space: &TraceSpace, scheme: &QuadratureScheme, e: usize, f: usize) -> usize {
    let data = ElementData::new(surface, space, 1);
    scheme.far_order(data.separation(e, f))
}
