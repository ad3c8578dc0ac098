//! Discrete Neumann-to-Dirichlet solve for the three cell functions.

use nalgebra::{DMatrix, DVector, Dyn, Vector3, LU};

use crate::bem::{OperatorSet, SpaceKind, TraceSpace};
use crate::error::{Error, Result};
use crate::geometry::PolynomialSurface;

/// Largest accepted 1-norm condition estimate of the system matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Dirichlet traces `w_1, w_2, w_3` of the cell functions on the surface.
#[derive(Clone, Debug)]
pub struct CellSolution {
    pub w: [DVector<f64>; 3],
    space: TraceSpace,
    /// 1-norm condition estimate of the system matrix.
    pub condition: f64,
    /// Largest relative residual of the three solves, before gauge fixing.
    pub residual: f64,
}

/// `A^{-1}` and `A^{-T}` products from one LU factorization.
struct Factor {
    lu: LU<f64, Dyn, Dyn>,
    l: DMatrix<f64>,
    u: DMatrix<f64>,
}

impl Factor {
    fn new(a: DMatrix<f64>) -> Self {
        let lu = a.lu();
        let l = lu.l();
        let u = lu.u();
        Factor { lu, l, u }
    }

    fn solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        self.lu.solve(b)
    }

    /// Solves `A^T x = b` with `P A = L U`.
    fn solve_transpose(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        let y = self.u.tr_solve_upper_triangular(b)?;
        let mut z = self.l.tr_solve_lower_triangular(&y)?;
        self.lu.p().inv_permute_rows(&mut z);
        Some(z)
    }
}

/// Hager's estimate of `||A^{-1}||_1`.
fn inverse_norm_estimate(f: &Factor, n: usize) -> Option<f64> {
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let y = f.solve(&x)?;
        est = y.lp_norm(1);
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = f.solve_transpose(&xi)?;
        let j = z.iamax();
        if z[j].abs() <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[j] = 1.0;
    }
    Some(est)
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max)
}

/// Solves `(M/2 - K) w_i = S M_N^{-1} b_i` for `i = 1, 2, 3` with one
/// factorization and fixes each `w_i` to zero surface mean.
pub fn solve_n2d(ops: &OperatorSet, dirichlet: &TraceSpace) -> Result<CellSolution> {
    if dirichlet.kind() != SpaceKind::DirichletContinuous || dirichlet.dof_count() != ops.double_layer.nrows() {
        return Err(Error::param("solve_n2d needs the Dirichlet space of the operator set"));
    }
    let n = ops.double_layer.nrows();
    let a = &ops.mass_dirichlet * 0.5 - &ops.double_layer;
    let anorm = one_norm(&a);
    let factor = Factor::new(a.clone());
    let condition = inverse_norm_estimate(&factor, n)
        .map(|inv| inv * anorm)
        .unwrap_or(f64::INFINITY);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Solver(format!("condition estimate {condition:e} exceeds {MAX_CONDITION:e}")));
    }
    let mass_n = ops.mass_neumann.clone().cholesky().ok_or_else(|| {
        Error::Solver("Neumann mass matrix is not positive definite".into())
    })?;
    let mean = ops.mass_dirichlet.row_sum().transpose();
    let area = mean.sum();
    let mut residual: f64 = 0.0;
    let mut w: [DVector<f64>; 3] = Default::default();
    for i in 0..3 {
        let rhs = &ops.single_layer * mass_n.solve(&ops.rhs[i]);
        let mut x = factor
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("singular system matrix".into()))?;
        let r = (&a * &x - &rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE);
        residual = residual.max(r);
        let shift = mean.dot(&x) / area;
        x.add_scalar_mut(-shift);
        w[i] = x;
    }
    log::debug!("n2d solve: {n} unknowns, condition {condition:.3e}, residual {residual:.3e}");
    Ok(CellSolution {
        w,
        space: dirichlet.clone(),
        condition,
        residual,
    })
}

impl CellSolution {
    /// Wraps given coefficients, e.g. an interpolant.
    pub fn from_coefficients(space: &TraceSpace, w: [DVector<f64>; 3]) -> Result<Self> {
        if w.iter().any(|v| v.len() != space.dof_count()) {
            return Err(Error::param("coefficient length differs from the space dimension"));
        }
        Ok(CellSolution {
            w,
            space: space.clone(),
            condition: f64::NAN,
            residual: f64::NAN,
        })
    }

    pub fn space(&self) -> &TraceSpace {
        &self.space
    }

    pub fn level(&self) -> u32 {
        self.space.level()
    }

    pub fn degree(&self) -> usize {
        self.space.degree()
    }

    /// Value and local derivatives of `w_i` on element `e`.
    fn local(&self, e: usize, u: f64, v: f64, i: usize) -> (f64, f64, f64) {
        let nl = self.space.local_count();
        let mut dofs = [0usize; 49];
        let mut val = [0.0; 49];
        let mut du = [0.0; 49];
        let mut dv = [0.0; 49];
        self.space.element_dofs(e, &mut dofs);
        let (_, k, kp) = self.space.element_location(e);
        self.space
            .element_eval(k, kp, u, v, &mut val[..nl], &mut du[..nl], &mut dv[..nl]);
        let c = &self.w[i];
        (0..nl).fold((0.0, 0.0, 0.0), |(a, b, d), l| {
            let x = c[dofs[l]];
            (a + x * val[l], b + x * du[l], d + x * dv[l])
        })
    }

    /// `w_i` at local coordinates `(u, v)` of element `e`.
    pub fn trace_eval(&self, e: usize, u: f64, v: f64, i: usize) -> f64 {
        self.local(e, u, v, i).0
    }

    /// Surface gradient `[s_u, s_v] G^{-1} (w_u, w_v)` of `w_i`.
    pub fn tangential_gradient(&self, surface: &PolynomialSurface, e: usize, u: f64, v: f64, i: usize) -> Result<Vector3<f64>> {
        let (_, wu, wv) = self.local(e, u, v, i);
        let (_, su, sv) = surface.eval(e, u, v);
        surface_gradient(su, sv, wu, wv).ok_or_else(|| Error::DegenerateElement {
            element: e,
            detail: format!("degenerate metric at ({u}, {v})"),
        })
    }
}

/// Surface gradient from tangents and the local derivatives of a scalar.
pub(crate) fn surface_gradient(su: Vector3<f64>, sv: Vector3<f64>, wu: f64, wv: f64) -> Option<Vector3<f64>> {
    let (g11, g12, g22) = (su.dot(&su), su.dot(&sv), sv.dot(&sv));
    let det = g11 * g22 - g12 * g12;
    if !(det >= 1e-14) {
        return None;
    }
    let a = (g22 * wu - g12 * wv) / det;
    let b = (g11 * wv - g12 * wu) / det;
    Some(su * a + sv * b)
}

/// Neumann datum `-<n, e_i>` at a surface point.
pub fn neumann_data(surface: &PolynomialSurface, e: usize, u: f64, v: f64, i: usize) -> Result<f64> {
    Ok(-surface.sample(e, u, v)?.normal[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bem::{assemble_operators, build_spaces, QuadratureScheme};
    use crate::geometry::{generate_primitive, Primitive};
    use crate::kernel::tests::kernel12;

    fn sphere(j: u32, r: f64) -> PolynomialSurface {
        let maps = generate_primitive(&Primitive::Sphere { center: [0.0; 3], radius: r }).unwrap();
        let p = 4.min(1 << j);
        PolynomialSurface::from_maps(&maps, j, (p, p)).unwrap()
    }

    fn solve(s: &PolynomialSurface) -> CellSolution {
        let (d, n) = build_spaces(s, 2).unwrap();
        let ops = assemble_operators(s, (&d, &n), kernel12(), &QuadratureScheme::default()).unwrap();
        solve_n2d(&ops, &d).unwrap()
    }

    #[test]
    fn hager_estimate_matches_the_exact_norm_on_a_small_matrix() {
        let a = DMatrix::from_row_slice(4, 4, &[
            4.0, -1.0, 0.0, 0.5,
            -1.0, 4.0, -1.0, 0.0,
            0.0, -2.0, 4.0, -1.0,
            0.3, 0.0, -1.0, 3.0,
        ]);
        let inv = a.clone().try_inverse().unwrap();
        let exact = one_norm(&inv);
        let est = inverse_norm_estimate(&Factor::new(a.clone()), 4).unwrap();
        assert!(est <= exact * (1.0 + 1e-12) && est >= 0.3 * exact, "{est} vs {exact}");
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let x = Factor::new(a.clone()).solve_transpose(&b).unwrap();
        assert!((a.transpose() * x - b).amax() < 1e-13);
    }

    #[test]
    fn sphere_solution_has_the_dilute_sign_zero_mean_and_small_residual() {
        let r = 0.15;
        let s = sphere(2, r);
        let sol = solve(&s);
        assert!(sol.residual <= 1e-10, "{}", sol.residual);
        assert!(sol.condition > 1.0 && sol.condition < 1e6);
        let (d, _) = build_spaces(&s, 2).unwrap();
        let mut mean = [0.0; 3];
        let mut area = 0.0;
        for e in 0..s.element_count() {
            for &(u, v, w) in &crate::quadrature::gauss_square(6) {
                let smp = s.sample(e, u, v).unwrap();
                area += w * smp.measure;
                for (i, m) in mean.iter_mut().enumerate() {
                    *m += w * smp.measure * sol.trace_eval(e, u, v, i);
                }
                // w_3 ~ x_3 / 2 for a small ball
                let x = smp.position;
                assert!((sol.trace_eval(e, u, v, 2) - 0.5 * x.z).abs() <= 0.02 * r);
                let g = sol.tangential_gradient(&s, e, u, v, 0).unwrap();
                assert!(g.dot(&smp.normal).abs() <= 1e-12);
            }
        }
        assert!(mean.iter().all(|m| (m / area).abs() <= 1e-10), "{mean:?}");
        assert_eq!(sol.space().dof_count(), d.dof_count());
    }

    #[test]
    fn constant_coefficients_give_a_constant_trace() {
        let s = sphere(1, 0.2);
        let (d, _) = build_spaces(&s, 2).unwrap();
        let ones = DVector::from_element(d.dof_count(), 1.0);
        let sol = CellSolution::from_coefficients(&d, [ones.clone(), ones.clone() * 2.0, ones * -1.0]).unwrap();
        for e in 0..s.element_count() {
            for (u, v) in [(0.0, 0.0), (0.3, 0.7), (1.0, 0.5)] {
                assert!((sol.trace_eval(e, u, v, 1) - 2.0).abs() < 1e-13);
                assert!(sol.tangential_gradient(&s, e, u, v, 2).unwrap().norm() < 1e-11);
            }
        }
        assert!(CellSolution::from_coefficients(&d, Default::default()).is_err());
    }

    #[test]
    fn repeated_solves_are_identical() {
        let s = sphere(1, 0.2);
        let a = solve(&s);
        let b = solve(&s);
        for i in 0..3 {
            assert_eq!(a.w[i], b.w[i]);
        }
    }
}
