//! Effective tensor, shape functional and shape gradient from boundary data.

use nalgebra::{DVector, Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PolynomialSurface;
use crate::quadrature::gauss_square;
use crate::solver::CellSolution;

/// Homogenized 3x3 tensor of the perforated cell.
pub type EffectiveTensor = Matrix3<f64>;

/// Gradient of the shape functional with respect to the deformation coefficients.
pub type ShapeGradientVector = DVector<f64>;

/// Symmetric target tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetTensor(Matrix3<f64>);

impl TargetTensor {
    pub fn new(b: Matrix3<f64>) -> Result<Self> {
        if (b - b.transpose()).amax() > 1e-12 || !b.iter().all(|x| x.is_finite()) {
            return Err(Error::param(format!("target tensor is not symmetric: {b}")));
        }
        Ok(TargetTensor(b))
    }

    /// `s I`.
    pub fn isotropic(s: f64) -> Self {
        TargetTensor(Matrix3::identity() * s)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

fn lemma_rule(surface: &PolynomialSurface, sol: &CellSolution) -> Vec<(f64, f64, f64)> {
    let (p1, p2) = surface.degree();
    gauss_square(sol.degree() + p1.max(p2) + 1)
}

fn check(surface: &PolynomialSurface, sol: &CellSolution) -> Result<()> {
    if sol.level() != surface.level() || sol.space().element_count() != surface.element_count() {
        return Err(Error::param("cell solution was computed on a different surface"));
    }
    Ok(())
}

/// `a_ij = delta_ij |Y \ Omega| - int w_i <e_j, n>`.
pub fn effective_tensor(surface: &PolynomialSurface, sol: &CellSolution) -> Result<EffectiveTensor> {
    check(surface, sol)?;
    let outside = 1.0 - surface.cavity_volume()?;
    let rule = lemma_rule(surface, sol);
    let parts: Vec<Result<Matrix3<f64>>> = (0..surface.element_count())
        .into_par_iter()
        .map(|e| {
            let mut m = Matrix3::zeros();
            for &(u, v, w) in &rule {
                let s = surface.sample(e, u, v)?;
                let wn = s.normal * (w * s.measure);
                for i in 0..3 {
                    let wi = sol.trace_eval(e, u, v, i);
                    for j in 0..3 {
                        m[(i, j)] += wi * wn[j];
                    }
                }
            }
            Ok(m)
        })
        .collect();
    let mut integral = Matrix3::zeros();
    for p in parts {
        integral += p?;
    }
    Ok(Matrix3::identity() * outside - integral)
}

/// `J = 1/2 sum (a_ij - b_ij)^2`.
pub fn shape_functional(a: &EffectiveTensor, b: &TargetTensor) -> f64 {
    0.5 * (a - b.matrix()).norm_squared()
}

/// Linear map `V -> a'_ij[V]` for vector fields given at the surface points.
///
/// With `n` pointing out of the cavity,
/// `a'_ij[V] = -int (<e_i + grad w_i, e_j + grad w_j> - n_i n_j) <V, n>`;
/// the integral is stored per surface point after interpolating `V` with the
/// geometry stencil.
#[derive(Clone, Debug)]
pub struct ShapeSensitivity {
    /// Per surface point and per `(i, j)` with `i <= j`, the weight vector of `V`.
    weights: Vec<[Vector3<f64>; 6]>,
}

const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

impl ShapeSensitivity {
    pub fn new(surface: &PolynomialSurface, sol: &CellSolution) -> Result<Self> {
        check(surface, sol)?;
        let rule = lemma_rule(surface, sol);
        let (p1, p2) = surface.degree();
        let nc = (p1 + 1) * (p2 + 1);
        let parts: Vec<Result<Vec<(usize, [Vector3<f64>; 6])>>> = (0..surface.element_count())
            .into_par_iter()
            .map(|e| {
                let mut lw = vec![0.0; nc];
                let mut lu = vec![0.0; nc];
                let mut lv = vec![0.0; nc];
                let mut acc = vec![[Vector3::zeros(); 6]; nc];
                for &(u, v, w) in &rule {
                    let s = surface.sample(e, u, v)?;
                    let mut g = [Vector3::zeros(); 3];
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi = Vector3::ith(i, 1.0) + sol.tangential_gradient(surface, e, u, v, i)?;
                    }
                    surface.stencil_weights(e, u, v, &mut lw, &mut lu, &mut lv);
                    let wn = s.normal * (-w * s.measure);
                    for (p, &(i, j)) in PAIRS.iter().enumerate() {
                        let t = g[i].dot(&g[j]) - s.normal[i] * s.normal[j];
                        let c = wn * t;
                        for (a, &l) in lw.iter().enumerate() {
                            acc[a][p] += c * l;
                        }
                    }
                }
                Ok(surface.stencil(e).iter().copied().zip(acc).collect())
            })
            .collect();
        let mut weights = vec![[Vector3::zeros(); 6]; surface.points().len()];
        for part in parts {
            for (g, w) in part? {
                for p in 0..6 {
                    weights[g][p] += w[p];
                }
            }
        }
        Ok(ShapeSensitivity { weights })
    }

    /// `a'[V]` for `V` given at the surface points.
    pub fn apply(&self, v: &[Vector3<f64>]) -> Result<Matrix3<f64>> {
        if v.len() != self.weights.len() {
            return Err(Error::param(format!(
                "displacement has {} points, surface has {}",
                v.len(),
                self.weights.len()
            )));
        }
        let mut m = Matrix3::zeros();
        for (vg, w) in v.iter().zip(&self.weights) {
            for (p, &(i, j)) in PAIRS.iter().enumerate() {
                m[(i, j)] += vg.dot(&w[p]);
            }
        }
        for &(i, j) in &PAIRS {
            m[(j, i)] = m[(i, j)];
        }
        Ok(m)
    }
}

/// `a'_ij[V]` for one field given at the surface points.
pub fn shape_derivative_coefficient(
    surface: &PolynomialSurface,
    sol: &CellSolution,
    v: &[Vector3<f64>],
) -> Result<Matrix3<f64>> {
    ShapeSensitivity::new(surface, sol)?.apply(v)
}

/// `g_k = sum_ij (a_ij - b_ij) a'_ij[V_k]`.
pub fn shape_gradient(a: &EffectiveTensor, b: &TargetTensor, coefficients: &[Matrix3<f64>]) -> ShapeGradientVector {
    let r = a - b.matrix();
    DVector::from_iterator(coefficients.len(), coefficients.iter().map(|c| r.dot(c)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bem::{assemble_operators, build_spaces, QuadratureScheme};
    use crate::geometry::{generate_primitive, Primitive};
    use crate::kernel::tests::kernel12;
    use crate::solver::solve_n2d;
    use std::f64::consts::PI;

    fn solve(surface: &PolynomialSurface) -> CellSolution {
        let (d, n) = build_spaces(surface, 2).unwrap();
        let ops = assemble_operators(surface, (&d, &n), kernel12(), &QuadratureScheme::default()).unwrap();
        solve_n2d(&ops, &d).unwrap()
    }

    fn sphere(j: u32, r: f64) -> PolynomialSurface {
        let maps = generate_primitive(&Primitive::Sphere { center: [0.0; 3], radius: r }).unwrap();
        let p = 4.min(1 << j);
        PolynomialSurface::from_maps(&maps, j, (p, p)).unwrap()
    }

    #[test]
    fn functional_arithmetic() {
        let a = Matrix3::identity();
        assert_eq!(shape_functional(&a, &TargetTensor::isotropic(1.0)), 0.0);
        assert!((shape_functional(&a, &TargetTensor::isotropic(0.9)) - 0.015).abs() < 1e-15);
        let b = Matrix3::new(0.9, 0.01, 0.0, 0.01, 0.8, 0.02, 0.0, 0.02, 0.7);
        let a = Matrix3::new(1.0, 0.0, 0.1, 0.0, 0.95, 0.0, 0.1, 0.0, 0.85);
        let p = Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0);
        let j0 = shape_functional(&a, &TargetTensor::new(b).unwrap());
        let j1 = shape_functional(&(p * a * p.transpose()), &TargetTensor::new(p * b * p.transpose()).unwrap());
        assert!((j0 - j1).abs() < 1e-15);
        assert!(TargetTensor::new(Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn gradient_vanishes_at_the_target_and_scales_linearly() {
        let a = Matrix3::new(0.97, 0.001, 0.0, 0.001, 0.96, 0.0, 0.0, 0.0, 0.95);
        let c = vec![Matrix3::identity(), Matrix3::new(1.0, 2.0, 0.0, 2.0, 0.5, 0.0, 0.0, 0.0, -1.0)];
        let g0 = shape_gradient(&a, &TargetTensor::new(a).unwrap(), &c);
        assert!(g0.iter().all(|&x| x == 0.0));
        let b = TargetTensor::isotropic(0.9);
        let b2 = TargetTensor::new(a - (a - b.matrix()) * 2.0).unwrap();
        let g1 = shape_gradient(&a, &b, &c);
        let g2 = shape_gradient(&a, &b2, &c);
        assert!((g2 - g1 * 2.0).amax() < 1e-15);
    }

    #[test]
    fn dilute_sphere_and_vanishing_cavity() {
        let r = 0.15;
        let s = sphere(2, r);
        let a = effective_tensor(&s, &solve(&s)).unwrap();
        let f = 4.0 * PI * r.powi(3) / 3.0;
        for i in 0..3 {
            assert!((a[(i, i)] - (1.0 - 1.5 * f)).abs() <= 1e-3, "{a}");
            for j in 0..3 {
                if i != j {
                    assert!(a[(i, j)].abs() <= 1e-3);
                }
            }
        }
        let s = sphere(2, 0.05);
        let a = effective_tensor(&s, &solve(&s)).unwrap();
        assert!((a - Matrix3::identity()).amax() <= 1e-3);
    }

    #[test]
    fn tangential_fields_do_not_change_the_tensor_and_linearity() {
        let s = sphere(2, 0.2);
        let sol = solve(&s);
        let sens = ShapeSensitivity::new(&s, &sol).unwrap();
        // V = e_3 x x is tangential on a centered sphere
        let tang: Vec<Vector3<f64>> = s.points().iter().map(|x| Vector3::z().cross(x)).collect();
        assert!(sens.apply(&tang).unwrap().amax() <= 1e-10);
        let v1: Vec<Vector3<f64>> = s.points().iter().map(|x| x * 2.0).collect();
        let v2: Vec<Vector3<f64>> = s.points().iter().map(|x| Vector3::new(x.y * x.y, 0.1, x.z)).collect();
        let comb: Vec<Vector3<f64>> = v1.iter().zip(&v2).map(|(a, b)| a * 0.3 - b * 1.7).collect();
        let lhs = sens.apply(&comb).unwrap();
        let rhs = sens.apply(&v1).unwrap() * 0.3 - sens.apply(&v2).unwrap() * 1.7;
        assert!((lhs - rhs).amax() <= 1e-12);
        let m = sens.apply(&v2).unwrap();
        assert_eq!(m, m.transpose());
        let direct = shape_derivative_coefficient(&s, &sol, &v2).unwrap();
        assert_eq!(direct, m);
    }

    #[test]
    fn radial_derivative_matches_finite_differences() {
        let r = 0.2;
        let s = sphere(2, r);
        let sol = solve(&s);
        let normal: Vec<Vector3<f64>> = s.points().iter().map(|x| x / x.norm()).collect();
        let d = shape_derivative_coefficient(&s, &sol, &normal).unwrap();
        let t = 1e-4;
        let at = |sign: f64| {
            let disp: Vec<Vector3<f64>> = normal.iter().map(|n| n * (sign * t)).collect();
            let st = s.displaced(&disp).unwrap();
            effective_tensor(&st, &solve(&st)).unwrap()
        };
        let fd = (at(1.0) - at(-1.0)) / (2.0 * t);
        for i in 0..3 {
            let rel = (fd[(i, i)] - d[(i, i)]).abs() / d[(i, i)].abs();
            assert!(rel <= 1e-2, "{fd} vs {d}");
        }
        // a growing cavity lowers the diagonal
        assert!(d[(0, 0)] < 0.0);
    }
}
