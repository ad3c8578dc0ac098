//! The 1-periodic Laplace Green's function: 27 image singularities, the
//! quadratic background term and a fitted solid-harmonics correction.

mod cache;
mod harmonics;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

pub use cache::{read_coefficients, write_coefficients, KERNEL_CACHE_VERSION};
pub use harmonics::{eval_solid_harmonics, harmonic_index, SolidHarmonicSet};

use crate::error::{Error, Result};
use crate::quadrature::gauss;

const FOUR_PI_INV: f64 = 1.0 / (4.0 * PI);

/// Default correction degree.
pub const DEFAULT_KERNEL_DEGREE: usize = 12;
/// Default Gauss grid per face pair used by the fit.
pub const DEFAULT_FIT_SAMPLES: usize = 20;

/// Fitted correction coefficients with their periodicity residuals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCoefficients {
    pub degree: usize,
    /// `alpha[n^2 + n + l]`, with `alpha[0] = 0`.
    pub alpha: Vec<f64>,
    /// Max `|k(z + e_d) - k(z)|` over the validation set.
    pub residual: f64,
    /// Max `|grad k(z + e_d) - grad k(z)|_inf` over the validation set.
    pub gradient_residual: f64,
    /// Gauss points per direction on each face pair.
    pub samples: usize,
    /// Validation midpoints per direction on each face pair.
    pub validation_samples: usize,
}

/// Image sum and quadratic term at `z`, value and gradient.
fn lattice_part(z: &Vector3<f64>, skip: Option<[i32; 3]>) -> (f64, Vector3<f64>) {
    let mut v = 0.0;
    let mut g = Vector3::zeros();
    for a in -1i32..=1 {
        for b in -1i32..=1 {
            for c in -1i32..=1 {
                if skip == Some([a, b, c]) {
                    continue;
                }
                let d = Vector3::new(z[0] - a as f64, z[1] - b as f64, z[2] - c as f64);
                let r2 = d.norm_squared();
                let r = r2.sqrt();
                let inv = 1.0 / r;
                v += inv;
                g -= d * (inv * inv * inv);
            }
        }
    }
    (
        v * FOUR_PI_INV + z.norm_squared() / 6.0,
        g * FOUR_PI_INV + z / 3.0,
    )
}

fn face_point(d: usize, s: f64, t: f64) -> Vector3<f64> {
    let mut z = Vector3::zeros();
    z[d] = -0.5;
    z[(d + 1) % 3] = s;
    z[(d + 2) % 3] = t;
    z
}

fn unit(d: usize) -> Vector3<f64> {
    let mut e = Vector3::zeros();
    e[d] = 1.0;
    e
}

/// Least-squares fit of the correction so that the ansatz and its gradient
/// agree on opposite faces of the cell.
pub fn fit_correction(degree: usize, samples: usize) -> Result<KernelCoefficients> {
    if degree < 2 {
        return Err(Error::param(format!("kernel degree {degree} must be at least 2")));
    }
    if samples < 2 {
        return Err(Error::param("at least 2 samples per direction are needed"));
    }
    let nh = (degree + 1) * (degree + 1);
    let cols = nh - 1;
    let rule = gauss(samples);
    let nodes: Vec<f64> = rule.nodes.iter().map(|x| x - 0.5).collect();
    let rows = 3 * samples * samples * 4;
    if rows < cols {
        return Err(Error::param("too few fitting samples for the requested degree"));
    }
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let mut b = DVector::<f64>::zeros(rows);
    let mut r = 0;
    for d in 0..3 {
        for &s in &nodes {
            for &t in &nodes {
                let z = face_point(d, s, t);
                let zp = z + unit(d);
                let h = eval_solid_harmonics(&z, degree);
                let hp = eval_solid_harmonics(&zp, degree);
                let (f, gf) = lattice_part(&z, None);
                let (fp, gfp) = lattice_part(&zp, None);
                for k in 1..nh {
                    a[(r, k - 1)] = hp.values[k] - h.values[k];
                    for c in 0..3 {
                        a[(r + 1 + c, k - 1)] = hp.gradients[k][c] - h.gradients[k][c];
                    }
                }
                b[r] = f - fp;
                for c in 0..3 {
                    b[r + 1 + c] = gf[c] - gfp[c];
                }
                r += 4;
            }
        }
    }
    let scale: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    if let Some(j) = scale.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::FittingFailure(format!(
            "harmonic {} does not enter the periodicity constraints",
            j + 1
        )));
    }
    for (j, s) in scale.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-13 * smax) {
        return Err(Error::FittingFailure(format!(
            "rank-deficient periodicity system: singular values in [{smin:e}, {smax:e}]"
        )));
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::FittingFailure(e.to_string()))?;
    let mut alpha = vec![0.0; nh];
    for j in 0..cols {
        alpha[j + 1] = x[j] / scale[j];
    }
    let validation_samples = samples + 5;
    let mut coeffs = KernelCoefficients {
        degree,
        alpha,
        residual: 0.0,
        gradient_residual: 0.0,
        samples,
        validation_samples,
    };
    let kernel = PeriodicKernel::new(coeffs.clone());
    let (res, gres) = kernel.periodicity_residual(validation_samples);
    log::info!(
        "kernel fit N={degree}: cond {:.3e}, residual {res:.3e}, gradient residual {gres:.3e}",
        smax / smin
    );
    coeffs.residual = res;
    coeffs.gradient_residual = gres;
    Ok(coeffs)
}

/// Correction polynomial in monomial form with power-table evaluation.
#[derive(Clone, Debug)]
struct CompiledPoly {
    degree: usize,
    terms: Vec<([u8; 3], f64)>,
}

impl CompiledPoly {
    fn new(coeffs: &KernelCoefficients) -> Self {
        let dense = harmonics::combine(coeffs.degree, &coeffs.alpha);
        let terms = dense.terms();
        // contribution bound on the cell is |c| 2^-(a+b+c); drop negligible terms
        let terms = terms
            .into_iter()
            .filter(|(e, c)| c.abs() * 0.5f64.powi((e[0] + e[1] + e[2]) as i32) > 1e-17)
            .collect();
        CompiledPoly {
            degree: coeffs.degree,
            terms,
        }
    }

    #[inline]
    fn eval(&self, z: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let mut px = [1.0f64; 24];
        let mut py = [1.0f64; 24];
        let mut pz = [1.0f64; 24];
        for k in 1..=self.degree {
            px[k] = px[k - 1] * z[0];
            py[k] = py[k - 1] * z[1];
            pz[k] = pz[k - 1] * z[2];
        }
        let (mut v, mut gx, mut gy, mut gz) = (0.0, 0.0, 0.0, 0.0);
        for &([a, b, c], coef) in &self.terms {
            let (a, b, c) = (a as usize, b as usize, c as usize);
            let yz = py[b] * pz[c];
            v += coef * px[a] * yz;
            if a > 0 {
                gx += coef * a as f64 * px[a - 1] * yz;
            }
            if b > 0 {
                gy += coef * b as f64 * px[a] * py[b - 1] * pz[c];
            }
            if c > 0 {
                gz += coef * c as f64 * px[a] * py[b] * pz[c - 1];
            }
        }
        (v, Vector3::new(gx, gy, gz))
    }
}

/// Periodic Green's function `k_per` with `-Laplace k_per = delta_0 - 1` on the torus.
#[derive(Clone, Debug)]
pub struct PeriodicKernel {
    coeffs: KernelCoefficients,
    poly: CompiledPoly,
}

fn wrap(z: &Vector3<f64>) -> (Vector3<f64>, [i32; 3]) {
    let r = z.map(f64::round);
    (z - r, [r[0] as i32, r[1] as i32, r[2] as i32])
}

impl PeriodicKernel {
    pub fn new(coeffs: KernelCoefficients) -> Self {
        let poly = CompiledPoly::new(&coeffs);
        PeriodicKernel { coeffs, poly }
    }

    /// Fits and wraps in one call.
    pub fn fit(degree: usize, samples: usize) -> Result<Self> {
        Ok(Self::new(fit_correction(degree, samples)?))
    }

    pub fn coefficients(&self) -> &KernelCoefficients {
        &self.coeffs
    }

    /// Correction series `sum alpha S` and its gradient.
    pub fn correction(&self, z: &Vector3<f64>) -> (f64, Vector3<f64>) {
        self.poly.eval(z)
    }

    /// The ansatz without reduction into the cell; periodic only on `[-1/2, 1/2]^3`.
    pub fn eval_unwrapped(&self, z: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let (v, g) = lattice_part(z, None);
        let (cv, cg) = self.poly.eval(z);
        (v + cv, g + cg)
    }

    /// Value and gradient of `k_per(z)`; `z` is first reduced into the cell.
    pub fn eval_with_gradient(&self, z: &Vector3<f64>) -> Result<(f64, Vector3<f64>)> {
        let (w, _) = wrap(z);
        if w == Vector3::zeros() {
            return Err(Error::SingularEvaluation);
        }
        Ok(self.eval_unwrapped(&w))
    }

    pub fn eval(&self, z: &Vector3<f64>) -> Result<f64> {
        Ok(self.eval_with_gradient(z)?.0)
    }

    pub fn gradient(&self, z: &Vector3<f64>) -> Result<Vector3<f64>> {
        Ok(self.eval_with_gradient(z)?.1)
    }

    /// `k_per(z) - 1/(4 pi |z|)` and its gradient, for `|z|_inf < 1`.
    ///
    /// Smooth in `z`, including at `z = 0`.
    pub fn smooth_remainder(&self, z: &Vector3<f64>) -> (f64, Vector3<f64>) {
        let (w, r) = wrap(z);
        let (v, g) = lattice_part(&w, Some([-r[0], -r[1], -r[2]]));
        let (cv, cg) = self.poly.eval(&w);
        (v + cv, g + cg)
    }

    /// Max value and gradient mismatch across opposite faces on a midpoint grid.
    pub fn periodicity_residual(&self, per_axis: usize) -> (f64, f64) {
        let mut res: f64 = 0.0;
        let mut gres: f64 = 0.0;
        for d in 0..3 {
            for i in 0..per_axis {
                for j in 0..per_axis {
                    let s = (i as f64 + 0.5) / per_axis as f64 - 0.5;
                    let t = (j as f64 + 0.5) / per_axis as f64 - 0.5;
                    let z = face_point(d, s, t);
                    let (v, g) = self.eval_unwrapped(&z);
                    let (vp, gp) = self.eval_unwrapped(&(z + unit(d)));
                    res = res.max((vp - v).abs());
                    gres = gres.max((gp - g).amax());
                }
            }
        }
        (res, gres)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::sync::OnceLock;

    /// Shared N = 12 kernel for the unit tests of this crate.
    pub(crate) fn kernel12() -> &'static PeriodicKernel {
        static K: OnceLock<PeriodicKernel> = OnceLock::new();
        K.get_or_init(|| PeriodicKernel::fit(12, DEFAULT_FIT_SAMPLES).unwrap())
    }

    #[test]
    fn fit_reaches_tolerance_and_improves_with_degree() {
        let k = kernel12();
        assert!(k.coefficients().residual <= 1e-7, "{}", k.coefficients().residual);
        assert!(k.coefficients().gradient_residual <= 1e-6);
        // values agree across faces by reflection symmetry; the gradient carries the fit error
        let r4 = fit_correction(4, 20).unwrap().gradient_residual;
        let r8 = fit_correction(8, 20).unwrap().gradient_residual;
        assert!(r4 > r8 && r8 > k.coefficients().gradient_residual, "{r4} {r8}");
    }

    #[test]
    fn odd_coefficients_vanish() {
        let c = kernel12().coefficients();
        for n in (1..=12).step_by(2) {
            for l in -(n as i64)..=(n as i64) {
                assert!(c.alpha[harmonic_index(n, l)].abs() <= 10.0 * c.residual);
            }
        }
    }

    #[test]
    fn compiled_polynomial_matches_series() {
        let k = kernel12();
        let z = Vector3::new(0.21, -0.37, 0.44);
        let h = eval_solid_harmonics(&z, 12);
        let v: f64 = h.values.iter().zip(&k.coefficients().alpha).map(|(a, b)| a * b).sum();
        let g: Vector3<f64> = h
            .gradients
            .iter()
            .zip(&k.coefficients().alpha)
            .map(|(a, b)| a * *b)
            .sum();
        let (cv, cg) = k.correction(&z);
        assert!((cv - v).abs() < 1e-12);
        assert!((cg - g).amax() < 1e-11);
    }

    #[test]
    fn singular_at_origin_and_lattice_points() {
        let k = kernel12();
        assert!(matches!(k.eval(&Vector3::zeros()), Err(Error::SingularEvaluation)));
        assert!(matches!(
            k.eval(&Vector3::new(1.0, 0.0, 0.0)),
            Err(Error::SingularEvaluation)
        ));
    }

    #[test]
    fn remainder_is_bounded_near_origin() {
        let k = kernel12();
        let dir = Vector3::new(0.3, -0.5, 0.81).normalize();
        let near = k.smooth_remainder(&(dir * 1e-6)).0;
        let far = k.smooth_remainder(&(dir * (1e-3 + 1e-6))).0;
        assert!((near - far).abs() < 1e-5);
        let full = k.eval(&(dir * 1e-3)).unwrap();
        assert!((full - FOUR_PI_INV / 1e-3 - k.smooth_remainder(&(dir * 1e-3)).0).abs() < 1e-9);
    }

    #[test]
    fn remainder_matches_full_kernel_after_wrap() {
        let k = kernel12();
        let z = Vector3::new(0.7, -0.1, 0.3);
        let (v, g) = k.eval_with_gradient(&z).unwrap();
        let (rv, rg) = k.smooth_remainder(&z);
        let r = z.norm();
        assert!((v - rv - FOUR_PI_INV / r).abs() < 1e-12);
        assert!((g - rg + z * (FOUR_PI_INV / (r * r * r))).amax() < 1e-12);
    }

    #[test]
    fn laplacian_is_one_and_kernel_is_even() {
        let k = kernel12();
        let pts = [
            Vector3::new(0.3, 0.1, -0.2),
            Vector3::new(-0.45, 0.35, 0.2),
            Vector3::new(0.7, -0.6, 0.1),
        ];
        let h = 1e-3;
        for z in pts {
            let mut lap = -6.0 * k.eval(&z).unwrap();
            for d in 0..3 {
                lap += k.eval(&(z + unit(d) * h)).unwrap() + k.eval(&(z - unit(d) * h)).unwrap();
            }
            assert!((lap / (h * h) - 1.0).abs() < 1e-4, "{}", lap / (h * h));
            let (v, g) = k.eval_with_gradient(&z).unwrap();
            let (vm, gm) = k.eval_with_gradient(&(-z)).unwrap();
            assert!((v - vm).abs() < 1e-7);
            assert!((g + gm).amax() < 1e-6);
            for d in 0..3 {
                let hg = 1e-5;
                let fd = (k.eval(&(z + unit(d) * hg)).unwrap() - k.eval(&(z - unit(d) * hg)).unwrap()) / (2.0 * hg);
                assert!((fd - g[d]).abs() <= 1e-6 * (1.0 + g[d].abs()));
            }
        }
    }
}
