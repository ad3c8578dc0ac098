//! Real regular solid harmonics by Cartesian recurrences.

use nalgebra::Vector3;

/// Position of `S_{n,l}` in the flat ordering `n^2 + n + l`.
#[inline]
pub fn harmonic_index(n: usize, l: i64) -> usize {
    ((n * n + n) as i64 + l) as usize
}

use harmonic_index as idx;

/// Values and Cartesian gradients of all `S_{n,l}`, `n <= degree`.
#[derive(Clone, Debug, PartialEq)]
pub struct SolidHarmonicSet {
    pub degree: usize,
    pub values: Vec<f64>,
    pub gradients: Vec<Vector3<f64>>,
}

impl SolidHarmonicSet {
    pub fn value(&self, n: usize, l: i64) -> f64 {
        self.values[idx(n, l)]
    }

    pub fn gradient(&self, n: usize, l: i64) -> Vector3<f64> {
        self.gradients[idx(n, l)]
    }
}

/// Generic recurrence over any ring-like carrier (numbers or polynomials).
pub(crate) trait HarmonicCarrier: Clone {
    fn mul_x(&self) -> Self;
    fn mul_y(&self) -> Self;
    fn mul_z(&self) -> Self;
    fn mul_r2(&self) -> Self;
    fn axpby(a: f64, x: &Self, b: f64, y: &Self) -> Self;
}

pub(crate) fn recurrence<T: HarmonicCarrier>(degree: usize, one: T, zero: T) -> Vec<T> {
    let mut s = vec![zero.clone(); (degree + 1) * (degree + 1)];
    s[0] = one;
    for l in 0..degree {
        let li = l as i64;
        let lf = l as f64;
        let a = ((if l == 0 { 2.0 } else { 1.0 }) * (2.0 * lf + 1.0) / (2.0 * lf + 2.0)).sqrt();
        let sll = s[idx(l, li)].clone();
        if l == 0 {
            s[idx(1, 1)] = T::axpby(a, &sll.mul_x(), 0.0, &zero);
            s[idx(1, -1)] = T::axpby(a, &sll.mul_y(), 0.0, &zero);
        } else {
            let slm = s[idx(l, -li)].clone();
            s[idx(l + 1, li + 1)] = T::axpby(a, &sll.mul_x(), -a, &slm.mul_y());
            s[idx(l + 1, -li - 1)] = T::axpby(a, &sll.mul_y(), a, &slm.mul_x());
        }
        for m in -li..=li {
            let den = (((li + m + 1) * (li - m + 1)) as f64).sqrt();
            let zt = s[idx(l, m)].mul_z();
            s[idx(l + 1, m)] = if m.abs() < li {
                let c = (((li + m) * (li - m)) as f64).sqrt() / den;
                T::axpby((2.0 * lf + 1.0) / den, &zt, -c, &s[idx(l - 1, m)].mul_r2())
            } else {
                T::axpby((2.0 * lf + 1.0) / den, &zt, 0.0, &zero)
            };
        }
    }
    s
}

/// Value together with gradient; the product rule carries derivatives through the recurrence.
#[derive(Clone, Copy, Debug)]
struct Jet {
    v: f64,
    g: [f64; 3],
    p: [f64; 3],
}

impl HarmonicCarrier for Jet {
    fn mul_x(&self) -> Self {
        let mut g = self.g.map(|d| d * self.p[0]);
        g[0] += self.v;
        Jet {
            v: self.v * self.p[0],
            g,
            p: self.p,
        }
    }
    fn mul_y(&self) -> Self {
        let mut g = self.g.map(|d| d * self.p[1]);
        g[1] += self.v;
        Jet {
            v: self.v * self.p[1],
            g,
            p: self.p,
        }
    }
    fn mul_z(&self) -> Self {
        let mut g = self.g.map(|d| d * self.p[2]);
        g[2] += self.v;
        Jet {
            v: self.v * self.p[2],
            g,
            p: self.p,
        }
    }
    fn mul_r2(&self) -> Self {
        let r2 = self.p[0] * self.p[0] + self.p[1] * self.p[1] + self.p[2] * self.p[2];
        let mut g = self.g.map(|d| d * r2);
        for (gd, pd) in g.iter_mut().zip(self.p) {
            *gd += 2.0 * pd * self.v;
        }
        Jet {
            v: self.v * r2,
            g,
            p: self.p,
        }
    }
    fn axpby(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        let p = x.p;
        Jet {
            v: a * x.v + b * y.v,
            g: [
                a * x.g[0] + b * y.g[0],
                a * x.g[1] + b * y.g[1],
                a * x.g[2] + b * y.g[2],
            ],
            p,
        }
    }
}

/// Evaluates `S_{n,l}` and their gradients at `z` for `n <= degree`.
pub fn eval_solid_harmonics(z: &Vector3<f64>, degree: usize) -> SolidHarmonicSet {
    let p = [z[0], z[1], z[2]];
    let zero = Jet { v: 0.0, g: [0.0; 3], p };
    let one = Jet { v: 1.0, ..zero };
    let s = recurrence(degree, one, zero);
    SolidHarmonicSet {
        degree,
        values: s.iter().map(|j| j.v).collect(),
        gradients: s.iter().map(|j| Vector3::from(j.g)).collect(),
    }
}

/// Dense trivariate polynomial of total degree at most `d`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct DensePoly {
    d: usize,
    c: Vec<f64>,
}

impl DensePoly {
    fn at(&self, a: usize, b: usize, c: usize) -> usize {
        a + (self.d + 1) * (b + (self.d + 1) * c)
    }

    fn shifted(&self, da: usize, db: usize, dc: usize) -> Self {
        let mut out = vec![0.0; self.c.len()];
        let d = self.d;
        for c in 0..=d {
            for b in 0..=d {
                for a in 0..=d {
                    let v = self.c[self.at(a, b, c)];
                    if v != 0.0 {
                        assert!(a + da <= d && b + db <= d && c + dc <= d, "degree overflow");
                        out[self.at(a + da, b + db, c + dc)] += v;
                    }
                }
            }
        }
        DensePoly { d, c: out }
    }

    /// Nonzero monomials as `([a, b, c], coefficient)`.
    pub(crate) fn terms(&self) -> Vec<([u8; 3], f64)> {
        let d = self.d;
        let mut out = Vec::new();
        for c in 0..=d {
            for b in 0..=d {
                for a in 0..=d {
                    let v = self.c[self.at(a, b, c)];
                    if v != 0.0 {
                        out.push(([a as u8, b as u8, c as u8], v));
                    }
                }
            }
        }
        out
    }
}

impl DensePoly {
    pub(crate) fn zero(d: usize) -> Self {
        DensePoly {
            d,
            c: vec![0.0; (d + 1).pow(3)],
        }
    }
}

impl HarmonicCarrier for DensePoly {
    fn mul_x(&self) -> Self {
        self.shifted(1, 0, 0)
    }
    fn mul_y(&self) -> Self {
        self.shifted(0, 1, 0)
    }
    fn mul_z(&self) -> Self {
        self.shifted(0, 0, 1)
    }
    fn mul_r2(&self) -> Self {
        let mut out = self.shifted(2, 0, 0);
        for (o, (y, z)) in out
            .c
            .iter_mut()
            .zip(self.shifted(0, 2, 0).c.iter().zip(&self.shifted(0, 0, 2).c))
        {
            *o += y + z;
        }
        out
    }
    fn axpby(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        DensePoly {
            d: x.d,
            c: x.c.iter().zip(&y.c).map(|(p, q)| a * p + b * q).collect(),
        }
    }
}

/// Monomial coefficients of every `S_{n,l}`, `n <= degree`.
pub(crate) fn harmonic_polynomials(degree: usize) -> Vec<DensePoly> {
    let zero = DensePoly::zero(degree);
    let mut one = zero.clone();
    one.c[0] = 1.0;
    recurrence(degree, one, zero)
}

/// Linear combination `sum alpha_k S_k` as a dense polynomial.
pub(crate) fn combine(degree: usize, alpha: &[f64]) -> DensePoly {
    let polys = harmonic_polynomials(degree);
    let mut acc = DensePoly::zero(degree);
    for (p, &a) in polys.iter().zip(alpha) {
        if a != 0.0 {
            for (o, v) in acc.c.iter_mut().zip(&p.c) {
                *o += a * v;
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval_poly(p: &DensePoly, z: &Vector3<f64>) -> f64 {
        p.terms()
            .iter()
            .map(|(e, c)| c * z[0].powi(e[0] as i32) * z[1].powi(e[1] as i32) * z[2].powi(e[2] as i32))
            .sum()
    }

    #[test]
    fn exact_laplacian_vanishes() {
        for (k, p) in harmonic_polynomials(12).iter().enumerate() {
            let mut lap = std::collections::HashMap::new();
            for (e, c) in p.terms() {
                for d in 0..3 {
                    if e[d] >= 2 {
                        let mut f = e;
                        f[d] -= 2;
                        *lap.entry(f).or_insert(0.0) += c * (e[d] as f64) * (e[d] as f64 - 1.0);
                    }
                }
            }
            let scale: f64 = p.terms().iter().map(|(_, c)| c.abs()).fold(0.0, f64::max);
            for (_, v) in lap {
                assert!(v.abs() <= 1e-12 * scale, "harmonic {k}: {v}");
            }
        }
    }

    #[test]
    fn origin_values() {
        let s = eval_solid_harmonics(&Vector3::zeros(), 6);
        assert_eq!(s.values[0], 1.0);
        assert!(s.values[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_order_is_linear() {
        let z = Vector3::new(0.3, -0.2, 0.7);
        let s = eval_solid_harmonics(&z, 1);
        assert_eq!(s.value(1, 1), 0.3);
        assert_eq!(s.value(1, -1), -0.2);
        assert_eq!(s.value(1, 0), 0.7);
    }

    #[test]
    fn polynomial_form_matches_recurrence() {
        let polys = harmonic_polynomials(8);
        let z = Vector3::new(0.31, -0.47, 0.22);
        let s = eval_solid_harmonics(&z, 8);
        for (k, p) in polys.iter().enumerate() {
            assert!((eval_poly(p, &z) - s.values[k]).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn homogeneous(x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64, t in 0.1..3.0f64) {
            let p = Vector3::new(x, y, z);
            let a = eval_solid_harmonics(&p, 12);
            let b = eval_solid_harmonics(&(p * t), 12);
            for n in 0..=12usize {
                for l in -(n as i64)..=(n as i64) {
                    let lhs = b.value(n, l);
                    let rhs = t.powi(n as i32) * a.value(n, l);
                    prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
                }
            }
        }

        #[test]
        fn harmonic_and_gradient_consistent(x in -0.5..0.5f64, y in -0.5..0.5f64, z in -0.5..0.5f64) {
            let p = Vector3::new(x, y, z);
            let s = eval_solid_harmonics(&p, 12);
            let h = 1e-5;
            // fourth-order Laplacian stencil
            let hl = 2e-3;
            let mut lap: Vec<f64> = s.values.iter().map(|v| -90.0 * v).collect();
            for d in 0..3 {
                let mut e = Vector3::zeros();
                e[d] = 1.0;
                let sp = eval_solid_harmonics(&(p + e * h), 12);
                let sm = eval_solid_harmonics(&(p - e * h), 12);
                for k in 0..s.values.len() {
                    let fd = (sp.values[k] - sm.values[k]) / (2.0 * h);
                    let g = s.gradients[k][d];
                    prop_assert!((fd - g).abs() <= 1e-8 * (1.0 + g.abs()), "k={} d={} fd={} g={}", k, d, fd, g);
                }
                for (w, t) in [(16.0, hl), (16.0, -hl), (-1.0, 2.0 * hl), (-1.0, -2.0 * hl)] {
                    let q = eval_solid_harmonics(&(p + e * t), 12);
                    for k in 0..s.values.len() {
                        lap[k] += w * q.values[k];
                    }
                }
            }
            for (k, v) in lap.iter().enumerate() {
                prop_assert!((v / (12.0 * hl * hl)).abs() <= 1e-6, "k={} lap={} s={}", k, v / (12.0 * hl * hl), s.values[k]);
            }
        }
    }
}
