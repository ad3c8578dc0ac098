//! Classification of element pairs and regularizing quadrature for pairs that
//! share a vertex, an edge or the whole element.
//!
//! All rules live on `[0,1]^2 x [0,1]^2` in a canonical orientation: the
//! shared vertex sits at `(0,0)` and a shared edge runs from `(0,0)` to
//! `(0,1)` in both elements. A [`Symmetry`] maps canonical coordinates to the
//! actual element coordinates.

use crate::quadrature::gauss;

/// One of the eight symmetries of the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Symmetry {
    pub swap: bool,
    pub flip_u: bool,
    pub flip_v: bool,
}

impl Symmetry {
    pub const IDENTITY: Symmetry = Symmetry {
        swap: false,
        flip_u: false,
        flip_v: false,
    };

    pub fn all() -> impl Iterator<Item = Symmetry> {
        (0..8).map(|i| Symmetry {
            swap: i & 1 != 0,
            flip_u: i & 2 != 0,
            flip_v: i & 4 != 0,
        })
    }

    #[inline]
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let [mut u, mut v] = if self.swap { [p[1], p[0]] } else { p };
        if self.flip_u {
            u = 1.0 - u;
        }
        if self.flip_v {
            v = 1.0 - v;
        }
        [u, v]
    }

    /// Corner index `a + 2b` of the image of canonical corner `(a, b)`.
    fn corner(&self, a: usize, b: usize) -> usize {
        let [u, v] = self.apply([a as f64, b as f64]);
        u as usize + 2 * v as usize
    }
}

/// Relative position of two elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairClass {
    Coincident,
    Edge { sym_test: Symmetry, sym_trial: Symmetry },
    Vertex { sym_test: Symmetry, sym_trial: Symmetry },
    Separated,
}

fn is_edge(a: usize, b: usize) -> bool {
    matches!((a.min(b), a.max(b)), (0, 1) | (0, 2) | (1, 3) | (2, 3))
}

/// Classifies a pair from the global ids of the element corners, ordered
/// `(0,0), (1,0), (0,1), (1,1)`.
pub fn classify(test: &[usize; 4], trial: &[usize; 4]) -> PairClass {
    let mut shared = Vec::with_capacity(4);
    for (i, g) in test.iter().enumerate() {
        if let Some(j) = trial.iter().position(|h| h == g) {
            shared.push((i, j));
        }
    }
    match shared.len() {
        0 => PairClass::Separated,
        4 => PairClass::Coincident,
        2 if is_edge(shared[0].0, shared[1].0) && is_edge(shared[0].1, shared[1].1) => {
            let (a, b) = (shared[0], shared[1]);
            let find = |ca: usize, cb: usize| {
                Symmetry::all()
                    .find(|s| s.corner(0, 0) == ca && s.corner(0, 1) == cb)
                    .expect("every edge is the image of the canonical edge")
            };
            PairClass::Edge {
                sym_test: find(a.0, b.0),
                sym_trial: find(a.1, b.1),
            }
        }
        _ => {
            let (i, j) = shared[0];
            let find = |c: usize| {
                Symmetry::all()
                    .find(|s| s.corner(0, 0) == c)
                    .expect("every corner is the image of the origin")
            };
            PairClass::Vertex {
                sym_test: find(i),
                sym_trial: find(j),
            }
        }
    }
}

/// Quadrature points `(x, y, weight)` in canonical coordinates.
#[derive(Clone, Debug, Default)]
pub struct PairRule {
    pub points: Vec<([f64; 2], [f64; 2], f64)>,
}

impl PairRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.2).sum()
    }
}

fn gauss4(n: usize) -> Vec<([f64; 4], f64)> {
    let g = gauss(n);
    let mut out = Vec::with_capacity(n.pow(4));
    for (a, wa) in g.iter() {
        for (b, wb) in g.iter() {
            for (c, wc) in g.iter() {
                for (d, wd) in g.iter() {
                    out.push(([a, b, c, d], wa * wb * wc * wd));
                }
            }
        }
    }
    out
}

/// Splits `(base, offset)` into the two coordinates of a pair along one axis:
/// positive sign puts `x = y + offset`, negative `y = x + offset`.
#[inline]
fn split(positive: bool, w: f64, v: f64) -> (f64, f64) {
    let base = w * (1.0 - v);
    if positive {
        (base + v, base)
    } else {
        (base, base + v)
    }
}

/// Identical elements: eight regions by the sign of `x - y` per axis and by
/// the larger of the two offsets.
pub fn coincident_rule(n: usize) -> PairRule {
    let g = gauss4(n);
    let mut points = Vec::with_capacity(8 * g.len());
    for region in 0..8 {
        let s1 = region & 1 == 0;
        let s2 = region & 2 == 0;
        let first = region & 4 == 0;
        for &([rho, eta, w1, w2], w) in &g {
            let (v1, v2) = if first { (rho, rho * eta) } else { (rho * eta, rho) };
            let (x1, y1) = split(s1, w1, v1);
            let (x2, y2) = split(s2, w2, v2);
            points.push(([x1, x2], [y1, y2], w * rho * (1.0 - v1) * (1.0 - v2)));
        }
    }
    PairRule { points }
}

/// Elements sharing the canonical edge `u = 0`: the along-edge offset is split
/// by sign, the remaining three singular coordinates by three pyramids.
pub fn edge_rule(n: usize) -> PairRule {
    let g = gauss4(n);
    let mut points = Vec::with_capacity(6 * g.len());
    for positive in [true, false] {
        for pyramid in 0..3 {
            for &([rho, s, t, w4], w) in &g {
                let coords = match pyramid {
                    0 => [rho, rho * s, rho * t],
                    1 => [rho * s, rho, rho * t],
                    _ => [rho * s, rho * t, rho],
                };
                let [x1, y1, v] = coords;
                let (x2, y2) = split(positive, w4, v);
                points.push(([x1, x2], [y1, y2], w * rho * rho * (1.0 - v)));
            }
        }
    }
    PairRule { points }
}

/// Elements sharing the canonical vertex `(0,0)`: four pyramids in 4D.
pub fn vertex_rule(n: usize) -> PairRule {
    let g = gauss4(n);
    let mut points = Vec::with_capacity(4 * g.len());
    for pyramid in 0..4 {
        for &([rho, a, b, c], w) in &g {
            let q = [rho * a, rho * b, rho * c];
            let mut coords = [0.0; 4];
            let mut k = 0;
            for (i, slot) in coords.iter_mut().enumerate() {
                if i == pyramid {
                    *slot = rho;
                } else {
                    *slot = q[k];
                    k += 1;
                }
            }
            points.push(([coords[0], coords[1]], [coords[2], coords[3]], w * rho * rho * rho));
        }
    }
    PairRule { points }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_cover_the_unit_hypercube() {
        for n in [2, 4, 6] {
            for rule in [coincident_rule(n), edge_rule(n), vertex_rule(n)] {
                assert!((rule.total_weight() - 1.0).abs() < 1e-13);
                for (x, y, w) in &rule.points {
                    assert!(*w > 0.0);
                    assert!(x.iter().chain(y).all(|c| (0.0..=1.0).contains(c)));
                }
            }
        }
    }

    #[test]
    fn rules_integrate_smooth_functions() {
        // int x1 x2^2 y1^3 y2 over [0,1]^4 = 1/2 * 1/3 * 1/4 * 1/2
        let f = |x: [f64; 2], y: [f64; 2]| x[0] * x[1] * x[1] * y[0].powi(3) * y[1];
        let exact = 1.0 / 48.0;
        for rule in [coincident_rule(8), edge_rule(8), vertex_rule(8)] {
            let s: f64 = rule.points.iter().map(|&(x, y, w)| w * f(x, y)).sum();
            assert!((s - exact).abs() < 1e-12, "{s}");
        }
    }

    /// `int_0^a int_0^b f(s, t) / |(s, t)| dt ds` in polar coordinates around the
    /// singular corner, split along the diagonal.
    fn corner_oracle(f: &dyn Fn(f64, f64) -> f64, a: f64, b: f64) -> f64 {
        let g = gauss(40);
        let split = (b / a).atan();
        let mut sum = 0.0;
        for (lo, hi) in [(0.0, split), (split, std::f64::consts::FRAC_PI_2)] {
            for (tq, tw) in g.iter() {
                let th = lo + (hi - lo) * tq;
                let rmax = if th < split { a / th.cos() } else { b / th.sin() };
                for (rq, rw) in g.iter() {
                    let r = rmax * rq;
                    sum += (hi - lo) * tw * rmax * rw * f(r * th.cos(), r * th.sin());
                }
            }
        }
        sum
    }

    /// Plain tensor Gauss on a rectangle away from the singularity.
    fn box_oracle(f: &dyn Fn(f64, f64) -> f64, s0: f64, s1: f64, t0: f64, t1: f64) -> f64 {
        let g = gauss(30);
        let mut sum = 0.0;
        for (a, wa) in g.iter() {
            for (b, wb) in g.iter() {
                let (s, t) = (s0 + (s1 - s0) * a, t0 + (t1 - t0) * b);
                sum += wa * wb * (s1 - s0) * (t1 - t0) * f(s, t) / s.hypot(t);
            }
        }
        sum
    }

    fn rule_integral(rule: &PairRule, flip: [f64; 2]) -> f64 {
        rule.points
            .iter()
            .map(|&(x, y, w)| w / (x[0] - flip[0] * y[0]).hypot(x[1] - flip[1] * y[1]))
            .sum()
    }

    #[test]
    fn flat_square_pairs_match_the_difference_integral() {
        // coincident: density of x - y per axis is 1 - |s| on [-1, 1]
        let coincident = 4.0 * corner_oracle(&|s, t| (1.0 - s) * (1.0 - t), 1.0, 1.0);
        // edge: trial square reflected across u = 0, so x1 - y1 = u + u' in [0, 2]
        let edge = 2.0
            * (corner_oracle(&|s, t| s * (1.0 - t), 1.0, 1.0)
                + box_oracle(&|s, t| (2.0 - s) * (1.0 - t), 1.0, 2.0, 0.0, 1.0));
        // vertex: reflected in both directions
        let vertex = corner_oracle(&|s, t| s * t, 1.0, 1.0)
            + 2.0 * box_oracle(&|s, t| (2.0 - s) * t, 1.0, 2.0, 0.0, 1.0)
            + box_oracle(&|s, t| (2.0 - s) * (2.0 - t), 1.0, 2.0, 1.0, 2.0);
        // closed form of the coincident case
        let r2 = 2f64.sqrt();
        let exact = 4.0 * (1.0 + r2).ln() - 4.0 * (r2 - 1.0) / 3.0;
        assert!((coincident - exact).abs() < 1e-12, "{coincident} vs {exact}");
        for (n, tol) in [(5, 1e-6), (8, 1e-9)] {
            let c = rule_integral(&coincident_rule(n), [1.0, 1.0]);
            let e = rule_integral(&edge_rule(n), [-1.0, 1.0]);
            let v = rule_integral(&vertex_rule(n), [-1.0, -1.0]);
            assert!((c - coincident).abs() < tol * coincident, "n={n}: {c} vs {coincident}");
            assert!((e - edge).abs() < tol * edge, "n={n}: {e} vs {edge}");
            assert!((v - vertex).abs() < tol * vertex, "n={n}: {v} vs {vertex}");
        }
    }

    #[test]
    fn classification_is_symmetric() {
        let a = [0, 1, 2, 3];
        assert_eq!(classify(&a, &a), PairClass::Coincident);
        assert_eq!(classify(&a, &[4, 5, 6, 7]), PairClass::Separated);
        let b = [1, 8, 3, 9];
        match (classify(&a, &b), classify(&b, &a)) {
            (
                PairClass::Edge { sym_test, sym_trial },
                PairClass::Edge {
                    sym_test: t2,
                    sym_trial: s2,
                },
            ) => {
                assert_eq!(sym_test, s2);
                assert_eq!(sym_trial, t2);
                // canonical edge maps to the shared corners 1 and 3
                assert_eq!(sym_test.corner(0, 0), 1);
                assert_eq!(sym_test.corner(0, 1), 3);
                assert_eq!(sym_trial.corner(0, 0), 0);
                assert_eq!(sym_trial.corner(0, 1), 2);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(classify(&a, &[3, 10, 11, 12]), PairClass::Vertex { .. }));
    }
}
