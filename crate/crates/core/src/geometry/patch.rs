use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::Point;

/// One face of the reference cube `[-1, 1]^3`, parametrized so that
/// `d/du x d/dv` points away from the cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CubeFace {
    pub axis: usize,
    pub positive: bool,
}

impl CubeFace {
    pub fn all() -> [CubeFace; 6] {
        let mut out = [CubeFace {
            axis: 0,
            positive: true,
        }; 6];
        for (i, f) in out.iter_mut().enumerate() {
            f.axis = i / 2;
            f.positive = i % 2 == 0;
        }
        out
    }

    /// Equiangular variant: face coordinates `tan(pi/4 (2u - 1))`, which spreads
    /// the radially projected points evenly over the sphere.
    pub fn equiangular_point(&self, u: f64, v: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let q = std::f64::consts::FRAC_PI_4;
        let (su, sv) = ((q * (2.0 * u - 1.0)).tan(), (q * (2.0 * v - 1.0)).tan());
        let (gu, gv) = (q * (1.0 + su * su), q * (1.0 + sv * sv));
        let (p, du, dv) = self.point(0.5 * (su + 1.0), 0.5 * (sv + 1.0));
        (p, du * gu, dv * gv)
    }

    /// Point on the cube surface with its two parameter derivatives.
    pub fn point(&self, u: f64, v: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let a = self.axis;
        let b = (a + 1) % 3;
        let c = (a + 2) % 3;
        let mut p = Vector3::zeros();
        let mut du = Vector3::zeros();
        let mut dv = Vector3::zeros();
        if self.positive {
            p[a] = 1.0;
            p[b] = 2.0 * u - 1.0;
            p[c] = 2.0 * v - 1.0;
            du[b] = 2.0;
            dv[c] = 2.0;
        } else {
            p[a] = -1.0;
            p[b] = 2.0 * v - 1.0;
            p[c] = 2.0 * u - 1.0;
            du[c] = 2.0;
            dv[b] = 2.0;
        }
        (p, du, dv)
    }
}

/// Tensor-product Lagrange patch through a uniform `(p1+1) x (p2+1)` point grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangePatch {
    pub degree: (usize, usize),
    /// Row-major, `u` fastest: index `i + (p1 + 1) * j`.
    pub points: Vec<Point>,
}

fn uniform_lagrange(p: usize, x: f64, val: &mut [f64], der: &mut [f64]) {
    if p == 0 {
        val[0] = 1.0;
        der[0] = 0.0;
        return;
    }
    let nodes: Vec<f64> = (0..=p).map(|i| i as f64 / p as f64).collect();
    for i in 0..=p {
        let mut num = 1.0;
        let mut den = 1.0;
        let mut dsum = 0.0;
        for k in 0..=p {
            if k == i {
                continue;
            }
            den *= nodes[i] - nodes[k];
            num *= x - nodes[k];
        }
        for k in 0..=p {
            if k == i {
                continue;
            }
            let mut prod = 1.0;
            for m in 0..=p {
                if m != i && m != k {
                    prod *= x - nodes[m];
                }
            }
            dsum += prod;
        }
        val[i] = num / den;
        der[i] = dsum / den;
    }
}

impl LagrangePatch {
    pub fn eval(&self, u: f64, v: f64) -> (Point, Vector3<f64>, Vector3<f64>) {
        let (p1, p2) = self.degree;
        let mut lu = vec![0.0; p1 + 1];
        let mut du = vec![0.0; p1 + 1];
        let mut lv = vec![0.0; p2 + 1];
        let mut dv = vec![0.0; p2 + 1];
        uniform_lagrange(p1, u, &mut lu, &mut du);
        uniform_lagrange(p2, v, &mut lv, &mut dv);
        let mut x = Vector3::zeros();
        let mut xu = Vector3::zeros();
        let mut xv = Vector3::zeros();
        for j in 0..=p2 {
            for i in 0..=p1 {
                let pt = &self.points[i + (p1 + 1) * j];
                x += pt * (lu[i] * lv[j]);
                xu += pt * (du[i] * lv[j]);
                xv += pt * (lu[i] * dv[j]);
            }
        }
        (x, xu, xv)
    }
}

/// Map from the unit square onto one patch of the cavity boundary.
#[derive(Clone, Debug, PartialEq)]
pub enum PatchMap {
    /// Cube face radially projected onto a sphere (equiangular parametrization).
    SphereFace {
        center: Point,
        radius: f64,
        rotation: Matrix3<f64>,
        face: CubeFace,
    },
    /// Flat face of an (optionally rotated) cube.
    CubeFace {
        center: Point,
        half_width: f64,
        rotation: Matrix3<f64>,
        face: CubeFace,
    },
    Lagrange(LagrangePatch),
}

impl PatchMap {
    pub fn eval(&self, u: f64, v: f64) -> Point {
        self.eval_with_derivatives(u, v).0
    }

    /// Position and the two parameter derivatives.
    pub fn eval_with_derivatives(&self, u: f64, v: f64) -> (Point, Vector3<f64>, Vector3<f64>) {
        match self {
            PatchMap::SphereFace {
                center,
                radius,
                rotation,
                face,
            } => {
                let (q, qu, qv) = face.equiangular_point(u, v);
                let nq = q.norm();
                let qh = q / nq;
                let proj = |d: Vector3<f64>| (d - qh * qh.dot(&d)) / nq;
                (
                    center + rotation * (qh * *radius),
                    rotation * proj(qu) * *radius,
                    rotation * proj(qv) * *radius,
                )
            }
            PatchMap::CubeFace {
                center,
                half_width,
                rotation,
                face,
            } => {
                let (q, qu, qv) = face.point(u, v);
                (
                    center + rotation * (q * *half_width),
                    rotation * qu * *half_width,
                    rotation * qv * *half_width,
                )
            }
            PatchMap::Lagrange(p) => p.eval(u, v),
        }
    }

    /// Resample this map as a Lagrange patch of the given degree.
    pub fn to_lagrange(&self, degree: (usize, usize)) -> LagrangePatch {
        let (p1, p2) = degree;
        let mut points = Vec::with_capacity((p1 + 1) * (p2 + 1));
        for j in 0..=p2 {
            for i in 0..=p1 {
                let u = if p1 == 0 { 0.5 } else { i as f64 / p1 as f64 };
                let v = if p2 == 0 { 0.5 } else { j as f64 / p2 as f64 };
                points.push(self.eval(u, v));
            }
        }
        LagrangePatch { degree, points }
    }
}
