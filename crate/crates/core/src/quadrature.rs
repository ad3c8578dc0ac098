//! Gauss-Legendre rules on the unit interval and tensor rules on the unit square.

use std::sync::OnceLock;

const MAX_CACHED_ORDER: usize = 40;

/// A one-dimensional quadrature rule on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

fn compute_rule(n: usize) -> GaussRule {
    assert!(n >= 1, "Gauss rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        // Newton iteration on P_n starting from the Chebyshev-like guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1], ascending order
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.5;
    }
    GaussRule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule with `n` points on `[0, 1]`.
pub fn gauss(n: usize) -> &'static GaussRule {
    static CACHE: OnceLock<Vec<GaussRule>> = OnceLock::new();
    let rules = CACHE.get_or_init(|| (1..=MAX_CACHED_ORDER).map(compute_rule).collect());
    assert!(
        (1..=MAX_CACHED_ORDER).contains(&n),
        "Gauss order {n} outside 1..={MAX_CACHED_ORDER}"
    );
    &rules[n - 1]
}

/// Tensor-product Gauss points on the unit square as `(u, v, weight)`.
pub fn gauss_square(n: usize) -> Vec<(f64, f64, f64)> {
    let r = gauss(n);
    let mut out = Vec::with_capacity(n * n);
    for (v, wv) in r.iter() {
        for (u, wu) in r.iter() {
            out.push((u, v, wu * wv));
        }
    }
    out
}

/// Chebyshev points of the first kind on `[-1, 1]`.
pub fn chebyshev_nodes(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (std::f64::consts::PI * (2 * k + 1) as f64 / (2 * n) as f64).cos())
        .collect()
}

/// Lagrange basis values at `x` for the given nodes, via the barycentric formula.
pub fn lagrange_values(nodes: &[f64], bary: &[f64], x: f64, out: &mut [f64]) {
    for (k, &xk) in nodes.iter().enumerate() {
        if (x - xk).abs() < 1e-15 {
            out.iter_mut().for_each(|o| *o = 0.0);
            out[k] = 1.0;
            return;
        }
    }
    let mut denom = 0.0;
    for ((o, &xk), &wk) in out.iter_mut().zip(nodes).zip(bary) {
        let t = wk / (x - xk);
        *o = t;
        denom += t;
    }
    out.iter_mut().for_each(|o| *o /= denom);
}

/// Barycentric weights for arbitrary distinct nodes.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    nodes
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            let prod: f64 = nodes
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &xk)| xj - xk)
                .product();
            1.0 / prod
        })
        .collect()
}
