//! Displacement fields from a low-rank factorization of a Matérn covariance
//! on the surface points.

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PolynomialSurface};

/// Matérn correlation with smoothness 9/2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaternKernel {
    length: f64,
}

impl MaternKernel {
    pub fn new(length: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::param(format!("correlation length must be positive, got {length}")));
        }
        Ok(MaternKernel { length })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        let s = r / self.length;
        let poly = 1.0 + s * (3.0 + s * (27.0 / 7.0 + s * (18.0 / 7.0 + s * (27.0 / 35.0))));
        poly * (-3.0 * s).exp()
    }
}

/// `k_{9/2}(r)` for correlation length `length`.
pub fn matern_9_2(r: f64, length: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::param(format!("distance must be nonnegative, got {r}")));
    }
    Ok(MaternKernel::new(length)?.eval(r))
}

/// Symmetric positive semidefinite matrix given entrywise.
pub trait CovarianceAccessor {
    fn dim(&self) -> usize;
    fn entry(&self, i: usize, j: usize) -> f64;

    fn diagonal(&self, i: usize) -> f64 {
        self.entry(i, i)
    }

    /// Column `j` restricted to its possibly nonzero rows, written into `out`.
    fn column(&self, j: usize, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.entry(i, j);
        }
    }
}

/// `C[(a, i), (b, j)] = delta_ij k(|x_a - x_b|)`, row index `3a + i`.
#[derive(Clone, Debug)]
pub struct PointCovariance {
    points: Vec<Point>,
    kernel: MaternKernel,
}

/// Covariance of the diagonal Matérn field on `points`.
pub fn build_covariance(points: &[Point], length: f64) -> Result<PointCovariance> {
    if points.is_empty() {
        return Err(Error::param("covariance needs at least one point"));
    }
    Ok(PointCovariance {
        points: points.to_vec(),
        kernel: MaternKernel::new(length)?,
    })
}

impl CovarianceAccessor for PointCovariance {
    fn dim(&self) -> usize {
        3 * self.points.len()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        if i % 3 != j % 3 {
            return 0.0;
        }
        self.kernel.eval((self.points[i / 3] - self.points[j / 3]).norm())
    }

    fn diagonal(&self, _i: usize) -> f64 {
        1.0
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        let (b, c) = (j / 3, j % 3);
        let xb = self.points[b];
        for (a, x) in self.points.iter().enumerate() {
            let k = self.kernel.eval((x - xb).norm());
            for d in 0..3 {
                out[3 * a + d] = if d == c { k } else { 0.0 };
            }
        }
    }
}

/// `C ~ L L^T` with greedy diagonal pivoting.
#[derive(Clone, Debug)]
pub struct CovarianceFactor {
    pub pivots: Vec<usize>,
    /// `dim x rank`.
    pub l: DMatrix<f64>,
    /// `trace(C - L L^T)` at termination.
    pub trace_residual: f64,
    pub initial_trace: f64,
    /// Diagonal of `C - L L^T`.
    pub residual_diagonal: Vec<f64>,
}

impl CovarianceFactor {
    pub fn rank(&self) -> usize {
        self.l.ncols()
    }
}

/// Pivoted Cholesky; stops once the trace residual is at most
/// `tol * trace(C)` or the rank reaches `max_rank`.
pub fn pivoted_cholesky(c: &dyn CovarianceAccessor, tol: f64, max_rank: usize) -> Result<CovarianceFactor> {
    if !(tol > 0.0) {
        return Err(Error::param(format!("pivoted Cholesky tolerance must be positive, got {tol}")));
    }
    let n = c.dim();
    let max_rank = max_rank.min(n);
    let mut diag: Vec<f64> = (0..n).map(|i| c.diagonal(i)).collect();
    let initial_trace: f64 = diag.iter().sum();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut pivots = Vec::new();
    let mut col = vec![0.0; n];
    let mut trace = initial_trace;
    while trace > tol * initial_trace && cols.len() < max_rank {
        // first index among the largest residuals
        let (piv, &d) = diag
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, &f64)>, (i, v)| match best {
                Some((_, b)) if *v <= *b => best,
                _ => Some((i, v)),
            })
            .expect("nonempty");
        if d < -1e-10 {
            return Err(Error::NumericalBreakdown { pivot: piv, residual: d });
        }
        if d <= 0.0 {
            break;
        }
        c.column(piv, &mut col);
        for prev in &cols {
            let lp = prev[piv];
            if lp != 0.0 {
                for (x, p) in col.iter_mut().zip(prev) {
                    *x -= lp * p;
                }
            }
        }
        let s = d.sqrt();
        for x in col.iter_mut() {
            *x /= s;
        }
        // interpolation at the pivot is exact by construction
        col[piv] = s;
        for (i, x) in col.iter().enumerate() {
            diag[i] -= x * x;
        }
        diag[piv] = 0.0;
        for &p in &pivots {
            diag[p] = 0.0;
        }
        if let Some((i, &v)) = diag.iter().enumerate().find(|(_, v)| **v < -1e-10) {
            return Err(Error::NumericalBreakdown { pivot: i, residual: v });
        }
        pivots.push(piv);
        cols.push(col.clone());
        trace = diag.iter().map(|v| v.max(0.0)).sum();
    }
    let rank = cols.len();
    let l = DMatrix::from_fn(n, rank, |i, k| cols[k][i]);
    Ok(CovarianceFactor {
        pivots,
        l,
        trace_residual: trace,
        initial_trace,
        residual_diagonal: diag,
    })
}

/// One displacement mode `v_k` given at the surface points.
#[derive(Clone, Debug)]
pub struct DisplacementField {
    pub values: Vec<Vector3<f64>>,
    pub eigenvalue: f64,
}

impl DisplacementField {
    /// Flat vector `(x_0, y_0, z_0, x_1, ...)`.
    pub fn flat(&self) -> DVector<f64> {
        DVector::from_iterator(3 * self.values.len(), self.values.iter().flat_map(|v| [v.x, v.y, v.z]))
    }

    /// Interpolated value on element `e` with the geometry stencil.
    pub fn eval(&self, surface: &PolynomialSurface, e: usize, u: f64, v: f64) -> Vector3<f64> {
        surface.interpolate_field(e, u, v, &self.values)
    }
}

/// Groups of columns of `G` coupled through nonzero entries.
fn coupled_blocks(g: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = g.nrows();
    let mut block = vec![usize::MAX; n];
    let mut blocks = Vec::new();
    for seed in 0..n {
        if block[seed] != usize::MAX {
            continue;
        }
        let id = blocks.len();
        let mut members = vec![seed];
        block[seed] = id;
        let mut next = 0;
        while next < members.len() {
            let i = members[next];
            next += 1;
            for j in 0..n {
                if block[j] == usize::MAX && g[(i, j)] != 0.0 {
                    block[j] = id;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        blocks.push(members);
    }
    blocks
}

/// Top `p` eigenpairs of `L L^T` through the small problem `L^T L`.
///
/// `L^T L` is split into its decoupled blocks first (one per displacement
/// component for point covariances); each block is solved on its own.
pub fn extract_fields(factor: &CovarianceFactor, p: usize) -> Result<Vec<DisplacementField>> {
    let rank = factor.rank();
    if p > rank {
        return Err(Error::param(format!("{p} fields requested but the factor has rank {rank}")));
    }
    let small = factor.l.tr_mul(&factor.l);
    // (eigenvalue, eigenvector in the full rank space)
    let mut pairs: Vec<(f64, DVector<f64>)> = Vec::with_capacity(rank);
    for members in coupled_blocks(&small) {
        let sub = DMatrix::from_fn(members.len(), members.len(), |a, b| small[(members[a], members[b])]);
        let eig = SymmetricEigen::new(sub);
        for k in 0..members.len() {
            let mut vt = DVector::zeros(rank);
            for (a, &m) in members.iter().enumerate() {
                vt[m] = eig.eigenvectors[(a, k)];
            }
            pairs.push((eig.eigenvalues[k], vt));
        }
    }
    // stable: ties keep block order
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n = factor.l.nrows() / 3;
    pairs
        .into_iter()
        .take(p)
        .map(|(lambda, mut vt)| {
            let big = vt.amax();
            if let Some(first) = vt.iter().find(|x| x.abs() > 1e-12 * big) {
                if *first < 0.0 {
                    vt.neg_mut();
                }
            }
            let v = &factor.l * vt;
            Ok(DisplacementField {
                values: (0..n).map(|a| Vector3::new(v[3 * a], v[3 * a + 1], v[3 * a + 2])).collect(),
                eigenvalue: lambda.max(0.0),
            })
        })
        .collect()
}

/// Parameters of the deformation basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    /// Number of fields.
    pub p: usize,
    /// Correlation length.
    pub length: f64,
    /// Relative trace tolerance of the factorization.
    pub tol: f64,
    /// Rank cap; `None` means `min(3n, 600)`.
    pub max_rank: Option<usize>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig {
            p: 16,
            length: 1.0,
            tol: 1e-6,
            max_rank: None,
        }
    }
}

/// Fixed displacement fields on the reference surface.
#[derive(Clone, Debug)]
pub struct DeformationBasis {
    pub fields: Vec<DisplacementField>,
    pub rank: usize,
    pub trace_residual: f64,
}

impl DeformationBasis {
    pub fn build(reference: &PolynomialSurface, config: &BasisConfig) -> Result<Self> {
        let cov = build_covariance(reference.points(), config.length)?;
        let max_rank = config.max_rank.unwrap_or_else(|| cov.dim().min(600));
        let factor = pivoted_cholesky(&cov, config.tol, max_rank)?;
        log::debug!(
            "deformation basis: {} points, rank {}, trace residual {:.3e}",
            reference.points().len(),
            factor.rank(),
            factor.trace_residual
        );
        Ok(DeformationBasis {
            fields: extract_fields(&factor, config.p)?,
            rank: factor.rank(),
            trace_residual: factor.trace_residual,
        })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// `sum_k y_k v_k` at the points.
    pub fn displacement(&self, y: &[f64]) -> Result<Vec<Vector3<f64>>> {
        if y.len() != self.fields.len() {
            return Err(Error::param(format!("{} parameters for {} fields", y.len(), self.fields.len())));
        }
        let n = self.fields.first().map_or(0, |f| f.values.len());
        let mut out = vec![Vector3::zeros(); n];
        for (f, &yk) in self.fields.iter().zip(y) {
            if yk != 0.0 {
                for (o, v) in out.iter_mut().zip(&f.values) {
                    *o += v * yk;
                }
            }
        }
        Ok(out)
    }
}

/// `Gamma_ref + sum_k y_k V_k`, rejected if inadmissible.
pub fn apply_displacement(reference: &PolynomialSurface, basis: &DeformationBasis, y: &[f64]) -> Result<PolynomialSurface> {
    reference.displaced(&basis.displacement(y)?)
}
