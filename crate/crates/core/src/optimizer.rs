//! Gradient descent with a quadratic line search over the deformation
//! parameters.

use std::time::Instant;

use nalgebra::{DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::bem::{assemble_operators, build_spaces, QuadratureScheme};
use crate::deformation::{apply_displacement, DeformationBasis};
use crate::error::{Error, Result};
use crate::geometry::PolynomialSurface;
use crate::homogenization::{effective_tensor, shape_functional, shape_gradient, ShapeSensitivity, TargetTensor};
use crate::kernel::PeriodicKernel;
use crate::solver::{solve_n2d, CellSolution};

/// Line-search constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSearchParams {
    /// Length of the first probe in parameter space, `t0 |g|`.
    pub initial_step: f64,
    pub shrink: f64,
    pub expand: f64,
    pub max_halvings: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        LineSearchParams {
            initial_step: 0.1,
            shrink: 0.5,
            expand: 2.0,
            max_halvings: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationConfig {
    pub target: TargetTensor,
    pub j_tol: f64,
    pub max_iter: usize,
    pub line_search: LineSearchParams,
    /// B-spline degree of the trace spaces.
    pub degree: usize,
    pub quadrature: QuadratureScheme,
}

impl OptimizationConfig {
    pub fn new(target: TargetTensor) -> Self {
        OptimizationConfig {
            target,
            j_tol: 1e-5,
            max_iter: 25,
            line_search: LineSearchParams::default(),
            degree: 2,
            quadrature: QuadratureScheme::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ls = &self.line_search;
        if !(self.j_tol > 0.0) || self.max_iter == 0 || self.degree == 0 {
            return Err(Error::param("need j_tol > 0, max_iter >= 1 and degree >= 1"));
        }
        if !(ls.initial_step > 0.0) || !(ls.shrink > 0.0 && ls.shrink < 1.0) || !(ls.expand >= 1.0) {
            return Err(Error::param("need initial_step > 0, 0 < shrink < 1 and expand >= 1"));
        }
        Ok(())
    }
}

/// One accepted iterate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub y: Vec<f64>,
    pub j: f64,
    pub a: [[f64; 3]; 3],
    pub gradient_norm: f64,
    /// Step `t` that led here, zero for the start.
    pub step: f64,
    pub rejected: usize,
    pub wall_ms: f64,
}

/// Everything computed for one parameter vector.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub y: DVector<f64>,
    pub surface: PolynomialSurface,
    pub solution: CellSolution,
    pub tensor: Matrix3<f64>,
    pub j: f64,
}

/// Full pipeline `y -> surface -> N2D solve -> A_0 -> J` and its gradient.
pub struct ShapeProblem<'a> {
    pub reference: &'a PolynomialSurface,
    pub basis: &'a DeformationBasis,
    pub kernel: &'a PeriodicKernel,
    pub target: TargetTensor,
    pub degree: usize,
    pub quadrature: QuadratureScheme,
}

impl<'a> ShapeProblem<'a> {
    pub fn new(
        reference: &'a PolynomialSurface,
        basis: &'a DeformationBasis,
        kernel: &'a PeriodicKernel,
        config: &OptimizationConfig,
    ) -> Self {
        ShapeProblem {
            reference,
            basis,
            kernel,
            target: config.target,
            degree: config.degree,
            quadrature: config.quadrature.clone(),
        }
    }

    pub fn evaluate(&self, y: &DVector<f64>) -> Result<Evaluation> {
        let surface = apply_displacement(self.reference, self.basis, y.as_slice())?;
        let (dir, neu) = build_spaces(&surface, self.degree)?;
        let ops = assemble_operators(&surface, (&dir, &neu), self.kernel, &self.quadrature)?;
        let solution = solve_n2d(&ops, &dir)?;
        let tensor = effective_tensor(&surface, &solution)?;
        let j = shape_functional(&tensor, &self.target);
        if !j.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Evaluation {
            y: y.clone(),
            surface,
            solution,
            tensor,
            j,
        })
    }

    /// `dJ/dy_k` from the solution already held by `eval`.
    pub fn gradient(&self, eval: &Evaluation) -> Result<DVector<f64>> {
        let sens = ShapeSensitivity::new(&eval.surface, &eval.solution)?;
        let coeffs = self
            .basis
            .fields
            .iter()
            .map(|f| sens.apply(&f.values))
            .collect::<Result<Vec<_>>>()?;
        Ok(shape_gradient(&eval.tensor, &self.target, &coeffs))
    }
}

/// Result of one line search along a fixed direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchOutcome {
    pub t: f64,
    pub j: f64,
    /// Probes that were inadmissible or did not decrease `J`.
    pub rejected: usize,
    /// The accepted `t` was the far probe `2 t0`.
    pub at_far_probe: bool,
}

/// Quadratic line search on `phi(t) = J(y + t d)` with `phi(0) = j0`.
///
/// `phi` returns `None` for inadmissible steps, which count as `+inf`.
pub fn line_search<F>(j0: f64, t0: f64, params: &LineSearchParams, mut phi: F) -> Result<LineSearchOutcome>
where
    F: FnMut(f64) -> Result<Option<f64>>,
{
    if !(t0 > 0.0) || !j0.is_finite() {
        return Err(Error::param(format!("line search needs t0 > 0 and finite J, got {t0}, {j0}")));
    }
    let mut probe = |t: f64| -> Result<f64> { Ok(phi(t)?.unwrap_or(f64::INFINITY)) };
    let j1 = probe(t0)?;
    let j2 = probe(2.0 * t0)?;
    let mut rejected = [j1, j2].iter().filter(|&&j| !(j < j0)).count();
    let mut best = (t0, j1);
    if j2 < j1 {
        best = (2.0 * t0, j2);
    }
    let curv = (j2 - 2.0 * j1 + j0) / (2.0 * t0 * t0);
    let slope = (4.0 * j1 - 3.0 * j0 - j2) / (2.0 * t0);
    if curv.is_finite() && curv > 0.0 {
        let ts = -slope / (2.0 * curv);
        if ts > 0.0 && ts <= 2.0 * t0 && ts != t0 && ts != 2.0 * t0 {
            let js = probe(ts)?;
            if js < best.1 {
                best = (ts, js);
            } else if !(js < j0) {
                rejected += 1;
            }
        }
    }
    if best.1 < j0 {
        return Ok(LineSearchOutcome {
            t: best.0,
            j: best.1,
            rejected,
            at_far_probe: best.0 == 2.0 * t0,
        });
    }
    let mut t = t0;
    let mut lowest = best.1;
    for _ in 0..params.max_halvings {
        t *= params.shrink;
        let j = probe(t)?;
        if j < j0 {
            return Ok(LineSearchOutcome {
                t,
                j,
                rejected,
                at_far_probe: false,
            });
        }
        rejected += 1;
        lowest = lowest.min(j);
    }
    Err(Error::LineSearchFailure {
        halvings: params.max_halvings,
        j0,
        best: lowest,
    })
}

/// Called once per accepted iterate.
pub trait IterationObserver {
    fn on_iteration(&mut self, record: &IterationRecord, eval: &Evaluation) -> Result<()>;
}

impl<F: FnMut(&IterationRecord, &Evaluation) -> Result<()>> IterationObserver for F {
    fn on_iteration(&mut self, record: &IterationRecord, eval: &Evaluation) -> Result<()> {
        self(record, eval)
    }
}

#[derive(Clone, Debug)]
pub struct OptimizationState {
    pub y: DVector<f64>,
    pub surface: PolynomialSurface,
    pub tensor: Matrix3<f64>,
    pub j: f64,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    /// Number of full pipeline evaluations.
    pub evaluations: usize,
}

fn matrix_rows(a: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [a[(i, 0)], a[(i, 1)], a[(i, 2)]])
}

/// Gradient descent from `y = 0` until `J < j_tol` or `max_iter` steps.
pub fn run(
    config: &OptimizationConfig,
    reference: &PolynomialSurface,
    basis: &DeformationBasis,
    kernel: &PeriodicKernel,
    observers: &mut [&mut dyn IterationObserver],
) -> Result<OptimizationState> {
    config.validate()?;
    let problem = ShapeProblem::new(reference, basis, kernel, config);
    let start = Instant::now();
    let mut eval = problem.evaluate(&DVector::zeros(basis.len()))?;
    let mut evaluations = 1;
    let mut history = Vec::new();
    let mut step = 0.0;
    let mut rejected = 0;
    let mut step_length = config.line_search.initial_step;
    let mut converged = false;
    for iteration in 0..=config.max_iter {
        let g = problem.gradient(&eval)?;
        let gnorm = g.norm();
        let record = IterationRecord {
            iteration,
            y: eval.y.iter().copied().collect(),
            j: eval.j,
            a: matrix_rows(&eval.tensor),
            gradient_norm: gnorm,
            step,
            rejected,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        log::info!("iteration {iteration}: J = {:.6e}, |g| = {gnorm:.3e}, step = {step:.3e}", eval.j);
        for obs in observers.iter_mut() {
            obs.on_iteration(&record, &eval)?;
        }
        history.push(record);
        if eval.j < config.j_tol {
            converged = true;
            break;
        }
        if iteration == config.max_iter {
            break;
        }
        if gnorm == 0.0 {
            return Err(Error::LineSearchFailure { halvings: 0, j0: eval.j, best: eval.j });
        }
        let dir = -&g;
        let t0 = step_length / gnorm;
        let mut probes: Vec<(f64, Evaluation)> = Vec::new();
        let outcome = line_search(eval.j, t0, &config.line_search, |t| {
            evaluations += 1;
            match problem.evaluate(&(&eval.y + &dir * t)) {
                Ok(ev) => {
                    let j = ev.j;
                    probes.push((t, ev));
                    Ok(Some(j))
                }
                Err(Error::StepRejected(msg)) | Err(Error::Solver(msg)) => {
                    log::debug!("probe t = {t:.3e} rejected: {msg}");
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })?;
        let (_, next) = probes
            .into_iter()
            .find(|(t, _)| *t == outcome.t)
            .expect("accepted probe was evaluated");
        step_length = outcome.t * gnorm;
        if outcome.at_far_probe {
            step_length *= config.line_search.expand;
        }
        step = outcome.t;
        rejected = outcome.rejected;
        eval = next;
    }
    Ok(OptimizationState {
        y: eval.y,
        surface: eval.surface,
        tensor: eval.tensor,
        j: eval.j,
        history,
        converged,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(a: f64) -> impl FnMut(f64) -> Result<Option<f64>> {
        move |t| Ok(Some((t - a) * (t - a)))
    }

    #[test]
    fn exact_quadratic_is_minimized_in_one_fit() {
        let p = LineSearchParams::default();
        for &(a, t0) in &[(0.7, 0.5), (0.3, 1.0), (1.9, 1.0), (1e-3, 6e-4)] {
            let out = line_search(a * a, t0, &p, quadratic(a)).unwrap();
            assert!((out.t - a).abs() <= 1e-12, "{a} {out:?}");
            assert!(out.j < a * a);
        }
    }

    #[test]
    fn overshooting_probes_are_halved() {
        let p = LineSearchParams::default();
        // minimum far below t0, so both probes increase J
        let out = line_search(1.0, 10.0, &p, quadratic(1.0)).unwrap();
        assert!(out.j < 1.0);
        assert!(out.t < 2.0);
        // inadmissible probes beyond t = 0.5 count as +inf
        let out = line_search(1.0, 1.0, &p, |t| Ok(if t > 0.5 { None } else { Some((t - 1.0).powi(2)) })).unwrap();
        assert_eq!(out.t, 0.5);
        assert_eq!(out.rejected, 2);
    }

    #[test]
    fn far_probe_is_taken_when_the_fit_is_concave() {
        let p = LineSearchParams::default();
        let out = line_search(0.0, 1.0, &p, |t| Ok(Some(-t * t))).unwrap();
        assert_eq!(out.t, 2.0);
        assert!(out.at_far_probe);
    }

    #[test]
    fn ascent_direction_fails_after_the_halving_cap() {
        let p = LineSearchParams::default();
        let mut calls = 0;
        let err = line_search(0.0, 1.0, &p, |t| {
            calls += 1;
            Ok(Some(t))
        })
        .unwrap_err();
        assert!(matches!(err, Error::LineSearchFailure { halvings: 10, .. }));
        assert_eq!(calls, 12);
        assert!(line_search(1.0, 0.0, &p, quadratic(1.0)).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = OptimizationConfig::new(TargetTensor::isotropic(0.9));
        assert!(c.validate().is_ok());
        c.max_iter = 0;
        assert!(c.validate().is_err());
        c.max_iter = 3;
        c.line_search.shrink = 1.0;
        assert!(c.validate().is_err());
    }
}
