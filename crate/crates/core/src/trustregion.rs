//! Single second-order step with backtracking line search for
//! `max L(theta) s.t. D(theta) <= delta`, where `D(theta_old) = 0` and the
//! curvature of `D` at `theta_old` is available as a matrix-vector product.
//!
//! The search direction `x = A^-1 g` comes from conjugate gradient on the
//! (optionally subsampled and damped) curvature operator; the full step is
//! `sqrt(2 delta / g^T x) * x`, shrunk geometrically until both the objective
//! and the constraint tests pass.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkit::{all_finite, axpy, dot, norm};

/// Threshold on `g^T A^-1 g` below which there is no usable direction.
pub const DEGENERATE_DIRECTION: f64 = 1e-12;

/// Tolerance on the constraint at the expansion point.
pub const EXPANSION_TOLERANCE: f64 = 1e-10;

/// Relative slack on `D <= delta`. The unshrunk step lands exactly on the
/// boundary, where rounding alone can put `D` a few ulps above `delta`.
pub const BOUNDARY_RTOL: f64 = 1e-10;

/// A boxed curvature-vector product `v -> A v`.
pub type CurvatureOperator<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a>;

/// One constrained maximization problem.
pub trait TrustRegionProblem {
    fn theta_old(&self) -> &[f64];

    /// Constraint radius.
    fn delta(&self) -> f64;

    /// Gradient of the objective at `theta_old` over the full dataset.
    fn gradient(&self) -> Result<Vec<f64>>;

    /// Number of data rows the curvature can be subsampled from.
    fn num_rows(&self) -> usize;

    /// Curvature of the constraint at `theta_old`, restricted to `rows`
    /// (`None` for every row). The returned operator is fixed for the
    /// duration of one solve.
    fn curvature(&self, rows: Option<&[usize]>) -> Result<CurvatureOperator<'_>>;

    /// Objective and constraint at `theta`.
    fn evaluate(&self, theta: &[f64]) -> Result<(f64, f64)>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustRegionConfig {
    pub cg_iters: usize,
    pub damping: f64,
    /// Line-search shrink factor `s` in (0, 1).
    pub backtrack_ratio: f64,
    /// Maximum number of shrinks `K`.
    pub max_backtracks: usize,
    /// Fraction of rows used for the curvature operator, in (0, 1].
    pub subsample_fraction: f64,
    /// Start the line search at `s^1` instead of trying the unshrunk step.
    pub skip_unshrunk_step: bool,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            cg_iters: 10,
            damping: 1e-5,
            backtrack_ratio: 0.8,
            max_backtracks: 15,
            subsample_fraction: 1.0,
            skip_unshrunk_step: false,
        }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.cg_iters >= 1
            && self.damping >= 0.0
            && self.backtrack_ratio > 0.0
            && self.backtrack_ratio < 1.0
            && self.subsample_fraction > 0.0
            && self.subsample_fraction <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(alloc::format!(
                "invalid trust-region config {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    /// No candidate passed both tests; parameters unchanged.
    Exhausted,
    /// `g^T A^-1 g` too small; parameters unchanged.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub accepted: bool,
    pub outcome: StepOutcome,
    /// Shrink exponent `k` of the accepted step, or the last one tried.
    pub backtracks_used: usize,
    pub step_norm: f64,
    pub objective_before: f64,
    pub objective_after: f64,
    pub constraint_after: f64,
    pub cg_residual: f64,
}

/// Result of [`conjugate_gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Approximately solves `(A + damping I) x = g` with at most `iters` steps.
pub fn conjugate_gradient<F>(avp: F, g: &[f64], iters: usize, damping: f64) -> Result<CgSolution>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !all_finite(g) {
        return Err(Error::NonFinite("conjugate gradient right-hand side"));
    }
    let n = g.len();
    let mut x = vec![0.0; n];
    let mut r = g.to_vec();
    let mut p = g.to_vec();
    let mut rr = dot(&r, &r);
    let tol = 1e-22 * rr;
    let mut done = 0;
    for _ in 0..iters {
        if rr <= tol || rr == 0.0 {
            break;
        }
        let mut ap = avp(&p)?;
        if ap.len() != n {
            return Err(Error::Shape(alloc::format!(
                "curvature product returned {} values for {n} parameters",
                ap.len()
            )));
        }
        axpy(damping, &p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || !all_finite(&ap) {
            return Err(Error::NonFinite("conjugate gradient curvature product"));
        }
        if pap <= 0.0 {
            log::warn!("conjugate gradient met non-positive curvature {pap:e}; stopping early");
            break;
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        done += 1;
    }
    if !all_finite(&x) {
        return Err(Error::NonFinite("conjugate gradient solution"));
    }
    Ok(CgSolution {
        x,
        residual_norm: libm::sqrt(rr),
        iterations: done,
    })
}

/// Full-step displacement `sqrt(2 delta / g^T x) * x` for `x = A^-1 g`.
pub fn analytic_step(g: &[f64], x: &[f64], delta: f64) -> Result<Vec<f64>> {
    let gx = dot(g, x);
    if !(gx > DEGENERATE_DIRECTION) {
        return Err(Error::DegenerateDirection(gx));
    }
    let scale = libm::sqrt(2.0 * delta.max(0.0) / gx);
    Ok(x.iter().map(|v| v * scale).collect())
}

/// Draws the curvature subsample: uniform without replacement, sorted.
pub fn subsample_rows(n: usize, fraction: f64, seed: u64) -> Option<Vec<usize>> {
    if fraction >= 1.0 || n == 0 {
        return None;
    }
    let m = (libm::ceil(fraction * n as f64) as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = rand::seq::index::sample(&mut rng, n, m).into_vec();
    rows.sort_unstable();
    Some(rows)
}

/// One trust-region step. Returns the new parameters and a report; on
/// rejection the returned parameters equal `theta_old`.
pub fn solve_step<P: TrustRegionProblem + ?Sized>(
    problem: &P,
    config: &TrustRegionConfig,
    seed: u64,
) -> Result<(Vec<f64>, StepReport)> {
    config.validate()?;
    let theta_old = problem.theta_old();
    let delta = problem.delta();
    let (obj_old, con_old) = problem.evaluate(theta_old)?;
    if !obj_old.is_finite() {
        return Err(Error::NonFinite("objective at theta_old"));
    }
    if !(con_old.abs() <= EXPANSION_TOLERANCE) {
        return Err(Error::ExpansionPoint(con_old));
    }

    let g = problem.gradient()?;
    if g.len() != theta_old.len() {
        return Err(Error::Shape(alloc::format!(
            "gradient has {} entries for {} parameters",
            g.len(),
            theta_old.len()
        )));
    }
    if !all_finite(&g) {
        return Err(Error::NonFinite("objective gradient"));
    }

    let rows = subsample_rows(problem.num_rows(), config.subsample_fraction, seed);
    let avp = problem.curvature(rows.as_deref())?;
    let cg = conjugate_gradient(&*avp, &g, config.cg_iters, config.damping)?;

    let rejected = |outcome, k, residual| {
        (
            theta_old.to_vec(),
            StepReport {
                accepted: false,
                outcome,
                backtracks_used: k,
                step_norm: 0.0,
                objective_before: obj_old,
                objective_after: obj_old,
                constraint_after: con_old,
                cg_residual: residual,
            },
        )
    };

    let full = match analytic_step(&g, &cg.x, delta) {
        Ok(step) => step,
        Err(Error::DegenerateDirection(_)) => {
            return Ok(rejected(StepOutcome::Degenerate, 0, cg.residual_norm))
        }
        Err(e) => return Err(e),
    };
    let full_norm = norm(&full);

    let first = usize::from(config.skip_unshrunk_step);
    let mut candidate = vec![0.0; theta_old.len()];
    for k in first..=config.max_backtracks {
        let scale = libm::pow(config.backtrack_ratio, k as f64);
        for ((c, t), s) in candidate.iter_mut().zip(theta_old).zip(&full) {
            *c = t + scale * s;
        }
        let (obj, con) = match problem.evaluate(&candidate) {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => continue,
            Err(e) => return Err(e),
        };
        if obj.is_finite() && con.is_finite() && obj >= obj_old && con <= delta * (1.0 + BOUNDARY_RTOL) {
            return Ok((
                candidate,
                StepReport {
                    accepted: true,
                    outcome: StepOutcome::Accepted,
                    backtracks_used: k,
                    step_norm: scale * full_norm,
                    objective_before: obj_old,
                    objective_after: obj,
                    constraint_after: con,
                    cg_residual: cg.residual_norm,
                },
            ));
        }
    }
    Ok(rejected(
        StepOutcome::Exhausted,
        config.max_backtracks,
        cg.residual_norm,
    ))
}

/// A problem assembled from closures, mostly useful for tests and small
/// explicit-matrix problems.
pub struct FnProblem<G, C, E> {
    pub theta_old: Vec<f64>,
    pub delta: f64,
    pub rows: usize,
    pub gradient: G,
    /// `(rows, v) -> A v`
    pub curvature: C,
    pub evaluate: E,
}

impl<G, C, E> TrustRegionProblem for FnProblem<G, C, E>
where
    G: Fn() -> Result<Vec<f64>>,
    C: Fn(Option<&[usize]>, &[f64]) -> Result<Vec<f64>>,
    E: Fn(&[f64]) -> Result<(f64, f64)>,
{
    fn theta_old(&self) -> &[f64] {
        &self.theta_old
    }

    fn delta(&self) -> f64 {
        self.delta
    }

    fn gradient(&self) -> Result<Vec<f64>> {
        (self.gradient)()
    }

    fn num_rows(&self) -> usize {
        self.rows
    }

    fn curvature(&self, rows: Option<&[usize]>) -> Result<CurvatureOperator<'_>> {
        let rows = rows.map(<[usize]>::to_vec);
        Ok(Box::new(move |v| (self.curvature)(rows.as_deref(), v)))
    }

    fn evaluate(&self, theta: &[f64]) -> Result<(f64, f64)> {
        (self.evaluate)(theta)
    }
}
