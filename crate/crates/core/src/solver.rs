//! Batch Levenberg-Marquardt over SE(2) trajectories.
//!
//! The solver is deterministic: identical inputs give bit-identical outputs,
//! which keeps the finite-difference Jacobians in the learner free of solver
//! noise beyond the convergence tolerance.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{linearize, total_error, FactorGraph, SparseSystem};
use crate::lie::{SE2Pose, Tangent3};
use crate::linalg::solve_spd;
use crate::params::NoiseParams;

/// Damping above which the solver gives up on finding a descent step.
const MAX_DAMPING: f64 = 1e16;

/// Relative error increase attributed to roundoff when polishing.
const ROUNDOFF_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Tolerance on the predicted decrease of a rejected step, relative to
    /// the current error (absolute below an error of 1).
    pub error_tolerance: f64,
    /// Infinity-norm tolerance on the increment.
    pub step_tolerance: f64,
    /// A terminated solve is stationary when `‖Aᵀb‖∞` is below this
    /// fraction of `max(1, ‖|A|ᵀ|b|‖∞)`, which keeps the test invariant to a
    /// common rescaling of all noise parameters.
    pub gradient_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 100,
            initial_damping: 1e-4,
            damping_up: 10.0,
            damping_down: 0.1,
            error_tolerance: 1e-10,
            step_tolerance: 1e-12,
            gradient_tolerance: 1e-6,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.initial_damping,
            self.damping_up,
            self.damping_down,
            self.error_tolerance,
            self.step_tolerance,
            self.gradient_tolerance,
        ];
        if self.max_iterations == 0 || positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("solver options must all be positive".into()));
        }
        if self.damping_up <= 1.0 || self.damping_down >= 1.0 {
            return Err(Error::Config(
                "damping_up must exceed 1 and damping_down must be below 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub estimate: Vec<SE2Pose>,
    pub final_error: f64,
    /// Accepted steps.
    pub iterations: usize,
    pub converged: bool,
    /// `‖Aᵀb‖∞` at the returned estimate.
    pub gradient_norm: f64,
}

/// Solves the damped normal equations `(AᵀA + damping·I) Δ = Aᵀb`.
///
/// Returns one tangent increment per pose.
pub fn gauss_newton_step(sys: &SparseSystem, damping: f64) -> Result<Vec<Tangent3>> {
    let (h, g) = sys.normal_equations();
    let delta = solve_spd(&h, damping, &g)?;
    Ok(split_increments(&delta))
}

fn split_increments(delta: &DVector<f64>) -> Vec<Tangent3> {
    delta
        .as_slice()
        .chunks_exact(3)
        .map(|c| Tangent3::new(c[0], c[1], c[2]))
        .collect()
}

fn retract(states: &[SE2Pose], delta: &DVector<f64>) -> Vec<SE2Pose> {
    states
        .iter()
        .zip(split_increments(delta))
        .map(|(x, d)| x.oplus(&d))
        .collect()
}

/// Minimizes `Σ ½‖g_i(x) ⊖ z_i‖²_θ` starting from `x0`.
///
/// Hitting the iteration limit or failing to find a descent step is not an
/// error; the result is flagged with `converged = false`.
pub fn solve(
    graph: &FactorGraph,
    x0: &[SE2Pose],
    theta: &NoiseParams,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    graph.check(x0, theta)?;
    let mut x = x0.to_vec();
    let mut error = total_error(graph, &x, theta)?;
    let mut damping = opts.initial_damping;
    let mut accepted = 0;
    let mut terminated = false;

    'outer: for _ in 0..opts.max_iterations {
        let sys = linearize(graph, &x, theta)?;
        let (h, g) = sys.normal_equations();
        if g.amax() == 0.0 {
            terminated = true;
            break;
        }
        loop {
            let delta = match solve_spd(&h, damping, &g) {
                Ok(d) => d,
                Err(Error::NotPositiveDefinite { .. }) => {
                    damping *= opts.damping_up;
                    if damping > MAX_DAMPING {
                        break 'outer;
                    }
                    continue;
                }
                Err(e) => return Err(e),
            };
            if delta.amax() < opts.step_tolerance {
                terminated = true;
                break 'outer;
            }
            let candidate = retract(&x, &delta);
            let candidate_error = total_error(graph, &candidate, theta)?;
            if candidate_error < error {
                x = candidate;
                error = candidate_error;
                accepted += 1;
                damping = (damping * opts.damping_down).max(f64::MIN_POSITIVE);
                break;
            }
            // Predicted decrease of the quadratic model: ½ Δᵀ(g + damping·Δ).
            let predicted = 0.5 * delta.dot(&(&g + &delta * damping));
            if predicted < opts.error_tolerance * error.max(1.0) {
                // The error can no longer resolve the decrease; keep polishing
                // while the step shrinks the gradient and leaves the error
                // unchanged up to summation roundoff.
                let candidate_gradient = linearize(graph, &candidate, theta)?.gradient_norm();
                if candidate_error <= error * (1.0 + ROUNDOFF_SLACK) && candidate_gradient < g.amax() {
                    x = candidate;
                    error = candidate_error;
                    accepted += 1;
                    break;
                }
                terminated = true;
                break 'outer;
            }
            damping *= opts.damping_up;
            if damping > MAX_DAMPING {
                break 'outer;
            }
        }
    }

    let sys = linearize(graph, &x, theta)?;
    let gradient_norm = sys.gradient_norm();
    let stationary = gradient_norm < opts.gradient_tolerance * sys.gradient_scale().max(1.0);
    Ok(SolveResult {
        estimate: x,
        final_error: error,
        iterations: accepted,
        converged: terminated && stationary,
        gradient_norm,
    })
}

/// Initial trajectory by chaining odometry from the first GPS fix.
pub fn dead_reckoning(first_fix: SE2Pose, odometry: &[SE2Pose]) -> Vec<SE2Pose> {
    let mut out = Vec::with_capacity(odometry.len() + 1);
    out.push(first_fix);
    for z in odometry {
        let last = *out.last().expect("non-empty");
        out.push(last.compose(z));
    }
    out
}
