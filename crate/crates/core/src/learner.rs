//! Outer loop: tracking loss, finite-difference solution Jacobians, the loss
//! gradient and Frank-Wolfe updates over the eigenvalue box.
//!
//! Each training iteration solves every training graph from its ground-truth
//! trajectory, perturbs one parameter at a time to build the solution
//! Jacobian `S` (forward differences, perturbed solves warm-started from the
//! unperturbed solution), forms `(1/|D|) Σ Sᵀ vec(f(θ) ⊖ x_gt)` and takes a
//! Frank-Wolfe step toward the box vertex minimizing the linearized loss.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FactorGraph;
use crate::lie::SE2Pose;
use crate::metrics::{mean_rmse, rmse, Rmse};
use crate::params::{eigen_spread, Bounds, NoiseParams};
use crate::report::{flat_labels, IterationRecord, Method, TrainReport, TrainStatus, REPORT_SCHEMA};
use crate::solver::{solve, SolveResult, SolverOptions};
use crate::synth::{build_graph, NavTrajectory};

/// Halvings of a perturbation step tried before a column is declared failed.
const MAX_TAU_HALVINGS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_outer_iterations: usize,
    /// Step-size offset `M` in `alpha = 2 / (M + itr)`.
    pub step_offset: f64,
    /// Relative perturbation: `tau_ij = tau_rel · max(theta_ij, lower_ij)`.
    pub tau_rel: f64,
    pub bounds: Bounds,
    /// Stop when the best loss improved by less than `window_tolerance`
    /// over the last `window` iterations.
    pub window: usize,
    pub window_tolerance: f64,
    pub parallel: bool,
    pub solver: SolverOptions,
}

impl TrainConfig {
    pub fn new(bounds: Bounds) -> Self {
        TrainConfig {
            max_outer_iterations: 100,
            step_offset: 10.0,
            tau_rel: 1e-4,
            bounds,
            window: 5,
            window_tolerance: 1e-8,
            parallel: true,
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iterations == 0 {
            return Err(Error::Config("max_outer_iterations must be at least 1".into()));
        }
        if !(self.step_offset >= 2.0) {
            return Err(Error::Config(format!(
                "step offset M must be at least 2 so that alpha <= 1, got {}",
                self.step_offset
            )));
        }
        if !(self.tau_rel > 0.0 && self.tau_rel.is_finite()) {
            return Err(Error::Config("tau_rel must be positive".into()));
        }
        if self.window == 0 || !(self.window_tolerance >= 0.0) {
            return Err(Error::Config("convergence window must be positive".into()));
        }
        self.solver.validate()
    }
}

/// One training trajectory: its factor graph and ground truth.
#[derive(Clone, Debug)]
pub struct Example {
    pub graph: FactorGraph,
    pub gt: Vec<SE2Pose>,
}

impl Example {
    pub fn new(graph: FactorGraph, gt: Vec<SE2Pose>) -> Result<Self> {
        if graph.num_poses() != gt.len() {
            return Err(Error::Structure(format!(
                "graph has {} poses but ground truth has {}",
                graph.num_poses(),
                gt.len()
            )));
        }
        Ok(Example { graph, gt })
    }
}

pub fn examples_from(trajectories: &[NavTrajectory]) -> Result<Vec<Example>> {
    trajectories
        .iter()
        .map(|t| Example::new(build_graph(t)?, t.gt.clone()))
        .collect()
}

/// Pose-major stacking of `est ⊖ gt`: pose 0 rows 0..3, pose 1 rows 3..6, ...
pub fn vec_error(est: &[SE2Pose], gt: &[SE2Pose]) -> Result<DVector<f64>> {
    if est.len() != gt.len() {
        return Err(Error::Structure(format!(
            "trajectories differ in length: {} vs {}",
            est.len(),
            gt.len()
        )));
    }
    let mut v = DVector::zeros(3 * est.len());
    for (i, (e, g)) in est.iter().zip(gt).enumerate() {
        v.fixed_rows_mut::<3>(3 * i).copy_from(&e.ominus(g));
    }
    Ok(v)
}

/// `½ ‖vec(est ⊖ gt)‖²` for a single trajectory.
pub fn tracking_loss(est: &[SE2Pose], gt: &[SE2Pose]) -> Result<f64> {
    Ok(0.5 * vec_error(est, gt)?.norm_squared())
}

/// Per-parameter forward-difference steps.
pub fn perturbation_steps(theta: &NoiseParams, bounds: &Bounds, tau_rel: f64) -> Result<Vec<f64>> {
    let (lower, _) = bounds.flat_for(theta)?;
    Ok(theta
        .flatten()
        .iter()
        .zip(&lower)
        .map(|(t, l)| tau_rel * t.max(*l))
        .collect())
}

/// Forward-difference Jacobian of the solver output with respect to each
/// parameter, `3T × m`. `base` must be the converged solution at `theta`;
/// every perturbed solve starts from it.
pub fn solution_jacobian(
    graph: &FactorGraph,
    theta: &NoiseParams,
    base: &[SE2Pose],
    steps: &[f64],
    opts: &SolverOptions,
    parallel: bool,
) -> Result<DMatrix<f64>> {
    if steps.len() != theta.len() {
        return Err(Error::Structure(format!(
            "{} steps for {} parameters",
            steps.len(),
            theta.len()
        )));
    }
    let column = |j: usize| -> Result<DVector<f64>> {
        let flat = theta.flatten();
        let mut tau = steps[j];
        for _ in 0..=MAX_TAU_HALVINGS {
            let mut perturbed = flat.clone();
            perturbed[j] += tau;
            let sol = solve(graph, base, &theta.with_flat(&perturbed)?, opts)?;
            if sol.converged {
                return Ok(vec_error(&sol.estimate, base)? / tau);
            }
            tau *= 0.5;
        }
        Err(Error::Convergence(format!(
            "perturbed solve for parameter {j} did not converge"
        )))
    };
    let columns: Vec<DVector<f64>> = if parallel {
        (0..steps.len()).into_par_iter().map(column).collect::<Result<_>>()?
    } else {
        (0..steps.len()).map(column).collect::<Result<_>>()?
    };
    Ok(DMatrix::from_columns(&columns))
}

/// `(1/|D|) Σ_j S_jᵀ vec(est_j ⊖ gt_j)`, summed in the order given.
pub fn loss_gradient<'a, I>(terms: I) -> Result<DVector<f64>>
where
    I: IntoIterator<Item = (&'a DMatrix<f64>, &'a [SE2Pose], &'a [SE2Pose])>,
{
    let mut sum: Option<DVector<f64>> = None;
    let mut count = 0usize;
    for (s, est, gt) in terms {
        let e = vec_error(est, gt)?;
        if s.nrows() != e.len() {
            return Err(Error::Structure(format!(
                "S has {} rows but the error vector has {}",
                s.nrows(),
                e.len()
            )));
        }
        let g = s.tr_mul(&e);
        match &mut sum {
            Some(acc) if acc.len() == g.len() => *acc += g,
            Some(_) => return Err(Error::Structure("solution Jacobians differ in width".into())),
            None => sum = Some(g),
        }
        count += 1;
    }
    let sum = sum.ok_or_else(|| Error::Structure("gradient of an empty dataset".into()))?;
    Ok(sum / count as f64)
}

/// Vertex of the box minimizing `sᵀ grad`: the upper bound where the
/// gradient is negative, the lower bound otherwise (ties included).
pub fn fw_direction(grad: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    grad.iter()
        .zip(lower.iter().zip(upper))
        .map(|(g, (l, u))| if *g < 0.0 { *u } else { *l })
        .collect()
}

/// `theta + alpha (s* - theta)` with `alpha = 2 / (M + itr)`.
///
/// A `theta` outside the box is first projected onto it.
pub fn frank_wolfe_step(
    grad: &[f64],
    theta: &[f64],
    lower: &[f64],
    upper: &[f64],
    itr: usize,
    step_offset: f64,
) -> Vec<f64> {
    let inside = theta
        .iter()
        .zip(lower.iter().zip(upper))
        .all(|(t, (l, u))| l <= t && t <= u);
    if !inside {
        log::warn!("Frank-Wolfe iterate outside the box; projecting before the step");
    }
    let s = fw_direction(grad, lower, upper);
    let alpha = 2.0 / (step_offset + itr as f64);
    theta
        .iter()
        .zip(&s)
        .zip(lower.iter().zip(upper))
        .map(|((t, s), (l, u))| {
            let t = t.clamp(*l, *u);
            // the clamp only absorbs rounding of the convex combination
            (t + alpha * (s - t)).clamp(*l, *u)
        })
        .collect()
}

/// Solution of every example at one parameter value.
#[derive(Clone, Debug)]
pub struct OuterEvaluation {
    pub solutions: Vec<SolveResult>,
    /// Mean tracking loss, `(1/(2|D|)) Σ ‖vec(f(θ) ⊖ x_gt)‖²`.
    pub loss: f64,
    pub rmse: Rmse,
    pub all_converged: bool,
}

/// The outer objective `θ ↦ L(f(θ))` with ground-truth initialization.
pub struct OuterObjective<'a> {
    pub examples: &'a [Example],
    pub solver: &'a SolverOptions,
    pub parallel: bool,
}

impl OuterObjective<'_> {
    pub fn evaluate(&self, theta: &NoiseParams) -> Result<OuterEvaluation> {
        if self.examples.is_empty() {
            return Err(Error::Structure("no training examples".into()));
        }
        let run = |ex: &Example| solve(&ex.graph, &ex.gt, theta, self.solver);
        let solutions: Vec<SolveResult> = if self.parallel {
            self.examples.par_iter().map(run).collect::<Result<_>>()?
        } else {
            self.examples.iter().map(run).collect::<Result<_>>()?
        };
        let mut loss = 0.0;
        let mut errors = Vec::with_capacity(solutions.len());
        for (sol, ex) in solutions.iter().zip(self.examples) {
            loss += tracking_loss(&sol.estimate, &ex.gt)?;
            errors.push(rmse(&sol.estimate, &ex.gt)?);
        }
        Ok(OuterEvaluation {
            loss: loss / self.examples.len() as f64,
            rmse: mean_rmse(&errors),
            all_converged: solutions.iter().all(|s| s.converged),
            solutions,
        })
    }
}

/// Gradient of the mean tracking loss at `theta`, given the solutions there.
pub fn outer_gradient(
    examples: &[Example],
    theta: &NoiseParams,
    eval: &OuterEvaluation,
    config: &TrainConfig,
) -> Result<DVector<f64>> {
    let steps = perturbation_steps(theta, &config.bounds, config.tau_rel)?;
    let jac = |(ex, sol): (&Example, &SolveResult)| {
        solution_jacobian(&ex.graph, theta, &sol.estimate, &steps, &config.solver, config.parallel)
    };
    let pairs = examples.iter().zip(&eval.solutions);
    let jacobians: Vec<DMatrix<f64>> = if config.parallel {
        pairs.collect::<Vec<_>>().into_par_iter().map(jac).collect::<Result<_>>()?
    } else {
        pairs.map(jac).collect::<Result<_>>()?
    };
    loss_gradient(
        jacobians
            .iter()
            .zip(examples.iter().zip(&eval.solutions))
            .map(|(s, (ex, sol))| (s, sol.estimate.as_slice(), ex.gt.as_slice())),
    )
}

/// Runs the bilevel training loop and returns the best iterate's parameters.
pub fn train(examples: &[Example], theta0: &NoiseParams, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Structure("training set is empty".into()));
    }
    let (lower, upper) = config.bounds.flat_for(theta0)?;
    if !config.bounds.contains(theta0)? {
        log::warn!("initial parameters lie outside the bounds; projecting");
    }
    let mut theta = config.bounds.project(theta0)?;
    let objective = OuterObjective {
        examples,
        solver: &config.solver,
        parallel: config.parallel,
    };

    let start = Instant::now();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut best: Option<(usize, NoiseParams)> = None;
    let mut status = TrainStatus::MaxIterations;
    let mut message = None;

    for itr in 0..config.max_outer_iterations {
        let eval = match objective.evaluate(&theta) {
            Ok(e) if e.all_converged => e,
            Ok(_) => {
                status = TrainStatus::Aborted;
                message = Some(format!("inner solve did not converge at iteration {itr}"));
                break;
            }
            Err(e) => {
                status = TrainStatus::Aborted;
                message = Some(e.to_string());
                break;
            }
        };
        records.push(IterationRecord {
            iteration: itr,
            loss: eval.loss,
            transl_rmse: eval.rmse.transl,
            rot_rmse: eval.rmse.rot,
            theta: theta.flatten(),
            spread: eigen_spread(&theta),
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        if best
            .as_ref()
            .is_none_or(|(i, _)| eval.loss < records[*i].loss)
        {
            best = Some((itr, theta.clone()));
        }
        if window_converged(&records, config.window, config.window_tolerance) {
            status = TrainStatus::Converged;
            break;
        }
        if itr + 1 == config.max_outer_iterations {
            break;
        }
        let grad = match outer_gradient(examples, &theta, &eval, config) {
            Ok(g) => g,
            Err(e) => {
                status = TrainStatus::Aborted;
                message = Some(e.to_string());
                break;
            }
        };
        let next = frank_wolfe_step(
            grad.as_slice(),
            &theta.flatten(),
            &lower,
            &upper,
            itr,
            config.step_offset,
        );
        theta = theta.with_flat(&next)?;
    }

    let (best_iteration, theta_star) = match best {
        Some(b) => b,
        None => (0, theta.clone()),
    };
    Ok(TrainReport {
        schema: REPORT_SCHEMA.to_string(),
        method: Method::Ours,
        run_id: String::new(),
        labels: flat_labels(theta0),
        bounds: config.bounds.clone(),
        theta0: theta0.clone(),
        iterations: records,
        best_iteration,
        spread_star: eigen_spread(&theta_star),
        theta_star,
        status,
        message,
    })
}

/// True once the best loss of the last `window` iterations is within
/// `tolerance` of the best loss before them.
fn window_converged(records: &[IterationRecord], window: usize, tolerance: f64) -> bool {
    if records.len() <= window {
        return false;
    }
    let split = records.len() - window;
    let before = records[..split].iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
    let recent = records[split..].iter().map(|r| r.loss).fold(f64::INFINITY, f64::min);
    before - recent < tolerance
}
