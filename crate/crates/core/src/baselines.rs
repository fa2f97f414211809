//! Zero-order baselines: bounded Nelder-Mead and Powell's direction set.
//!
//! Both minimize over a box, never evaluate outside it, and return the best
//! point seen. Candidates are clipped into the box (Nelder-Mead) or line
//! searches are restricted to the feasible segment (Powell).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Example, OuterObjective};
use crate::params::{eigen_spread, Bounds, NoiseParams};
use crate::report::{flat_labels, IterationRecord, Method, TrainReport, TrainStatus, REPORT_SCHEMA};
use crate::solver::SolverOptions;

const GOLDEN: f64 = 1.618_033_988_749_895;
const CGOLD: f64 = 0.381_966_011_250_105;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZeroOrderOptions {
    pub max_evaluations: usize,
    /// Initial simplex edge (Nelder-Mead) and first bracketing step (Powell),
    /// relative to each coordinate of the starting point.
    pub initial_scale: f64,
    pub function_tolerance: f64,
    pub parameter_tolerance: f64,
}

impl Default for ZeroOrderOptions {
    fn default() -> Self {
        ZeroOrderOptions {
            max_evaluations: 500,
            initial_scale: 0.1,
            function_tolerance: 1e-8,
            parameter_tolerance: 1e-8,
        }
    }
}

impl ZeroOrderOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.initial_scale, self.function_tolerance, self.parameter_tolerance];
        if self.max_evaluations == 0 || positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(
                "zero-order budget, scale and tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZeroOrderResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    /// False when the evaluation budget ran out first.
    pub converged: bool,
}

struct Exhausted;

/// Counts evaluations and tracks the best point.
struct Budget<'a, F> {
    f: &'a mut F,
    left: usize,
    used: usize,
    best: (Vec<f64>, f64),
}

impl<F: FnMut(&[f64]) -> f64> Budget<'_, F> {
    fn eval(&mut self, x: &[f64]) -> std::result::Result<f64, Exhausted> {
        if self.left == 0 {
            return Err(Exhausted);
        }
        self.left -= 1;
        self.used += 1;
        let v = (self.f)(x);
        // failed evaluations are reported as non-finite; treat them as worst
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < self.best.1 {
            self.best = (x.to_vec(), v);
        }
        Ok(v)
    }
}

fn check_start(x0: &[f64], lower: &[f64], upper: &[f64]) -> Result<()> {
    if x0.is_empty() || x0.len() != lower.len() || x0.len() != upper.len() {
        return Err(Error::Structure("start point and bounds differ in length".into()));
    }
    let inside = x0
        .iter()
        .zip(lower.iter().zip(upper))
        .all(|(x, (l, u))| l <= x && x <= u && l < u);
    if !inside {
        return Err(Error::Domain("start point must lie inside the bounds".into()));
    }
    Ok(())
}

fn clip(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, l), u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*l, *u);
    }
}

fn run<F, G>(f: &mut F, x0: &[f64], opts: &ZeroOrderOptions, body: G) -> Result<ZeroOrderResult>
where
    F: FnMut(&[f64]) -> f64,
    G: FnOnce(&mut Budget<'_, F>) -> std::result::Result<(), Exhausted>,
{
    opts.validate()?;
    let mut budget = Budget {
        f,
        left: opts.max_evaluations,
        used: 0,
        best: (x0.to_vec(), f64::INFINITY),
    };
    let converged = body(&mut budget).is_ok();
    let (x, fx) = budget.best;
    Ok(ZeroOrderResult {
        x,
        f: fx,
        evaluations: budget.used,
        converged,
    })
}

/// Nelder-Mead with reflection 1, expansion 2, contraction 0.5, shrink 0.5.
///
/// Clipping can flatten the simplex onto a face of the box, so a converged
/// simplex is rebuilt around its best vertex until a restart stops improving.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &ZeroOrderOptions,
) -> Result<ZeroOrderResult> {
    check_start(x0, lower, upper)?;
    run(&mut f, x0, opts, |b| {
        let mut start = (x0.to_vec(), b.eval(x0)?);
        loop {
            let end = simplex_pass(b, &start, lower, upper, opts)?;
            if start.1 - end.1 <= opts.function_tolerance {
                return Ok(());
            }
            start = end;
        }
    })
}

fn simplex_pass<F: FnMut(&[f64]) -> f64>(
    b: &mut Budget<'_, F>,
    start: &(Vec<f64>, f64),
    lower: &[f64],
    upper: &[f64],
    opts: &ZeroOrderOptions,
) -> std::result::Result<(Vec<f64>, f64), Exhausted> {
    let x0 = &start.0;
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push(start.clone());
    for i in 0..n {
        let mut v = x0.to_vec();
        let step = if x0[i] != 0.0 { opts.initial_scale * x0[i] } else { 2.5e-4 };
        v[i] += step;
        if v[i] > upper[i] {
            v[i] = x0[i] - step;
        }
        clip(&mut v, lower, upper);
        let fv = b.eval(&v)?;
        simplex.push((v, fv));
    }

    loop {
        // stable: ties keep the earlier vertex first
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, fbest) = (&simplex[0].0, simplex[0].1);
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let f_spread = simplex[1..].iter().map(|(_, fv)| (fv - fbest).abs()).fold(0.0, f64::max);
        if x_spread <= opts.parameter_tolerance && f_spread <= opts.function_tolerance {
            return Ok(simplex.swap_remove(0));
        }

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(v, _)| v[k]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let toward = |t: f64| {
            let mut v: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            clip(&mut v, lower, upper);
            v
        };

        let xr = toward(1.0);
        let fr = b.eval(&xr)?;
        let replacement = if fr < simplex[0].1 {
            let xe = toward(2.0);
            let fe = b.eval(&xe)?;
            Some(if fe < fr { (xe, fe) } else { (xr, fr) })
        } else if fr < simplex[n - 1].1 {
            Some((xr, fr))
        } else if fr < worst.1 {
            let xc = toward(0.5);
            let fc = b.eval(&xc)?;
            (fc <= fr).then_some((xc, fc))
        } else {
            let xcc = toward(-0.5);
            let fcc = b.eval(&xcc)?;
            (fcc < worst.1).then_some((xcc, fcc))
        };

        match replacement {
            Some(v) => simplex[n] = v,
            None => {
                let anchor = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let mut v: Vec<f64> = anchor
                        .iter()
                        .zip(&vertex.0)
                        .map(|(a, x)| a + 0.5 * (x - a))
                        .collect();
                    clip(&mut v, lower, upper);
                    let fv = b.eval(&v)?;
                    *vertex = (v, fv);
                }
            }
        }
    }
}

/// Feasible range of `t` such that `x + t d` stays in the box.
fn feasible_segment(x: &[f64], d: &[f64], lower: &[f64], upper: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..x.len() {
        if d[k] > 0.0 {
            hi = hi.min((upper[k] - x[k]) / d[k]);
            lo = lo.max((lower[k] - x[k]) / d[k]);
        } else if d[k] < 0.0 {
            hi = hi.min((lower[k] - x[k]) / d[k]);
            lo = lo.max((upper[k] - x[k]) / d[k]);
        }
    }
    (lo.min(0.0), hi.max(0.0))
}

fn along(x: &[f64], d: &[f64], t: f64, lower: &[f64], upper: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
    // guards against rounding at the segment ends
    clip(&mut v, lower, upper);
    v
}

/// Minimizes `f(x + t d)` over the feasible segment. Brackets from `t = 0`
/// with an initial step `h`, then refines with golden-section search
/// accelerated by parabolic interpolation. Returns `(t, f)`, with `t = 0`
/// unless a strict improvement over `f0` was found.
#[allow(clippy::too_many_arguments)]
fn line_minimize<F: FnMut(&[f64]) -> f64>(
    b: &mut Budget<'_, F>,
    x: &[f64],
    d: &[f64],
    f0: f64,
    h: f64,
    tol: f64,
    lower: &[f64],
    upper: &[f64],
) -> std::result::Result<(f64, f64), Exhausted> {
    let (tmin, tmax) = feasible_segment(x, d, lower, upper);
    if tmax - tmin <= 0.0 {
        return Ok((0.0, f0));
    }
    let phi = |t: f64, b: &mut Budget<'_, F>| b.eval(&along(x, d, t, lower, upper));

    // bracket (a, m, c) with f(m) <= f(a), f(c), or a minimizing endpoint
    let mut bracket = None;
    for dir in [1.0, -1.0] {
        let limit = if dir > 0.0 { tmax } else { tmin };
        if limit == 0.0 {
            continue;
        }
        let mut prev = (0.0, f0);
        let mut t = dir * h;
        if t.abs() > limit.abs() {
            t = limit;
        }
        let mut cur = (t, phi(t, b)?);
        if cur.1 >= f0 {
            if dir > 0.0 {
                // try the other side; remember this point as an upper bracket end
                bracket = Some((cur, prev, None));
            } else if let Some((right, _, _)) = bracket {
                bracket = Some((cur, prev, Some(right)));
            }
            continue;
        }
        loop {
            if cur.0 == limit {
                return Ok(cur);
            }
            let mut next = cur.0 + GOLDEN * (cur.0 - prev.0);
            if next.abs() > limit.abs() {
                next = limit;
            }
            let fnext = phi(next, b)?;
            if fnext >= cur.1 {
                bracket = Some((prev, cur, Some((next, fnext))));
                break;
            }
            prev = cur;
            cur = (next, fnext);
        }
        break;
    }

    let (a, m, c) = match bracket {
        Some((a, m, Some(c))) => (a, m, c),
        // one side only: step into the feasible direction failed, the other
        // side is infeasible; refine between 0 and the trial point
        Some((a, m, None)) => (m, (0.5 * a.0, phi(0.5 * a.0, b)?), a),
        None => return Ok((0.0, f0)),
    };
    let (mut lo, mut hi) = if a.0 < c.0 { (a.0, c.0) } else { (c.0, a.0) };

    // Brent's localmin on [lo, hi] seeded with the bracket midpoint
    let (mut xb, mut fb) = m;
    let (mut w, mut fw) = (xb, fb);
    let (mut v, mut fv) = (xb, fb);
    let (mut e, mut step) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let tol1 = tol * xb.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (xb - mid).abs() <= tol2 - 0.5 * (hi - lo) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (xb - w) * (fb - fv);
            let mut q = (xb - v) * (fb - fw);
            let mut p = (xb - v) * q - (xb - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (lo - xb) && p < q * (hi - xb) {
                e = step;
                step = p / q;
                let u = xb + step;
                if u - lo < tol2 || hi - u < tol2 {
                    step = if mid >= xb { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if xb >= mid { lo - xb } else { hi - xb };
            step = CGOLD * e;
        }
        let u = if step.abs() >= tol1 {
            xb + step
        } else {
            xb + tol1.copysign(step)
        };
        let fu = phi(u, b)?;
        if fu <= fb {
            if u >= xb {
                lo = xb;
            } else {
                hi = xb;
            }
            (v, fv, w, fw, xb, fb) = (w, fw, xb, fb, u, fu);
        } else {
            if u < xb {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == xb {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == xb || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    Ok(if fb < f0 { (xb, fb) } else { (0.0, f0) })
}

/// Powell's conjugate direction method with bounded line searches.
pub fn powell<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &ZeroOrderOptions,
) -> Result<ZeroOrderResult> {
    check_start(x0, lower, upper)?;
    let n = x0.len();
    let line_tol = opts.parameter_tolerance.max(1e-8).sqrt().min(1e-4);
    run(&mut f, x0, opts, |b| {
        let mut dirs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut d = vec![0.0; n];
                d[i] = 1.0;
                d
            })
            .collect();
        let mut x = x0.to_vec();
        let mut fx = b.eval(&x)?;
        let step_for = |x: &[f64], d: &[f64]| {
            let scale = x.iter().zip(d).map(|(a, b)| (a * b).abs()).fold(0.0, f64::max);
            let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            (opts.initial_scale * scale.max(1e-3)) / norm.max(f64::MIN_POSITIVE)
        };

        loop {
            let (x_start, f_start) = (x.clone(), fx);
            let (mut biggest, mut big_index) = (0.0, 0);
            for (i, d) in dirs.iter().enumerate() {
                let before = fx;
                let (t, ft) = line_minimize(b, &x, d, fx, step_for(&x, d), line_tol, lower, upper)?;
                if t != 0.0 {
                    x = along(&x, d, t, lower, upper);
                    fx = ft;
                }
                if before - fx > biggest {
                    biggest = before - fx;
                    big_index = i;
                }
            }

            let moved = x.iter().zip(&x_start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let decrease = f_start - fx;
            if 2.0 * decrease <= opts.function_tolerance * (f_start.abs() + fx.abs()) + 1e-20
                || moved <= opts.parameter_tolerance
            {
                return Ok(());
            }

            let d: Vec<f64> = x.iter().zip(&x_start).map(|(a, b)| a - b).collect();
            let x_ext: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
            let feasible = x_ext
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| l <= v && v <= u);
            if !feasible {
                continue;
            }
            let f_ext = b.eval(&x_ext)?;
            if f_ext < fx {
                // Powell's test for replacing the direction of largest decrease
                let t = 2.0 * (f_start - 2.0 * fx + f_ext) * (f_start - fx - biggest).powi(2)
                    - biggest * (f_start - f_ext).powi(2);
                if t < 0.0 {
                    let (t, ft) = line_minimize(b, &x, &d, fx, step_for(&x, &d), line_tol, lower, upper)?;
                    if t != 0.0 {
                        x = along(&x, &d, t, lower, upper);
                        fx = ft;
                    }
                    dirs.remove(big_index);
                    dirs.push(d);
                }
            }
        }
    })
}

/// Runs a zero-order method on the shared outer objective and records every
/// evaluation as one report iteration.
pub fn train_zero_order(
    method: Method,
    examples: &[Example],
    theta0: &NoiseParams,
    bounds: &Bounds,
    opts: &ZeroOrderOptions,
    solver: &SolverOptions,
    parallel: bool,
) -> Result<TrainReport> {
    let (lower, upper) = bounds.flat_for(theta0)?;
    let start_theta = bounds.project(theta0)?;
    let objective = OuterObjective {
        examples,
        solver,
        parallel,
    };
    let start = Instant::now();
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut first_error: Option<Error> = None;

    let f = |x: &[f64]| -> f64 {
        let eval = theta0.with_flat(x).and_then(|t| objective.evaluate(&t));
        match eval {
            Ok(e) => {
                let loss = if e.all_converged { e.loss } else { f64::INFINITY };
                records.push(IterationRecord {
                    iteration: records.len(),
                    loss,
                    transl_rmse: e.rmse.transl,
                    rot_rmse: e.rmse.rot,
                    theta: x.to_vec(),
                    spread: x.iter().copied().fold(0.0, f64::max)
                        / x.iter().copied().fold(f64::INFINITY, f64::min),
                    wall_seconds: start.elapsed().as_secs_f64(),
                });
                loss
            }
            Err(e) => {
                first_error.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let x0 = start_theta.flatten();
    let result = match method {
        Method::NelderMead => nelder_mead(f, &x0, &lower, &upper, opts)?,
        Method::Powell => powell(f, &x0, &lower, &upper, opts)?,
        Method::Ours => {
            return Err(Error::Config("the gradient-based learner is not a zero-order method".into()))
        }
    };
    if let Some(e) = first_error {
        return Err(e);
    }

    let theta_star = theta0.with_flat(&result.x)?;
    let best_iteration = records
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.loss.total_cmp(&b.1.loss))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(TrainReport {
        schema: REPORT_SCHEMA.to_string(),
        method,
        run_id: String::new(),
        labels: flat_labels(theta0),
        bounds: bounds.clone(),
        theta0: theta0.clone(),
        iterations: records,
        best_iteration,
        spread_star: eigen_spread(&theta_star),
        theta_star,
        status: if result.converged {
            TrainStatus::Converged
        } else {
            TrainStatus::BudgetExhausted
        },
        message: None,
    })
}
