//! Raw pose-wise RMSE against ground truth (no trajectory alignment).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{normalize_angle, SE2Pose};
use crate::params::NoiseParams;
use crate::solver::{solve, SolverOptions};
use crate::synth::{build_graph, NavTrajectory};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rmse {
    /// Metres.
    pub transl: f64,
    /// Radians.
    pub rot: f64,
}

pub fn rmse(est: &[SE2Pose], gt: &[SE2Pose]) -> Result<Rmse> {
    if est.len() != gt.len() || gt.is_empty() {
        return Err(Error::Structure(format!(
            "rmse needs equal non-empty trajectories, got {} and {}",
            est.len(),
            gt.len()
        )));
    }
    let n = gt.len() as f64;
    let (mut t2, mut r2) = (0.0, 0.0);
    for (e, g) in est.iter().zip(gt) {
        t2 += (e.translation() - g.translation()).norm_squared();
        r2 += normalize_angle(e.theta() - g.theta()).powi(2);
    }
    Ok(Rmse {
        transl: (t2 / n).sqrt(),
        rot: (r2 / n).sqrt(),
    })
}

pub fn mean_rmse(values: &[Rmse]) -> Rmse {
    let n = values.len().max(1) as f64;
    Rmse {
        transl: values.iter().map(|r| r.transl).sum::<f64>() / n,
        rot: values.iter().map(|r| r.rot).sum::<f64>() / n,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub per_trajectory: Vec<Rmse>,
    pub mean: Rmse,
    /// Trajectories whose solve did not reach stationarity.
    pub unconverged: usize,
}

/// Solves every trajectory from its dead-reckoning guess and averages the RMSE.
pub fn evaluate_dataset(
    theta: &NoiseParams,
    trajectories: &[NavTrajectory],
    opts: &SolverOptions,
) -> Result<Evaluation> {
    if trajectories.is_empty() {
        return Err(Error::Structure("nothing to evaluate".into()));
    }
    let results: Vec<(Rmse, bool)> = trajectories
        .par_iter()
        .map(|traj| {
            let graph = build_graph(traj)?;
            let sol = solve(&graph, &traj.dead_reckoning(), theta, opts)?;
            Ok((rmse(&sol.estimate, &traj.gt)?, sol.converged))
        })
        .collect::<Result<_>>()?;
    let per_trajectory: Vec<Rmse> = results.iter().map(|(r, _)| *r).collect();
    Ok(Evaluation {
        mean: mean_rmse(&per_trajectory),
        unconverged: results.iter().filter(|(_, c)| !c).count(),
        per_trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn rmse_examples() {
        let gt: Vec<SE2Pose> = (0..5).map(|k| SE2Pose::new(k as f64, 1.0, 0.2)).collect();
        assert_eq!(rmse(&gt, &gt).unwrap(), Rmse::default());

        let shifted: Vec<SE2Pose> = gt.iter().map(|p| SE2Pose::new(p.x() + 1.0, p.y(), p.theta())).collect();
        let r = rmse(&shifted, &gt).unwrap();
        assert_abs_diff_eq!(r.transl, 1.0, epsilon = 1e-15);
        assert_eq!(r.rot, 0.0);

        let gt = [SE2Pose::identity(), SE2Pose::identity()];
        let est = [SE2Pose::new(0.0, 0.0, PI / 2.0), SE2Pose::identity()];
        assert_abs_diff_eq!(rmse(&est, &gt).unwrap().rot, PI / (2.0 * 2f64.sqrt()), epsilon = 1e-15);
    }

    #[test]
    fn angle_wraparound_is_short_way() {
        let gt = [SE2Pose::new(0.0, 0.0, PI - 0.01)];
        let est = [SE2Pose::new(0.0, 0.0, -PI + 0.01)];
        assert_abs_diff_eq!(rmse(&est, &gt).unwrap().rot, 0.02, epsilon = 1e-12);
    }

    #[test]
    fn length_mismatch_is_structural() {
        assert!(matches!(
            rmse(&[SE2Pose::identity()], &[]),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn mean_of_identical_values() {
        let r = Rmse { transl: 0.3, rot: 0.1 };
        let m = mean_rmse(&[r, r, r]);
        assert_abs_diff_eq!(m.transl, r.transl, epsilon = 1e-15);
        assert_abs_diff_eq!(m.rot, r.rot, epsilon = 1e-15);
    }
}
