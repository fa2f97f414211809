//! Learning measurement-noise covariances for SE(2) pose-graph estimation.
//!
//! The inner problem is a Levenberg-Marquardt solve of a GPS + odometry
//! factor graph; the outer problem tunes diagonal noise variances per
//! measurement class by Frank-Wolfe over a box on the eigenvalues.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod learner;
pub mod lie;
pub mod linalg;
pub mod metrics;
pub mod params;
pub mod report;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use lie::SE2Pose;
pub use params::{Bounds, NoiseParams};
