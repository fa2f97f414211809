//! Training reports shared by the learner and the zero-order baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Bounds, NoiseParams};

pub const REPORT_SCHEMA: &str = "covlearn.report/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ours,
    NelderMead,
    Powell,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::NelderMead => "nelder-mead",
            Method::Powell => "powell",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ours" => Ok(Method::Ours),
            "nelder-mead" => Ok(Method::NelderMead),
            "powell" => Ok(Method::Powell),
            _ => Err(Error::Config(format!(
                "unknown method {s:?} (expected ours, nelder-mead or powell)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainStatus {
    /// Loss stopped improving over the convergence window or tolerances were met.
    Converged,
    MaxIterations,
    /// Evaluation budget of a zero-order method ran out.
    BudgetExhausted,
    /// Inner solves failed persistently; the report is partial.
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Mean tracking loss over the training trajectories.
    pub loss: f64,
    pub transl_rmse: f64,
    pub rot_rmse: f64,
    /// Flattened parameters, ordered as `labels`.
    pub theta: Vec<f64>,
    pub spread: f64,
    /// Seconds since training started. The only wall-clock field in a report.
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub schema: String,
    pub method: Method,
    /// Free-form run tag, e.g. dataset and seed.
    pub run_id: String,
    /// `class[coordinate]` labels of the flattened parameter vector.
    pub labels: Vec<String>,
    pub bounds: Bounds,
    pub theta0: NoiseParams,
    pub iterations: Vec<IterationRecord>,
    pub best_iteration: usize,
    pub theta_star: NoiseParams,
    pub spread_star: f64,
    pub status: TrainStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl TrainReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: TrainReport = serde_json::from_str(text)?;
        if r.schema != REPORT_SCHEMA {
            return Err(Error::Structure(format!(
                "unsupported report schema {:?}, expected {REPORT_SCHEMA:?}",
                r.schema
            )));
        }
        Ok(r)
    }

    pub fn initial_loss(&self) -> Option<f64> {
        self.iterations.first().map(|r| r.loss)
    }

    pub fn best_loss(&self) -> Option<f64> {
        self.iterations.get(self.best_iteration).map(|r| r.loss)
    }
}

pub fn flat_labels(theta: &NoiseParams) -> Vec<String> {
    theta
        .labels()
        .into_iter()
        .map(|(class, j)| format!("{class}[{j}]"))
        .collect()
}
