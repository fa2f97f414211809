//! Experiment plumbing shared by the CLI and the acceptance suite: training
//! configuration, the evaluation table and long-format curve export.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baselines::{train_zero_order, ZeroOrderOptions};
use crate::error::{Error, Result};
use crate::learner::{examples_from, train, TrainConfig};
use crate::metrics::evaluate_dataset;
use crate::params::{Bounds, NoiseParams};
use crate::report::{Method, TrainReport};
use crate::solver::SolverOptions;
use crate::synth::{fit_into_bounds, Dataset};

pub const CONFIG_SCHEMA: &str = "covlearn.train-config/1";

/// Contents of a `--config` file. Every field is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub max_outer_iterations: usize,
    pub step_offset: f64,
    pub tau_rel: f64,
    pub window: usize,
    pub window_tolerance: f64,
    pub zero_order: ZeroOrderOptions,
    pub solver: SolverOptions,
    /// Starting parameters; defaults to the swapped latent fitted into the box.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta0: Option<BTreeMap<String, [f64; 3]>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::new(Bounds::tight(std::iter::empty()));
        ExperimentConfig {
            schema: CONFIG_SCHEMA.to_string(),
            max_outer_iterations: t.max_outer_iterations,
            step_offset: t.step_offset,
            tau_rel: t.tau_rel,
            window: t.window,
            window_tolerance: t.window_tolerance,
            zero_order: ZeroOrderOptions::default(),
            solver: SolverOptions::default(),
            theta0: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))?;
        if c.schema != CONFIG_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported config schema {:?}, expected {CONFIG_SCHEMA:?}",
                c.schema
            )));
        }
        c.zero_order.validate()?;
        c.solver.validate()?;
        Ok(c)
    }

    pub fn train_config(&self, bounds: Bounds) -> Result<TrainConfig> {
        let c = TrainConfig {
            max_outer_iterations: self.max_outer_iterations,
            step_offset: self.step_offset,
            tau_rel: self.tau_rel,
            window: self.window,
            window_tolerance: self.window_tolerance,
            solver: self.solver.clone(),
            ..TrainConfig::new(bounds)
        };
        c.validate()?;
        Ok(c)
    }
}

/// `--bounds` argument.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundsChoice {
    Tight,
    Loose,
    Custom(Bounds),
}

impl BoundsChoice {
    pub fn resolve(&self, theta: &NoiseParams) -> Result<Bounds> {
        let bounds = match self {
            BoundsChoice::Tight => Bounds::tight(theta.classes()),
            BoundsChoice::Loose => Bounds::loose(theta.classes()),
            BoundsChoice::Custom(b) => b.clone(),
        };
        // surfaces missing classes early
        bounds.flat_for(theta)?;
        Ok(bounds)
    }
}

/// Starting parameters for a run on `dataset`.
pub fn initial_theta(dataset: &Dataset, choice: &BoundsChoice, config: &ExperimentConfig) -> Result<(NoiseParams, Bounds)> {
    let template = &dataset.spec.latent;
    match &config.theta0 {
        Some(t) => {
            let theta = NoiseParams::new(t.clone())?;
            if !theta.same_classes(template) {
                return Err(Error::Config(format!(
                    "theta0 classes {:?} do not match the dataset's {:?}",
                    theta.classes().collect::<Vec<_>>(),
                    template.classes().collect::<Vec<_>>()
                )));
            }
            let bounds = choice.resolve(&theta)?;
            Ok((theta, bounds))
        }
        None => {
            let bounds = choice.resolve(template)?;
            let theta = fit_into_bounds(&dataset.spec.swapped_latent(), &bounds)?;
            Ok((theta, bounds))
        }
    }
}

pub fn run_id(dataset: &Dataset) -> String {
    format!("{}-seed{}", dataset.spec.id, dataset.spec.seed)
}

/// Trains `method` on the dataset's training split.
pub fn run_training(
    dataset: &Dataset,
    method: Method,
    choice: &BoundsChoice,
    config: &ExperimentConfig,
) -> Result<TrainReport> {
    let (theta0, bounds) = initial_theta(dataset, choice, config)?;
    let examples = examples_from(&dataset.train)?;
    let mut report = match method {
        Method::Ours => train(&examples, &theta0, &config.train_config(bounds)?)?,
        Method::NelderMead | Method::Powell => train_zero_order(
            method,
            &examples,
            &theta0,
            &bounds,
            &config.zero_order,
            &config.solver,
            true,
        )?,
    };
    report.run_id = run_id(dataset);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRow {
    pub label: String,
    pub transl_rmse: f64,
    pub rot_rmse: f64,
    pub unconverged: usize,
}

/// Test-split RMSE per labelled parameter set.
pub fn eval_table(
    dataset: &Dataset,
    columns: &[(String, NoiseParams)],
    solver: &SolverOptions,
) -> Result<Vec<EvalRow>> {
    columns
        .iter()
        .map(|(label, theta)| {
            if !theta.same_classes(&dataset.spec.latent) {
                return Err(Error::Config(format!(
                    "parameters for {label:?} have classes {:?}, dataset expects {:?}",
                    theta.classes().collect::<Vec<_>>(),
                    dataset.spec.latent.classes().collect::<Vec<_>>()
                )));
            }
            let e = evaluate_dataset(theta, &dataset.test, solver)?;
            Ok(EvalRow {
                label: label.clone(),
                transl_rmse: e.mean.transl,
                rot_rmse: e.mean.rot,
                unconverged: e.unconverged,
            })
        })
        .collect()
}

/// Columns are parameter sets, rows are the two error kinds.
pub fn format_table(dataset: &str, rows: &[EvalRow]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<12}", dataset);
    for r in rows {
        let _ = write!(out, " {:>12}", r.label);
    }
    out.push('\n');
    for (name, pick) in [("transl [m]", 0), ("rot [rad]", 1)] {
        let _ = write!(out, "{name:<12}");
        for r in rows {
            let v = if pick == 0 { r.transl_rmse } else { r.rot_rmse };
            let _ = write!(out, " {v:>12.4}");
        }
        out.push('\n');
    }
    let failed: usize = rows.iter().map(|r| r.unconverged).sum();
    if failed > 0 {
        let _ = writeln!(out, "# {failed} test solves did not reach stationarity");
    }
    out
}

pub const CURVE_HEADER: [&str; 7] = [
    "method",
    "run_id",
    "wall_seconds",
    "iteration",
    "loss",
    "transl_rmse",
    "rot_rmse",
];

/// Long-format curve rows for every iteration of every report.
pub fn curves_csv(reports: &[TrainReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Config("no reports to merge".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_HEADER)?;
    for r in reports {
        for it in &r.iterations {
            w.write_record([
                r.method.to_string(),
                r.run_id.clone(),
                format!("{:.6}", it.wall_seconds),
                it.iteration.to_string(),
                format!("{:e}", it.loss),
                format!("{:e}", it.transl_rmse),
                format!("{:e}", it.rot_rmse),
            ])?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Structure(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{make_dataset, DatasetId, DatasetSpec};

    fn small(id: DatasetId) -> Dataset {
        let mut spec = DatasetSpec::preset(id, 3);
        spec.length = 15;
        spec.train = 2;
        spec.test = 2;
        make_dataset(&spec).unwrap()
    }

    #[test]
    fn default_config_round_trips() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
        assert!(ExperimentConfig::from_json("{\"schema\":\"other\"}").is_err());
        assert!(ExperimentConfig::from_json("{\"bogus\":1}").is_err());
        let partial = format!("{{\"schema\":\"{CONFIG_SCHEMA}\",\"max_outer_iterations\":3}}");
        assert_eq!(ExperimentConfig::from_json(&partial).unwrap().max_outer_iterations, 3);
    }

    #[test]
    fn default_start_is_inside_the_box() {
        let d = small(DatasetId::D4);
        for choice in [BoundsChoice::Tight, BoundsChoice::Loose] {
            let (theta, bounds) = initial_theta(&d, &choice, &ExperimentConfig::default()).unwrap();
            assert!(bounds.contains(&theta).unwrap());
            assert!(theta.same_classes(&d.spec.latent));
        }
    }

    #[test]
    fn wrong_classes_are_config_errors() {
        let d = small(DatasetId::D1);
        let theta = NoiseParams::from_pairs([("lidar", [1.0; 3])]).unwrap();
        let err = eval_table(&d, &[("x".into(), theta)], &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn table_and_curves_have_expected_shape() {
        let d = small(DatasetId::D1);
        let mut config = ExperimentConfig::default();
        config.max_outer_iterations = 2;
        let report = run_training(&d, Method::Ours, &BoundsChoice::Tight, &config).unwrap();
        assert_eq!(report.run_id, "D1-seed3");
        let rows = eval_table(
            &d,
            &[("Initial".into(), report.theta0.clone()), ("ours".into(), report.theta_star.clone())],
            &config.solver,
        )
        .unwrap();
        let table = format_table("D1", &rows);
        assert!(table.contains("Initial") && table.contains("transl [m]"));

        let csv = curves_csv(&[report.clone(), report]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CURVE_HEADER.join(","));
        assert_eq!(lines.len(), 1 + 4);
        assert!(lines[1].starts_with("ours,D1-seed3,"));
        assert!(curves_csv(&[]).is_err());
    }
}
