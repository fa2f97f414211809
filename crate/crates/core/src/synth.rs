//! Synthetic planar navigation datasets D1–D4.
//!
//! Ground truth is a smooth random walk; GPS and odometry measurements are
//! the ground truth perturbed on the left by tangent-space Gaussian noise
//! drawn from the latent covariances. D3 and D4 switch their noise models on
//! a binary indoor/outdoor flag `p` that persists over random segments.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Factor, FactorGraph};
use crate::lie::{SE2Pose, Tangent3};
use crate::params::{Bounds, NoiseParams};

pub const DATASET_SCHEMA: &str = "covlearn.dataset/1";
pub const SPEC_SCHEMA: &str = "covlearn.dataset-spec/1";

const TRAIN_STREAM: u64 = 1 << 32;
const TEST_STREAM: u64 = 2 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DatasetId {
    D1,
    D2,
    D3,
    D4,
}

impl DatasetId {
    pub const ALL: [DatasetId; 4] = [DatasetId::D1, DatasetId::D2, DatasetId::D3, DatasetId::D4];

    /// D3 and D4 route factors through `p`-dependent noise classes.
    pub fn is_switched(self) -> bool {
        matches!(self, DatasetId::D3 | DatasetId::D4)
    }

    /// Default latent covariances used to simulate the measurements.
    pub fn default_latent(self) -> NoiseParams {
        let pairs: Vec<(&str, [f64; 3])> = match self {
            DatasetId::D1 => vec![("gps", [0.5, 0.5, 0.1]), ("odom", [0.05, 0.05, 0.01])],
            DatasetId::D2 => vec![("gps", [2.0, 2.0, 0.4]), ("odom", [0.1, 0.1, 0.02])],
            DatasetId::D3 => vec![
                ("gps@p=0", [0.1, 0.1, 0.02]),
                ("gps@p=1", [1.0, 1.0, 0.2]),
                ("odom@p=0", [0.05, 0.05, 0.01]),
                ("odom@p=1", [0.05, 0.05, 0.01]),
            ],
            DatasetId::D4 => vec![
                ("gps@p=0", [0.25, 0.25, 0.05]),
                ("gps@p=1", [2.5, 2.5, 0.5]),
                ("odom@p=0", [0.05, 0.05, 0.025]),
                ("odom@p=1", [0.1, 0.1, 0.05]),
            ],
        };
        NoiseParams::from_pairs(pairs).expect("default latents are positive")
    }

    pub fn classes(self) -> Vec<String> {
        if self.is_switched() {
            ["gps@p=0", "gps@p=1", "odom@p=0", "odom@p=1"]
                .map(String::from)
                .to_vec()
        } else {
            vec!["gps".into(), "odom".into()]
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "D1" => Ok(DatasetId::D1),
            "D2" => Ok(DatasetId::D2),
            "D3" => Ok(DatasetId::D3),
            "D4" => Ok(DatasetId::D4),
            _ => Err(Error::Config(format!("unknown dataset id {s:?}"))),
        }
    }
}

/// Noise class of a factor family (`"gps"` or `"odom"`) under flag `p`.
pub fn class_name(family: &str, switched: bool, p: u8) -> String {
    if switched {
        format!("{family}@p={p}")
    } else {
        family.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    /// Forward travel per step is uniform on this interval, metres.
    pub forward: [f64; 2],
    /// Standard deviation of the heading increment per step, radians.
    pub heading_std: f64,
}

impl Default for MotionModel {
    fn default() -> Self {
        MotionModel {
            forward: [0.5, 1.5],
            heading_std: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Switching {
    /// Segment lengths in steps are uniform on `[min_segment, max_segment]`.
    pub min_segment: usize,
    pub max_segment: usize,
}

impl Default for Switching {
    fn default() -> Self {
        Switching {
            min_segment: 10,
            max_segment: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub id: DatasetId,
    pub length: usize,
    pub train: usize,
    pub test: usize,
    pub seed: u64,
    pub latent: NoiseParams,
    pub motion: MotionModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switching: Option<Switching>,
}

/// On-disk spec: everything but the id may be omitted and falls back to the preset.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    #[serde(default)]
    schema: Option<String>,
    id: DatasetId,
    length: Option<usize>,
    train: Option<usize>,
    test: Option<usize>,
    seed: Option<u64>,
    latent: Option<BTreeMap<String, [f64; 3]>>,
    motion: Option<MotionModel>,
    switching: Option<Switching>,
}

impl DatasetSpec {
    /// 100-step trajectories, 5 for training and 20 for testing.
    pub fn preset(id: DatasetId, seed: u64) -> Self {
        DatasetSpec {
            id,
            length: 100,
            train: 5,
            test: 20,
            seed,
            latent: id.default_latent(),
            motion: MotionModel::default(),
            switching: id.is_switched().then(Switching::default),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SpecDoc = serde_json::from_str(text)?;
        if let Some(schema) = &doc.schema {
            if schema != SPEC_SCHEMA {
                return Err(Error::Config(format!(
                    "unsupported spec schema {schema:?}, expected {SPEC_SCHEMA:?}"
                )));
            }
        }
        let mut spec = DatasetSpec::preset(doc.id, doc.seed.unwrap_or(0));
        if let Some(v) = doc.length {
            spec.length = v;
        }
        if let Some(v) = doc.train {
            spec.train = v;
        }
        if let Some(v) = doc.test {
            spec.test = v;
        }
        if let Some(latent) = doc.latent {
            spec.latent = NoiseParams::new(latent)?;
        }
        if let Some(m) = doc.motion {
            spec.motion = m;
        }
        if doc.switching.is_some() {
            spec.switching = doc.switching;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.train == 0 || self.test == 0 {
            return Err(Error::Config(
                "trajectory length, train count and test count must be at least 1".into(),
            ));
        }
        let expected = self.id.classes();
        if !self.latent.classes().eq(expected.iter().map(String::as_str)) {
            return Err(Error::Config(format!(
                "dataset {} needs latent classes {expected:?}",
                self.id
            )));
        }
        let [lo, hi] = self.motion.forward;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::Config(format!("invalid forward range [{lo}, {hi}]")));
        }
        if !(self.motion.heading_std.is_finite() && self.motion.heading_std >= 0.0) {
            return Err(Error::Config("heading_std must be non-negative".into()));
        }
        match (&self.switching, self.id.is_switched()) {
            (Some(s), true) if s.min_segment >= 1 && s.min_segment <= s.max_segment => Ok(()),
            (None, false) => Ok(()),
            _ => Err(Error::Config(format!(
                "dataset {} has an inconsistent switching schedule",
                self.id
            ))),
        }
    }

    /// Starting point far from the latent: GPS and odometry magnitudes swapped.
    pub fn swapped_latent(&self) -> NoiseParams {
        let swapped: BTreeMap<String, [f64; 3]> = self
            .latent
            .iter()
            .map(|(class, _)| {
                let partner = if let Some(rest) = class.strip_prefix("gps") {
                    format!("odom{rest}")
                } else {
                    format!("gps{}", class.trim_start_matches("odom"))
                };
                let v = self.latent.get(&partner).unwrap_or_else(|| self.latent.get(class).unwrap());
                (class.to_string(), *v)
            })
            .collect();
        NoiseParams::new(swapped).expect("latent entries are positive")
    }
}

/// Rescales `theta` so its extreme entries sit symmetrically (in log scale)
/// inside `bounds`, then clamps. Weights only matter relatively, so this
/// preserves the estimates whenever no clamping is needed.
pub fn fit_into_bounds(theta: &NoiseParams, bounds: &Bounds) -> Result<NoiseParams> {
    let (lo, hi) = bounds.flat_for(theta)?;
    let flat = theta.flatten();
    let box_center = (lo.iter().copied().fold(f64::INFINITY, f64::min).ln()
        + hi.iter().copied().fold(0.0, f64::max).ln())
        / 2.0;
    let center = (flat.iter().copied().fold(f64::INFINITY, f64::min).ln()
        + flat.iter().copied().fold(0.0, f64::max).ln())
        / 2.0;
    bounds.project(&theta.scaled((box_center - center).exp())?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NavTrajectory {
    pub gt: Vec<SE2Pose>,
    /// `odometry[t - 1]` measures `gt[t-1]⁻¹ ∘ gt[t]`.
    pub odometry: Vec<SE2Pose>,
    pub gps: Vec<SE2Pose>,
    pub p_labels: Vec<u8>,
    pub switched: bool,
}

impl NavTrajectory {
    pub fn len(&self) -> usize {
        self.gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let t = self.gt.len();
        if t == 0
            || self.gps.len() != t
            || self.p_labels.len() != t
            || self.odometry.len() + 1 != t
        {
            return Err(Error::Structure(format!(
                "trajectory with {t} poses has {} gps, {} odometry and {} p entries",
                self.gps.len(),
                self.odometry.len(),
                self.p_labels.len()
            )));
        }
        if self.p_labels.iter().any(|&p| p > 1 || (!self.switched && p != 0)) {
            return Err(Error::Structure("p flags must be 0 or 1 (0 for unswitched data)".into()));
        }
        Ok(())
    }

    /// Initial guess chained from the first GPS fix through the odometry.
    pub fn dead_reckoning(&self) -> Vec<SE2Pose> {
        crate::solver::dead_reckoning(self.gps[0], &self.odometry)
    }
}

/// Ground-truth random walk starting at the identity.
pub fn generate_gt<R: Rng + ?Sized>(length: usize, motion: &MotionModel, rng: &mut R) -> Result<Vec<SE2Pose>> {
    let forward = Uniform::new_inclusive(motion.forward[0], motion.forward[1])
        .map_err(|e| Error::Config(format!("forward range: {e}")))?;
    let heading = Normal::new(0.0, motion.heading_std)
        .map_err(|e| Error::Config(format!("heading noise: {e}")))?;
    let mut out = Vec::with_capacity(length);
    let mut pose = SE2Pose::identity();
    for _ in 0..length {
        out.push(pose);
        let step = SE2Pose::new(forward.sample(rng), 0.0, heading.sample(rng));
        pose = pose.compose(&step);
    }
    Ok(out)
}

/// Persistent indoor/outdoor segments.
pub fn generate_p_labels<R: Rng + ?Sized>(length: usize, switching: &Switching, rng: &mut R) -> Vec<u8> {
    let mut labels = Vec::with_capacity(length);
    let mut p: u8 = rng.random_range(0..=1);
    while labels.len() < length {
        let segment = rng.random_range(switching.min_segment..=switching.max_segment);
        labels.extend(std::iter::repeat_n(p, segment.min(length - labels.len())));
        p = 1 - p;
    }
    labels
}

fn tangent_noise<R: Rng + ?Sized>(variances: &[f64; 3], rng: &mut R) -> Tangent3 {
    let mut n = Tangent3::zeros();
    for k in 0..3 {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        n[k] = variances[k].sqrt() * z;
    }
    n
}

/// Noisy `(odometry, gps)` measurements of `gt` under the latent covariances.
pub fn simulate_measurements<R: Rng + ?Sized>(
    gt: &[SE2Pose],
    latent: &NoiseParams,
    p_labels: &[u8],
    switched: bool,
    rng: &mut R,
) -> Result<(Vec<SE2Pose>, Vec<SE2Pose>)> {
    if p_labels.len() != gt.len() {
        return Err(Error::Structure("one p flag per pose is required".into()));
    }
    let lookup = |family: &str, p: u8| -> Result<&[f64; 3]> {
        let class = class_name(family, switched, p);
        latent
            .get(&class)
            .ok_or_else(|| Error::Domain(format!("no latent covariance for class {class:?}")))
    };
    let mut gps = Vec::with_capacity(gt.len());
    let mut odom = Vec::with_capacity(gt.len().saturating_sub(1));
    for (t, x) in gt.iter().enumerate() {
        let p = p_labels[t];
        gps.push(x.oplus(&tangent_noise(lookup("gps", p)?, rng)));
        if t > 0 {
            let rel = gt[t - 1].inverse().compose(x);
            odom.push(rel.oplus(&tangent_noise(lookup("odom", p)?, rng)));
        }
    }
    Ok((odom, gps))
}

fn generate_trajectory(spec: &DatasetSpec, stream: u64) -> Result<NavTrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let gt = generate_gt(spec.length, &spec.motion, &mut rng)?;
    let switched = spec.id.is_switched();
    let p_labels = match &spec.switching {
        Some(s) if switched => generate_p_labels(spec.length, s, &mut rng),
        _ => vec![0; spec.length],
    };
    let (odometry, gps) = simulate_measurements(&gt, &spec.latent, &p_labels, switched, &mut rng)?;
    Ok(NavTrajectory {
        gt,
        odometry,
        gps,
        p_labels,
        switched,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub train: Vec<NavTrajectory>,
    pub test: Vec<NavTrajectory>,
}

/// Builds the train and test splits, each trajectory from its own RNG stream.
pub fn make_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let train = (0..spec.train as u64)
        .map(|i| generate_trajectory(spec, TRAIN_STREAM + i))
        .collect::<Result<_>>()?;
    let test = (0..spec.test as u64)
        .map(|i| generate_trajectory(spec, TEST_STREAM + i))
        .collect::<Result<_>>()?;
    Ok(Dataset {
        spec: spec.clone(),
        train,
        test,
    })
}

/// One GPS factor per pose and one odometry factor per consecutive pair.
pub fn build_graph(traj: &NavTrajectory) -> Result<FactorGraph> {
    traj.validate()?;
    let mut factors = Vec::with_capacity(2 * traj.len() - 1);
    for (t, z) in traj.gps.iter().enumerate() {
        factors.push(Factor::gps(t, *z, class_name("gps", traj.switched, traj.p_labels[t])));
    }
    for (i, z) in traj.odometry.iter().enumerate() {
        let t = i + 1;
        factors.push(Factor::odom(
            t - 1,
            t,
            *z,
            class_name("odom", traj.switched, traj.p_labels[t]),
        ));
    }
    FactorGraph::new(traj.len(), factors)
}

// ---- file format -------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    t: usize,
    gt: SE2Pose,
    gps: SE2Pose,
    odom: Option<SE2Pose>,
    p: u8,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryDoc {
    rows: Vec<Row>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetDoc {
    schema: String,
    spec: DatasetSpec,
    train: Vec<TrajectoryDoc>,
    test: Vec<TrajectoryDoc>,
}

fn to_doc(traj: &NavTrajectory) -> TrajectoryDoc {
    TrajectoryDoc {
        rows: (0..traj.len())
            .map(|t| Row {
                t,
                gt: traj.gt[t],
                gps: traj.gps[t],
                odom: (t > 0).then(|| traj.odometry[t - 1]),
                p: traj.p_labels[t],
            })
            .collect(),
    }
}

fn from_doc(doc: TrajectoryDoc, switched: bool) -> Result<NavTrajectory> {
    let mut traj = NavTrajectory {
        gt: Vec::with_capacity(doc.rows.len()),
        odometry: Vec::new(),
        gps: Vec::with_capacity(doc.rows.len()),
        p_labels: Vec::with_capacity(doc.rows.len()),
        switched,
    };
    for (i, row) in doc.rows.into_iter().enumerate() {
        if row.t != i {
            return Err(Error::Structure(format!("row {i} is labelled t={}", row.t)));
        }
        match (i, row.odom) {
            (0, None) => {}
            (0, Some(_)) => return Err(Error::Structure("first row must have null odometry".into())),
            (_, Some(z)) => traj.odometry.push(z),
            (_, None) => return Err(Error::Structure(format!("row {i} is missing odometry"))),
        }
        traj.gt.push(row.gt);
        traj.gps.push(row.gps);
        traj.p_labels.push(row.p);
    }
    traj.validate()?;
    Ok(traj)
}

impl Dataset {
    pub fn to_json(&self) -> Result<String> {
        let doc = DatasetDoc {
            schema: DATASET_SCHEMA.to_string(),
            spec: self.spec.clone(),
            train: self.train.iter().map(to_doc).collect(),
            test: self.test.iter().map(to_doc).collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DatasetDoc = serde_json::from_str(text)?;
        if doc.schema != DATASET_SCHEMA {
            return Err(Error::Structure(format!(
                "unsupported dataset schema {:?}, expected {DATASET_SCHEMA:?}",
                doc.schema
            )));
        }
        doc.spec.validate()?;
        let switched = doc.spec.id.is_switched();
        let train = doc
            .train
            .into_iter()
            .map(|t| from_doc(t, switched))
            .collect::<Result<Vec<_>>>()?;
        let test = doc
            .test
            .into_iter()
            .map(|t| from_doc(t, switched))
            .collect::<Result<Vec<_>>>()?;
        if train.is_empty() || test.is_empty() {
            return Err(Error::Structure("dataset needs train and test trajectories".into()));
        }
        Ok(Dataset {
            spec: doc.spec,
            train,
            test,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gt_is_deterministic_given_seed() {
        let m = MotionModel::default();
        let a = generate_gt(50, &m, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = generate_gt(50, &m, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let c = generate_gt(50, &m, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn straight_line_without_heading_noise() {
        let m = MotionModel {
            forward: [1.0, 1.0],
            heading_std: 0.0,
        };
        let gt = generate_gt(10, &m, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for (k, p) in gt.iter().enumerate() {
            assert_abs_diff_eq!(p.x(), k as f64, epsilon = 1e-12);
            assert_abs_diff_eq!(p.y(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.theta(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn step_lengths_stay_in_range() {
        let gt = generate_gt(1001, &MotionModel::default(), &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        for w in gt.windows(2) {
            let step = w[0].inverse().compose(&w[1]).translation().norm();
            assert!((0.5..=1.5).contains(&step), "{step}");
        }
    }

    #[test]
    fn tiny_latent_reproduces_ground_truth() {
        let gt = generate_gt(20, &MotionModel::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let latent = NoiseParams::from_pairs([("gps", [1e-30; 3]), ("odom", [1e-30; 3])]).unwrap();
        let (odom, gps) =
            simulate_measurements(&gt, &latent, &[0; 20], false, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for (z, x) in gps.iter().zip(&gt) {
            assert_abs_diff_eq!(z.ominus(x), Tangent3::zeros(), epsilon = 1e-12);
        }
        for (i, z) in odom.iter().enumerate() {
            let rel = gt[i].inverse().compose(&gt[i + 1]);
            assert_abs_diff_eq!(z.ominus(&rel), Tangent3::zeros(), epsilon = 1e-12);
        }
    }

    #[test]
    fn missing_latent_class_is_domain_error() {
        let gt = vec![SE2Pose::identity(); 3];
        let latent = NoiseParams::from_pairs([("gps", [1.0; 3])]).unwrap();
        let r = simulate_measurements(&gt, &latent, &[0; 3], false, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn p_labels_form_segments() {
        let s = Switching::default();
        let labels = generate_p_labels(500, &s, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(labels.len(), 500);
        let mut runs = Vec::new();
        let mut run = 1;
        for w in labels.windows(2) {
            if w[0] == w[1] {
                run += 1;
            } else {
                runs.push(run);
                run = 1;
            }
        }
        assert!(!runs.is_empty());
        assert!(runs.iter().all(|r| (10..=30).contains(r)), "{runs:?}");
    }

    #[test]
    fn graph_sizes() {
        let mut spec = DatasetSpec::preset(DatasetId::D1, 0);
        spec.length = 1;
        spec.train = 1;
        spec.test = 1;
        let ds = make_dataset(&spec).unwrap();
        assert_eq!(build_graph(&ds.train[0]).unwrap().factors().len(), 1);

        let ds = make_dataset(&DatasetSpec::preset(DatasetId::D1, 0)).unwrap();
        assert_eq!(ds.train.len(), 5);
        assert_eq!(ds.test.len(), 20);
        assert_eq!(build_graph(&ds.train[0]).unwrap().factors().len(), 199);
    }

    #[test]
    fn switched_graph_partitions_classes_by_p() {
        let ds = make_dataset(&DatasetSpec::preset(DatasetId::D3, 7)).unwrap();
        let traj = &ds.train[0];
        let g = build_graph(traj).unwrap();
        let ones = traj.p_labels.iter().filter(|&&p| p == 1).count();
        let gps1 = g.factors().iter().filter(|f| f.class() == "gps@p=1").count();
        let gps0 = g.factors().iter().filter(|f| f.class() == "gps@p=0").count();
        assert_eq!(gps1, ones);
        assert_eq!(gps0, traj.len() - ones);
        let odom1 = g.factors().iter().filter(|f| f.class() == "odom@p=1").count();
        let expected = traj.p_labels[1..].iter().filter(|&&p| p == 1).count();
        assert_eq!(odom1, expected);
    }

    #[test]
    fn swapped_latent_exchanges_families() {
        let spec = DatasetSpec::preset(DatasetId::D1, 0);
        let s = spec.swapped_latent();
        assert_eq!(s.get("gps"), spec.latent.get("odom"));
        assert_eq!(s.get("odom"), spec.latent.get("gps"));
        let spec = DatasetSpec::preset(DatasetId::D4, 0);
        let s = spec.swapped_latent();
        assert_eq!(s.get("gps@p=1"), spec.latent.get("odom@p=1"));
        assert_eq!(s.get("odom@p=0"), spec.latent.get("gps@p=0"));
    }

    #[test]
    fn fit_into_bounds_rescales_without_clamping_when_possible() {
        let spec = DatasetSpec::preset(DatasetId::D1, 0);
        let bounds = Bounds::tight(["gps", "odom"]);
        let theta = fit_into_bounds(&spec.swapped_latent(), &bounds).unwrap();
        assert!(bounds.contains(&theta).unwrap());
        let ratio = theta.get("gps").unwrap()[0] / spec.swapped_latent().get("gps").unwrap()[0];
        for (a, b) in theta.flatten().iter().zip(spec.swapped_latent().flatten()) {
            assert_abs_diff_eq!(a / b, ratio, epsilon = 1e-12);
        }
    }

    #[test]
    fn spec_parsing_and_validation() {
        let spec = DatasetSpec::from_json(r#"{"id":"D2","seed":9,"length":30}"#).unwrap();
        assert_eq!(spec.length, 30);
        assert_eq!(spec.seed, 9);
        assert_eq!(spec.latent, DatasetId::D2.default_latent());
        assert!(DatasetSpec::from_json(
            r#"{"id":"D1","latent":{"gps":[-1,1,1],"odom":[1,1,1]}}"#
        )
        .is_err());
        assert!(DatasetSpec::from_json(r#"{"id":"D1","latent":{"gps":[1,1,1]}}"#).is_err());
        assert!(DatasetSpec::from_json(r#"{"id":"D1","train":0}"#).is_err());
        assert!(DatasetSpec::from_json(r#"{"id":"D7"}"#).is_err());
        assert!(DatasetSpec::from_json(r#"{"id":"D1","bogus":1}"#).is_err());
    }

    #[test]
    fn dataset_file_round_trips_exactly() {
        let mut spec = DatasetSpec::preset(DatasetId::D4, 2);
        spec.length = 25;
        let ds = make_dataset(&spec).unwrap();
        let text = ds.to_json().unwrap();
        let back = Dataset::from_json(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_json().unwrap(), text);
    }
}
