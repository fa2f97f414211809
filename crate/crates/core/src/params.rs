//! Noise parameters and their box constraints.
//!
//! A noise class (`"gps"`, `"odom"`, `"gps@p=1"`, ...) owns the three diagonal
//! entries of its covariance, in `(m², m², rad²)`. Classes are kept in a
//! `BTreeMap`, so the flattened parameter vector is always ordered by class
//! name and then by coordinate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower end of the tight box; with [`TIGHT_UPPER`] it caps the spread at 100.
pub const TIGHT_LOWER: f64 = 0.1;
pub const TIGHT_UPPER: f64 = 10.0;
/// The loose box only keeps the covariances positive definite.
pub const LOOSE_LOWER: f64 = 1e-6;
pub const LOOSE_UPPER: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, [f64; 3]>", into = "BTreeMap<String, [f64; 3]>")]
pub struct NoiseParams {
    entries: BTreeMap<String, [f64; 3]>,
}

impl NoiseParams {
    pub fn new(entries: BTreeMap<String, [f64; 3]>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Domain("noise parameters need at least one class".into()));
        }
        for (class, v) in &entries {
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::Domain(format!(
                    "noise class {class:?} has non-positive entries {v:?}"
                )));
            }
        }
        Ok(NoiseParams { entries })
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, [f64; 3])>) -> Result<Self> {
        NoiseParams::new(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn get(&self, class: &str) -> Option<&[f64; 3]> {
        self.entries.get(class)
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64; 3])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Number of scalar parameters, `m`.
    pub fn len(&self) -> usize {
        3 * self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Flattened `(class, coordinate)` labels matching [`flatten`](Self::flatten).
    pub fn labels(&self) -> Vec<(String, usize)> {
        self.entries
            .keys()
            .flat_map(|k| (0..3).map(move |j| (k.clone(), j)))
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.entries.values().flat_map(|v| v.iter().copied()).collect()
    }

    /// Rebuilds parameters with the same classes as `self` from a flat vector.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.len() {
            return Err(Error::Structure(format!(
                "expected {} parameters, got {}",
                self.len(),
                flat.len()
            )));
        }
        let entries = self
            .entries
            .keys()
            .zip(flat.chunks_exact(3))
            .map(|(k, c)| (k.clone(), [c[0], c[1], c[2]]))
            .collect();
        NoiseParams::new(entries)
    }

    /// Every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let flat: Vec<f64> = self.flatten().into_iter().map(|v| v * c).collect();
        self.with_flat(&flat)
    }

    /// Checks that both sets name exactly the same classes.
    pub fn same_classes(&self, other: &NoiseParams) -> bool {
        self.entries.keys().eq(other.entries.keys())
    }
}

impl TryFrom<BTreeMap<String, [f64; 3]>> for NoiseParams {
    type Error = Error;

    fn try_from(entries: BTreeMap<String, [f64; 3]>) -> Result<Self> {
        NoiseParams::new(entries)
    }
}

impl From<NoiseParams> for BTreeMap<String, [f64; 3]> {
    fn from(p: NoiseParams) -> Self {
        p.entries
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassBounds {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
}

impl ClassBounds {
    pub fn uniform(lower: f64, upper: f64) -> Self {
        ClassBounds {
            lower: [lower; 3],
            upper: [upper; 3],
        }
    }
}

/// Per-class, per-coordinate eigenvalue box `lower <= theta <= upper`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, ClassBounds>", into = "BTreeMap<String, ClassBounds>")]
pub struct Bounds {
    classes: BTreeMap<String, ClassBounds>,
}

impl Bounds {
    pub fn new(classes: BTreeMap<String, ClassBounds>) -> Result<Self> {
        for (class, b) in &classes {
            for j in 0..3 {
                let (lo, hi) = (b.lower[j], b.upper[j]);
                if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
                    return Err(Error::Domain(format!(
                        "bounds for {class:?} coordinate {j} must satisfy 0 < lower < upper, got [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(Bounds { classes })
    }

    /// Same box `[lower, upper]` for every coordinate of every class.
    pub fn uniform<'a>(classes: impl IntoIterator<Item = &'a str>, lower: f64, upper: f64) -> Result<Self> {
        Bounds::new(
            classes
                .into_iter()
                .map(|c| (c.to_string(), ClassBounds::uniform(lower, upper)))
                .collect(),
        )
    }

    pub fn tight<'a>(classes: impl IntoIterator<Item = &'a str>) -> Self {
        Bounds::uniform(classes, TIGHT_LOWER, TIGHT_UPPER).expect("tight bounds are valid")
    }

    pub fn loose<'a>(classes: impl IntoIterator<Item = &'a str>) -> Self {
        Bounds::uniform(classes, LOOSE_LOWER, LOOSE_UPPER).expect("loose bounds are valid")
    }

    pub fn get(&self, class: &str) -> Option<&ClassBounds> {
        self.classes.get(class)
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    /// Flat lower and upper vectors aligned with `theta.flatten()`.
    pub fn flat_for(&self, theta: &NoiseParams) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut lower = Vec::with_capacity(theta.len());
        let mut upper = Vec::with_capacity(theta.len());
        for class in theta.classes() {
            let b = self.classes.get(class).ok_or_else(|| {
                Error::Structure(format!("no bounds for noise class {class:?}"))
            })?;
            lower.extend_from_slice(&b.lower);
            upper.extend_from_slice(&b.upper);
        }
        Ok((lower, upper))
    }

    pub fn contains(&self, theta: &NoiseParams) -> Result<bool> {
        let (lo, hi) = self.flat_for(theta)?;
        Ok(theta
            .flatten()
            .iter()
            .zip(lo.iter().zip(&hi))
            .all(|(v, (l, h))| l <= v && v <= h))
    }

    /// Clamps `theta` into the box.
    pub fn project(&self, theta: &NoiseParams) -> Result<NoiseParams> {
        let (lo, hi) = self.flat_for(theta)?;
        let flat: Vec<f64> = theta
            .flatten()
            .iter()
            .zip(lo.iter().zip(&hi))
            .map(|(v, (l, h))| v.clamp(*l, *h))
            .collect();
        theta.with_flat(&flat)
    }

    /// Largest possible eigenvalue spread inside the box.
    pub fn max_spread(&self) -> f64 {
        let lo = self
            .classes
            .values()
            .flat_map(|b| b.lower)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .classes
            .values()
            .flat_map(|b| b.upper)
            .fold(0.0, f64::max);
        hi / lo
    }
}

impl TryFrom<BTreeMap<String, ClassBounds>> for Bounds {
    type Error = Error;

    fn try_from(classes: BTreeMap<String, ClassBounds>) -> Result<Self> {
        Bounds::new(classes)
    }
}

impl From<Bounds> for BTreeMap<String, ClassBounds> {
    fn from(b: Bounds) -> Self {
        b.classes
    }
}

/// Eigenvalue spread: largest diagonal entry over smallest, across all classes.
pub fn eigen_spread(theta: &NoiseParams) -> f64 {
    let flat = theta.flatten();
    let max = flat.iter().copied().fold(0.0, f64::max);
    let min = flat.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, [f64; 3])]) -> NoiseParams {
        NoiseParams::from_pairs(pairs.iter().map(|(k, v)| (*k, *v))).unwrap()
    }

    #[test]
    fn rejects_non_positive_entries() {
        assert!(matches!(
            NoiseParams::from_pairs([("gps", [1.0, 0.0, 1.0])]),
            Err(Error::Domain(_))
        ));
        assert!(NoiseParams::from_pairs([("gps", [1.0, f64::NAN, 1.0])]).is_err());
        assert!(serde_json::from_str::<NoiseParams>(r#"{"gps":[1,-1,1]}"#).is_err());
    }

    #[test]
    fn flatten_orders_by_class_name() {
        let p = params(&[("odom", [4.0, 5.0, 6.0]), ("gps", [1.0, 2.0, 3.0])]);
        assert_eq!(p.flatten(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(p.labels()[3], ("odom".to_string(), 0));
        let q = p.with_flat(&[6.0, 5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        assert_eq!(q.get("odom"), Some(&[3.0, 2.0, 1.0]));
    }

    #[test]
    fn eigen_spread_examples() {
        assert_eq!(eigen_spread(&params(&[("a", [2.0; 3]), ("b", [2.0; 3])])), 1.0);
        assert_eq!(eigen_spread(&params(&[("a", [0.1, 10.0, 1.0])])), 100.0);
        assert_eq!(eigen_spread(&params(&[("a", [0.25, 1.0, 4.0])])), 16.0);
    }

    #[test]
    fn bounds_validation() {
        assert!(Bounds::uniform(["gps"], 0.0, 1.0).is_err());
        assert!(Bounds::uniform(["gps"], 2.0, 1.0).is_err());
        assert!(Bounds::uniform(["gps"], 2.0, 2.0).is_err());
        let b = Bounds::tight(["gps", "odom"]);
        assert_eq!(b.max_spread(), 100.0);
        let p = params(&[("gps", [0.01, 1.0, 20.0]), ("odom", [1.0; 3])]);
        assert!(!b.contains(&p).unwrap());
        let q = b.project(&p).unwrap();
        assert_eq!(q.get("gps"), Some(&[0.1, 1.0, 10.0]));
        assert!(b.contains(&q).unwrap());
    }

    #[test]
    fn missing_class_bounds_is_structural() {
        let b = Bounds::tight(["gps"]);
        let p = params(&[("odom", [1.0; 3])]);
        assert!(matches!(b.flat_for(&p), Err(Error::Structure(_))));
    }
}
