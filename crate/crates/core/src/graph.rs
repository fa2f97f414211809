//! Pose-chain factor graphs: GPS unary factors and odometry binary factors,
//! residual evaluation, whitening and linearization into `A Δ ≈ b`.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::lie::{SE2Pose, Tangent3};
use crate::params::NoiseParams;

/// Central-difference step used for the residual Jacobian blocks.
pub const JACOBIAN_STEP: f64 = 1e-6;

/// Largest system `condition_diagnostics` will densify.
pub const MAX_DENSE_COLUMNS: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    GpsUnary,
    OdomBinary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    kind: FactorKind,
    vars: [usize; 2],
    measurement: SE2Pose,
    class: String,
}

impl Factor {
    /// Absolute pose measurement of `pose`.
    pub fn gps(pose: usize, z: SE2Pose, class: impl Into<String>) -> Self {
        Factor {
            kind: FactorKind::GpsUnary,
            vars: [pose, pose],
            measurement: z,
            class: class.into(),
        }
    }

    /// Relative motion measurement `from⁻¹ ∘ to`.
    pub fn odom(from: usize, to: usize, z: SE2Pose, class: impl Into<String>) -> Self {
        Factor {
            kind: FactorKind::OdomBinary,
            vars: [from, to],
            measurement: z,
            class: class.into(),
        }
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn variables(&self) -> &[usize] {
        match self.kind {
            FactorKind::GpsUnary => &self.vars[..1],
            FactorKind::OdomBinary => &self.vars[..],
        }
    }

    pub fn measurement(&self) -> &SE2Pose {
        &self.measurement
    }

    pub fn class(&self) -> &str {
        &self.class
    }

    /// `g(x) ∘ z⁻¹`; the residual is its logarithm.
    fn error_pose(&self, poses: &[SE2Pose]) -> SE2Pose {
        match self.kind {
            FactorKind::GpsUnary => poses[0].compose_inverse(&self.measurement),
            FactorKind::OdomBinary => poses[0]
                .inverse()
                .compose(&poses[1])
                .compose_inverse(&self.measurement),
        }
    }

    fn predicted_error(&self, poses: &[SE2Pose]) -> Tangent3 {
        self.error_pose(poses).log()
    }

    /// Linear map taking a left perturbation of variable `slot` to the
    /// equivalent left perturbation of the error pose.
    fn perturbation_map(&self, slot: usize, poses: &[SE2Pose]) -> Matrix3<f64> {
        match (self.kind, slot) {
            (FactorKind::GpsUnary, _) => Matrix3::identity(),
            // x0⁻¹ Exp(δ) x1 z⁻¹ = Exp(Ad(x0⁻¹) δ) e
            (FactorKind::OdomBinary, 1) => poses[0].inverse().adjoint(),
            // (Exp(δ) x0)⁻¹ = x0⁻¹ Exp(−δ)
            (FactorKind::OdomBinary, _) => -poses[0].inverse().adjoint(),
        }
    }

    fn check_indices(&self, num_states: usize) -> Result<()> {
        match self.variables().iter().find(|&&v| v >= num_states) {
            Some(v) => Err(Error::Structure(format!(
                "factor references pose {v} but only {num_states} states exist"
            ))),
            None => Ok(()),
        }
    }
}

/// Residual `g(x) ⊖ z` of one factor evaluated at `states`.
pub fn residual(factor: &Factor, states: &[SE2Pose]) -> Result<Tangent3> {
    factor.check_indices(states.len())?;
    Ok(residual_unchecked(factor, states))
}

fn residual_unchecked(factor: &Factor, states: &[SE2Pose]) -> Tangent3 {
    match factor.kind {
        FactorKind::GpsUnary => factor.predicted_error(&[states[factor.vars[0]]]),
        FactorKind::OdomBinary => {
            factor.predicted_error(&[states[factor.vars[0]], states[factor.vars[1]]])
        }
    }
}

/// Left-perturbation Jacobian blocks of the residual, by central differences.
///
/// Perturbing a variable by `±h e_k` is carried into the error pose before
/// differencing, so the quotient never subtracts quantities of the size of
/// the absolute pose coordinates.
fn residual_jacobians(factor: &Factor, states: &[SE2Pose]) -> Vec<Matrix3<f64>> {
    let local: Vec<SE2Pose> = factor.variables().iter().map(|&v| states[v]).collect();
    let e = factor.error_pose(&local);
    (0..local.len())
        .map(|slot| {
            let map = factor.perturbation_map(slot, &local);
            let mut block = Matrix3::zeros();
            for k in 0..3 {
                let v: Tangent3 = map.column(k) * JACOBIAN_STEP;
                let plus = SE2Pose::exp(&v).compose(&e).log();
                let minus = SE2Pose::exp(&(-v)).compose(&e).log();
                block.set_column(k, &((plus - minus) / (2.0 * JACOBIAN_STEP)));
            }
            block
        })
        .collect()
}

/// Scales a residual and its Jacobian blocks by `diag(theta_i)^(-1/2)`.
pub fn whiten(
    r: &Tangent3,
    blocks: &[Matrix3<f64>],
    theta_i: &[f64; 3],
) -> Result<(Tangent3, Vec<Matrix3<f64>>)> {
    let w = inverse_sqrt(theta_i)?;
    let wr = r.component_mul(&w);
    let wb = blocks
        .iter()
        .map(|b| {
            let mut b = *b;
            for (row, wk) in w.iter().enumerate() {
                b.row_mut(row).scale_mut(*wk);
            }
            b
        })
        .collect();
    Ok((wr, wb))
}

fn inverse_sqrt(theta_i: &[f64; 3]) -> Result<Vector3<f64>> {
    if theta_i.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::Domain(format!(
            "covariance diagonal must be positive, got {theta_i:?}"
        )));
    }
    Ok(Vector3::new(
        theta_i[0].sqrt().recip(),
        theta_i[1].sqrt().recip(),
        theta_i[2].sqrt().recip(),
    ))
}

#[derive(Clone, Debug)]
pub struct FactorGraph {
    num_poses: usize,
    factors: Vec<Factor>,
}

impl FactorGraph {
    pub fn new(num_poses: usize, factors: Vec<Factor>) -> Result<Self> {
        if num_poses == 0 {
            return Err(Error::Structure("graph has no poses".into()));
        }
        let mut touched = vec![false; num_poses];
        for f in &factors {
            f.check_indices(num_poses)?;
            if f.kind == FactorKind::OdomBinary && f.vars[1] != f.vars[0] + 1 {
                return Err(Error::Structure(format!(
                    "odometry factor must link consecutive poses, got {} -> {}",
                    f.vars[0], f.vars[1]
                )));
            }
            for &v in f.variables() {
                touched[v] = true;
            }
        }
        if let Some(v) = touched.iter().position(|t| !t) {
            return Err(Error::Structure(format!("pose {v} is not attached to any factor")));
        }
        Ok(FactorGraph { num_poses, factors })
    }

    pub fn num_poses(&self) -> usize {
        self.num_poses
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// Distinct noise classes referenced by the factors.
    pub fn classes(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        let mut out: Vec<&str> = self
            .factors
            .iter()
            .map(|f| f.class.as_str())
            .filter(|c| seen.insert(*c))
            .collect();
        out.sort_unstable();
        out
    }

    /// Fails unless `states` has one pose per variable and `theta` covers every class.
    pub fn check(&self, states: &[SE2Pose], theta: &NoiseParams) -> Result<()> {
        if states.len() != self.num_poses {
            return Err(Error::Structure(format!(
                "graph has {} poses, got {} states",
                self.num_poses,
                states.len()
            )));
        }
        for f in &self.factors {
            if theta.get(&f.class).is_none() {
                return Err(Error::Structure(format!(
                    "noise parameters have no entry for class {:?}",
                    f.class
                )));
            }
        }
        Ok(())
    }
}

/// One factor's rows of the whitened linear system.
#[derive(Clone, Debug)]
pub struct RowBlock {
    pub blocks: Vec<(usize, Matrix3<f64>)>,
    pub b: Vector3<f64>,
}

/// Whitened linearization `A Δ ≈ b`: one 3-row block per factor, one 3-column
/// block per pose. `b` holds the negated whitened residuals.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    num_poses: usize,
    rows: Vec<RowBlock>,
}

impl SparseSystem {
    pub fn from_rows(num_poses: usize, rows: Vec<RowBlock>) -> Result<Self> {
        if let Some(bad) = rows
            .iter()
            .flat_map(|r| r.blocks.iter().map(|(c, _)| *c))
            .find(|&c| c >= num_poses)
        {
            return Err(Error::Structure(format!(
                "row block references column block {bad} of {num_poses}"
            )));
        }
        Ok(SparseSystem { num_poses, rows })
    }

    pub fn num_poses(&self) -> usize {
        self.num_poses
    }

    pub fn rows(&self) -> &[RowBlock] {
        &self.rows
    }

    pub fn nrows(&self) -> usize {
        3 * self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        3 * self.num_poses
    }

    pub fn to_dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut a = DMatrix::zeros(self.nrows(), self.ncols());
        let mut b = DVector::zeros(self.nrows());
        for (i, row) in self.rows.iter().enumerate() {
            for (col, block) in &row.blocks {
                a.fixed_view_mut::<3, 3>(3 * i, 3 * col).copy_from(block);
            }
            b.fixed_rows_mut::<3>(3 * i).copy_from(&row.b);
        }
        (a, b)
    }

    /// `(AᵀA, Aᵀb)` accumulated block by block.
    pub fn normal_equations(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.ncols();
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        for row in &self.rows {
            for (ci, bi) in &row.blocks {
                let rhs = bi.transpose() * row.b;
                let mut gv = g.fixed_rows_mut::<3>(3 * ci);
                gv += rhs;
                for (cj, bj) in &row.blocks {
                    let mut hv = h.fixed_view_mut::<3, 3>(3 * ci, 3 * cj);
                    hv += bi.transpose() * bj;
                }
            }
        }
        (h, g)
    }

    /// `‖Aᵀb‖∞`, the first-order optimality measure.
    pub fn gradient_norm(&self) -> f64 {
        self.normal_equations().1.amax()
    }

    /// `‖|A|ᵀ|b|‖∞`: magnitude of the terms summed into `Aᵀb`, the scale
    /// below which its entries are indistinguishable from rounding.
    pub fn gradient_scale(&self) -> f64 {
        let mut g = DVector::<f64>::zeros(self.ncols());
        for row in &self.rows {
            let b = row.b.abs();
            for (c, block) in &row.blocks {
                let mut gv = g.fixed_rows_mut::<3>(3 * c);
                gv += block.abs().transpose() * b;
            }
        }
        g.amax()
    }
}

pub fn linearize(graph: &FactorGraph, states: &[SE2Pose], theta: &NoiseParams) -> Result<SparseSystem> {
    graph.check(states, theta)?;
    let mut rows = Vec::with_capacity(graph.factors.len());
    for f in &graph.factors {
        let r = residual_unchecked(f, states);
        let jac = residual_jacobians(f, states);
        let (wr, wj) = whiten(&r, &jac, theta.get(&f.class).expect("checked above"))?;
        rows.push(RowBlock {
            blocks: f.variables().iter().copied().zip(wj).collect(),
            b: -wr,
        });
    }
    Ok(SparseSystem {
        num_poses: graph.num_poses,
        rows,
    })
}

/// `Σ ½ rᵀ diag(θ)⁻¹ r` over all factors.
pub fn total_error(graph: &FactorGraph, states: &[SE2Pose], theta: &NoiseParams) -> Result<f64> {
    graph.check(states, theta)?;
    let mut sum = 0.0;
    for f in &graph.factors {
        let r = residual_unchecked(f, states);
        let t = theta.get(&f.class).expect("checked above");
        sum += 0.5 * (r[0] * r[0] / t[0] + r[1] * r[1] / t[1] + r[2] * r[2] / t[2]);
    }
    Ok(sum)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionDiagnostics {
    /// 2-norm condition number of the dense `A`.
    pub kappa_a: f64,
}

pub fn condition_diagnostics(sys: &SparseSystem) -> Result<ConditionDiagnostics> {
    let (a, _) = sys.to_dense();
    condition_number(&a).map(|kappa_a| ConditionDiagnostics { kappa_a })
}

/// Ratio of extreme singular values; infinite when `a` is rank deficient.
pub fn condition_number(a: &DMatrix<f64>) -> Result<f64> {
    if a.ncols() > MAX_DENSE_COLUMNS {
        return Err(Error::Structure(format!(
            "{} columns exceeds the dense diagnostics limit of {MAX_DENSE_COLUMNS}",
            a.ncols()
        )));
    }
    if a.nrows() < a.ncols() {
        return Ok(f64::INFINITY);
    }
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    Ok(if min > 0.0 { max / min } else { f64::INFINITY })
}
