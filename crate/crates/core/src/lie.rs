//! Planar rigid transforms, SE(2).
//!
//! Tangent vectors are ordered `(dx, dy, dtheta)`. Perturbations act on the
//! left throughout the crate: `tau ⊕ p = Exp(tau) ∘ p` and
//! `a ⊖ b = Log(a ∘ b⁻¹)`. The solver retraction, the residual Jacobians and
//! the noise injection in the simulator all rely on this single convention.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Element of the Lie algebra se(2): `(dx, dy, dtheta)`.
pub type Tangent3 = Vector3<f64>;

/// Below this angle the V-matrix coefficients switch to their Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Wraps an angle into `(-pi, pi]`. Angles already in range are returned bit-for-bit.
pub fn normalize_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let wrapped = theta.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}

/// A planar pose `(x, y, theta)` with `theta` kept in `(-pi, pi]`.
#[derive(Clone, Copy, PartialEq)]
pub struct SE2Pose {
    x: f64,
    y: f64,
    theta: f64,
}

impl SE2Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        SE2Pose {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn identity() -> Self {
        SE2Pose {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        rotation(self.theta)
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        SE2Pose::new(a[0], a[1], a[2])
    }

    /// Group product `self ∘ other`.
    pub fn compose(&self, other: &SE2Pose) -> SE2Pose {
        let (s, c) = self.theta.sin_cos();
        SE2Pose::new(
            c * other.x - s * other.y + self.x,
            s * other.x + c * other.y + self.y,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> SE2Pose {
        let (s, c) = self.theta.sin_cos();
        SE2Pose::new(
            -(c * self.x + s * self.y),
            s * self.x - c * self.y,
            -self.theta,
        )
    }

    /// Exponential map se(2) → SE(2).
    pub fn exp(tau: &Tangent3) -> SE2Pose {
        let w = tau[2];
        let (a, b) = v_coefficients(w);
        // V = [[a, -b], [b, a]]
        SE2Pose::new(a * tau[0] - b * tau[1], b * tau[0] + a * tau[1], w)
    }

    /// Logarithm on the principal branch. A heading of exactly `pi` maps to
    /// `dtheta = +pi`.
    pub fn log(&self) -> Tangent3 {
        let w = self.theta;
        let half = 0.5 * w;
        // V⁻¹ = [[k, half], [-half, k]] with k = (w/2) cot(w/2)
        let k = if w.abs() < SMALL_ANGLE {
            1.0 - w * w / 12.0
        } else {
            half / half.tan()
        };
        Tangent3::new(
            k * self.x + half * self.y,
            -half * self.x + k * self.y,
            w,
        )
    }

    /// Left plus: `Exp(tau) ∘ self`.
    pub fn oplus(&self, tau: &Tangent3) -> SE2Pose {
        SE2Pose::exp(tau).compose(self)
    }

    /// Left minus: `Log(self ∘ other⁻¹)`.
    pub fn ominus(&self, other: &SE2Pose) -> Tangent3 {
        self.compose_inverse(other).log()
    }

    /// `self ∘ other⁻¹`, exactly the identity when the poses are equal.
    pub fn compose_inverse(&self, other: &SE2Pose) -> SE2Pose {
        // (R(dθ), t_self − R(dθ) t_other)
        let (s, c) = (self.theta - other.theta).sin_cos();
        SE2Pose::new(
            self.x - (c * other.x - s * other.y),
            self.y - (s * other.x + c * other.y),
            self.theta - other.theta,
        )
    }

    /// Adjoint matrix: `self ∘ Exp(tau) ∘ self⁻¹ = Exp(adjoint · tau)`.
    pub fn adjoint(&self) -> Matrix3<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix3::new(c, -s, self.y, s, c, -self.x, 0.0, 0.0, 1.0)
    }
}

/// `tau ⊕ p`, free-function form of [`SE2Pose::oplus`].
pub fn oplus(tau: &Tangent3, p: &SE2Pose) -> SE2Pose {
    p.oplus(tau)
}

/// `a ⊖ b`, free-function form of [`SE2Pose::ominus`].
pub fn ominus(a: &SE2Pose, b: &SE2Pose) -> Tangent3 {
    a.ominus(b)
}

/// `(sin w / w, (1 - cos w) / w)`, the entries of the SE(2) V matrix.
fn v_coefficients(w: f64) -> (f64, f64) {
    if w.abs() < SMALL_ANGLE {
        (1.0 - w * w / 6.0, 0.5 * w)
    } else {
        // 1 - cos w = 2 sin²(w/2) avoids cancellation for small w
        let h = (0.5 * w).sin();
        (w.sin() / w, 2.0 * h * h / w)
    }
}

fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

impl Default for SE2Pose {
    fn default() -> Self {
        SE2Pose::identity()
    }
}

impl fmt::Debug for SE2Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SE2({}, {}, {})", self.x, self.y, self.theta)
    }
}

impl fmt::Display for SE2Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.4}, {:.4}, {:.4})", self.x, self.y, self.theta)
    }
}

// Poses travel as `[x, y, theta]` triples in every file format.
impl Serialize for SE2Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SE2Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let a = <[f64; 3]>::deserialize(deserializer)?;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("pose entries must be finite"));
        }
        Ok(SE2Pose::from_array(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn adjoint_matches_conjugation() {
        let t = SE2Pose::new(1.5, -0.7, 2.2);
        let tau = Tangent3::new(0.3, -0.2, 0.4);
        let conj = t.compose(&SE2Pose::exp(&tau)).compose(&t.inverse());
        let direct = SE2Pose::exp(&(t.adjoint() * tau));
        assert_pose(conj, direct.x(), direct.y(), direct.theta(), 1e-12);
    }

    fn assert_pose(p: SE2Pose, x: f64, y: f64, theta: f64, eps: f64) {
        assert_abs_diff_eq!(p.x(), x, epsilon = eps);
        assert_abs_diff_eq!(p.y(), y, epsilon = eps);
        assert_abs_diff_eq!(p.theta(), theta, epsilon = eps);
    }

    /// RK4 integration of g' = g·tau^ over unit time, starting at identity.
    fn exp_by_integration(tau: Tangent3, steps: usize) -> SE2Pose {
        let f = |th: f64| {
            let (s, c) = th.sin_cos();
            Vector3::new(c * tau[0] - s * tau[1], s * tau[0] + c * tau[1], tau[2])
        };
        let h = 1.0 / steps as f64;
        let mut g = Vector3::zeros();
        for _ in 0..steps {
            let k1 = f(g[2]);
            let k2 = f(g[2] + 0.5 * h * k1[2]);
            let k3 = f(g[2] + 0.5 * h * k2[2]);
            let k4 = f(g[2] + h * k3[2]);
            g += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        SE2Pose::new(g[0], g[1], g[2])
    }

    #[test]
    fn exp_examples() {
        assert_pose(SE2Pose::exp(&Tangent3::zeros()), 0.0, 0.0, 0.0, 0.0);
        assert_pose(SE2Pose::exp(&Tangent3::new(1.0, 0.0, 0.0)), 1.0, 0.0, 0.0, 0.0);
        let two_over_pi = 2.0 / PI;
        let p = SE2Pose::exp(&Tangent3::new(1.0, 0.0, FRAC_PI_2));
        assert_pose(p, two_over_pi, two_over_pi, FRAC_PI_2, 1e-12);
        let q = exp_by_integration(Tangent3::new(1.0, 0.0, FRAC_PI_2), 2000);
        assert_pose(p, q.x(), q.y(), q.theta(), 1e-12);
    }

    #[test]
    fn exp_matches_integration_for_random_twists() {
        for tau in [
            Tangent3::new(0.3, -1.2, 2.5),
            Tangent3::new(-2.0, 0.7, -0.4),
            Tangent3::new(0.1, 0.1, 1e-9),
        ] {
            let p = SE2Pose::exp(&tau);
            let q = exp_by_integration(tau, 4000);
            assert_pose(p, q.x(), q.y(), q.theta(), 1e-11);
        }
    }

    #[test]
    fn log_examples() {
        assert_eq!(SE2Pose::identity().log(), Tangent3::zeros());
        assert_eq!(SE2Pose::new(1.0, 0.0, 0.0).log(), Tangent3::new(1.0, 0.0, 0.0));
        let t = SE2Pose::new(2.0 / PI, 2.0 / PI, FRAC_PI_2).log();
        assert_abs_diff_eq!(t, Tangent3::new(1.0, 0.0, FRAC_PI_2), epsilon = 1e-12);
    }

    #[test]
    fn log_at_pi_uses_positive_branch() {
        let t = SE2Pose::new(1.0, 2.0, -PI).log();
        assert_eq!(t[2], PI);
        let back = SE2Pose::exp(&t);
        assert_pose(back, 1.0, 2.0, PI, 1e-12);
    }

    #[test]
    fn compose_examples() {
        let a = SE2Pose::new(0.3, -0.2, 1.1);
        assert_eq!(a.compose(&SE2Pose::identity()), a);
        assert_pose(
            SE2Pose::new(1.0, 0.0, 0.0).compose(&SE2Pose::new(1.0, 0.0, 0.0)),
            2.0,
            0.0,
            0.0,
            0.0,
        );
        let p = SE2Pose::new(0.0, 0.0, FRAC_PI_2).compose(&SE2Pose::new(1.0, 0.0, 0.0));
        assert_pose(p, 0.0, 1.0, FRAC_PI_2, 1e-15);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(SE2Pose::identity().inverse(), SE2Pose::identity());
        assert_pose(SE2Pose::new(1.0, 0.0, 0.0).inverse(), -1.0, 0.0, 0.0, 0.0);
        assert_pose(
            SE2Pose::new(0.0, 1.0, FRAC_PI_2).inverse(),
            -1.0,
            0.0,
            -FRAC_PI_2,
            1e-15,
        );
    }

    #[test]
    fn oplus_ominus_examples() {
        let p = SE2Pose::new(0.4, 0.5, -2.0);
        assert_eq!(p.oplus(&Tangent3::zeros()), p);
        let tau = Tangent3::new(0.2, -0.1, 0.9);
        assert_eq!(oplus(&tau, &SE2Pose::identity()), SE2Pose::exp(&tau));
        let q = oplus(
            &Tangent3::new(1.0, 0.0, 0.0),
            &SE2Pose::new(0.0, 0.0, FRAC_PI_2),
        );
        assert_pose(q, 1.0, 0.0, FRAC_PI_2, 1e-15);

        assert_eq!(ominus(&p, &p), Tangent3::zeros());
        assert_abs_diff_eq!(
            ominus(&SE2Pose::exp(&tau), &SE2Pose::identity()),
            tau,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            ominus(&SE2Pose::new(2.0, 0.0, 0.0), &SE2Pose::new(1.0, 0.0, 0.0)),
            Tangent3::new(1.0, 0.0, 0.0),
            epsilon = 0.0
        );
    }

    #[test]
    fn angles_are_normalized() {
        assert_eq!(SE2Pose::new(0.0, 0.0, 3.0 * PI).theta(), PI);
        assert_eq!(SE2Pose::new(0.0, 0.0, -PI).theta(), PI);
        assert_abs_diff_eq!(SE2Pose::new(0.0, 0.0, 2.0 * PI + 0.5).theta(), 0.5, epsilon = 1e-15);
        assert_eq!(normalize_angle(-1.25), -1.25);
    }

    #[test]
    fn serializes_as_triple() {
        let p = SE2Pose::new(1.5, -2.0, 0.25);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[1.5,-2.0,0.25]");
        let back: SE2Pose = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
