//! Dense symmetric positive-definite solves that skip the zero envelope.
//!
//! Pose-chain normal equations are banded, so the Cholesky factor only ever
//! touches entries between each row's first non-zero and the diagonal. The
//! arithmetic is the textbook row-oriented Cholesky restricted to that
//! envelope; no pivoting, so results are bit-reproducible.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `(h + damping·I) x = rhs` for symmetric positive-definite `h`.
///
/// Only the lower triangle of `h` is read.
pub fn solve_spd(h: &DMatrix<f64>, damping: f64, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = h.nrows();
    if h.ncols() != n || rhs.len() != n {
        return Err(Error::Structure(format!(
            "solve_spd: matrix is {}x{}, rhs has {} entries",
            h.nrows(),
            h.ncols(),
            rhs.len()
        )));
    }
    let first: Vec<usize> = (0..n)
        .map(|i| (0..i).find(|&j| h[(i, j)] != 0.0).unwrap_or(i))
        .collect();

    let mut l = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in first[i]..=i {
            let start = first[i].max(first[j]);
            let mut sum = h[(i, j)];
            if i == j {
                sum += damping;
            }
            for k in start..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: i });
                }
                l[(i, i)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }

    // L y = rhs
    let mut y = rhs.clone();
    for i in 0..n {
        let mut sum = y[i];
        for k in first[i]..i {
            sum -= l[(i, k)] * y[k];
        }
        y[i] = sum / l[(i, i)];
    }
    // Lᵀ x = y, column sweep so the envelope is respected.
    let mut x = y;
    for i in (0..n).rev() {
        x[i] /= l[(i, i)];
        let xi = x[i];
        for k in first[i]..i {
            x[k] -= l[(i, k)] * xi;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    }

    #[test]
    fn matches_nalgebra_cholesky_on_dense_matrix() {
        let mut seed = 7;
        let a = DMatrix::from_fn(9, 6, |_, _| lcg(&mut seed));
        let h = a.transpose() * &a;
        let rhs = DVector::from_fn(6, |_, _| lcg(&mut seed));
        let x = solve_spd(&h, 0.0, &rhs).unwrap();
        let reference = h.clone().cholesky().unwrap().solve(&rhs);
        assert_relative_eq!(x, reference, epsilon = 1e-10, max_relative = 1e-10);
    }

    #[test]
    fn banded_matrix_with_damping() {
        let n = 12;
        let h = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 4.0,
            1 => -1.0,
            2 => 0.5,
            _ => 0.0,
        });
        let rhs = DVector::from_fn(n, |i, _| (i as f64).sin());
        let x = solve_spd(&h, 0.3, &rhs).unwrap();
        let damped = &h + DMatrix::identity(n, n) * 0.3;
        assert_relative_eq!(&damped * &x, rhs, epsilon = 1e-12);
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let rhs = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            solve_spd(&h, 0.0, &rhs),
            Err(Error::NotPositiveDefinite { pivot: 1 })
        ));
        assert!(solve_spd(&DMatrix::zeros(2, 2), 0.0, &rhs).is_err());
    }
}
