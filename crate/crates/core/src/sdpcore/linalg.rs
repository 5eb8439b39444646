//! Small dense kernels used inside the interior-point loop.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::scalar::Real;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    let n = m.nrows();
    let mut a = m.clone();
    let two = T::lit(2.0);
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            diag += a[(i, i)] * a[(i, i)];
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off <= T::eps() * T::eps() * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (two * apq);
                let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

pub fn jacobi_min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    jacobi_eigenvalues(m)
        .into_iter()
        .reduce(|a, b| a.min(b))
        .unwrap_or_else(T::zero)
}

pub fn cholesky<T: Real>(m: &DMatrix<T>) -> Option<Cholesky<T, Dyn>> {
    Cholesky::new(m.clone())
}

/// Largest `α ∈ (0, 1]` keeping `X + α ΔX` positive semidefinite,
/// shortened by `fraction` when the boundary is hit.
pub fn max_step<T: Real>(x: &DMatrix<T>, dx: &DMatrix<T>, fraction: T) -> Option<T> {
    let chol = cholesky(x)?;
    let l = chol.l();
    let inner = l.solve_lower_triangular(dx)?;
    let w = l.solve_lower_triangular(&inner.transpose())?;
    let lmin = jacobi_min_eigenvalue(&crate::synth::symmetrize(&w));
    if !lmin.is_finite() {
        return None;
    }
    Some(if lmin < T::zero() {
        (-fraction / lmin).min(T::one())
    } else {
        T::one()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_matches_known_spectrum() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let mut got = jacobi_eigenvalues(&m);
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let r2 = 2f64.sqrt();
        for (g, w) in got.iter().zip([2.0 - r2, 2.0, 2.0 + r2]) {
            assert!((g - w).abs() < 1e-14, "{g} vs {w}");
        }
    }

    #[test]
    fn jacobi_agrees_with_nalgebra() {
        let m = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + (i == j) as u8 as f64);
        let m = crate::synth::symmetrize(&m);
        let mut a = jacobi_eigenvalues(&m);
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut b: Vec<f64> = nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn step_to_boundary() {
        let x = DMatrix::<f64>::identity(2, 2);
        let dx = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-2.0, 1.0]));
        assert!((max_step(&x, &dx, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((max_step(&x, &dx, 0.9).unwrap() - 0.45).abs() < 1e-15);
        assert_eq!(max_step(&x, &dx.abs(), 0.9).unwrap(), 1.0);
    }
}
