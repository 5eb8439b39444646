//! Infeasible-start primal-dual path following with the HKM direction.
//!
//! Solves `max t  s.t.  C_b − Σ_k z_k A_{b,k} ⪰ 0` for every block `b`,
//! where `z = (y, t)`. The primal side is
//! `min Σ_b tr(C_b X_b)  s.t.  Σ_b tr(A_{b,k} X_b) = e_t`.

use nalgebra::{DMatrix, DVector};

use super::linalg::{cholesky, jacobi_min_eigenvalue, max_step};
use super::SolverSettings;
use crate::scalar::Real;

pub(crate) struct Block<T> {
    pub c: DMatrix<T>,
    /// One entry per coordinate of `z`; `None` when identically zero.
    pub a: Vec<Option<DMatrix<T>>>,
    /// Whether the block participates in the exact `t(y)` evaluation.
    pub measured: bool,
}

pub(crate) struct Sdp<T> {
    pub blocks: Vec<Block<T>>,
    /// Number of `y` coordinates; `t` is coordinate `dim`.
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Outcome {
    Converged,
    Stalled,
    IterationLimit,
}

pub(crate) struct IpmResult<T> {
    pub y: DVector<T>,
    /// Exact `min_b λ_min(C_b − Σ y_k A_{b,k})` at `y`.
    pub t: T,
    /// Last primal objective, an upper bound on `t*` once primal feasible.
    pub upper: T,
    pub primal_residual: T,
    pub iterations: usize,
    pub outcome: Outcome,
}

impl<T: Real> Sdp<T> {
    fn slack(&self, z: &DVector<T>) -> Vec<DMatrix<T>> {
        self.blocks
            .iter()
            .map(|b| {
                let mut s = b.c.clone();
                for (k, a) in b.a.iter().enumerate() {
                    if let Some(a) = a {
                        if z[k] != T::zero() {
                            s -= a * z[k];
                        }
                    }
                }
                s
            })
            .collect()
    }

    /// Exact margin of `y`, excluding the `t` coordinate.
    pub fn margin(&self, y: &DVector<T>) -> T {
        let mut z = DVector::zeros(self.dim + 1);
        z.rows_mut(0, self.dim).copy_from(y);
        let slack = self.slack(&z);
        self.blocks
            .iter()
            .zip(&slack)
            .filter(|(b, _)| b.measured)
            .map(|(_, s)| jacobi_min_eigenvalue(s))
            .reduce(|a, b| a.min(b))
            .unwrap_or_else(T::zero)
    }

    fn total_size(&self) -> usize {
        self.blocks.iter().map(|b| b.c.nrows()).sum()
    }

    fn apply(&self, x: &[DMatrix<T>]) -> DVector<T> {
        let mut out = DVector::zeros(self.dim + 1);
        for (b, xb) in self.blocks.iter().zip(x) {
            for (k, a) in b.a.iter().enumerate() {
                if let Some(a) = a {
                    out[k] += a.dot(xb);
                }
            }
        }
        out
    }
}

fn inner<T: Real>(a: &[DMatrix<T>], b: &[DMatrix<T>]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + x.dot(y))
}

fn sym<T: Real>(m: DMatrix<T>) -> DMatrix<T> {
    crate::synth::symmetrize(&m)
}

pub(crate) fn solve<T: Real>(sdp: &Sdp<T>, start: Option<&DVector<T>>, settings: &SolverSettings) -> IpmResult<T> {
    let m = sdp.dim + 1;
    let n_total = T::lit(sdp.total_size() as f64);
    let fraction = T::lit(settings.step_fraction);
    let tol = T::lit(settings.tolerance);
    let cond_limit = T::lit(settings.condition_limit);
    let mut b = DVector::zeros(m);
    b[sdp.dim] = T::one();
    let c_norm = sdp
        .blocks
        .iter()
        .fold(T::zero(), |acc, bl| acc + bl.c.norm_squared())
        .sqrt();

    let y0 = start.cloned().unwrap_or_else(|| DVector::zeros(sdp.dim));
    let mut z = DVector::zeros(m);
    z.rows_mut(0, sdp.dim).copy_from(&y0);
    let t0 = sdp.margin(&y0).min(T::zero()) - T::one();
    z[sdp.dim] = t0;
    let mut s = sdp.slack(&z);
    let mut x: Vec<DMatrix<T>> = Vec::with_capacity(s.len());
    for sb in &s {
        match cholesky(sb) {
            Some(ch) => x.push(ch.inverse()),
            None => {
                return IpmResult {
                    y: y0,
                    t: t0 + T::one(),
                    upper: T::lit(f64::INFINITY),
                    primal_residual: T::lit(f64::INFINITY),
                    iterations: 0,
                    outcome: Outcome::Stalled,
                }
            }
        }
    }

    let mut best_y = y0.clone();
    let mut best_t = sdp.margin(&y0);
    let mut upper = T::lit(f64::INFINITY);
    let mut rp_norm = T::lit(f64::INFINITY);
    let mut outcome = Outcome::IterationLimit;
    let mut iterations = 0;

    for iter in 0..settings.max_iterations {
        iterations = iter;
        let y = z.rows(0, sdp.dim).into_owned();
        let t_exact = sdp.margin(&y);
        if t_exact > best_t {
            best_t = t_exact;
            best_y = y;
        }

        let rp = &b - sdp.apply(&x);
        let c_all: Vec<_> = sdp.blocks.iter().map(|bl| bl.c.clone()).collect();
        let slack_now = sdp.slack(&z);
        let rd: Vec<DMatrix<T>> = slack_now.iter().zip(&s).map(|(a, b)| a - b).collect();
        let rd_norm = rd.iter().fold(T::zero(), |acc, r| acc + r.norm_squared()).sqrt();
        rp_norm = rp.norm();
        let primal_obj = inner(&c_all, &x);
        let dual_obj = z[sdp.dim];
        upper = primal_obj;
        let mu = inner(&x, &s) / n_total;
        if !mu.is_finite() || !primal_obj.is_finite() {
            outcome = Outcome::Stalled;
            break;
        }
        let gap = (primal_obj - dual_obj).abs();
        if rp_norm <= tol
            && rd_norm <= tol * (T::one() + c_norm)
            && gap <= tol * (T::one() + primal_obj.abs() + dual_obj.abs())
        {
            outcome = Outcome::Converged;
            break;
        }

        let mut s_inv = Vec::with_capacity(s.len());
        for sb in &s {
            match cholesky(sb) {
                Some(ch) => s_inv.push(sym(ch.inverse())),
                None => {
                    outcome = Outcome::Stalled;
                    break;
                }
            }
        }
        if s_inv.len() != s.len() {
            break;
        }

        // Schur complement M_kj = Σ_b tr(A_k X A_j S⁻¹)
        let mut schur = DMatrix::zeros(m, m);
        for (bi, bl) in sdp.blocks.iter().enumerate() {
            let row: Vec<Option<DMatrix<T>>> =
                bl.a.iter()
                    .map(|a| a.as_ref().map(|a| &x[bi] * a * &s_inv[bi]))
                    .collect();
            for (k, ak) in bl.a.iter().enumerate() {
                let Some(ak) = ak else { continue };
                for (j, w) in row.iter().enumerate().skip(k) {
                    let Some(w) = w else { continue };
                    schur[(k, j)] += ak.dot(&w.transpose());
                }
            }
        }
        for k in 0..m {
            for j in 0..k {
                schur[(k, j)] = schur[(j, k)];
            }
        }
        let Some(schur_chol) = cholesky(&schur) else {
            outcome = Outcome::Stalled;
            break;
        };
        let diag: DVector<T> = schur_chol.l_dirty().diagonal();
        let (dmax, dmin) = (diag.max(), diag.min());
        if !(dmin > T::zero()) || (dmax / dmin).powi(2) > cond_limit {
            outcome = Outcome::Stalled;
            break;
        }

        let direction = |sigma_mu: T| -> (DVector<T>, Vec<DMatrix<T>>, Vec<DMatrix<T>>) {
            // rhs_k = rp_k − tr(A_k (σμS⁻¹ − X − X R_d S⁻¹))
            let inner_terms: Vec<DMatrix<T>> = (0..s.len())
                .map(|bi| &s_inv[bi] * sigma_mu - &x[bi] - &x[bi] * &rd[bi] * &s_inv[bi])
                .collect();
            let rhs = &rp - sdp.apply(&inner_terms);
            let dz = schur_chol.solve(&rhs);
            let ds: Vec<DMatrix<T>> = sdp
                .blocks
                .iter()
                .enumerate()
                .map(|(bi, bl)| {
                    let mut d = rd[bi].clone();
                    for (k, a) in bl.a.iter().enumerate() {
                        if let Some(a) = a {
                            d -= a * dz[k];
                        }
                    }
                    d
                })
                .collect();
            let dx: Vec<DMatrix<T>> = (0..s.len())
                .map(|bi| sym(&s_inv[bi] * sigma_mu - &x[bi] - &x[bi] * &ds[bi] * &s_inv[bi]))
                .collect();
            (dz, dx, ds)
        };
        let steps = |dx: &[DMatrix<T>], ds: &[DMatrix<T>], frac: T| -> Option<(T, T)> {
            let mut ap = T::one();
            let mut ad = T::one();
            for bi in 0..s.len() {
                ap = ap.min(max_step(&x[bi], &dx[bi], frac)?);
                ad = ad.min(max_step(&s[bi], &ds[bi], frac)?);
            }
            Some((ap, ad))
        };

        let (_, dx_aff, ds_aff) = direction(T::zero());
        let Some((ap_aff, ad_aff)) = steps(&dx_aff, &ds_aff, T::one()) else {
            outcome = Outcome::Stalled;
            break;
        };
        let x_aff: Vec<_> = x.iter().zip(&dx_aff).map(|(a, d)| a + d * ap_aff).collect();
        let s_aff: Vec<_> = s.iter().zip(&ds_aff).map(|(a, d)| a + d * ad_aff).collect();
        let mu_aff = inner(&x_aff, &s_aff) / n_total;
        let sigma = (mu_aff / mu).max(T::zero()).min(T::one()).powi(3);

        let (dz, dx, ds) = direction(sigma * mu);
        let Some((ap, ad)) = steps(&dx, &ds, fraction) else {
            outcome = Outcome::Stalled;
            break;
        };
        for bi in 0..x.len() {
            x[bi] += &dx[bi] * ap;
            s[bi] += &ds[bi] * ad;
        }
        z += dz * ad;
        if z.iter().any(|v| !v.is_finite()) {
            outcome = Outcome::Stalled;
            break;
        }
        iterations = iter + 1;
    }

    let y = z.rows(0, sdp.dim).into_owned();
    let t_exact = sdp.margin(&y);
    if t_exact > best_t || !best_t.is_finite() {
        best_t = t_exact;
        best_y = y;
    }
    IpmResult {
        y: best_y,
        t: best_t,
        upper,
        primal_residual: rp_norm,
        iterations,
        outcome,
    }
}
