//! Sparse direct solves and the condition number `sigma_max(A) / lambda_min(sym A)`.

use crate::sparse::{dot, norm2, CsrMatrix};
use faer::prelude::*;
use faer::Side;
use nalgebra::SymmetricEigen;
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_TOLERANCE: f64 = 1e-12;
/// Above this size the condition number uses Lanczos instead of dense eigensolvers.
pub const DENSE_LIMIT: usize = 600;
const REFINEMENT_STEPS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("matrix is not square: {0} x {1}")]
    NotSquare(usize, usize),
    #[error("sparse LU factorization failed: {0}")]
    Factorization(String),
    #[error("relative residual {last:.3e} above tolerance {tol:.1e}; history {history:?}")]
    NotConverged { tol: f64, last: f64, history: Vec<f64> },
    #[error("symmetric part is not positive definite (lambda_min = {0:.6e})")]
    IndefiniteSymmetricPart(f64),
    #[error("Lanczos iteration did not converge")]
    Lanczos,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub solution: Vec<f64>,
    pub relative_residual: f64,
    /// Residual after the factorization solve and after each refinement step.
    pub residual_history: Vec<f64>,
    pub refinement_steps: usize,
}

fn to_col(b: &[f64]) -> Mat<f64> {
    Mat::from_fn(b.len(), 1, |i, _| b[i])
}

fn from_col(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    let r = a.residual_compensated(x, b);
    let bn = norm2(b);
    let rn = norm2(&r);
    (r, if bn == 0.0 { rn } else { rn / bn })
}

/// Sparse LU with partial pivoting followed by iterative refinement.
pub fn solve(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<SolveReport, SolverError> {
    if a.nrows != a.ncols {
        return Err(SolverError::NotSquare(a.nrows, a.ncols));
    }
    let lu = a.to_faer().sp_lu().map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
    let mut x = from_col(&lu.solve(to_col(b)));
    let (mut r, mut rel) = relative_residual(a, &x, b);
    let mut history = vec![rel];
    let mut steps = 0;
    while !(rel <= tol) && steps < REFINEMENT_STEPS {
        if !rel.is_finite() {
            break;
        }
        let dx = from_col(&lu.solve(to_col(&r)));
        x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        (r, rel) = relative_residual(a, &x, b);
        history.push(rel);
        steps += 1;
    }
    if !(rel <= tol) {
        return Err(SolverError::NotConverged {
            tol,
            last: rel,
            history,
        });
    }
    Ok(SolveReport {
        solution: x,
        relative_residual: rel,
        residual_history: history,
        refinement_steps: steps,
    })
}

/// Number of eigenvalues of the symmetric tridiagonal `(alpha, beta)` below `x` (Sturm count).
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..alpha.len() {
        let b2 = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] };
        d = alpha[i] - x - b2 / d;
        if d == 0.0 {
            d = -f64::EPSILON * (alpha[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Largest eigenvalue of a symmetric tridiagonal matrix by bisection.
fn tridiagonal_max(alpha: &[f64], beta: &[f64]) -> f64 {
    let m = alpha.len();
    let radius = |i: usize| {
        (if i > 0 { beta[i - 1].abs() } else { 0.0 }) + (if i + 1 < m { beta[i].abs() } else { 0.0 })
    };
    let mut lo = (0..m).map(|i| alpha[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..m).map(|i| alpha[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    while hi - lo > 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(alpha, beta, mid) == m {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Last component of the unit eigenvector for `theta` by one step of inverse iteration.
fn tridiagonal_last_component(alpha: &[f64], beta: &[f64], theta: f64) -> f64 {
    let m = alpha.len();
    if m == 1 {
        return 1.0;
    }
    // Gaussian elimination with partial pivoting on T - theta I; rows keep up to two superdiagonals.
    let scale = alpha.iter().chain(beta).fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * scale;
    let mut rows: Vec<[f64; 3]> = Vec::with_capacity(m);
    let mut rhs = vec![1.0; m];
    let mut cur = [alpha[0] - theta, beta[0], 0.0];
    for i in 0..m - 1 {
        let below = [beta[i], alpha[i + 1] - theta, if i + 2 < m { beta[i + 1] } else { 0.0 }];
        // Both rows are stored as [col i, col i+1, col i+2].
        let (mut top, mut bottom) = (cur, below);
        let (mut r_top, mut r_bottom) = (rhs[i], rhs[i + 1]);
        if bottom[0].abs() > top[0].abs() {
            std::mem::swap(&mut top, &mut bottom);
            std::mem::swap(&mut r_top, &mut r_bottom);
        }
        if top[0].abs() < tiny {
            top[0] = tiny;
        }
        let f = bottom[0] / top[0];
        rows.push(top);
        rhs[i] = r_top;
        cur = [bottom[1] - f * top[1], bottom[2] - f * top[2], 0.0];
        rhs[i + 1] = r_bottom - f * r_top;
    }
    if cur[0].abs() < tiny {
        cur[0] = tiny;
    }
    rows.push(cur);
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut v = rhs[i];
        if i + 1 < m {
            v -= rows[i][1] * y[i + 1];
        }
        if i + 2 < m {
            v -= rows[i][2] * y[i + 2];
        }
        y[i] = v / rows[i][0];
    }
    y[m - 1] / norm2(&y)
}

/// Largest eigenvalue of a symmetric operator by Lanczos with full reorthogonalization.
pub fn lanczos_max(n: usize, apply: impl Fn(&[f64]) -> Vec<f64>, rel_tol: f64) -> Result<f64, SolverError> {
    let max_steps = n.min(600);
    // Deterministic start vector with components in every direction.
    let mut q: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    let nq = norm2(&q);
    q.iter_mut().for_each(|v| *v /= nq);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut theta = f64::NAN;
    for step in 0..max_steps {
        let mut w = apply(&basis[step]);
        alphas.push(dot(&w, &basis[step]));
        for _ in 0..2 {
            for v in &basis {
                let c = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
            }
        }
        let beta = norm2(&w);
        theta = tridiagonal_max(&alphas, &betas);
        let bound = beta * tridiagonal_last_component(&alphas, &betas, theta).abs();
        if bound <= rel_tol * theta.abs() || beta <= 1e-14 * theta.abs().max(1e-300) || alphas.len() == n {
            return Ok(theta);
        }
        betas.push(beta);
        basis.push(w.iter().map(|v| v / beta).collect());
    }
    if theta.is_finite() {
        Ok(theta)
    } else {
        Err(SolverError::Lanczos)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConditionReport {
    pub kappa: f64,
    pub sigma_max: f64,
    pub lambda_min_sym: f64,
}

/// `sigma_max(A)` and `lambda_min((A + A^T)/2)` without requiring definiteness.
/// `kappa` is the plain ratio and is negative when the symmetric part is indefinite.
pub fn condition_estimate(a: &CsrMatrix) -> Result<ConditionReport, SolverError> {
    if a.nrows != a.ncols {
        return Err(SolverError::NotSquare(a.nrows, a.ncols));
    }
    let n = a.nrows;
    let sym = a.symmetric_part();
    let (sigma_max, lambda_min) = if n <= DENSE_LIMIT {
        let sigma = a.to_dense().singular_values().max();
        let lmin = SymmetricEigen::new(sym.to_dense()).eigenvalues.min();
        (sigma, lmin)
    } else {
        let at = a.transpose();
        let sigma_sq = lanczos_max(n, |x| at.matvec(&a.matvec(x)), 1e-10)?;
        let lmin = match sym.to_faer().sp_cholesky(Side::Lower) {
            // Shift-and-invert at zero: the largest eigenvalue of S^-1 is 1 / lambda_min.
            Ok(llt) => 1.0 / lanczos_max(n, |x| from_col(&llt.solve(to_col(x))), 1e-10)?,
            // Not positive definite: the bottom of the spectrum is an exterior eigenvalue.
            Err(_) => -lanczos_max(n, |x| sym.matvec(x).iter().map(|v| -v).collect(), 1e-8)?,
        };
        (sigma_sq.sqrt(), lmin)
    };
    Ok(ConditionReport {
        kappa: sigma_max / lambda_min,
        sigma_max,
        lambda_min_sym: lambda_min,
    })
}

/// `kappa(A) = sigma_max(A) / lambda_min((A + A^T)/2)`; fails unless the symmetric part is positive definite.
pub fn condition_number(a: &CsrMatrix) -> Result<ConditionReport, SolverError> {
    let report = condition_estimate(a)?;
    if !(report.lambda_min_sym > 0.0) {
        return Err(SolverError::IndefiniteSymmetricPart(report.lambda_min_sym));
    }
    Ok(report)
}
