//! Manufactured problems, error norms, convergence fits and a Galerkin reference solver.

use crate::assembly::{
    apply_dirichlet, assemble, assemble_with, ElasticityProblem, EllipticProblem, ElementSystem, Problem,
    ReferenceData, SparseSystem, AssemblyError,
};
use crate::mesh::{Mesh, MeshError};
use crate::poly::Poly2;
use crate::refelem::{Point, Region, SchemeOrder};
use crate::solver::{condition_estimate, solve, ConditionReport, SolveReport, SolverError};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

pub const EXAMPLE1_DOMAIN: [f64; 4] = [-1.0, 1.0, -1.0, 1.0];
pub const EXAMPLE2_DOMAIN: [f64; 4] = [0.0, 1.0, 0.0, 1.0];

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("problem has no exact solution")]
    MissingExact,
    #[error("need at least {0} mesh levels, got {1}")]
    TooFewLevels(usize, usize),
    #[error("solve failed at n = {n}: {source}; completed rows: {partial:?}")]
    Partial {
        n: usize,
        source: Box<VerifyError>,
        partial: Vec<ConvergenceRow>,
    },
}

/// `u = exp(x + 2y)` on (-1,1)^2 with identity diffusion.
pub fn example1() -> EllipticProblem {
    let u = |p: Point| (p[0] + 2.0 * p[1]).exp();
    EllipticProblem::constant(
        [[1.0, 0.0], [0.0, 1.0]],
        Arc::new(move |p| -5.0 * u(p)),
        Arc::new(u),
    )
    .with_exact(Arc::new(u), Arc::new(move |p| [u(p), 2.0 * u(p)]))
}

/// Elasticity with lambda = 1, mu = 2 and
/// `u = (sin(pi x) sin(pi y), 16 x (x-1) y (y-1))` on the unit square.
pub fn example2() -> ElasticityProblem {
    let (lambda, mu) = (1.0, 2.0);
    let p = |t: f64| t * t - t;
    let dp = |t: f64| 2.0 * t - 1.0;
    ElasticityProblem {
        lambda,
        mu,
        forcing: Arc::new(move |x: Point| {
            let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
            let (cx, cy) = ((PI * x[0]).cos(), (PI * x[1]).cos());
            let pi2 = PI * PI;
            // -(mu lap u + (lambda + mu) grad div u)
            let lap1 = -2.0 * pi2 * sx * sy;
            let lap2 = 32.0 * (p(x[0]) + p(x[1]));
            let ddiv_x = -pi2 * sx * sy + 16.0 * dp(x[0]) * dp(x[1]);
            let ddiv_y = pi2 * cx * cy + 32.0 * p(x[0]);
            [-(mu * lap1 + (lambda + mu) * ddiv_x), -(mu * lap2 + (lambda + mu) * ddiv_y)]
        }),
        dirichlet: Arc::new(|_| [0.0, 0.0]),
        exact: Some(Arc::new(move |x: Point| {
            [(PI * x[0]).sin() * (PI * x[1]).sin(), 16.0 * p(x[0]) * p(x[1])]
        })),
        exact_gradient: Some(Arc::new(move |x: Point| {
            let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
            let (cx, cy) = ((PI * x[0]).cos(), (PI * x[1]).cos());
            [
                [PI * cx * sy, PI * sx * cy],
                [16.0 * dp(x[0]) * p(x[1]), 16.0 * p(x[0]) * dp(x[1])],
            ]
        })),
    }
}

/// Scalar problem whose exact solution is the polynomial `u`, with constant diffusion.
pub fn polynomial_problem(u: Poly2, diffusion: [[f64; 2]; 2]) -> EllipticProblem {
    let uxx = u.dx().dx();
    let uxy = u.dx().dy();
    let uyy = u.dy().dy();
    let (ux, uy) = (u.dx(), u.dy());
    let d = diffusion;
    let f = move |p: Point| {
        let (x, y) = (p[0], p[1]);
        -(d[0][0] * uxx.eval(x, y) + (d[0][1] + d[1][0]) * uxy.eval(x, y) + d[1][1] * uyy.eval(x, y))
    };
    EllipticProblem::constant(diffusion, Arc::new(f), Arc::new(move |p| u.eval(p[0], p[1])))
        .with_exact(Arc::new(move |p| u.eval(p[0], p[1])), Arc::new(move |p| [ux.eval(p[0], p[1]), uy.eval(p[0], p[1])]))
}

/// Elasticity problem with a polynomial displacement field.
pub fn polynomial_elasticity(u: [Poly2; 2], lambda: f64, mu: f64) -> ElasticityProblem {
    let d = |q: Poly2| [q.dx(), q.dy()];
    let [g1, g2] = [d(u[0]), d(u[1])];
    let h = |q: Poly2| [q.dx().dx(), q.dx().dy(), q.dy().dy()];
    let [h1, h2] = [h(u[0]), h(u[1])];
    ElasticityProblem {
        lambda,
        mu,
        forcing: Arc::new(move |p: Point| {
            let e = |q: &Poly2| q.eval(p[0], p[1]);
            let lap1 = e(&h1[0]) + e(&h1[2]);
            let lap2 = e(&h2[0]) + e(&h2[2]);
            let ddiv_x = e(&h1[0]) + e(&h2[1]);
            let ddiv_y = e(&h1[1]) + e(&h2[2]);
            [-(mu * lap1 + (lambda + mu) * ddiv_x), -(mu * lap2 + (lambda + mu) * ddiv_y)]
        }),
        dirichlet: Arc::new(move |p| [u[0].eval(p[0], p[1]), u[1].eval(p[0], p[1])]),
        exact: Some(Arc::new(move |p| [u[0].eval(p[0], p[1]), u[1].eval(p[0], p[1])])),
        exact_gradient: Some(Arc::new(move |p| {
            [
                [g1[0].eval(p[0], p[1]), g1[1].eval(p[0], p[1])],
                [g2[0].eval(p[0], p[1]), g2[1].eval(p[0], p[1])],
            ]
        })),
    }
}

/// Discrete solution with the system it solves.
#[derive(Clone, Debug)]
pub struct Solution {
    pub coefficients: Vec<f64>,
    pub system: SparseSystem,
    pub report: SolveReport,
}

/// Assembles the two-layer system, applies the Dirichlet data and solves.
pub fn solve_problem(mesh: &Mesh, order: SchemeOrder, problem: &dyn Problem, tol: f64) -> Result<Solution, VerifyError> {
    let system = assemble(mesh, order, problem)?;
    finish_solve(system, problem, tol)
}

fn finish_solve(system: SparseSystem, problem: &dyn Problem, tol: f64) -> Result<Solution, VerifyError> {
    let values = system.boundary_values(problem);
    let system = apply_dirichlet(system, &values)?;
    let report = solve(&system.matrix, &system.rhs, tol)?;
    Ok(Solution {
        coefficients: report.solution.clone(),
        system,
        report,
    })
}

/// Galerkin solve with the same trial space and DOF numbering.
pub fn solve_fem(mesh: &Mesh, order: SchemeOrder, problem: &dyn Problem, tol: f64) -> Result<Solution, VerifyError> {
    finish_solve(fem_oracle(mesh, order, problem)?, problem, tol)
}

/// Symmetric Galerkin stiffness matrix and load vector.
pub fn fem_oracle(mesh: &Mesh, order: SchemeOrder, problem: &dyn Problem) -> Result<SparseSystem, AssemblyError> {
    assemble_with(mesh, order, problem, |t| {
        let map = mesh.affine_map(t);
        if map.det <= 0.0 {
            return Err(AssemblyError::InvertedTriangle(t, map.det));
        }
        let m = problem.components();
        let nk = order.local_dofs();
        let size = nk * m;
        let mut matrix = vec![0.0; size * size];
        let mut load = vec![0.0; size];
        for q in &ReferenceData::matrix(order).regions[Region::Q4.index()].volume {
            let c = problem.tensor(map.apply(q.point));
            let w = q.weight * map.det;
            let g: Vec<[f64; 2]> = q.trial.gradients.iter().map(|&g| map.gradient(g)).collect();
            for r in 0..nk {
                for ci in 0..m {
                    for s in 0..nk {
                        for d in 0..m {
                            let mut v = 0.0;
                            for j in 0..2 {
                                for l in 0..2 {
                                    v += c[ci][j][d][l] * g[s][l] * g[r][j];
                                }
                            }
                            matrix[(r * m + ci) * size + s * m + d] += w * v;
                        }
                    }
                }
            }
        }
        for q in &ReferenceData::load(order).regions[Region::Q4.index()].volume {
            let f = problem.forcing(map.apply(q.point));
            let w = q.weight * map.det;
            for r in 0..nk {
                for ci in 0..m {
                    load[r * m + ci] += w * f[ci] * q.trial.values[r];
                }
            }
        }
        Ok(ElementSystem { size, matrix, load })
    })
}

/// Nodal interpolant coefficients of the exact solution.
pub fn interpolate(system: &SparseSystem, problem: &dyn Problem) -> Result<Vec<f64>, VerifyError> {
    let m = system.components;
    let mut out = vec![0.0; system.size()];
    for (node, &p) in system.dofs.coordinates.iter().enumerate() {
        let u = problem.exact(p).ok_or(VerifyError::MissingExact)?;
        for c in 0..m {
            out[node * m + c] = u[c];
        }
    }
    Ok(out)
}

/// `(||u - u_h||_0, |u - u_h|_1)` with degree 2k+4 quadrature.
pub fn error_norms(
    mesh: &Mesh,
    system: &SparseSystem,
    coefficients: &[f64],
    problem: &dyn Problem,
) -> Result<(f64, f64), VerifyError> {
    let order = system.dofs.order;
    let m = system.components;
    let data = &ReferenceData::load(order).regions[Region::Q4.index()].volume;
    let parts: Vec<Result<(f64, f64), VerifyError>> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let map = mesh.affine_map(t);
            let dofs = &system.dofs.triangle_dofs[t];
            let (mut l2, mut h1) = (0.0, 0.0);
            for q in data {
                let x = map.apply(q.point);
                let u = problem.exact(x).ok_or(VerifyError::MissingExact)?;
                let gu = problem.exact_gradient(x).ok_or(VerifyError::MissingExact)?;
                let w = q.weight * map.det;
                for c in 0..m {
                    let mut uh = 0.0;
                    let mut guh = [0.0; 2];
                    for (i, &g) in dofs.iter().enumerate() {
                        let coef = coefficients[g * m + c];
                        uh += coef * q.trial.values[i];
                        let gp = map.gradient(q.trial.gradients[i]);
                        guh[0] += coef * gp[0];
                        guh[1] += coef * gp[1];
                    }
                    l2 += w * (u[c] - uh).powi(2);
                    h1 += w * ((gu[c][0] - guh[0]).powi(2) + (gu[c][1] - guh[1]).powi(2));
                }
            }
            Ok((l2, h1))
        })
        .collect();
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for p in parts {
        let (a, b) = p?;
        l2 += a;
        h1 += b;
    }
    Ok((l2.sqrt(), h1.sqrt()))
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub l2_error: f64,
    pub h1_error: f64,
    pub interpolation_l2_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceTable {
    pub order: usize,
    pub rows: Vec<ConvergenceRow>,
    pub l2_order: f64,
    pub h1_order: f64,
}

impl ConvergenceTable {
    /// `(log10 N, log10 error)` pairs for plotting.
    pub fn loglog(&self) -> Vec<[f64; 3]> {
        self.rows
            .iter()
            .map(|r| [(r.n as f64).log10(), r.l2_error.log10(), r.h1_error.log10()])
            .collect()
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Solves on structured `n x n` meshes and fits orders over all levels.
pub fn convergence_study(
    problem: &dyn Problem,
    domain: [f64; 4],
    order: SchemeOrder,
    levels: &[usize],
    tol: f64,
) -> Result<ConvergenceTable, VerifyError> {
    if levels.len() < 3 {
        return Err(VerifyError::TooFewLevels(3, levels.len()));
    }
    let mut rows = Vec::new();
    for &n in levels {
        let row = (|| {
            let mesh = Mesh::build_structured(n, domain)?;
            let sol = solve_problem(&mesh, order, problem, tol)?;
            let (l2, h1) = error_norms(&mesh, &sol.system, &sol.coefficients, problem)?;
            let interp = interpolate(&sol.system, problem)?;
            let (il2, _) = error_norms(&mesh, &sol.system, &interp, problem)?;
            Ok::<_, VerifyError>(ConvergenceRow {
                n,
                h: mesh.h(),
                l2_error: l2,
                h1_error: h1,
                interpolation_l2_error: il2,
            })
        })();
        match row {
            Ok(r) => rows.push(r),
            Err(e) => {
                return Err(VerifyError::Partial {
                    n,
                    source: Box::new(e),
                    partial: rows,
                })
            }
        }
    }
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let l2: Vec<f64> = rows.iter().map(|r| r.l2_error).collect();
    let h1: Vec<f64> = rows.iter().map(|r| r.h1_error).collect();
    Ok(ConvergenceTable {
        order: order.k(),
        l2_order: loglog_slope(&h, &l2),
        h1_order: loglog_slope(&h, &h1),
        rows,
    })
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Fve2l,
    Fem,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionRow {
    pub scheme: Scheme,
    pub n: usize,
    pub size: usize,
    pub sigma_max: f64,
    pub lambda_min_sym: f64,
    /// Negative when the symmetric part is indefinite.
    pub kappa: f64,
}

/// Condition numbers of the Dirichlet-reduced Example 1 matrices on `n x n` meshes.
pub fn condition_study(order: SchemeOrder, levels: &[usize]) -> Result<Vec<ConditionRow>, VerifyError> {
    let problem = example1();
    let mut rows = Vec::new();
    for &n in levels {
        let mesh = Mesh::build_structured(n, EXAMPLE1_DOMAIN)?;
        let fve = assemble(&mesh, order, &problem)?;
        let keep = fve.interior_rows();
        let fem = fem_oracle(&mesh, order, &problem)?;
        for (scheme, system) in [(Scheme::Fve2l, &fve), (Scheme::Fem, &fem)] {
            let ConditionReport {
                kappa,
                sigma_max,
                lambda_min_sym,
            } = condition_estimate(&system.matrix.submatrix(&keep))?;
            rows.push(ConditionRow {
                scheme,
                n,
                size: keep.len(),
                sigma_max,
                lambda_min_sym,
                kappa,
            });
        }
    }
    Ok(rows)
}

/// Log-log slope of kappa against n for one scheme; `None` if any kappa is not positive.
pub fn kappa_slope(rows: &[ConditionRow], scheme: Scheme) -> Option<f64> {
    let picked: Vec<&ConditionRow> = rows.iter().filter(|r| r.scheme == scheme).collect();
    if picked.len() < 2 || picked.iter().any(|r| !(r.kappa > 0.0)) {
        return None;
    }
    let n: Vec<f64> = picked.iter().map(|r| r.n as f64).collect();
    let k: Vec<f64> = picked.iter().map(|r| r.kappa).collect();
    Some(loglog_slope(&n, &k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example1_values() {
        let p = example1();
        assert_eq!((p.forcing)([0.0, 0.0]), -5.0);
        assert!(((p.dirichlet)([1.0, 1.0]) - 3f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn example2_center_and_boundary() {
        let p = example2();
        let u = p.exact([0.5, 0.5]).unwrap();
        assert!((u[1] - 1.0).abs() < 1e-15);
        for &b in &[[0.0, 0.3], [1.0, 0.7], [0.4, 0.0], [0.2, 1.0]] {
            let u = p.exact(b).unwrap();
            assert!(u[0].abs() < 1e-15 && u[1].abs() < 1e-15);
        }
    }

    #[test]
    fn slope_fit() {
        let h = [0.5, 0.25, 0.125];
        let e: Vec<f64> = h.iter().map(|v: &f64| 3.0 * v.powi(4)).collect();
        assert!((loglog_slope(&h, &e) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn fem_is_symmetric() {
        let mesh = Mesh::build_structured(3, EXAMPLE1_DOMAIN).unwrap();
        for order in SchemeOrder::ALL {
            let s = fem_oracle(&mesh, order, &example1()).unwrap();
            let d = s.matrix.to_dense();
            assert!((&d - d.transpose()).amax() < 1e-13 * d.amax());
        }
    }
}
