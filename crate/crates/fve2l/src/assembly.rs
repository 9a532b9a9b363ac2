//! Petrov-Galerkin assembly of the two-layer dual schemes.

use crate::mesh::{AffineMap, DofMap, Mesh};
use crate::quadrature::{region_rule, segment_rule};
use crate::refelem::{dual_region, BasisSet, Point, Region, SchemeOrder, TestEval, TrialEval};
use crate::sparse::CsrMatrix;
use rayon::prelude::*;
use std::sync::{Arc, OnceLock};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("triangle {0} has non-positive Jacobian determinant {1}")]
    InvertedTriangle(usize, f64),
    #[error("Dirichlet value requested at DOF {0}, which is not on the boundary")]
    InteriorDirichlet(usize),
    #[error("DOF map inconsistency: {0}")]
    DofMap(String),
    #[error("ellipticity violated at ({0}, {1}): eigenvalues of the diffusion tensor outside the declared bounds")]
    Ellipticity(f64, f64),
}

/// Fourth-order coefficient tensor `C[c][j][d][l]`: flux component `(c, j)`
/// is `sum_{d,l} C[c][j][d][l] * du_d/dx_l`.
pub type Tensor = [[[[f64; 2]; 2]; 2]; 2];

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(Point) -> [[f64; 2]; 2] + Send + Sync>;

/// Common interface of the scalar and elasticity problems.
pub trait Problem: Send + Sync {
    /// 1 for scalar problems, 2 for elasticity.
    fn components(&self) -> usize;
    fn tensor(&self, x: Point) -> Tensor;
    /// `sum_j dC[c][j][d][l]/dx_j`, indexed `[c][d][l]`.
    fn tensor_divergence(&self, _x: Point) -> [[[f64; 2]; 2]; 2] {
        [[[0.0; 2]; 2]; 2]
    }
    fn forcing(&self, x: Point) -> [f64; 2];
    fn dirichlet(&self, x: Point) -> [f64; 2];
    fn exact(&self, _x: Point) -> Option<[f64; 2]> {
        None
    }
    /// Row `c` holds the gradient of component `c`.
    fn exact_gradient(&self, _x: Point) -> Option<[[f64; 2]; 2]> {
        None
    }
}

/// `-div(D grad u) = f` with Dirichlet data.
#[derive(Clone)]
pub struct EllipticProblem {
    pub diffusion: MatrixField,
    /// Partial derivatives of the diffusion tensor in x and y, if it varies.
    pub diffusion_gradient: Option<Arc<dyn Fn(Point) -> [[[f64; 2]; 2]; 2] + Send + Sync>>,
    /// Ellipticity bounds (gamma_1, gamma_2).
    pub bounds: (f64, f64),
    pub forcing: ScalarField,
    pub dirichlet: ScalarField,
    pub exact: Option<ScalarField>,
    pub exact_gradient: Option<VectorField>,
}

impl EllipticProblem {
    /// Constant diffusion tensor.
    pub fn constant(diffusion: [[f64; 2]; 2], forcing: ScalarField, dirichlet: ScalarField) -> Self {
        let (lo, hi) = sym_eigenvalues(diffusion);
        EllipticProblem {
            diffusion: Arc::new(move |_| diffusion),
            diffusion_gradient: None,
            bounds: (lo, hi),
            forcing,
            dirichlet,
            exact: None,
            exact_gradient: None,
        }
    }

    pub fn with_exact(mut self, u: ScalarField, grad: VectorField) -> Self {
        self.exact = Some(u);
        self.exact_gradient = Some(grad);
        self
    }

    /// Checks the ellipticity bounds at the given points.
    pub fn check_ellipticity(&self, points: &[Point]) -> Result<(), AssemblyError> {
        let tol = 1e-12 * self.bounds.1.abs().max(1.0);
        for &p in points {
            let (lo, hi) = sym_eigenvalues((self.diffusion)(p));
            if lo < self.bounds.0 - tol || hi > self.bounds.1 + tol {
                return Err(AssemblyError::Ellipticity(p[0], p[1]));
            }
        }
        Ok(())
    }
}

fn sym_eigenvalues(m: [[f64; 2]; 2]) -> (f64, f64) {
    let a = m[0][0];
    let d = m[1][1];
    let b = 0.5 * (m[0][1] + m[1][0]);
    let mean = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean - r, mean + r)
}

impl Problem for EllipticProblem {
    fn components(&self) -> usize {
        1
    }

    fn tensor(&self, x: Point) -> Tensor {
        let d = (self.diffusion)(x);
        let mut c = [[[[0.0; 2]; 2]; 2]; 2];
        for j in 0..2 {
            for l in 0..2 {
                c[0][j][0][l] = d[j][l];
            }
        }
        c
    }

    fn tensor_divergence(&self, x: Point) -> [[[f64; 2]; 2]; 2] {
        let mut out = [[[0.0; 2]; 2]; 2];
        if let Some(g) = &self.diffusion_gradient {
            let dd = g(x);
            for l in 0..2 {
                out[0][0][l] = dd[0][0][l] + dd[1][1][l];
            }
        }
        out
    }

    fn forcing(&self, x: Point) -> [f64; 2] {
        [(self.forcing)(x), 0.0]
    }

    fn dirichlet(&self, x: Point) -> [f64; 2] {
        [(self.dirichlet)(x), 0.0]
    }

    fn exact(&self, x: Point) -> Option<[f64; 2]> {
        self.exact.as_ref().map(|u| [u(x), 0.0])
    }

    fn exact_gradient(&self, x: Point) -> Option<[[f64; 2]; 2]> {
        self.exact_gradient.as_ref().map(|g| [g(x), [0.0, 0.0]])
    }
}

/// Isotropic linear elasticity `-div sigma(u) = f`.
#[derive(Clone)]
pub struct ElasticityProblem {
    pub lambda: f64,
    pub mu: f64,
    pub forcing: VectorField,
    pub dirichlet: VectorField,
    pub exact: Option<VectorField>,
    pub exact_gradient: Option<MatrixField>,
}

impl Problem for ElasticityProblem {
    fn components(&self) -> usize {
        2
    }

    fn tensor(&self, _x: Point) -> Tensor {
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let mut c = [[[[0.0; 2]; 2]; 2]; 2];
        for (ci, cc) in c.iter_mut().enumerate() {
            for (j, cj) in cc.iter_mut().enumerate() {
                for (d, cd) in cj.iter_mut().enumerate() {
                    for (l, v) in cd.iter_mut().enumerate() {
                        *v = self.mu * (delta(ci, d) * delta(j, l) + delta(ci, l) * delta(j, d))
                            + self.lambda * delta(ci, j) * delta(d, l);
                    }
                }
            }
        }
        c
    }

    fn forcing(&self, x: Point) -> [f64; 2] {
        (self.forcing)(x)
    }

    fn dirichlet(&self, x: Point) -> [f64; 2] {
        (self.dirichlet)(x)
    }

    fn exact(&self, x: Point) -> Option<[f64; 2]> {
        self.exact.as_ref().map(|u| u(x))
    }

    fn exact_gradient(&self, x: Point) -> Option<[[f64; 2]; 2]> {
        self.exact_gradient.as_ref().map(|g| g(x))
    }
}

/// Quadrature point on the reference triangle with basis data.
#[derive(Clone, Debug)]
pub struct RefPoint {
    pub point: Point,
    pub weight: f64,
    pub trial: TrialEval,
    pub test: TestEval,
}

/// Straight piece of a region boundary, counterclockwise for that region.
#[derive(Clone, Debug)]
pub struct RefSegment {
    pub start: Point,
    pub end: Point,
    /// Weights integrate over the parameter interval [0, 1].
    pub points: Vec<RefPoint>,
}

#[derive(Clone, Debug)]
pub struct RegionData {
    pub region: Region,
    pub volume: Vec<RefPoint>,
    /// Flux segments: interior midlines for Q1..Q3, the triangle boundary for Q4.
    pub segments: Vec<RefSegment>,
}

/// Precomputed basis values at quadrature points of every dual region.
#[derive(Clone, Debug)]
pub struct ReferenceData {
    pub order: SchemeOrder,
    pub degree: usize,
    pub regions: [RegionData; 4],
}

impl ReferenceData {
    pub fn new(order: SchemeOrder, degree: usize) -> Self {
        let basis = BasisSet::get(order);
        let rule_seg = segment_rule(degree).expect("supported degree");
        let make_point = |region: Region, p: Point, w: f64| RefPoint {
            point: p,
            weight: w,
            trial: basis.trial_at(p),
            test: basis.test_on_region(region, p),
        };
        let regions = Region::ALL.map(|region| {
            let rule = region_rule(region, degree).expect("supported degree");
            let volume = rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(&p, &w)| make_point(region, p, w))
                .collect();
            let dual = dual_region(region);
            let pieces = if region == Region::Q4 {
                dual.boundary_segments()
            } else {
                dual.interior_segments()
            };
            let segments = pieces
                .into_iter()
                .map(|(a, b)| RefSegment {
                    start: a,
                    end: b,
                    points: rule_seg
                        .points
                        .iter()
                        .zip(&rule_seg.weights)
                        .map(|(&t, &w)| make_point(region, [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], w))
                        .collect(),
                })
                .collect();
            RegionData {
                region,
                volume,
                segments,
            }
        });
        ReferenceData { order, degree, regions }
    }

    /// Cached data for the matrix terms (degree 2k).
    pub fn matrix(order: SchemeOrder) -> &'static ReferenceData {
        static CACHE: [OnceLock<ReferenceData>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        CACHE[order.k() - 2].get_or_init(|| ReferenceData::new(order, matrix_degree(order)))
    }

    /// Cached data for forcing and error integrals (degree 2k + 4).
    pub fn load(order: SchemeOrder) -> &'static ReferenceData {
        static CACHE: [OnceLock<ReferenceData>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        CACHE[order.k() - 2].get_or_init(|| ReferenceData::new(order, load_degree(order)))
    }
}

pub fn matrix_degree(order: SchemeOrder) -> usize {
    2 * order.k()
}

pub fn load_degree(order: SchemeOrder) -> usize {
    2 * order.k() + 4
}

/// Physical gradients of all trial functions.
pub fn physical_gradients(map: &AffineMap, trial: &TrialEval) -> Vec<[f64; 2]> {
    trial.gradients.iter().map(|&g| map.gradient(g)).collect()
}

/// `sum_{d,l} C[c][j][d][l] g[l]` for a trial function in component `d`.
#[inline]
fn flux_of(c: &Tensor, comp: usize, j: usize, d: usize, g: [f64; 2]) -> f64 {
    c[comp][j][d][0] * g[0] + c[comp][j][d][1] * g[1]
}

/// Dense local block, row-major over interleaved (node, component) indices.
#[derive(Clone, Debug)]
pub struct ElementSystem {
    pub size: usize,
    pub matrix: Vec<f64>,
    pub load: Vec<f64>,
}

/// Local matrix and load of the two-layer scheme on triangle `t`.
pub fn element_matrix(
    mesh: &Mesh,
    t: usize,
    order: SchemeOrder,
    problem: &dyn Problem,
) -> Result<ElementSystem, AssemblyError> {
    let map = mesh.affine_map(t);
    if map.det <= 0.0 {
        return Err(AssemblyError::InvertedTriangle(t, map.det));
    }
    let m = problem.components();
    let nk = order.local_dofs();
    let size = nk * m;
    let mut mat = vec![0.0; size * size];
    let mut load = vec![0.0; size];
    let data = ReferenceData::matrix(order);
    for region in &data.regions {
        for q in &region.volume {
            let x = map.apply(q.point);
            let c = problem.tensor(x);
            let w = q.weight * map.det;
            let grads = physical_gradients(&map, &q.trial);
            for &(r, _, gpsi_ref) in &q.test {
                let gpsi = map.gradient(gpsi_ref);
                for ci in 0..m {
                    let row = (r * m + ci) * size;
                    for (s, gphi) in grads.iter().enumerate() {
                        for d in 0..m {
                            let mut v = 0.0;
                            for j in 0..2 {
                                v += flux_of(&c, ci, j, d, *gphi) * gpsi[j];
                            }
                            mat[row + s * m + d] += w * v;
                        }
                    }
                }
            }
        }
        for seg in &region.segments {
            // Outward normal times arc length element per unit parameter.
            let dir = map.direction([seg.end[0] - seg.start[0], seg.end[1] - seg.start[1]]);
            let nu = [dir[1], -dir[0]];
            for q in &seg.points {
                let x = map.apply(q.point);
                let c = problem.tensor(x);
                let grads = physical_gradients(&map, &q.trial);
                for &(r, psi, _) in &q.test {
                    let wpsi = q.weight * psi;
                    for ci in 0..m {
                        let row = (r * m + ci) * size;
                        for (s, gphi) in grads.iter().enumerate() {
                            for d in 0..m {
                                let flux = flux_of(&c, ci, 0, d, *gphi) * nu[0] + flux_of(&c, ci, 1, d, *gphi) * nu[1];
                                mat[row + s * m + d] -= wpsi * flux;
                            }
                        }
                    }
                }
            }
        }
    }
    for region in &ReferenceData::load(order).regions {
        for q in &region.volume {
            let f = problem.forcing(map.apply(q.point));
            let w = q.weight * map.det;
            for &(r, psi, _) in &q.test {
                for ci in 0..m {
                    load[r * m + ci] += w * f[ci] * psi;
                }
            }
        }
    }
    Ok(ElementSystem { size, matrix: mat, load })
}

/// Assembled system with its DOF bookkeeping.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dofs: DofMap,
    pub components: usize,
    /// Pinned (row, value) pairs once Dirichlet data has been applied.
    pub dirichlet: Vec<(usize, f64)>,
}

impl SparseSystem {
    pub fn size(&self) -> usize {
        self.rhs.len()
    }

    /// Row index of component `c` at global node `node`.
    pub fn index(&self, node: usize, c: usize) -> usize {
        node * self.components + c
    }

    /// Rows of all boundary node components.
    pub fn boundary_rows(&self) -> Vec<usize> {
        self.dofs
            .boundary_dofs()
            .into_iter()
            .flat_map(|n| (0..self.components).map(move |c| n * self.components + c))
            .collect()
    }

    pub fn interior_rows(&self) -> Vec<usize> {
        let mut is_b = vec![false; self.size()];
        for r in self.boundary_rows() {
            is_b[r] = true;
        }
        (0..self.size()).filter(|&r| !is_b[r]).collect()
    }

    /// Interpolated boundary values of the problem's Dirichlet datum.
    pub fn boundary_values(&self, problem: &dyn Problem) -> Vec<(usize, f64)> {
        self.dofs
            .boundary_dofs()
            .into_iter()
            .flat_map(|n| {
                let g = problem.dirichlet(self.dofs.coordinates[n]);
                (0..self.components).map(move |c| (n * self.components + c, g[c]))
            })
            .collect()
    }
}

/// Scatters per-triangle blocks produced by `kernel` into a global system.
pub(crate) fn assemble_with<F>(
    mesh: &Mesh,
    order: SchemeOrder,
    problem: &dyn Problem,
    kernel: F,
) -> Result<SparseSystem, AssemblyError>
where
    F: Fn(usize) -> Result<ElementSystem, AssemblyError> + Sync,
{
    let dofs = DofMap::new(mesh, order);
    let m = problem.components();
    let n = dofs.num_dofs * m;
    let blocks: Vec<ElementSystem> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(&kernel)
        .collect::<Result<_, _>>()?;
    let mut triplets = Vec::with_capacity(blocks.iter().map(|b| b.size * b.size).sum());
    let mut rhs = vec![0.0; n];
    for (t, block) in blocks.iter().enumerate() {
        let local = &dofs.triangle_dofs[t];
        if local.len() * m != block.size {
            return Err(AssemblyError::DofMap(format!(
                "triangle {t}: {} local DOFs but block of size {}",
                local.len(),
                block.size
            )));
        }
        let global = |i: usize| local[i / m] * m + i % m;
        for i in 0..block.size {
            let gi = global(i);
            if gi >= n {
                return Err(AssemblyError::DofMap(format!("global index {gi} out of range {n}")));
            }
            rhs[gi] += block.load[i];
            for j in 0..block.size {
                let v = block.matrix[i * block.size + j];
                if v != 0.0 {
                    triplets.push((gi, global(j), v));
                }
            }
        }
    }
    Ok(SparseSystem {
        matrix: CsrMatrix::from_triplets(n, n, &triplets),
        rhs,
        dofs,
        components: m,
        dirichlet: Vec::new(),
    })
}

/// Global two-layer system for a scalar or elasticity problem, before boundary conditions.
pub fn assemble(mesh: &Mesh, order: SchemeOrder, problem: &dyn Problem) -> Result<SparseSystem, AssemblyError> {
    assemble_with(mesh, order, problem, |t| element_matrix(mesh, t, order, problem))
}

pub fn assemble_scalar(mesh: &Mesh, order: SchemeOrder, problem: &EllipticProblem) -> Result<SparseSystem, AssemblyError> {
    assemble(mesh, order, problem)
}

pub fn assemble_elasticity(
    mesh: &Mesh,
    order: SchemeOrder,
    problem: &ElasticityProblem,
) -> Result<SparseSystem, AssemblyError> {
    assemble(mesh, order, problem)
}

/// Eliminates pinned rows and columns, moving known values to the right-hand side.
pub fn apply_dirichlet(mut system: SparseSystem, values: &[(usize, f64)]) -> Result<SparseSystem, AssemblyError> {
    let n = system.size();
    let mut pinned: Vec<Option<f64>> = vec![None; n];
    let mut allowed = vec![false; n];
    for r in system.boundary_rows() {
        allowed[r] = true;
    }
    for &(r, v) in values {
        if r >= n || !allowed[r] {
            return Err(AssemblyError::InteriorDirichlet(r));
        }
        pinned[r] = Some(v);
    }
    let a = &system.matrix;
    let mut triplets = Vec::with_capacity(a.nnz());
    for r in 0..n {
        if let Some(v) = pinned[r] {
            triplets.push((r, r, 1.0));
            system.rhs[r] = v;
            continue;
        }
        for (c, v) in a.row(r) {
            match pinned[c] {
                Some(g) => system.rhs[r] -= v * g,
                None => triplets.push((r, c, v)),
            }
        }
    }
    system.matrix = CsrMatrix::from_triplets(n, n, &triplets);
    system.dirichlet = values.to_vec();
    Ok(system)
}
