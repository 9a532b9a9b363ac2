//! Minimum-angle stability bound: reference bilinear-form matrices, the
//! parametric trial-to-test matrices `M_k(a, b)`, `H(r1, r2, a, b)`, the
//! curve `Gamma_H`, the discretized bound `B_N` and a parameter optimizer.

use crate::quadrature::{region_rule, segment_rule, QuadratureError};
use crate::refelem::{dual_region, BasisSet, Region, SchemeOrder};
use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Default number of segments of the sampled curve.
pub const DEFAULT_SEGMENTS: usize = 100;
/// Default evaluation budget of the optimizer.
pub const DEFAULT_BUDGET: usize = 5000;
/// Degrees added per unit of negative `lambda_min(H(1, 1))`.
pub const PSD_PENALTY: f64 = 1e6;
/// Relative slack on `lambda_min(H(1, 1)) >= 0`.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Published optimal parameters `(a*, b*)` and bound in degrees per order.
pub fn table_parameters(order: SchemeOrder) -> (Vec<f64>, Vec<f64>, f64) {
    match order {
        SchemeOrder::Quadratic => (vec![-0.1667, 1.3333], vec![-0.1078, -0.1347, 0.7273], 1.04),
        SchemeOrder::Cubic => (
            vec![0.0086, 1.3453, -0.4170, 0.0632],
            vec![0.0420, -0.1273, 0.6377],
            11.19,
        ),
        SchemeOrder::Quartic => (
            vec![0.0829, 0.6149, 0.0970, 0.1238, 0.0815, 0.0730, 0.0714, 0.7113],
            vec![-0.0276, 0.0169, -0.1193, 0.0087, -0.0268, -0.0008, -0.0712, 0.0428, 0.1493],
            28.85,
        ),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("order {order}: expected {expected_a} a-parameters and {expected_b} b-parameters, got {got_a} and {got_b}")]
    ParameterCount {
        order: usize,
        expected_a: usize,
        expected_b: usize,
        got_a: usize,
        got_b: usize,
    },
    #[error("pencil has no finite real generalized eigenvalue")]
    SingularPencil,
    #[error("H(1, 1) is not positive semi-definite (lambda_min = {0:.6e})")]
    Infeasible(f64),
    #[error("theta_min argument {0} outside [-1, 1] (invalid r1, r2)")]
    Domain(f64),
    #[error("r1 = {0} must lie in (0, 1)")]
    LowerBound(f64),
    #[error("no feasible parameters found within the budget")]
    NoFeasiblePoint,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Where `M_k` enters the curve construction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reading {
    /// `H = I + sym(M (A0~ + r1 A1~ + r2 A2~))`, pencils `sym(M (A1~ + A2~))` and `sym(M A2~)`.
    #[default]
    Mapped,
    /// Same `H`, pencils `A1~ + A2~` and `A2~` without `M`.
    RawPencil,
}

/// `A01`, `A02`, `A12` on the reference element, rows indexed by test functions.
#[derive(Clone, Debug)]
pub struct ReferenceMatrices {
    pub order: SchemeOrder,
    pub a01: DMatrix<f64>,
    pub a02: DMatrix<f64>,
    pub a12: DMatrix<f64>,
}

impl ReferenceMatrices {
    pub fn a0(&self) -> DMatrix<f64> {
        &self.a01 + &self.a02 - &self.a12
    }

    pub fn a1(&self) -> DMatrix<f64> {
        &self.a01 - &self.a02 + &self.a12
    }

    pub fn a2(&self) -> DMatrix<f64> {
        -&self.a01 + &self.a02 + &self.a12
    }
}

pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Reference matrices with the exact-for-polynomials rule of degree `2k`.
pub fn reference_matrices(order: SchemeOrder) -> ReferenceMatrices {
    reference_matrices_with(order, 2 * order.k()).expect("supported degree")
}

/// Reference matrices with a chosen quadrature degree.
pub fn reference_matrices_with(order: SchemeOrder, degree: usize) -> Result<ReferenceMatrices, StabilityError> {
    let basis = BasisSet::get(order);
    let nk = order.local_dofs();
    let mut a01 = DMatrix::zeros(nk, nk);
    let mut a02 = DMatrix::zeros(nk, nk);
    let mut a12 = DMatrix::zeros(nk, nk);
    let seg_rule = segment_rule(degree)?;
    for region in Region::ALL {
        let rule = region_rule(region, degree)?;
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let trial = basis.trial_at(p);
            for (i, _, gpsi) in basis.test_on_region(region, p) {
                for (j, g) in trial.gradients.iter().enumerate() {
                    a01[(i, j)] += w * g[0] * gpsi[0];
                    a02[(i, j)] += w * g[1] * gpsi[1];
                    a12[(i, j)] += w * (g[0] - g[1]) * (gpsi[0] - gpsi[1]);
                }
            }
        }
        // Boundary pieces inside the open triangle, counterclockwise for the region.
        for (a, b) in dual_region(region).interior_segments() {
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            for (&t, &w) in seg_rule.points.iter().zip(&seg_rule.weights) {
                let p = [a[0] + t * dx, a[1] + t * dy];
                let trial = basis.trial_at(p);
                for (i, psi, _) in basis.test_on_region(region, p) {
                    for (j, g) in trial.gradients.iter().enumerate() {
                        a01[(i, j)] -= w * psi * g[0] * dy;
                        a02[(i, j)] += w * psi * g[1] * dx;
                        a12[(i, j)] -= w * psi * (g[0] - g[1]) * (dy + dx);
                    }
                }
            }
        }
    }
    Ok(ReferenceMatrices { order, a01, a02, a12 })
}

/// Number of `a` and `b` entries per order, dependent ones included.
pub fn parameter_counts(order: SchemeOrder) -> (usize, usize) {
    match order {
        SchemeOrder::Quadratic => (2, 3),
        SchemeOrder::Cubic => (4, 3),
        SchemeOrder::Quartic => (8, 9),
    }
}

/// Zero-based positions of the entries fixed by the row-sum constraints.
pub fn dependent_parameters(order: SchemeOrder) -> (Vec<usize>, Vec<usize>) {
    match order {
        SchemeOrder::Quadratic | SchemeOrder::Cubic => (vec![1], vec![2]),
        SchemeOrder::Quartic => (vec![1, 7], vec![7]),
    }
}

/// Overwrites the dependent entries so that first-layer rows of `M_k` sum to 1
/// and second-layer rows sum to 0.
pub fn apply_constraints(order: SchemeOrder, a: &mut [f64], b: &mut [f64]) {
    match order {
        SchemeOrder::Quadratic => {
            a[1] = 1.0 - 2.0 * a[0];
            b[2] = -3.0 * b[0] - 3.0 * b[1];
        }
        SchemeOrder::Cubic => {
            a[1] = 1.0 - a[0] - a[2] - a[3];
            b[2] = -3.0 * b[0] - 6.0 * b[1];
        }
        SchemeOrder::Quartic => {
            a[1] = 1.0 - a[0] - a[2] - a[3] - a[4];
            a[7] = 1.0 - 2.0 * a[5] - 2.0 * a[6];
            b[7] = -b[0] - 2.0 * (b[1] + b[2] + b[3] + b[4] + b[5]) - b[6] - 2.0 * b[8];
        }
    }
}

/// Realized trial-to-test matrix with its constrained parameters.
#[derive(Clone, Debug)]
pub struct TrialToTestMap {
    pub order: SchemeOrder,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub matrix: DMatrix<f64>,
}

/// `M_k(a, b)`; dependent entries of `a` and `b` are recomputed from the free ones.
pub fn trial_to_test_matrix(order: SchemeOrder, a: &[f64], b: &[f64]) -> Result<TrialToTestMap, StabilityError> {
    let (na, nb) = parameter_counts(order);
    if a.len() != na || b.len() != nb {
        return Err(StabilityError::ParameterCount {
            order: order.k(),
            expected_a: na,
            expected_b: nb,
            got_a: a.len(),
            got_b: b.len(),
        });
    }
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    apply_constraints(order, &mut a, &mut b);
    let matrix = build_matrix(order, &a, &b);
    Ok(TrialToTestMap { order, a, b, matrix })
}

/// `M_k` with `a`, `b` taken as given; used by tests of the constraints.
pub fn build_matrix(order: SchemeOrder, a: &[f64], b: &[f64]) -> DMatrix<f64> {
    let nk = order.local_dofs();
    let mut m = DMatrix::zeros(nk, nk);
    let mut set = |row: usize, cols: &[usize], vals: &[f64]| {
        for (&c, &v) in cols.iter().zip(vals) {
            m[(row, c)] = v;
        }
    };
    match order {
        SchemeOrder::Quadratic => {
            let (a1, a2) = (a[0], a[1]);
            for v in [0, 2, 4] {
                set(v, &[v], &[1.0]);
            }
            set(1, &[0, 1, 2], &[a1, a2, a1]);
            set(3, &[2, 3, 4], &[a1, a2, a1]);
            set(5, &[0, 4, 5], &[a1, a1, a2]);
            set(6, &[0, 1, 2, 3, 4, 5, 6], &[b[0], b[1], b[0], b[1], b[0], b[1], b[2]]);
        }
        SchemeOrder::Cubic => {
            let (a1, a2, a3, a4) = (a[0], a[1], a[2], a[3]);
            for v in [0, 3, 6] {
                set(v, &[v], &[1.0]);
            }
            set(1, &[0, 1, 2, 3], &[a1, a2, a3, a4]);
            set(2, &[0, 1, 2, 3], &[a4, a3, a2, a1]);
            set(4, &[3, 4, 5, 6], &[a1, a2, a3, a4]);
            set(5, &[3, 4, 5, 6], &[a4, a3, a2, a1]);
            set(7, &[0, 6, 7, 8], &[a4, a1, a2, a3]);
            set(8, &[0, 6, 7, 8], &[a1, a4, a3, a2]);
            let (b1, b2, b3) = (b[0], b[1], b[2]);
            set(9, &(0..10).collect::<Vec<_>>(), &[b1, b2, b2, b1, b2, b2, b1, b2, b2, b3]);
        }
        SchemeOrder::Quartic => {
            let [a1, a2, a3, a4, a5, a6, a7, a8] = [a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7]];
            for v in [0, 4, 8] {
                set(v, &[v], &[1.0]);
            }
            for start in [0, 4] {
                let cols: Vec<usize> = (start..start + 5).collect();
                set(start + 1, &cols, &[a1, a2, a3, a4, a5]);
                set(start + 2, &cols, &[a6, a7, a8, a7, a6]);
                set(start + 3, &cols, &[a5, a4, a3, a2, a1]);
            }
            let cols = [0, 8, 9, 10, 11];
            set(9, &cols, &[a5, a1, a2, a3, a4]);
            set(10, &cols, &[a6, a6, a7, a8, a7]);
            set(11, &cols, &[a1, a5, a4, a3, a2]);
            let [b1, b2, b3, b4, b5, b6, b7, b8, b9] = [b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7], b[8]];
            let all: Vec<usize> = (0..15).collect();
            set(12, &all, &[b1, b2, b3, b4, b5, b6, b7, b6, b5, b4, b3, b2, b8, b9, b9]);
            set(13, &all, &[b5, b4, b3, b2, b1, b2, b3, b4, b5, b6, b7, b6, b9, b8, b9]);
            set(14, &all, &[b5, b6, b7, b6, b5, b4, b3, b2, b1, b2, b3, b4, b9, b9, b8]);
        }
    }
    m
}

/// Everything needed to evaluate `H` and the curve for one parameter choice.
#[derive(Clone, Debug)]
pub struct StabilityModel {
    pub order: SchemeOrder,
    pub reading: Reading,
    t0: DMatrix<f64>,
    t1: DMatrix<f64>,
    t2: DMatrix<f64>,
    m: DMatrix<f64>,
}

impl StabilityModel {
    pub fn new(reference: &ReferenceMatrices, map: &TrialToTestMap, reading: Reading) -> Self {
        StabilityModel {
            order: reference.order,
            reading,
            t0: sym(&reference.a0()),
            t1: sym(&reference.a1()),
            t2: sym(&reference.a2()),
            m: map.matrix.clone(),
        }
    }

    /// Symmetric part of `I + M (A0~ + r1 A1~ + r2 A2~)`.
    pub fn h_matrix(&self, r1: f64, r2: f64) -> DMatrix<f64> {
        let inner = &self.t0 + &self.t1 * r1 + &self.t2 * r2;
        let n = self.m.nrows();
        DMatrix::identity(n, n) + sym(&(&self.m * inner))
    }

    /// Right-hand pencil matrices for `r1_lower` and `r2_lower(r1)`.
    pub fn pencils(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let p1 = &self.t1 + &self.t2;
        match self.reading {
            Reading::Mapped => (sym(&(&self.m * p1)), sym(&(&self.m * &self.t2))),
            Reading::RawPencil => (p1, self.t2.clone()),
        }
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Feasibility of `H(1, 1)` with relative slack.
pub fn is_psd(h: &DMatrix<f64>) -> (bool, f64) {
    let eig = SymmetricEigen::new(h.clone()).eigenvalues;
    let norm = eig.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let lmin = eig.min();
    (lmin >= -PSD_TOLERANCE * norm, lmin)
}

/// Largest real root of `det(A - lambda B) = 0`.
pub fn lambda_max_gen(b: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<f64, StabilityError> {
    if let Some(chol) = Cholesky::new(b.clone()) {
        // L^-1 A L^-T keeps the spectrum and is symmetric when A is.
        let l = chol.l();
        let linv = l.clone().try_inverse().ok_or(StabilityError::SingularPencil)?;
        let c = sym(&(&linv * a * linv.transpose()));
        return Ok(SymmetricEigen::new(c).eigenvalues.max());
    }
    let largest_real = |m: DMatrix<f64>, invert: bool| -> Option<f64> {
        let scale = m.amax().max(f64::MIN_POSITIVE);
        m.complex_eigenvalues()
            .iter()
            .filter(|z| z.im.abs() <= 1e-10 * scale.max(z.re.abs()))
            .filter_map(|z| {
                if invert {
                    (z.re.abs() > 1e-12 * scale).then(|| 1.0 / z.re)
                } else {
                    Some(z.re)
                }
            })
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |x| x.max(v))))
    };
    if let Some(binv) = b.clone().try_inverse() {
        if let Some(v) = largest_real(&binv * a, false) {
            return Ok(v);
        }
    } else if let Some(ainv) = a.clone().try_inverse() {
        // det(B - mu A) = 0 with lambda = 1 / mu.
        if let Some(v) = largest_real(&ainv * b, true) {
            return Ok(v);
        }
    }
    Err(StabilityError::SingularPencil)
}

/// `arccos((1 + r1 - r2) / (2 sqrt(r1)))` in degrees.
pub fn theta_min(r1: f64, r2: f64) -> Result<f64, StabilityError> {
    let c = (1.0 + r1 - r2) / (2.0 * r1.sqrt());
    if !(-1.0..=1.0).contains(&c) {
        return Err(StabilityError::Domain(c));
    }
    Ok(c.acos().to_degrees())
}

fn acos_deg(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Largest `theta_min` on the segment from `(s1, s2)` to `(t1, t2)`, in degrees.
pub fn theta_bar(s1: f64, s2: f64, t1: f64, t2: f64) -> f64 {
    if t1 == s1 {
        return acos_deg((1.0 + s1 - s2) / (2.0 * s1.sqrt()));
    }
    let g = 1.0 - (t2 - s2) / (t1 - s1);
    let h = 1.0 + s1 - s2 - g * s1;
    let c_st = |r: f64| (g * r + h) / (2.0 * r.sqrt());
    if g == 0.0 {
        return acos_deg(c_st(t1));
    }
    let mut c = c_st(s1).min(c_st(t1));
    let r = h / g;
    if (s1..=t1).contains(&r) {
        c = c.min(c_st(r));
    }
    acos_deg(c)
}

/// Sampled curve `R_k = (r1^[k], r2_lower(r1^[k]))`, `k = 0..=N`.
#[derive(Clone, Debug, Serialize)]
pub struct GammaCurve {
    pub r1_lower: f64,
    pub points: Vec<[f64; 2]>,
}

/// Curve construction without the feasibility check; the optimizer also
/// needs values at infeasible points.
pub fn gamma_curve_unchecked(model: &StabilityModel, segments: usize) -> Result<GammaCurve, StabilityError> {
    let (p1, p2) = model.pencils();
    let r1_lower = 1.0 - 1.0 / lambda_max_gen(&model.h_matrix(1.0, 1.0), &p1)?;
    // Edge-length ratios are positive, so the curve must start inside (0, 1).
    if !(r1_lower > 0.0 && r1_lower < 1.0) {
        return Err(StabilityError::LowerBound(r1_lower));
    }
    let points = (0..=segments)
        .map(|k| {
            let r1 = if k == segments {
                1.0
            } else {
                r1_lower + k as f64 * (1.0 - r1_lower) / segments as f64
            };
            let r2 = r1 - 1.0 / lambda_max_gen(&model.h_matrix(r1, r1), &p2)?;
            Ok([r1, r2])
        })
        .collect::<Result<Vec<_>, StabilityError>>()?;
    Ok(GammaCurve { r1_lower, points })
}

pub fn gamma_curve(model: &StabilityModel, segments: usize) -> Result<GammaCurve, StabilityError> {
    let (ok, lmin) = is_psd(&model.h_matrix(1.0, 1.0));
    if !ok {
        return Err(StabilityError::Infeasible(lmin));
    }
    gamma_curve_unchecked(model, segments)
}

/// `max_k theta_bar(R_k, R_{k+1})` over a sampled curve, in degrees.
pub fn bound_on_curve(curve: &GammaCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| theta_bar(w[0][0], w[0][1], w[1][0], w[1][1]))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `B_N` in degrees; fails for parameters with indefinite `H(1, 1)`.
pub fn b_n(model: &StabilityModel, segments: usize) -> Result<f64, StabilityError> {
    Ok(bound_on_curve(&gamma_curve(model, segments)?))
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceEntry {
    pub evaluation: usize,
    pub objective: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub order: usize,
    pub reading: Reading,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub r1_lower: f64,
    #[serde(rename = "BN_degrees")]
    pub bn_degrees: f64,
    pub feasible: bool,
    pub h11_min_eigenvalue: f64,
    pub curve: Vec<[f64; 2]>,
    pub trace: Vec<TraceEntry>,
}

/// Evaluation of one parameter set; fails when `H(1, 1)` is indefinite.
pub fn evaluate(
    order: SchemeOrder,
    a: &[f64],
    b: &[f64],
    segments: usize,
    reading: Reading,
) -> Result<StabilityReport, StabilityError> {
    let reference = reference_matrices(order);
    let map = trial_to_test_matrix(order, a, b)?;
    let model = StabilityModel::new(&reference, &map, reading);
    let (feasible, lmin) = is_psd(&model.h_matrix(1.0, 1.0));
    if !feasible {
        return Err(StabilityError::Infeasible(lmin));
    }
    let curve = gamma_curve_unchecked(&model, segments)?;
    Ok(StabilityReport {
        order: order.k(),
        reading,
        a: map.a,
        b: map.b,
        r1_lower: curve.r1_lower,
        bn_degrees: bound_on_curve(&curve),
        feasible,
        h11_min_eigenvalue: lmin,
        curve: curve.points,
        trace: Vec::new(),
    })
}

/// Penalized objective: `B_N + 1e6 max(0, -lambda_min(H(1, 1)))`, with
/// unevaluable curves scored as the largest angle.
struct Objective<'a> {
    order: SchemeOrder,
    reference: &'a ReferenceMatrices,
    reading: Reading,
    segments: usize,
    template: (Vec<f64>, Vec<f64>),
    free: (Vec<usize>, Vec<usize>),
}

impl<'a> Objective<'a> {
    fn new(order: SchemeOrder, reference: &'a ReferenceMatrices, reading: Reading, segments: usize, a: &[f64], b: &[f64]) -> Self {
        let (dep_a, dep_b) = dependent_parameters(order);
        let free_a = (0..a.len()).filter(|i| !dep_a.contains(i)).collect();
        let free_b = (0..b.len()).filter(|i| !dep_b.contains(i)).collect();
        Objective {
            order,
            reference,
            reading,
            segments,
            template: (a.to_vec(), b.to_vec()),
            free: (free_a, free_b),
        }
    }

    fn pack(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        self.free.0.iter().map(|&i| a[i]).chain(self.free.1.iter().map(|&i| b[i])).collect()
    }

    fn unpack(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut a, mut b) = self.template.clone();
        for (k, &i) in self.free.0.iter().enumerate() {
            a[i] = x[k];
        }
        let off = self.free.0.len();
        for (k, &i) in self.free.1.iter().enumerate() {
            b[i] = x[off + k];
        }
        (a, b)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (a, b) = self.unpack(x);
        let Ok(map) = trial_to_test_matrix(self.order, &a, &b) else {
            return f64::INFINITY;
        };
        let model = StabilityModel::new(self.reference, &map, self.reading);
        let (feasible, lmin) = is_psd(&model.h_matrix(1.0, 1.0));
        let penalty = if feasible { 0.0 } else { PSD_PENALTY * (-lmin).max(0.0) };
        let bn = gamma_curve_unchecked(&model, self.segments)
            .map(|c| bound_on_curve(&c))
            .ok()
            .filter(|v| v.is_finite())
            .unwrap_or(90.0);
        bn + penalty
    }
}

/// Nelder-Mead with exactly `budget` objective evaluations at most.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: Vec<f64>, step: f64, budget: usize, trace: &mut Vec<f64>) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut evals = 0;
    let mut best = (x0.clone(), f64::INFINITY);
    let mut eval = |x: &[f64], trace: &mut Vec<f64>, best: &mut (Vec<f64>, f64)| -> Option<f64> {
        if evals >= budget {
            return None;
        }
        evals += 1;
        let v = f(x);
        if v < best.1 {
            *best = (x.to_vec(), v);
        }
        trace.push(best.1);
        Some(v)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut x = x0.clone();
        if i > 0 {
            x[i - 1] += step;
        }
        match eval(&x, trace, &mut best) {
            Some(v) => simplex.push((x, v)),
            None => return best,
        }
    }
    loop {
        simplex.sort_by(|p, q| p.1.total_cmp(&q.1));
        let worst = simplex[n].clone();
        let centroid: Vec<f64> = (0..n).map(|d| simplex[..n].iter().map(|p| p.0[d]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|d| centroid[d] + t * (worst.0[d] - centroid[d])).collect() };
        let xr = along(-1.0);
        let Some(fr) = eval(&xr, trace, &mut best) else { return best };
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let Some(fe) = eval(&xe, trace, &mut best) else { return best };
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, t) = if fr < worst.1 { (along(-0.5), fr) } else { (along(0.5), worst.1) };
        let Some(fc) = eval(&xc, trace, &mut best) else { return best };
        if fc < t {
            simplex[n] = (xc, fc);
            continue;
        }
        let lead = simplex[0].0.clone();
        for p in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = (0..n).map(|d| lead[d] + 0.5 * (p.0[d] - lead[d])).collect();
            let Some(v) = eval(&x, trace, &mut best) else { return best };
            *p = (x, v);
        }
    }
}

/// Settings of the multistart search.
#[derive(Clone, Copy, Debug)]
pub struct OptimizerConfig {
    pub budget: usize,
    pub starts: usize,
    pub seed: u64,
    /// Half-width of the uniform perturbation of restart points.
    pub spread: f64,
    pub segments: usize,
    pub reading: Reading,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            budget: DEFAULT_BUDGET,
            starts: 4,
            seed: 0,
            spread: 0.05,
            segments: DEFAULT_SEGMENTS,
            reading: Reading::Mapped,
        }
    }
}

/// Minimizes the penalized `B_N` from `(a, b)`; never returns worse than the start.
pub fn optimize_parameters(
    order: SchemeOrder,
    a: &[f64],
    b: &[f64],
    config: &OptimizerConfig,
) -> Result<StabilityReport, StabilityError> {
    let reference = reference_matrices(order);
    trial_to_test_matrix(order, a, b)?;
    let objective = Objective::new(order, &reference, config.reading, config.segments, a, b);
    let x0 = objective.pack(a, b);
    let f0 = objective.value(&x0);
    let mut best = (x0.clone(), f0);
    let mut trace = vec![TraceEntry {
        evaluation: 0,
        objective: f0,
    }];
    if config.budget > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let starts = config.starts.max(1);
        let origins: Vec<Vec<f64>> = (0..starts)
            .map(|s| {
                if s == 0 {
                    x0.clone()
                } else {
                    x0.iter().map(|v| v + rng.random_range(-config.spread..=config.spread)).collect()
                }
            })
            .collect();
        let share = config.budget / starts;
        let budgets: Vec<usize> = (0..starts).map(|s| share + usize::from(s < config.budget % starts)).collect();
        let runs: Vec<((Vec<f64>, f64), Vec<f64>)> = origins
            .into_par_iter()
            .zip(budgets)
            .map(|(origin, budget)| {
                let mut local = Vec::new();
                let out = nelder_mead(|x| objective.value(x), origin, 0.02, budget, &mut local);
                (out, local)
            })
            .collect();
        let mut count = 0;
        for (run, local) in runs {
            for v in local {
                count += 1;
                let incumbent = trace.last().map_or(f64::INFINITY, |t| t.objective);
                if v < incumbent {
                    trace.push(TraceEntry {
                        evaluation: count,
                        objective: v,
                    });
                }
            }
            if run.1 < best.1 {
                best = run;
            }
        }
    }
    let (a_best, b_best) = objective.unpack(&best.0);
    let map = trial_to_test_matrix(order, &a_best, &b_best)?;
    let model = StabilityModel::new(&reference, &map, config.reading);
    let (feasible, lmin) = is_psd(&model.h_matrix(1.0, 1.0));
    if !feasible {
        return Err(StabilityError::NoFeasiblePoint);
    }
    let curve = gamma_curve_unchecked(&model, config.segments)?;
    Ok(StabilityReport {
        order: order.k(),
        reading: config.reading,
        a: map.a,
        b: map.b,
        r1_lower: curve.r1_lower,
        bn_degrees: bound_on_curve(&curve),
        feasible,
        h11_min_eigenvalue: lmin,
        curve: curve.points,
        trace,
    })
}
