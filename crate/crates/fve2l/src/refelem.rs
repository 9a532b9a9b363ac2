//! Reference triangle, interpolation nodes, dual regions and the trial/test bases.
//!
//! Node labels run counterclockwise along the boundary of the reference
//! triangle starting at the origin, followed by the interior nodes:
//!
//! | k | boundary nodes (0-based)                         | interior            |
//! |---|--------------------------------------------------|---------------------|
//! | 2 | (0,0) (1/2,0) (1,0) (1/2,1/2) (0,1) (0,1/2)       | (1/3,1/3)           |
//! | 3 | (0,0) (1/3,0) (2/3,0) (1,0) ... (0,1/3)           | (1/3,1/3)           |
//! | 4 | (0,0) (1/4,0) ... (1,0) ... (0,1) ... (0,1/4)      | (1/4,1/4) (1/2,1/4) (1/4,1/2) |
//!
//! Boundary node `i` is a vertex when `i % k == 0` and otherwise sits on edge
//! `i / k` at position `i % k` counted from that edge's start vertex.

use crate::poly::Poly2;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;

pub type Point = [f64; 2];

const OUTSIDE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefElemError {
    #[error("unsupported scheme order {0}; expected 2, 3 or 4")]
    UnsupportedOrder(usize),
    #[error("point ({0}, {1}) lies outside the reference triangle")]
    OutsideReference(f64, f64),
}

/// Polynomial order of the scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeOrder {
    Quadratic,
    Cubic,
    Quartic,
}

impl SchemeOrder {
    pub const ALL: [SchemeOrder; 3] = [SchemeOrder::Quadratic, SchemeOrder::Cubic, SchemeOrder::Quartic];

    pub fn new(k: usize) -> Result<Self, RefElemError> {
        match k {
            2 => Ok(SchemeOrder::Quadratic),
            3 => Ok(SchemeOrder::Cubic),
            4 => Ok(SchemeOrder::Quartic),
            other => Err(RefElemError::UnsupportedOrder(other)),
        }
    }

    pub fn k(self) -> usize {
        match self {
            SchemeOrder::Quadratic => 2,
            SchemeOrder::Cubic => 3,
            SchemeOrder::Quartic => 4,
        }
    }

    /// Trial degrees of freedom per element.
    pub fn local_dofs(self) -> usize {
        match self {
            SchemeOrder::Quadratic => 7,
            SchemeOrder::Cubic => 10,
            SchemeOrder::Quartic => 15,
        }
    }

    pub fn first_layer_dofs(self) -> usize {
        3 * self.k()
    }

    pub fn interior_dofs(self) -> usize {
        self.local_dofs() - self.first_layer_dofs()
    }

    /// Nodes strictly inside each edge.
    pub fn edge_interior_nodes(self) -> usize {
        self.k() - 1
    }

    /// Highest polynomial degree present in the trial space.
    pub fn trial_degree(self) -> usize {
        match self {
            SchemeOrder::Quadratic => 3,
            k => k.k(),
        }
    }
}

/// One of the four dual regions of the reference triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Region {
    pub const FIRST_LAYER: [Region; 3] = [Region::Q1, Region::Q2, Region::Q3];
    pub const ALL: [Region; 4] = [Region::Q1, Region::Q2, Region::Q3, Region::Q4];

    pub fn index(self) -> usize {
        match self {
            Region::Q1 => 0,
            Region::Q2 => 1,
            Region::Q3 => 2,
            Region::Q4 => 3,
        }
    }

    pub fn from_index(i: usize) -> Region {
        Region::ALL[i]
    }
}

/// Polygonal dual region with counterclockwise vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct DualRegion {
    pub id: Region,
    pub vertices: Vec<Point>,
}

impl DualRegion {
    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }

    /// Boundary pieces of the region lying in the open reference triangle,
    /// each oriented counterclockwise with respect to the region.
    pub fn interior_segments(&self) -> Vec<(Point, Point)> {
        if self.id == Region::Q4 {
            return Vec::new();
        }
        // Vertex list is corner, midpoint, barycenter, midpoint.
        let v = &self.vertices;
        vec![(v[1], v[2]), (v[2], v[3])]
    }

    /// Full counterclockwise boundary as consecutive segments.
    pub fn boundary_segments(&self) -> Vec<(Point, Point)> {
        let n = self.vertices.len();
        (0..n)
            .map(|i| (self.vertices[i], self.vertices[(i + 1) % n]))
            .collect()
    }
}

pub fn polygon_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let p = vertices[i];
            let q = vertices[(i + 1) % n];
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    0.5 * twice
}

const THIRD: f64 = 1.0 / 3.0;

/// The dual regions Q1..Q4 of the reference triangle.
pub fn dual_regions() -> Vec<DualRegion> {
    vec![
        DualRegion {
            id: Region::Q1,
            vertices: vec![[0.0, 0.0], [0.5, 0.0], [THIRD, THIRD], [0.0, 0.5]],
        },
        DualRegion {
            id: Region::Q2,
            vertices: vec![[1.0, 0.0], [0.5, 0.5], [THIRD, THIRD], [0.5, 0.0]],
        },
        DualRegion {
            id: Region::Q3,
            vertices: vec![[0.0, 1.0], [0.0, 0.5], [THIRD, THIRD], [0.5, 0.5]],
        },
        DualRegion {
            id: Region::Q4,
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        },
    ]
}

pub fn dual_region(id: Region) -> DualRegion {
    dual_regions().swap_remove(id.index())
}

/// Reference nodes and their grouping by owning dual region.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSet {
    pub nodes: Vec<Point>,
    /// Index sets N1..N4.
    pub groups: [Vec<usize>; 4],
}

/// Where a local node sits on the reference triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Vertex(usize),
    /// Edge index and 1-based position from the edge's start vertex.
    Edge(usize, usize),
    Interior(usize),
}

pub fn node_kind(order: SchemeOrder, i: usize) -> NodeKind {
    let k = order.k();
    if i < 3 * k {
        if i.is_multiple_of(k) {
            NodeKind::Vertex(i / k)
        } else {
            NodeKind::Edge(i / k, i % k)
        }
    } else {
        NodeKind::Interior(i - 3 * k)
    }
}

pub fn node_coordinates(order: SchemeOrder) -> NodeSet {
    let k = order.k();
    let kf = k as f64;
    let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let mut nodes = Vec::with_capacity(order.local_dofs());
    for e in 0..3 {
        let a = corners[e];
        let b = corners[(e + 1) % 3];
        for t in 0..k {
            let s = t as f64 / kf;
            nodes.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
        }
    }
    match order {
        SchemeOrder::Quadratic | SchemeOrder::Cubic => nodes.push([THIRD, THIRD]),
        SchemeOrder::Quartic => {
            nodes.extend_from_slice(&[[0.25, 0.25], [0.5, 0.25], [0.25, 0.5]]);
        }
    }
    let groups = build_test(order).map(|region| region.iter().map(|(i, _)| *i).collect());
    NodeSet { nodes, groups }
}

fn barycentric_polys() -> [Poly2; 3] {
    [
        Poly2::from_terms(&[(1.0, 0, 0), (-1.0, 1, 0), (-1.0, 0, 1)]),
        Poly2::x(),
        Poly2::y(),
    ]
}

/// Lagrange basis of P^k on the equispaced lattice, for the node with
/// barycentric multi-index `idx` (sum equal to `k`).
fn lattice_lagrange(k: usize, idx: [usize; 3]) -> Poly2 {
    let lambdas = barycentric_polys();
    let mut p = Poly2::constant(1.0);
    for (m, lambda) in lambdas.iter().enumerate() {
        for s in 0..idx[m] {
            let factor = (lambda.scale(k as f64) - Poly2::constant(s as f64)).scale(1.0 / (s + 1) as f64);
            p = p * factor;
        }
    }
    p
}

fn lattice_index(k: usize, p: Point) -> [usize; 3] {
    let kf = k as f64;
    let i1 = (kf * p[0]).round() as usize;
    let i2 = (kf * p[1]).round() as usize;
    [k - i1 - i2, i1, i2]
}

fn build_trial(order: SchemeOrder) -> Vec<Poly2> {
    let nodes = node_coordinates(order).nodes;
    match order {
        SchemeOrder::Quadratic => {
            let bubble = Poly2::from_terms(&[(27.0, 1, 1), (-27.0, 2, 1), (-27.0, 1, 2)]);
            let mut basis: Vec<Poly2> = nodes[..6]
                .iter()
                .map(|&p| {
                    let q = lattice_lagrange(2, lattice_index(2, p));
                    q - bubble.scale(q.eval(THIRD, THIRD))
                })
                .collect();
            basis.push(bubble);
            basis
        }
        _ => nodes
            .iter()
            .map(|&p| lattice_lagrange(order.k(), lattice_index(order.k(), p)))
            .collect(),
    }
}

type TestTable = [Vec<(usize, Poly2)>; 4];

fn t(terms: &[(f64, usize, usize)]) -> Poly2 {
    Poly2::from_terms(terms)
}

fn build_test(order: SchemeOrder) -> TestTable {
    match order {
        SchemeOrder::Quadratic => [
            vec![
                (0, t(&[(1.0, 0, 0), (-2.0, 1, 0), (-2.0, 0, 1)])),
                (1, t(&[(2.0, 1, 0)])),
                (5, t(&[(2.0, 0, 1)])),
            ],
            vec![
                (2, t(&[(-1.0, 0, 0), (2.0, 1, 0)])),
                (1, t(&[(2.0, 0, 0), (-2.0, 1, 0), (-2.0, 0, 1)])),
                (3, t(&[(2.0, 0, 1)])),
            ],
            vec![
                (4, t(&[(-1.0, 0, 0), (2.0, 0, 1)])),
                (3, t(&[(2.0, 1, 0)])),
                (5, t(&[(2.0, 0, 0), (-2.0, 1, 0), (-2.0, 0, 1)])),
            ],
            vec![(6, t(&[(1.0, 0, 0)]))],
        ],
        SchemeOrder::Cubic => [
            vec![
                (0, t(&[(1.0, 0, 0), (-3.0, 1, 0), (-3.0, 0, 1)])),
                (1, t(&[(3.0, 1, 0)])),
                (8, t(&[(3.0, 0, 1)])),
            ],
            vec![
                (2, t(&[(3.0, 0, 0), (-3.0, 1, 0), (-3.0, 0, 1)])),
                (3, t(&[(-2.0, 0, 0), (3.0, 1, 0)])),
                (4, t(&[(3.0, 0, 1)])),
            ],
            vec![
                (5, t(&[(3.0, 1, 0)])),
                (6, t(&[(-2.0, 0, 0), (3.0, 0, 1)])),
                (7, t(&[(3.0, 0, 0), (-3.0, 1, 0), (-3.0, 0, 1)])),
            ],
            vec![(9, t(&[(1.0, 0, 0)]))],
        ],
        SchemeOrder::Quartic => [
            vec![
                (
                    0,
                    t(&[(1.0, 0, 0), (-6.0, 1, 0), (-6.0, 0, 1), (8.0, 2, 0), (16.0, 1, 1), (8.0, 0, 2)]),
                ),
                (1, t(&[(8.0, 1, 0), (-16.0, 2, 0), (-16.0, 1, 1)])),
                (11, t(&[(8.0, 0, 1), (-16.0, 1, 1), (-16.0, 0, 2)])),
                (2, t(&[(-2.0, 1, 0), (8.0, 2, 0), (8.0, 1, 1)])),
                (10, t(&[(-2.0, 0, 1), (8.0, 1, 1), (8.0, 0, 2)])),
            ],
            vec![
                (3, t(&[(-8.0, 0, 0), (24.0, 1, 0), (8.0, 0, 1), (-16.0, 2, 0), (-16.0, 1, 1)])),
                (4, t(&[(3.0, 0, 0), (-10.0, 1, 0), (8.0, 2, 0)])),
                (5, t(&[(-8.0, 0, 1), (16.0, 1, 1)])),
                (2, t(&[(6.0, 0, 0), (-14.0, 1, 0), (-6.0, 0, 1), (8.0, 2, 0), (8.0, 1, 1)])),
                (6, t(&[(6.0, 0, 1), (-8.0, 1, 1)])),
            ],
            vec![
                (7, t(&[(-8.0, 1, 0), (16.0, 1, 1)])),
                (8, t(&[(3.0, 0, 0), (-10.0, 0, 1), (8.0, 0, 2)])),
                (9, t(&[(-8.0, 0, 0), (8.0, 1, 0), (24.0, 0, 1), (-16.0, 1, 1), (-16.0, 0, 2)])),
                (6, t(&[(6.0, 1, 0), (-8.0, 1, 1)])),
                (10, t(&[(6.0, 0, 0), (-6.0, 1, 0), (-14.0, 0, 1), (8.0, 1, 1), (8.0, 0, 2)])),
            ],
            vec![
                (12, t(&[(3.0, 0, 0), (-4.0, 1, 0), (-4.0, 0, 1)])),
                (13, t(&[(-1.0, 0, 0), (4.0, 1, 0)])),
                (14, t(&[(-1.0, 0, 0), (4.0, 0, 1)])),
            ],
        ],
    }
}

/// Trial and test polynomials for one order, with cached derivatives.
#[derive(Debug)]
pub struct BasisSet {
    pub order: SchemeOrder,
    trial: Vec<PolyWithDerivs>,
    test: [Vec<(usize, PolyWithDerivs)>; 4],
}

#[derive(Debug, Clone)]
struct PolyWithDerivs {
    p: Poly2,
    dx: Poly2,
    dy: Poly2,
    dxx: Poly2,
    dxy: Poly2,
    dyy: Poly2,
}

impl PolyWithDerivs {
    fn new(p: Poly2) -> Self {
        let dx = p.dx();
        let dy = p.dy();
        Self {
            p,
            dxx: dx.dx(),
            dxy: dx.dy(),
            dyy: dy.dy(),
            dx,
            dy,
        }
    }
}

/// Values, gradients and Hessians (xx, xy, yy) of all trial functions at a point.
#[derive(Clone, Debug)]
pub struct TrialEval {
    pub values: Vec<f64>,
    pub gradients: Vec<[f64; 2]>,
    pub hessians: Vec<[f64; 3]>,
}

/// Test function data of one region at a point: (local index, value, gradient).
pub type TestEval = Vec<(usize, f64, [f64; 2])>;

impl BasisSet {
    /// Shared, lazily built basis for `order`.
    pub fn get(order: SchemeOrder) -> &'static BasisSet {
        static CACHE: [OnceLock<BasisSet>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        CACHE[order.k() - 2].get_or_init(|| BasisSet::build(order))
    }

    fn build(order: SchemeOrder) -> Self {
        let trial = build_trial(order).into_iter().map(PolyWithDerivs::new).collect();
        let test = build_test(order).map(|r| r.into_iter().map(|(i, p)| (i, PolyWithDerivs::new(p))).collect());
        BasisSet { order, trial, test }
    }

    pub fn trial_poly(&self, i: usize) -> Poly2 {
        self.trial[i].p
    }

    /// Test polynomials of `region` keyed by local node index.
    pub fn test_polys(&self, region: Region) -> Vec<(usize, Poly2)> {
        self.test[region.index()].iter().map(|(i, p)| (*i, p.p)).collect()
    }

    /// Trial data at a reference point, no containment check.
    pub fn trial_at(&self, p: Point) -> TrialEval {
        let (x, y) = (p[0], p[1]);
        let n = self.trial.len();
        let mut out = TrialEval {
            values: Vec::with_capacity(n),
            gradients: Vec::with_capacity(n),
            hessians: Vec::with_capacity(n),
        };
        for f in &self.trial {
            out.values.push(f.p.eval(x, y));
            out.gradients.push([f.dx.eval(x, y), f.dy.eval(x, y)]);
            out.hessians.push([f.dxx.eval(x, y), f.dxy.eval(x, y), f.dyy.eval(x, y)]);
        }
        out
    }

    /// Test functions living on `region` evaluated with that region's polynomial.
    pub fn test_on_region(&self, region: Region, p: Point) -> TestEval {
        let (x, y) = (p[0], p[1]);
        self.test[region.index()]
            .iter()
            .map(|(i, f)| (*i, f.p.eval(x, y), [f.dx.eval(x, y), f.dy.eval(x, y)]))
            .collect()
    }
}

fn check_inside(p: Point) -> Result<(), RefElemError> {
    let (x, y) = (p[0], p[1]);
    if x < -OUTSIDE_TOL || y < -OUTSIDE_TOL || x + y > 1.0 + OUTSIDE_TOL || !x.is_finite() || !y.is_finite() {
        Err(RefElemError::OutsideReference(x, y))
    } else {
        Ok(())
    }
}

/// First-layer region containing `p`; points on a shared midline go to the
/// lower-indexed region.
pub fn classify(p: Point) -> Region {
    let (x, y) = (p[0], p[1]);
    if 2.0 * x + y <= 1.0 && x + 2.0 * y <= 1.0 {
        Region::Q1
    } else if 2.0 * x + y >= 1.0 && y <= x {
        Region::Q2
    } else {
        Region::Q3
    }
}

/// Trial values and reference gradients at `p`.
pub fn eval_trial(order: SchemeOrder, p: Point) -> Result<(Vec<f64>, Vec<[f64; 2]>), RefElemError> {
    check_inside(p)?;
    let e = BasisSet::get(order).trial_at(p);
    Ok((e.values, e.gradients))
}

/// All test functions at `p`; first-layer functions use the region containing `p`.
pub fn eval_test(order: SchemeOrder, p: Point) -> Result<Vec<f64>, RefElemError> {
    check_inside(p)?;
    let basis = BasisSet::get(order);
    let mut values = vec![0.0; order.local_dofs()];
    for region in [classify(p), Region::Q4] {
        for (i, v, _) in basis.test_on_region(region, p) {
            values[i] = v;
        }
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_counts() {
        for (k, n) in [(2, 7), (3, 10), (4, 15)] {
            let o = SchemeOrder::new(k).unwrap();
            assert_eq!(o.local_dofs(), n);
            assert_eq!(o.first_layer_dofs(), 3 * k);
            assert_eq!(node_coordinates(o).nodes.len(), n);
        }
        assert_eq!(SchemeOrder::new(5), Err(RefElemError::UnsupportedOrder(5)));
    }

    #[test]
    fn q1_vertices_and_areas() {
        let regions = dual_regions();
        assert_eq!(regions[0].vertices, vec![[0.0, 0.0], [0.5, 0.0], [THIRD, THIRD], [0.0, 0.5]]);
        for r in &regions[..3] {
            assert!((r.area() - 1.0 / 6.0).abs() < 1e-15);
        }
        assert!((regions[3].area() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn node_positions_from_kronecker_conditions() {
        let k2 = node_coordinates(SchemeOrder::Quadratic);
        assert_eq!(k2.nodes[6], [THIRD, THIRD]);
        assert_eq!(k2.groups[3], vec![6]);
        let k3 = node_coordinates(SchemeOrder::Cubic);
        assert_eq!(k3.nodes[3], [1.0, 0.0]);
        let k4 = node_coordinates(SchemeOrder::Quartic);
        assert_eq!(&k4.nodes[12..], &[[0.25, 0.25], [0.5, 0.25], [0.25, 0.5]]);
        assert_eq!(k4.groups[3].len(), 3);
    }

    #[test]
    fn test_values_at_sample_points() {
        let v = eval_test(SchemeOrder::Quadratic, [0.0, 0.0]).unwrap();
        assert_eq!(v[0], 1.0);
        assert!(v[1..6].iter().all(|&x| x == 0.0));
        let v = eval_test(SchemeOrder::Quartic, [0.5, 0.5]).unwrap();
        assert!((v[12] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn outside_point_rejected() {
        assert!(eval_trial(SchemeOrder::Cubic, [0.8, 0.3]).is_err());
        assert!(eval_test(SchemeOrder::Cubic, [-0.1, 0.3]).is_err());
    }

    #[test]
    fn classify_regions() {
        assert_eq!(classify([0.1, 0.1]), Region::Q1);
        assert_eq!(classify([0.8, 0.1]), Region::Q2);
        assert_eq!(classify([0.1, 0.8]), Region::Q3);
        // On the Q1/Q2 midline the lower index wins.
        assert_eq!(classify([0.4, 0.2]), Region::Q1);
    }
}
