//! Gauss rules on the reference triangle, the dual regions and line segments.

use crate::refelem::{dual_region, Point, Region};
use gauss_quad::GaussLegendre;
use std::sync::OnceLock;
use thiserror::Error;

/// Highest exactness degree served for areas and segments.
pub const MAX_DEGREE: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature degree {0} exceeds the supported maximum {MAX_DEGREE}")]
    UnsupportedDegree(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(Point) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }

    /// Affine image of a reference-triangle rule on the triangle `(a, b, c)`.
    fn mapped(reference: &QuadratureRule, a: Point, b: Point, c: Point) -> QuadratureRule {
        let e1 = [b[0] - a[0], b[1] - a[1]];
        let e2 = [c[0] - a[0], c[1] - a[1]];
        let jac = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
        let points = reference
            .points
            .iter()
            .map(|p| [a[0] + p[0] * e1[0] + p[1] * e2[0], a[1] + p[0] * e1[1] + p[1] * e2[1]])
            .collect();
        let weights = reference.weights.iter().map(|w| w * jac).collect();
        QuadratureRule {
            points,
            weights,
            degree: reference.degree,
        }
    }

    fn append(&mut self, other: QuadratureRule) {
        self.points.extend(other.points);
        self.weights.extend(other.weights);
    }
}

/// Gauss-Legendre rule on [0, 1] exact through `degree`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl SegmentRule {
    /// Integral of `f` along the straight segment `a -> b` with respect to arc length.
    pub fn integrate_on(&self, a: Point, b: Point, f: impl Fn(Point) -> f64) -> f64 {
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]))
            .sum::<f64>()
            * len
    }
}

fn gauss_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = GaussLegendre::new(n.try_into().expect("positive point count"));
    rule.iter().map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).unzip()
}

fn build_segment(degree: usize) -> SegmentRule {
    let n = degree / 2 + 1;
    let (points, weights) = gauss_unit(n);
    SegmentRule { points, weights, degree }
}

fn build_triangle(degree: usize) -> QuadratureRule {
    if degree <= 1 {
        return QuadratureRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
            degree,
        };
    }
    // Collapsed tensor rule: x = u, y = v (1 - u), Jacobian 1 - u.
    let n = degree.div_ceil(2) + 1;
    let (nodes, w) = gauss_unit(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (i, &u) in nodes.iter().enumerate() {
        for (j, &v) in nodes.iter().enumerate() {
            points.push([u, v * (1.0 - u)]);
            weights.push(w[i] * w[j] * (1.0 - u));
        }
    }
    QuadratureRule { points, weights, degree }
}

fn build_region(region: Region, degree: usize) -> QuadratureRule {
    let base = triangle_rule(degree).expect("degree checked by caller");
    let v = dual_region(region).vertices;
    if region == Region::Q4 {
        return base.clone();
    }
    // Split along the diagonal from the primary-vertex corner to the barycenter.
    let mut rule = QuadratureRule::mapped(base, v[0], v[1], v[2]);
    rule.append(QuadratureRule::mapped(base, v[0], v[2], v[3]));
    rule
}

fn check(degree: usize) -> Result<(), QuadratureError> {
    if degree > MAX_DEGREE {
        Err(QuadratureError::UnsupportedDegree(degree))
    } else {
        Ok(())
    }
}

/// Rule on the reference triangle exact for polynomials up to `degree`.
pub fn triangle_rule(degree: usize) -> Result<&'static QuadratureRule, QuadratureError> {
    static CACHE: OnceLock<Vec<QuadratureRule>> = OnceLock::new();
    check(degree)?;
    Ok(&CACHE.get_or_init(|| (0..=MAX_DEGREE).map(build_triangle).collect())[degree])
}

/// Composite rule on a dual region of the reference triangle.
pub fn region_rule(region: Region, degree: usize) -> Result<&'static QuadratureRule, QuadratureError> {
    static CACHE: OnceLock<Vec<[QuadratureRule; 4]>> = OnceLock::new();
    check(degree)?;
    let table = CACHE.get_or_init(|| {
        (0..=MAX_DEGREE)
            .map(|d| Region::ALL.map(|r| build_region(r, d)))
            .collect()
    });
    Ok(&table[degree][region.index()])
}

/// Gauss-Legendre rule on [0, 1].
pub fn segment_rule(degree: usize) -> Result<&'static SegmentRule, QuadratureError> {
    static CACHE: OnceLock<Vec<SegmentRule>> = OnceLock::new();
    check(degree)?;
    Ok(&CACHE.get_or_init(|| (0..=MAX_DEGREE).map(build_segment).collect())[degree])
}

/// Rule on an arbitrary triangle.
pub fn rule_on_triangle(a: Point, b: Point, c: Point, degree: usize) -> Result<QuadratureRule, QuadratureError> {
    Ok(QuadratureRule::mapped(triangle_rule(degree)?, a, b, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    fn monomial_exact(a: u32, b: u32) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn centroid_rule() {
        let r = triangle_rule(1).unwrap();
        assert_eq!(r.points, vec![[1.0 / 3.0, 1.0 / 3.0]]);
        assert_eq!(r.weights, vec![0.5]);
    }

    #[test]
    fn monomial_grid_exactness() {
        for degree in 0..=MAX_DEGREE {
            let rule = triangle_rule(degree).unwrap();
            assert!(rule.weights.iter().all(|&w| w > 0.0));
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    let got = rule.integrate(|p| p[0].powi(a as i32) * p[1].powi(b as i32));
                    let exact = monomial_exact(a, b);
                    assert!(((got - exact) / exact).abs() < 1e-13, "deg {degree} x^{a} y^{b}: {got} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn x2y2_integral() {
        let got = triangle_rule(4).unwrap().integrate(|p| p[0] * p[0] * p[1] * p[1]);
        assert!((got - 1.0 / 180.0).abs() < 1e-16);
    }

    #[test]
    fn region_integrals() {
        let q1 = region_rule(Region::Q1, 2).unwrap();
        assert!((q1.integrate(|_| 1.0) - 1.0 / 6.0).abs() < 1e-15);
        // Exact value from the centroids of the two sub-triangles: 5/216 + 2/216.
        assert!((q1.integrate(|p| p[0]) - 7.0 / 216.0).abs() < 1e-15);
        let f = |p: Point| 1.0 + p[0] - 3.0 * p[0] * p[1] * p[1] + p[1].powi(4);
        let sum: f64 = Region::FIRST_LAYER
            .iter()
            .map(|&r| region_rule(r, 4).unwrap().integrate(f))
            .sum();
        let whole = region_rule(Region::Q4, 4).unwrap().integrate(f);
        assert!((sum - whole).abs() < 1e-15);
    }

    #[test]
    fn segment_rules() {
        let r = segment_rule(1).unwrap();
        assert_eq!(r.points.len(), 1);
        assert!((r.points[0] - 0.5).abs() < 1e-15);
        let two = segment_rule(3).unwrap();
        assert_eq!(two.points.len(), 2);
        let cubic: f64 = two.points.iter().zip(&two.weights).map(|(t, w)| w * t.powi(3)).sum();
        assert!((cubic - 0.25).abs() < 1e-15);
        let len = two.integrate_on([0.5, 0.0], [1.0 / 3.0, 1.0 / 3.0], |_| 1.0);
        assert!((len - 5f64.sqrt() / 6.0).abs() < 1e-15);
    }

    #[test]
    fn too_high_degree() {
        assert_eq!(triangle_rule(MAX_DEGREE + 1), Err(QuadratureError::UnsupportedDegree(MAX_DEGREE + 1)));
    }
}
