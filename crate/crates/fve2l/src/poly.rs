//! Dense bivariate polynomials of low total degree.

use std::ops::{Add, Mul, Sub};

/// Highest total degree representable.
pub const MAX_DEGREE: usize = 4;
const N: usize = MAX_DEGREE + 1;

/// Polynomial `sum c[a][b] x^a y^b` with `a + b <= MAX_DEGREE`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Poly2 {
    coeffs: [[f64; N]; N],
}

impl Poly2 {
    pub const ZERO: Poly2 = Poly2 {
        coeffs: [[0.0; N]; N],
    };

    pub fn constant(c: f64) -> Self {
        Self::monomial(c, 0, 0)
    }

    pub fn x() -> Self {
        Self::monomial(1.0, 1, 0)
    }

    pub fn y() -> Self {
        Self::monomial(1.0, 0, 1)
    }

    pub fn monomial(c: f64, a: usize, b: usize) -> Self {
        assert!(a + b <= MAX_DEGREE, "degree {} exceeds {}", a + b, MAX_DEGREE);
        let mut p = Self::ZERO;
        p.coeffs[a][b] = c;
        p
    }

    /// Builds a polynomial from `(coefficient, x power, y power)` terms.
    pub fn from_terms(terms: &[(f64, usize, usize)]) -> Self {
        terms
            .iter()
            .fold(Self::ZERO, |acc, &(c, a, b)| acc + Self::monomial(c, a, b))
    }

    pub fn coeff(&self, a: usize, b: usize) -> f64 {
        if a + b > MAX_DEGREE {
            0.0
        } else {
            self.coeffs[a][b]
        }
    }

    pub fn degree(&self) -> usize {
        let mut d = 0;
        for a in 0..N {
            for b in 0..N - a {
                if self.coeffs[a][b] != 0.0 {
                    d = d.max(a + b);
                }
            }
        }
        d
    }

    pub fn scale(mut self, s: f64) -> Self {
        for row in self.coeffs.iter_mut() {
            for c in row.iter_mut() {
                *c *= s;
            }
        }
        self
    }

    /// Horner evaluation in `y` nested inside `x`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut acc = 0.0;
        for a in (0..N).rev() {
            let mut inner = 0.0;
            for b in (0..N - a).rev() {
                inner = inner * y + self.coeffs[a][b];
            }
            acc = acc * x + inner;
        }
        acc
    }

    pub fn dx(&self) -> Self {
        let mut p = Self::ZERO;
        for a in 1..N {
            for b in 0..N - a {
                p.coeffs[a - 1][b] = a as f64 * self.coeffs[a][b];
            }
        }
        p
    }

    pub fn dy(&self) -> Self {
        let mut p = Self::ZERO;
        for a in 0..N {
            for b in 1..N - a {
                p.coeffs[a][b - 1] = b as f64 * self.coeffs[a][b];
            }
        }
        p
    }
}

impl Add for Poly2 {
    type Output = Poly2;
    fn add(mut self, rhs: Poly2) -> Poly2 {
        for a in 0..N {
            for b in 0..N - a {
                self.coeffs[a][b] += rhs.coeffs[a][b];
            }
        }
        self
    }
}

impl Sub for Poly2 {
    type Output = Poly2;
    fn sub(self, rhs: Poly2) -> Poly2 {
        self + rhs.scale(-1.0)
    }
}

impl Mul for Poly2 {
    type Output = Poly2;
    fn mul(self, rhs: Poly2) -> Poly2 {
        assert!(
            self.degree() + rhs.degree() <= MAX_DEGREE,
            "product degree exceeds {MAX_DEGREE}"
        );
        let mut p = Self::ZERO;
        for a in 0..N {
            for b in 0..N - a {
                let c = self.coeffs[a][b];
                if c == 0.0 {
                    continue;
                }
                for s in 0..N - a - b {
                    for t in 0..N - a - b - s {
                        p.coeffs[a + s][b + t] += c * rhs.coeffs[s][t];
                    }
                }
            }
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_derivatives() {
        // p = 1 + 2x - y + 3xy + x^2 y^2
        let p = Poly2::from_terms(&[(1.0, 0, 0), (2.0, 1, 0), (-1.0, 0, 1), (3.0, 1, 1), (1.0, 2, 2)]);
        let (x, y) = (0.3, -0.7);
        let direct = 1.0 + 2.0 * x - y + 3.0 * x * y + x * x * y * y;
        assert!((p.eval(x, y) - direct).abs() < 1e-15);
        assert!((p.dx().eval(x, y) - (2.0 + 3.0 * y + 2.0 * x * y * y)).abs() < 1e-15);
        assert!((p.dy().eval(x, y) - (-1.0 + 3.0 * x + 2.0 * x * x * y)).abs() < 1e-15);
        assert_eq!(p.degree(), 4);
    }

    #[test]
    fn product_matches_pointwise() {
        let p = Poly2::from_terms(&[(1.0, 0, 0), (-1.0, 1, 0), (-1.0, 0, 1)]);
        let q = Poly2::from_terms(&[(2.0, 1, 1), (0.5, 0, 0)]);
        let r = p * q;
        for &(x, y) in &[(0.1, 0.2), (0.5, 0.25), (-1.0, 2.0)] {
            assert!((r.eval(x, y) - p.eval(x, y) * q.eval(x, y)).abs() < 1e-14);
        }
    }
}
