//! Local and global conservation residuals on both dual layers.
//!
//! Flux form: `-int_{dK*} (C grad u_h) . n ds - int_{K*} f`.
//! Equation form: `-int_{K*} div(C grad u_h) - int_{K*} f`, piecewise over
//! the triangle pieces of a dual element.

use crate::assembly::{load_degree, Problem};
use crate::mesh::{AffineMap, DofMap, DualTopology, Mesh};
use crate::quadrature::{region_rule, segment_rule, QuadratureError};
use crate::refelem::{dual_region, polygon_area, BasisSet, Point, Region, SchemeOrder};
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConservationError {
    #[error("coefficient vector has length {got}, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io failed: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Layer {
    #[serde(rename = "I")]
    First,
    #[serde(rename = "II")]
    Second,
}

impl Layer {
    pub fn label(self) -> &'static str {
        match self {
            Layer::First => "I",
            Layer::Second => "II",
        }
    }
}

/// A dual element: a primary vertex (layer I) or a primary triangle (layer II).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DualElement {
    First(usize),
    Second(usize),
}

/// Residuals of one dual element; the second component is zero for scalar problems.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ElementResidual {
    pub layer: Layer,
    pub id: usize,
    pub centroid: Point,
    pub flux: [f64; 2],
    pub equation: [f64; 2],
}

/// Sums over one layer, accumulated in element order.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct GlobalResiduals {
    pub flux: [f64; 2],
    pub equation: [f64; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct ConservationReport {
    pub order: usize,
    pub components: usize,
    pub h: f64,
    pub first_layer: Vec<ElementResidual>,
    pub second_layer: Vec<ElementResidual>,
    pub first_global: GlobalResiduals,
    pub second_global: GlobalResiduals,
    /// `int_Omega |f|` per component, for normalized magnitudes.
    pub forcing_l1: [f64; 2],
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn sum_layer(items: &[ElementResidual]) -> GlobalResiduals {
    items.iter().fold(GlobalResiduals::default(), |acc, r| GlobalResiduals {
        flux: add(acc.flux, r.flux),
        equation: add(acc.equation, r.equation),
    })
}

/// A discrete solution together with what is needed to evaluate its fluxes.
pub struct SolutionField<'a> {
    pub mesh: &'a Mesh,
    pub order: SchemeOrder,
    pub dofs: &'a DofMap,
    pub coefficients: &'a [f64],
    pub problem: &'a dyn Problem,
    /// Quadrature degree of every residual integral.
    pub degree: usize,
    topology: DualTopology,
}

/// Physical gradients and Hessians of `u_h` per component at a reference point.
struct LocalJet {
    gradients: [[f64; 2]; 2],
    hessians: [[f64; 3]; 2],
}

impl<'a> SolutionField<'a> {
    pub fn new(
        mesh: &'a Mesh,
        order: SchemeOrder,
        dofs: &'a DofMap,
        coefficients: &'a [f64],
        problem: &'a dyn Problem,
    ) -> Result<Self, ConservationError> {
        Self::with_degree(mesh, order, dofs, coefficients, problem, load_degree(order))
    }

    pub fn with_degree(
        mesh: &'a Mesh,
        order: SchemeOrder,
        dofs: &'a DofMap,
        coefficients: &'a [f64],
        problem: &'a dyn Problem,
        degree: usize,
    ) -> Result<Self, ConservationError> {
        let expected = dofs.num_dofs * problem.components();
        if coefficients.len() != expected {
            return Err(ConservationError::Length {
                got: coefficients.len(),
                expected,
            });
        }
        region_rule(Region::Q1, degree)?;
        Ok(SolutionField {
            mesh,
            order,
            dofs,
            coefficients,
            problem,
            degree,
            topology: DualTopology::new(mesh),
        })
    }

    pub fn topology(&self) -> &DualTopology {
        &self.topology
    }

    fn jet(&self, t: usize, map: &AffineMap, p: Point) -> LocalJet {
        let m = self.problem.components();
        let trial = BasisSet::get(self.order).trial_at(p);
        let mut jet = LocalJet {
            gradients: [[0.0; 2]; 2],
            hessians: [[0.0; 3]; 2],
        };
        for (i, &g) in self.dofs.triangle_dofs[t].iter().enumerate() {
            let grad = map.gradient(trial.gradients[i]);
            let hess = map.hessian(trial.hessians[i]);
            for c in 0..m {
                let u = self.coefficients[g * m + c];
                for l in 0..2 {
                    jet.gradients[c][l] += u * grad[l];
                }
                for l in 0..3 {
                    jet.hessians[c][l] += u * hess[l];
                }
            }
        }
        jet
    }

    /// `C grad u_h` at `x`, row `c` is the flux vector of component `c`.
    fn flux_vector(&self, x: Point, jet: &LocalJet) -> [[f64; 2]; 2] {
        let m = self.problem.components();
        let c = self.problem.tensor(x);
        let mut out = [[0.0; 2]; 2];
        for (ci, row) in out.iter_mut().enumerate().take(m) {
            for (j, v) in row.iter_mut().enumerate() {
                for d in 0..m {
                    *v += c[ci][j][d][0] * jet.gradients[d][0] + c[ci][j][d][1] * jet.gradients[d][1];
                }
            }
        }
        out
    }

    /// `int (C grad u_h) . n ds` along the reference segment `a -> b` of triangle `t`,
    /// with `n` to the right of the direction of travel.
    pub fn segment_flux(&self, t: usize, a: Point, b: Point) -> [f64; 2] {
        let map = self.mesh.affine_map(t);
        let rule = segment_rule(self.degree).expect("degree checked at construction");
        let dir = map.direction([b[0] - a[0], b[1] - a[1]]);
        let nu = [dir[1], -dir[0]];
        let mut out = [0.0; 2];
        for (&s, &w) in rule.points.iter().zip(&rule.weights) {
            let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            let x = map.apply(p);
            let q = self.flux_vector(x, &self.jet(t, &map, p));
            for c in 0..2 {
                out[c] += w * (q[c][0] * nu[0] + q[c][1] * nu[1]);
            }
        }
        out
    }

    /// `int div(C grad u_h)` and `int f` over the image of `region` in triangle `t`.
    pub fn volume_terms(&self, t: usize, region: Region) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let map = self.mesh.affine_map(t);
        let rule = region_rule(region, self.degree).expect("degree checked at construction");
        let m = self.problem.components();
        let (mut div, mut force, mut force_abs) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        for (&p, &w) in rule.points.iter().zip(&rule.weights) {
            let x = map.apply(p);
            let jet = self.jet(t, &map, p);
            let c = self.problem.tensor(x);
            let dc = self.problem.tensor_divergence(x);
            let f = self.problem.forcing(x);
            let wd = w * map.det;
            for ci in 0..m {
                let mut v = 0.0;
                for d in 0..m {
                    let h = jet.hessians[d];
                    let hess = [[h[0], h[1]], [h[1], h[2]]];
                    for l in 0..2 {
                        v += dc[ci][d][l] * jet.gradients[d][l];
                        for j in 0..2 {
                            v += c[ci][j][d][l] * hess[j][l];
                        }
                    }
                }
                div[ci] += wd * v;
                force[ci] += wd * f[ci];
                force_abs[ci] += wd * f[ci].abs();
            }
        }
        (div, force, force_abs)
    }

    /// Outward flux through the three edges of triangle `t`.
    fn triangle_edge_fluxes(&self, t: usize) -> [[f64; 2]; 3] {
        let v = dual_region(Region::Q4).vertices;
        [0, 1, 2].map(|e| self.segment_flux(t, v[e], v[(e + 1) % 3]))
    }

    /// Flux through each interior dual segment of `t`, out of the lower region of the pair.
    fn dual_segment_fluxes(&self, t: usize) -> [[f64; 2]; 3] {
        self.topology.segments[t].map(|s| self.segment_flux(t, s.reference.0, s.reference.1))
    }

    pub fn local_flux_residual(&self, element: DualElement) -> [f64; 2] {
        match element {
            DualElement::Second(t) => {
                let out = self.triangle_edge_fluxes(t).into_iter().fold([0.0; 2], add);
                let (_, force, _) = self.volume_terms(t, Region::Q4);
                sub([-out[0], -out[1]], force)
            }
            DualElement::First(v) => self.first_layer_terms(v).0,
        }
    }

    pub fn local_equation_residual(&self, element: DualElement) -> [f64; 2] {
        match element {
            DualElement::Second(t) => {
                let (div, force, _) = self.volume_terms(t, Region::Q4);
                sub([-div[0], -div[1]], force)
            }
            DualElement::First(v) => self.first_layer_terms(v).1,
        }
    }

    /// Flux and equation residuals of the first-layer element of vertex `v`.
    fn first_layer_terms(&self, v: usize) -> ([f64; 2], [f64; 2]) {
        let mut outflow = [0.0; 2];
        let mut div = [0.0; 2];
        let mut force = [0.0; 2];
        for &(t, region) in &self.topology.first_layer[v] {
            let seg = self.dual_segment_fluxes(t);
            for (s, flux) in self.topology.segments[t].iter().zip(seg) {
                if s.regions.0 == region {
                    outflow = add(outflow, flux);
                } else if s.regions.1 == region {
                    outflow = sub(outflow, flux);
                }
            }
            for (a, b, edge) in primary_edge_pieces(region) {
                let e = self.mesh.triangle_edges(t)[edge];
                if self.mesh.edge_triangles(e).len() == 1 {
                    outflow = add(outflow, self.segment_flux(t, a, b));
                }
            }
            let (d, f, _) = self.volume_terms(t, region);
            div = add(div, d);
            force = add(force, f);
        }
        (sub([-outflow[0], -outflow[1]], force), sub([-div[0], -div[1]], force))
    }

    /// `sum over interior primary edges of the outward fluxes of both adjacent triangles`.
    /// Zero for fluxes continuous across edges; the layer-I flux sum equals the
    /// layer-II flux sum plus this quantity.
    pub fn interior_edge_jump_sum(&self) -> [f64; 2] {
        let per_triangle: Vec<[f64; 2]> = (0..self.mesh.num_triangles())
            .into_par_iter()
            .map(|t| {
                let edges = self.mesh.triangle_edges(t);
                self.triangle_edge_fluxes(t)
                    .into_iter()
                    .zip(edges)
                    .filter(|(_, e)| self.mesh.edge_triangles(*e).len() == 2)
                    .fold([0.0; 2], |acc, (f, _)| add(acc, f))
            })
            .collect();
        per_triangle.into_iter().fold([0.0; 2], add)
    }

    fn first_layer_centroid(&self, v: usize) -> Point {
        let (mut area, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for &(t, region) in &self.topology.first_layer[v] {
            let poly = DualTopology::region_polygon(self.mesh, t, region);
            let (a, c) = polygon_centroid(&poly);
            area += a;
            cx += a * c[0];
            cy += a * c[1];
        }
        [cx / area, cy / area]
    }

    pub fn report(&self) -> ConservationReport {
        let first_layer: Vec<ElementResidual> = (0..self.mesh.num_vertices())
            .into_par_iter()
            .map(|v| {
                let (flux, equation) = self.first_layer_terms(v);
                ElementResidual {
                    layer: Layer::First,
                    id: v,
                    centroid: self.first_layer_centroid(v),
                    flux,
                    equation,
                }
            })
            .collect();
        let per_triangle: Vec<(ElementResidual, [f64; 2])> = (0..self.mesh.num_triangles())
            .into_par_iter()
            .map(|t| {
                let c = self.mesh.corners(t);
                let (_, _, force_abs) = self.volume_terms(t, Region::Q4);
                let r = ElementResidual {
                    layer: Layer::Second,
                    id: t,
                    centroid: [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0],
                    flux: self.local_flux_residual(DualElement::Second(t)),
                    equation: self.local_equation_residual(DualElement::Second(t)),
                };
                (r, force_abs)
            })
            .collect();
        let forcing_l1 = per_triangle.iter().fold([0.0; 2], |acc, (_, f)| add(acc, *f));
        let second_layer: Vec<ElementResidual> = per_triangle.into_iter().map(|(r, _)| r).collect();
        ConservationReport {
            order: self.order.k(),
            components: self.problem.components(),
            h: self.mesh.h(),
            first_global: sum_layer(&first_layer),
            second_global: sum_layer(&second_layer),
            first_layer,
            second_layer,
            forcing_l1,
        }
    }
}

/// Pieces of the region boundary on primary edges: (start, end, local edge).
fn primary_edge_pieces(region: Region) -> Vec<(Point, Point, usize)> {
    let v = dual_region(region).vertices;
    let corner = region.index();
    // Local edge e joins local vertices e and e + 1.
    vec![(v[0], v[1], corner), (v[3], v[0], (corner + 2) % 3)]
}

/// Area and centroid of a counterclockwise polygon.
pub fn polygon_centroid(poly: &[Point]) -> (f64, Point) {
    let area = polygon_area(poly);
    let n = poly.len();
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let cross = p[0] * q[1] - q[0] * p[1];
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
    }
    (area, [cx / (6.0 * area), cy / (6.0 * area)])
}

impl ConservationReport {
    pub fn elements(&self) -> impl Iterator<Item = &ElementResidual> {
        self.first_layer.iter().chain(&self.second_layer)
    }

    pub fn max_abs(items: &[ElementResidual]) -> (f64, f64) {
        items.iter().fold((0.0f64, 0.0f64), |acc, r| {
            (
                acc.0.max(r.flux[0].abs()).max(r.flux[1].abs()),
                acc.1.max(r.equation[0].abs()).max(r.equation[1].abs()),
            )
        })
    }

    /// Global sums divided by `int |f|` per component.
    pub fn normalized(&self, sums: GlobalResiduals) -> GlobalResiduals {
        let scale = |v: [f64; 2]| {
            [0, 1].map(|c| if self.forcing_l1[c] > 0.0 { v[c] / self.forcing_l1[c] } else { v[c] })
        };
        GlobalResiduals {
            flux: scale(sums.flux),
            equation: scale(sums.equation),
        }
    }

    /// One row per dual element: layer, id, centroid, flux and equation residuals.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ConservationError> {
        let mut w = csv::Writer::from_writer(out);
        let fmt = |v: f64| format!("{v:.16e}");
        if self.components == 1 {
            w.write_record(["layer", "id", "cx", "cy", "flux", "equa"])?;
        } else {
            w.write_record(["layer", "id", "cx", "cy", "flux_x", "flux_y", "equa_x", "equa_y"])?;
        }
        for r in self.elements() {
            let mut row = vec![r.layer.label().to_string(), r.id.to_string(), fmt(r.centroid[0]), fmt(r.centroid[1])];
            for c in 0..self.components {
                row.push(fmt(r.flux[c]));
            }
            for c in 0..self.components {
                row.push(fmt(r.equation[c]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<(), ConservationError> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
