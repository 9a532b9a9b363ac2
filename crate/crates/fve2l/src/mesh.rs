//! Primary triangulations, affine maps, dual-layer topology and DOF numbering.

use crate::refelem::{dual_region, node_coordinates, node_kind, NodeKind, Point, Region, SchemeOrder};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("degenerate rectangle [{0}, {1}] x [{2}, {3}]")]
    DegenerateDomain(f64, f64, f64, f64),
    #[error("structured mesh needs at least one interval per axis")]
    NoIntervals,
    #[error("triangle {0} references vertex {1} but only {2} vertices exist")]
    BadIndex(usize, usize, usize),
    #[error("triangle {0} is not positively oriented (det = {1})")]
    Inverted(usize, f64),
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonConforming(usize, usize),
    #[error("vertex {0} is a boundary vertex but carries marker 0")]
    UnmarkedBoundary(usize),
    #[error("mesh file parse error on line {0}: {1}")]
    Parse(usize, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Affine map from the reference triangle onto a mesh triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    /// Columns are the images of the reference edge vectors.
    pub jacobian: [[f64; 2]; 2],
    pub origin: Point,
    pub det: f64,
    /// Inverse transpose of the Jacobian, mapping reference gradients to physical ones.
    pub inv_t: [[f64; 2]; 2],
}

impl AffineMap {
    pub fn new(v0: Point, v1: Point, v2: Point) -> Self {
        let b = [[v1[0] - v0[0], v2[0] - v0[0]], [v1[1] - v0[1], v2[1] - v0[1]]];
        let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
        let inv_t = [[b[1][1] / det, -b[1][0] / det], [-b[0][1] / det, b[0][0] / det]];
        AffineMap {
            jacobian: b,
            origin: v0,
            det,
            inv_t,
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        let b = &self.jacobian;
        [
            self.origin[0] + b[0][0] * p[0] + b[0][1] * p[1],
            self.origin[1] + b[1][0] * p[0] + b[1][1] * p[1],
        ]
    }

    pub fn gradient(&self, g: [f64; 2]) -> [f64; 2] {
        let m = &self.inv_t;
        [m[0][0] * g[0] + m[0][1] * g[1], m[1][0] * g[0] + m[1][1] * g[1]]
    }

    /// Physical Hessian (xx, xy, yy) from a reference Hessian: B^{-T} H B^{-1}.
    pub fn hessian(&self, h: [f64; 3]) -> [f64; 3] {
        let m = &self.inv_t;
        let href = [[h[0], h[1]], [h[1], h[2]]];
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        s += m[i][a] * href[a][b] * m[j][b];
                    }
                }
                out[i][j] = s;
            }
        }
        [out[0][0], out[0][1], out[1][1]]
    }

    /// Maps a reference direction vector.
    pub fn direction(&self, d: Point) -> Point {
        let b = &self.jacobian;
        [b[0][0] * d[0] + b[0][1] * d[1], b[1][0] * d[0] + b[1][1] * d[1]]
    }
}

/// Conforming triangulation with per-vertex boundary markers.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    /// Nonzero on boundary vertices.
    pub markers: Vec<i32>,
    edges: Vec<[usize; 2]>,
    /// Edge ids of local edges (v0,v1), (v1,v2), (v2,v0).
    tri_edges: Vec<[usize; 3]>,
    edge_tris: Vec<Vec<usize>>,
}

impl Mesh {
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, markers: Vec<i32>) -> Result<Self, MeshError> {
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(MeshError::BadIndex(t, v, nv));
                }
            }
            let det = AffineMap::new(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]).det;
            if det <= 0.0 {
                return Err(MeshError::Inverted(t, det));
            }
        }
        let mut index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_tris: Vec<Vec<usize>> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut ids = [0; 3];
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let key = [a.min(b), a.max(b)];
                let id = *index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_tris.push(Vec::new());
                    edges.len() - 1
                });
                edge_tris[id].push(t);
                if edge_tris[id].len() > 2 {
                    return Err(MeshError::NonConforming(key[0], key[1]));
                }
                ids[e] = id;
            }
            tri_edges.push(ids);
        }
        let mesh = Mesh {
            vertices,
            triangles,
            markers,
            edges,
            tri_edges,
            edge_tris,
        };
        for e in mesh.boundary_edges() {
            for v in mesh.edges[e] {
                if mesh.markers.get(v).copied().unwrap_or(0) == 0 {
                    return Err(MeshError::UnmarkedBoundary(v));
                }
            }
        }
        Ok(mesh)
    }

    /// `n x n` rectangles over `[x0, x1] x [y0, y1]`, each cut along the
    /// lower-left to upper-right diagonal.
    pub fn build_structured(n: usize, domain: [f64; 4]) -> Result<Self, MeshError> {
        let [x0, x1, y0, y1] = domain;
        if n == 0 {
            return Err(MeshError::NoIntervals);
        }
        if !(x1 > x0 && y1 > y0) {
            return Err(MeshError::DegenerateDomain(x0, x1, y0, y1));
        }
        let m = n + 1;
        let mut vertices = Vec::with_capacity(m * m);
        let mut markers = Vec::with_capacity(m * m);
        for j in 0..m {
            for i in 0..m {
                let x = x0 + (x1 - x0) * i as f64 / n as f64;
                let y = y0 + (y1 - y0) * j as f64 / n as f64;
                vertices.push([x, y]);
                markers.push(i32::from(i == 0 || j == 0 || i == n || j == n));
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let p00 = j * m + i;
                let p10 = p00 + 1;
                let p01 = p00 + m;
                let p11 = p01 + 1;
                triangles.push([p00, p10, p11]);
                triangles.push([p00, p11, p01]);
            }
        }
        Mesh::new(vertices, triangles, markers)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    pub fn edge_triangles(&self, e: usize) -> &[usize] {
        &self.edge_tris[e]
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(|&e| self.edge_tris[e].len() == 1)
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn affine_map(&self, t: usize) -> AffineMap {
        let [a, b, c] = self.corners(t);
        AffineMap::new(a, b, c)
    }

    pub fn area(&self, t: usize) -> f64 {
        0.5 * self.affine_map(t).det
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| triangle_angles(self.corners(t)).into_iter().fold(f64::INFINITY, f64::min))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest circumdiameter.
    pub fn h(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                let la = dist(b, c);
                let lb = dist(a, c);
                let lc = dist(a, b);
                la * lb * lc / (2.0 * self.area(t))
            })
            .fold(0.0, f64::max)
    }

    /// Average element size `1 / sqrt(number of triangles)`.
    pub fn h_bar(&self) -> f64 {
        1.0 / (self.num_triangles() as f64).sqrt()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} {}", self.num_vertices(), self.num_triangles()).unwrap();
        for (v, m) in self.vertices.iter().zip(&self.markers) {
            writeln!(s, "{:?} {:?} {}", v[0], v[1], m).unwrap();
        }
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, MeshError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, msg: &str| MeshError::Parse(line + 1, msg.to_string());
        let (ln, header) = lines.next().ok_or_else(|| bad(0, "missing header"))?;
        let counts: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad(ln, "header must be two integers")))
            .collect::<Result<_, _>>()?;
        let [nv, nt] = counts[..] else {
            return Err(bad(ln, "header must be two integers"));
        };
        let mut vertices = Vec::with_capacity(nv);
        let mut markers = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, line) = lines.next().ok_or_else(|| bad(usize::MAX - 1, "missing vertex line"))?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(ln, "vertex line must be 'x y marker'"));
            }
            let x = f[0].parse::<f64>().map_err(|_| bad(ln, "bad x"))?;
            let y = f[1].parse::<f64>().map_err(|_| bad(ln, "bad y"))?;
            let m = f[2].parse::<i32>().map_err(|_| bad(ln, "bad marker"))?;
            vertices.push([x, y]);
            markers.push(m);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, line) = lines.next().ok_or_else(|| bad(usize::MAX - 1, "missing triangle line"))?;
            let idx: Vec<usize> = line
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| bad(ln, "bad vertex index")))
                .collect::<Result<_, _>>()?;
            let [i, j, k] = idx[..] else {
                return Err(bad(ln, "triangle line must be 'i j k'"));
            };
            triangles.push([i, j, k]);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(bad(ln, "trailing content"));
        }
        Mesh::new(vertices, triangles, markers)
    }

    pub fn write(&self, path: &Path) -> Result<(), MeshError> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn read(path: &Path) -> Result<Self, MeshError> {
        Mesh::from_text(&std::fs::read_to_string(path)?)
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Interior angles in degrees at the three corners.
pub fn triangle_angles(c: [Point; 3]) -> [f64; 3] {
    let angle = |p: Point, q: Point, r: Point| {
        let u = [q[0] - p[0], q[1] - p[1]];
        let v = [r[0] - p[0], r[1] - p[1]];
        let cross = u[0] * v[1] - u[1] * v[0];
        let dot = u[0] * v[0] + u[1] * v[1];
        cross.abs().atan2(dot).to_degrees()
    };
    [angle(c[0], c[1], c[2]), angle(c[1], c[2], c[0]), angle(c[2], c[0], c[1])]
}

/// One midpoint-to-barycenter segment of a triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualSegment {
    pub triangle: usize,
    pub start: Point,
    pub end: Point,
    /// Endpoints on the reference triangle.
    pub reference: (Point, Point),
    /// Pair of first-layer regions separated by the segment, lower index first.
    pub regions: (Region, Region),
    /// Unit normal pointing out of `regions.0`.
    pub normal: Point,
}

/// The two dual layers built on a primary mesh.
#[derive(Clone, Debug)]
pub struct DualTopology {
    /// For each primary vertex: the (triangle, region) pieces of its first-layer dual element.
    pub first_layer: Vec<Vec<(usize, Region)>>,
    /// Three interior segments per triangle.
    pub segments: Vec<[DualSegment; 3]>,
    pub num_second_layer: usize,
}

impl DualTopology {
    pub fn new(mesh: &Mesh) -> Self {
        let mut first_layer = vec![Vec::new(); mesh.num_vertices()];
        let mut segments = Vec::with_capacity(mesh.num_triangles());
        let reference: [(Point, Point, Region, Region); 3] = {
            let q1 = dual_region(Region::Q1).vertices;
            let q2 = dual_region(Region::Q2).vertices;
            // Q1 meets Q2 along (1/2,0)-(1/3,1/3), Q2 meets Q3 along (1/2,1/2)-(1/3,1/3),
            // Q1 meets Q3 along (1/3,1/3)-(0,1/2); each listed counterclockwise for the lower region.
            [
                (q1[1], q1[2], Region::Q1, Region::Q2),
                (q2[1], q2[2], Region::Q2, Region::Q3),
                (q1[2], q1[3], Region::Q1, Region::Q3),
            ]
        };
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for (local, region) in Region::FIRST_LAYER.iter().enumerate() {
                first_layer[tri[local]].push((t, *region));
            }
            let map = mesh.affine_map(t);
            segments.push(reference.map(|(a, b, r0, r1)| {
                let start = map.apply(a);
                let end = map.apply(b);
                let d = [end[0] - start[0], end[1] - start[1]];
                let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
                DualSegment {
                    triangle: t,
                    start,
                    end,
                    reference: (a, b),
                    regions: (r0, r1),
                    normal: [d[1] / len, -d[0] / len],
                }
            }));
        }
        DualTopology {
            first_layer,
            segments,
            num_second_layer: mesh.num_triangles(),
        }
    }

    /// Physical polygon of a region image.
    pub fn region_polygon(mesh: &Mesh, t: usize, region: Region) -> Vec<Point> {
        let map = mesh.affine_map(t);
        dual_region(region).vertices.into_iter().map(|p| map.apply(p)).collect()
    }
}

/// Global numbering of Lagrange and interior nodes for one scheme order.
///
/// Vertices come first, then edge nodes edge by edge (ordered from the
/// lower-numbered endpoint), then the interior nodes of each triangle.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub order: SchemeOrder,
    pub num_dofs: usize,
    /// Local-to-global table per triangle.
    pub triangle_dofs: Vec<Vec<usize>>,
    pub coordinates: Vec<Point>,
    pub on_boundary: Vec<bool>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, order: SchemeOrder) -> Self {
        let nv = mesh.num_vertices();
        let per_edge = order.edge_interior_nodes();
        let per_tri = order.interior_dofs();
        let ne = mesh.edges().len();
        let num_dofs = nv + ne * per_edge + mesh.num_triangles() * per_tri;
        let ref_nodes = node_coordinates(order).nodes;
        let mut coordinates = vec![[0.0, 0.0]; num_dofs];
        let mut on_boundary = vec![false; num_dofs];
        let boundary_edge: Vec<bool> = (0..ne).map(|e| mesh.edge_triangles(e).len() == 1).collect();
        let mut boundary_vertex = vec![false; nv];
        for e in mesh.boundary_edges() {
            for v in mesh.edges()[e] {
                boundary_vertex[v] = true;
            }
        }
        let mut triangle_dofs = Vec::with_capacity(mesh.num_triangles());
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let edges = mesh.triangle_edges(t);
            let map = mesh.affine_map(t);
            let dofs: Vec<usize> = (0..order.local_dofs())
                .map(|i| {
                    let g = match node_kind(order, i) {
                        NodeKind::Vertex(v) => tri[v],
                        NodeKind::Edge(e, pos) => {
                            let start = tri[e];
                            let end = tri[(e + 1) % 3];
                            let along = if start < end { pos } else { order.k() - pos };
                            nv + edges[e] * per_edge + along - 1
                        }
                        NodeKind::Interior(j) => nv + ne * per_edge + t * per_tri + j,
                    };
                    coordinates[g] = map.apply(ref_nodes[i]);
                    on_boundary[g] = match node_kind(order, i) {
                        NodeKind::Vertex(v) => boundary_vertex[tri[v]],
                        NodeKind::Edge(e, _) => boundary_edge[edges[e]],
                        NodeKind::Interior(_) => false,
                    };
                    g
                })
                .collect();
            triangle_dofs.push(dofs);
        }
        DofMap {
            order,
            num_dofs,
            triangle_dofs,
            coordinates,
            on_boundary,
        }
    }

    pub fn boundary_dofs(&self) -> Vec<usize> {
        (0..self.num_dofs).filter(|&i| self.on_boundary[i]).collect()
    }
}
