//! Triangulations of the meridian rectangle and affine reference maps.
//!
//! Triangles are stored counter-clockwise with the vertex of smallest `r`
//! first, so that `r` on the reference element reads `r0 + r10 ξ + r20 η`
//! with `r10, r20 >= 0`.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};

use crate::error::{FemError, Result};

pub type Point = Vector2<f64>;

/// How each grid square is cut into two triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Diagonal {
    /// Cut from (i, j) to (i+1, j+1).
    #[default]
    NorthEast,
    /// Cut from (i+1, j) to (i, j+1).
    NorthWest,
}

impl FromStr for Diagonal {
    type Err = FemError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "north-east" | "ne" => Ok(Diagonal::NorthEast),
            "north-west" | "nw" => Ok(Diagonal::NorthWest),
            other => Err(FemError::InvalidConfig(format!("unknown diagonal `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    /// Both endpoints on r = 0.
    Axis,
    Outer,
    Interior,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Axis => "axis",
            BoundaryTag::Outer => "outer",
            BoundaryTag::Interior => "interior",
        }
    }
}

/// Contact of a triangle with the symmetry axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriangleClass {
    /// A full edge lies on the axis.
    TypeI,
    /// Exactly one vertex on the axis.
    TypeII,
    /// No contact.
    TypeIII,
}

/// A triangle that owns an edge, with the local edge number (0, 1 or 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeOwner {
    pub triangle: usize,
    pub local: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints ordered so that `vertices[0] < vertices[1]`.
    pub vertices: [usize; 2],
    pub owners: Vec<EdgeOwner>,
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Canonically ordered vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// Global edge index of local edges (v0,v1), (v1,v2), (v2,v0).
    pub triangle_edges: Vec<[usize; 3]>,
}

/// Local edge `l` runs from local vertex `LOCAL_EDGES[l].0` to `LOCAL_EDGES[l].1`.
pub const LOCAL_EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

fn signed_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

/// Rotate a counter-clockwise triple so the first vertex minimises r, then z.
fn canonical_rotation(tri: [usize; 3], vertices: &[Point]) -> [usize; 3] {
    let key = |i: usize| (vertices[tri[i]].x, vertices[tri[i]].y);
    let mut best = 0;
    for i in 1..3 {
        let (r, z) = key(i);
        let (rb, zb) = key(best);
        if r < rb || (r == rb && z < zb) {
            best = i;
        }
    }
    [tri[best], tri[(best + 1) % 3], tri[(best + 2) % 3]]
}

impl Mesh {
    /// Builds a mesh from vertices and counter-clockwise triangles.
    pub fn from_triangles(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Mesh> {
        if triangles.is_empty() {
            return Err(FemError::InvalidMeshSize(0));
        }
        let mut canon = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = *tri;
            if signed_area(&vertices[a], &vertices[b], &vertices[c]) <= 0.0 {
                return Err(FemError::DegenerateTriangle(t));
            }
            canon.push(canonical_rotation(*tri, &vertices));
        }

        let mut lookup = std::collections::HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(canon.len());
        for (t, tri) in canon.iter().enumerate() {
            let mut ids = [0usize; 3];
            for (l, &(i, j)) in LOCAL_EDGES.iter().enumerate() {
                let (a, b) = (tri[i].min(tri[j]), tri[i].max(tri[j]));
                let id = *lookup.entry((a, b)).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: [a, b],
                        owners: Vec::with_capacity(2),
                        tag: BoundaryTag::Interior,
                    });
                    edges.len() - 1
                });
                edges[id].owners.push(EdgeOwner { triangle: t, local: l });
                ids[l] = id;
            }
            triangle_edges.push(ids);
        }
        for e in &mut edges {
            if e.owners.len() == 1 {
                let on_axis = e.vertices.iter().all(|&v| vertices[v].x == 0.0);
                e.tag = if on_axis { BoundaryTag::Axis } else { BoundaryTag::Outer };
            }
        }
        Ok(Mesh {
            vertices,
            triangles: canon,
            edges,
            triangle_edges,
        })
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Largest triangle diameter.
    pub fn h(&self) -> f64 {
        self.triangles
            .iter()
            .map(|tri| {
                LOCAL_EDGES
                    .iter()
                    .map(|&(i, j)| (self.vertices[tri[i]] - self.vertices[tri[j]]).norm())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let tri = self.triangles[t];
        [self.vertices[tri[0]], self.vertices[tri[1]], self.vertices[tri[2]]]
    }

    /// Plain text dump: `v r z`, `t i0 i1 i2`, and `e i0 i1 tag` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {}", v.x, v.y);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "t {} {} {}", t[0], t[1], t[2]);
        }
        for e in &self.edges {
            let _ = writeln!(out, "e {} {} {}", e.vertices[0], e.vertices[1], e.tag.as_str());
        }
        out
    }
}

/// Uniform triangulation of the unit square with 2n² triangles.
///
/// The side r = 0 is the symmetry axis; the other three sides are outer boundary.
pub fn build_unit_square_mesh(n: usize, diagonal: Diagonal) -> Result<Mesh> {
    if n == 0 {
        return Err(FemError::InvalidMeshSize(n));
    }
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            // i*h is exact for dyadic n; the endpoint is pinned to 1 for all n.
            let coord = |k: usize| if k == n { 1.0 } else { k as f64 * h };
            vertices.push(Point::new(coord(i), coord(j)));
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            match diagonal {
                Diagonal::NorthEast => {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                }
                Diagonal::NorthWest => {
                    triangles.push([a, b, d]);
                    triangles.push([b, c, d]);
                }
            }
        }
    }
    Mesh::from_triangles(vertices, triangles)
}

/// Every edge owned by a single triangle, with its tag.
pub fn boundary_edges(mesh: &Mesh) -> Vec<(usize, BoundaryTag)> {
    mesh.edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.owners.len() == 1)
        .map(|(i, e)| (i, e.tag))
        .collect()
}

/// Affine map from the reference triangle (0,0), (1,0), (0,1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    /// Columns are v1 − v0 and v2 − v0.
    pub jacobian: Matrix2<f64>,
    pub offset: Point,
    pub det: f64,
    /// `((r1 − r0)/r0, (r2 − r0)/r0)` when r0 > 0, otherwise the raw `(r1, r2)`.
    pub r_star: (f64, f64),
    pub class: TriangleClass,
}

impl AffineMap {
    pub fn from_points(p: [Point; 3]) -> Result<AffineMap> {
        let d1 = p[1] - p[0];
        let d2 = p[2] - p[0];
        let jacobian = Matrix2::new(d1.x, d2.x, d1.y, d2.y);
        let det = jacobian.determinant();
        if det.is_nan() || det <= 0.0 {
            return Err(FemError::DegenerateTriangle(usize::MAX));
        }
        let r0 = p[0].x;
        let r_star = if r0 > 0.0 {
            ((p[1].x - r0) / r0, (p[2].x - r0) / r0)
        } else {
            (p[1].x, p[2].x)
        };
        let on_axis = p.iter().filter(|q| q.x == 0.0).count();
        let class = match on_axis {
            0 => TriangleClass::TypeIII,
            1 => TriangleClass::TypeII,
            _ => TriangleClass::TypeI,
        };
        Ok(AffineMap {
            jacobian,
            offset: p[0],
            det,
            r_star,
            class,
        })
    }

    pub fn apply(&self, xi: f64, eta: f64) -> Point {
        self.offset + self.jacobian * Vector2::new(xi, eta)
    }

    /// r coordinate of the image of (xi, eta).
    pub fn r_at(&self, xi: f64, eta: f64) -> f64 {
        self.offset.x + self.jacobian[(0, 0)] * xi + self.jacobian[(0, 1)] * eta
    }

    pub fn r0(&self) -> f64 {
        self.offset.x
    }
}

/// Affine map of triangle `tri` in its stored canonical vertex order.
pub fn canonical_affine(tri: usize, mesh: &Mesh) -> Result<AffineMap> {
    if tri >= mesh.num_triangles() {
        return Err(FemError::InvalidConfig(format!("triangle index {tri} out of range")));
    }
    AffineMap::from_points(mesh.triangle_points(tri)).map_err(|_| FemError::DegenerateTriangle(tri))
}
