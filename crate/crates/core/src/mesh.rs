//! Structured triangulations of axis-aligned rectangles.
//!
//! The rectangle `[0, lx] x [0, ly]` is divided into `nx * ny` cells and every
//! cell is split along the same lower-left/upper-right diagonal. Edges carry a
//! fixed global orientation (from the lower to the higher vertex index) which
//! defines the sign of lowest-order face dofs shared by two triangles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four sides of the rectangle, used to attach boundary conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Bottom,
    Right,
    Top,
    Left,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 4] = [
        BoundaryTag::Bottom,
        BoundaryTag::Right,
        BoundaryTag::Top,
        BoundaryTag::Left,
    ];
}

/// Edge of a triangle: global edge index plus the relative orientation of the
/// global edge normal (+1 when it points out of the triangle).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TriEdge {
    pub edge: usize,
    pub sign: f64,
}

/// Conforming triangle mesh with oriented edges.
#[derive(Clone, Debug)]
pub struct Mesh {
    /// Vertex coordinates.
    pub vertices: Vec<[f64; 2]>,
    /// Vertex triples, positively oriented.
    pub triangles: Vec<[usize; 3]>,
    /// Edges as index pairs `a < b`, numbered lexicographically.
    pub edges: Vec<[usize; 2]>,
    /// Per triangle: its three edges (opposite local vertex 0, 1, 2) with signs.
    pub triangle_edges: Vec<[TriEdge; 3]>,
    /// Boundary tag per edge, `None` for interior edges.
    pub boundary: Vec<Option<BoundaryTag>>,
    /// Outward sign of the global edge normal for boundary edges (0 inside).
    pub boundary_sign: Vec<f64>,
    /// Triangle areas.
    pub areas: Vec<f64>,
}

impl Mesh {
    /// Assemble a mesh from raw triangles; edge data is derived.
    ///
    /// `tag` maps a boundary edge (by its vertex indices, `a < b`) to a side tag.
    ///
    /// # Errors
    /// Rejects empty vertex/triangle lists, out-of-range indices, non-positive
    /// triangle orientation and non-manifold edges.
    pub fn from_triangles(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        tag: impl Fn(usize, usize) -> BoundaryTag,
    ) -> Result<Self> {
        if triangles.is_empty() || vertices.is_empty() {
            return Err(Error::InvalidDiscretization(
                "mesh needs at least one triangle".into(),
            ));
        }
        let nv = vertices.len();
        let mut areas = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidDiscretization(format!(
                    "triangle {t} references a missing vertex"
                )));
            }
            let [a, b, c] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
            let double = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            if !double.is_finite() || double <= 0.0 {
                return Err(Error::InvalidDiscretization(format!(
                    "triangle {t} is not positively oriented (signed double area {double})"
                )));
            }
            areas.push(0.5 * double);
        }

        // Lexicographic global edge numbering.
        let mut edge_ids: BTreeMap<[usize; 2], usize> = BTreeMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let key = [a.min(b), a.max(b)];
                edge_ids.entry(key).or_default();
            }
        }
        for (i, (_, id)) in edge_ids.iter_mut().enumerate() {
            *id = i;
        }
        let edges: Vec<[usize; 2]> = edge_ids.keys().cloned().collect();

        let mut incidence = vec![0usize; edges.len()];
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut tes = [TriEdge { edge: 0, sign: 0.0 }; 3];
            let centroid = centroid(&vertices, tri);
            for k in 0..3 {
                let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let key = [a.min(b), a.max(b)];
                let e = edge_ids[&key];
                incidence[e] += 1;
                // Global normal: edge tangent (low -> high vertex) rotated clockwise.
                let (pa, pb) = (vertices[key[0]], vertices[key[1]]);
                let n = [pb[1] - pa[1], -(pb[0] - pa[0])];
                let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
                let out = [mid[0] - centroid[0], mid[1] - centroid[1]];
                let sign = if n[0] * out[0] + n[1] * out[1] > 0.0 {
                    1.0
                } else {
                    -1.0
                };
                tes[k] = TriEdge { edge: e, sign };
            }
            if tes[0].edge == tes[1].edge || tes[0].edge == tes[2].edge || tes[1].edge == tes[2].edge
            {
                return Err(Error::InvalidDiscretization(format!(
                    "triangle {t} is degenerate"
                )));
            }
            triangle_edges.push(tes);
        }

        let mut boundary = vec![None; edges.len()];
        let mut boundary_sign = vec![0.0; edges.len()];
        for (e, edge) in edges.iter().enumerate() {
            match incidence[e] {
                1 => {
                    boundary[e] = Some(tag(edge[0], edge[1]));
                }
                2 => {}
                n => {
                    return Err(Error::InvalidDiscretization(format!(
                        "edge ({}, {}) belongs to {n} triangles",
                        edge[0], edge[1]
                    )));
                }
            }
        }
        // Outward sign of boundary edges comes from their unique triangle.
        for tes in &triangle_edges {
            for te in tes {
                if boundary[te.edge].is_some() {
                    boundary_sign[te.edge] = te.sign;
                }
            }
        }

        Ok(Self {
            vertices,
            triangles,
            edges,
            triangle_edges,
            boundary,
            boundary_sign,
            areas,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt()
    }

    /// Unit normal of the global edge orientation (tangent rotated clockwise).
    pub fn edge_normal(&self, e: usize) -> [f64; 2] {
        let [a, b] = self.edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let len = self.edge_length(e);
        [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len]
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        centroid(&self.vertices, &self.triangles[t])
    }
}

fn centroid(vertices: &[[f64; 2]], tri: &[usize; 3]) -> [f64; 2] {
    let [a, b, c] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
    [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
}

/// Build the structured triangulation of `[0, lx] x [0, ly]` with `nx * ny`
/// cells, each split along the lower-left/upper-right diagonal.
///
/// # Errors
/// Requires `nx, ny >= 1` and positive finite side lengths.
pub fn build_mesh(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidDiscretization(format!(
            "mesh needs at least one cell per direction, got {nx} x {ny}"
        )));
    }
    if !(lx.is_finite() && ly.is_finite() && lx > 0.0 && ly > 0.0) {
        return Err(Error::InvalidDiscretization(format!(
            "rectangle sides must be positive, got {lx} x {ly}"
        )));
    }
    let (hx, hy) = (lx / nx as f64, ly / ny as f64);
    let stride = nx + 1;
    let mut vertices = Vec::with_capacity(stride * (ny + 1));
    for iy in 0..=ny {
        for ix in 0..=nx {
            vertices.push([ix as f64 * hx, iy as f64 * hy]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let v00 = iy * stride + ix;
            let v10 = v00 + 1;
            let v01 = v00 + stride;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let side = move |v: usize| -> (usize, usize) { (v % stride, v / stride) };
    Mesh::from_triangles(vertices, triangles, |a, b| {
        let ((ax, ay), (bx, by)) = (side(a), side(b));
        if ay == 0 && by == 0 {
            BoundaryTag::Bottom
        } else if ay == ny && by == ny {
            BoundaryTag::Top
        } else if ax == 0 && bx == 0 {
            BoundaryTag::Left
        } else {
            debug_assert!(ax == nx && bx == nx);
            BoundaryTag::Right
        }
    })
}

/// Single positively oriented triangle `(0,0), (1,0), (0,1)`; handy in tests.
#[cfg(test)]
pub(crate) fn reference_triangle() -> Mesh {
    Mesh::from_triangles(
        vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        vec![[0, 1, 2]],
        |_, _| BoundaryTag::Bottom,
    )
    .unwrap()
}
