//! Triangular meshes of planar domains and the piecewise-linear operators
//! defined on them.
//!
//! Nodal functions are continuous and piecewise linear, so their gradients
//! are constant on each triangle. All integrals of cellwise quantities are
//! therefore exact sums over cells.

use std::collections::HashMap;

use crate::error::{invalid, Result};

pub type Point = [f64; 2];

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn unit_square() -> Self {
        Self::new(0.0, 1.0, 0.0, 1.0)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    fn is_degenerate(&self) -> bool {
        let finite = [self.x0, self.x1, self.y0, self.y1]
            .iter()
            .all(|v| v.is_finite());
        !finite || !(self.x1 > self.x0) || !(self.y1 > self.y0)
    }
}

/// Conforming triangulation with counterclockwise cells.
#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    areas: Vec<f64>,
    /// Gradients of the three barycentric coordinates on each cell.
    shape_grads: Vec<[[f64; 2]; 3]>,
    /// Edge-adjacent cells; at most three per cell.
    cell_neighbors: Vec<Vec<usize>>,
    vertex_cells: Vec<Vec<usize>>,
}

impl Mesh {
    /// Builds a mesh and checks orientation, conformity and boundary flags.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() || triangles.is_empty() {
            return invalid("mesh needs at least one vertex and one triangle");
        }
        let nv = vertices.len();
        let mut areas = Vec::with_capacity(triangles.len());
        let mut shape_grads = Vec::with_capacity(triangles.len());
        let mut vertex_cells = vec![Vec::new(); nv];
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= nv) {
                return invalid(format!("triangle {t} references a missing vertex"));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return invalid(format!("triangle {t} repeats a vertex"));
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            if !(det > 0.0) {
                return invalid(format!(
                    "triangle {t} has non-positive signed area {}",
                    0.5 * det
                ));
            }
            areas.push(0.5 * det);
            // grad of barycentric coordinate i is the rotated opposite edge / det
            let g = |p: Point, q: Point| [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
            shape_grads.push([g(b, c), g(c, a), g(a, b)]);
            for &i in tri {
                vertex_cells[i].push(t);
            }
        }

        let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (i, j) = (tri[k], tri[(k + 1) % 3]);
                edges.entry((i.min(j), i.max(j))).or_default().push(t);
            }
        }
        let mut boundary = vec![false; nv];
        let mut cell_neighbors = vec![Vec::new(); triangles.len()];
        for (&(i, j), cells) in &edges {
            match cells.as_slice() {
                [_] => {
                    boundary[i] = true;
                    boundary[j] = true;
                }
                &[s, t] => {
                    cell_neighbors[s].push(t);
                    cell_neighbors[t].push(s);
                }
                _ => return invalid(format!("edge ({i}, {j}) is shared by {} triangles", cells.len())),
            }
        }
        for nb in &mut cell_neighbors {
            nb.sort_unstable();
        }
        if let Some(v) = vertex_cells.iter().position(|c| c.is_empty()) {
            return invalid(format!("vertex {v} belongs to no triangle"));
        }

        Ok(Self {
            vertices,
            triangles,
            boundary,
            areas,
            shape_grads,
            cell_neighbors,
            vertex_cells,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_vertex_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn cell_areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.triangles.len()
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn shape_gradients(&self, cell: usize) -> &[[f64; 2]; 3] {
        &self.shape_grads[cell]
    }

    pub fn cell_neighbors(&self, cell: usize) -> &[usize] {
        &self.cell_neighbors[cell]
    }

    pub fn vertex_cells(&self, v: usize) -> &[usize] {
        &self.vertex_cells[v]
    }

    pub fn centroid(&self, cell: usize) -> Point {
        let [a, b, c] = self.triangles[cell].map(|i| self.vertices[i]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn centroids(&self) -> Vec<Point> {
        (0..self.num_cells()).map(|t| self.centroid(t)).collect()
    }

    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| !self.boundary[v]).collect()
    }

    /// Cells none of whose vertices lie on the boundary.
    pub fn interior_cells(&self) -> Vec<usize> {
        (0..self.num_cells())
            .filter(|&t| self.triangles[t].iter().all(|&v| !self.boundary[v]))
            .collect()
    }

    /// Vertex adjacency through mesh edges, sorted.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.num_vertices()];
        for tri in &self.triangles {
            for k in 0..3 {
                let (i, j) = (tri[k], tri[(k + 1) % 3]);
                nb[i].push(j);
                nb[j].push(i);
            }
        }
        for list in &mut nb {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    /// Cells sharing edge `(i, j)`.
    pub fn edge_cells(&self, i: usize, j: usize) -> Vec<usize> {
        self.vertex_cells[i]
            .iter()
            .copied()
            .filter(|&t| self.triangles[t].contains(&j))
            .collect()
    }
}

/// Structured mesh of `2 n^2` triangles; every grid square is split along
/// its lower-left to upper-right diagonal. Vertices are numbered row by row.
pub fn build_structured_mesh(rect: Rect, n: usize) -> Result<Mesh> {
    if n == 0 {
        return invalid("number of subdivisions must be at least 1");
    }
    if rect.is_degenerate() {
        return invalid(format!("degenerate rectangle {rect:?}"));
    }
    let hx = (rect.x1 - rect.x0) / n as f64;
    let hy = (rect.y1 - rect.y0) / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        // pin the last row/column to the exact rectangle edge
        let y = if j == n { rect.y1 } else { rect.y0 + j as f64 * hy };
        for i in 0..=n {
            let x = if i == n { rect.x1 } else { rect.x0 + i as f64 * hx };
            vertices.push([x, y]);
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (ll, lr, ur, ul) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([ll, lr, ur]);
            triangles.push([ll, ur, ul]);
        }
    }
    Mesh::new(vertices, triangles)
}

/// Values of a continuous piecewise-linear function at the mesh vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalFunction {
    values: Vec<f64>,
}

impl NodalFunction {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return invalid(format!(
                "nodal function has {} values, mesh has {} vertices",
                values.len(),
                mesh.num_vertices()
            ));
        }
        Ok(Self { values })
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        Self {
            values: mesh.vertices().iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn constant(mesh: &Mesh, c: f64) -> Self {
        Self {
            values: vec![c; mesh.num_vertices()],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| t * v).collect(),
        }
    }

    /// `self + t * other`.
    pub fn axpy(&self, t: f64, other: &NodalFunction) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + t * b)
                .collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &NodalFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// True when the boundary values are all equal.
    pub fn is_constant_on_boundary(&self, mesh: &Mesh) -> bool {
        let mut it = (0..mesh.num_vertices())
            .filter(|&v| mesh.is_boundary(v))
            .map(|v| self.values[v]);
        match it.next() {
            Some(first) => it.all(|v| v == first),
            None => true,
        }
    }
}

/// One constant 2-vector per triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct CellVectorField {
    vectors: Vec<[f64; 2]>,
}

impl CellVectorField {
    pub fn new(mesh: &Mesh, vectors: Vec<[f64; 2]>) -> Result<Self> {
        if vectors.len() != mesh.num_cells() {
            return invalid(format!(
                "cell field has {} vectors, mesh has {} cells",
                vectors.len(),
                mesh.num_cells()
            ));
        }
        Ok(Self { vectors })
    }

    pub fn vectors(&self) -> &[[f64; 2]] {
        &self.vectors
    }

    pub fn norms(&self) -> Vec<f64> {
        self.vectors.iter().map(|g| g[0].hypot(g[1])).collect()
    }
}

pub(crate) fn cell_gradient(mesh: &Mesh, values: &[f64], cell: usize) -> [f64; 2] {
    let tri = &mesh.triangles[cell];
    let grads = &mesh.shape_grads[cell];
    let mut g = [0.0; 2];
    for k in 0..3 {
        let v = values[tri[k]];
        g[0] += v * grads[k][0];
        g[1] += v * grads[k][1];
    }
    g
}

/// Cellwise gradient of the linear interpolant of `u`.
pub fn gradient(mesh: &Mesh, u: &NodalFunction) -> Result<CellVectorField> {
    if u.len() != mesh.num_vertices() {
        return invalid(format!(
            "nodal function has {} values, mesh has {} vertices",
            u.len(),
            mesh.num_vertices()
        ));
    }
    let vectors = (0..mesh.num_cells())
        .map(|t| cell_gradient(mesh, u.values(), t))
        .collect();
    Ok(CellVectorField { vectors })
}

/// `sum_T c_T |T|`.
pub fn integrate_cellwise(mesh: &Mesh, c: &[f64]) -> Result<f64> {
    if c.len() != mesh.num_cells() {
        return invalid(format!(
            "{} cell values for a mesh with {} cells",
            c.len(),
            mesh.num_cells()
        ));
    }
    Ok(c.iter().zip(mesh.cell_areas()).map(|(v, a)| v * a).sum())
}
