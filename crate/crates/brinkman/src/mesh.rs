//! Structured simplicial meshes of the unit square and unit cube.
//!
//! Conventions used by the rest of the crate:
//!
//! * Geometry lives in `nalgebra::Vector3<f64>`; in 2D the z component is
//!   identically zero.
//! * Each face stores its vertices sorted by ascending global index, its
//!   measure (length in 2D, area in 3D), the face size `h_e = measure^(1/(d-1))`,
//!   and a unit normal.  The normal points from the `plus` cell toward the
//!   `minus` cell on interior faces and outward on boundary faces; `plus` is
//!   always the adjacent cell with the smaller global index.
//! * `mesh_size` is the largest cell diameter.  For this structured family it
//!   equals `sqrt(d) / n` exactly, so refining `n -> 2n` halves it exactly in
//!   floating point; the constructor cross-checks the closed form against the
//!   computed diameters.

use nalgebra::{Matrix2, Matrix3, Vector3};
use thiserror::Error;

/// Errors from mesh construction and topology queries.
#[derive(Debug, Error)]
pub enum MeshError {
    /// The subdivision count must be positive.
    #[error("subdivision count must be at least 1")]
    ZeroSubdivisions,
    /// Only 2D and 3D meshes are supported.
    #[error("unsupported dimension {0} (expected 2 or 3)")]
    UnsupportedDimension(usize),
    /// A minus-side trace was requested on a boundary face.
    #[error("face {0} is a boundary face and has no minus-side cell")]
    NoMinusCell(usize),
}

/// Which side of a face a trace is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// The cell the face normal points away from.
    Plus,
    /// The cell the face normal points into (absent on boundary faces).
    Minus,
}

/// A mesh face: an edge in 2D, a triangle in 3D.
#[derive(Debug, Clone)]
pub struct Face {
    /// Global vertex indices, sorted ascending; only the first `dim` entries
    /// are meaningful.
    pub vertices: [usize; 3],
    /// Length (2D) or area (3D).
    pub measure: f64,
    /// Face size `h_e = measure^(1/(d-1))`: length in 2D, sqrt(area) in 3D.
    pub size: f64,
    /// Unit normal, oriented from the plus cell toward the minus cell
    /// (outward on boundary faces).
    pub normal: Vector3<f64>,
    /// Adjacent cell with the smaller global index.
    pub plus: usize,
    /// Adjacent cell with the larger global index; `None` on the boundary.
    pub minus: Option<usize>,
}

impl Face {
    /// True when the face lies on the domain boundary.
    pub fn is_boundary(&self) -> bool {
        self.minus.is_none()
    }
}

/// A conforming simplicial mesh of the unit square (d = 2) or unit cube (d = 3).
#[derive(Debug, Clone)]
pub struct SimplicialMesh {
    /// Spatial dimension, 2 or 3.
    pub dim: usize,
    /// Subdivisions per side of the structured grid.
    pub subdivisions: usize,
    /// Vertex coordinates (z = 0 in 2D).
    pub vertices: Vec<Vector3<f64>>,
    /// Cell connectivity; only the first `dim + 1` entries of each row are
    /// meaningful.
    cells: Vec<[usize; 4]>,
    /// Cell measures (areas in 2D, volumes in 3D).
    pub cell_volumes: Vec<f64>,
    /// Cell barycenters.
    pub cell_barycenters: Vec<Vector3<f64>>,
    /// Constant gradients of the barycentric coordinate functions, per cell.
    grad_lambda: Vec<[Vector3<f64>; 4]>,
    /// All mesh faces; interior faces carry two adjacent cells.
    pub faces: Vec<Face>,
    /// For each cell, the face opposite each local vertex.
    cell_faces: Vec<[usize; 4]>,
    /// True for vertices lying on the domain boundary.
    pub boundary_vertex: Vec<bool>,
    /// Largest cell diameter.
    pub mesh_size: f64,
}

impl SimplicialMesh {
    /// Builds the structured triangulation with `n` subdivisions per side.
    ///
    /// In 2D each grid square is split along its lower-left to upper-right
    /// diagonal into two triangles (2 n^2 cells).  In 3D each subcube is
    /// split into six tetrahedra sharing the main diagonal (6 n^3 cells).
    pub fn structured(dim: usize, n: usize) -> Result<Self, MeshError> {
        if n == 0 {
            return Err(MeshError::ZeroSubdivisions);
        }
        match dim {
            2 => Ok(Self::structured_2d(n)),
            3 => Ok(Self::structured_3d(n)),
            d => Err(MeshError::UnsupportedDimension(d)),
        }
    }

    fn structured_2d(n: usize) -> Self {
        let nf = n as f64;
        let vid = |i: usize, j: usize| j * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push(Vector3::new(i as f64 / nf, j as f64 / nf, 0.0));
            }
        }
        let mut cells = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (a, b) = (vid(i, j), vid(i + 1, j));
                let (c, d) = (vid(i + 1, j + 1), vid(i, j + 1));
                // Diagonal a-c: lower-left to upper-right.
                cells.push([a, b, c, usize::MAX]);
                cells.push([a, c, d, usize::MAX]);
            }
        }
        Self::finish(2, n, vertices, cells)
    }

    fn structured_3d(n: usize) -> Self {
        let nf = n as f64;
        let vid = |i: usize, j: usize, k: usize| (k * (n + 1) + j) * (n + 1) + i;
        let mut vertices = Vec::with_capacity((n + 1).pow(3));
        for k in 0..=n {
            for j in 0..=n {
                for i in 0..=n {
                    vertices.push(Vector3::new(i as f64 / nf, j as f64 / nf, k as f64 / nf));
                }
            }
        }
        // Six tetrahedra per subcube, one per ordering of the three axis
        // steps along the main diagonal; adjacent subcubes automatically
        // match on shared faces.
        let axis_orders: [[usize; 3]; 6] =
            [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut cells = Vec::with_capacity(6 * n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    for order in &axis_orders {
                        let mut p = [i, j, k];
                        let mut tet = [0usize; 4];
                        tet[0] = vid(p[0], p[1], p[2]);
                        for (step, &axis) in order.iter().enumerate() {
                            p[axis] += 1;
                            tet[step + 1] = vid(p[0], p[1], p[2]);
                        }
                        cells.push(tet);
                    }
                }
            }
        }
        Self::finish(3, n, vertices, cells)
    }

    /// Computes geometry and face topology common to both constructors.
    fn finish(dim: usize, n: usize, vertices: Vec<Vector3<f64>>, cells: Vec<[usize; 4]>) -> Self {
        let nv_cell = dim + 1;
        let mut cell_volumes = Vec::with_capacity(cells.len());
        let mut cell_barycenters = Vec::with_capacity(cells.len());
        let mut grad_lambda = Vec::with_capacity(cells.len());
        let mut max_diameter: f64 = 0.0;

        for cell in &cells {
            let vs: Vec<Vector3<f64>> = cell[..nv_cell].iter().map(|&v| vertices[v]).collect();
            let mut bary = Vector3::zeros();
            for v in &vs {
                bary += v;
            }
            cell_barycenters.push(bary / nv_cell as f64);
            for a in 0..nv_cell {
                for b in (a + 1)..nv_cell {
                    max_diameter = max_diameter.max((vs[a] - vs[b]).norm());
                }
            }

            // Volume and barycentric gradients from the edge matrix
            // J = [v1 - v0, ..., vd - v0].
            let mut grads = [Vector3::zeros(); 4];
            let volume = if dim == 2 {
                let e1 = vs[1] - vs[0];
                let e2 = vs[2] - vs[0];
                let j = Matrix2::new(e1.x, e2.x, e1.y, e2.y);
                let jinv = j.try_inverse().expect("degenerate triangle");
                for i in 1..3 {
                    // Row i-1 of J^{-1} is the gradient of lambda_i.
                    grads[i] = Vector3::new(jinv[(i - 1, 0)], jinv[(i - 1, 1)], 0.0);
                }
                0.5 * (e1.x * e2.y - e1.y * e2.x).abs()
            } else {
                let e1 = vs[1] - vs[0];
                let e2 = vs[2] - vs[0];
                let e3 = vs[3] - vs[0];
                let j = Matrix3::from_columns(&[e1, e2, e3]);
                let jinv = j.try_inverse().expect("degenerate tetrahedron");
                for i in 1..4 {
                    grads[i] = Vector3::new(jinv[(i - 1, 0)], jinv[(i - 1, 1)], jinv[(i - 1, 2)]);
                }
                j.determinant().abs() / 6.0
            };
            grads[0] = -(1..nv_cell).fold(Vector3::zeros(), |acc, i| acc + grads[i]);
            grad_lambda.push(grads);
            cell_volumes.push(volume);
        }

        // Collect faces by sorted vertex key; first-touch order fixes the
        // global face numbering deterministically.
        let mut face_index: std::collections::HashMap<[usize; 3], usize> =
            std::collections::HashMap::new();
        let mut faces: Vec<Face> = Vec::new();
        let mut cell_faces = vec![[usize::MAX; 4]; cells.len()];
        for (c, cell) in cells.iter().enumerate() {
            for drop in 0..nv_cell {
                let mut key = [usize::MAX; 3];
                let mut k = 0;
                for (l, &v) in cell[..nv_cell].iter().enumerate() {
                    if l != drop {
                        key[k] = v;
                        k += 1;
                    }
                }
                key[..dim].sort_unstable();
                match face_index.get(&key) {
                    Some(&f) => {
                        faces[f].minus = Some(c);
                        cell_faces[c][drop] = f;
                    }
                    None => {
                        let f = faces.len();
                        face_index.insert(key, f);
                        faces.push(Face {
                            vertices: key,
                            measure: 0.0,
                            size: 0.0,
                            normal: Vector3::zeros(),
                            plus: c,
                            minus: None,
                        });
                        cell_faces[c][drop] = f;
                    }
                }
            }
        }

        // Face geometry: measure, size, and plus-to-minus unit normal.
        for face in faces.iter_mut() {
            let a = vertices[face.vertices[0]];
            let b = vertices[face.vertices[1]];
            let (measure, mut normal, centroid) = if dim == 2 {
                let t = b - a;
                (t.norm(), Vector3::new(t.y, -t.x, 0.0).normalize(), (a + b) / 2.0)
            } else {
                let c = vertices[face.vertices[2]];
                let cross = (b - a).cross(&(c - a));
                (0.5 * cross.norm(), cross.normalize(), (a + b + c) / 3.0)
            };
            if normal.dot(&(centroid - cell_barycenters[face.plus])) < 0.0 {
                normal = -normal;
            }
            face.measure = measure;
            face.size = if dim == 2 { measure } else { measure.sqrt() };
            face.normal = normal;
        }

        // Boundary vertices are exactly the vertices of boundary faces.
        let mut boundary_vertex = vec![false; vertices.len()];
        for face in &faces {
            if face.is_boundary() {
                for &v in &face.vertices[..dim] {
                    boundary_vertex[v] = true;
                }
            }
        }

        // Largest diameter in closed form (all cells are congruent), checked
        // against the computed maximum; the closed form makes mesh-size
        // halving under refinement exact in floating point.
        let mesh_size = (dim as f64).sqrt() / n as f64;
        assert!(
            (mesh_size - max_diameter).abs() <= 1e-12 * mesh_size,
            "closed-form mesh size {mesh_size} vs computed {max_diameter}"
        );

        SimplicialMesh {
            dim,
            subdivisions: n,
            vertices,
            cells,
            cell_volumes,
            cell_barycenters,
            grad_lambda,
            faces,
            cell_faces,
            boundary_vertex,
            mesh_size,
        }
    }

    /// Number of cells.
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Number of vertices.
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Global vertex indices of cell `c` (`dim + 1` entries).
    pub fn cell_vertices(&self, c: usize) -> &[usize] {
        &self.cells[c][..self.dim + 1]
    }

    /// Vertex coordinates of cell `c`.
    pub fn cell_coords(&self, c: usize) -> Vec<Vector3<f64>> {
        self.cell_vertices(c).iter().map(|&v| self.vertices[v]).collect()
    }

    /// Vertex coordinates of face `f` (`dim` entries, sorted vertex order).
    pub fn face_coords(&self, f: usize) -> Vec<Vector3<f64>> {
        self.faces[f].vertices[..self.dim].iter().map(|&v| self.vertices[v]).collect()
    }

    /// Faces of cell `c`; entry `l` is the face opposite local vertex `l`.
    pub fn cell_face_indices(&self, c: usize) -> &[usize] {
        &self.cell_faces[c][..self.dim + 1]
    }

    /// Constant gradients of the barycentric coordinates of cell `c`
    /// (`dim + 1` entries).
    pub fn grad_lambda(&self, c: usize) -> &[Vector3<f64>] {
        &self.grad_lambda[c][..self.dim + 1]
    }

    /// Barycentric coordinates of point `x` with respect to cell `c`
    /// (exact for affine cells, also valid outside the cell).
    pub fn barycentric(&self, c: usize, x: &Vector3<f64>) -> [f64; 4] {
        let mut lambda = [0.0; 4];
        let centered = x - self.cell_barycenters[c];
        let uniform = 1.0 / (self.dim + 1) as f64;
        for (i, g) in self.grad_lambda(c).iter().enumerate() {
            lambda[i] = uniform + g.dot(&centered);
        }
        lambda
    }

    /// The cell providing the requested trace side of face `f`.
    ///
    /// Boundary faces only have a plus side; requesting the minus side on a
    /// boundary face is an error.
    pub fn face_trace(&self, f: usize, side: Side) -> Result<usize, MeshError> {
        let face = &self.faces[f];
        match side {
            Side::Plus => Ok(face.plus),
            Side::Minus => face.minus.ok_or(MeshError::NoMinusCell(f)),
        }
    }

    /// Outward unit normal of face `f` as seen from cell `c` (which must be
    /// adjacent to the face).
    pub fn outward_normal(&self, f: usize, c: usize) -> Vector3<f64> {
        let face = &self.faces[f];
        if face.plus == c {
            face.normal
        } else {
            debug_assert_eq!(face.minus, Some(c));
            -face.normal
        }
    }
}
