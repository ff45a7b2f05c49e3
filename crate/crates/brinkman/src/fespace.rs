//! Discrete spaces: enriched Galerkin velocities, piecewise-constant
//! pressures, and the face-moment space used by the divergence-conforming
//! reconstruction.
//!
//! The velocity space is `C_h + D_h`: continuous piecewise-linear vectors
//! (one dof per vertex and component, including boundary vertices — boundary
//! data is imposed weakly) plus one discontinuous enrichment per cell, the
//! radial bubble `x - x_T` centered at the cell barycenter.  A cell therefore
//! sees `d (d + 1) + 1` local basis functions.
//!
//! The pressure space is piecewise constant with one dof per cell; the
//! zero-mean constraint is enforced at the solver level.
//!
//! The moment space parametrizes cellwise linear vector fields (the
//! lowest-order Brezzi-Douglas-Marini family) by moments of their normal
//! trace against a linear basis on each face, which makes the normal trace
//! single-valued across interior faces by construction.

use nalgebra::{DMatrix, Matrix3, Vector3};
use thiserror::Error;

use crate::mesh::SimplicialMesh;
use crate::quadrature::{self, QuadRule};

/// Barycentric tolerance for point-in-cell checks during basis evaluation.
const CELL_TOL: f64 = 1e-12;

/// Errors from space construction and evaluation.
#[derive(Debug, Error)]
pub enum SpaceError {
    /// Evaluation point lies outside the cell beyond the barycentric tolerance.
    #[error("point lies outside cell {cell} (barycentric coordinate {lambda:.3e} out of range)")]
    OutsideCell { cell: usize, lambda: f64 },
    /// Coefficient vector length does not match the space dimension.
    #[error("coefficient vector has length {got}, expected {expected}")]
    WrongLength { expected: usize, got: usize },
}

/// Value and gradient of one (vector-valued) basis function at a point.
///
/// The gradient convention is `grad[(r, c)] = d v_r / d x_c`; in 2D the z
/// row and column are zero.
#[derive(Debug, Clone, Copy)]
pub struct BasisValue {
    /// Function value.
    pub value: Vector3<f64>,
    /// Jacobian of the vector field.
    pub grad: Matrix3<f64>,
}

impl BasisValue {
    /// Divergence (trace of the Jacobian).
    pub fn div(&self) -> f64 {
        self.grad.trace()
    }
}

/// Enriched Galerkin velocity space on a simplicial mesh.
pub struct EgSpace<'m> {
    /// Underlying mesh.
    pub mesh: &'m SimplicialMesh,
    /// Number of continuous dofs: `dim * n_vertices`.
    pub n_continuous: usize,
    /// Number of enrichment dofs: one per cell.
    pub n_enrichment: usize,
}

impl<'m> EgSpace<'m> {
    /// Builds the space over `mesh`.
    pub fn new(mesh: &'m SimplicialMesh) -> Self {
        EgSpace {
            mesh,
            n_continuous: mesh.dim * mesh.n_vertices(),
            n_enrichment: mesh.n_cells(),
        }
    }

    /// Total number of velocity dofs.
    pub fn n_dofs(&self) -> usize {
        self.n_continuous + self.n_enrichment
    }

    /// Global dof of component `comp` at vertex `v`.
    pub fn continuous_dof(&self, v: usize, comp: usize) -> usize {
        debug_assert!(comp < self.mesh.dim);
        v * self.mesh.dim + comp
    }

    /// Global dof of the enrichment on cell `c`.
    pub fn enrichment_dof(&self, c: usize) -> usize {
        self.n_continuous + c
    }

    /// Number of local basis functions per cell: `d (d + 1) + 1`.
    pub fn n_local(&self) -> usize {
        self.mesh.dim * (self.mesh.dim + 1) + 1
    }

    /// Global dofs seen by cell `c`, in local basis order: for each local
    /// vertex all components, then the enrichment.
    pub fn cell_dofs(&self, c: usize) -> Vec<usize> {
        let dim = self.mesh.dim;
        let mut dofs = Vec::with_capacity(self.n_local());
        for &v in self.mesh.cell_vertices(c) {
            for comp in 0..dim {
                dofs.push(self.continuous_dof(v, comp));
            }
        }
        dofs.push(self.enrichment_dof(c));
        dofs
    }

    /// Evaluates all local basis functions of cell `c` at `x`.
    ///
    /// Fails when `x` lies outside the cell beyond a 1e-12 barycentric
    /// tolerance.
    pub fn eval_basis(&self, c: usize, x: &Vector3<f64>) -> Result<Vec<BasisValue>, SpaceError> {
        let lambda = self.mesh.barycentric(c, x);
        for &l in &lambda[..self.mesh.dim + 1] {
            if !(-CELL_TOL..=1.0 + CELL_TOL).contains(&l) {
                return Err(SpaceError::OutsideCell { cell: c, lambda: l });
            }
        }
        Ok(self.eval_basis_unchecked(c, x, &lambda))
    }

    /// Basis evaluation without the point-in-cell check, for callers that
    /// generate points from cell quadrature and already know the barycentric
    /// coordinates.
    pub fn eval_basis_unchecked(
        &self,
        c: usize,
        x: &Vector3<f64>,
        lambda: &[f64; 4],
    ) -> Vec<BasisValue> {
        let dim = self.mesh.dim;
        let grads = self.mesh.grad_lambda(c);
        let mut out = Vec::with_capacity(self.n_local());
        for l in 0..=dim {
            for comp in 0..dim {
                let mut value = Vector3::zeros();
                value[comp] = lambda[l];
                let mut grad = Matrix3::zeros();
                for cc in 0..dim {
                    grad[(comp, cc)] = grads[l][cc];
                }
                out.push(BasisValue { value, grad });
            }
        }
        // Enrichment bubble x - x_T: gradient is the identity on the first
        // `dim` coordinates, divergence is `dim`.
        let mut grad = Matrix3::zeros();
        for cc in 0..dim {
            grad[(cc, cc)] = 1.0;
        }
        out.push(BasisValue { value: x - self.mesh.cell_barycenters[c], grad });
        out
    }

    /// Evaluates the velocity field with global coefficients `coeffs` on
    /// cell `c` at `x` (no point-in-cell check).
    pub fn eval_function(
        &self,
        c: usize,
        coeffs: &[f64],
        x: &Vector3<f64>,
    ) -> Result<BasisValue, SpaceError> {
        if coeffs.len() != self.n_dofs() {
            return Err(SpaceError::WrongLength { expected: self.n_dofs(), got: coeffs.len() });
        }
        let lambda = self.mesh.barycentric(c, x);
        let basis = self.eval_basis_unchecked(c, x, &lambda);
        let mut value = Vector3::zeros();
        let mut grad = Matrix3::zeros();
        for (b, &dof) in basis.iter().zip(&self.cell_dofs(c)) {
            value += coeffs[dof] * b.value;
            grad += coeffs[dof] * b.grad;
        }
        Ok(BasisValue { value, grad })
    }
}

/// Piecewise-constant pressure space (one dof per cell).
pub struct PressureSpace<'m> {
    /// Underlying mesh.
    pub mesh: &'m SimplicialMesh,
}

impl<'m> PressureSpace<'m> {
    /// Builds the space over `mesh`.
    pub fn new(mesh: &'m SimplicialMesh) -> Self {
        PressureSpace { mesh }
    }

    /// Number of pressure dofs (= number of cells).
    pub fn n_dofs(&self) -> usize {
        self.mesh.n_cells()
    }

    /// Volume-weighted mean of a coefficient vector.
    pub fn mean(&self, coeffs: &[f64]) -> f64 {
        let volume: f64 = self.mesh.cell_volumes.iter().sum();
        let weighted: f64 = coeffs
            .iter()
            .zip(&self.mesh.cell_volumes)
            .map(|(&c, &v)| c * v)
            .sum();
        weighted / volume
    }
}

/// Value of face moment function `k` at a point with face-barycentric
/// coordinates `lambda` (with respect to the sorted face vertices).
///
/// On edges the functions are `1` and the signed arclength from the midpoint
/// scaled by the edge length; on triangles `1`, `lambda_0 - 1/3`, and
/// `lambda_1 - 1/3`.  They form a basis of the linear functions on the face.
pub fn face_moment_value(dim: usize, k: usize, lambda: &[f64; 4]) -> f64 {
    match (dim, k) {
        (2, 0) => 1.0,
        (2, 1) => lambda[1] - 0.5,
        (3, 0) => 1.0,
        (3, 1) => lambda[0] - 1.0 / 3.0,
        (3, 2) => lambda[1] - 1.0 / 3.0,
        _ => panic!("face_moment_value: invalid dim {dim} / moment {k}"),
    }
}

/// Cellwise-linear vector fields parametrized by face moments of their
/// normal trace.
///
/// Each face carries `dim` dofs: the moments of `v . n_e` against the face
/// moment functions, with the global face normal (so adjacent cells agree on
/// the dofs, which makes the normal trace single-valued).  Per cell the
/// `d (d + 1)` moments are in bijection with the `d (d + 1)`-dimensional
/// space of linear vector fields; the dual basis is materialized by
/// inverting the local moment matrix.
pub struct HdivMomentSpace<'m> {
    /// Underlying mesh.
    pub mesh: &'m SimplicialMesh,
    /// Inverse local moment matrix per cell; column `j` holds the nodal
    /// coefficients (vertex-hat times component) of dual basis `j`.
    dual_coeffs: Vec<DMatrix<f64>>,
}

impl<'m> HdivMomentSpace<'m> {
    /// Builds the space, inverting one `d(d+1)` square matrix per cell.
    pub fn new(mesh: &'m SimplicialMesh) -> Self {
        let dim = mesh.dim;
        let n_local = dim * (dim + 1);
        let face_rule = quadrature::assembly_face_rule(dim);
        let mut dual_coeffs = Vec::with_capacity(mesh.n_cells());
        for c in 0..mesh.n_cells() {
            let mut moments = DMatrix::<f64>::zeros(n_local, n_local);
            for (lf, &f) in mesh.cell_face_indices(c).iter().enumerate() {
                let face = &mesh.faces[f];
                let coords = mesh.face_coords(f);
                for (q, lam_face) in face_rule.points.iter().enumerate() {
                    let x = face_rule.physical_point(q, &coords);
                    let w = face_rule.weights[q] * face.measure;
                    let lam_cell = mesh.barycentric(c, &x);
                    for k in 0..dim {
                        let m = face_moment_value(dim, k, lam_face);
                        let row = lf * dim + k;
                        // Columns enumerate the nodal basis lambda_i e_comp.
                        for i in 0..=dim {
                            for comp in 0..dim {
                                let col = i * dim + comp;
                                moments[(row, col)] +=
                                    w * m * lam_cell[i] * face.normal[comp];
                            }
                        }
                    }
                }
            }
            let inv = moments
                .try_inverse()
                .expect("local moment matrix is singular (degenerate cell)");
            dual_coeffs.push(inv);
        }
        HdivMomentSpace { mesh, dual_coeffs }
    }

    /// Total number of moment dofs: `dim` per face.
    pub fn n_dofs(&self) -> usize {
        self.mesh.dim * self.mesh.faces.len()
    }

    /// Global dof of moment `k` on face `f`.
    pub fn face_dof(&self, f: usize, k: usize) -> usize {
        debug_assert!(k < self.mesh.dim);
        f * self.mesh.dim + k
    }

    /// Number of local dofs per cell: `d (d + 1)`.
    pub fn n_local(&self) -> usize {
        self.mesh.dim * (self.mesh.dim + 1)
    }

    /// Global moment dofs seen by cell `c`, in local order (faces in
    /// cell-face order, moments within each face).
    pub fn cell_dofs(&self, c: usize) -> Vec<usize> {
        let dim = self.mesh.dim;
        let mut dofs = Vec::with_capacity(self.n_local());
        for &f in self.mesh.cell_face_indices(c) {
            for k in 0..dim {
                dofs.push(self.face_dof(f, k));
            }
        }
        dofs
    }

    /// Evaluates all dual basis fields of cell `c` at `x`; entry `j`
    /// corresponds to local dof `j` and carries the (constant) divergence.
    pub fn eval_dual_basis(&self, c: usize, x: &Vector3<f64>) -> Vec<(Vector3<f64>, f64)> {
        let dim = self.mesh.dim;
        let lambda = self.mesh.barycentric(c, x);
        let grads = self.mesh.grad_lambda(c);
        let inv = &self.dual_coeffs[c];
        let n_local = self.n_local();
        let mut out = Vec::with_capacity(n_local);
        for j in 0..n_local {
            let mut value = Vector3::zeros();
            let mut div = 0.0;
            for i in 0..=dim {
                for comp in 0..dim {
                    let coeff = inv[(i * dim + comp, j)];
                    value[comp] += coeff * lambda[i];
                    div += coeff * grads[i][comp];
                }
            }
            out.push((value, div));
        }
        out
    }

    /// Evaluates the field with local moment values `local` on cell `c` at
    /// `x`, returning the value and the constant divergence.
    pub fn eval_local(
        &self,
        c: usize,
        local: &[f64],
        x: &Vector3<f64>,
    ) -> Result<(Vector3<f64>, f64), SpaceError> {
        if local.len() != self.n_local() {
            return Err(SpaceError::WrongLength { expected: self.n_local(), got: local.len() });
        }
        let basis = self.eval_dual_basis(c, x);
        let mut value = Vector3::zeros();
        let mut div = 0.0;
        for (m, (bv, bd)) in local.iter().zip(&basis) {
            value += *m * *bv;
            div += *m * *bd;
        }
        Ok((value, div))
    }

    /// Evaluates the field with global moment coefficients `coeffs` on cell
    /// `c` at `x`.
    pub fn eval_function(
        &self,
        c: usize,
        coeffs: &[f64],
        x: &Vector3<f64>,
    ) -> Result<(Vector3<f64>, f64), SpaceError> {
        if coeffs.len() != self.n_dofs() {
            return Err(SpaceError::WrongLength { expected: self.n_dofs(), got: coeffs.len() });
        }
        let local: Vec<f64> = self.cell_dofs(c).iter().map(|&d| coeffs[d]).collect();
        self.eval_local(c, &local, x)
    }
}

/// Face quadrature points paired with both face- and cell-barycentric
/// coordinates; shared by assembly and reconstruction loops.
pub struct FacePoint {
    /// Physical coordinates.
    pub x: Vector3<f64>,
    /// Quadrature weight scaled by the face measure.
    pub w: f64,
    /// Barycentric coordinates with respect to the sorted face vertices.
    pub lambda_face: [f64; 4],
}

/// Maps a face rule onto face `f`, scaling weights by the face measure.
pub fn face_points(mesh: &SimplicialMesh, f: usize, rule: &QuadRule) -> Vec<FacePoint> {
    let coords = mesh.face_coords(f);
    let measure = mesh.faces[f].measure;
    (0..rule.len())
        .map(|q| FacePoint {
            x: rule.physical_point(q, &coords),
            w: rule.weights[q] * measure,
            lambda_face: rule.points[q],
        })
        .collect()
}
