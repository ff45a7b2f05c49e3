//! Assembly of the discrete bilinear forms and load vectors.
//!
//! Conventions (shared with the analysis module):
//!
//! * On an interior face the jump is `[[v]] = v_plus - v_minus` and the
//!   average is `{v} = (v_plus + v_minus) / 2`, with the face normal
//!   pointing from the plus cell to the minus cell.  On boundary faces both
//!   jump and average reduce to the full trace and the normal points
//!   outward.
//! * The viscous form is the symmetric interior-penalty Laplacian
//!   `(grad v, grad w) - <{grad v} n, [[w]]> - <{grad w} n, [[v]]>
//!    + h1_penalty <h_e^{-1} [[v]], [[w]]>`, assembled *without* the viscous
//!   coefficient; callers scale it when combining forms.
//! * The reaction form is `(sigma v, w)` over cells plus the stabilizing
//!   jump term `l2_penalty <sigma_e h_e [[v]], [[w]]>`, where `sigma_e` is
//!   the arithmetic mean of the adjacent cell values (the single value on
//!   boundary faces), which keeps the form symmetric and reduces to the
//!   constant-coefficient form when sigma is uniform.  The reconstructed
//!   variant replaces the cell term by `(sigma R v, R w)`.
//! * The divergence form couples pressures and velocities as
//!   `b(w, q) = (div w, q) - <[[w]] . n, {q}>`.
//!
//! Boundary data enters weakly (Nitsche): all velocity dofs stay free and
//! `assemble_boundary_corrections` produces the right-hand-side terms that
//! impose `u = g` through the consistency and penalty terms.

use nalgebra::Vector3;
use thiserror::Error;

use crate::fespace::{face_points, BasisValue, EgSpace, HdivMomentSpace, PressureSpace};
use crate::quadrature;
use crate::reconstruction::Reconstruction;
use crate::sparse::CsrMatrix;

/// Errors from form assembly.
#[derive(Debug, Error)]
pub enum AssemblyError {
    /// Penalty parameters must be strictly positive.
    #[error("penalty parameter must be positive, got {0}")]
    NonpositivePenalty(f64),
    /// The viscous coefficient must be strictly positive.
    #[error("viscous coefficient must be positive, got {0}")]
    NonpositiveViscosity(f64),
    /// The reaction coefficient vector must have one positive entry per cell.
    #[error("reaction coefficient: expected {expected} positive per-cell values, got {problem}")]
    InvalidReaction { expected: usize, problem: String },
}

fn check_penalty(p: f64) -> Result<(), AssemblyError> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(AssemblyError::NonpositivePenalty(p))
    }
}

fn check_sigma(sigma: &[f64], n_cells: usize) -> Result<(), AssemblyError> {
    if sigma.len() != n_cells {
        return Err(AssemblyError::InvalidReaction {
            expected: n_cells,
            problem: format!("length {}", sigma.len()),
        });
    }
    if let Some(bad) = sigma.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
        return Err(AssemblyError::InvalidReaction {
            expected: n_cells,
            problem: format!("value {bad}"),
        });
    }
    Ok(())
}

/// One side of a face during assembly: which cell, the jump sign of traces
/// taken from it, and the averaging weight.
struct FaceSide {
    cell: usize,
    sign: f64,
    avg: f64,
}

/// Plus side first, then the minus side when the face is interior.
fn face_sides(mesh: &crate::mesh::SimplicialMesh, f: usize) -> Vec<FaceSide> {
    let face = &mesh.faces[f];
    match face.minus {
        Some(minus) => vec![
            FaceSide { cell: face.plus, sign: 1.0, avg: 0.5 },
            FaceSide { cell: minus, sign: -1.0, avg: 0.5 },
        ],
        None => vec![FaceSide { cell: face.plus, sign: 1.0, avg: 1.0 }],
    }
}

/// Flushes a dense local block into the triplet list, skipping exact zeros.
/// Accumulating per cell or face first keeps the triplet count independent
/// of the quadrature order, which dominates assembly memory on fine meshes.
fn push_block(triplets: &mut Vec<(usize, usize, f64)>, rows: &[usize], cols: &[usize], local: &[f64]) {
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            let v = local[i * cols.len() + j];
            if v != 0.0 {
                triplets.push((r, c, v));
            }
        }
    }
}

/// Per-side basis values at every quadrature point of a face.
fn side_basis(
    eg: &EgSpace<'_>,
    side: &FaceSide,
    points: &[crate::fespace::FacePoint],
) -> Vec<Vec<BasisValue>> {
    points
        .iter()
        .map(|p| {
            let lambda = eg.mesh.barycentric(side.cell, &p.x);
            eg.eval_basis_unchecked(side.cell, &p.x, &lambda)
        })
        .collect()
}

/// Assembles the interior-penalty viscous form (without the viscous
/// coefficient).
pub fn assemble_viscous(eg: &EgSpace<'_>, h1_penalty: f64) -> Result<CsrMatrix, AssemblyError> {
    check_penalty(h1_penalty)?;
    let mesh = eg.mesh;
    let dim = mesh.dim;
    let cell_rule = quadrature::assembly_cell_rule(dim);
    let face_rule = quadrature::assembly_face_rule(dim);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();

    // Cell term (grad v, grad w).
    for c in 0..mesh.n_cells() {
        let dofs = eg.cell_dofs(c);
        let coords = mesh.cell_coords(c);
        let mut local = vec![0.0; dofs.len() * dofs.len()];
        for q in 0..cell_rule.len() {
            let x = cell_rule.physical_point(q, &coords);
            let w = cell_rule.weights[q] * mesh.cell_volumes[c];
            let basis = eg.eval_basis_unchecked(c, &x, &cell_rule.points[q]);
            for (i, bi) in basis.iter().enumerate() {
                for (j, bj) in basis.iter().enumerate() {
                    local[i * dofs.len() + j] += w * bi.grad.dot(&bj.grad); // Frobenius product
                }
            }
        }
        push_block(&mut triplets, &dofs, &dofs, &local);
    }

    // Face terms: consistency, symmetry, and penalty.
    for f in 0..mesh.faces.len() {
        let face = &mesh.faces[f];
        let normal = face.normal;
        let points = face_points(mesh, f, &face_rule);
        let sides = face_sides(mesh, f);
        let bases: Vec<_> = sides.iter().map(|s| side_basis(eg, s, &points)).collect();
        let dofs: Vec<usize> = sides.iter().flat_map(|s| eg.cell_dofs(s.cell)).collect();
        let offsets: Vec<usize> = sides.iter().map(|s| s.cell).scan(0, |acc, c| {
            let start = *acc;
            *acc += eg.cell_dofs(c).len();
            Some(start)
        }).collect();
        let nd = dofs.len();
        let mut local = vec![0.0; nd * nd];
        for (q, p) in points.iter().enumerate() {
            for (si, side_i) in sides.iter().enumerate() {
                for (i, bi) in bases[si][q].iter().enumerate() {
                    let jump_i = side_i.sign * bi.value;
                    let avg_grad_i = side_i.avg * (bi.grad * normal);
                    for (sj, side_j) in sides.iter().enumerate() {
                        for (j, bj) in bases[sj][q].iter().enumerate() {
                            let jump_j = side_j.sign * bj.value;
                            let avg_grad_j = side_j.avg * (bj.grad * normal);
                            let val = p.w
                                * (-avg_grad_i.dot(&jump_j) - avg_grad_j.dot(&jump_i)
                                    + h1_penalty / face.size * jump_i.dot(&jump_j));
                            local[(offsets[si] + i) * nd + offsets[sj] + j] += val;
                        }
                    }
                }
            }
        }
        push_block(&mut triplets, &dofs, &dofs, &local);
    }
    Ok(CsrMatrix::from_triplets(eg.n_dofs(), eg.n_dofs(), &triplets))
}

/// Face-penalty part of the reaction forms:
/// `l2_penalty <sigma_e h_e [[v]], [[w]]>`.
fn reaction_penalty_triplets(
    eg: &EgSpace<'_>,
    sigma: &[f64],
    l2_penalty: f64,
    triplets: &mut Vec<(usize, usize, f64)>,
) {
    let mesh = eg.mesh;
    let face_rule = quadrature::assembly_face_rule(mesh.dim);
    for f in 0..mesh.faces.len() {
        let face = &mesh.faces[f];
        let sigma_face = match face.minus {
            Some(minus) => 0.5 * (sigma[face.plus] + sigma[minus]),
            None => sigma[face.plus],
        };
        let points = face_points(mesh, f, &face_rule);
        let sides = face_sides(mesh, f);
        let bases: Vec<_> = sides.iter().map(|s| side_basis(eg, s, &points)).collect();
        let dofs: Vec<usize> = sides.iter().flat_map(|s| eg.cell_dofs(s.cell)).collect();
        let offsets: Vec<usize> = sides.iter().map(|s| s.cell).scan(0, |acc, c| {
            let start = *acc;
            *acc += eg.cell_dofs(c).len();
            Some(start)
        }).collect();
        let nd = dofs.len();
        let mut local = vec![0.0; nd * nd];
        for (q, p) in points.iter().enumerate() {
            let scale = l2_penalty * sigma_face * face.size * p.w;
            for (si, side_i) in sides.iter().enumerate() {
                for (i, bi) in bases[si][q].iter().enumerate() {
                    let jump_i = side_i.sign * bi.value;
                    for (sj, side_j) in sides.iter().enumerate() {
                        for (j, bj) in bases[sj][q].iter().enumerate() {
                            let jump_j = side_j.sign * bj.value;
                            local[(offsets[si] + i) * nd + offsets[sj] + j] +=
                                scale * jump_i.dot(&jump_j);
                        }
                    }
                }
            }
        }
        push_block(triplets, &dofs, &dofs, &local);
    }
}

/// Assembles the standard reaction form `(sigma v, w) + jump penalty`.
pub fn assemble_reaction(
    eg: &EgSpace<'_>,
    sigma: &[f64],
    l2_penalty: f64,
) -> Result<CsrMatrix, AssemblyError> {
    check_penalty(l2_penalty)?;
    let mesh = eg.mesh;
    check_sigma(sigma, mesh.n_cells())?;
    let cell_rule = quadrature::assembly_cell_rule(mesh.dim);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for c in 0..mesh.n_cells() {
        let dofs = eg.cell_dofs(c);
        let coords = mesh.cell_coords(c);
        let mut local = vec![0.0; dofs.len() * dofs.len()];
        for q in 0..cell_rule.len() {
            let x = cell_rule.physical_point(q, &coords);
            let w = cell_rule.weights[q] * mesh.cell_volumes[c] * sigma[c];
            let basis = eg.eval_basis_unchecked(c, &x, &cell_rule.points[q]);
            for (i, bi) in basis.iter().enumerate() {
                for (j, bj) in basis.iter().enumerate() {
                    local[i * dofs.len() + j] += w * bi.value.dot(&bj.value);
                }
            }
        }
        push_block(&mut triplets, &dofs, &dofs, &local);
    }
    reaction_penalty_triplets(eg, sigma, l2_penalty, &mut triplets);
    Ok(CsrMatrix::from_triplets(eg.n_dofs(), eg.n_dofs(), &triplets))
}

/// Assembles the mass matrix of the moment space with per-cell weight
/// `sigma`: `(sigma b_i, b_j)` over all dual basis fields.
pub fn assemble_hdiv_mass(
    hdiv: &HdivMomentSpace<'_>,
    sigma: &[f64],
) -> Result<CsrMatrix, AssemblyError> {
    let mesh = hdiv.mesh;
    check_sigma(sigma, mesh.n_cells())?;
    let cell_rule = quadrature::assembly_cell_rule(mesh.dim);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for c in 0..mesh.n_cells() {
        let dofs = hdiv.cell_dofs(c);
        let coords = mesh.cell_coords(c);
        let mut local = vec![0.0; dofs.len() * dofs.len()];
        for q in 0..cell_rule.len() {
            let x = cell_rule.physical_point(q, &coords);
            let w = cell_rule.weights[q] * mesh.cell_volumes[c] * sigma[c];
            let basis = hdiv.eval_dual_basis(c, &x);
            for (i, (bi, _)) in basis.iter().enumerate() {
                for (j, (bj, _)) in basis.iter().enumerate() {
                    local[i * dofs.len() + j] += w * bi.dot(bj);
                }
            }
        }
        push_block(&mut triplets, &dofs, &dofs, &local);
    }
    Ok(CsrMatrix::from_triplets(hdiv.n_dofs(), hdiv.n_dofs(), &triplets))
}

/// Assembles the pressure-robust reaction form
/// `(sigma R v, R w) + jump penalty`.
pub fn assemble_reaction_reconstructed(
    eg: &EgSpace<'_>,
    hdiv: &HdivMomentSpace<'_>,
    rec: &Reconstruction,
    sigma: &[f64],
    l2_penalty: f64,
) -> Result<CsrMatrix, AssemblyError> {
    check_penalty(l2_penalty)?;
    check_sigma(sigma, eg.mesh.n_cells())?;
    let mass = assemble_hdiv_mass(hdiv, sigma)?;
    // (sigma R v, R w) = R^T M R as sparse products.
    let reconstructed_mass = rec.matrix.transpose().matmul(&mass.matmul(&rec.matrix));
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    reaction_penalty_triplets(eg, sigma, l2_penalty, &mut triplets);
    let penalty = CsrMatrix::from_triplets(eg.n_dofs(), eg.n_dofs(), &triplets);
    Ok(reconstructed_mass.add_scaled(1.0, &penalty, 1.0))
}

/// Assembles the velocity-pressure coupling, one row per pressure dof:
/// `B[(q, j)] = b(phi_j, indicator_q)`.
pub fn assemble_divergence(eg: &EgSpace<'_>, pressure: &PressureSpace<'_>) -> CsrMatrix {
    let mesh = eg.mesh;
    assert!(std::ptr::eq(mesh, pressure.mesh), "spaces must share one mesh");
    let cell_rule = quadrature::assembly_cell_rule(mesh.dim);
    let face_rule = quadrature::assembly_face_rule(mesh.dim);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();

    // Cell term (div w, q).
    for c in 0..mesh.n_cells() {
        let dofs = eg.cell_dofs(c);
        let coords = mesh.cell_coords(c);
        let mut local = vec![0.0; dofs.len()];
        for q in 0..cell_rule.len() {
            let x = cell_rule.physical_point(q, &coords);
            let w = cell_rule.weights[q] * mesh.cell_volumes[c];
            let basis = eg.eval_basis_unchecked(c, &x, &cell_rule.points[q]);
            for (j, bj) in basis.iter().enumerate() {
                local[j] += w * bj.div();
            }
        }
        push_block(&mut triplets, &[c], &dofs, &local);
    }

    // Face term -<[[w]] . n, {q}>: each adjacent pressure receives its
    // averaging weight.
    for f in 0..mesh.faces.len() {
        let face = &mesh.faces[f];
        let normal = face.normal;
        let points = face_points(mesh, f, &face_rule);
        let sides = face_sides(mesh, f);
        let bases: Vec<_> = sides.iter().map(|s| side_basis(eg, s, &points)).collect();
        let dofs: Vec<usize> = sides.iter().flat_map(|s| eg.cell_dofs(s.cell)).collect();
        let offsets: Vec<usize> = sides.iter().map(|s| s.cell).scan(0, |acc, c| {
            let start = *acc;
            *acc += eg.cell_dofs(c).len();
            Some(start)
        }).collect();
        let rows: Vec<usize> = sides.iter().map(|s| s.cell).collect();
        let nd = dofs.len();
        let mut local = vec![0.0; rows.len() * nd];
        for (q, p) in points.iter().enumerate() {
            for (pi, pressure_side) in sides.iter().enumerate() {
                for (sj, side_j) in sides.iter().enumerate() {
                    for (j, bj) in bases[sj][q].iter().enumerate() {
                        let jump_flux = side_j.sign * bj.value.dot(&normal);
                        local[pi * nd + offsets[sj] + j] -=
                            p.w * pressure_side.avg * jump_flux;
                    }
                }
            }
        }
        push_block(&mut triplets, &rows, &dofs, &local);
    }
    CsrMatrix::from_triplets(pressure.n_dofs(), eg.n_dofs(), &triplets)
}

/// Load vector of the standard scheme: `F_j = (f, phi_j)`.
///
/// Uses the error-tier quadrature so that smooth data is integrated with
/// accuracy far below the discretization error.
pub fn assemble_forcing_standard(
    eg: &EgSpace<'_>,
    f: impl Fn(&Vector3<f64>) -> Vector3<f64>,
) -> Vec<f64> {
    let mesh = eg.mesh;
    let rule = quadrature::error_cell_rule(mesh.dim);
    let mut rhs = vec![0.0; eg.n_dofs()];
    for c in 0..mesh.n_cells() {
        let dofs = eg.cell_dofs(c);
        let coords = mesh.cell_coords(c);
        for q in 0..rule.len() {
            let x = rule.physical_point(q, &coords);
            let w = rule.weights[q] * mesh.cell_volumes[c];
            let fx = f(&x);
            let basis = eg.eval_basis_unchecked(c, &x, &rule.points[q]);
            for (j, bj) in basis.iter().enumerate() {
                rhs[dofs[j]] += w * fx.dot(&bj.value);
            }
        }
    }
    rhs
}

/// Load vector of the pressure-robust scheme: `F_j = (f, R phi_j)`,
/// computed as `R^T` applied to the moment-basis load `(f, b_i)`.
pub fn assemble_forcing_reconstructed(
    eg: &EgSpace<'_>,
    hdiv: &HdivMomentSpace<'_>,
    rec: &Reconstruction,
    f: impl Fn(&Vector3<f64>) -> Vector3<f64>,
) -> Vec<f64> {
    let mesh = eg.mesh;
    let rule = quadrature::error_cell_rule(mesh.dim);
    let mut moment_load = vec![0.0; hdiv.n_dofs()];
    for c in 0..mesh.n_cells() {
        let dofs = hdiv.cell_dofs(c);
        let coords = mesh.cell_coords(c);
        for q in 0..rule.len() {
            let x = rule.physical_point(q, &coords);
            let w = rule.weights[q] * mesh.cell_volumes[c];
            let fx = f(&x);
            let basis = hdiv.eval_dual_basis(c, &x);
            for (i, (bi, _)) in basis.iter().enumerate() {
                moment_load[dofs[i]] += w * fx.dot(bi);
            }
        }
    }
    debug_assert_eq!(rec.matrix.nrows, hdiv.n_dofs());
    rec.matrix.transpose().matvec(&moment_load)
}

/// Right-hand-side corrections that impose `u = g` weakly on the boundary.
///
/// Returns `(velocity_rhs, pressure_rhs)`.  The velocity part collects, per
/// boundary face, `nu (-(grad w) n . g + h1_penalty h_e^{-1} g . w)` from
/// the viscous form and `l2_penalty sigma_e h_e g . w` from the reaction
/// penalty; the reconstructed reaction term needs no correction because
/// reconstructed fields have zero boundary moments, so both schemes share
/// these corrections.  The pressure part is `-<g . n, q>` per boundary face.
pub fn assemble_boundary_corrections(
    eg: &EgSpace<'_>,
    pressure: &PressureSpace<'_>,
    g: impl Fn(&Vector3<f64>) -> Vector3<f64>,
    nu: f64,
    sigma: &[f64],
    h1_penalty: f64,
    l2_penalty: f64,
) -> Result<(Vec<f64>, Vec<f64>), AssemblyError> {
    check_penalty(h1_penalty)?;
    check_penalty(l2_penalty)?;
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(AssemblyError::NonpositiveViscosity(nu));
    }
    let mesh = eg.mesh;
    check_sigma(sigma, mesh.n_cells())?;
    let rule = quadrature::error_face_rule(mesh.dim);
    let mut vel_rhs = vec![0.0; eg.n_dofs()];
    let mut p_rhs = vec![0.0; pressure.n_dofs()];
    for f in 0..mesh.faces.len() {
        let face = &mesh.faces[f];
        if !face.is_boundary() {
            continue;
        }
        let cell = face.plus;
        let normal = face.normal; // outward on boundary faces
        let dofs = eg.cell_dofs(cell);
        for p in face_points(mesh, f, &rule) {
            let gx = g(&p.x);
            let lambda = mesh.barycentric(cell, &p.x);
            let basis = eg.eval_basis_unchecked(cell, &p.x, &lambda);
            for (j, bj) in basis.iter().enumerate() {
                let grad_flux = bj.grad * normal;
                let viscous = -grad_flux.dot(&gx) + h1_penalty / face.size * gx.dot(&bj.value);
                let reaction = l2_penalty * sigma[cell] * face.size * gx.dot(&bj.value);
                vel_rhs[dofs[j]] += p.w * (nu * viscous + reaction);
            }
            p_rhs[cell] -= p.w * gx.dot(&normal);
        }
    }
    Ok((vel_rhs, p_rhs))
}

/// Gram matrix of the energy norm
/// `nu (|grad v|^2 + h1_penalty |h^{-1/2} [[v]]|^2) + |v|^2
///  + l2_penalty |h^{1/2} [[v]]|^2`
/// on the velocity space (used for stability diagnostics, not for solving).
pub fn assemble_norm_gram(
    eg: &EgSpace<'_>,
    nu: f64,
    h1_penalty: f64,
    l2_penalty: f64,
) -> Result<CsrMatrix, AssemblyError> {
    check_penalty(h1_penalty)?;
    check_penalty(l2_penalty)?;
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(AssemblyError::NonpositiveViscosity(nu));
    }
    let mesh = eg.mesh;
    let cell_rule = quadrature::assembly_cell_rule(mesh.dim);
    let face_rule = quadrature::assembly_face_rule(mesh.dim);
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for c in 0..mesh.n_cells() {
        let dofs = eg.cell_dofs(c);
        let coords = mesh.cell_coords(c);
        let mut local = vec![0.0; dofs.len() * dofs.len()];
        for q in 0..cell_rule.len() {
            let x = cell_rule.physical_point(q, &coords);
            let w = cell_rule.weights[q] * mesh.cell_volumes[c];
            let basis = eg.eval_basis_unchecked(c, &x, &cell_rule.points[q]);
            for (i, bi) in basis.iter().enumerate() {
                for (j, bj) in basis.iter().enumerate() {
                    let val = nu * bi.grad.dot(&bj.grad) + bi.value.dot(&bj.value);
                    local[i * dofs.len() + j] += w * val;
                }
            }
        }
        push_block(&mut triplets, &dofs, &dofs, &local);
    }
    for f in 0..mesh.faces.len() {
        let face = &mesh.faces[f];
        let points = face_points(mesh, f, &face_rule);
        let sides = face_sides(mesh, f);
        let bases: Vec<_> = sides.iter().map(|s| side_basis(eg, s, &points)).collect();
        let dofs: Vec<usize> = sides.iter().flat_map(|s| eg.cell_dofs(s.cell)).collect();
        let offsets: Vec<usize> = sides.iter().map(|s| s.cell).scan(0, |acc, c| {
            let start = *acc;
            *acc += eg.cell_dofs(c).len();
            Some(start)
        }).collect();
        let nd = dofs.len();
        let mut local = vec![0.0; nd * nd];
        let jump_weight = nu * h1_penalty / face.size + l2_penalty * face.size;
        for (q, p) in points.iter().enumerate() {
            for (si, side_i) in sides.iter().enumerate() {
                for (i, bi) in bases[si][q].iter().enumerate() {
                    let jump_i = side_i.sign * bi.value;
                    for (sj, side_j) in sides.iter().enumerate() {
                        for (j, bj) in bases[sj][q].iter().enumerate() {
                            let jump_j = side_j.sign * bj.value;
                            local[(offsets[si] + i) * nd + offsets[sj] + j] +=
                                p.w * jump_weight * jump_i.dot(&jump_j);
                        }
                    }
                }
            }
        }
        push_block(&mut triplets, &dofs, &dofs, &local);
    }
    Ok(CsrMatrix::from_triplets(eg.n_dofs(), eg.n_dofs(), &triplets))
}
