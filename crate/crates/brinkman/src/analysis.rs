//! Error measurement: the velocity interpolant, the piecewise-constant
//! pressure projection, mesh-dependent error norms, convergence orders,
//! and the closed-form error-profile reference curves.
//!
//! Norms of the velocity error `u - u_h` over a mesh with penalty factors
//! `rho1` (gradient scale) and `rho2` (reaction scale):
//!
//! * discrete H1:  `|v|_E^2   = sum_T ||grad v||^2 + rho1 sum_e (1/h_e) ||[v]||^2`
//! * energy:       `|||v|||^2 = nu |v|_E^2 + ||v||^2 + rho2 sum_e h_e ||[v]||^2`
//!
//! with jumps over all faces (on the boundary the jump is the trace).
//! Besides the norms of `u - u_h` the report carries the energy distance
//! to the velocity interpolant, `|||Pi_h u - u_h|||`, which superconverges
//! for the robust scheme and is the quantity the error analysis controls.
//! Pressures are compared modulo constants: both the exact pressure and
//! the projected exact pressure are shifted to zero volume-weighted mean,
//! matching the discrete pressure space.  All integrals use the
//! error-tier quadrature rules.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;
use thiserror::Error;

use crate::fespace::{face_points, EgSpace, HdivMomentSpace};
use crate::mesh::SimplicialMesh;
use crate::quadrature::{error_cell_rule, error_face_rule};
use crate::reconstruction::Reconstruction;
use crate::Method;

/// Errors from the analysis routines.
#[derive(Debug, Error)]
pub enum AnalysisError {
    /// A coefficient vector does not match its space.
    #[error("coefficient vector has length {got}, space has {expected} dofs")]
    WrongLength { expected: usize, got: usize },
    /// Profile curves exist only for the tabulated cases.
    #[error("no profile reference for dimension {0}")]
    UnknownProfile(usize),
    /// Profile curves are functions of a nonnegative viscous coefficient.
    #[error("profile reference needs nu >= 0, got {0}")]
    NegativeNu(f64),
}

/// Error measures of one discrete solution against an exact pair.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    /// Mesh size.
    pub h: f64,
    /// Viscous coefficient.
    pub nu: f64,
    /// Discrete H1 norm of the velocity error.
    pub enorm_err: f64,
    /// `sqrt(nu)` times the discrete H1 norm.
    pub scaled_h1: f64,
    /// L2 norm of the velocity error.
    pub l2_u: f64,
    /// Energy norm of the velocity error.
    pub energy: f64,
    /// The `rho2`-weighted squared face-jump term inside `energy`.
    pub energy_jump_sq: f64,
    /// Energy distance to the velocity interpolant,
    /// `|||Pi_h u - u_h|||`.  Superconvergent for the robust scheme; this
    /// is the column the reference convergence tables list.
    pub energy_pi: f64,
    /// Reconstruction-variant energy distance from the interpolant,
    /// `|||Pi_h u - u_h|||_R`, when a reconstruction is supplied.  The
    /// reconstruction only applies to discrete fields, so this measures
    /// the distance to the interpolant rather than to `u` itself.
    pub energy_r: Option<f64>,
    /// L2 distance between the projected exact pressure and `p_h`.
    pub p0_p: f64,
    /// L2 distance between the exact pressure and `p_h`, both shifted to
    /// zero volume-weighted mean.
    pub total_p: f64,
}

/// Subtracts the volume-weighted mean from per-cell values.
pub fn remove_weighted_mean(mesh: &SimplicialMesh, values: &[f64]) -> Vec<f64> {
    let volume: f64 = mesh.cell_volumes.iter().sum();
    let mean: f64 = values
        .iter()
        .zip(&mesh.cell_volumes)
        .map(|(&q, &v)| q * v)
        .sum::<f64>()
        / volume;
    values.iter().map(|&q| q - mean).collect()
}

/// Interpolates a velocity field into the enriched space.
///
/// The continuous part takes vertex values.  The enrichment coefficient is
/// chosen so the interpolant preserves each cell's mean divergence:
/// `c_T = [boundary flux of (w - vertex interpolant)] / (d |T|)`.
pub fn interpolate(eg: &EgSpace<'_>, w: &dyn Fn(&Vector3<f64>) -> Vector3<f64>) -> Vec<f64> {
    let mesh = eg.mesh;
    let dim = mesh.dim;
    let mut coeffs = vec![0.0; eg.n_dofs()];
    let vertex_values: Vec<Vector3<f64>> = mesh.vertices.iter().map(|x| w(x)).collect();
    for (v, val) in vertex_values.iter().enumerate() {
        for comp in 0..dim {
            coeffs[eg.continuous_dof(v, comp)] = val[comp];
        }
    }
    // Net flux of (w - vertex interpolant) out of each cell.  On a face the
    // vertex interpolant restricts to the face's own linear interpolant.
    let mut flux = vec![0.0; mesh.n_cells()];
    let rule = error_face_rule(dim);
    for (f, face) in mesh.faces.iter().enumerate() {
        let mut integral = 0.0;
        for pt in face_points(mesh, f, &rule) {
            let mut linear = Vector3::zeros();
            for i in 0..dim {
                linear += pt.lambda_face[i] * vertex_values[face.vertices[i]];
            }
            integral += pt.w * (w(&pt.x) - linear).dot(&face.normal);
        }
        flux[face.plus] += integral;
        if let Some(minus) = face.minus {
            flux[minus] -= integral;
        }
    }
    for c in 0..mesh.n_cells() {
        coeffs[eg.enrichment_dof(c)] = flux[c] / (dim as f64 * mesh.cell_volumes[c]);
    }
    coeffs
}

/// Projects a pressure field to cell averages with zero volume-weighted
/// mean.
pub fn project_p0(mesh: &SimplicialMesh, p: &dyn Fn(&Vector3<f64>) -> f64) -> Vec<f64> {
    let rule = error_cell_rule(mesh.dim);
    let averages: Vec<f64> = (0..mesh.n_cells())
        .map(|c| {
            let coords = mesh.cell_coords(c);
            (0..rule.len())
                .map(|q| rule.weights[q] * p(&rule.physical_point(q, &coords)))
                .sum()
        })
        .collect();
    remove_weighted_mean(mesh, &averages)
}

/// Discrete-norm pieces of a pure EG coefficient vector: squared broken
/// gradient, squared L2 norm, `rho1/h_e`-weighted squared jumps, and
/// `rho2 h_e`-weighted squared jumps.
fn discrete_seminorms(
    eg: &EgSpace<'_>,
    coeffs: &[f64],
    h1_penalty: f64,
    l2_penalty: f64,
) -> (f64, f64, f64, f64) {
    let mesh = eg.mesh;
    let cell_rule = error_cell_rule(mesh.dim);
    let (mut grad_sq, mut l2_sq) = (0.0, 0.0);
    for c in 0..mesh.n_cells() {
        let coords = mesh.cell_coords(c);
        for q in 0..cell_rule.len() {
            let x = cell_rule.physical_point(q, &coords);
            let val = eg.eval_function(c, coeffs, &x).unwrap();
            let w = cell_rule.weights[q] * mesh.cell_volumes[c];
            grad_sq += w * val.grad.norm_squared();
            l2_sq += w * val.value.norm_squared();
        }
    }
    let face_rule = error_face_rule(mesh.dim);
    let (mut jump_h1_sq, mut jump_l2_sq) = (0.0, 0.0);
    for (f, face) in mesh.faces.iter().enumerate() {
        for pt in face_points(mesh, f, &face_rule) {
            let mut jump = eg.eval_function(face.plus, coeffs, &pt.x).unwrap().value;
            if let Some(minus) = face.minus {
                jump -= eg.eval_function(minus, coeffs, &pt.x).unwrap().value;
            }
            let sq = pt.w * jump.norm_squared();
            jump_h1_sq += h1_penalty / face.size * sq;
            jump_l2_sq += l2_penalty * face.size * sq;
        }
    }
    (grad_sq, l2_sq, jump_h1_sq, jump_l2_sq)
}

/// Measures a discrete solution against exact fields.
///
/// When `reconstruction` is given, the report additionally carries the
/// reconstruction-variant energy distance `|||Pi_h u - u_h|||_R` whose L2
/// part is measured through the reconstruction operator.
#[allow(clippy::too_many_arguments)]
pub fn compute_errors(
    eg: &EgSpace<'_>,
    velocity: &[f64],
    pressure: &[f64],
    exact_velocity: &dyn Fn(&Vector3<f64>) -> Vector3<f64>,
    exact_velocity_gradient: &dyn Fn(&Vector3<f64>) -> Matrix3<f64>,
    exact_pressure: &dyn Fn(&Vector3<f64>) -> f64,
    nu: f64,
    h1_penalty: f64,
    l2_penalty: f64,
    reconstruction: Option<(&HdivMomentSpace<'_>, &Reconstruction)>,
) -> Result<ErrorReport, AnalysisError> {
    let mesh = eg.mesh;
    if velocity.len() != eg.n_dofs() {
        return Err(AnalysisError::WrongLength { expected: eg.n_dofs(), got: velocity.len() });
    }
    if pressure.len() != mesh.n_cells() {
        return Err(AnalysisError::WrongLength { expected: mesh.n_cells(), got: pressure.len() });
    }

    let cell_rule = error_cell_rule(mesh.dim);
    let p0_exact = project_p0(mesh, exact_pressure);
    let exact_mean = {
        // Mean of the exact pressure, removed before comparison.
        let volume: f64 = mesh.cell_volumes.iter().sum();
        let raw: f64 = (0..mesh.n_cells())
            .map(|c| {
                let coords = mesh.cell_coords(c);
                let avg: f64 = (0..cell_rule.len())
                    .map(|q| cell_rule.weights[q] * exact_pressure(&cell_rule.physical_point(q, &coords)))
                    .sum();
                avg * mesh.cell_volumes[c]
            })
            .sum();
        raw / volume
    };

    let (mut grad_sq, mut l2_sq) = (0.0, 0.0);
    let (mut p0_sq, mut total_p_sq) = (0.0, 0.0);
    for c in 0..mesh.n_cells() {
        let coords = mesh.cell_coords(c);
        let vol = mesh.cell_volumes[c];
        p0_sq += vol * (p0_exact[c] - pressure[c]).powi(2);
        for q in 0..cell_rule.len() {
            let x = cell_rule.physical_point(q, &coords);
            let w = cell_rule.weights[q] * vol;
            let discrete = eg.eval_function(c, velocity, &x).unwrap();
            let val_err = exact_velocity(&x) - discrete.value;
            let grad_err = exact_velocity_gradient(&x) - discrete.grad;
            l2_sq += w * val_err.norm_squared();
            grad_sq += w * grad_err.norm_squared();
            total_p_sq += w * (exact_pressure(&x) - exact_mean - pressure[c]).powi(2);
        }
    }

    // Face jumps of the error; the exact velocity is continuous, so on
    // interior faces only the discrete traces contribute, and on boundary
    // faces the jump is the pointwise error itself.
    let face_rule = error_face_rule(mesh.dim);
    let (mut jump_h1_sq, mut jump_l2_sq) = (0.0, 0.0);
    for (f, face) in mesh.faces.iter().enumerate() {
        for pt in face_points(mesh, f, &face_rule) {
            let plus_err =
                exact_velocity(&pt.x) - eg.eval_function(face.plus, velocity, &pt.x).unwrap().value;
            let jump = match face.minus {
                Some(minus) => {
                    let minus_err = exact_velocity(&pt.x)
                        - eg.eval_function(minus, velocity, &pt.x).unwrap().value;
                    plus_err - minus_err
                }
                None => plus_err,
            };
            let sq = pt.w * jump.norm_squared();
            jump_h1_sq += h1_penalty / face.size * sq;
            jump_l2_sq += l2_penalty * face.size * sq;
        }
    }

    let enorm_sq = grad_sq + jump_h1_sq;
    let energy_sq = nu * enorm_sq + l2_sq + jump_l2_sq;

    // Distance to the interpolant, in the plain energy norm and (when a
    // reconstruction is supplied) with the L2 part filtered through it.
    let diff: Vec<f64> = interpolate(eg, &|x| exact_velocity(x))
        .iter()
        .zip(velocity)
        .map(|(a, b)| a - b)
        .collect();
    let (dg, dl2, djh, djl) = discrete_seminorms(eg, &diff, h1_penalty, l2_penalty);
    let energy_pi = (nu * (dg + djh) + dl2 + djl).sqrt();
    let energy_r = reconstruction.map(|(hdiv, rec)| {
        let rec_coeffs = rec.apply(&diff);
        let mut rec_l2_sq = 0.0;
        for c in 0..mesh.n_cells() {
            let coords = mesh.cell_coords(c);
            for q in 0..cell_rule.len() {
                let x = cell_rule.physical_point(q, &coords);
                let (value, _) = hdiv.eval_function(c, &rec_coeffs, &x).unwrap();
                rec_l2_sq += cell_rule.weights[q] * mesh.cell_volumes[c] * value.norm_squared();
            }
        }
        (nu * (dg + djh) + rec_l2_sq + djl).sqrt()
    });

    Ok(ErrorReport {
        h: mesh.mesh_size,
        nu,
        enorm_err: enorm_sq.sqrt(),
        scaled_h1: (nu * enorm_sq).sqrt(),
        l2_u: l2_sq.sqrt(),
        energy: energy_sq.sqrt(),
        energy_jump_sq: jump_l2_sq,
        energy_pi,
        energy_r,
        p0_p: p0_sq.sqrt(),
        total_p: total_p_sq.sqrt(),
    })
}

/// Convergence order of one error column between consecutive halvings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Order {
    /// `log2(err_{2h} / err_h)`.
    Rate(f64),
    /// At least one of the errors is zero: the method reproduced the
    /// solution exactly and no rate can be formed.
    Exact,
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Order::Rate(r) => write!(f, "{r:.2}"),
            Order::Exact => write!(f, "exact"),
        }
    }
}

/// Orders between consecutive entries of an error column ordered from the
/// coarsest mesh to the finest, with `h` halved at each step.
pub fn convergence_orders(errors: &[f64]) -> Vec<Order> {
    errors
        .windows(2)
        .map(|pair| {
            if pair[0] <= 0.0 || pair[1] <= 0.0 {
                Order::Exact
            } else {
                Order::Rate((pair[0] / pair[1]).log2())
            }
        })
        .collect()
}

/// Which error the profile curve describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileQuantity {
    /// Energy-norm velocity error.
    Velocity,
    /// L2 pressure error.
    Pressure,
}

/// Closed-form reference curves for the viscosity sweep at the tabulated
/// mesh sizes (`h = 1/32` in 2D, `h = 1/16` in 3D).  The curves are fitted
/// envelopes of the velocity energy error and the L2 pressure error as
/// functions of the viscous coefficient.
pub fn error_profile_reference(
    nu: f64,
    dim: usize,
    method: Method,
    quantity: ProfileQuantity,
) -> Result<f64, AnalysisError> {
    if nu < 0.0 || !nu.is_finite() {
        return Err(AnalysisError::NegativeNu(nu));
    }
    let h = match dim {
        2 => 1.0 / 32.0,
        3 => 1.0 / 16.0,
        d => return Err(AnalysisError::UnknownProfile(d)),
    };
    let s = nu.sqrt();
    Ok(match (dim, method, quantity) {
        (2, Method::St, ProfileQuantity::Velocity) => {
            0.1 * h * s + 0.3 * h / (nu + 3.0 * h * h).sqrt() + 0.4 * h
        }
        (2, Method::Pr, ProfileQuantity::Velocity) => 0.8 * h * s + 0.05 * h,
        (2, Method::St, ProfileQuantity::Pressure) => 2.0 * h * nu + 3.0 * h * s + 0.3 * h,
        (2, Method::Pr, ProfileQuantity::Pressure) => 0.5 * h * nu + 0.01 * h * s + 0.01 * h * h,
        (3, Method::St, ProfileQuantity::Velocity) => {
            0.1 * h * s + h / (nu + 3.0 * h * h).sqrt() + 9.0 * h
        }
        (3, Method::Pr, ProfileQuantity::Velocity) => 6.0 * h * s + 0.25 * h,
        (3, Method::St, ProfileQuantity::Pressure) => 1.5 * h * nu + h * s + 2.5 * h,
        (3, Method::Pr, ProfileQuantity::Pressure) => 2.0 * h * nu + 0.02 * h * s + 0.2 * h * h,
        _ => unreachable!("dimension already validated"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::PressureSpace;
    use crate::problems::ManufacturedCase;
    use crate::reconstruction::Reconstruction;
    use crate::solver::{solve_saddle, SaddleSystem};
    use rand::{Rng, SeedableRng};

    #[test]
    fn linear_fields_have_zero_enrichment() {
        for dim in [2, 3] {
            let mesh = SimplicialMesh::structured(dim, 3).unwrap();
            let eg = EgSpace::new(&mesh);
            let w = |x: &Vector3<f64>| {
                let mut v = Vector3::new(1.0 + 2.0 * x.x - x.y, 3.0 * x.x + x.y, 0.0);
                if dim == 3 {
                    v.z = x.x - 0.5 * x.z;
                    v.x -= 2.0 * x.z;
                }
                v
            };
            let coeffs = interpolate(&eg, &w);
            for c in 0..mesh.n_cells() {
                assert!(coeffs[eg.enrichment_dof(c)].abs() <= 1e-13);
            }
            // And the interpolant reproduces the field pointwise.
            let x = mesh.cell_barycenters[0];
            let val = eg.eval_function(0, &coeffs, &x).unwrap().value;
            assert!((val - w(&x)).norm() <= 1e-12);
        }
    }

    /// Independent flux oracle: Simpson's rule on edges (exact through
    /// cubics), edge-midpoint rule on triangles (exact through quadratics).
    fn oracle_flux(
        mesh: &SimplicialMesh,
        c: usize,
        w: &dyn Fn(&Vector3<f64>) -> Vector3<f64>,
    ) -> f64 {
        let mut total = 0.0;
        for (f, face) in mesh.faces.iter().enumerate() {
            let sign = if face.plus == c {
                1.0
            } else if face.minus == Some(c) {
                -1.0
            } else {
                continue;
            };
            let coords = mesh.face_coords(f);
            let linear = |lam: &[f64]| -> Vector3<f64> {
                let mut v = Vector3::zeros();
                for (i, l) in lam.iter().enumerate() {
                    v += *l * w(&coords[i]);
                }
                v
            };
            let g = |lam: &[f64]| -> f64 {
                let mut x = Vector3::zeros();
                for (i, l) in lam.iter().enumerate() {
                    x += *l * coords[i];
                }
                (w(&x) - linear(lam)).dot(&face.normal)
            };
            let integral = if mesh.dim == 2 {
                face.measure / 6.0 * (g(&[1.0, 0.0]) + 4.0 * g(&[0.5, 0.5]) + g(&[0.0, 1.0]))
            } else {
                face.measure / 3.0
                    * (g(&[0.5, 0.5, 0.0]) + g(&[0.0, 0.5, 0.5]) + g(&[0.5, 0.0, 0.5]))
            };
            total += sign * integral;
        }
        total
    }

    #[test]
    fn enrichment_coefficients_match_independent_flux_oracle() {
        let w = |x: &Vector3<f64>| Vector3::new(x.x * x.x, 0.0, 0.0);
        for dim in [2, 3] {
            let mesh = SimplicialMesh::structured(dim, 1).unwrap();
            let eg = EgSpace::new(&mesh);
            let coeffs = interpolate(&eg, &w);
            for c in 0..mesh.n_cells() {
                let expected = oracle_flux(&mesh, c, &w) / (dim as f64 * mesh.cell_volumes[c]);
                let got = coeffs[eg.enrichment_dof(c)];
                assert!(
                    (got - expected).abs() <= 1e-12,
                    "dim {dim} cell {c}: {got:.3e} vs oracle {expected:.3e}"
                );
            }
        }
    }

    #[test]
    fn interpolant_preserves_cell_mean_divergence() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for dim in [2, 3] {
            let mesh = SimplicialMesh::structured(dim, 3).unwrap();
            let eg = EgSpace::new(&mesh);
            for _ in 0..3 {
                let a: [f64; 9] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                let w = move |x: &Vector3<f64>| {
                    Vector3::new(
                        (a[0] * x.x + a[1] * x.y + a[2] * x.z).sin(),
                        (a[3] * x.x + a[4] * x.y).cos() + a[5] * x.z * x.z,
                        a[6] * (x.x * x.y).sin() + a[7] * x.z + a[8],
                    )
                };
                let coeffs = interpolate(&eg, &w);
                let rule = error_face_rule(dim);
                for c in 0..mesh.n_cells() {
                    // The interpolant's divergence is constant per cell.
                    let div = eg
                        .eval_function(c, &coeffs, &mesh.cell_barycenters[c])
                        .unwrap()
                        .grad
                        .trace();
                    let mut flux = 0.0;
                    for (f, face) in mesh.faces.iter().enumerate() {
                        let sign = if face.plus == c {
                            1.0
                        } else if face.minus == Some(c) {
                            -1.0
                        } else {
                            continue;
                        };
                        for pt in face_points(&mesh, f, &rule) {
                            flux += sign * pt.w * w(&pt.x).dot(&face.normal);
                        }
                    }
                    assert!(
                        (div * mesh.cell_volumes[c] - flux).abs() <= 1e-12,
                        "dim {dim} cell {c}"
                    );
                }
            }
        }
    }

    #[test]
    fn pressure_projection_on_two_cells() {
        let mesh = SimplicialMesh::structured(2, 1).unwrap();
        let values = project_p0(&mesh, &|x| x.x - 0.5);
        // Affine pressure: cell average = value at the barycenter.
        for c in 0..2 {
            let expected = mesh.cell_barycenters[c].x - 0.5;
            assert!((values[c] - expected).abs() <= 1e-14);
        }
        let xs: Vec<f64> = mesh.cell_barycenters.iter().map(|b| b.x).collect();
        assert!(xs.contains(&(2.0 / 3.0)) && xs.contains(&(1.0 / 3.0)));
        assert!(values.iter().any(|&v| (v - 1.0 / 6.0).abs() <= 1e-14));
        assert!(values.iter().any(|&v| (v + 1.0 / 6.0).abs() <= 1e-14));
    }

    #[test]
    fn mean_removal_is_idempotent_and_kills_constants() {
        let mesh = SimplicialMesh::structured(2, 3).unwrap();
        let constant = project_p0(&mesh, &|_| 4.2);
        assert!(constant.iter().all(|&v| v.abs() <= 1e-13));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let values: Vec<f64> = (0..mesh.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let once = remove_weighted_mean(&mesh, &values);
        let twice = remove_weighted_mean(&mesh, &once);
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn interpolation_errors_converge_at_expected_rates() {
        for dim in [2, 3] {
            let case = ManufacturedCase::new(dim, 1.0).unwrap();
            let mut l2 = Vec::new();
            let mut enorm = Vec::new();
            let mut p = Vec::new();
            for n in [4usize, 8, 16] {
                let mesh = SimplicialMesh::structured(dim, n).unwrap();
                let eg = EgSpace::new(&mesh);
                let u_h = interpolate(&eg, &|x| case.velocity(x));
                let p_h = project_p0(&mesh, &|x| case.pressure(x));
                let report = compute_errors(
                    &eg,
                    &u_h,
                    &p_h,
                    &|x| case.velocity(x),
                    &|x| case.velocity_gradient(x),
                    &|x| case.pressure(x),
                    case.nu,
                    crate::DEFAULT_H1_PENALTY,
                    crate::DEFAULT_L2_PENALTY,
                    None,
                )
                .unwrap();
                // The projected exact pressure is recovered exactly.
                assert!(report.p0_p <= 1e-13, "p0_p = {:.3e}", report.p0_p);
                // Energy decomposition identity.
                let decomposed =
                    case.nu * report.enorm_err.powi(2) + report.l2_u.powi(2) + report.energy_jump_sq;
                assert!((report.energy.powi(2) - decomposed).abs() <= 1e-10 * decomposed);
                assert!(report.scaled_h1 <= report.energy * (1.0 + 1e-12));
                assert!((report.nu - case.nu).abs() == 0.0);
                l2.push(report.l2_u);
                enorm.push(report.enorm_err);
                p.push(report.total_p);
            }
            for (name, col, want) in
                [("l2", &l2, 2.0), ("enorm", &enorm, 1.0), ("pressure", &p, 1.0)]
            {
                for order in convergence_orders(col) {
                    let Order::Rate(r) = order else { panic!("unexpected exact column") };
                    assert!(
                        (r - want).abs() <= 0.2,
                        "dim {dim} {name}: order {r:.2}, expected ~{want}"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_solution_reports_exact_norms() {
        let case = ManufacturedCase::new(2, 1.0).unwrap();
        let mesh = SimplicialMesh::structured(2, 8).unwrap();
        let eg = EgSpace::new(&mesh);
        let report = compute_errors(
            &eg,
            &vec![0.0; eg.n_dofs()],
            &vec![0.0; mesh.n_cells()],
            &|x| case.velocity(x),
            &|x| case.velocity_gradient(x),
            &|x| case.pressure(x),
            1.0,
            3.0,
            3.0,
            None,
        )
        .unwrap();
        // ||p||_0 = 10/3 for p = 10(2x-1)(2y-1) on the unit square.
        assert!((report.total_p - 10.0 / 3.0).abs() <= 1e-9);
        assert!(report.l2_u > 0.0 && report.enorm_err > 0.0);
    }

    #[test]
    fn robust_solve_matches_reported_errors() {
        // Low-viscosity run of the robust scheme at n = 8 under the strong
        // boundary mode; the projected pressure error lands near 7.762e-4
        // and the interpolant energy distance near 4.774e-3.
        let nu = 1e-6;
        let case = ManufacturedCase::new(2, nu).unwrap();
        let mesh = SimplicialMesh::structured(2, 8).unwrap();
        let eg = EgSpace::new(&mesh);
        let pressure = PressureSpace::new(&mesh);
        let hdiv = HdivMomentSpace::new(&mesh);
        let rec = Reconstruction::build(&eg, &hdiv);
        let sigma = vec![1.0; mesh.n_cells()];
        let system = SaddleSystem::assemble(
            &eg,
            &pressure,
            &hdiv,
            &rec,
            Method::Pr,
            crate::BoundaryCondition::Strong,
            nu,
            &sigma,
            3.0,
            3.0,
            |x| case.forcing(x),
            |x| case.boundary(x),
        )
        .unwrap();
        let sol = solve_saddle(&system, 1e-10).unwrap();
        let report = compute_errors(
            &eg,
            &sol.velocity,
            &sol.pressure,
            &|x| case.velocity(x),
            &|x| case.velocity_gradient(x),
            &|x| case.pressure(x),
            nu,
            3.0,
            3.0,
            Some((&hdiv, &rec)),
        )
        .unwrap();
        let reference = 7.762e-4;
        assert!(
            report.p0_p >= reference / 3.0 && report.p0_p <= reference * 3.0,
            "p0_p = {:.3e}, reference {reference:.3e}",
            report.p0_p
        );
        let reference = 4.774e-3;
        assert!(
            report.energy_pi >= reference / 3.0 && report.energy_pi <= reference * 3.0,
            "energy_pi = {:.3e}, reference {reference:.3e}",
            report.energy_pi
        );
        let energy_r = report.energy_r.unwrap();
        assert!(energy_r > 0.0 && energy_r.is_finite());
    }

    #[test]
    fn order_computation_matches_tabulated_examples() {
        assert_eq!(convergence_orders(&[4e-2, 1e-2]), vec![Order::Rate(2.0)]);
        let orders = convergence_orders(&[9.695e-1, 7.130e-1]);
        let Order::Rate(r) = orders[0] else { panic!() };
        assert!((r - 0.44).abs() <= 5e-3);
        assert_eq!(convergence_orders(&[0.5, 0.5]), vec![Order::Rate(0.0)]);
        assert_eq!(convergence_orders(&[1e-3, 0.0]), vec![Order::Exact]);
        assert_eq!(format!("{}", Order::Exact), "exact");
        assert_eq!(format!("{}", Order::Rate(0.4434)), "0.44");
    }

    #[test]
    fn profile_references_evaluate_as_printed() {
        let e = error_profile_reference(1.0, 2, Method::St, ProfileQuantity::Velocity).unwrap();
        assert!((e - 2.499e-2).abs() <= 5e-6, "{e:.6e}");
        let e = error_profile_reference(0.0, 2, Method::Pr, ProfileQuantity::Velocity).unwrap();
        assert!((e - 0.05 / 32.0).abs() <= 1e-15);
        let e = error_profile_reference(0.0, 3, Method::Pr, ProfileQuantity::Pressure).unwrap();
        assert!((e - 0.2 / 256.0).abs() <= 1e-15);
        assert!(error_profile_reference(1.0, 4, Method::St, ProfileQuantity::Velocity).is_err());
        assert!(error_profile_reference(-1.0, 2, Method::St, ProfileQuantity::Velocity).is_err());
    }
}
