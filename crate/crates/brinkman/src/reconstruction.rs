//! Divergence-conforming velocity reconstruction.
//!
//! The reconstruction lifts an enriched Galerkin velocity into the
//! face-moment space of `fespace::HdivMomentSpace` by matching, on every
//! interior face, the moments of the normal trace against the linear face
//! functions with the moments of the *average* of the two traces:
//!
//! ```text
//!     integral_e (Rv . n_e) m  =  integral_e ({v} . n_e) m      m linear on e
//! ```
//!
//! On boundary faces all moments are set to zero, so the reconstruction of
//! any discrete velocity has a vanishing normal trace on the domain
//! boundary.  The lifted field is cellwise linear with single-valued normal
//! traces, and its divergence is constant on every cell.
//!
//! The operator is materialized once per mesh as a sparse matrix from
//! moment dofs to velocity dofs and then applied to coefficient vectors.

use crate::fespace::{face_moment_value, face_points, EgSpace, HdivMomentSpace};
use crate::quadrature;
use crate::sparse::CsrMatrix;

/// The reconstruction operator as an explicit sparse matrix
/// (`moment dofs x velocity dofs`).
pub struct Reconstruction {
    /// Sparse operator matrix.
    pub matrix: CsrMatrix,
}

impl Reconstruction {
    /// Builds the operator for a velocity space and its moment space
    /// (both over the same mesh).
    pub fn build(eg: &EgSpace<'_>, hdiv: &HdivMomentSpace<'_>) -> Self {
        let mesh = eg.mesh;
        assert!(std::ptr::eq(mesh, hdiv.mesh), "spaces must share one mesh");
        let dim = mesh.dim;
        let rule = quadrature::assembly_face_rule(dim);
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        for (f, face) in mesh.faces.iter().enumerate() {
            let Some(minus) = face.minus else {
                continue; // boundary rows stay zero
            };
            let points = face_points(mesh, f, &rule);
            for (cell, avg_weight) in [(face.plus, 0.5), (minus, 0.5)] {
                let dofs = eg.cell_dofs(cell);
                for p in &points {
                    let lambda = mesh.barycentric(cell, &p.x);
                    let basis = eg.eval_basis_unchecked(cell, &p.x, &lambda);
                    for k in 0..dim {
                        let m = face_moment_value(dim, k, &p.lambda_face);
                        let row = hdiv.face_dof(f, k);
                        for (b, &dof) in basis.iter().zip(&dofs) {
                            let flux = b.value.dot(&face.normal);
                            triplets.push((row, dof, avg_weight * p.w * m * flux));
                        }
                    }
                }
            }
        }
        let matrix = CsrMatrix::from_triplets(hdiv.n_dofs(), eg.n_dofs(), &triplets);
        Reconstruction { matrix }
    }

    /// Applies the operator to velocity coefficients, producing moment
    /// coefficients.
    pub fn apply(&self, velocity: &[f64]) -> Vec<f64> {
        self.matrix.matvec(velocity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{face_moment_value, face_points, EgSpace, HdivMomentSpace};
    use crate::mesh::SimplicialMesh;
    use crate::quadrature;
    use rand::{Rng, SeedableRng};

    fn random_coeffs(rng: &mut impl rand::Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Average of the two traces (or the single trace) of an EG field at a
    /// point on a face.
    fn average_at(
        mesh: &SimplicialMesh,
        eg: &EgSpace<'_>,
        coeffs: &[f64],
        f: usize,
        x: &nalgebra::Vector3<f64>,
    ) -> nalgebra::Vector3<f64> {
        let face = &mesh.faces[f];
        let vp = eg.eval_function(face.plus, coeffs, x).unwrap().value;
        match face.minus {
            Some(minus) => 0.5 * (vp + eg.eval_function(minus, coeffs, x).unwrap().value),
            None => vp,
        }
    }

    #[test]
    fn moments_match_trace_averages() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for (dim, n) in [(2, 3), (3, 2)] {
            let mesh = SimplicialMesh::structured(dim, n).unwrap();
            let eg = EgSpace::new(&mesh);
            let hdiv = HdivMomentSpace::new(&mesh);
            let r = Reconstruction::build(&eg, &hdiv);
            let v = random_coeffs(&mut rng, eg.n_dofs());
            let rv = r.apply(&v);
            let rule = quadrature::error_face_rule(dim);
            for (f, face) in mesh.faces.iter().enumerate() {
                for k in 0..dim {
                    let mut lhs = 0.0;
                    let mut rhs = 0.0;
                    for p in face_points(&mesh, f, &rule) {
                        let m = face_moment_value(dim, k, &p.lambda_face);
                        let (rv_val, _) = hdiv.eval_function(face.plus, &rv, &p.x).unwrap();
                        lhs += p.w * m * rv_val.dot(&face.normal);
                        if !face.is_boundary() {
                            let avg = average_at(&mesh, &eg, &v, f, &p.x);
                            rhs += p.w * m * avg.dot(&face.normal);
                        }
                    }
                    // Boundary faces: all moments of the reconstruction vanish.
                    assert!(
                        (lhs - rhs).abs() <= 1e-12,
                        "dim {dim} face {f} moment {k}: {lhs} vs {rhs}"
                    );
                }
            }
        }
    }

    #[test]
    fn preserves_zero_trace_continuous_fields() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for (dim, n) in [(2, 3), (3, 2)] {
            let mesh = SimplicialMesh::structured(dim, n).unwrap();
            let eg = EgSpace::new(&mesh);
            let hdiv = HdivMomentSpace::new(&mesh);
            let r = Reconstruction::build(&eg, &hdiv);
            // Continuous field, zero at boundary vertices, no enrichment.
            let mut v = vec![0.0; eg.n_dofs()];
            for vert in 0..mesh.n_vertices() {
                if mesh.boundary_vertex[vert] {
                    continue;
                }
                for comp in 0..dim {
                    v[eg.continuous_dof(vert, comp)] = rng.gen_range(-1.0..1.0);
                }
            }
            let rv = r.apply(&v);
            let rule = quadrature::error_cell_rule(dim);
            let mut worst = 0.0_f64;
            for c in 0..mesh.n_cells() {
                let coords = mesh.cell_coords(c);
                for q in 0..rule.len() {
                    let x = rule.physical_point(q, &coords);
                    let orig = eg.eval_function(c, &v, &x).unwrap().value;
                    let (lifted, _) = hdiv.eval_function(c, &rv, &x).unwrap();
                    worst = worst.max((lifted - orig).norm());
                }
            }
            assert!(worst <= 1e-11, "dim {dim}: max pointwise deviation {worst}");
        }
    }

    #[test]
    fn divergence_is_cellwise_constant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let mesh = SimplicialMesh::structured(2, 4).unwrap();
        let eg = EgSpace::new(&mesh);
        let hdiv = HdivMomentSpace::new(&mesh);
        let r = Reconstruction::build(&eg, &hdiv);
        let v = random_coeffs(&mut rng, eg.n_dofs());
        let rv = r.apply(&v);
        let rule = quadrature::error_cell_rule(2);
        for c in 0..mesh.n_cells() {
            let coords = mesh.cell_coords(c);
            let divs: Vec<f64> = (0..rule.len())
                .map(|q| {
                    let x = rule.physical_point(q, &coords);
                    hdiv.eval_function(c, &rv, &x).unwrap().1
                })
                .collect();
            for d in &divs {
                assert!((d - divs[0]).abs() <= 1e-11, "cell {c}: divergence varies");
            }
        }
    }

    #[test]
    fn operator_is_linear() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(14);
        let mesh = SimplicialMesh::structured(2, 2).unwrap();
        let eg = EgSpace::new(&mesh);
        let hdiv = HdivMomentSpace::new(&mesh);
        let r = Reconstruction::build(&eg, &hdiv);
        let u = random_coeffs(&mut rng, eg.n_dofs());
        let v = random_coeffs(&mut rng, eg.n_dofs());
        let combo: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 1.5 * a - 0.25 * b).collect();
        let lhs = r.apply(&combo);
        let ru = r.apply(&u);
        let rv = r.apply(&v);
        for i in 0..lhs.len() {
            assert!((lhs[i] - (1.5 * ru[i] - 0.25 * rv[i])).abs() <= 1e-12);
        }
    }

    /// L2 distance between a velocity field and its reconstruction, plus the
    /// scaled jump seminorm that bounds it.
    fn deviation_and_jump(
        mesh: &SimplicialMesh,
        eg: &EgSpace<'_>,
        hdiv: &HdivMomentSpace<'_>,
        r: &Reconstruction,
        v: &[f64],
    ) -> (f64, f64) {
        let rv = r.apply(v);
        let cell_rule = quadrature::error_cell_rule(mesh.dim);
        let mut dev2 = 0.0;
        for c in 0..mesh.n_cells() {
            let coords = mesh.cell_coords(c);
            for q in 0..cell_rule.len() {
                let x = cell_rule.physical_point(q, &coords);
                let orig = eg.eval_function(c, v, &x).unwrap().value;
                let (lifted, _) = hdiv.eval_function(c, &rv, &x).unwrap();
                dev2 += cell_rule.weights[q] * mesh.cell_volumes[c] * (lifted - orig).norm_squared();
            }
        }
        let face_rule = quadrature::error_face_rule(mesh.dim);
        let mut jump2 = 0.0;
        for (f, face) in mesh.faces.iter().enumerate() {
            for p in face_points(mesh, f, &face_rule) {
                let vp = eg.eval_function(face.plus, v, &p.x).unwrap().value;
                let jump = match face.minus {
                    Some(minus) => vp - eg.eval_function(minus, v, &p.x).unwrap().value,
                    None => vp,
                };
                jump2 += p.w / face.size * jump.norm_squared();
            }
        }
        (dev2.sqrt(), jump2.sqrt())
    }

    #[test]
    fn deviation_is_bounded_by_h_times_jump_seminorm() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        // Enrichment-only fields: deviation must decrease at first order,
        // and the ratio deviation / (h * jump) must stay bounded by a single
        // mesh-independent constant.  Random fields feed the same bound.
        let mut enrich_devs = Vec::new();
        let mut hs = Vec::new();
        let mut ratios = Vec::new();
        for n in [4usize, 8, 16] {
            let mesh = SimplicialMesh::structured(2, n).unwrap();
            let eg = EgSpace::new(&mesh);
            let hdiv = HdivMomentSpace::new(&mesh);
            let r = Reconstruction::build(&eg, &hdiv);

            let mut enrich = vec![0.0; eg.n_dofs()];
            for c in 0..mesh.n_cells() {
                enrich[eg.enrichment_dof(c)] = 1.0;
            }
            let (dev, jump) = deviation_and_jump(&mesh, &eg, &hdiv, &r, &enrich);
            enrich_devs.push(dev);
            hs.push(mesh.mesh_size);
            ratios.push(dev / (mesh.mesh_size * jump));

            let v = random_coeffs(&mut rng, eg.n_dofs());
            let (dev, jump) = deviation_and_jump(&mesh, &eg, &hdiv, &r, &v);
            ratios.push(dev / (mesh.mesh_size * jump));
        }
        // Least-squares slope of log(dev) against log(h) for the
        // enrichment-only family: first order.
        let logs: Vec<(f64, f64)> = hs
            .iter()
            .zip(&enrich_devs)
            .map(|(&h, &d)| (h.ln(), d.ln()))
            .collect();
        let n = logs.len() as f64;
        let (sx, sy): (f64, f64) = logs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (sxx, sxy): (f64, f64) =
            logs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x * x, b + x * y));
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(
            (0.8..=1.3).contains(&slope),
            "enrichment deviation slope {slope} not first order"
        );
        let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
        let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert!(
            max / min <= 2.0 && max.is_finite(),
            "deviation/jump ratios not mesh-uniform: {ratios:?}"
        );
    }
}
