//! Quadrature rules on reference simplices.
//!
//! Rules are stored in barycentric coordinates with weights summing to one,
//! so a physical integral is `measure * sum_i w_i f(sum_k lambda_ik v_k)`
//! for a simplex with vertices `v_k`.  Two precision tiers are used
//! throughout the crate:
//!
//! * assembly tier: exact to degree 4 on cells and degree >= 3 on faces,
//!   enough to integrate every bilinear-form integrand exactly (they are all
//!   polynomials of degree <= 2);
//! * error tier: exact to degree 6 on 2D cells and degree 5 on 3D cells
//!   (degree >= 5 on faces), used for error norms and smooth data so that
//!   quadrature error stays far below discretization error.

use nalgebra::Vector3;

/// A quadrature rule on a reference simplex with `nverts` vertices.
///
/// `points[i]` holds the barycentric coordinates of point `i`; entries past
/// `nverts` are zero.  Weights sum to one.
#[derive(Debug, Clone)]
pub struct QuadRule {
    /// Number of barycentric coordinates per point (2 = edge, 3 = triangle, 4 = tet).
    pub nverts: usize,
    /// Barycentric coordinates, one entry per quadrature point.
    pub points: Vec<[f64; 4]>,
    /// Weights, normalized to sum to one.
    pub weights: Vec<f64>,
}

impl QuadRule {
    /// Number of quadrature points.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// True when the rule has no points (never the case for the built-in rules).
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Maps point `i` to physical coordinates given the simplex vertices.
    pub fn physical_point(&self, i: usize, verts: &[Vector3<f64>]) -> Vector3<f64> {
        let mut x = Vector3::zeros();
        for (k, v) in verts.iter().enumerate() {
            x += self.points[i][k] * v;
        }
        x
    }
}

/// Gauss-Legendre rule on the unit interval in barycentric form
/// (`lambda = (1 - s, s)`), exact to degree `2 n - 1`.
pub fn edge_gauss(n: usize) -> QuadRule {
    // Nodes/weights on [-1, 1]; mapped below to [0, 1].
    let (nodes, weights): (Vec<f64>, Vec<f64>) = match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3.0_f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (3.0 / 5.0_f64).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => (
            vec![
                -0.861_136_311_594_052_6,
                -0.339_981_043_584_856_3,
                0.339_981_043_584_856_3,
                0.861_136_311_594_052_6,
            ],
            vec![
                0.347_854_845_137_453_9,
                0.652_145_154_862_546_2,
                0.652_145_154_862_546_2,
                0.347_854_845_137_453_9,
            ],
        ),
        _ => panic!("edge_gauss: unsupported point count {n}"),
    };
    let mut points = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for (x, w) in nodes.iter().zip(&weights) {
        let s = 0.5 * (x + 1.0);
        points.push([1.0 - s, s, 0.0, 0.0]);
        ws.push(0.5 * w);
    }
    QuadRule { nverts: 2, points, weights: ws }
}

/// Pushes all distinct permutations of a 3-entry barycentric orbit.
fn tri_orbit(points: &mut Vec<[f64; 4]>, weights: &mut Vec<f64>, l: [f64; 3], w: f64) {
    let perms: &[[usize; 3]] = &[[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut seen: Vec<[u64; 3]> = Vec::new();
    for p in perms {
        let cand = [l[p[0]], l[p[1]], l[p[2]]];
        let key = [cand[0].to_bits(), cand[1].to_bits(), cand[2].to_bits()];
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        points.push([cand[0], cand[1], cand[2], 0.0]);
        weights.push(w);
    }
}

/// Six-point symmetric triangle rule, exact to degree 4.
pub fn triangle_degree4() -> QuadRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let a = 0.445_948_490_915_965;
    tri_orbit(&mut points, &mut weights, [1.0 - 2.0 * a, a, a], 0.223_381_589_678_011);
    let b = 0.091_576_213_509_771;
    tri_orbit(&mut points, &mut weights, [1.0 - 2.0 * b, b, b], 0.109_951_743_655_322);
    QuadRule { nverts: 3, points, weights }
}

/// Seven-point symmetric triangle rule, exact to degree 5.
pub fn triangle_degree5() -> QuadRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let third = 1.0 / 3.0;
    points.push([third, third, third, 0.0]);
    weights.push(9.0 / 40.0);
    let a = 0.470_142_064_105_115;
    tri_orbit(&mut points, &mut weights, [1.0 - 2.0 * a, a, a], 0.132_394_152_788_506);
    let b = 0.101_286_507_323_456;
    tri_orbit(&mut points, &mut weights, [1.0 - 2.0 * b, b, b], 0.125_939_180_544_827);
    QuadRule { nverts: 3, points, weights }
}

/// Twelve-point symmetric triangle rule, exact to degree 6.
pub fn triangle_degree6() -> QuadRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let a = 0.063_089_014_491_502;
    tri_orbit(&mut points, &mut weights, [1.0 - 2.0 * a, a, a], 0.050_844_906_370_207);
    let b = 0.249_286_745_170_910;
    tri_orbit(&mut points, &mut weights, [1.0 - 2.0 * b, b, b], 0.116_786_275_726_379);
    let c = 0.310_352_451_033_785;
    let d = 0.053_145_049_844_816;
    tri_orbit(&mut points, &mut weights, [1.0 - c - d, c, d], 0.082_851_075_618_374);
    QuadRule { nverts: 3, points, weights }
}

/// Pushes all distinct permutations of a 4-entry barycentric orbit.
fn tet_orbit(points: &mut Vec<[f64; 4]>, weights: &mut Vec<f64>, l: [f64; 4], w: f64) {
    let mut perm = [0usize, 1, 2, 3];
    let mut seen: Vec<[u64; 4]> = Vec::new();
    // Heap-style enumeration is overkill for 24 permutations; generate directly.
    loop {
        let cand = [l[perm[0]], l[perm[1]], l[perm[2]], l[perm[3]]];
        let key = [cand[0].to_bits(), cand[1].to_bits(), cand[2].to_bits(), cand[3].to_bits()];
        if !seen.contains(&key) {
            seen.push(key);
            points.push(cand);
            weights.push(w);
        }
        // Next lexicographic permutation of `perm`.
        let mut i = 2usize;
        loop {
            if perm[i] < perm[i + 1] {
                break;
            }
            if i == 0 {
                return;
            }
            i -= 1;
        }
        let mut j = 3;
        while perm[j] <= perm[i] {
            j -= 1;
        }
        perm.swap(i, j);
        perm[i + 1..].reverse();
    }
}

/// Fourteen-point symmetric tetrahedron rule, exact to degree 5.
pub fn tet_degree5() -> QuadRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let a = 0.310_885_919_263_300_5;
    tet_orbit(&mut points, &mut weights, [1.0 - 3.0 * a, a, a, a], 0.112_687_925_718_016_2);
    let b = 0.092_735_250_310_891_2;
    tet_orbit(&mut points, &mut weights, [1.0 - 3.0 * b, b, b, b], 0.073_493_043_116_361_9);
    let c = 0.045_503_704_125_649_6;
    let d = 0.5 - c;
    tet_orbit(&mut points, &mut weights, [c, c, d, d], 0.042_546_020_777_081_2);
    QuadRule { nverts: 4, points, weights }
}

/// Cell rule of the assembly tier (degree 4 in 2D, degree 5 in 3D).
pub fn assembly_cell_rule(dim: usize) -> QuadRule {
    match dim {
        2 => triangle_degree4(),
        3 => tet_degree5(),
        _ => panic!("assembly_cell_rule: dimension must be 2 or 3, got {dim}"),
    }
}

/// Cell rule of the error tier (degree 6 in 2D, degree 5 in 3D).
pub fn error_cell_rule(dim: usize) -> QuadRule {
    match dim {
        2 => triangle_degree6(),
        3 => tet_degree5(),
        _ => panic!("error_cell_rule: dimension must be 2 or 3, got {dim}"),
    }
}

/// Face rule of the assembly tier (degree 3 on edges, degree 4 on triangles).
pub fn assembly_face_rule(dim: usize) -> QuadRule {
    match dim {
        2 => edge_gauss(2),
        3 => triangle_degree4(),
        _ => panic!("assembly_face_rule: dimension must be 2 or 3, got {dim}"),
    }
}

/// Face rule of the error tier (degree 7 on edges, degree 5 on triangles).
pub fn error_face_rule(dim: usize) -> QuadRule {
    match dim {
        2 => edge_gauss(4),
        3 => triangle_degree5(),
        _ => panic!("error_face_rule: dimension must be 2 or 3, got {dim}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product::<f64>().max(1.0)
    }

    /// Integrates x^a y^b over the reference triangle (0,0)-(1,0)-(0,1)
    /// using the rule; the exact value is a! b! / (a + b + 2)!.
    fn check_triangle_exactness(rule: &QuadRule, degree: usize) {
        for a in 0..=degree {
            for b in 0..=(degree - a) {
                let mut quad = 0.0;
                for (l, w) in rule.points.iter().zip(&rule.weights) {
                    let (x, y) = (l[1], l[2]);
                    quad += w * x.powi(a as i32) * y.powi(b as i32);
                }
                quad *= 0.5; // reference-triangle area
                let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
                assert!(
                    (quad - exact).abs() <= 1e-14 * exact.max(1.0),
                    "x^{a} y^{b}: quad {quad:.17e} vs exact {exact:.17e}"
                );
            }
        }
    }

    /// Same for x^a y^b z^c over the reference tetrahedron; exact value
    /// a! b! c! / (a + b + c + 3)!.
    fn check_tet_exactness(rule: &QuadRule, degree: usize) {
        for a in 0..=degree {
            for b in 0..=(degree - a) {
                for c in 0..=(degree - a - b) {
                    let mut quad = 0.0;
                    for (l, w) in rule.points.iter().zip(&rule.weights) {
                        let (x, y, z) = (l[1], l[2], l[3]);
                        quad += w * x.powi(a as i32) * y.powi(b as i32) * z.powi(c as i32);
                    }
                    quad /= 6.0; // reference-tetrahedron volume
                    let exact = factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3);
                    assert!(
                        (quad - exact).abs() <= 1e-14 * exact.max(1.0),
                        "x^{a} y^{b} z^{c}: quad {quad:.17e} vs exact {exact:.17e}"
                    );
                }
            }
        }
    }

    #[test]
    fn edge_rules_integrate_monomials() {
        for n in 1..=4 {
            let rule = edge_gauss(n);
            let degree = 2 * n - 1;
            for k in 0..=degree {
                let quad: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(l, w)| w * l[1].powi(k as i32))
                    .sum();
                let exact = 1.0 / (k as f64 + 1.0);
                assert!(
                    (quad - exact).abs() <= 1e-15,
                    "n={n} s^{k}: {quad:.17e} vs {exact:.17e}"
                );
            }
        }
    }

    #[test]
    fn triangle_rules_are_exact_to_stated_degree() {
        check_triangle_exactness(&triangle_degree4(), 4);
        check_triangle_exactness(&triangle_degree5(), 5);
        check_triangle_exactness(&triangle_degree6(), 6);
    }

    #[test]
    fn tet_rule_is_exact_to_degree_5() {
        check_tet_exactness(&tet_degree5(), 5);
    }

    #[test]
    fn rule_point_counts_and_weight_sums() {
        for (rule, n) in [
            (triangle_degree4(), 6),
            (triangle_degree5(), 7),
            (triangle_degree6(), 12),
            (tet_degree5(), 14),
        ] {
            assert_eq!(rule.len(), n);
            let sum: f64 = rule.weights.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-14, "weights sum to {sum}");
            for l in &rule.points {
                let s: f64 = l.iter().sum();
                assert!((s - 1.0).abs() <= 1e-14);
                assert!(l.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    #[should_panic(expected = "dimension must be 2 or 3")]
    fn rejects_unsupported_dimension() {
        assembly_cell_rule(4);
    }
}
