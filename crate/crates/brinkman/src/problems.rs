//! Benchmark problem data: manufactured smooth solutions for convergence
//! studies and piecewise-constant permeability fields for the porous-media
//! runs.
//!
//! The manufactured cases solve the scaled system
//! `-nu Lap(u) + u + grad(p) = f` with the forcing derived analytically
//! from the chosen exact fields.  The permeability cases use the unscaled
//! form `-mu Lap(u) + (mu / K) u + grad(p) = f` with per-cell reaction
//! `sigma_T = mu / K(x_T)` sampled at cell barycenters.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::mesh::SimplicialMesh;

/// Errors from problem construction.
#[derive(Debug, Error)]
pub enum ProblemError {
    /// Only 2D and 3D cases exist.
    #[error("unsupported dimension {0} (expected 2 or 3)")]
    UnsupportedDimension(usize),
    /// Scalar parameters (viscosity, permeability) must be positive.
    #[error("parameter {name} must be positive, got {value}")]
    NonpositiveParameter { name: &'static str, value: f64 },
    /// A permeability raster file could not be read.
    #[error("reading raster file: {0}")]
    Io(#[from] std::io::Error),
    /// A permeability raster file is malformed.
    #[error("malformed raster: {0}")]
    RasterFormat(String),
}

/// Smooth manufactured solution of the scaled equations on the unit
/// square or cube, with homogeneous (2D) or inhomogeneous (3D) boundary
/// velocity.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedCase {
    /// Spatial dimension, 2 or 3.
    pub dim: usize,
    /// Viscous coefficient of the scaled system.
    pub nu: f64,
}

/// Quartic profile `x^2 (x - 1)^2` and its derivatives, the building block
/// of the 2D velocity.
fn quartic(x: f64) -> f64 {
    x * x * (x - 1.0) * (x - 1.0)
}
fn quartic_d1(x: f64) -> f64 {
    2.0 * x * (x - 1.0) * (2.0 * x - 1.0)
}
fn quartic_d2(x: f64) -> f64 {
    2.0 * (6.0 * x * x - 6.0 * x + 1.0)
}
/// Half of the first derivative: `x (x - 1) (2x - 1)` and derivatives.
fn cubic(x: f64) -> f64 {
    x * (x - 1.0) * (2.0 * x - 1.0)
}
fn cubic_d1(x: f64) -> f64 {
    6.0 * x * x - 6.0 * x + 1.0
}
fn cubic_d2(x: f64) -> f64 {
    12.0 * x - 6.0
}

impl ManufacturedCase {
    /// Builds the case for the given dimension and viscous coefficient.
    pub fn new(dim: usize, nu: f64) -> Result<Self, ProblemError> {
        if dim != 2 && dim != 3 {
            return Err(ProblemError::UnsupportedDimension(dim));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(ProblemError::NonpositiveParameter { name: "nu", value: nu });
        }
        Ok(ManufacturedCase { dim, nu })
    }

    /// Exact velocity.
    ///
    /// 2D: `(10 x^2(x-1)^2 y(y-1)(2y-1), -10 x(x-1)(2x-1) y^2(y-1)^2)`,
    /// which vanishes on the whole boundary.  3D: the divergence-free
    /// trigonometric field with components
    /// `sin(pi x) cos(pi y) - sin(pi x) cos(pi z)` and cyclic shifts.
    pub fn velocity(&self, x: &Vector3<f64>) -> Vector3<f64> {
        if self.dim == 2 {
            Vector3::new(
                10.0 * quartic(x.x) * cubic(x.y),
                -10.0 * cubic(x.x) * quartic(x.y),
                0.0,
            )
        } else {
            let (sx, cx) = (std::f64::consts::PI * x.x).sin_cos();
            let (sy, cy) = (std::f64::consts::PI * x.y).sin_cos();
            let (sz, cz) = (std::f64::consts::PI * x.z).sin_cos();
            Vector3::new(sx * (cy - cz), sy * (cz - cx), sz * (cx - cy))
        }
    }

    /// Exact velocity Jacobian, `grad[(r, c)] = d u_r / d x_c`.
    pub fn velocity_gradient(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        let mut g = Matrix3::zeros();
        if self.dim == 2 {
            g[(0, 0)] = 10.0 * quartic_d1(x.x) * cubic(x.y);
            g[(0, 1)] = 10.0 * quartic(x.x) * cubic_d1(x.y);
            g[(1, 0)] = -10.0 * cubic_d1(x.x) * quartic(x.y);
            g[(1, 1)] = -10.0 * cubic(x.x) * quartic_d1(x.y);
        } else {
            let pi = std::f64::consts::PI;
            let (sx, cx) = (pi * x.x).sin_cos();
            let (sy, cy) = (pi * x.y).sin_cos();
            let (sz, cz) = (pi * x.z).sin_cos();
            g[(0, 0)] = pi * cx * (cy - cz);
            g[(0, 1)] = -pi * sx * sy;
            g[(0, 2)] = pi * sx * sz;
            g[(1, 0)] = pi * sy * sx;
            g[(1, 1)] = pi * cy * (cz - cx);
            g[(1, 2)] = -pi * sy * sz;
            g[(2, 0)] = -pi * sz * sx;
            g[(2, 1)] = pi * sz * sy;
            g[(2, 2)] = pi * cz * (cx - cy);
        }
        g
    }

    /// Exact velocity Laplacian.
    pub fn velocity_laplacian(&self, x: &Vector3<f64>) -> Vector3<f64> {
        if self.dim == 2 {
            Vector3::new(
                10.0 * (quartic_d2(x.x) * cubic(x.y) + quartic(x.x) * cubic_d2(x.y)),
                -10.0 * (cubic_d2(x.x) * quartic(x.y) + cubic(x.x) * quartic_d2(x.y)),
                0.0,
            )
        } else {
            // Every term is a product of one-frequency factors in two
            // variables, so the field is an eigenfunction: Lap u = -2 pi^2 u.
            -2.0 * std::f64::consts::PI.powi(2) * self.velocity(x)
        }
    }

    /// Exact pressure as printed: `10 (2x-1)(2y-1)` in 2D (zero mean) and
    /// `pi^3 sin(pi x) sin(pi y) sin(pi z) - 1` in 3D (mean 7; error
    /// measures compare zero-mean representatives).
    pub fn pressure(&self, x: &Vector3<f64>) -> f64 {
        if self.dim == 2 {
            10.0 * (2.0 * x.x - 1.0) * (2.0 * x.y - 1.0)
        } else {
            let pi = std::f64::consts::PI;
            pi.powi(3) * (pi * x.x).sin() * (pi * x.y).sin() * (pi * x.z).sin() - 1.0
        }
    }

    /// Exact pressure gradient.
    pub fn pressure_gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        if self.dim == 2 {
            Vector3::new(20.0 * (2.0 * x.y - 1.0), 20.0 * (2.0 * x.x - 1.0), 0.0)
        } else {
            let pi = std::f64::consts::PI;
            let (sx, cx) = (pi * x.x).sin_cos();
            let (sy, cy) = (pi * x.y).sin_cos();
            let (sz, cz) = (pi * x.z).sin_cos();
            pi.powi(4) * Vector3::new(cx * sy * sz, sx * cy * sz, sx * sy * cz)
        }
    }

    /// Body force `-nu Lap(u) + u + grad(p)` of the scaled system.
    pub fn forcing(&self, x: &Vector3<f64>) -> Vector3<f64> {
        -self.nu * self.velocity_laplacian(x) + self.velocity(x) + self.pressure_gradient(x)
    }

    /// Dirichlet boundary data (the exact velocity trace).
    pub fn boundary(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.velocity(x)
    }
}

/// Piecewise-constant permeability description.
#[derive(Debug, Clone)]
pub enum PermeabilityField {
    /// Constant permeability everywhere.
    Uniform(f64),
    /// 2D raster of permeability values: `nx` columns by `ny` rows in
    /// row-major order with the *first row at the top of the domain*
    /// (y near 1), so a file reads like a picture of the medium.
    Raster2d { nx: usize, ny: usize, values: Vec<f64> },
    /// Low permeability inside the ball `|x - center| <= radius`, high
    /// outside.
    Ball3d { center: Vector3<f64>, radius: f64, low: f64, high: f64 },
}

impl PermeabilityField {
    /// Permeability value at a point.
    pub fn value(&self, x: &Vector3<f64>) -> f64 {
        match self {
            PermeabilityField::Uniform(k) => *k,
            PermeabilityField::Raster2d { nx, ny, values } => {
                let col = ((x.x * *nx as f64).floor() as isize).clamp(0, *nx as isize - 1) as usize;
                let row_from_top =
                    (((1.0 - x.y) * *ny as f64).floor() as isize).clamp(0, *ny as isize - 1) as usize;
                values[row_from_top * nx + col]
            }
            PermeabilityField::Ball3d { center, radius, low, high } => {
                if (x - center).norm() <= *radius {
                    *low
                } else {
                    *high
                }
            }
        }
    }

    /// Parses the raster text format: a `nx ny` header line followed by
    /// `nx * ny` whitespace-separated positive values in row-major order
    /// (top row first).  Lines starting with `#` are comments.
    pub fn parse_raster(text: &str) -> Result<Self, ProblemError> {
        let mut tokens = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .flat_map(|l| l.split_whitespace());
        let bad = |msg: String| ProblemError::RasterFormat(msg);
        let nx: usize = tokens
            .next()
            .ok_or_else(|| bad("missing header".into()))?
            .parse()
            .map_err(|e| bad(format!("bad column count: {e}")))?;
        let ny: usize = tokens
            .next()
            .ok_or_else(|| bad("missing row count in header".into()))?
            .parse()
            .map_err(|e| bad(format!("bad row count: {e}")))?;
        if nx == 0 || ny == 0 {
            return Err(bad(format!("raster must be nonempty, got {nx} x {ny}")));
        }
        let mut values = Vec::with_capacity(nx * ny);
        for tok in tokens.by_ref() {
            let v: f64 = tok.parse().map_err(|e| bad(format!("bad value '{tok}': {e}")))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(format!("permeability values must be positive, got {v}")));
            }
            values.push(v);
        }
        if values.len() != nx * ny {
            return Err(bad(format!(
                "expected {} values for a {nx} x {ny} raster, found {}",
                nx * ny,
                values.len()
            )));
        }
        Ok(PermeabilityField::Raster2d { nx, ny, values })
    }

    /// Reads the raster format from a file.
    pub fn read_raster_file(path: &std::path::Path) -> Result<Self, ProblemError> {
        Self::parse_raster(&std::fs::read_to_string(path)?)
    }

    /// Built-in illustrative 2D medium: two staggered low-permeability bars
    /// on a 16 x 16 raster, forcing the flow into an S-shaped channel.
    /// (A stand-in for externally supplied permeability maps.)
    pub fn channel_default() -> Self {
        let (nx, ny) = (16usize, 16usize);
        let mut values = vec![1.0; nx * ny];
        for row_from_top in 0..ny {
            let y = 1.0 - (row_from_top as f64 + 0.5) / ny as f64;
            for col in 0..nx {
                let x = (col as f64 + 0.5) / nx as f64;
                let bar1 = (0.25..0.375).contains(&y) && x < 0.75;
                let bar2 = (0.625..0.75).contains(&y) && x >= 0.25;
                if bar1 || bar2 {
                    values[row_from_top * nx + col] = 1e-6;
                }
            }
        }
        PermeabilityField::Raster2d { nx, ny, values }
    }

    /// Built-in 3D medium: permeability `1e-6` inside the small ball
    /// `|x| <= 0.0625` at the origin corner, `1` outside.
    pub fn ball_default() -> Self {
        PermeabilityField::Ball3d {
            center: Vector3::zeros(),
            radius: 0.25 * 0.25,
            low: 1e-6,
            high: 1.0,
        }
    }
}

/// A permeability run: constant forcing and boundary data, per-cell
/// reaction coefficient sampled from the permeability field.
#[derive(Debug, Clone)]
pub struct PermeabilityCase {
    /// Spatial dimension.
    pub dim: usize,
    /// Fluid viscosity.
    pub mu: f64,
    /// Reaction coefficient `mu / K` per cell.
    pub sigma: Vec<f64>,
    /// Permeability per cell (for output and region classification).
    pub permeability: Vec<f64>,
    /// Cells with permeability below `low_threshold` (the obstacle region).
    pub low_region: Vec<bool>,
    /// Constant body force.
    pub forcing: Vector3<f64>,
    /// Constant boundary velocity.
    pub boundary: Vector3<f64>,
}

/// Permeability below this value counts as the obstacle region in the
/// summary statistics.
pub const LOW_PERMEABILITY_THRESHOLD: f64 = 1e-3;

impl PermeabilityCase {
    /// Samples a permeability field on a mesh.
    ///
    /// Defaults per dimension: boundary velocity `<1,0>` / `<1,0,0>` and
    /// body force `<1,1>` / `<1,1,1>`.
    pub fn new(
        mesh: &SimplicialMesh,
        mu: f64,
        field: &PermeabilityField,
    ) -> Result<Self, ProblemError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(ProblemError::NonpositiveParameter { name: "mu", value: mu });
        }
        if mesh.dim == 2 && matches!(field, PermeabilityField::Ball3d { .. }) {
            return Err(ProblemError::RasterFormat(
                "ball permeability is a 3D field; use a raster in 2D".into(),
            ));
        }
        if mesh.dim == 3 && matches!(field, PermeabilityField::Raster2d { .. }) {
            return Err(ProblemError::RasterFormat(
                "raster permeability is a 2D field; use the ball in 3D".into(),
            ));
        }
        let permeability: Vec<f64> =
            mesh.cell_barycenters.iter().map(|x| field.value(x)).collect();
        let sigma: Vec<f64> = permeability.iter().map(|k| mu / k).collect();
        let low_region: Vec<bool> =
            permeability.iter().map(|&k| k < LOW_PERMEABILITY_THRESHOLD).collect();
        let (forcing, boundary) = if mesh.dim == 2 {
            (Vector3::new(1.0, 1.0, 0.0), Vector3::new(1.0, 0.0, 0.0))
        } else {
            (Vector3::new(1.0, 1.0, 1.0), Vector3::new(1.0, 0.0, 0.0))
        };
        Ok(PermeabilityCase {
            dim: mesh.dim,
            mu,
            sigma,
            permeability,
            low_region,
            forcing,
            boundary,
        })
    }
}
