//! Enriched Galerkin (EG) finite-element solvers for the Brinkman equations
//!
//! ```text
//! -nu Laplacian(u) + sigma u + grad(p) = f    in Omega
//!                             div(u)   = 0    in Omega
//!                                  u   = g    on the boundary
//! ```
//!
//! on the unit square / unit cube, discretized with an interior-penalty
//! enriched Galerkin pair: continuous piecewise-linear vector velocities
//! enriched with one piecewise-linear bubble per cell, and piecewise-constant
//! pressures.  Two variants are provided:
//!
//! * the standard scheme (`St`), whose velocity error degrades like 1/sqrt(nu)
//!   as the viscous coefficient nu tends to zero, and
//! * a pressure-robust scheme (`Pr`) that filters the velocity through a
//!   divergence-conforming reconstruction in the zeroth-order term and the
//!   forcing, making the velocity error independent of the pressure.
//!
//! Modules follow the pipeline order: `mesh` builds structured simplicial
//! meshes, `fespace` defines the discrete spaces, `reconstruction` builds the
//! divergence-conforming lifting, `assembly` produces the sparse forms,
//! `solver` solves the saddle-point system, `analysis` measures errors and
//! convergence orders, `problems` supplies benchmark data, and `app` drives
//! complete experiment runs from a configuration.

pub mod analysis;
pub mod app;
pub mod assembly;
pub mod fespace;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod reconstruction;
pub mod solver;
pub mod sparse;

/// Which of the two enriched Galerkin variants to assemble and solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Method {
    /// Standard scheme: zeroth-order term `(sigma u, v)` and forcing `(f, v)`.
    St,
    /// Pressure-robust scheme: both filtered through the reconstruction,
    /// `(sigma Ru, Rv)` and `(f, Rv)`.
    Pr,
}

impl Method {
    /// Short lowercase tag used in file names and CSV columns.
    pub fn tag(self) -> &'static str {
        match self {
            Method::St => "st",
            Method::Pr => "pr",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::St => "ST-EG",
            Method::Pr => "PR-EG",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "st" | "st-eg" | "standard" => Ok(Method::St),
            "pr" | "pr-eg" | "robust" | "pressure-robust" => Ok(Method::Pr),
            other => Err(format!("unknown method '{other}' (expected 'st' or 'pr')")),
        }
    }
}

/// How the velocity boundary data is imposed.
///
/// Both variants keep every face, interior and boundary, in the bilinear
/// forms and carry the consistency and penalty data terms on the right-hand
/// side.  `Strong` additionally pins the continuous vertex dofs on the
/// boundary to the interpolated data and eliminates them symmetrically; only
/// the cellwise enrichment stays free there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum BoundaryCondition {
    /// Purely weak imposition through consistency and penalty terms.
    Nitsche,
    /// Interpolated data pinned at the boundary vertices of the continuous
    /// component (the default; matches the reference convergence tables).
    Strong,
}

impl BoundaryCondition {
    /// Short lowercase tag used in file names and CSV columns.
    pub fn tag(self) -> &'static str {
        match self {
            BoundaryCondition::Nitsche => "nitsche",
            BoundaryCondition::Strong => "strong",
        }
    }
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for BoundaryCondition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nitsche" | "weak" => Ok(BoundaryCondition::Nitsche),
            "strong" => Ok(BoundaryCondition::Strong),
            other => Err(format!(
                "unknown boundary condition '{other}' (expected 'strong' or 'nitsche')"
            )),
        }
    }
}

/// Default interior-penalty weight on the velocity-gradient (H1) jumps.
pub const DEFAULT_H1_PENALTY: f64 = 3.0;
/// Default penalty weight on the zeroth-order (L2) jumps.
pub const DEFAULT_L2_PENALTY: f64 = 3.0;
