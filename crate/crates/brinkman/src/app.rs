//! Experiment drivers: run configuration, orchestration of the
//! mesh / spaces / assembly / solve / analysis pipeline, and file output as
//! CSV tables, legacy-ASCII VTK fields, and JSON run manifests.
//!
//! Output conventions:
//! * every CSV starts with a `# config_hash=...` line tying it to the JSON
//!   manifest of the same run;
//! * floating-point values are printed in Rust's shortest round-trip form,
//!   so parsing a file back recovers the exact computed bits;
//! * reruns with an identical configuration produce byte-identical files
//!   (solves are sequential and deterministic unless `BRINKMAN_THREADS`
//!   asks for parallelism, which the manifest records);
//! * velocity is written as *cell* data sampled at barycenters: the enriched
//!   velocity is discontinuous across faces, so point data would silently
//!   average neighboring cells.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{
    compute_errors, convergence_orders, error_profile_reference, AnalysisError, ErrorReport,
    Order, ProfileQuantity,
};
use crate::fespace::{face_points, EgSpace, HdivMomentSpace, PressureSpace};
use crate::mesh::{MeshError, SimplicialMesh};
use crate::problems::{ManufacturedCase, PermeabilityCase, PermeabilityField, ProblemError};
use crate::quadrature::error_face_rule;
use crate::reconstruction::Reconstruction;
use crate::solver::{solve_saddle, SaddleSystem, SolverError, DEFAULT_RESIDUAL_TOL};
use crate::{BoundaryCondition, Method, DEFAULT_H1_PENALTY, DEFAULT_L2_PENALTY};

/// Errors from configuration handling and run orchestration.
#[derive(Debug, Error)]
pub enum AppError {
    /// Invalid or contradictory configuration.
    #[error("configuration: {0}")]
    Config(String),
    /// Problem data could not be built.
    #[error(transparent)]
    Problem(#[from] ProblemError),
    /// Mesh construction failed.
    #[error(transparent)]
    Mesh(#[from] MeshError),
    /// Assembly or solve failed.
    #[error(transparent)]
    Solver(#[from] SolverError),
    /// Error measurement failed.
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    /// File output failed.
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

/// Which methods a run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum MethodChoice {
    /// Standard scheme only.
    St,
    /// Pressure-robust scheme only.
    Pr,
    /// Both, in the fixed order standard then robust.
    Both,
}

impl MethodChoice {
    /// The methods to run, in output order.
    pub fn methods(self) -> &'static [Method] {
        match self {
            MethodChoice::St => &[Method::St],
            MethodChoice::Pr => &[Method::Pr],
            MethodChoice::Both => &[Method::St, Method::Pr],
        }
    }
}

impl std::fmt::Display for MethodChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MethodChoice::St => "st",
            MethodChoice::Pr => "pr",
            MethodChoice::Both => "both",
        })
    }
}

impl std::str::FromStr for MethodChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("both") {
            return Ok(MethodChoice::Both);
        }
        s.parse::<Method>().map(|m| match m {
            Method::St => MethodChoice::St,
            Method::Pr => MethodChoice::Pr,
        })
    }
}

/// Where the permeability field comes from.
#[derive(Debug, Clone, Serialize)]
pub enum PermeabilitySource {
    /// Built-in 2D raster with two staggered low-permeability bars.
    Channel,
    /// 2D raster file (`nx ny` header, then row-major values, top row first).
    Raster(PathBuf),
    /// 3D low-permeability ball.
    Ball {
        /// Ball center.
        center: [f64; 3],
        /// Ball radius.
        radius: f64,
    },
    /// The same permeability everywhere (sanity runs).
    Uniform(f64),
}

impl PermeabilitySource {
    /// Materializes the field, reading the raster file if needed.
    pub fn build(&self) -> Result<PermeabilityField, AppError> {
        Ok(match self {
            PermeabilitySource::Channel => PermeabilityField::channel_default(),
            PermeabilitySource::Raster(path) => PermeabilityField::read_raster_file(path)?,
            PermeabilitySource::Ball { center, radius } => PermeabilityField::Ball3d {
                center: Vector3::new(center[0], center[1], center[2]),
                radius: *radius,
                low: 1e-6,
                high: 1.0,
            },
            PermeabilitySource::Uniform(k) => PermeabilityField::Uniform(*k),
        })
    }
}

/// A fully resolved run configuration.  Serialized into every manifest and
/// hashed into every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    /// Which experiment this configuration drives.
    pub command: String,
    /// Spatial dimension, 2 or 3.
    pub dim: usize,
    /// Methods to run.
    pub method: MethodChoice,
    /// Boundary treatment.
    pub bc: BoundaryCondition,
    /// Viscous coefficient of the manufactured runs.
    pub nu: f64,
    /// Mesh resolutions of the refinement study, each double the previous.
    pub ns: Vec<usize>,
    /// Mesh resolution of single-mesh runs (profile, permeability, single).
    pub n: usize,
    /// Viscous coefficients of the profile sweep.
    pub nus: Vec<f64>,
    /// Fluid viscosity of the permeability runs.
    pub mu: f64,
    /// Permeability field of the permeability runs.
    pub permeability: PermeabilitySource,
    /// Interior-penalty weight on the gradient jumps.
    pub h1_penalty: f64,
    /// Penalty weight on the zeroth-order jumps.
    pub l2_penalty: f64,
    /// Relative residual bound for accepting a solve.
    pub tol: f64,
    /// Requested solver threads (1 = sequential/reproducible).
    pub threads: usize,
    /// Output directory.
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// Built-in defaults for one command and dimension.
    pub fn defaults(command: &str, dim: usize) -> Result<Self, AppError> {
        if dim != 2 && dim != 3 {
            return Err(AppError::Config(format!("dimension must be 2 or 3, got {dim}")));
        }
        let threads = std::env::var("BRINKMAN_THREADS")
            .ok()
            .and_then(|s| s.parse().ok())
            .unwrap_or(1);
        Ok(RunConfig {
            command: command.to_string(),
            dim,
            method: MethodChoice::Both,
            bc: BoundaryCondition::Strong,
            nu: 1e-6,
            ns: if dim == 2 { vec![4, 8, 16, 32, 64] } else { vec![4, 8, 16] },
            n: if dim == 2 { 32 } else { 16 },
            nus: (0..=8).map(|k| 10f64.powi(-k)).collect(),
            mu: 1e-6,
            permeability: if dim == 2 {
                PermeabilitySource::Channel
            } else {
                // Low-permeability ball of radius 0.0625 at the origin corner.
                PermeabilitySource::Ball { center: [0.0; 3], radius: 0.0625 }
            },
            h1_penalty: DEFAULT_H1_PENALTY,
            l2_penalty: DEFAULT_L2_PENALTY,
            tol: DEFAULT_RESIDUAL_TOL,
            threads,
            out_dir: PathBuf::from("runs"),
        })
    }

    /// Resolves a configuration in precedence order: defaults, then the
    /// key=value file, then the command-line overrides (flags win).
    pub fn resolve(
        command: &str,
        config_file: Option<&Path>,
        flags: ConfigOverrides,
    ) -> Result<Self, AppError> {
        let file = match config_file {
            Some(path) => ConfigOverrides::parse_file(&fs::read_to_string(path)?)?,
            None => ConfigOverrides::default(),
        };
        let dim = flags.dim.or(file.dim).unwrap_or(2);
        let mut config = Self::defaults(command, dim)?;
        config.apply(&file)?;
        config.apply(&flags)?;
        config.validate()?;
        Ok(config)
    }

    /// Applies one override layer.  Permeability-source keys replace the
    /// source wholesale; giving more than one in the same layer is an error.
    fn apply(&mut self, o: &ConfigOverrides) -> Result<(), AppError> {
        if let Some(v) = o.dim {
            if v != self.dim {
                return Err(AppError::Config(format!(
                    "dimension changed between layers ({} vs {v})",
                    self.dim
                )));
            }
        }
        if let Some(v) = o.method {
            self.method = v;
        }
        if let Some(v) = o.bc {
            self.bc = v;
        }
        if let Some(v) = o.nu {
            self.nu = v;
        }
        if let Some(v) = &o.ns {
            self.ns = v.clone();
        }
        if let Some(v) = o.n {
            self.n = v;
        }
        if let Some(v) = &o.nus {
            self.nus = v.clone();
        }
        if let Some(v) = o.mu {
            self.mu = v;
        }
        if let Some(v) = o.h1_penalty {
            self.h1_penalty = v;
        }
        if let Some(v) = o.l2_penalty {
            self.l2_penalty = v;
        }
        if let Some(v) = o.tol {
            self.tol = v;
        }
        if let Some(v) = &o.out_dir {
            self.out_dir = v.clone();
        }
        let sources = usize::from(o.raster.is_some())
            + usize::from(o.ball.is_some())
            + usize::from(o.uniform_k.is_some());
        if sources > 1 {
            return Err(AppError::Config(
                "choose one permeability source: raster, ball, or uniform_k".into(),
            ));
        }
        if let Some(path) = &o.raster {
            self.permeability = PermeabilitySource::Raster(path.clone());
        } else if let Some(b) = o.ball {
            self.permeability =
                PermeabilitySource::Ball { center: [b[0], b[1], b[2]], radius: b[3] };
        } else if let Some(k) = o.uniform_k {
            self.permeability = PermeabilitySource::Uniform(k);
        }
        Ok(())
    }

    /// Parameter sanity shared by every command.
    fn validate(&self) -> Result<(), AppError> {
        let positive = [
            ("nu", self.nu),
            ("mu", self.mu),
            ("h1_penalty", self.h1_penalty),
            ("l2_penalty", self.l2_penalty),
            ("tol", self.tol),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(AppError::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if self.n == 0 {
            return Err(AppError::Config("mesh resolution n must be at least 1".into()));
        }
        if self.nus.is_empty() || self.nus.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(AppError::Config("nus must be a nonempty list of positive values".into()));
        }
        if let PermeabilitySource::Ball { radius, .. } = self.permeability {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(AppError::Config(format!("ball radius must be positive, got {radius}")));
            }
        }
        if let PermeabilitySource::Uniform(k) = self.permeability {
            if !(k > 0.0 && k.is_finite()) {
                return Err(AppError::Config(format!("permeability must be positive, got {k}")));
            }
        }
        Ok(())
    }

    /// Checks the refinement list: nonempty, each resolution double the
    /// previous, so order columns read `log2(err_{2h}/err_h)`.
    pub fn validate_refinements(&self) -> Result<(), AppError> {
        if self.ns.is_empty() || self.ns[0] == 0 {
            return Err(AppError::Config("mesh list must start at a positive resolution".into()));
        }
        for pair in self.ns.windows(2) {
            if pair[1] != 2 * pair[0] {
                return Err(AppError::Config(format!(
                    "mesh resolutions must double at each step, got {} after {}",
                    pair[1], pair[0]
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON serialization of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            write!(hex, "{byte:02x}").unwrap();
        }
        hex
    }
}

/// Partial configuration from a config file or command-line flags.
#[derive(Debug, Default, Clone)]
pub struct ConfigOverrides {
    /// See [`RunConfig::dim`].
    pub dim: Option<usize>,
    /// See [`RunConfig::method`].
    pub method: Option<MethodChoice>,
    /// See [`RunConfig::bc`].
    pub bc: Option<BoundaryCondition>,
    /// See [`RunConfig::nu`].
    pub nu: Option<f64>,
    /// See [`RunConfig::ns`].
    pub ns: Option<Vec<usize>>,
    /// See [`RunConfig::n`].
    pub n: Option<usize>,
    /// See [`RunConfig::nus`].
    pub nus: Option<Vec<f64>>,
    /// See [`RunConfig::mu`].
    pub mu: Option<f64>,
    /// Raster-file permeability source.
    pub raster: Option<PathBuf>,
    /// Ball permeability source as `[cx, cy, cz, radius]`.
    pub ball: Option<[f64; 4]>,
    /// Uniform permeability source.
    pub uniform_k: Option<f64>,
    /// See [`RunConfig::h1_penalty`].
    pub h1_penalty: Option<f64>,
    /// See [`RunConfig::l2_penalty`].
    pub l2_penalty: Option<f64>,
    /// See [`RunConfig::tol`].
    pub tol: Option<f64>,
    /// See [`RunConfig::out_dir`].
    pub out_dir: Option<PathBuf>,
}

impl ConfigOverrides {
    /// Parses the `key=value` file format.  Blank lines and `#` comments are
    /// skipped; unknown keys are rejected so typos cannot silently fall back
    /// to defaults.
    pub fn parse_file(text: &str) -> Result<Self, AppError> {
        let mut o = ConfigOverrides::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| AppError::Config(format!("line {}: expected key=value", idx + 1)))?;
            let (key, value) = (key.trim().to_ascii_lowercase(), value.trim());
            let context = |e: String| AppError::Config(format!("line {}: {key}: {e}", idx + 1));
            match key.as_str() {
                "dim" => o.dim = Some(value.parse().map_err(|e| context(format!("{e}")))?),
                "method" => o.method = Some(value.parse().map_err(context)?),
                "bc" => o.bc = Some(value.parse().map_err(context)?),
                "nu" => o.nu = Some(value.parse().map_err(|e| context(format!("{e}")))?),
                "n" => o.n = Some(value.parse().map_err(|e| context(format!("{e}")))?),
                "ns" => o.ns = Some(parse_list(value).map_err(context)?),
                "nus" => o.nus = Some(parse_list(value).map_err(context)?),
                "mu" => o.mu = Some(value.parse().map_err(|e| context(format!("{e}")))?),
                "raster" => o.raster = Some(PathBuf::from(value)),
                "ball" => {
                    let parts: Vec<f64> = parse_list(value).map_err(context)?;
                    let four: [f64; 4] = parts.try_into().map_err(|v: Vec<f64>| {
                        context(format!("expected cx,cy,cz,radius, got {} values", v.len()))
                    })?;
                    o.ball = Some(four);
                }
                "uniform_k" => o.uniform_k = Some(value.parse().map_err(|e| context(format!("{e}")))?),
                "h1_penalty" => o.h1_penalty = Some(value.parse().map_err(|e| context(format!("{e}")))?),
                "l2_penalty" => o.l2_penalty = Some(value.parse().map_err(|e| context(format!("{e}")))?),
                "tol" => o.tol = Some(value.parse().map_err(|e| context(format!("{e}")))?),
                "out" => o.out_dir = Some(PathBuf::from(value)),
                other => {
                    return Err(AppError::Config(format!("line {}: unknown key '{other}'", idx + 1)))
                }
            }
        }
        Ok(o)
    }
}

/// Parses a comma-separated list.
fn parse_list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|part| part.trim().parse().map_err(|e| format!("'{part}': {e}")))
        .collect()
}

/// Shortest round-trip decimal form of a float.
fn num(x: f64) -> String {
    format!("{x}")
}

/// Writes a file, creating the parent directory first.
fn write_text(path: &Path, content: &str) -> Result<(), AppError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, content)?;
    Ok(())
}

/// Run manifest: configuration, identity, and command-specific results.
#[derive(Serialize)]
struct Manifest<'a, R: Serialize> {
    command: &'a str,
    config_hash: &'a str,
    artifact_version: &'static str,
    mesh_pattern: String,
    deterministic: bool,
    config: &'a RunConfig,
    outputs: Vec<String>,
    results: R,
}

/// Writes the JSON manifest next to the other outputs.
fn write_manifest<R: Serialize>(
    path: &Path,
    config: &RunConfig,
    hash: &str,
    outputs: &[PathBuf],
    results: R,
) -> Result<(), AppError> {
    let manifest = Manifest {
        command: &config.command,
        config_hash: hash,
        artifact_version: env!("CARGO_PKG_VERSION"),
        mesh_pattern: if config.dim == 2 {
            "structured: unit square, n x n cells split into 2 triangles each".to_string()
        } else {
            "structured: unit cube, n x n x n cells split into 6 tetrahedra each".to_string()
        },
        deterministic: config.threads <= 1,
        config,
        outputs: outputs
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
        results,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(path, &format!("{json}\n"))
}

/// One solved case: everything downstream postprocessing needs.
struct SolvedCase {
    velocity: Vec<f64>,
    pressure: Vec<f64>,
    n_unknowns: usize,
    relative_residual: f64,
}

/// Assembles and solves one case on already-built spaces.
#[allow(clippy::too_many_arguments)]
fn solve_case(
    eg: &EgSpace<'_>,
    pspace: &PressureSpace<'_>,
    hdiv: &HdivMomentSpace<'_>,
    rec: &Reconstruction,
    config: &RunConfig,
    method: Method,
    nu: f64,
    sigma: &[f64],
    forcing: &dyn Fn(&Vector3<f64>) -> Vector3<f64>,
    boundary: &dyn Fn(&Vector3<f64>) -> Vector3<f64>,
) -> Result<SolvedCase, AppError> {
    let system = SaddleSystem::assemble(
        eg,
        pspace,
        hdiv,
        rec,
        method,
        config.bc,
        nu,
        sigma,
        config.h1_penalty,
        config.l2_penalty,
        forcing,
        boundary,
    )?;
    let solution = solve_saddle(&system, config.tol)?;
    Ok(SolvedCase {
        velocity: solution.velocity,
        pressure: solution.pressure,
        n_unknowns: solution.n_unknowns,
        relative_residual: solution.relative_residual,
    })
}

/// Largest tangential slip of a discrete velocity along the boundary:
/// the maximum over boundary-face quadrature points of
/// `|(I - n n^T)(u_h - g)|`.  A stability indicator for the permeability
/// runs, where the exact trace is the constant inflow datum.
pub fn boundary_oscillation(
    eg: &EgSpace<'_>,
    coeffs: &[f64],
    boundary: &dyn Fn(&Vector3<f64>) -> Vector3<f64>,
) -> f64 {
    let mesh = eg.mesh;
    let rule = error_face_rule(mesh.dim);
    let mut worst = 0.0_f64;
    for (f, face) in mesh.faces.iter().enumerate() {
        if !face.is_boundary() {
            continue;
        }
        for pt in face_points(mesh, f, &rule) {
            let diff = eg.eval_function(face.plus, coeffs, &pt.x).unwrap().value - boundary(&pt.x);
            let tangential = diff - diff.dot(&face.normal) * face.normal;
            worst = worst.max(tangential.norm());
        }
    }
    worst
}

/// Velocity vectors sampled at cell barycenters.
pub fn velocity_at_barycenters(eg: &EgSpace<'_>, coeffs: &[f64]) -> Vec<Vector3<f64>> {
    let mesh = eg.mesh;
    (0..mesh.n_cells())
        .map(|c| eg.eval_function(c, coeffs, &mesh.cell_barycenters[c]).unwrap().value)
        .collect()
}

/// Writes a legacy-ASCII VTK unstructured grid with per-cell vector and
/// scalar fields.
fn write_vtk(
    path: &Path,
    mesh: &SimplicialMesh,
    vectors: &[(&str, &[Vector3<f64>])],
    scalars: &[(&str, &[f64])],
) -> Result<(), AppError> {
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("brinkman fields\n");
    s.push_str("ASCII\n");
    s.push_str("DATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.n_vertices());
    for v in &mesh.vertices {
        let _ = writeln!(s, "{} {} {}", num(v.x), num(v.y), num(v.z));
    }
    let per_cell = mesh.dim + 1;
    let _ = writeln!(s, "CELLS {} {}", mesh.n_cells(), mesh.n_cells() * (per_cell + 1));
    for c in 0..mesh.n_cells() {
        let _ = write!(s, "{per_cell}");
        for v in mesh.cell_vertices(c) {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {}", mesh.n_cells());
    let vtk_type = if mesh.dim == 2 { 5 } else { 10 }; // triangle / tetrahedron
    for _ in 0..mesh.n_cells() {
        let _ = writeln!(s, "{vtk_type}");
    }
    let _ = writeln!(s, "CELL_DATA {}", mesh.n_cells());
    for (name, field) in vectors {
        assert_eq!(field.len(), mesh.n_cells(), "vector field {name} has wrong length");
        let _ = writeln!(s, "VECTORS {name} double");
        for v in *field {
            let _ = writeln!(s, "{} {} {}", num(v.x), num(v.y), num(v.z));
        }
    }
    for (name, field) in scalars {
        assert_eq!(field.len(), mesh.n_cells(), "scalar field {name} has wrong length");
        let _ = writeln!(s, "SCALARS {name} double 1");
        s.push_str("LOOKUP_TABLE default\n");
        for &v in *field {
            let _ = writeln!(s, "{}", num(v));
        }
    }
    write_text(path, &s)
}

/// A refinement row that failed to solve, recorded instead of aborting the
/// whole study.
#[derive(Debug, Serialize)]
struct RowFailure {
    n: usize,
    nu: f64,
    method: Method,
    reason: String,
}

/// Per-method results of the refinement study.
#[derive(Serialize)]
struct ConvergenceMethodResult {
    method: Method,
    rows: Vec<ErrorReport>,
    orders: BTreeMap<String, Vec<Order>>,
    n_unknowns: Vec<usize>,
    relative_residuals: Vec<f64>,
}

/// Error columns of the convergence CSV, in output order, with accessors.
const CONVERGENCE_COLUMNS: [(&str, fn(&ErrorReport) -> f64); 7] = [
    ("energy_vs_interpolant", |r| r.energy_pi),
    ("scaled_h1", |r| r.scaled_h1),
    ("l2", |r| r.l2_u),
    ("p0_pressure", |r| r.p0_p),
    ("total_pressure", |r| r.total_p),
    ("energy_vs_exact", |r| r.energy),
    ("energy_r_vs_interpolant", |r| r.energy_r.unwrap_or(f64::NAN)),
];

/// Mesh-refinement study of the manufactured case: one CSV per method, one
/// manifest for the run.  A failed solve drops that row and records the
/// reason in the manifest.
pub fn run_convergence(config: &RunConfig) -> Result<Vec<PathBuf>, AppError> {
    config.validate_refinements()?;
    let case = ManufacturedCase::new(config.dim, config.nu)?;
    let hash = config.hash();
    let mut written = Vec::new();
    let mut method_results = Vec::new();
    let mut failures: Vec<RowFailure> = Vec::new();

    for &method in config.method.methods() {
        let mut rows: Vec<ErrorReport> = Vec::new();
        let mut n_unknowns = Vec::new();
        let mut residuals = Vec::new();
        for &n in &config.ns {
            let mesh = SimplicialMesh::structured(config.dim, n)?;
            let eg = EgSpace::new(&mesh);
            let pspace = PressureSpace::new(&mesh);
            let hdiv = HdivMomentSpace::new(&mesh);
            let rec = Reconstruction::build(&eg, &hdiv);
            let sigma = vec![1.0; mesh.n_cells()];
            let solved = match solve_case(
                &eg,
                &pspace,
                &hdiv,
                &rec,
                config,
                method,
                config.nu,
                &sigma,
                &|x| case.forcing(x),
                &|x| case.boundary(x),
            ) {
                Ok(s) => s,
                Err(e) => {
                    failures.push(RowFailure { n, nu: config.nu, method, reason: e.to_string() });
                    continue;
                }
            };
            let report = compute_errors(
                &eg,
                &solved.velocity,
                &solved.pressure,
                &|x| case.velocity(x),
                &|x| case.velocity_gradient(x),
                &|x| case.pressure(x),
                config.nu,
                config.h1_penalty,
                config.l2_penalty,
                Some((&hdiv, &rec)),
            )?;
            rows.push(report);
            n_unknowns.push(solved.n_unknowns);
            residuals.push(solved.relative_residual);
        }

        let mut orders = BTreeMap::new();
        for (name, accessor) in CONVERGENCE_COLUMNS {
            let column: Vec<f64> = rows.iter().map(accessor).collect();
            orders.insert(name.to_string(), convergence_orders(&column));
        }

        let mut csv = format!("# config_hash={hash}\n");
        csv.push_str("n,h");
        for (name, _) in CONVERGENCE_COLUMNS {
            let _ = write!(csv, ",{name},{name}_order");
        }
        csv.push('\n');
        // Rows that solved, coarsest first; n is recovered from h = sqrt(d)/n.
        for (i, report) in rows.iter().enumerate() {
            let n = ((config.dim as f64).sqrt() / report.h).round() as usize;
            let _ = write!(csv, "{n},{}", num(report.h));
            for (name, accessor) in CONVERGENCE_COLUMNS {
                let order = if i == 0 {
                    "-".to_string()
                } else {
                    orders[name][i - 1].to_string()
                };
                let _ = write!(csv, ",{},{order}", num(accessor(report)));
            }
            csv.push('\n');
        }
        let csv_path = config
            .out_dir
            .join(format!("convergence_{}d_{}.csv", config.dim, method.tag()));
        write_text(&csv_path, &csv)?;
        written.push(csv_path);

        method_results.push(ConvergenceMethodResult {
            method,
            rows,
            orders,
            n_unknowns,
            relative_residuals: residuals,
        });
    }

    #[derive(Serialize)]
    struct Results {
        methods: Vec<ConvergenceMethodResult>,
        failures: Vec<RowFailure>,
    }
    let manifest_path = config.out_dir.join(format!("convergence_{}d_manifest.json", config.dim));
    write_manifest(
        &manifest_path,
        config,
        &hash,
        &written,
        Results { methods: method_results, failures },
    )?;
    written.push(manifest_path);
    Ok(written)
}

/// One row of the viscosity sweep.
#[derive(Serialize)]
struct ProfileRow {
    nu: f64,
    st_velocity: f64,
    pr_velocity: f64,
    st_pressure: f64,
    pr_pressure: f64,
    st_velocity_reference: f64,
    pr_velocity_reference: f64,
    st_pressure_reference: f64,
    pr_pressure_reference: f64,
}

/// Error sweep over the viscous coefficient at fixed mesh size, always
/// running both methods (the sweep is a comparison).  Measured columns are
/// the energy velocity error and total pressure error; reference columns
/// are the closed-form envelope curves at the tabulated mesh size.
pub fn run_profile(config: &RunConfig) -> Result<Vec<PathBuf>, AppError> {
    let hash = config.hash();
    let mesh = SimplicialMesh::structured(config.dim, config.n)?;
    let eg = EgSpace::new(&mesh);
    let pspace = PressureSpace::new(&mesh);
    let hdiv = HdivMomentSpace::new(&mesh);
    let rec = Reconstruction::build(&eg, &hdiv);
    let sigma = vec![1.0; mesh.n_cells()];

    let mut rows: Vec<ProfileRow> = Vec::new();
    let mut failures: Vec<RowFailure> = Vec::new();
    for &nu in &config.nus {
        let case = ManufacturedCase::new(config.dim, nu)?;
        let mut measured = [[f64::NAN; 2]; 2]; // [method][velocity, pressure]
        let mut ok = true;
        for (m, &method) in [Method::St, Method::Pr].iter().enumerate() {
            match solve_case(
                &eg,
                &pspace,
                &hdiv,
                &rec,
                config,
                method,
                nu,
                &sigma,
                &|x| case.forcing(x),
                &|x| case.boundary(x),
            ) {
                Ok(solved) => {
                    let report = compute_errors(
                        &eg,
                        &solved.velocity,
                        &solved.pressure,
                        &|x| case.velocity(x),
                        &|x| case.velocity_gradient(x),
                        &|x| case.pressure(x),
                        nu,
                        config.h1_penalty,
                        config.l2_penalty,
                        None,
                    )?;
                    measured[m] = [report.energy, report.total_p];
                }
                Err(e) => {
                    failures.push(RowFailure { n: config.n, nu, method, reason: e.to_string() });
                    ok = false;
                }
            }
        }
        if !ok {
            continue;
        }
        let reference = |method, quantity| {
            error_profile_reference(nu, config.dim, method, quantity).expect("dimension validated")
        };
        rows.push(ProfileRow {
            nu,
            st_velocity: measured[0][0],
            pr_velocity: measured[1][0],
            st_pressure: measured[0][1],
            pr_pressure: measured[1][1],
            st_velocity_reference: reference(Method::St, ProfileQuantity::Velocity),
            pr_velocity_reference: reference(Method::Pr, ProfileQuantity::Velocity),
            st_pressure_reference: reference(Method::St, ProfileQuantity::Pressure),
            pr_pressure_reference: reference(Method::Pr, ProfileQuantity::Pressure),
        });
    }

    let mut csv = format!("# config_hash={hash}\n");
    csv.push_str(
        "nu,st_velocity,pr_velocity,st_pressure,pr_pressure,\
         st_velocity_reference,pr_velocity_reference,\
         st_pressure_reference,pr_pressure_reference\n",
    );
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            num(r.nu),
            num(r.st_velocity),
            num(r.pr_velocity),
            num(r.st_pressure),
            num(r.pr_pressure),
            num(r.st_velocity_reference),
            num(r.pr_velocity_reference),
            num(r.st_pressure_reference),
            num(r.pr_pressure_reference),
        );
    }
    let csv_path = config.out_dir.join(format!("profile_{}d.csv", config.dim));
    write_text(&csv_path, &csv)?;

    #[derive(Serialize)]
    struct Results {
        rows: Vec<ProfileRow>,
        failures: Vec<RowFailure>,
    }
    let manifest_path = config.out_dir.join(format!("profile_{}d_manifest.json", config.dim));
    write_manifest(&manifest_path, config, &hash, &[csv_path.clone()], Results { rows, failures })?;
    Ok(vec![csv_path, manifest_path])
}

/// Per-method summary of a permeability run.
#[derive(Serialize)]
struct PermeabilitySummary {
    method: Method,
    /// Max tangential slip along the boundary (see [`boundary_oscillation`]).
    boundary_oscillation: f64,
    /// Volume-weighted mean speed over low-permeability cells.
    low_region_mean_speed: f64,
    /// Volume-weighted mean speed over the rest.
    high_region_mean_speed: f64,
    low_region_max_speed: f64,
    high_region_max_speed: f64,
    n_low_cells: usize,
    n_unknowns: usize,
    relative_residual: f64,
}

/// Flow through a heterogeneous permeability field: VTK fields per method
/// plus a summary manifest with region statistics.
pub fn run_permeability(config: &RunConfig) -> Result<Vec<PathBuf>, AppError> {
    let hash = config.hash();
    let mesh = SimplicialMesh::structured(config.dim, config.n)?;
    let field = config.permeability.build()?;
    let case = PermeabilityCase::new(&mesh, config.mu, &field)?;
    let eg = EgSpace::new(&mesh);
    let pspace = PressureSpace::new(&mesh);
    let hdiv = HdivMomentSpace::new(&mesh);
    let rec = Reconstruction::build(&eg, &hdiv);

    let mut written = Vec::new();
    let mut summaries = Vec::new();
    let mut failures: Vec<RowFailure> = Vec::new();
    for &method in config.method.methods() {
        let solved = match solve_case(
            &eg,
            &pspace,
            &hdiv,
            &rec,
            config,
            method,
            config.mu,
            &case.sigma,
            &|_| case.forcing,
            &|_| case.boundary,
        ) {
            Ok(s) => s,
            Err(e) => {
                failures.push(RowFailure {
                    n: config.n,
                    nu: config.mu,
                    method,
                    reason: e.to_string(),
                });
                continue;
            }
        };

        let velocity = velocity_at_barycenters(&eg, &solved.velocity);
        let speed: Vec<f64> = velocity.iter().map(|v| v.norm()).collect();
        let mut stats = [(0.0_f64, 0.0_f64, 0.0_f64); 2]; // (volume, integral, max) per region
        for c in 0..mesh.n_cells() {
            let region = usize::from(case.low_region[c]);
            let vol = mesh.cell_volumes[c];
            stats[region].0 += vol;
            stats[region].1 += vol * speed[c];
            stats[region].2 = stats[region].2.max(speed[c]);
        }
        let mean = |r: usize| if stats[r].0 > 0.0 { stats[r].1 / stats[r].0 } else { 0.0 };
        summaries.push(PermeabilitySummary {
            method,
            boundary_oscillation: boundary_oscillation(&eg, &solved.velocity, &|_| case.boundary),
            low_region_mean_speed: mean(1),
            high_region_mean_speed: mean(0),
            low_region_max_speed: stats[1].2,
            high_region_max_speed: stats[0].2,
            n_low_cells: case.low_region.iter().filter(|&&b| b).count(),
            n_unknowns: solved.n_unknowns,
            relative_residual: solved.relative_residual,
        });

        let vtk_path = config
            .out_dir
            .join(format!("permeability_{}d_{}.vtk", config.dim, method.tag()));
        write_vtk(
            &vtk_path,
            &mesh,
            &[("velocity", &velocity)],
            &[
                ("velocity_magnitude", &speed),
                ("pressure", &solved.pressure),
                ("permeability", &case.permeability),
                ("reaction", &case.sigma),
            ],
        )?;
        written.push(vtk_path);
    }

    #[derive(Serialize)]
    struct Results {
        mu: f64,
        methods: Vec<PermeabilitySummary>,
        failures: Vec<RowFailure>,
    }
    let manifest_path =
        config.out_dir.join(format!("permeability_{}d_manifest.json", config.dim));
    write_manifest(
        &manifest_path,
        config,
        &hash,
        &written,
        Results { mu: config.mu, methods: summaries, failures },
    )?;
    written.push(manifest_path);
    Ok(written)
}

/// Per-method result of a single manufactured solve.
#[derive(Serialize)]
struct SingleResult {
    method: Method,
    report: ErrorReport,
    n_unknowns: usize,
    relative_residual: f64,
}

/// One manufactured-case solve per selected method: VTK fields plus the
/// full error report in the manifest.
pub fn run_single(config: &RunConfig) -> Result<Vec<PathBuf>, AppError> {
    let hash = config.hash();
    let case = ManufacturedCase::new(config.dim, config.nu)?;
    let mesh = SimplicialMesh::structured(config.dim, config.n)?;
    let eg = EgSpace::new(&mesh);
    let pspace = PressureSpace::new(&mesh);
    let hdiv = HdivMomentSpace::new(&mesh);
    let rec = Reconstruction::build(&eg, &hdiv);
    let sigma = vec![1.0; mesh.n_cells()];

    let mut written = Vec::new();
    let mut results = Vec::new();
    let mut failures: Vec<RowFailure> = Vec::new();
    for &method in config.method.methods() {
        let solved = match solve_case(
            &eg,
            &pspace,
            &hdiv,
            &rec,
            config,
            method,
            config.nu,
            &sigma,
            &|x| case.forcing(x),
            &|x| case.boundary(x),
        ) {
            Ok(s) => s,
            Err(e) => {
                failures.push(RowFailure {
                    n: config.n,
                    nu: config.nu,
                    method,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let report = compute_errors(
            &eg,
            &solved.velocity,
            &solved.pressure,
            &|x| case.velocity(x),
            &|x| case.velocity_gradient(x),
            &|x| case.pressure(x),
            config.nu,
            config.h1_penalty,
            config.l2_penalty,
            Some((&hdiv, &rec)),
        )?;

        let velocity = velocity_at_barycenters(&eg, &solved.velocity);
        let speed: Vec<f64> = velocity.iter().map(|v| v.norm()).collect();
        let velocity_error: Vec<f64> = (0..mesh.n_cells())
            .map(|c| (velocity[c] - case.velocity(&mesh.cell_barycenters[c])).norm())
            .collect();
        let pressure_error: Vec<f64> = {
            let exact = crate::analysis::project_p0(&mesh, &|x| case.pressure(x));
            solved.pressure.iter().zip(&exact).map(|(p, e)| p - e).collect()
        };
        let vtk_path = config.out_dir.join(format!(
            "single_{}d_{}_n{}.vtk",
            config.dim,
            method.tag(),
            config.n
        ));
        write_vtk(
            &vtk_path,
            &mesh,
            &[("velocity", &velocity)],
            &[
                ("velocity_magnitude", &speed),
                ("pressure", &solved.pressure),
                ("velocity_error", &velocity_error),
                ("pressure_error", &pressure_error),
            ],
        )?;
        written.push(vtk_path);
        results.push(SingleResult {
            method,
            report,
            n_unknowns: solved.n_unknowns,
            relative_residual: solved.relative_residual,
        });
    }

    #[derive(Serialize)]
    struct Results {
        methods: Vec<SingleResult>,
        failures: Vec<RowFailure>,
    }
    let manifest_path = config
        .out_dir
        .join(format!("single_{}d_n{}_manifest.json", config.dim, config.n));
    write_manifest(&manifest_path, config, &hash, &written, Results { methods: results, failures })?;
    written.push(manifest_path);
    Ok(written)
}
