//! Command-line entry point.  Each subcommand resolves its configuration in
//! precedence order (built-in defaults, then an optional `key=value` config
//! file, then flags), runs one experiment driver, and prints the files it
//! wrote.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use brinkman::app::{
    run_convergence, run_permeability, run_profile, run_single, AppError, ConfigOverrides,
    MethodChoice, RunConfig,
};
use brinkman::BoundaryCondition;

/// Enriched Galerkin solvers for the Brinkman equations on structured
/// simplicial meshes.
#[derive(Parser)]
#[command(name = "brinkman", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args)]
struct Common {
    /// Optional key=value config file; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Spatial dimension, 2 or 3.
    #[arg(long)]
    dim: Option<usize>,
    /// Boundary treatment: strong, or nitsche.
    #[arg(long)]
    bc: Option<BoundaryCondition>,
    /// Interior-penalty weight on the gradient jumps.
    #[arg(long)]
    h1_penalty: Option<f64>,
    /// Penalty weight on the zeroth-order jumps.
    #[arg(long)]
    l2_penalty: Option<f64>,
    /// Relative residual bound for accepting a solve.
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh-refinement study of the manufactured solution: error tables
    /// with observed orders, one CSV per method.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Viscous coefficient.
        #[arg(long)]
        nu: Option<f64>,
        /// Methods to run: st, pr, or both.
        #[arg(long)]
        method: Option<MethodChoice>,
        /// Mesh resolutions, comma separated, each double the previous.
        #[arg(long, value_delimiter = ',')]
        ns: Option<Vec<usize>>,
    },
    /// Error sweep over the viscous coefficient at fixed mesh size,
    /// comparing both methods against closed-form reference curves.
    Profile {
        #[command(flatten)]
        common: Common,
        /// Mesh resolution.
        #[arg(long)]
        n: Option<usize>,
        /// Viscous coefficients, comma separated.
        #[arg(long, value_delimiter = ',')]
        nus: Option<Vec<f64>>,
    },
    /// Flow through a heterogeneous permeability field: VTK velocity and
    /// pressure fields plus region statistics.
    Permeability {
        #[command(flatten)]
        common: Common,
        /// Mesh resolution.
        #[arg(long)]
        n: Option<usize>,
        /// Fluid viscosity.
        #[arg(long)]
        mu: Option<f64>,
        /// Methods to run: st, pr, or both.
        #[arg(long)]
        method: Option<MethodChoice>,
        /// Permeability raster file (2D): `nx ny` header, then row-major
        /// values, top row first.
        #[arg(long, conflicts_with_all = ["ball", "uniform_k"])]
        raster: Option<PathBuf>,
        /// Low-permeability ball (3D) as cx,cy,cz,radius.
        #[arg(long, value_delimiter = ',', conflicts_with = "uniform_k")]
        ball: Option<Vec<f64>>,
        /// Uniform permeability everywhere.
        #[arg(long)]
        uniform_k: Option<f64>,
    },
    /// One manufactured-case solve per method: VTK fields and the full
    /// error report.
    Single {
        #[command(flatten)]
        common: Common,
        /// Viscous coefficient.
        #[arg(long)]
        nu: Option<f64>,
        /// Methods to run: st, pr, or both.
        #[arg(long)]
        method: Option<MethodChoice>,
        /// Mesh resolution.
        #[arg(long)]
        n: Option<usize>,
    },
}

impl Common {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            dim: self.dim,
            bc: self.bc,
            h1_penalty: self.h1_penalty,
            l2_penalty: self.l2_penalty,
            tol: self.tol,
            out_dir: self.out.clone(),
            ..Default::default()
        }
    }
}

fn run() -> Result<Vec<PathBuf>, AppError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Convergence { common, nu, method, ns } => {
            let mut flags = common.overrides();
            flags.nu = nu;
            flags.method = method;
            flags.ns = ns;
            let config = RunConfig::resolve("convergence", common.config.as_deref(), flags)?;
            run_convergence(&config)
        }
        Command::Profile { common, n, nus } => {
            let mut flags = common.overrides();
            flags.n = n;
            flags.nus = nus;
            let config = RunConfig::resolve("profile", common.config.as_deref(), flags)?;
            run_profile(&config)
        }
        Command::Permeability { common, n, mu, method, raster, ball, uniform_k } => {
            let mut flags = common.overrides();
            flags.n = n;
            flags.mu = mu;
            flags.method = method;
            flags.raster = raster;
            flags.uniform_k = uniform_k;
            if let Some(b) = ball {
                let four: [f64; 4] = b.try_into().map_err(|v: Vec<f64>| {
                    AppError::Config(format!("ball takes cx,cy,cz,radius, got {} values", v.len()))
                })?;
                flags.ball = Some(four);
            }
            let config = RunConfig::resolve("permeability", common.config.as_deref(), flags)?;
            run_permeability(&config)
        }
        Command::Single { common, nu, method, n } => {
            let mut flags = common.overrides();
            flags.nu = nu;
            flags.method = method;
            flags.n = n;
            let config = RunConfig::resolve("single", common.config.as_deref(), flags)?;
            run_single(&config)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(paths) => {
            for path in paths {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
