//! `h1` — command-line front end for the h1geo toolkit.
//!
//! Subcommands cover curve invariants and reconstruction, congruence
//! detection, geodesics, and the surface pipeline (coefficients, checks,
//! invariants, reconstruction). Inputs and outputs are JSON for structured
//! geometry and CSV for plottable columns; identical inputs produce
//! byte-identical outputs.
//!
//! Exit codes: 0 ok, 2 bad input, 3 regularity/normality failure,
//! 4 not congruent, 5 integrability violation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(name = "h1", version, about = "Curves and surfaces in the 3D Heisenberg group")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DerivativeMode {
    Analytic,
    Fd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Orientation {
    #[value(name = "+")]
    Plus,
    #[value(name = "-")]
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Order {
    U,
    V,
}

#[derive(Args)]
pub struct CommonOpts {
    /// Tolerance for the subcommand's main check; defaults to 1e-6 with
    /// analytic derivatives and 1e-3 with finite differences.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Horizontal-regularity threshold override.
    #[arg(long)]
    pub eps_regular: Option<f64>,
    /// Singular-point detection threshold override.
    #[arg(long)]
    pub eps_singular: Option<f64>,
    /// Use supplied analytic derivatives or force finite differences.
    #[arg(long, value_enum, default_value = "analytic")]
    pub derivatives: DerivativeMode,
    /// Orientation of the characteristic foliation.
    #[arg(long, value_enum, default_value = "+")]
    pub orientation: Orientation,
}

impl CommonOpts {
    pub fn tol_or(&self, analytic_default: f64, fd_default: f64) -> f64 {
        self.tol.unwrap_or(match self.derivatives {
            DerivativeMode::Analytic => analytic_default,
            DerivativeMode::Fd => fd_default,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract the signature (s, k, tau) of a curve into CSV.
    CurveInvariants {
        /// Curve JSON file.
        #[arg(long = "in", required = true)]
        input: PathBuf,
        /// Output signature CSV.
        #[arg(long = "out", required = true)]
        output: PathBuf,
        /// Number of arclength samples (default: the input sample count).
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Reconstruct a curve from a signature CSV.
    CurveReconstruct {
        #[arg(long = "in", required = true)]
        input: PathBuf,
        #[arg(long = "out", required = true)]
        output: PathBuf,
        /// Initial frame JSON (default: standard frame at the origin).
        #[arg(long)]
        frame: Option<PathBuf>,
        /// Round-trip residual report sidecar.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Decide whether two curves differ by a rigid motion.
    Congruence {
        /// Two curve JSON files.
        #[arg(long = "in", required = true, num_args = 1)]
        inputs: Vec<PathBuf>,
        #[arg(long = "out", required = true)]
        output: PathBuf,
        /// Arclength samples used for the comparison.
        #[arg(long, default_value = "401")]
        samples: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Evaluate a geodesic from closed-form parameters or a Hamiltonian
    /// initial state.
    Geodesic {
        /// Geodesic job JSON.
        #[arg(long = "in", required = true)]
        input: PathBuf,
        #[arg(long = "out", required = true)]
        output: PathBuf,
        /// Optional xy-projection CSV (t, x, y, z) for plotting.
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Coefficient fields (a, b, c, l, m) of a normal patch.
    SurfaceCoefficients {
        /// Patch JSON file.
        #[arg(long = "in", required = true)]
        input: PathBuf,
        /// Output coefficients (.json or .csv).
        #[arg(long = "out", required = true)]
        output: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Integrability (and optionally p-minimality) residuals of coefficients.
    SurfaceCheck {
        #[arg(long = "in", required = true)]
        input: PathBuf,
        #[arg(long = "out", required = true)]
        output: PathBuf,
        /// Also run the p-minimal specialization check.
        #[arg(long)]
        pminimal: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Invariants of a patch or coefficient file: alpha, l, both Gaussian
    /// curvature routes, coframe, and the patch Euler-density total.
    SurfaceInvariants {
        /// Patch JSON or coefficients JSON/CSV.
        #[arg(long = "in", required = true)]
        input: PathBuf,
        #[arg(long = "out", required = true)]
        output: PathBuf,
        /// Closed-surface totals are refused; this flag documents the
        /// request and fails with an explanation.
        #[arg(long)]
        closed: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Reconstruct a patch from coefficient fields.
    SurfaceReconstruct {
        #[arg(long = "in", required = true)]
        input: PathBuf,
        #[arg(long = "out", required = true)]
        output: PathBuf,
        #[arg(long)]
        frame: Option<PathBuf>,
        /// Path order of the integration.
        #[arg(long, value_enum, default_value = "u")]
        order: Order,
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Flow a patch into normal coordinates along its characteristic field.
    SurfaceNormalize {
        #[arg(long = "in", required = true)]
        input: PathBuf,
        #[arg(long = "out", required = true)]
        output: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Reconstruct a patch from a complete invariant set (coframe, alpha, l).
    SurfaceFromInvariants {
        #[arg(long = "in", required = true)]
        input: PathBuf,
        #[arg(long = "out", required = true)]
        output: PathBuf,
        #[arg(long)]
        frame: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "u")]
        order: Order,
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("H1_NUM_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::CurveInvariants { input, output, samples, common } => {
            commands::curve_invariants(&input, &output, samples, &common)
        }
        Command::CurveReconstruct { input, output, frame, report, common } => {
            commands::curve_reconstruct(&input, &output, frame.as_deref(), report.as_deref(), &common)
        }
        Command::Congruence { inputs, output, samples, common } => {
            commands::congruence(&inputs, &output, samples, &common)
        }
        Command::Geodesic { input, output, plot, report, common } => {
            commands::geodesic(&input, &output, plot.as_deref(), report.as_deref(), &common)
        }
        Command::SurfaceCoefficients { input, output, common } => {
            commands::surface_coefficients(&input, &output, &common)
        }
        Command::SurfaceCheck { input, output, pminimal, common } => {
            commands::surface_check(&input, &output, pminimal, &common)
        }
        Command::SurfaceInvariants { input, output, closed, common } => {
            commands::surface_invariants(&input, &output, closed, &common)
        }
        Command::SurfaceReconstruct { input, output, frame, order, report, common } => {
            commands::surface_reconstruct(
                &input,
                &output,
                frame.as_deref(),
                order,
                report.as_deref(),
                &common,
            )
        }
        Command::SurfaceFromInvariants { input, output, frame, order, report, common } => {
            commands::surface_from_invariants(
                &input,
                &output,
                frame.as_deref(),
                order,
                report.as_deref(),
                &common,
            )
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("h1: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}
