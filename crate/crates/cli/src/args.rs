use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(
    name = "plap",
    version,
    about = "Radial solutions of -Δ_p u = u^q on model manifolds"
)]
pub struct Cli {
    /// Output root. Defaults to $PLAP_OUT, then ./plap-runs.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Integrate one radial solution and write r, u, du, w.
    Solve(SolveArgs),
    /// Completeness verdict and growth regime of a model.
    Classify(ClassifyArgs),
    /// Functional traces and selected checks for one solution.
    Diagnose(DiagnoseArgs),
    /// Sobolev quotients of the Aubin-Talenti family.
    Quotient(QuotientArgs),
    /// Build an oscillating glued model and its certificate.
    Oscillate(OscillateArgs),
    /// Solve over the cartesian product of p, q and alpha lists.
    Sweep(SweepArgs),
    /// Re-run a manifest and compare output hashes.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemArgs {
    /// Model descriptor, e.g. hyperbolic or exppower:c=1,m=3, or JSON.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub q: f64,
    /// u(0)
    #[arg(long)]
    pub alpha: f64,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TolArgs {
    /// Relative tolerance of the radial solver.
    #[arg(long = "tol", default_value_t = 1e-10)]
    pub solver_tol: f64,
    /// Quadrature tolerance for Θ, J and tails.
    #[arg(long, default_value_t = 1e-10)]
    pub geometry_tol: f64,
    #[arg(long)]
    pub startup_radius: Option<f64>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 60.0)]
    pub rmax: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub tol: TolArgs,
    /// Radii at which (u, du, w) are reported in the manifest summary.
    #[arg(long, value_delimiter = ',')]
    pub at: Vec<f64>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 20.0)]
    pub rmax: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub geometry_tol: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckName {
    Energy,
    Pohozaev,
    Envelope,
    RatioSc,
    RatioSi,
    EnergyDivergence,
    LemmaLimits,
}

impl CheckName {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckName::Energy => "energy",
            CheckName::Pohozaev => "pohozaev",
            CheckName::Envelope => "envelope",
            CheckName::RatioSc => "ratio-sc",
            CheckName::RatioSi => "ratio-si",
            CheckName::EnergyDivergence => "energy-divergence",
            CheckName::LemmaLimits => "lemma-limits",
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 60.0)]
    pub rmax: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub tol: TolArgs,
    /// Subset of checks; those applicable to the run when omitted.
    #[arg(long, value_delimiter = ',')]
    pub checks: Vec<CheckName>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: f64,
    /// Concentration parameters; sorted into decreasing order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub b: Vec<f64>,
    /// `auto` or a cutoff radius. Defaults to auto on Euclidean space and
    /// a fixed radius elsewhere.
    #[arg(long)]
    pub truncation: Option<String>,
    #[arg(long, default_value_t = 1e-8)]
    pub tail_tol: f64,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: f64,
    #[arg(long)]
    pub q: f64,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value_t = 4)]
    pub stages: usize,
    #[arg(long, default_value_t = 50.0)]
    pub cap_factor: f64,
    #[arg(long, default_value_t = 5)]
    pub max_doublings: u32,
    #[arg(long = "tol", default_value_t = 1e-10)]
    pub solver_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub geometry_tol: f64,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub p: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub q: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub alpha: Vec<f64>,
    #[arg(long, default_value_t = 60.0)]
    pub rmax: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub tol: TolArgs,
    /// Worker threads; output order does not depend on it.
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    pub workers: usize,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Path to a manifest.json
    pub manifest: PathBuf,
}
