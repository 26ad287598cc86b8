//! `sep-lab`: batch driver for the seplab experiments.
//!
//! Every subcommand writes one or more CSV files plus a JSON manifest into
//! `--out`. Set `SEPLAB_WORKERS` to bound the worker pool.

mod commands;
mod config;
mod output;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{Config, ConfigError};
use crate::output::{Manifest, Run};

#[derive(Parser, Debug)]
#[command(name = "sep-lab", version, about = "Decohered stabilizer states, Nishimori-line Monte Carlo and fermionic Gaussian states")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Master seed; per-task streams are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Treat flagged estimates and missing crossings as errors.
    #[arg(long, global = true)]
    strict: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = "sep-lab-out")]
    out: PathBuf,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Channel-to-Gibbs checks for commuting-projector models.
    #[command(subcommand)]
    Gibbs(GibbsCmd),
    /// Sector probabilities and observables of a decohered cluster state.
    Cluster(ClusterArgs),
    /// Random-bond Ising model on the Nishimori line.
    #[command(subcommand)]
    Rbim(RbimCmd),
    /// Random-plaquette gauge model on the Nishimori line.
    #[command(subcommand)]
    Rpgm(RpgmCmd),
    /// p+ip superconductor and its decohered CDA states.
    #[command(subcommand)]
    Pwave(PwaveCmd),
    /// Choi–Jamiołkowski double state.
    #[command(subcommand)]
    Double(DoubleCmd),
    /// Dense-oracle agreement checks at minimal sizes.
    Selftest(SelftestArgs),
}

#[derive(Subcommand, Debug)]
pub enum GibbsCmd {
    /// Compare the dense channel output with the predicted Gibbs state.
    Verify {
        /// Model file, or a built-in name such as `cluster1d_4` or `levingu_3`.
        #[arg(long)]
        model: String,
        /// Rate on every term (on sublattice 0 when `--pb` is given).
        #[arg(long)]
        p: f64,
        /// Rate on sublattice 1 of a built-in model.
        #[arg(long)]
        pb: Option<f64>,
    },
    /// Write a built-in model in the model-file format.
    Export {
        #[arg(long)]
        model: String,
    },
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub dim: u8,
    /// Linear size (cells for the chain).
    #[arg(long)]
    pub sizes: usize,
    /// Rate on sublattice 0 (a sites, vertices, edges in 3d).
    #[arg(long)]
    pub pa: f64,
    /// Rate on sublattice 1 (b sites, edges, faces in 3d).
    #[arg(long)]
    pub pb: f64,
    /// Also write the model file.
    #[arg(long)]
    pub export: bool,
}

#[derive(Subcommand, Debug)]
pub enum RbimCmd {
    /// Disorder-averaged `[⟨z_0 z_r⟩²]` at one point.
    Corr {
        #[arg(long)]
        p: f64,
        #[arg(long = "L")]
        l: usize,
        /// Distances, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        r: Vec<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        sweeps: Option<usize>,
    },
    /// Correlation-ratio crossing scan.
    Scan {
        /// `start:stop:count` or a comma-separated list; `β` values with `--clean`.
        #[arg(long)]
        grid: String,
        #[arg(long = "L", value_delimiter = ',', required = true)]
        l: Vec<usize>,
        /// Scan the clean Ising model in `β` instead of the Nishimori line.
        #[arg(long)]
        clean: bool,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        sweeps: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
pub enum RpgmCmd {
    /// Wilson loops up to `rmax` at one rate.
    Wilson {
        #[arg(long)]
        p: f64,
        #[arg(long = "L")]
        l: usize,
        #[arg(long, default_value_t = 3)]
        rmax: usize,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        sweeps: Option<usize>,
    },
    /// Perimeter/area classification over a grid of rates.
    Scan {
        #[arg(long)]
        grid: String,
        #[arg(long = "L")]
        l: usize,
        #[arg(long, default_value_t = 3)]
        rmax: usize,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        sweeps: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Occupation {
    Uniform,
    Staggered,
    Random,
}

impl Occupation {
    pub fn name(self) -> &'static str {
        match self {
            Occupation::Uniform => "uniform",
            Occupation::Staggered => "staggered",
            Occupation::Random => "random",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundaryArg {
    Periodic,
    Antiperiodic,
}

#[derive(Subcommand, Debug)]
pub enum PwaveCmd {
    /// Modular commutator of the L×L torus tripartition.
    Modcomm {
        #[arg(long = "L", value_delimiter = ',', required = true)]
        l: Vec<usize>,
        #[arg(long)]
        p: f64,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "uniform")]
        m: Vec<Occupation>,
    },
    /// Entanglement spectrum of a block of rows, resolved in `k_x`.
    Espec {
        #[arg(long = "Lx")]
        lx: usize,
        #[arg(long = "Ly")]
        ly: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        /// `strip:<first>-<last>` (inclusive); defaults to the lower half.
        #[arg(long)]
        region: Option<String>,
        #[arg(long = "bc-x", value_enum, default_value = "periodic")]
        bc_x: BoundaryArg,
    },
    /// Real-space pair amplitude of the vacuum CDA state and its decay fit.
    Pairing {
        #[arg(long = "L")]
        l: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
    },
    /// Möbius-evolved CDA state summary.
    Cda {
        #[arg(long = "L")]
        l: usize,
        #[arg(long)]
        p: f64,
        #[arg(long, value_enum, default_value = "uniform")]
        m: Occupation,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Linear,
    Sqrt,
}

#[derive(Subcommand, Debug)]
pub enum DoubleCmd {
    /// Entanglement spectrum of the doubled state on a cylinder.
    Espec {
        #[arg(long = "Lx")]
        lx: usize,
        #[arg(long = "Ly")]
        ly: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, value_enum, default_value = "linear")]
        weighting: WeightingArg,
    },
    /// Transport identities and the naive-map counterexample.
    CjCheck,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    /// Scale the modular-commutator prefactor (mutation fixture).
    #[arg(long, hide = true)]
    pub mutate_modcomm: Option<f64>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gibbs(GibbsCmd::Verify { .. }) => "gibbs verify",
            Command::Gibbs(GibbsCmd::Export { .. }) => "gibbs export",
            Command::Cluster(_) => "cluster",
            Command::Rbim(RbimCmd::Corr { .. }) => "rbim corr",
            Command::Rbim(RbimCmd::Scan { .. }) => "rbim scan",
            Command::Rpgm(RpgmCmd::Wilson { .. }) => "rpgm wilson",
            Command::Rpgm(RpgmCmd::Scan { .. }) => "rpgm scan",
            Command::Pwave(PwaveCmd::Modcomm { .. }) => "pwave modcomm",
            Command::Pwave(PwaveCmd::Espec { .. }) => "pwave espec",
            Command::Pwave(PwaveCmd::Pairing { .. }) => "pwave pairing",
            Command::Pwave(PwaveCmd::Cda { .. }) => "pwave cda",
            Command::Double(DoubleCmd::Espec { .. }) => "double espec",
            Command::Double(DoubleCmd::CjCheck) => "double cj-check",
            Command::Selftest(_) => "selftest",
        }
    }
}

/// Everything a command needs besides its own arguments.
pub struct Ctx {
    pub seed: u64,
    pub strict: bool,
    pub config: Config,
    pub run: Run,
}

/// A check that ran to completion but did not pass.
#[derive(Debug)]
pub struct Failed(pub String);

impl std::fmt::Display for Failed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Failed {}

fn workers() -> Result<usize> {
    match std::env::var("SEPLAB_WORKERS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .map_err(|_| ConfigError(format!("SEPLAB_WORKERS must be a positive integer, got '{v}'")))?;
            if n == 0 {
                bail!(ConfigError("SEPLAB_WORKERS must be positive".into()));
            }
            rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
            Ok(n)
        }
        Err(_) => Ok(rayon::current_num_threads()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let start = Instant::now();
    let config = match &cli.common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let seed = cli.common.seed.or(config.seed).unwrap_or(1);
    let manifest = Manifest {
        command_line: std::env::args().collect(),
        subcommand: cli.command.name().into(),
        config: config.to_toml(),
        master_seed: seed,
        derived_seeds: Vec::new(),
        version: env!("CARGO_PKG_VERSION").into(),
        workers: workers()?,
        wall_clock_seconds: 0.0,
        strict: cli.common.strict,
        outputs: Vec::new(),
    };
    let mut ctx = Ctx {
        seed,
        strict: cli.common.strict,
        config,
        run: Run::new(&cli.common.out, manifest)?,
    };
    let outcome = match cli.command {
        Command::Gibbs(c) => commands::gibbs(&mut ctx, c),
        Command::Cluster(a) => commands::cluster(&mut ctx, a),
        Command::Rbim(c) => commands::rbim(&mut ctx, c),
        Command::Rpgm(c) => commands::rpgm(&mut ctx, c),
        Command::Pwave(c) => commands::pwave(&mut ctx, c),
        Command::Double(c) => commands::double(&mut ctx, c),
        Command::Selftest(a) => selftest::run(&mut ctx, a),
    };
    // the manifest is written even when a check fails
    let path = ctx.run.finish(start.elapsed().as_secs_f64())?;
    eprintln!("manifest: {}", path.display());
    outcome
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<ConfigError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
