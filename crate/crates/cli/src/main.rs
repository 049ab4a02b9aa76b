use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use deqcert::commands::{cmd_bound, cmd_estimate, cmd_sweep, cmd_verify};
use deqcert::config::{Overrides, RunConfig};
use deqcert::CliError;
use deqcert_core::losses::LossKind;
use deqcert_core::operators::FamilyKind;

/// Certified generalization bounds for contractive implicit networks:
/// constant estimation, bound evaluation, grid sweeps, and Monte-Carlo
/// verification of the underlying inequalities.
#[derive(Debug, Parser)]
#[command(name = "deqcert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Operator family; selects the default bundle when no config is given.
    #[arg(long, global = true, value_enum)]
    family: Option<FamilyArg>,

    /// Master seed; every random stream derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for generated artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Comma-separated training-set sizes.
    #[arg(long, global = true, value_delimiter = ',')]
    n_grid: Option<Vec<u64>>,

    /// Comma-separated parameter counts to price the bound at.
    #[arg(long, global = true, value_delimiter = ',')]
    p_grid: Option<Vec<u64>>,

    /// Confidence parameter in (0, 1).
    #[arg(long, global = true)]
    delta: Option<f64>,

    /// Loss function.
    #[arg(long, global = true, value_enum)]
    loss: Option<LossArg>,

    /// Worker threads; 0 keeps the library default.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Measure per-theta generalization gaps during sweeps.
    #[arg(long, global = true)]
    with_gaps: bool,

    /// Also measure the gap of a final-layer-trained operator.
    #[arg(long, global = true)]
    train_final_layer: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the data- and architecture-dependent constants.
    Estimate,
    /// Evaluate the bound over the (N, p) grid from saved constants.
    Bound {
        /// Constants report produced by the estimate command.
        #[arg(long)]
        constants: PathBuf,
    },
    /// Sweep the (N, p) grid: constants, bound, optional gaps, CSV and SVG.
    Sweep,
    /// Verify the analytic inequalities by Monte-Carlo sampling.
    Verify,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Contractive,
    Mon,
    Lgd,
}

impl From<FamilyArg> for FamilyKind {
    fn from(arg: FamilyArg) -> Self {
        match arg {
            FamilyArg::Contractive => FamilyKind::Contractive,
            FamilyArg::Mon => FamilyKind::Mon,
            FamilyArg::Lgd => FamilyKind::Lgd,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossArg {
    L1,
    Ce,
}

impl From<LossArg> for LossKind {
    fn from(arg: LossArg) -> Self {
        match arg {
            LossArg::L1 => LossKind::L1,
            LossArg::Ce => LossKind::CrossEntropySoftmax,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        family: cli.family.map(FamilyKind::from),
        seed: cli.seed,
        out: cli.out,
        n_grid: cli.n_grid,
        p_grid: cli.p_grid,
        delta: cli.delta,
        loss: cli.loss.map(LossKind::from),
        threads: cli.threads,
        with_gaps: cli.with_gaps,
        train_final_layer: cli.train_final_layer,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;

    if cfg.threads > 0 {
        // A second invocation in the same process would fail; the global
        // pool can only be sized once, so that is not an error here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }

    match cli.command {
        Command::Estimate => cmd_estimate(&cfg).map(drop),
        Command::Bound { constants } => cmd_bound(&cfg, &constants).map(drop),
        Command::Sweep => cmd_sweep(&cfg).map(drop),
        Command::Verify => cmd_verify(cfg.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
