//! Command line entry point: dataset generation, training, evaluation,
//! reasoning, visualization, and gradient verification.

mod cmd;
mod config;
mod dataset;
mod formats;
mod modelio;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

/// Environment variable selecting the worker-pool size.
pub const WORKERS_ENV: &str = "RACKLAY_WORKERS";

/// Flushes subnormal floats to zero on the calling thread. Saturated
/// softmax probabilities otherwise fill training tensors with subnormals,
/// whose microcoded arithmetic slows the conv kernels several-fold.
fn flush_subnormals() {
    #[cfg(target_arch = "x86_64")]
    // SAFETY: FTZ/DAZ only change how this thread rounds subnormal values.
    unsafe {
        const FTZ_AND_DAZ: u32 = 0x8040;
        let mut csr: u32 = 0;
        std::arch::asm!(
            "stmxcsr [{ptr}]",
            ptr = in(reg) std::ptr::addr_of_mut!(csr),
            options(nostack, preserves_flags)
        );
        csr |= FTZ_AND_DAZ;
        std::arch::asm!(
            "ldmxcsr [{ptr}]",
            ptr = in(reg) std::ptr::addr_of!(csr),
            options(nostack, preserves_flags)
        );
    }
}

#[derive(Parser)]
#[command(
    name = "racklay",
    version,
    about = "Monocular multi-layer shelf layout estimation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (images, layout GT, manifest).
    Gen(cmd::gen::GenArgs),
    /// Train a layout network variant on a generated dataset.
    Train(cmd::train::TrainArgs),
    /// Evaluate a checkpoint (or the GT oracle) as a mIoU/mAP table.
    Eval(cmd::eval::EvalArgs),
    /// Reconstruct cuboids and report stack counts and free volume.
    Reason(cmd::reason::ReasonArgs),
    /// Render layouts as color-coded images.
    Viz(cmd::viz::VizArgs),
    /// Verify every differentiable operation against finite differences.
    Gradcheck(cmd::gradcheck::GradcheckArgs),
    /// Train all four variants on one dataset and tabulate the comparison.
    Ablate(cmd::ablate::AblateArgs),
}

fn init_workers() -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new().start_handler(|_| flush_subnormals());
    if let Ok(value) = std::env::var(WORKERS_ENV) {
        let n: usize = value
            .parse()
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got {value:?}"))?;
        if n == 0 {
            anyhow::bail!("{WORKERS_ENV} must be positive");
        }
        builder = builder.num_threads(n);
    }
    builder.build_global().context("initializing worker pool")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_workers()?;
    match cli.command {
        Command::Gen(args) => cmd::gen::run(args),
        Command::Train(args) => cmd::train::run(args),
        Command::Eval(args) => cmd::eval::run(args),
        Command::Reason(args) => cmd::reason::run(args),
        Command::Viz(args) => cmd::viz::run(args),
        Command::Gradcheck(args) => cmd::gradcheck::run(args),
        Command::Ablate(args) => cmd::ablate::run(args),
    }
}

fn main() {
    flush_subnormals();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
