mod output;
mod plot;
mod runs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "oobrad", version, about = "Out-of-band radiation of multi-antenna transmitters with nonlinear amplifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transmitted and received PSDs next to the worst case (Rayleigh).
    Fig1(Common),
    /// Adjacent-band and in-band radiation pattern (line of sight).
    Fig2(Common),
    /// Eigenvalue CCDFs of the spectral matrix for the scenario and for one user.
    Fig3(Common),
    /// Analytical-versus-simulation gates.
    Validate(Common),
    /// MIMO-ACLR against per-antenna and single-antenna ACLR.
    Aclr(Common),
    /// MIMO-ACLR across power allocations and pathlosses.
    SweepC1(Common),
}

#[derive(Args, Clone)]
pub struct Common {
    /// Scenario file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Symbols per Monte-Carlo run.
    #[arg(long)]
    pub mc_symbols: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

type Run = fn(&runs::Context) -> Result<(), runs::Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, Run) = match &cli.command {
        Command::Fig1(c) => (c, runs::fig1),
        Command::Fig2(c) => (c, runs::fig2),
        Command::Fig3(c) => (c, runs::fig3),
        Command::Validate(c) => (c, runs::validate),
        Command::Aclr(c) => (c, runs::aclr),
        Command::SweepC1(c) => (c, runs::sweep_c1),
    };
    let result = runs::Context::new(common).and_then(|ctx| run(&ctx));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("oobrad: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
