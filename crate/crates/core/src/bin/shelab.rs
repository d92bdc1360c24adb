use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shelab::harness::{run_campaign, summary_table, CampaignKind, ExperimentConfig, Overrides, RunOptions};

#[derive(Parser)]
#[command(name = "shelab", version, about = "Monte Carlo campaigns for the stochastic heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solver checks against Gaussian and PAM moment oracles
    Validate(Common),
    /// Normality of spatial averages and the limiting variance
    Clt(Common),
    /// Same as clt with g = log
    Kpz(Common),
    /// Hölder-moment and finite-dimensional checks of the averaged process
    Fclt(Common),
    /// Decay rate of the distance to normality in N
    Rate(Common),
    /// Explicit variance lower bounds against simulated variances
    LowerBound(Common),
    /// Malliavin derivative positivity, envelope and Clark-Ocone checks
    Malliavin(Common),
    /// Covariances of monotone functionals
    Associate(Common),
    /// Normality along a growing-time schedule t_N
    TnClt(Common),
    /// Dalang integrals and the Upsilon/Lambda pair
    Dalang(Common),
    /// Moment constants and the rate-bound evaluator
    Constants(Common),
}

#[derive(Args)]
struct Common {
    /// TOML file merged over the campaign preset
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Output directory [default: runs/<campaign>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads [default: all cores]
    #[arg(long)]
    workers: Option<usize>,
    /// Overwrite an output directory that already holds results
    #[arg(long)]
    force: bool,
}

impl Command {
    fn split(self) -> (CampaignKind, Common) {
        use CampaignKind as K;
        match self {
            Command::Validate(c) => (K::Validate, c),
            Command::Clt(c) => (K::Clt, c),
            Command::Kpz(c) => (K::Kpz, c),
            Command::Fclt(c) => (K::Fclt, c),
            Command::Rate(c) => (K::Rate, c),
            Command::LowerBound(c) => (K::LowerBound, c),
            Command::Malliavin(c) => (K::Malliavin, c),
            Command::Associate(c) => (K::Associate, c),
            Command::TnClt(c) => (K::TnClt, c),
            Command::Dalang(c) => (K::Dalang, c),
            Command::Constants(c) => (K::Constants, c),
        }
    }
}

fn main() -> ExitCode {
    let (kind, common) = Cli::parse().command.split();
    let overrides = Overrides { seed: common.seed, replicas: common.replicas };
    let config = match ExperimentConfig::load(kind, common.config.as_deref(), overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("shelab: {e}");
            return ExitCode::from(2);
        }
    };
    let out = common.out.unwrap_or_else(|| PathBuf::from("runs").join(kind.as_str()));
    let options = RunOptions { workers: common.workers, out: Some(out.clone()), force: common.force };
    match run_campaign(&config, &options) {
        Ok(result) => {
            print!("{}", summary_table(&config, &result));
            println!("outputs in {}", out.display());
            if result.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("shelab: {e}");
            ExitCode::from(2)
        }
    }
}
