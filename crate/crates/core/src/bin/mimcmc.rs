use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mimcmc::experiments::{cmd_cost_error, cmd_generate_data, cmd_rates, cmd_validate, ExperimentConfig};

#[derive(Parser)]
#[command(version, about = "Multi-index MCMC experiments for a stochastic heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON config; missing keys take their defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Experiment seed, overriding the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Run the cost-error study up to (14, 7) with 30 replicates
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Overwrite an existing fixture
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Multi-increment variances over an index grid and fitted rates
    Rates,
    /// Cost against RMSE for the multi-index and single-level estimators
    CostError,
    /// Invariant and oracle checks; exits nonzero on failure
    Validate,
    /// Draw a truth and noisy observations into fixture.json
    GenerateData,
}

fn run(cli: Cli) -> mimcmc::Result<bool> {
    let c = &cli.common;
    let mut config = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        config.seed = s;
    }
    if c.workers.is_some() {
        config.workers = c.workers;
    }
    if c.paper_scale {
        config = config.with_paper_scale();
    }
    match cli.command {
        Command::Rates => {
            let r = cmd_rates(&config, &c.out)?;
            let b = &r.summary.prior.beta;
            println!("coupled prior: beta_x = {:.3}, beta_t = {:.3}", b[0], b[1]);
            if let Some(ch) = &r.summary.chain {
                println!("chain:         beta_x = {:.3}, beta_t = {:.3}", ch.beta[0], ch.beta[1]);
            }
        }
        Command::CostError => {
            let s = cmd_cost_error(&config, &c.out)?.summary;
            println!("mimcmc slope {:.3} (se {:.3})", s.mimcmc.slope, s.mimcmc.slope_se);
            println!("mcmc   slope {:.3} (se {:.3})", s.mcmc.slope, s.mcmc.slope_se);
            println!(
                "at RMSE {:.3e}: mimcmc {:.3e}, mcmc {:.3e}",
                s.tightest_common_rmse, s.mimcmc_cost_at_common, s.mcmc_cost_at_common
            );
        }
        Command::Validate => {
            let report = cmd_validate(&config, &c.out)?;
            print!("{report}");
            return Ok(report.passed());
        }
        Command::GenerateData => {
            let path = cmd_generate_data(&config, &c.out, c.force)?;
            println!("{}", path.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
