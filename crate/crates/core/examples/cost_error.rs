//! Two accuracy levels of the cost-error study: multi-index against single-level MCMC.

use mimcmc::experiments::{cmd_cost_error, ExperimentConfig};

fn main() -> mimcmc::Result<()> {
    let mut config = ExperimentConfig::default();
    config.cost_error.levels = vec![1, 2];
    config.cost_error.replicates = 3;
    let out = std::env::temp_dir().join("mimcmc-cost-error");
    let s = cmd_cost_error(&config, &out)?.summary;
    for (name, fit) in [("mimcmc", &s.mimcmc), ("mcmc", &s.mcmc)] {
        for l in &fit.levels {
            println!("{name:6} level {} rmse {:.3} cost {:.3e}", l.level, l.rmse, l.mean_cost);
        }
    }
    println!("reference mean {:.4}, outputs in {}", s.reference_mean, out.display());
    Ok(())
}
