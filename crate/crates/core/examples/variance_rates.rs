//! Coupled-prior increment variances on a small grid and the fitted decay rates.

use mimcmc::experiments::{cmd_rates, ExperimentConfig};

fn main() -> mimcmc::Result<()> {
    let mut config = ExperimentConfig::default();
    config.rates.max_levels = [3, 3];
    config.rates.n_samples = 2000;
    config.rates.chain = false;
    let out = std::env::temp_dir().join("mimcmc-variance-rates");
    let r = cmd_rates(&config, &out)?;
    for row in &r.rows {
        println!("({}, {})  var {:.3e}", row.alpha_x, row.alpha_t, row.var_prior);
    }
    println!("beta = {:?}, files in {}", r.summary.prior.beta, out.display());
    Ok(())
}
