//! Drivers for the variance-rate study, the cost-versus-error study, the
//! validation gate and synthetic data generation.
//!
//! Every driver takes an [`ExperimentConfig`], writes its outputs into one
//! directory and returns the same numbers in memory. Tasks draw from streams
//! keyed by seed, index and replicate, so outputs do not depend on the worker
//! count.

mod config;
mod cost_error;
mod data;
mod rates;
mod validate;

pub use config::{CostErrorSettings, ExperimentConfig, RatesSettings, ValidateSettings};
pub use cost_error::{cmd_cost_error, CostErrorOutput, CostErrorRow, CostErrorSummary, MethodFit};
pub use data::{cmd_generate_data, load_fixture, resolve_fixture, FIXTURE_FILE};
pub use rates::{cmd_rates, prior_increment_samples, RatesOutput, RatesRow, RatesSummary};
pub use validate::{cmd_validate, Check, ValidationReport};

use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Run `f` on a pool with `workers` threads, or on the global pool.
fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| crate::error::Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}
