use std::fs;
use std::path::{Path, PathBuf};

use log::info;

use super::{sha256_hex, ExperimentConfig};
use crate::error::{Error, Result};
use crate::oracle::DataFixture;

pub const FIXTURE_FILE: &str = "fixture.json";

/// Draw a continuum truth and noisy data from the experiment seed and write
/// `fixture.json` under `out`. An existing fixture is kept unless `force`.
pub fn cmd_generate_data(config: &ExperimentConfig, out: &Path, force: bool) -> Result<PathBuf> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let path = out.join(FIXTURE_FILE);
    if path.exists() && !force {
        return Err(Error::FixtureExists(path.display().to_string()));
    }
    let fixture = DataFixture::generate(&config.params, config.k_max, &config.observations(), config.seed)?;
    super::write_json(&path, &fixture)?;
    info!("wrote {}", path.display());
    Ok(path)
}

pub fn load_fixture(path: &Path) -> Result<DataFixture> {
    if !path.exists() {
        return Err(Error::MissingFixture(path.display().to_string()));
    }
    let fixture: DataFixture = serde_json::from_slice(&fs::read(path)?)?;
    Ok(fixture)
}

/// The fixture named by the config, or the one in `out`, generating it there
/// on first use. Returns the fixture and the SHA-256 of its file.
pub fn resolve_fixture(config: &ExperimentConfig, out: &Path) -> Result<(DataFixture, String)> {
    let path = match &config.fixture {
        Some(p) => p.clone(),
        None => {
            let p = out.join(FIXTURE_FILE);
            if !p.exists() {
                cmd_generate_data(config, out, false)?;
            }
            p
        }
    };
    let fixture = load_fixture(&path)?;
    let observations = config.observations();
    if fixture.params != config.params || fixture.observations != observations {
        return Err(Error::Config(format!(
            "fixture {} was generated for a different model; regenerate it with --force",
            path.display()
        )));
    }
    let hash = sha256_hex(&fs::read(&path)?);
    Ok((fixture, hash))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig { m: 4, k_max: 64, ..ExperimentConfig::default() }
    }

    #[test]
    fn refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let path = cmd_generate_data(&small(), dir.path(), false).unwrap();
        assert!(matches!(cmd_generate_data(&small(), dir.path(), false), Err(Error::FixtureExists(_))));
        let first = fs::read(&path).unwrap();
        cmd_generate_data(&small(), dir.path(), true).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn round_trip_and_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let (f, hash) = resolve_fixture(&small(), dir.path()).unwrap();
        assert_eq!(load_fixture(&dir.path().join(FIXTURE_FILE)).unwrap(), f);
        assert_eq!(hash.len(), 64);
        let other = ExperimentConfig { m: 5, ..small() };
        assert!(resolve_fixture(&other, dir.path()).is_err());
        let missing = ExperimentConfig { fixture: Some(dir.path().join("nope.json")), ..small() };
        assert!(matches!(resolve_fixture(&missing, dir.path()), Err(Error::MissingFixture(_))));
    }
}
