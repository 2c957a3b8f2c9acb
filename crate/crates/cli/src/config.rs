//! Run configuration files.
//!
//! A run config is one JSON object. `scenario` is either an inline scenario object or a path
//! (relative to the config file) to one.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tending_core::bridge::BridgeConfig;
use tending_core::marl::{NetConfig, PpoConfig, Variant};
use tending_core::{Scenario, ScenarioConfig};

use crate::CliError;

/// Overrides the configured output directory when set.
pub const OUTPUT_DIR_ENV: &str = "TENDING_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSource {
    File(PathBuf),
    Inline(ScenarioConfig),
}

impl Default for ScenarioSource {
    fn default() -> Self {
        ScenarioSource::Inline(ScenarioConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawRunConfig {
    pub scenario: ScenarioSource,
    pub ppo: PpoConfig,
    pub net: NetConfig,
    pub variant: Variant,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub bridge: BridgeConfig,
}

impl Default for RawRunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSource::default(),
            ppo: PpoConfig::default(),
            net: NetConfig::default(),
            variant: Variant::FlatMlp,
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            bridge: BridgeConfig::default(),
        }
    }
}

/// A loaded configuration with the scenario resolved and validated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub ppo: PpoConfig,
    pub net: NetConfig,
    pub variant: Variant,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub bridge: BridgeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let raw = RawRunConfig::default();
        Self {
            scenario: ScenarioConfig::default(),
            ppo: raw.ppo,
            net: raw.net,
            variant: raw.variant,
            seed: raw.seed,
            output_dir: raw.output_dir,
            bridge: raw.bridge,
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(flag: &'static str, path: &Path) -> Result<T, CliError> {
    if !path.is_file() {
        return Err(CliError::MissingFile {
            flag,
            path: path.to_path_buf(),
        });
    }
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::ConfigParse {
        path: path.to_path_buf(),
        source,
    })
}

impl RunConfig {
    /// Reads `path`, resolves a scenario file reference and applies [`OUTPUT_DIR_ENV`].
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw: RawRunConfig = read_json("--config", path)?;
        let scenario = match raw.scenario {
            ScenarioSource::Inline(s) => s,
            ScenarioSource::File(rel) => {
                let p = path.parent().unwrap_or(Path::new(".")).join(rel);
                read_json("scenario", &p)?
            }
        };
        let mut cfg = RunConfig {
            scenario,
            ppo: raw.ppo,
            net: raw.net,
            variant: raw.variant,
            seed: raw.seed,
            output_dir: raw.output_dir,
            bridge: raw.bridge,
        };
        cfg.apply_env();
        cfg.validate(path)?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
    }

    pub fn validate(&self, origin: &Path) -> Result<(), CliError> {
        self.scenario_checked(origin)?;
        self.ppo.validate()?;
        self.net.validate()?;
        self.bridge.validate()?;
        Ok(())
    }

    pub fn scenario_checked(&self, origin: &Path) -> Result<Scenario, CliError> {
        Scenario::new(self.scenario.clone()).map_err(|source| CliError::Scenario {
            path: origin.to_path_buf(),
            source,
        })
    }

    pub fn build_scenario(&self) -> Result<Scenario, CliError> {
        Ok(Scenario::new(self.scenario.clone()).map_err(tending_core::marl::TrainError::from)?)
    }

    /// The config as written next to run outputs.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Canonical JSON of a scenario, the input of the checkpoint fingerprint.
pub fn canonical_scenario_json(scenario: &ScenarioConfig) -> Vec<u8> {
    serde_json::to_vec(scenario).expect("scenario serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let raw: RawRunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(raw, RawRunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RawRunConfig>(r#"{"sed": 3}"#).is_err());
        assert!(serde_json::from_str::<RawRunConfig>(r#"{"scenario": {"n_agent": 3}}"#).is_err());
        assert!(serde_json::from_str::<RawRunConfig>(r#"{"ppo": {"gama": 0.9}}"#).is_err());
    }

    #[test]
    fn variant_names() {
        let raw: RawRunConfig = serde_json::from_str(r#"{"variant": "ab-mappo"}"#).unwrap();
        assert_eq!(raw.variant, Variant::Attention);
        assert!(serde_json::from_str::<RawRunConfig>(r#"{"variant": "ippo"}"#).is_err());
    }

    #[test]
    fn scenario_by_reference() {
        let dir = tempfile::tempdir().unwrap();
        let sc = serde_json::to_string(&ScenarioConfig::reduced()).unwrap();
        std::fs::write(dir.path().join("reduced.json"), sc).unwrap();
        let cfg = dir.path().join("run.json");
        std::fs::write(&cfg, r#"{"scenario": "reduced.json", "seed": 4}"#).unwrap();
        let loaded = RunConfig::load(&cfg).unwrap();
        assert_eq!(loaded.scenario, ScenarioConfig::reduced());
        assert_eq!(loaded.seed, 4);

        std::fs::write(&cfg, r#"{"scenario": "missing.json"}"#).unwrap();
        let err = RunConfig::load(&cfg).unwrap_err();
        assert!(matches!(err, CliError::MissingFile { flag: "scenario", .. }));
        assert_eq!(err.exit_code(), 1);
    }
}
