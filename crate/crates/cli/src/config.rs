use std::path::{Path, PathBuf};

use ahlm_core::boundary::LcsConfig;
use ahlm_core::dataio::GenSpec;
use ahlm_core::dfc::DfcConfig;
use ahlm_core::efc::EfcConfig;
use ahlm_core::eval::DEFAULT_THRESHOLDS;
use ahlm_core::TrainConfig;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Seconds covered by one snippet: 16 frames at 25 fps.
pub const SNIPPET_SECONDS: f64 = 0.64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub checkpoints: PathBuf,
    pub results: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: "corpus".into(),
            checkpoints: "checkpoints".into(),
            results: "results".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub thresholds: Vec<f64>,
    /// Change-point matching tolerance in snippets.
    pub tolerance: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            tolerance: 2,
        }
    }
}

/// Everything a command needs. `seed` has no default.
///
/// The `seed` fields inside the training sections are replaced by the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub data: GenSpec,
    #[serde(default)]
    pub dfc: DfcConfig,
    #[serde(default)]
    pub efc: EfcConfig,
    #[serde(default)]
    pub lcs: LcsConfig,
    #[serde(default)]
    pub train_dfc: TrainConfig,
    #[serde(default)]
    pub train_efc: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Parses TOML text after applying `key.path=value` overrides.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().context("config is not valid TOML")?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = table.try_into().context("invalid config")?;
        cfg.train_dfc.seed = cfg.seed;
        cfg.train_efc.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.dfc.validate()?;
        self.efc.validate()?;
        self.lcs.validate()?;
        self.train_dfc.validate()?;
        self.train_efc.validate()?;
        if self.dfc.feature_dim != self.data.feature_dim || self.efc.feature_dim != self.data.feature_dim {
            bail!(
                "feature_dim differs: data {}, dfc {}, efc {}",
                self.data.feature_dim,
                self.dfc.feature_dim,
                self.efc.feature_dim
            );
        }
        if self.efc.num_classes != self.data.num_classes {
            bail!(
                "num_classes differs: data {}, efc {}",
                self.data.num_classes,
                self.efc.num_classes
            );
        }
        Ok(())
    }

    /// Canonical TOML of the effective config.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let Some((key, raw)) = item.split_once('=') else {
        bail!("override `{item}` is not KEY=VALUE");
    };
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key `{key}` is empty or has an empty part");
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override `{key}`: `{p}` is not a section"),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// A TOML literal when it parses as one, otherwise a plain string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_required() {
        assert!(RunConfig::from_toml("", &[]).is_err());
        let c = RunConfig::from_toml("seed = 3", &[]).unwrap();
        assert_eq!(c.train_dfc.seed, 3);
        assert_eq!(c.train_efc.seed, 3);
        assert_eq!(c.lcs, LcsConfig::default());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let sets = [
            "train_efc.lr=5e-3".to_string(),
            "data.num_train = 10".to_string(),
            "paths.results=out dir".to_string(),
            "eval.thresholds=[0.5]".to_string(),
        ];
        let c = RunConfig::from_toml("seed = 1\n[train_efc]\nepochs = 4\n", &sets).unwrap();
        assert_eq!(c.train_efc.lr, 5e-3);
        assert_eq!(c.train_efc.epochs, 4);
        assert_eq!(c.data.num_train, 10);
        assert_eq!(c.paths.results, PathBuf::from("out dir"));
        assert_eq!(c.eval.thresholds, vec![0.5]);
    }

    #[test]
    fn bad_input_is_rejected() {
        assert!(RunConfig::from_toml("seed = 1\nunknown = 2", &[]).is_err());
        assert!(RunConfig::from_toml("seed = 1", &["noequals".into()]).is_err());
        assert!(RunConfig::from_toml("seed = 1", &["seed.x=1".into()]).is_err());
        assert!(RunConfig::from_toml("seed = 1", &["efc.feature_dim=8".into()]).is_err());
        assert!(RunConfig::from_toml("seed = 1", &["lcs.fg_threshold=2".into()]).is_err());
    }

    #[test]
    fn hash_tracks_the_effective_config() {
        let a = RunConfig::from_toml("seed = 1", &[]).unwrap();
        let b = RunConfig::from_toml("seed = 1", &["train_dfc.epochs=30".into()]).unwrap();
        let c = RunConfig::from_toml("seed = 2", &[]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(RunConfig::from_toml(&a.canonical(), &[]).unwrap(), a);
    }
}
