//! Run configuration: a versioned TOML file whose fields individual CLI
//! flags can override.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use brido::loss::MarginScheme;
use brido::metrics::RougeVariant;
use brido::{BeamConfig, LossConfig, MarginSpec, ScoringConfig};

pub const CONFIG_VERSION: u32 = 1;

fn default_version() -> u32 {
    CONFIG_VERSION
}
fn default_variant() -> RougeVariant {
    RougeVariant::HarmonicR1R2
}
fn default_alpha() -> f64 {
    31.0
}
fn default_lambda() -> f64 {
    0.01
}
fn default_margin() -> MarginScheme {
    MarginScheme::Difference
}
fn default_gamma() -> f64 {
    50.0
}
fn default_beta() -> f64 {
    1.0
}
fn default_eta() -> f64 {
    0.3
}
fn default_num_candidates() -> usize {
    32
}
fn default_num_groups() -> usize {
    4
}
fn default_max_length() -> usize {
    16
}
fn default_seed() -> u64 {
    42
}

/// Optional dataset locations, so a run is reproducible from the config
/// alone.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub pools: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

/// Every tunable in one place. Defaults are the best-performing
/// highly-abstractive setup: N = 32 candidates in 4 groups, γ = 50,
/// λ = 0.01 with difference margins, η = 0.3, α = 31, harmonic R1/R2.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default = "default_variant")]
    pub variant: RougeVariant,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_margin")]
    pub margin: MarginScheme,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_num_candidates")]
    pub num_candidates: usize,
    #[serde(default = "default_num_groups")]
    pub num_groups: usize,
    #[serde(default = "default_max_length")]
    pub max_length: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: default_version(),
            variant: default_variant(),
            alpha: default_alpha(),
            lambda: default_lambda(),
            margin: default_margin(),
            gamma: default_gamma(),
            beta: default_beta(),
            eta: default_eta(),
            num_candidates: default_num_candidates(),
            num_groups: default_num_groups(),
            max_length: default_max_length(),
            seed: default_seed(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if cfg.version != CONFIG_VERSION {
            bail!(
                "config {} has version {}, this build understands {}",
                path.display(),
                cfg.version,
                CONFIG_VERSION
            );
        }
        Ok(cfg)
    }

    pub fn scoring(&self) -> brido::Result<ScoringConfig> {
        ScoringConfig::new(self.alpha, self.variant)
    }

    pub fn margin_spec(&self) -> brido::Result<MarginSpec> {
        MarginSpec::new(self.margin, self.lambda)
    }

    pub fn loss(&self) -> brido::Result<LossConfig> {
        LossConfig::new(self.gamma, self.beta)
    }

    pub fn beam(&self) -> brido::Result<BeamConfig> {
        BeamConfig::new(
            self.eta,
            self.num_groups,
            self.num_candidates,
            self.max_length,
            self.beta,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_documented_best_set() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.num_candidates, 32);
        assert_eq!(cfg.num_groups, 4);
        assert_eq!(cfg.gamma, 50.0);
        assert_eq!(cfg.lambda, 0.01);
        assert_eq!(cfg.margin, MarginScheme::Difference);
        assert_eq!(cfg.eta, 0.3);
        assert_eq!(cfg.alpha, 31.0);
        assert_eq!(cfg.variant, RougeVariant::HarmonicR1R2);
    }

    #[test]
    fn toml_round_trip_preserves_everything() {
        let cfg = RunConfig {
            alpha: f64::INFINITY,
            paths: Paths {
                pools: Some("pools.jsonl".into()),
                ..Paths::default()
            },
            ..RunConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert!(back.alpha.is_infinite());
    }

    #[test]
    fn sparse_file_fills_in_defaults() {
        let cfg: RunConfig = toml::from_str("version = 1\nalpha = 0.0\n").unwrap();
        assert_eq!(cfg.alpha, 0.0);
        assert_eq!(cfg.gamma, 50.0);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(toml::from_str::<RunConfig>("version = 1\nalpa = 1.0\n").is_err());
    }
}
