//! JSON run configuration.
//!
//! Relative paths are resolved against the directory holding the config
//! file and checked when a command reads them. Fields a subcommand does
//! not use are ignored by it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::study::StudyConfig;
use crate::data::{SeasonWindow, DEFAULT_COMPLETENESS};
use crate::error::{Error, Result};
use crate::pricing::{PayoffSpec, RiskLoadMethod};
use crate::spatial::{CorrelationFamily, CorrelationModel};

/// A contract written on one named site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractConfig {
    pub site: String,
    #[serde(flatten)]
    pub payoff: PayoffSpec<f64>,
}

/// Dependence model, given inline or as a path to a `fit-spatial` result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DependenceConfig {
    Inline(CorrelationModel<f64>),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; 0 when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Daily records, `station,date,value`.
    #[serde(default)]
    pub daily: Option<PathBuf>,
    /// Seasonal maxima, `station,year,maximum`; used when `daily` is absent.
    #[serde(default)]
    pub maxima: Option<PathBuf>,
    /// Site coordinates, `site,x,y`.
    #[serde(default)]
    pub sites: Option<PathBuf>,
    /// GEV fits written by `fit-gev` (`margins.json`).
    #[serde(default)]
    pub margins: Option<PathBuf>,
    #[serde(default)]
    pub dependence: Option<DependenceConfig>,
    #[serde(default)]
    pub window: SeasonWindow,
    #[serde(default = "default_completeness")]
    pub completeness: f64,
    /// Linear year trend in each GEV location.
    #[serde(default)]
    pub trend: bool,
    #[serde(default = "default_families")]
    pub families: Vec<CorrelationFamily>,
    #[serde(default)]
    pub contracts: Vec<ContractConfig>,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub method: RiskLoadMethod,
    /// Number of simulated events `I`.
    #[serde(default = "default_events")]
    pub events: usize,
    /// Sites to simulate; all sites when empty.
    #[serde(default)]
    pub simulate_sites: Vec<String>,
    /// Year at which trended margins are evaluated.
    #[serde(default)]
    pub prediction_year: Option<f64>,
    /// Lags reported in the autocorrelation diagnostics.
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    #[serde(default)]
    pub study: Option<StudyConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_completeness() -> f64 {
    DEFAULT_COMPLETENESS
}

fn default_families() -> Vec<CorrelationFamily> {
    CorrelationFamily::ALL.to_vec()
}

fn default_events() -> usize {
    100_000
}

fn default_max_lag() -> usize {
    20
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.events < 1 {
            return Err(Error::Config("events must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.completeness) {
            return Err(Error::Config(format!("completeness must lie in [0, 1], got {}", self.completeness)));
        }
        self.window.validate().map_err(|e| Error::Config(e.to_string()))?;
        for c in &self.contracts {
            c.payoff
                .validate()
                .map_err(|e| Error::Config(format!("contract on {}: {e}", c.site)))?;
        }
        if let Some(DependenceConfig::Inline(m)) = &self.dependence {
            m.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if let Some(s) = &self.study {
            s.validate()?;
        }
        Ok(())
    }

    pub fn master_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Resolves an input path and checks that it exists.
    pub fn input(&self, p: &Path) -> Result<PathBuf> {
        let full = self.resolve(p);
        if !full.exists() {
            return Err(Error::Config(format!("referenced file {} does not exist", full.display())));
        }
        Ok(full)
    }

    pub fn require(&self, field: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        let p = field
            .as_ref()
            .ok_or_else(|| Error::Config(format!("config field `{name}` is required for this command")))?;
        self.input(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_contracts_and_inline_dependence() {
        let text = r#"{
            "seed": 7,
            "contracts": [
                {"site": "S1", "type": "flat", "alpha": 1000, "strike": 107},
                {"site": "S2", "type": "capped", "beta": 300, "strike": 105, "limit": 110}
            ],
            "dependence": {"family": "whittle-matern", "range": 4.68, "smooth": 0.3155},
            "lambda": 0.0001
        }"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.contracts.len(), 2);
        assert_eq!(cfg.events, 100_000);
        assert!(matches!(cfg.dependence, Some(DependenceConfig::Inline(_))));
        assert_eq!(cfg.window, SeasonWindow::default());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 1}"#).is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"lambda": -1}"#).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg: RunConfig = serde_json::from_str(r#"{"daily": "/no/such/file.csv"}"#).unwrap();
        let err = cfg.require(&cfg.daily, "daily").unwrap_err();
        assert!(err.to_string().contains("/no/such/file.csv"));
    }
}
