//! Frozen session configuration.
//!
//! The config file is TOML; its digest (SHA-256 of the canonical JSON
//! serialization) is written into the trace header and re-verified on every
//! round, so the protocol cannot drift mid-session. Field reference lives in
//! `docs/config.md`.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::GateConfig;
use crate::panel::{DateRange, DerivedWindowConfig, SchemaMap, SplitConfig};
use crate::portfolio::PortfolioConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentConfig {
    /// Deterministic seeded template sampler over the DSL grammar.
    Stub {
        /// Recipes the sampler is biased to include (e.g. a planted column
        /// in synthetic runs). May be empty.
        #[serde(default)]
        bias_recipes: Vec<String>,
    },
    /// Chat-completion HTTP endpoint; the key comes from `api_key_env`.
    Remote {
        endpoint: String,
        model: String,
        api_key_env: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FilterConfig {
    pub min_history_days: usize,
    pub min_avg_volume: f64,
    /// Rolling window for the volume filter; absent = full-history average.
    pub rolling_volume_window: Option<usize>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_history_days: 180,
            min_avg_volume: 10_000.0,
            rolling_volume_window: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SessionConfig {
    pub data_path: PathBuf,
    pub output_dir: PathBuf,
    pub schema: SchemaMap,
    pub filter: FilterConfig,
    pub derived_windows: DerivedWindowConfig,
    pub split: SplitConfig,
    pub gate: GateConfig,
    pub exec_lag: usize,
    pub hold: usize,
    /// Signal-level long-short diagnostic quantile.
    pub ls_quantile: f64,
    pub round_budget: u32,
    pub mechanical_batch: usize,
    pub hypothesis_batch: usize,
    /// Top-k passed factors to derive mechanical variants from.
    pub mechanical_top_k: usize,
    pub session_seed: u64,
    pub agents: Vec<AgentConfig>,
    pub curation_corr_threshold: f64,
    pub curation_max_size: usize,
    pub ridge_lambda: f64,
    pub portfolio: PortfolioConfig,
    pub fee_sweep: Vec<f64>,
    /// Logical timestamp stamped on every record; fixed so replays are
    /// byte-identical.
    pub timestamp: String,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            data_path: PathBuf::from("data/panel.csv"),
            output_dir: PathBuf::from("out"),
            schema: SchemaMap::default(),
            filter: FilterConfig::default(),
            derived_windows: DerivedWindowConfig::default(),
            split: SplitConfig {
                train: DateRange {
                    start: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
                    end: NaiveDate::from_ymd_opt(2022, 12, 31).unwrap(),
                },
                validation: DateRange {
                    start: NaiveDate::from_ymd_opt(2023, 1, 1).unwrap(),
                    end: NaiveDate::from_ymd_opt(2023, 12, 31).unwrap(),
                },
                oos: DateRange {
                    start: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
                    end: NaiveDate::from_ymd_opt(2025, 12, 31).unwrap(),
                },
            },
            gate: GateConfig::default(),
            exec_lag: 1,
            hold: 1,
            ls_quantile: 0.2,
            round_budget: 5,
            mechanical_batch: 6,
            hypothesis_batch: 6,
            mechanical_top_k: 2,
            session_seed: 42,
            agents: vec![AgentConfig::Stub {
                bias_recipes: vec![],
            }],
            curation_corr_threshold: 0.7,
            curation_max_size: 8,
            ridge_lambda: 1.0,
            portfolio: PortfolioConfig::default(),
            fee_sweep: vec![0.0, 0.0005, 0.001, 0.002, 0.003],
            timestamp: "2026-01-01T00:00:00Z".into(),
        }
    }
}

impl SessionConfig {
    pub fn load(path: &Path) -> Result<SessionConfig> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&raw).map_err(|e| Error::Config(format!("{path:?}: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let raw = toml::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("serialize: {e}")))?;
        std::fs::write(path, raw).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the canonical (JSON) serialization. Written into the trace
    /// header and checked before every round.
    ///
    /// Filesystem locations are excluded: they are environmental, not part
    /// of the research protocol, and replaying a session from a different
    /// directory must still produce byte-identical artifacts.
    pub fn digest(&self) -> String {
        let mut protocol = self.clone();
        protocol.data_path = PathBuf::new();
        protocol.output_dir = PathBuf::new();
        let canonical = serde_json::to_string(&protocol).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        if !(self.ls_quantile > 0.0 && self.ls_quantile <= 0.5) {
            return Err(Error::Config("ls_quantile must lie in (0, 0.5]".into()));
        }
        if self.exec_lag < 1 || self.hold < 1 {
            return Err(Error::Config("exec_lag and hold must be >= 1".into()));
        }
        if self.gate.min_names_per_day < 3 {
            return Err(Error::Config("gate.min_names_per_day must be >= 3".into()));
        }
        if self.ridge_lambda < 0.0 {
            return Err(Error::Config("ridge_lambda must be >= 0".into()));
        }
        if self.portfolio.n_groups < 2 || self.portfolio.fee_one_way < 0.0 {
            return Err(Error::Config("bad portfolio config".into()));
        }
        if self
            .fee_sweep
            .windows(2)
            .any(|w| w[0] > w[1])
        {
            return Err(Error::Config("fee_sweep must be sorted ascending".into()));
        }
        Ok(())
    }
}
