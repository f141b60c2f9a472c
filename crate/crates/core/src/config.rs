//! Mission configuration. Everything the simulator consumes is set here;
//! a JSON file with any subset of fields overrides the defaults.

use crate::grid::{build_world, cell, GridCell, NfzSchedule, WorldError};
use crate::radio::LinkConfig;
use crate::reasoner::CostModel;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub width: i32,
    pub height: i32,
    pub cell_size_m: f64,
    pub altitude_m: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            width: 8,
            height: 8,
            cell_size_m: 500.0,
            altitude_m: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisruptionConfig {
    /// Chance each cluster sits one tile off its nominal cell.
    pub p_drift: f64,
    /// Chance each cluster's access link is attenuated all episode.
    pub p_snr: f64,
    pub snr_drops_db: Vec<f64>,
}

impl Default for DisruptionConfig {
    fn default() -> Self {
        DisruptionConfig {
            p_drift: 0.25,
            p_snr: 0.2,
            snr_drops_db: vec![15.0, 20.0, 25.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyncConfig {
    /// Contact window length used to convert link rate into a token budget.
    pub interval_s: f64,
    pub bits_per_token: u32,
    /// Deliver the pack before launch instead of over the air.
    pub precache: bool,
}

impl Default for SyncConfig {
    fn default() -> Self {
        SyncConfig {
            interval_s: 1.0,
            bits_per_token: 32,
            precache: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromotionConfig {
    /// Episodes in the experience corpus digested at promotion time.
    pub corpus_episodes: u64,
    /// Largest candidate period tried when inducing the activation schedule.
    pub max_period_steps: u32,
    /// Best mission plans kept for retrieval.
    pub top_plans: usize,
    /// Free-text annotations carried at the deepest knowledge depth.
    pub annotations: usize,
    /// How many of those annotations form contradicting pairs.
    pub conflict_pairs: usize,
}

impl Default for PromotionConfig {
    fn default() -> Self {
        PromotionConfig {
            corpus_episodes: 20,
            max_period_steps: 96,
            top_plans: 3,
            annotations: 6,
            conflict_pairs: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// How far from a cluster the fallback reasoner assumes it can serve.
    pub serve_range: i32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { serve_range: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub grid: GridConfig,
    pub home: GridCell,
    pub clusters: Vec<GridCell>,
    pub obstacles: Vec<GridCell>,
    pub nfz: NfzSchedule,
    pub step_budget: u32,
    pub access: LinkConfig,
    pub backhaul: LinkConfig,
    pub access_threshold_bps: f64,
    pub backhaul_threshold_bps: f64,
    pub disruptions: DisruptionConfig,
    pub costs: CostModel,
    pub sync: SyncConfig,
    pub promotion: PromotionConfig,
    pub search: SearchConfig,
    /// Recent uplink observations included in a mid-mission report.
    pub summary_trail_len: usize,
    pub llm_timeout_s: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        MissionConfig {
            grid: GridConfig::default(),
            home: cell(4, 4),
            clusters: vec![cell(1, 1), cell(6, 1), cell(1, 6), cell(6, 6)],
            obstacles: vec![cell(2, 2), cell(5, 2), cell(2, 5)],
            nfz: NfzSchedule {
                cell: cell(3, 3),
                period_steps: 40,
                active_start: 0,
                active_len: 12,
            },
            step_budget: 120,
            access: LinkConfig::default(),
            backhaul: LinkConfig {
                bandwidth_hz: 20e6,
                tx_power_dbm: 33.0,
                carrier_hz: 2.8e10,
                noise_psd_dbm_hz: -174.0,
                los_a: 4.88,
                los_b: 0.43,
                nlos_excess_db: 15.0,
                shadowing_sigma_db: 4.0,
            },
            access_threshold_bps: 8e6,
            backhaul_threshold_bps: 5e6,
            disruptions: DisruptionConfig::default(),
            costs: CostModel::default(),
            sync: SyncConfig::default(),
            promotion: PromotionConfig::default(),
            search: SearchConfig::default(),
            summary_trail_len: 40,
            llm_timeout_s: 30.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl MissionConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: MissionConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.display().to_string(),
                source,
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        build_world(self)?;
        let probs = [self.disruptions.p_drift, self.disruptions.p_snr];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ConfigError::Invalid(
                "probabilities must lie in [0,1]".into(),
            ));
        }
        if self.disruptions.snr_drops_db.is_empty() {
            return Err(ConfigError::Invalid(
                "at least one attenuation magnitude".into(),
            ));
        }
        if self.sync.interval_s <= 0.0 || self.sync.bits_per_token == 0 {
            return Err(ConfigError::Invalid(
                "sync window and token width must be positive".into(),
            ));
        }
        if self.promotion.corpus_episodes == 0
            || self.promotion.top_plans == 0
            || self.promotion.max_period_steps == 0
        {
            return Err(ConfigError::Invalid(
                "promotion sizes must be positive".into(),
            ));
        }
        if self.promotion.conflict_pairs * 2 > self.promotion.annotations {
            return Err(ConfigError::Invalid(
                "conflict pairs cannot outnumber available annotations".into(),
            ));
        }
        if self.search.serve_range < 0 {
            return Err(ConfigError::Invalid(
                "serve range cannot be negative".into(),
            ));
        }
        let links = [&self.access, &self.backhaul];
        if links
            .iter()
            .any(|l| l.bandwidth_hz <= 0.0 || l.carrier_hz <= 0.0)
        {
            return Err(ConfigError::Invalid(
                "link bandwidth and carrier must be positive".into(),
            ));
        }
        if self.costs.any_zero() {
            return Err(ConfigError::Invalid("token costs must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        MissionConfig::default().validate().unwrap();
    }

    #[test]
    fn default_round_trips_through_json() {
        let cfg = MissionConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: MissionConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_file_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, r#"{"step_budget": 90, "grid": {"width": 9}}"#).unwrap();
        let cfg = MissionConfig::from_file(&p).unwrap();
        assert_eq!(cfg.step_budget, 90);
        assert_eq!(cfg.grid.width, 9);
        assert_eq!(cfg.grid.height, 8);
        assert_eq!(cfg.home, cell(4, 4));
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, "{nope").unwrap();
        assert!(matches!(
            MissionConfig::from_file(&p),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn overlapping_layout_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, r#"{"home": [3, 3]}"#).unwrap();
        assert!(matches!(
            MissionConfig::from_file(&p),
            Err(ConfigError::World(_))
        ));
    }

    #[test]
    fn bad_probability_is_rejected() {
        let mut cfg = MissionConfig::default();
        cfg.disruptions.p_drift = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn cells_serialize_as_pairs() {
        let cfg = MissionConfig::default();
        let v: serde_json::Value = serde_json::to_value(&cfg).unwrap();
        assert_eq!(v["home"], serde_json::json!([4, 4]));
        assert_eq!(v["clusters"][0], serde_json::json!([1, 1]));
    }
}
