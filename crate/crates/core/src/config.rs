//! Root JSON configuration shared by every command.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryMode, MonoblockGeometry};
use crate::losses::LossWeights;
use crate::network::NetworkConfig;
use crate::optimizer::OptimConfig;
use crate::oracle::{OracleConfig, SupervisionBudget};
use crate::sampling::{SamplingBudget, TrustRegionParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub budget: SamplingBudget,
    /// Time window in seconds.
    pub t_range: [f64; 2],
    /// Share of top-surface points drawn in the heated band instead of
    /// uniformly; 0 disables the bias.
    pub top_bias_fraction: f64,
    pub trust_region: TrustRegionParams,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            budget: SamplingBudget::default(),
            t_range: [0.0, 10.0],
            top_bias_fraction: 0.0,
            trust_region: TrustRegionParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub oracle: OracleConfig,
    /// Per-material supervision counts; the mode's default when absent.
    pub supervision: Option<SupervisionBudget>,
    pub eval_points: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { oracle: OracleConfig::default(), supervision: None, eval_points: 5573 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub epochs: usize,
    /// Collocation points per epoch, drawn stratified by category from the
    /// full set. `None` trains on the full set every epoch.
    pub batch_size: Option<usize>,
    /// Epochs between trust-region perturbations of the collocation set.
    pub region_every: usize,
    pub use_multidomain: bool,
    pub use_data_loss: bool,
    pub use_region_opt: bool,
    /// Loss-log cadence for `log::info!`; 0 silences progress output.
    pub log_every: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 20_000,
            batch_size: None,
            region_every: 1,
            use_multidomain: true,
            use_data_loss: true,
            use_region_opt: true,
            log_every: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: BoundaryMode,
    pub seed: u64,
    pub geometry: MonoblockGeometry,
    pub sampling: SamplingConfig,
    pub data: DataConfig,
    pub network: NetworkConfig,
    pub optim: OptimConfig,
    pub weights: LossWeights,
    pub train: TrainSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: BoundaryMode::Constant,
            seed: 0,
            geometry: MonoblockGeometry::default(),
            sampling: SamplingConfig::default(),
            data: DataConfig::default(),
            network: NetworkConfig::default(),
            optim: OptimConfig::default(),
            weights: LossWeights::default(),
            train: TrainSettings::default(),
        }
    }
}

impl TrainConfig {
    /// Reduced profile that trains in a few minutes on one CPU core:
    /// 32-wide layers, 1000-point mini-batches, 5000 epochs, and output
    /// biases starting at the initial temperature.
    pub fn desk(mode: BoundaryMode) -> Self {
        let mut cfg = TrainConfig { mode, ..TrainConfig::default() };
        cfg.network.widths = vec![4, 32, 32, 32, 32, 1];
        cfg.network.output_bias_init = cfg.data.oracle.t_init;
        cfg.train.epochs = 5_000;
        cfg.train.batch_size = Some(1_000);
        cfg
    }

    pub fn supervision_budget(&self) -> SupervisionBudget {
        self.data.supervision.unwrap_or_else(|| SupervisionBudget::default_for(self.mode))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.network.validate()?;
        self.optim.validate()?;
        self.weights.validate()?;
        let [t0, t1] = self.sampling.t_range;
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(Error::InvalidConfig("sampling.t_range must be increasing".into()));
        }
        if !(0.0..=1.0).contains(&self.sampling.top_bias_fraction) {
            return Err(Error::InvalidConfig("sampling.top_bias_fraction must lie in [0, 1]".into()));
        }
        if self.train.region_every == 0 {
            return Err(Error::InvalidConfig("train.region_every must be at least 1".into()));
        }
        if self.train.batch_size == Some(0) {
            return Err(Error::InvalidConfig("train.batch_size must be positive".into()));
        }
        if self.data.eval_points == 0 {
            return Err(Error::InvalidConfig("data.eval_points must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        for cfg in [TrainConfig::default(), TrainConfig::desk(BoundaryMode::Gaussian)] {
            let back = TrainConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn empty_object_is_default() {
        assert_eq!(TrainConfig::from_json("{}").unwrap(), TrainConfig::default());
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = TrainConfig::from_json("{\n  \"mode\": \"constant\",\n  \"epochz\": 3\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epochz") && msg.contains("line 3"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(TrainConfig::from_json(r#"{"sampling": {"t_range": [5.0, 1.0]}}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"train": {"region_every": 0}}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"weights": [1, 1, 1]}"#).is_err());
    }

    #[test]
    fn supervision_defaults_follow_mode() {
        assert_eq!(TrainConfig::desk(BoundaryMode::Constant).supervision_budget().total(), 30);
        assert_eq!(TrainConfig::desk(BoundaryMode::Gaussian).supervision_budget().total(), 160);
    }
}
