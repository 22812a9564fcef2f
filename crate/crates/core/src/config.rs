//! Tool-wide defaults, overridable by a JSON `--config` file or a run
//! manifest's `config` block.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curation::QualityConfig;
use crate::elements::MaskingConfig;
use crate::error::{Error, Result};
use crate::geometry::CameraSpec;
use crate::raster::DEFAULT_EVAL_CLASSES;
use crate::scoring::{RewardNormalizers, RewardWeights, StdEstimator};

/// Environment variable consulted when `--seed` is not given.
pub const SEED_ENV: &str = "PANOBENCH_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraDefaults {
    pub hfov_deg: f64,
    pub out_width: usize,
    pub out_height: usize,
}

impl Default for CameraDefaults {
    fn default() -> Self {
        Self {
            hfov_deg: 90.0,
            out_width: 512,
            out_height: 512,
        }
    }
}

impl CameraDefaults {
    pub fn template(&self) -> Result<CameraSpec> {
        CameraSpec::new(0.0, 0.0, self.hfov_deg.to_radians(), self.out_width, self.out_height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Classes scored for spatial consistency, in report column order.
    pub classes: Vec<String>,
    /// Furniture classes that receive perspective views.
    pub view_classes: Vec<String>,
    /// Component size threshold; scaled from 64 px at 2048x1024 when unset.
    pub min_component_px: Option<usize>,
    pub camera: CameraDefaults,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            classes: DEFAULT_EVAL_CLASSES.iter().map(|s| s.to_string()).collect(),
            view_classes: ["Cabinet", "Sofa", "Bed"].iter().map(|s| s.to_string()).collect(),
            min_component_px: None,
            camera: CameraDefaults::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatentMaskConfig {
    pub keep_prob: f64,
    pub patch: usize,
}

impl Default for LatentMaskConfig {
    fn default() -> Self {
        Self {
            keep_prob: 0.5,
            patch: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    /// Cluster count; `√(n/2)` capped at 1024 when unset.
    pub k: Option<usize>,
    pub max_iters: usize,
    pub rep_ratio: f64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            k: None,
            max_iters: 100,
            rep_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub weights: RewardWeights,
    pub normalizers: RewardNormalizers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub warmup_steps: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { warmup_steps: 1000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolConfig {
    pub eval: EvalConfig,
    pub masking: MaskingConfig,
    pub latent: LatentMaskConfig,
    pub quality: QualityConfig,
    pub clustering: ClusteringConfig,
    pub reward: RewardConfig,
    pub schedule: ScheduleConfig,
    pub std_estimator: StdEstimator,
}

impl ToolConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Explicit seed, else `PANOBENCH_SEED`, else 0.
pub fn resolve_seed(explicit: Option<u64>) -> Result<u64> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg: ToolConfig = serde_json::from_str(r#"{"masking": {"p_attr_fur": 0.1}, "latent": {"patch": 4}}"#).unwrap();
        assert_eq!(cfg.masking.p_attr_fur, 0.1);
        assert_eq!(cfg.masking.p_cat_dec, 0.5);
        assert_eq!(cfg.latent.patch, 4);
        assert_eq!(cfg.latent.keep_prob, 0.5);
        assert_eq!(cfg.eval.classes.len(), 6);
        assert_eq!(cfg.schedule.warmup_steps, 1000);
    }

    #[test]
    fn camera_template_uses_degrees() {
        let cam = CameraDefaults::default().template().unwrap();
        assert!((cam.hfov - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!((cam.out_width, cam.out_height), (512, 512));
    }

    #[test]
    fn explicit_seed_wins() {
        assert_eq!(resolve_seed(Some(9)).unwrap(), 9);
    }
}
