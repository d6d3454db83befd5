use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::features::{DetectorConfig, FeatureParams};
use crate::geometry::RansacConfig;
use crate::metrics::AvSpeedConfig;
use crate::movement::MovementConfig;
use crate::rehoming::{FieldSegmentation, RehomingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccumulationConfig {
    pub target_count: usize,
    pub max_frames: usize,
}

impl Default for AccumulationConfig {
    fn default() -> Self {
        Self {
            target_count: 200,
            max_frames: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub margin: f64,
    pub min_dwell: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            margin: 0.8,
            min_dwell: 15,
        }
    }
}

/// Every tunable of a pipeline run. Missing keys in a JSON file take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Expected number of cameras; `None` accepts whatever the input has.
    pub camera_count: Option<usize>,
    pub fps: f64,
    pub reference_camera: usize,
    /// Seed of the alignment that drives the output.
    pub seed: u64,
    /// When false the views are used unaligned and no movement is searched for.
    pub align: bool,
    pub features: FeatureParams,
    pub ransac: RansacConfig,
    pub accumulation: AccumulationConfig,
    pub movement: MovementConfig,
    pub rehoming: RehomingConfig,
    pub segmentation: FieldSegmentation,
    pub selection: SelectionConfig,
    pub metrics: AvSpeedConfig,
    /// File names inside the output directory.
    pub event_log_name: String,
    pub frame_dir_name: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            camera_count: None,
            fps: 30.0,
            reference_camera: 0,
            seed: 1,
            align: true,
            features: FeatureParams {
                detector: DetectorConfig {
                    max_keypoints: 200,
                    ..DetectorConfig::default()
                },
                ratio: 0.75,
                analysis_scale: 0.5,
            },
            ransac: RansacConfig::default(),
            accumulation: AccumulationConfig::default(),
            movement: MovementConfig::default(),
            rehoming: RehomingConfig::default(),
            segmentation: FieldSegmentation::default(),
            selection: SelectionConfig::default(),
            metrics: AvSpeedConfig::default(),
            event_log_name: "events.json".into(),
            frame_dir_name: "z".into(),
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), PipelineError> {
    if ok {
        Ok(())
    } else {
        Err(PipelineError::Config(msg()))
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| PipelineError::Json(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        check(self.fps.is_finite() && self.fps > 0.0, || {
            format!("fps must be positive, got {}", self.fps)
        })?;
        if let Some(n) = self.camera_count {
            check(n >= 2, || format!("camera_count must be at least 2, got {n}"))?;
            check(self.reference_camera < n, || "reference_camera out of range".into())?;
        }
        let f = &self.features;
        check(f.ratio > 0.0 && f.ratio < 1.0, || {
            format!("features.ratio must lie in (0, 1), got {}", f.ratio)
        })?;
        check(f.analysis_scale > 0.0 && f.analysis_scale <= 1.0, || {
            format!("features.analysis_scale must lie in (0, 1], got {}", f.analysis_scale)
        })?;
        check(f.detector.max_keypoints >= 1, || {
            "features.detector.max_keypoints must be positive".into()
        })?;
        check(f.detector.octaves >= 1 && f.detector.scales_per_octave >= 1, || {
            "detector octaves and scales must be positive".into()
        })?;
        let r = &self.ransac;
        check(r.inlier_tol > 0.0, || "ransac.inlier_tol must be positive".into())?;
        check(r.confidence > 0.0 && r.confidence < 1.0, || {
            "ransac.confidence must lie in (0, 1)".into()
        })?;
        check(r.max_iters >= 1, || "ransac.max_iters must be positive".into())?;
        check(self.accumulation.target_count >= 4, || {
            "accumulation.target_count must be at least 4".into()
        })?;
        check(self.accumulation.max_frames >= 1, || {
            "accumulation.max_frames must be positive".into()
        })?;
        let m = &self.movement;
        check(m.mad_k > 0.0, || "movement.mad_k must be positive".into())?;
        check(m.smoothing_window % 2 == 1, || {
            "movement.smoothing_window must be odd".into()
        })?;
        check(m.window_minutes > 0.0, || {
            "movement.window_minutes must be positive".into()
        })?;
        check(m.stride >= 1, || "movement.stride must be positive".into())?;
        check(m.runs % 2 == 1, || "movement.runs must be odd".into())?;
        check(m.seeds.len() >= m.runs, || {
            "movement.seeds must hold one seed per run".into()
        })?;
        check(m.match_keep > 0.0 && m.match_keep <= 1.0, || {
            "movement.match_keep must lie in (0, 1]".into()
        })?;
        let h = &self.rehoming;
        check(h.cadence >= 1 && h.persistence >= 1, || {
            "rehoming cadence and persistence must be positive".into()
        })?;
        check(h.s_threshold > 0.0, || "rehoming.s_threshold must be positive".into())?;
        check(
            self.segmentation.hue_ranges.iter().all(|[a, b]| a <= b && *b <= 179),
            || "hue ranges must be ordered pairs within 0..=179".into(),
        )?;
        let s = &self.selection;
        check(s.margin > 0.0 && s.margin <= 1.0, || {
            "selection.margin must lie in (0, 1]".into()
        })?;
        check(s.min_dwell >= 1, || "selection.min_dwell must be positive".into())?;
        check(self.metrics.search_radius > 0.0, || {
            "metrics.search_radius must be positive".into()
        })?;
        Ok(())
    }
}
