//! Scale- and rotation-invariant keypoints, descriptors and matching.

mod dog;
mod matching;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

pub use dog::detect_and_describe;
pub use matching::{match_descriptors, Match, MatchSet};

/// Length of every descriptor vector (4×4 spatial cells × 8 orientation bins).
pub const DESCRIPTOR_LEN: usize = 128;

pub type Descriptor = [f32; DESCRIPTOR_LEN];

/// Images smaller than this (in either dimension) are rejected.
pub const MIN_IMAGE_SIDE: u32 = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("image too small for detection: {width}x{height}, need at least {min}x{min}")]
    ImageTooSmall { width: u32, height: u32, min: u32 },
    #[error("cannot match against an empty keypoint set")]
    EmptySet,
    #[error("ratio must lie in (0, 1), got {0}")]
    InvalidRatio(f64),
}

/// Detector parameters. Defaults follow the usual difference-of-Gaussians
/// settings, without upsampling the first octave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub max_keypoints: usize,
    pub octaves: usize,
    pub scales_per_octave: usize,
    /// Blur of the first level of each octave.
    pub sigma: f64,
    /// Minimum |DoG| response on a `[0, 1]` intensity scale.
    pub contrast_threshold: f64,
    /// Maximum principal-curvature ratio before a point is treated as an edge.
    pub edge_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            max_keypoints: 2000,
            octaves: 4,
            scales_per_octave: 3,
            sigma: 1.6,
            contrast_threshold: 0.03,
            edge_threshold: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub position: Point2,
    /// Blur scale in input-image pixels.
    pub scale: f64,
    /// Dominant gradient direction, radians in `[0, 2π)`.
    pub orientation: f64,
    /// Absolute interpolated DoG value.
    pub response: f64,
}

/// Keypoints with one descriptor each, ordered by decreasing response then position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeypointSet {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn positions(&self) -> impl Iterator<Item = Point2> + '_ {
        self.keypoints.iter().map(|k| k.position)
    }

    /// Keeps the first `n` keypoints (the strongest ones).
    pub fn truncate(&mut self, n: usize) {
        self.keypoints.truncate(n);
        self.descriptors.truncate(n);
    }
}

/// Detects on a resampled copy of `img` and maps the keypoints back to the
/// input's pixel coordinates. `scale` is the resampling factor in `(0, 1]`;
/// `1.0` is plain [`detect_and_describe`].
pub fn detect_at_scale(
    img: &crate::image::Image,
    cfg: &DetectorConfig,
    scale: f64,
) -> Result<KeypointSet, FeatureError> {
    if scale >= 1.0 {
        return detect_and_describe(img, cfg);
    }
    let (w, h) = img.dimensions();
    let sw = ((w as f64 * scale).round() as u32).max(1);
    let sh = ((h as f64 * scale).round() as u32).max(1);
    if sw < MIN_IMAGE_SIDE || sh < MIN_IMAGE_SIDE {
        return Err(FeatureError::ImageTooSmall {
            width: sw,
            height: sh,
            min: MIN_IMAGE_SIDE,
        });
    }
    let small = ::image::imageops::resize(img, sw, sh, ::image::imageops::FilterType::Triangle);
    let mut set = detect_and_describe(&small, cfg)?;
    let (fx, fy) = (w as f64 / sw as f64, h as f64 / sh as f64);
    for k in &mut set.keypoints {
        k.position = Point2::new((k.position.x + 0.5) * fx - 0.5, (k.position.y + 0.5) * fy - 0.5);
        k.scale *= 0.5 * (fx + fy);
    }
    Ok(set)
}

/// Matched positions `(a, b)` between two keypoint sets.
pub fn matched_points(a: &KeypointSet, b: &KeypointSet, ratio: f64) -> Result<Vec<(Point2, Point2)>, FeatureError> {
    let m = match_descriptors(a, b, ratio)?;
    Ok(m.matches
        .iter()
        .map(|m| (a.keypoints[m.index_a].position, b.keypoints[m.index_b].position))
        .collect())
}

/// Detection and matching settings used wherever frames are compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureParams {
    pub detector: DetectorConfig,
    /// Lowe distance-ratio threshold.
    pub ratio: f64,
    /// Resampling factor applied before detection, in `(0, 1]`.
    pub analysis_scale: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            ratio: 0.75,
            analysis_scale: 1.0,
        }
    }
}

impl FeatureParams {
    pub fn detect(&self, img: &crate::image::Image) -> Result<KeypointSet, FeatureError> {
        detect_at_scale(img, &self.detector, self.analysis_scale)
    }
}
