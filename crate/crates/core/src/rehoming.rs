//! Re-homing: after a movement, wait until every camera sees a similar amount
//! of the reddish field before homographies are estimated again.
//!
//! Field pixels are found by hue on the half-degree `0..=179` scale. The
//! agreement score is `S = (max s_i - min s_i) / mean s_i` over the per-camera
//! areas `s_i`; a run of low scores at a fixed cadence gives `t_h`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::Image;
use crate::stream::{FrameBundle, FrameSource, StreamError};

#[derive(Debug, Error)]
pub enum RehomingError {
    #[error("no camera sees any field pixels")]
    AllZeroAreas,
    #[error("need at least 2 cameras, got {0}")]
    TooFewCameras(usize),
    #[error("no re-homing time found between frame {from_t} and the stream end at {len}")]
    NoRehomingFound { from_t: usize, len: usize },
    #[error("cadence and persistence must be at least 1")]
    InvalidSchedule,
    #[error(transparent)]
    Stream(#[from] StreamError),
}

/// Which pixels count as field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldSegmentation {
    /// Inclusive hue ranges on the `0..=179` scale.
    pub hue_ranges: Vec<[u8; 2]>,
    /// Pixels below either floor (on `0..=255`) are treated as colourless.
    pub min_saturation: u8,
    pub min_value: u8,
}

impl Default for FieldSegmentation {
    fn default() -> Self {
        Self {
            hue_ranges: vec![[0, 30], [150, 179]],
            min_saturation: 20,
            min_value: 20,
        }
    }
}

impl FieldSegmentation {
    /// Lookup table from half-degree hue to membership.
    fn hue_table(&self) -> [bool; 180] {
        let mut t = [false; 180];
        for &[lo, hi] in &self.hue_ranges {
            for h in lo..=hi.min(179) {
                t[h as usize] = true;
            }
        }
        t
    }

    /// Per-pixel membership, row-major.
    pub fn mask(&self, img: &Image) -> Vec<bool> {
        let table = self.hue_table();
        img.pixels().map(|p| self.classify(&table, p.0)).collect()
    }

    #[inline]
    fn classify(&self, table: &[bool; 180], p: [u8; 3]) -> bool {
        let (h, s, v) = hsv(p);
        v >= self.min_value && s >= self.min_saturation && table[h as usize]
    }
}

/// 8-bit HSV with hue on `0..=179`, saturation and value on `0..=255`.
pub fn hsv(p: [u8; 3]) -> (u8, u8, u8) {
    let [r, g, b] = p.map(|c| c as i32);
    let v = r.max(g).max(b);
    let mn = r.min(g).min(b);
    let d = v - mn;
    if v == 0 {
        return (0, 0, 0);
    }
    let s = ((255 * d) as f64 / v as f64).round() as u8;
    if d == 0 {
        return (0, s, v as u8);
    }
    let d = d as f64;
    let deg = if v == r {
        60.0 * (g - b) as f64 / d
    } else if v == g {
        120.0 + 60.0 * (b - r) as f64 / d
    } else {
        240.0 + 60.0 * (r - g) as f64 / d
    };
    let deg = if deg < 0.0 { deg + 360.0 } else { deg };
    let h = (deg / 2.0).round() as u32 % 180;
    (h as u8, s, v as u8)
}

/// Number of field-coloured pixels in `img`.
pub fn surgical_field_area(img: &Image, seg: &FieldSegmentation) -> u64 {
    let table = seg.hue_table();
    img.pixels().filter(|p| seg.classify(&table, p.0)).count() as u64
}

/// Field areas of every camera at one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaMeasurement {
    pub t: usize,
    pub areas: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RehomingSignal {
    pub t: usize,
    #[serde(rename = "S")]
    pub s: f64,
}

/// `(max - min) / mean` of the per-camera areas.
pub fn agreement_from_areas(areas: &[u64]) -> Result<f64, RehomingError> {
    if areas.len() < 2 {
        return Err(RehomingError::TooFewCameras(areas.len()));
    }
    let max = *areas.iter().max().unwrap() as f64;
    let min = *areas.iter().min().unwrap() as f64;
    let mean = areas.iter().map(|&a| a as f64).sum::<f64>() / areas.len() as f64;
    if mean == 0.0 {
        return Err(RehomingError::AllZeroAreas);
    }
    Ok((max - min) / mean)
}

pub fn measure_areas(bundle: &FrameBundle, seg: &FieldSegmentation) -> AreaMeasurement {
    AreaMeasurement {
        t: bundle.t,
        areas: bundle.images.iter().map(|i| surgical_field_area(i, seg)).collect(),
    }
}

/// Area-agreement score of one bundle.
pub fn area_agreement(bundle: &FrameBundle, seg: &FieldSegmentation) -> Result<RehomingSignal, RehomingError> {
    let m = measure_areas(bundle, seg);
    Ok(RehomingSignal {
        t: bundle.t,
        s: agreement_from_areas(&m.areas)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RehomingConfig {
    pub cadence: usize,
    pub s_threshold: f64,
    pub persistence: usize,
}

impl Default for RehomingConfig {
    fn default() -> Self {
        Self {
            cadence: 30,
            s_threshold: 0.5,
            persistence: 3,
        }
    }
}

/// Evaluates `S` at `from_t, from_t + cadence, …` and returns the first
/// evaluation frame that starts `persistence` consecutive scores below the
/// threshold, together with every sample taken. Frames where `S` is
/// undefined break a run.
pub fn detect_rehoming_time<E>(
    len: usize,
    from_t: usize,
    cfg: &RehomingConfig,
    mut s_at: impl FnMut(usize) -> Result<Option<f64>, E>,
) -> Result<(usize, Vec<RehomingSignal>), E>
where
    E: From<RehomingError>,
{
    if cfg.cadence == 0 || cfg.persistence == 0 {
        return Err(RehomingError::InvalidSchedule.into());
    }
    let mut samples = Vec::new();
    let mut run_start = None;
    let mut run_len = 0;
    let mut t = from_t;
    while t < len {
        let s = s_at(t)?;
        if let Some(s) = s {
            samples.push(RehomingSignal { t, s });
        }
        if s.is_some_and(|s| s < cfg.s_threshold) {
            run_start.get_or_insert(t);
            run_len += 1;
            if run_len >= cfg.persistence {
                return Ok((run_start.unwrap(), samples));
            }
        } else {
            run_start = None;
            run_len = 0;
        }
        t += cfg.cadence;
    }
    Err(RehomingError::NoRehomingFound { from_t, len }.into())
}

/// [`detect_rehoming_time`] over a frame source, measuring areas on raw frames.
pub fn detect_rehoming_in(
    source: &mut dyn FrameSource,
    from_t: usize,
    cfg: &RehomingConfig,
    seg: &FieldSegmentation,
) -> Result<(usize, Vec<RehomingSignal>), RehomingError> {
    let len = source.len();
    detect_rehoming_time(len, from_t, cfg, |t| {
        let bundle = source.bundle(t)?;
        match area_agreement(&bundle, seg) {
            Ok(sig) => Ok(Some(sig.s)),
            Err(RehomingError::AllZeroAreas) => Ok(None),
            Err(e) => Err(e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::filled;

    #[test]
    fn hue_scale() {
        assert_eq!(hsv([255, 0, 0]), (0, 255, 255));
        assert_eq!(hsv([0, 255, 0]), (60, 255, 255));
        assert_eq!(hsv([0, 0, 255]), (120, 255, 255));
        assert_eq!(hsv([255, 0, 255]).0, 150);
        assert_eq!(hsv([90, 90, 90]), (0, 0, 90));
    }

    #[test]
    fn field_area_by_colour() {
        let seg = FieldSegmentation::default();
        assert_eq!(surgical_field_area(&filled(40, 30, [0, 255, 0]), &seg), 0);
        assert_eq!(surgical_field_area(&filled(40, 30, [255, 0, 0]), &seg), 1200);
        assert_eq!(surgical_field_area(&filled(40, 30, [128, 128, 128]), &seg), 0);
        assert_eq!(surgical_field_area(&filled(40, 30, [0, 0, 0]), &seg), 0);
    }

    #[test]
    fn agreement_fixtures() {
        assert_eq!(agreement_from_areas(&[100; 5]).unwrap(), 0.0);
        assert!((agreement_from_areas(&[120, 100, 100, 100, 80]).unwrap() - 0.4).abs() < 1e-12);
        let s = agreement_from_areas(&[200, 100, 100, 100, 100]).unwrap();
        assert!((s - 100.0 / 120.0).abs() < 1e-12);
        assert!(matches!(
            agreement_from_areas(&[0, 0, 0]),
            Err(RehomingError::AllZeroAreas)
        ));
    }

    #[test]
    fn rehoming_rule() {
        let cfg = RehomingConfig::default();
        let seq = [0.9, 0.7, 0.4, 0.3, 0.2];
        let (t_h, samples) =
            detect_rehoming_time::<RehomingError>(1000, 100, &cfg, |t| Ok(Some(seq[(t - 100) / 30]))).unwrap();
        assert_eq!(t_h, 160);
        assert_eq!(samples.len(), 5);
        let r = detect_rehoming_time::<RehomingError>(1000, 0, &cfg, |_| Ok(Some(0.6)));
        assert!(matches!(r, Err(RehomingError::NoRehomingFound { .. })));
    }
}
