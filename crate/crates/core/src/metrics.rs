//! Stabilization metrics: PSNR between frames, ITF (mean consecutive-frame
//! PSNR) and AvSpeed (mean per-frame displacement of tracked keypoints).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{detect_at_scale, Descriptor, DetectorConfig, FeatureError, KeypointSet};
use crate::geometry::Point2;
use crate::image::{luma, Image};

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("image sizes differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (u32, u32), b: (u32, u32) },
    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("no keypoints could be tracked")]
    NoTrackablePoints,
    #[error(transparent)]
    Features(#[from] FeatureError),
}

/// `10 log10(255² / MSE)` on BT.601 luma, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64, MetricsError> {
    if a.dimensions() != b.dimensions() {
        return Err(MetricsError::DimensionMismatch {
            a: a.dimensions(),
            b: b.dimensions(),
        });
    }
    let n = (a.width() as u64 * a.height() as u64).max(1) as f64;
    let sse: f64 = a
        .pixels()
        .zip(b.pixels())
        .map(|(p, q)| {
            let d = luma(p.0) - luma(q.0);
            d * d
        })
        .sum();
    let mse = sse / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP))
}

/// Streaming ITF: push frames in order.
#[derive(Debug, Clone, Default)]
pub struct ItfAccumulator {
    prev: Option<Image>,
    frames: usize,
    /// PSNR of each consecutive pair, in order.
    pub trace: Vec<f64>,
}

impl ItfAccumulator {
    pub fn push(&mut self, frame: Image) -> Result<(), MetricsError> {
        if let Some(prev) = &self.prev {
            self.trace.push(psnr(prev, &frame)?);
        }
        self.prev = Some(frame);
        self.frames += 1;
        Ok(())
    }

    pub fn value(&self) -> Result<f64, MetricsError> {
        if self.frames < 2 {
            return Err(MetricsError::TooFewFrames(self.frames));
        }
        Ok(self.trace.iter().sum::<f64>() / self.trace.len() as f64)
    }
}

/// Mean PSNR over consecutive frame pairs.
pub fn itf(video: &[Image]) -> Result<f64, MetricsError> {
    let mut acc = ItfAccumulator::default();
    for f in video {
        acc.push(f.clone())?;
    }
    acc.value()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AvSpeedConfig {
    /// A track only continues to keypoints within this distance.
    pub search_radius: f64,
    pub detector: DetectorConfig,
    pub analysis_scale: f64,
    /// Ratio between best and second-best descriptor distance among candidates.
    pub ratio: f64,
    /// Start fresh tracks from the current frame once fewer than this
    /// fraction of the last seeding survive.
    pub reseed_fraction: f64,
}

impl Default for AvSpeedConfig {
    fn default() -> Self {
        Self {
            search_radius: 50.0,
            detector: DetectorConfig {
                max_keypoints: 500,
                ..DetectorConfig::default()
            },
            analysis_scale: 1.0,
            ratio: 0.8,
            reseed_fraction: 0.25,
        }
    }
}

struct Track {
    id: usize,
    pos: Point2,
    desc: Descriptor,
    moved: bool,
}

fn dist2(a: &Descriptor, b: &Descriptor) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Streaming AvSpeed: keypoints of the first frame are followed from frame to
/// frame by descriptor matching inside the search radius. Lost tracks are
/// dropped; when too few survive, new tracks start from the current frame.
pub struct AvSpeedTracker {
    cfg: AvSpeedConfig,
    tracks: Vec<Track>,
    seeded: usize,
    next_id: usize,
    distance_sum: f64,
    samples: usize,
    tracked_ids: usize,
    frames: usize,
    /// Mean displacement of each transition (`None` when nothing was tracked).
    pub trace: Vec<Option<f64>>,
}

impl AvSpeedTracker {
    pub fn new(cfg: AvSpeedConfig) -> Self {
        Self {
            cfg,
            tracks: Vec::new(),
            seeded: 0,
            next_id: 0,
            distance_sum: 0.0,
            samples: 0,
            tracked_ids: 0,
            frames: 0,
            trace: Vec::new(),
        }
    }

    fn seed(&mut self, set: KeypointSet) {
        self.tracks = set
            .keypoints
            .iter()
            .zip(set.descriptors)
            .map(|(k, desc)| {
                self.next_id += 1;
                Track {
                    id: self.next_id,
                    pos: k.position,
                    desc,
                    moved: false,
                }
            })
            .collect();
        self.seeded = self.tracks.len();
    }

    pub fn push(&mut self, frame: &Image) -> Result<(), MetricsError> {
        let set = detect_at_scale(frame, &self.cfg.detector, self.cfg.analysis_scale)?;
        self.frames += 1;
        if self.frames == 1 {
            self.seed(set);
            return Ok(());
        }
        let r = self.cfg.search_radius;
        let r2 = self.cfg.ratio as f32 * self.cfg.ratio as f32;
        // claim[k] = (track index, descriptor distance²)
        let mut claim: Vec<Option<(usize, f32)>> = vec![None; set.len()];
        for (ti, tr) in self.tracks.iter().enumerate() {
            let (mut best, mut second) = ((usize::MAX, f32::INFINITY), f32::INFINITY);
            for (k, kp) in set.keypoints.iter().enumerate() {
                if (kp.position.x - tr.pos.x).abs() > r
                    || (kp.position.y - tr.pos.y).abs() > r
                    || kp.position.distance(&tr.pos) > r
                {
                    continue;
                }
                let d = dist2(&tr.desc, &set.descriptors[k]);
                if d < best.1 {
                    second = best.1;
                    best = (k, d);
                } else if d < second {
                    second = d;
                }
            }
            if best.0 == usize::MAX || best.1 >= r2 * second {
                continue;
            }
            let slot = &mut claim[best.0];
            if slot.is_none_or(|(_, d)| best.1 < d) {
                *slot = Some((ti, best.1));
            }
        }
        let mut next = Vec::new();
        let (mut sum, mut n) = (0.0, 0usize);
        let mut old: Vec<Option<Track>> = std::mem::take(&mut self.tracks).into_iter().map(Some).collect();
        for (k, c) in claim.iter().enumerate() {
            let Some((ti, _)) = c else { continue };
            let mut tr = old[*ti].take().unwrap();
            let p = set.keypoints[k].position;
            sum += p.distance(&tr.pos);
            n += 1;
            if !tr.moved {
                tr.moved = true;
                self.tracked_ids += 1;
            }
            tr.pos = p;
            tr.desc = set.descriptors[k];
            next.push(tr);
        }
        next.sort_by_key(|t| t.id);
        self.distance_sum += sum;
        self.samples += n;
        self.trace.push((n > 0).then(|| sum / n as f64));
        self.tracks = next;
        if (self.tracks.len() as f64) < self.cfg.reseed_fraction * self.seeded as f64 || self.tracks.is_empty() {
            self.seed(set);
        }
        Ok(())
    }

    pub fn value(&self) -> Result<f64, MetricsError> {
        if self.frames < 2 {
            return Err(MetricsError::TooFewFrames(self.frames));
        }
        if self.samples == 0 {
            return Err(MetricsError::NoTrackablePoints);
        }
        Ok(self.distance_sum / self.samples as f64)
    }

    /// Tracks that contributed at least one displacement.
    pub fn tracked_points(&self) -> usize {
        self.tracked_ids
    }
}

/// AvSpeed of a frame sequence, in pixels per frame.
pub fn avspeed(video: &[Image], cfg: &AvSpeedConfig) -> Result<f64, MetricsError> {
    if video.len() < 2 {
        return Err(MetricsError::TooFewFrames(video.len()));
    }
    let mut t = AvSpeedTracker::new(cfg.clone());
    for f in video {
        t.push(f)?;
    }
    t.value()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub itf_db: f64,
    pub avspeed: f64,
    pub n_frames: usize,
    pub n_tracked_points: usize,
}

/// Per-transition values behind a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTrace {
    pub psnr: Vec<f64>,
    pub displacement: Vec<Option<f64>>,
}

/// ITF and AvSpeed in one pass over a frame stream.
pub fn evaluate_stream<E>(
    frames: impl IntoIterator<Item = Result<Image, E>>,
    cfg: &AvSpeedConfig,
) -> Result<(MetricsReport, MetricsTrace), E>
where
    E: From<MetricsError>,
{
    let mut itf_acc = ItfAccumulator::default();
    let mut tracker = AvSpeedTracker::new(cfg.clone());
    let mut n = 0;
    for f in frames {
        let f = f?;
        tracker.push(&f)?;
        itf_acc.push(f)?;
        n += 1;
    }
    let report = MetricsReport {
        itf_db: itf_acc.value()?,
        avspeed: tracker.value()?,
        n_frames: n,
        n_tracked_points: tracker.tracked_points(),
    };
    Ok((
        report,
        MetricsTrace {
            psnr: itf_acc.trace,
            displacement: tracker.trace,
        },
    ))
}
