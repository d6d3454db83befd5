//! Multi-camera alignment: correspondences between every camera and the
//! reference camera are accumulated over frames, then each camera gets a
//! robust homography into the reference image plane.

use std::collections::HashSet;

use nalgebra::{Matrix2, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{matched_points, FeatureError, FeatureParams, KeypointSet};
use crate::geometry::{
    estimate_ransac, warp_image, CorrespondenceSet, GeometryError, Homography, Point2, RansacConfig,
};
use crate::stream::FrameBundle;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignmentError {
    #[error("camera {camera} has only {count} correspondences with the reference")]
    InsufficientCorrespondences { camera: usize, count: usize },
    #[error("camera {camera}: {source}")]
    Estimation {
        camera: usize,
        #[source]
        source: GeometryError,
    },
    #[error("camera {camera}: {source}")]
    Features {
        camera: usize,
        #[source]
        source: FeatureError,
    },
    #[error("no frames to accumulate from")]
    NoFrames,
    #[error("target count must be at least 4, got {0}")]
    InvalidTarget(usize),
    #[error("reference camera {reference} out of range for {cameras} cameras")]
    BadReference { reference: usize, cameras: usize },
    #[error("bundle has {got} cameras, alignment has {expected}")]
    CameraCountMismatch { expected: usize, got: usize },
}

/// Per-camera homographies into the reference camera's image plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentState {
    pub reference_camera: usize,
    /// `maps[i]` takes camera `i` pixels to reference pixels.
    pub maps: Vec<Homography>,
    pub valid_from: usize,
}

impl AlignmentState {
    pub fn identity(cameras: usize, reference_camera: usize, valid_from: usize) -> Self {
        Self {
            reference_camera,
            maps: vec![Homography::identity(); cameras],
            valid_from,
        }
    }

    pub fn camera_count(&self) -> usize {
        self.maps.len()
    }
}

/// Grows per-camera correspondence sets frame by frame. Pairs are stored as
/// `(camera point, reference point)` and deduplicated on a 1-pixel grid so a
/// static scene does not repeat the same match hundreds of times.
#[derive(Debug, Clone)]
pub struct Accumulator {
    reference: usize,
    target: usize,
    sets: Vec<CorrespondenceSet>,
    seen: Vec<HashSet<[i64; 4]>>,
    frames: usize,
}

impl Accumulator {
    pub fn new(cameras: usize, reference: usize, target: usize) -> Self {
        Self {
            reference,
            target,
            sets: vec![CorrespondenceSet::default(); cameras],
            seen: vec![HashSet::new(); cameras],
            frames: 0,
        }
    }

    /// Adds one frame's matches for `camera`. Returns how many were new.
    pub fn add(&mut self, camera: usize, pairs: &[(Point2, Point2)]) -> usize {
        let mut added = 0;
        for &(src, dst) in pairs {
            if !src.is_finite() || !dst.is_finite() {
                continue;
            }
            let key = [src.x, src.y, dst.x, dst.y].map(|v| v.round() as i64);
            if self.seen[camera].insert(key) {
                self.sets[camera].push(src, dst);
                added += 1;
            }
        }
        added
    }

    pub fn finish_frame(&mut self) {
        self.frames += 1;
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn counts(&self) -> Vec<usize> {
        self.sets.iter().map(|s| s.len()).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.sets
            .iter()
            .enumerate()
            .all(|(i, s)| i == self.reference || s.len() >= self.target)
    }

    pub fn into_result(self) -> Result<Accumulation, AlignmentError> {
        for (camera, s) in self.sets.iter().enumerate() {
            if camera != self.reference && s.len() < 4 {
                return Err(AlignmentError::InsufficientCorrespondences { camera, count: s.len() });
            }
        }
        Ok(Accumulation {
            counts: self.counts(),
            sets: self.sets,
            frames_used: self.frames,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Accumulation {
    /// `sets[i]` maps camera `i` to the reference; the reference's own set is empty.
    pub sets: Vec<CorrespondenceSet>,
    pub counts: Vec<usize>,
    pub frames_used: usize,
}

/// Matches of every camera against the reference for one bundle, as
/// `(camera point, reference point)` pairs. The reference entry is empty.
pub fn bundle_matches(
    bundle: &FrameBundle,
    reference: usize,
    params: &FeatureParams,
) -> Result<Vec<Vec<(Point2, Point2)>>, AlignmentError> {
    let sets: Vec<KeypointSet> = bundle
        .images
        .par_iter()
        .enumerate()
        .map(|(camera, img)| {
            params
                .detect(img)
                .map_err(|source| AlignmentError::Features { camera, source })
        })
        .collect::<Result<_, _>>()?;
    sets.iter()
        .enumerate()
        .map(|(camera, s)| {
            if camera == reference || s.is_empty() || sets[reference].is_empty() {
                return Ok(Vec::new());
            }
            matched_points(s, &sets[reference], params.ratio)
                .map_err(|source| AlignmentError::Features { camera, source })
        })
        .collect()
}

/// Accumulates ratio-test matches against the reference camera frame by frame
/// until every camera has `target_count` pairs or `max_frames` bundles are used.
pub fn accumulate_correspondences(
    bundles: &[FrameBundle],
    reference: usize,
    target_count: usize,
    max_frames: usize,
    params: &FeatureParams,
) -> Result<Accumulation, AlignmentError> {
    let first = bundles.first().ok_or(AlignmentError::NoFrames)?;
    if target_count < 4 {
        return Err(AlignmentError::InvalidTarget(target_count));
    }
    let cameras = first.camera_count();
    if reference >= cameras {
        return Err(AlignmentError::BadReference { reference, cameras });
    }
    let mut acc = Accumulator::new(cameras, reference, target_count);
    for bundle in bundles.iter().take(max_frames) {
        if bundle.camera_count() != cameras {
            return Err(AlignmentError::CameraCountMismatch {
                expected: cameras,
                got: bundle.camera_count(),
            });
        }
        for (camera, pairs) in bundle_matches(bundle, reference, params)?.iter().enumerate() {
            acc.add(camera, pairs);
        }
        acc.finish_frame();
        if acc.is_complete() {
            break;
        }
    }
    acc.into_result()
}

/// True when the points span (numerically) less than two dimensions.
fn is_collinear(points: impl Iterator<Item = Point2> + Clone) -> bool {
    let n = points.clone().count() as f64;
    let (mx, my) = points.clone().fold((0.0, 0.0), |(x, y), p| (x + p.x / n, y + p.y / n));
    let mut c = Matrix2::<f64>::zeros();
    for p in points {
        let (dx, dy) = (p.x - mx, p.y - my);
        c[(0, 0)] += dx * dx;
        c[(0, 1)] += dx * dy;
        c[(1, 1)] += dy * dy;
    }
    c[(1, 0)] = c[(0, 1)];
    let e = SymmetricEigen::new(c).eigenvalues;
    let (lo, hi) = (e.min(), e.max());
    hi <= 0.0 || lo <= 1e-12 * hi
}

fn camera_seed(seed: u64, camera: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(camera as u64 + 1)
        .rotate_left(17)
}

/// Robust homography from each camera into the reference.
pub fn compute_alignment(
    corr: &[CorrespondenceSet],
    reference: usize,
    t_now: usize,
    cfg: &RansacConfig,
    seed: u64,
) -> Result<AlignmentState, AlignmentError> {
    if reference >= corr.len() {
        return Err(AlignmentError::BadReference {
            reference,
            cameras: corr.len(),
        });
    }
    let mut maps = Vec::with_capacity(corr.len());
    for (camera, set) in corr.iter().enumerate() {
        if camera == reference {
            maps.push(Homography::identity());
            continue;
        }
        if set.len() < 4 {
            return Err(AlignmentError::InsufficientCorrespondences {
                camera,
                count: set.len(),
            });
        }
        let degenerate = is_collinear(set.pairs.iter().map(|p| p.0)) || is_collinear(set.pairs.iter().map(|p| p.1));
        if degenerate {
            return Err(AlignmentError::Estimation {
                camera,
                source: GeometryError::DegenerateConfiguration("all correspondences lie on one line".into()),
            });
        }
        let fit = estimate_ransac(set, cfg, camera_seed(seed, camera))
            .map_err(|source| AlignmentError::Estimation { camera, source })?;
        maps.push(fit.homography);
    }
    Ok(AlignmentState {
        reference_camera: reference,
        maps,
        valid_from: t_now,
    })
}

/// Warps every view into the reference image plane. The reference view is
/// passed through untouched.
pub fn apply_alignment(state: &AlignmentState, bundle: &FrameBundle) -> Result<FrameBundle, AlignmentError> {
    if bundle.camera_count() != state.camera_count() {
        return Err(AlignmentError::CameraCountMismatch {
            expected: state.camera_count(),
            got: bundle.camera_count(),
        });
    }
    let (w, h) = bundle.dimensions();
    let images = bundle
        .images
        .par_iter()
        .zip(&state.maps)
        .enumerate()
        .map(|(camera, (img, m))| {
            if camera == state.reference_camera || *m == Homography::identity() {
                Ok(img.clone())
            } else {
                warp_image(m, img, w, h).map_err(|source| AlignmentError::Estimation { camera, source })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FrameBundle {
        t: bundle.t,
        images,
        camera_ids: bundle.camera_ids.clone(),
    })
}
