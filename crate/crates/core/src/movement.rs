//! Camera-movement detection from the misalignment signal.
//!
//! `D_t` is the mean displacement between matched keypoints of aligned views,
//! over every unordered camera pair. Outliers are removed against a rolling
//! median, the series is smoothed by a centred moving average, and a two-class
//! clustering per time window yields the threshold whose first crossing marks
//! the movement frame. Several seeded runs are combined by their median.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{matched_points, FeatureError, FeatureParams, KeypointSet};
use crate::geometry::Point2;
use crate::stream::FrameBundle;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MovementError {
    #[error("smoothing window {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("smoothing window must be odd and at least 1, got {0}")]
    InvalidWindow(usize),
    #[error("runs must be odd and at least 1, got {0}")]
    InvalidRuns(usize),
    #[error("{runs} runs need {runs} seeds, got {seeds}")]
    SeedCount { runs: usize, seeds: usize },
    #[error("camera {camera}: {source}")]
    Features {
        camera: usize,
        #[source]
        source: FeatureError,
    },
}

/// Per-frame `D_t` (absent where too few matches) and its denoised variant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MisalignmentSeries {
    pub values: Vec<Option<f64>>,
    pub smoothed: Vec<Option<f64>>,
}

impl MisalignmentSeries {
    pub fn new(values: Vec<Option<f64>>) -> Self {
        Self {
            smoothed: values.clone(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementEvent {
    pub t_c: usize,
    pub threshold_used: f64,
    /// Crossing frame of every run; `None` for runs that saw no crossing.
    pub run_values: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MovementConfig {
    pub mad_k: f64,
    pub smoothing_window: usize,
    pub window_minutes: f64,
    pub min_matches: usize,
    /// Compute `D_t` every `stride` frames.
    pub stride: usize,
    pub runs: usize,
    pub seeds: Vec<u64>,
    /// Fraction of each frame's matches kept in a run; the draw depends on the run's seed.
    pub match_keep: f64,
}

impl Default for MovementConfig {
    fn default() -> Self {
        Self {
            mad_k: 3.0,
            smoothing_window: 31,
            window_minutes: 10.0,
            min_matches: 10,
            stride: 1,
            runs: 5,
            seeds: vec![11, 23, 37, 41, 53],
            match_keep: 0.9,
        }
    }
}

/// Mean Euclidean length of the displacement of every matched pair, pooled
/// over all camera pairs. Absent when fewer than `min_matches` pairs exist.
pub fn misalignment_from_matches<'a>(
    pairs: impl IntoIterator<Item = &'a [(Point2, Point2)]>,
    min_matches: usize,
) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for set in pairs {
        for (a, b) in set {
            sum += a.distance(b);
            n += 1;
        }
    }
    (n >= min_matches.max(1)).then(|| sum / n as f64)
}

/// `D_t` of an aligned bundle: keypoints are detected in every view and each
/// of the `N(N-1)/2` view pairs is matched.
pub fn misalignment_at(
    aligned: &FrameBundle,
    min_matches: usize,
    params: &FeatureParams,
) -> Result<Option<f64>, MovementError> {
    let sets: Vec<KeypointSet> = aligned
        .images
        .iter()
        .enumerate()
        .map(|(camera, img)| {
            params
                .detect(img)
                .map_err(|source| MovementError::Features { camera, source })
        })
        .collect::<Result<_, _>>()?;
    let mut all = Vec::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            if sets[i].is_empty() || sets[j].is_empty() {
                continue;
            }
            let m = matched_points(&sets[i], &sets[j], params.ratio)
                .map_err(|source| MovementError::Features { camera: i, source })?;
            all.push(m);
        }
    }
    Ok(misalignment_from_matches(all.iter().map(|v| v.as_slice()), min_matches))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn centred(t: usize, half: usize, len: usize) -> Range<usize> {
    t.saturating_sub(half)..(t + half + 1).min(len)
}

/// Drops values further than `mad_k` median absolute deviations from the
/// rolling median, then takes a centred moving average of width `window` over
/// the values that remain. Frames whose window holds no values stay absent.
pub fn denoise(series: &MisalignmentSeries, mad_k: f64, window: usize) -> Result<MisalignmentSeries, MovementError> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(MovementError::InvalidWindow(window));
    }
    let len = series.len();
    if window > len {
        return Err(MovementError::WindowTooLarge { window, len });
    }
    let half = window / 2;
    let values = &series.values;
    let mut buf = Vec::with_capacity(window);
    let kept: Vec<Option<f64>> = (0..len)
        .map(|t| {
            let v = values[t]?;
            buf.clear();
            buf.extend(values[centred(t, half, len)].iter().flatten());
            let med = median(&mut buf);
            for x in buf.iter_mut() {
                *x = (*x - med).abs();
            }
            let mad = median(&mut buf);
            ((v - med).abs() <= mad_k * mad).then_some(v)
        })
        .collect();
    let smoothed = (0..len)
        .map(|t| {
            let (sum, n) = kept[centred(t, half, len)]
                .iter()
                .flatten()
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            (n > 0).then(|| sum / n as f64)
        })
        .collect();
    Ok(MisalignmentSeries {
        values: series.values.clone(),
        smoothed,
    })
}

/// Threshold of one clustering window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    /// Largest value assigned to the lower ("before movement") class.
    pub before_max: f64,
    pub mean: f64,
    /// Set when the window has fewer than two values or the threshold is not positive.
    pub degenerate: bool,
}

/// Splits `values` into two classes with 1-D 2-means started at the minimum
/// and maximum, then returns `min(max(lower class) + 1, 2 · mean)`.
pub fn two_class_threshold(values: &[f64]) -> Option<Threshold> {
    if values.is_empty() {
        return None;
    }
    let lo0 = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi0 = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let (mut lo, mut hi) = (lo0, hi0);
    let mut boundary = f64::INFINITY;
    if hi0 > lo0 {
        for _ in 0..100 {
            boundary = 0.5 * (lo + hi);
            let (mut sl, mut nl, mut sh, mut nh) = (0.0, 0usize, 0.0, 0usize);
            for &v in values {
                if v <= boundary {
                    sl += v;
                    nl += 1;
                } else {
                    sh += v;
                    nh += 1;
                }
            }
            let (nlo, nhi) = (sl / nl as f64, if nh > 0 { sh / nh as f64 } else { hi });
            if nlo == lo && nhi == hi {
                break;
            }
            lo = nlo;
            hi = nhi;
        }
    }
    let before_max = values
        .iter()
        .cloned()
        .filter(|&v| v <= boundary)
        .fold(f64::NEG_INFINITY, f64::max);
    let value = (before_max + 1.0).min(2.0 * mean);
    Some(Threshold {
        value,
        before_max,
        mean,
        degenerate: values.len() < 2 || value <= 0.0,
    })
}

/// Clustering windows of `window_minutes` over `len` frames. A trailing
/// window shorter than half the nominal length is merged into its predecessor.
pub fn window_ranges(len: usize, window_minutes: f64, fps: f64) -> Vec<Range<usize>> {
    let w = ((window_minutes * 60.0 * fps).round() as usize).max(1);
    let mut out = Vec::new();
    let mut start = 0;
    while start < len {
        let end = (start + w).min(len);
        out.push(start..end);
        start = end;
    }
    if out.len() >= 2 {
        let last = out.last().unwrap().clone();
        if last.len() * 2 < w {
            out.pop();
            out.last_mut().unwrap().end = last.end;
        }
    }
    out
}

/// One threshold per clustering window, computed from the smoothed series.
pub fn cluster_threshold(series: &MisalignmentSeries, window_minutes: f64, fps: f64) -> Vec<(Range<usize>, Threshold)> {
    window_ranges(series.len(), window_minutes, fps)
        .into_iter()
        .filter_map(|r| {
            let vals: Vec<f64> = series.smoothed[r.clone()].iter().flatten().cloned().collect();
            two_class_threshold(&vals).map(|th| (r, th))
        })
        .collect()
}

/// First frame whose smoothed value exceeds its window's threshold.
pub fn first_crossing(series: &MisalignmentSeries, thresholds: &[(Range<usize>, Threshold)]) -> Option<(usize, f64)> {
    thresholds.iter().find_map(|(r, th)| {
        r.clone()
            .find(|&t| series.smoothed[t].is_some_and(|v| v > th.value))
            .map(|t| (t, th.value))
    })
}

/// Crossing frame and threshold of one run over a raw `D_t` series.
pub fn scan_run(
    values: Vec<Option<f64>>,
    cfg: &MovementConfig,
    fps: f64,
) -> Result<Option<(usize, f64)>, MovementError> {
    let series = denoise(&MisalignmentSeries::new(values), cfg.mad_k, cfg.smoothing_window)?;
    let th = cluster_threshold(&series, cfg.window_minutes, fps);
    Ok(first_crossing(&series, &th))
}

/// Lower median of the runs that detected a crossing; `None` when fewer
/// than half of the runs did.
pub fn median_of_runs(runs: &[Option<usize>]) -> Option<usize> {
    let mut hits: Vec<usize> = runs.iter().flatten().cloned().collect();
    if hits.is_empty() || hits.len() * 2 < runs.len() {
        return None;
    }
    hits.sort_unstable();
    Some(hits[(hits.len() - 1) / 2])
}

/// Runs `series_for_seed` once per seed, scans each series and combines the
/// crossings. Frame indices are relative to the series start.
pub fn detect_movement<E>(
    cfg: &MovementConfig,
    fps: f64,
    mut series_for_seed: impl FnMut(u64) -> Result<Vec<Option<f64>>, E>,
) -> Result<Option<MovementEvent>, E>
where
    E: From<MovementError>,
{
    if cfg.runs == 0 || cfg.runs.is_multiple_of(2) {
        return Err(MovementError::InvalidRuns(cfg.runs).into());
    }
    if cfg.seeds.len() < cfg.runs {
        return Err(MovementError::SeedCount {
            runs: cfg.runs,
            seeds: cfg.seeds.len(),
        }
        .into());
    }
    let mut run_values = Vec::with_capacity(cfg.runs);
    let mut thresholds = Vec::with_capacity(cfg.runs);
    for &seed in &cfg.seeds[..cfg.runs] {
        let hit = scan_run(series_for_seed(seed)?, cfg, fps)?;
        run_values.push(hit.map(|h| h.0));
        thresholds.push(hit.map(|h| h.1));
    }
    let Some(t_c) = median_of_runs(&run_values) else {
        return Ok(None);
    };
    let threshold_used = run_values
        .iter()
        .zip(&thresholds)
        .find(|(r, _)| **r == Some(t_c))
        .and_then(|(_, th)| *th)
        .unwrap_or(f64::NAN);
    Ok(Some(MovementEvent {
        t_c,
        threshold_used,
        run_values,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(v: &[f64]) -> MisalignmentSeries {
        MisalignmentSeries::new(v.iter().map(|&x| Some(x)).collect())
    }

    #[test]
    fn norm_reading_of_displacement() {
        let pairs = [(Point2::new(10.0, 10.0), Point2::new(13.0, 14.0))];
        assert_eq!(misalignment_from_matches([&pairs[..]], 1), Some(5.0));
        assert_eq!(misalignment_from_matches([&pairs[..]], 2), None);
        let same = [(Point2::new(1.0, 2.0), Point2::new(1.0, 2.0)); 12];
        assert_eq!(misalignment_from_matches([&same[..], &same[..]], 10), Some(0.0));
    }

    #[test]
    fn denoise_constant_and_spike() {
        let s = denoise(&series(&[2.0; 100]), 3.0, 31).unwrap();
        assert!(s.smoothed.iter().all(|v| *v == Some(2.0)));
        let mut v = vec![2.0; 100];
        v[40] = 100.0;
        let s = denoise(&series(&v), 3.0, 31).unwrap();
        for x in s.smoothed.iter().flatten() {
            assert!((x - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn denoise_step_crosses_near_step() {
        let v: Vec<f64> = (0..1000).map(|t| if t < 500 { 2.0 } else { 12.0 }).collect();
        let s = denoise(&series(&v), 3.0, 31).unwrap();
        let cross = s.smoothed.iter().position(|x| x.unwrap() > 7.0).unwrap();
        assert!((485..=515).contains(&cross), "{cross}");
    }

    #[test]
    fn denoise_errors() {
        assert_eq!(
            denoise(&series(&[1.0; 10]), 3.0, 31),
            Err(MovementError::WindowTooLarge { window: 31, len: 10 })
        );
        assert_eq!(
            denoise(&series(&[1.0; 10]), 3.0, 4),
            Err(MovementError::InvalidWindow(4))
        );
    }

    #[test]
    fn threshold_fixtures() {
        let th = two_class_threshold(&[2.0; 50]).unwrap();
        assert_eq!(th.value, 3.0);
        let v: Vec<f64> = (0..100).map(|t| if t < 50 { 1.0 } else { 9.0 }).collect();
        let th = two_class_threshold(&v).unwrap();
        assert_eq!(th.value, 2.0);
        let th = two_class_threshold(&[0.0]).unwrap();
        assert_eq!(th.value, 0.0);
        assert!(th.degenerate);
    }

    #[test]
    fn windows_merge_short_tail() {
        assert_eq!(window_ranges(1800, 10.0, 30.0), vec![0..1800]);
        assert_eq!(window_ranges(1500, 10.0, 1.0), vec![0..600, 600..1200, 1200..1500]);
        assert_eq!(window_ranges(1400, 10.0, 1.0), vec![0..600, 600..1400]);
    }

    #[test]
    fn median_of_runs_excludes_absent() {
        let runs = [Some(898), Some(901), Some(902), Some(940), None];
        assert_eq!(median_of_runs(&runs), Some(901));
        assert_eq!(median_of_runs(&[Some(1), None, None, None, None]), None);
        assert_eq!(median_of_runs(&[None; 5]), None);
    }

    #[test]
    fn detect_on_synthetic_step() {
        let cfg = MovementConfig::default();
        let ev = detect_movement::<MovementError>(&cfg, 30.0, |seed| {
            let shift = (seed % 3) as usize;
            Ok((0..1800)
                .map(|t| Some(if t < 900 + shift { 1.0 } else { 15.0 }))
                .collect())
        })
        .unwrap()
        .unwrap();
        assert!((885..=915).contains(&ev.t_c), "{ev:?}");
        let none = detect_movement::<MovementError>(&cfg, 30.0, |_| Ok(vec![Some(1.0); 1800])).unwrap();
        assert!(none.is_none());
    }
}
