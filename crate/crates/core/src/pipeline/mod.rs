//! The end-to-end loop: align the views, watch the misalignment signal for a
//! rig movement, wait for the field areas to agree again, re-align, and
//! finally pick the least occluded aligned view per frame.
//!
//! Work happens in two passes over the input. The analysis pass detects
//! keypoints once per frame and camera and keeps the matched positions of
//! every camera pair. Movement scans, seeded runs and re-alignments all reuse
//! those matches by mapping them through the alignment under test. The output
//! pass then warps the selected view of every frame.

mod config;
mod events;
mod io;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use config::{AccumulationConfig, PipelineConfig, SelectionConfig};
pub use events::{EventLog, Record};
pub use io::{
    camera_dir, frame_name, read_frame, read_json, render_to_dir, write_frame, write_json, DirSource, VideoDir,
    GROUND_TRUTH_FILE, SCENARIO_FILE,
};

use crate::alignment::{compute_alignment, Accumulator, AlignmentError, AlignmentState};
use crate::features::{matched_points, FeatureError, KeypointSet};
use crate::geometry::{warp_image, warp_point, GeometryError, Homography, Point2};
use crate::image::Image;
use crate::metrics::{evaluate_stream, MetricsError, MetricsReport, MetricsTrace};
use crate::movement::{denoise, detect_movement, MisalignmentSeries, MovementError, MovementEvent};
use crate::rehoming::{agreement_from_areas, detect_rehoming_time, surgical_field_area, RehomingError};
use crate::selection::{aligned_field_area, scores_from_areas, SelectionError, SwitchPlanner, SwitchSchedule};
use crate::simulator::SimulatorError;
use crate::stream::{FrameSource, StreamError};

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "SINGLEVIEW_WORKERS";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("input mismatch: {0}")]
    InputMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("json error: {0}")]
    Json(String),
    #[error(transparent)]
    Stream(StreamError),
    #[error("frame {t}: {source}")]
    Alignment {
        t: usize,
        #[source]
        source: AlignmentError,
    },
    #[error("frame {t}, camera {camera}: {source}")]
    Features {
        t: usize,
        camera: usize,
        #[source]
        source: FeatureError,
    },
    #[error("frame {t}: {source}")]
    Geometry {
        t: usize,
        #[source]
        source: GeometryError,
    },
    #[error(transparent)]
    Movement(#[from] MovementError),
    #[error(transparent)]
    Rehoming(#[from] RehomingError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Simulator(#[from] SimulatorError),
}

impl PipelineError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Short machine-readable name of the error.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::InputMismatch(_) => "InputMismatch",
            PipelineError::Config(_) => "InvalidConfig",
            PipelineError::Io { .. } => "Io",
            PipelineError::Json(_) => "Json",
            PipelineError::Stream(_) => "Stream",
            PipelineError::Alignment { source, .. } => match source {
                AlignmentError::InsufficientCorrespondences { .. } => "InsufficientCorrespondences",
                _ => "Alignment",
            },
            PipelineError::Features { .. } => "Features",
            PipelineError::Geometry { .. } => "Geometry",
            PipelineError::Movement(_) => "Movement",
            PipelineError::Rehoming(_) => "Rehoming",
            PipelineError::Selection(_) => "Selection",
            PipelineError::Metrics(e) => match e {
                MetricsError::TooFewFrames(_) => "TooFewFrames",
                MetricsError::NoTrackablePoints => "NoTrackablePoints",
                MetricsError::DimensionMismatch { .. } => "DimensionMismatch",
                MetricsError::Features(_) => "Features",
            },
            PipelineError::Simulator(_) => "Simulator",
        }
    }
}

impl From<StreamError> for PipelineError {
    fn from(e: StreamError) -> Self {
        match e {
            StreamError::Mismatch(m) => PipelineError::InputMismatch(m),
            StreamError::TooFewCameras(n) => {
                PipelineError::InputMismatch(format!("need at least two cameras, got {n}"))
            }
            e => PipelineError::Stream(e),
        }
    }
}

/// Index of the unordered camera pair `(i, j)`, `i < j`, among `n` cameras.
pub fn pair_index(i: usize, j: usize, n: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

type PackedPair = [f32; 4];

fn pack(a: Point2, b: Point2) -> PackedPair {
    [a.x as f32, a.y as f32, b.x as f32, b.y as f32]
}

fn unpack(p: &PackedPair) -> (Point2, Point2) {
    (
        Point2::new(p[0] as f64, p[1] as f64),
        Point2::new(p[2] as f64, p[3] as f64),
    )
}

/// Matched keypoint positions of every camera pair at every frame, taken on
/// raw (unaligned) frames.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub cameras: usize,
    pub width: u32,
    pub height: u32,
    /// `matches[t][pair_index(i, j)]` holds `(point in i, point in j)`.
    matches: Vec<Vec<Vec<PackedPair>>>,
}

impl Analysis {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// Matches at `t` oriented as `(point in camera a, point in camera b)`.
    pub fn pair_matches(&self, t: usize, a: usize, b: usize) -> Vec<(Point2, Point2)> {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        self.matches[t][pair_index(i, j, self.cameras)]
            .iter()
            .map(|p| {
                let (pi, pj) = unpack(p);
                if a < b {
                    (pi, pj)
                } else {
                    (pj, pi)
                }
            })
            .collect()
    }

    /// `D_t` at frame `t` with the views aligned by `maps`. Matches whose
    /// aligned position leaves the reference image are skipped, as are a
    /// seeded fraction `1 - keep` of the rest.
    pub fn misalignment(&self, t: usize, maps: &[Homography], keep: f64, seed: u64, min_matches: usize) -> Option<f64> {
        let (w, h) = (self.width as f64, self.height as f64);
        let inside = |p: &Point2| p.x >= 0.0 && p.y >= 0.0 && p.x <= w - 1.0 && p.y <= h - 1.0;
        let threshold = (keep * u64::MAX as f64) as u64;
        let (mut sum, mut n) = (0.0, 0usize);
        for i in 0..self.cameras {
            for j in i + 1..self.cameras {
                let pi = pair_index(i, j, self.cameras);
                for (k, p) in self.matches[t][pi].iter().enumerate() {
                    if keep < 1.0 && mix(&[seed, t as u64, pi as u64, k as u64]) > threshold {
                        continue;
                    }
                    let (a, b) = unpack(p);
                    let (Ok(a), Ok(b)) = (warp_point(&maps[i], a), warp_point(&maps[j], b)) else {
                        continue;
                    };
                    if inside(&a) && inside(&b) {
                        sum += a.distance(&b);
                        n += 1;
                    }
                }
            }
        }
        (n >= min_matches.max(1)).then(|| sum / n as f64)
    }
}

fn mix(parts: &[u64]) -> u64 {
    let mut z = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        z ^= p
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(z << 6)
            .wrapping_add(z >> 2);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

fn check_input(cfg: &PipelineConfig, source: &dyn FrameSource) -> Result<(), PipelineError> {
    cfg.validate()?;
    let n = source.camera_count();
    if n < 2 {
        return Err(PipelineError::InputMismatch(format!(
            "need at least two cameras, got {n}"
        )));
    }
    if let Some(expected) = cfg.camera_count {
        if expected != n {
            return Err(PipelineError::InputMismatch(format!(
                "config expects {expected} cameras, input has {n}"
            )));
        }
    }
    if cfg.reference_camera >= n {
        return Err(PipelineError::Config(format!(
            "reference camera {} out of range",
            cfg.reference_camera
        )));
    }
    if source.is_empty() {
        return Err(PipelineError::InputMismatch("input has no frames".into()));
    }
    Ok(())
}

/// Detects and matches every camera pair of every frame.
pub fn analyze(cfg: &PipelineConfig, source: &mut dyn FrameSource) -> Result<Analysis, PipelineError> {
    check_input(cfg, source)?;
    let n = source.camera_count();
    let (width, height) = source.dimensions();
    let mut matches = Vec::with_capacity(source.len());
    for t in 0..source.len() {
        let bundle = source.bundle(t)?;
        if bundle.dimensions() != (width, height) || bundle.camera_count() != n {
            return Err(PipelineError::InputMismatch(format!(
                "frame {t} differs in size or camera count"
            )));
        }
        let sets: Vec<KeypointSet> = bundle
            .images
            .par_iter()
            .enumerate()
            .map(|(camera, img)| {
                cfg.features
                    .detect(img)
                    .map_err(|source| PipelineError::Features { t, camera, source })
            })
            .collect::<Result<_, _>>()?;
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let frame = pairs
            .par_iter()
            .map(|&(i, j)| {
                if sets[i].is_empty() || sets[j].is_empty() {
                    return Ok(Vec::new());
                }
                matched_points(&sets[i], &sets[j], cfg.features.ratio)
                    .map(|m| m.into_iter().map(|(a, b)| pack(a, b)).collect())
                    .map_err(|source| PipelineError::Features { t, camera: i, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        matches.push(frame);
        if (t + 1) % 300 == 0 {
            log::info!("analysed {} of {} frames", t + 1, source.len());
        }
    }
    Ok(Analysis {
        cameras: n,
        width,
        height,
        matches,
    })
}

/// Accumulated correspondences starting at `from`.
fn accumulate(cfg: &PipelineConfig, analysis: &Analysis, from: usize) -> Result<(Accumulator, usize), PipelineError> {
    let reference = cfg.reference_camera;
    let mut acc = Accumulator::new(analysis.cameras, reference, cfg.accumulation.target_count);
    let end = (from + cfg.accumulation.max_frames).min(analysis.len());
    for t in from..end {
        for cam in (0..analysis.cameras).filter(|&c| c != reference) {
            acc.add(cam, &analysis.pair_matches(t, cam, reference));
        }
        acc.finish_frame();
        if acc.is_complete() {
            break;
        }
    }
    let frames = acc.frames();
    Ok((acc, frames))
}

/// Output of the detection loop.
#[derive(Debug, Clone)]
pub struct Events {
    /// Alignment states in order of `valid_from`.
    pub states: Vec<AlignmentState>,
    pub log: EventLog,
}

impl Events {
    /// The state in effect at frame `t`.
    pub fn state_at(&self, t: usize) -> &AlignmentState {
        self.states
            .iter()
            .rev()
            .find(|s| s.valid_from <= t)
            .unwrap_or(&self.states[0])
    }
}

/// Source of per-camera field areas on raw frames, used by the re-homing scan.
pub trait AreaSource {
    fn areas(&mut self, t: usize) -> Result<Vec<u64>, PipelineError>;
}

impl<S: FrameSource + ?Sized> AreaSource for (&mut S, &crate::rehoming::FieldSegmentation) {
    fn areas(&mut self, t: usize) -> Result<Vec<u64>, PipelineError> {
        let b = self.0.bundle(t)?;
        Ok(b.images.par_iter().map(|i| surgical_field_area(i, self.1)).collect())
    }
}

/// Initial alignment, then alternating movement and re-homing scans.
pub fn detect_events(
    cfg: &PipelineConfig,
    analysis: &Analysis,
    areas: &mut dyn AreaSource,
) -> Result<Events, PipelineError> {
    let mut log = EventLog {
        frames: analysis.len(),
        records: Vec::new(),
    };
    let n = analysis.cameras;
    if !cfg.align {
        let state = AlignmentState::identity(n, cfg.reference_camera, 0);
        log.push(Record::Alignment {
            t: 0,
            state: state.clone(),
            frames_used: 0,
            correspondences: vec![0; n],
        });
        return Ok(Events {
            states: vec![state],
            log,
        });
    }
    let mut states = Vec::new();
    let mut start = 0;
    loop {
        let (acc, frames_used) = accumulate(cfg, analysis, start)?;
        let result = acc
            .clone()
            .into_result()
            .map_err(|source| PipelineError::Alignment { t: start, source })?;
        let state = compute_alignment(&result.sets, cfg.reference_camera, start, &cfg.ransac, cfg.seed)
            .map_err(|source| PipelineError::Alignment { t: start, source })?;
        log::info!(
            "alignment at frame {start} from {frames_used} frames, counts {:?}",
            result.counts
        );
        log.push(Record::Alignment {
            t: start,
            state: state.clone(),
            frames_used,
            correspondences: result.counts.clone(),
        });
        states.push(state);

        let len = analysis.len() - start;
        if len < cfg.movement.smoothing_window {
            break;
        }
        let mut first_series = None;
        let event = detect_movement::<PipelineError>(&cfg.movement, cfg.fps, |seed| {
            let st = if seed == cfg.seed {
                states.last().unwrap().clone()
            } else {
                compute_alignment(&result.sets, cfg.reference_camera, start, &cfg.ransac, seed)
                    .map_err(|source| PipelineError::Alignment { t: start, source })?
            };
            let series: Vec<Option<f64>> = (start..analysis.len())
                .map(|t| {
                    if (t - start) % cfg.movement.stride != 0 {
                        return None;
                    }
                    analysis.misalignment(t, &st.maps, cfg.movement.match_keep, seed, cfg.movement.min_matches)
                })
                .collect();
            first_series.get_or_insert_with(|| series.clone());
            Ok(series)
        })?;
        let series = denoise(
            &MisalignmentSeries::new(first_series.unwrap_or_default()),
            cfg.movement.mad_k,
            cfg.movement.smoothing_window,
        )?;
        let logged_until = event.as_ref().map_or(series.len(), |e| e.t_c + 1);
        for k in 0..logged_until {
            log.push(Record::Misalignment {
                t: start + k,
                d: series.values[k],
                smoothed: series.smoothed[k],
            });
        }
        let Some(event) = event else { break };
        let t_c = start + event.t_c;
        log::info!("movement at frame {t_c} (runs {:?})", event.run_values);
        log.push(Record::Movement {
            t: t_c,
            event: MovementEvent { t_c, ..event },
        });
        let mut samples = Vec::new();
        let found =
            detect_rehoming_time::<PipelineError>(analysis.len(), t_c + cfg.rehoming.cadence, &cfg.rehoming, |t| {
                let a = areas.areas(t)?;
                match agreement_from_areas(&a) {
                    Ok(s) => {
                        samples.push(Record::AreaAgreement { t, s });
                        Ok(Some(s))
                    }
                    Err(RehomingError::AllZeroAreas) => Ok(None),
                    Err(e) => Err(e.into()),
                }
            });
        log.records.extend(samples);
        match found {
            Ok((t_h, _)) => {
                log::info!("re-homing at frame {t_h}");
                log.push(Record::Rehoming { t: t_h, t_c });
                start = t_h;
            }
            Err(PipelineError::Rehoming(RehomingError::NoRehomingFound { .. })) => {
                log::warn!("no re-homing frame after movement at {t_c}");
                log.push(Record::NoRehomingFound {
                    t: analysis.len() - 1,
                    t_c,
                });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Events { states, log })
}

/// Result of the output pass.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub log: EventLog,
    pub schedule: SwitchSchedule,
}

/// Scores, selects and warps every frame, handing `z_t` to `sink`.
pub fn render_output(
    cfg: &PipelineConfig,
    events: Events,
    source: &mut dyn FrameSource,
    sink: &mut dyn FnMut(usize, Image) -> Result<(), PipelineError>,
) -> Result<PipelineOutput, PipelineError> {
    let mut planner = SwitchPlanner::new(cfg.selection.min_dwell, cfg.selection.margin)?;
    let (w, h) = source.dimensions();
    for t in 0..source.len() {
        let bundle = source.bundle(t)?;
        let state = events.state_at(t);
        let areas = bundle
            .images
            .par_iter()
            .zip(&state.maps)
            .map(|(img, m)| {
                let mask = cfg.segmentation.mask(img);
                if *m == Homography::identity() {
                    Ok(mask.iter().filter(|&&b| b).count() as u64)
                } else {
                    aligned_field_area(m, &mask, w, h).map_err(|source| PipelineError::Geometry { t, source })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let cam = planner.step(&scores_from_areas(&areas))?;
        let map = &state.maps[cam];
        let z = if *map == Homography::identity() {
            bundle.images[cam].clone()
        } else {
            warp_image(map, &bundle.images[cam], w, h).map_err(|source| PipelineError::Geometry { t, source })?
        };
        sink(t, z)?;
    }
    let schedule = planner.schedule();
    let mut log = events.log;
    for s in &schedule.segments {
        log.push(Record::Switch {
            t: s.start,
            end: s.end,
            camera: s.camera,
        });
    }
    log.sort();
    Ok(PipelineOutput { log, schedule })
}

/// Full pipeline over a frame source.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    source: &mut dyn FrameSource,
    sink: &mut dyn FnMut(usize, Image) -> Result<(), PipelineError>,
) -> Result<PipelineOutput, PipelineError> {
    let analysis = if cfg.align {
        analyze(cfg, source)?
    } else {
        check_input(cfg, source)?;
        let (width, height) = source.dimensions();
        Analysis {
            cameras: source.camera_count(),
            width,
            height,
            matches: vec![Vec::new(); source.len()],
        }
    };
    let seg = cfg.segmentation.clone();
    let events = detect_events(cfg, &analysis, &mut (&mut *source, &seg))?;
    render_output(cfg, events, source, sink)
}

/// Runs the pipeline on `cam<k>/` frames in `input`, writing `z` frames and
/// the event log under `output`.
pub fn run_dirs(cfg: &PipelineConfig, input: &Path, output: &Path) -> Result<PipelineOutput, PipelineError> {
    let mut source = DirSource::open(input)?;
    let frames = output.join(&cfg.frame_dir_name);
    std::fs::create_dir_all(&frames).map_err(|e| PipelineError::io(&frames, e))?;
    let out = run_pipeline(cfg, &mut source, &mut |t, img| write_frame(&frames, t, &img))?;
    write_json(&output.join(&cfg.event_log_name), &out.log)?;
    Ok(out)
}

/// Movement detection only: the event log without an output pass.
pub fn detect_moves_dir(cfg: &PipelineConfig, input: &Path) -> Result<EventLog, PipelineError> {
    let mut source = DirSource::open(input)?;
    let analysis = analyze(cfg, &mut source)?;
    let seg = cfg.segmentation.clone();
    let mut log = detect_events(cfg, &analysis, &mut (&mut source, &seg))?.log;
    log.sort();
    Ok(log)
}

/// Report of `evaluate`: metrics of a video, optionally next to a baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    #[serde(flatten)]
    pub metrics: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<MetricsReport>,
    /// `itf / baseline itf`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub itf_ratio: Option<f64>,
    /// `avspeed / baseline avspeed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avspeed_ratio: Option<f64>,
}

/// Finds the frames of a video directory: either the directory itself or
/// the `z/` subdirectory written by `run`.
pub fn video_dir(path: &Path, cfg: &PipelineConfig) -> Result<VideoDir, PipelineError> {
    let sub: PathBuf = path.join(&cfg.frame_dir_name);
    let v = VideoDir::open(path)?;
    if v.is_empty() && sub.is_dir() {
        return Ok(VideoDir::open(&sub)?);
    }
    Ok(v)
}

pub fn evaluate_video(video: &VideoDir, cfg: &PipelineConfig) -> Result<(MetricsReport, MetricsTrace), PipelineError> {
    evaluate_stream(video.frames().map(|f| f.map_err(PipelineError::from)), &cfg.metrics)
}

pub fn evaluate_dirs(
    cfg: &PipelineConfig,
    input: &Path,
    baseline: Option<&Path>,
) -> Result<(EvaluationReport, MetricsTrace), PipelineError> {
    let (metrics, trace) = evaluate_video(&video_dir(input, cfg)?, cfg)?;
    let baseline = match baseline {
        Some(b) => Some(evaluate_video(&video_dir(b, cfg)?, cfg)?.0),
        None => None,
    };
    Ok((
        EvaluationReport {
            itf_ratio: baseline.as_ref().map(|b| metrics.itf_db / b.itf_db),
            avspeed_ratio: baseline.as_ref().map(|b| metrics.avspeed / b.avspeed),
            metrics,
            baseline,
        },
        trace,
    ))
}
