use std::fs;
use std::path::{Path, PathBuf};

use crate::image::Image;
use crate::simulator::{GroundTruth, Renderer, Scenario};
use crate::stream::{FrameBundle, FrameSource, StreamError};

use super::PipelineError;

pub fn frame_name(t: usize) -> String {
    format!("frame_{t:06}.png")
}

pub fn camera_dir(root: &Path, camera: usize) -> PathBuf {
    root.join(format!("cam{camera}"))
}

pub fn read_frame(path: &Path) -> Result<Image, StreamError> {
    let img = ::image::open(path).map_err(|source| StreamError::Image {
        path: path.display().to_string(),
        source,
    })?;
    Ok(img.to_rgb8())
}

pub fn write_frame(dir: &Path, t: usize, img: &Image) -> Result<(), PipelineError> {
    let path = dir.join(frame_name(t));
    img.save(&path).map_err(|e| {
        PipelineError::Stream(StreamError::Image {
            path: path.display().to_string(),
            source: e,
        })
    })
}

/// Number of consecutive `frame_%06d.png` files starting at 0, and whether
/// other frame files exist beyond that run.
fn count_frames(dir: &Path) -> Result<usize, StreamError> {
    let entries = fs::read_dir(dir).map_err(|source| StreamError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut n = 0;
    for e in entries.flatten() {
        let name = e.file_name();
        let name = name.to_string_lossy();
        if name.starts_with("frame_") && name.ends_with(".png") {
            n += 1;
        }
    }
    if n > 0 && !dir.join(frame_name(n - 1)).exists() {
        return Err(StreamError::Mismatch(format!(
            "{} frames in {} are not numbered 0..{}",
            n,
            dir.display(),
            n
        )));
    }
    Ok(n)
}

/// A single video stored as numbered frames in one directory.
#[derive(Debug, Clone)]
pub struct VideoDir {
    dir: PathBuf,
    len: usize,
}

impl VideoDir {
    pub fn open(dir: &Path) -> Result<Self, StreamError> {
        Ok(Self {
            dir: dir.to_path_buf(),
            len: count_frames(dir)?,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn frame(&self, t: usize) -> Result<Image, StreamError> {
        if t >= self.len {
            return Err(StreamError::OutOfRange { t, len: self.len });
        }
        read_frame(&self.dir.join(frame_name(t)))
    }

    pub fn frames(&self) -> impl Iterator<Item = Result<Image, StreamError>> + '_ {
        (0..self.len).map(|t| self.frame(t))
    }
}

/// Multi-camera input laid out as `cam<k>/frame_%06d.png`.
#[derive(Debug, Clone)]
pub struct DirSource {
    cameras: Vec<VideoDir>,
    dims: (u32, u32),
}

impl DirSource {
    pub fn open(root: &Path) -> Result<Self, StreamError> {
        let mut cameras = Vec::new();
        while camera_dir(root, cameras.len()).is_dir() {
            cameras.push(VideoDir::open(&camera_dir(root, cameras.len()))?);
        }
        if cameras.len() < 2 {
            return Err(StreamError::TooFewCameras(cameras.len()));
        }
        let len = cameras[0].len();
        if let Some((k, c)) = cameras.iter().enumerate().find(|(_, c)| c.len() != len) {
            return Err(StreamError::Mismatch(format!(
                "cam{k} has {} frames, cam0 has {len}",
                c.len()
            )));
        }
        if len == 0 {
            return Err(StreamError::Mismatch("input has no frames".into()));
        }
        let dims = cameras[0].frame(0)?.dimensions();
        for (k, c) in cameras.iter().enumerate().skip(1) {
            let d = c.frame(0)?.dimensions();
            if d != dims {
                return Err(StreamError::Mismatch(format!(
                    "cam{k} frames are {d:?}, cam0 frames are {dims:?}"
                )));
            }
        }
        Ok(Self { cameras, dims })
    }
}

impl FrameSource for DirSource {
    fn camera_count(&self) -> usize {
        self.cameras.len()
    }

    fn len(&self) -> usize {
        self.cameras[0].len()
    }

    fn dimensions(&self) -> (u32, u32) {
        self.dims
    }

    fn bundle(&mut self, t: usize) -> Result<FrameBundle, StreamError> {
        let images = self.cameras.iter().map(|c| c.frame(t)).collect::<Result<Vec<_>, _>>()?;
        let b = FrameBundle::new(t, images);
        b.validate()?;
        if b.dimensions() != self.dims {
            return Err(StreamError::Mismatch(format!(
                "frame {t} is {:?}, expected {:?}",
                b.dimensions(),
                self.dims
            )));
        }
        Ok(b)
    }
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const SCENARIO_FILE: &str = "scenario.json";

/// Renders a scenario to `cam<k>/frame_%06d.png` plus `ground_truth.json`
/// and a copy of the scenario.
pub fn render_to_dir(scenario: &Scenario, seed: u64, out: &Path) -> Result<GroundTruth, PipelineError> {
    let mut r = Renderer::new(scenario, seed)?;
    let dirs: Vec<PathBuf> = (0..scenario.camera_count()).map(|k| camera_dir(out, k)).collect();
    for d in &dirs {
        fs::create_dir_all(d).map_err(|e| PipelineError::io(d, e))?;
    }
    let mut frames = Vec::with_capacity(scenario.duration);
    for t in 0..scenario.duration {
        let (imgs, truth) = r.render_frame(t)?;
        for (d, img) in dirs.iter().zip(&imgs) {
            write_frame(d, t, img)?;
        }
        frames.push(truth);
    }
    let gt = GroundTruth {
        scenario: scenario.name.clone(),
        seed,
        fps: scenario.fps,
        rig_move_frames: scenario.move_frames(),
        frames,
    };
    write_json(&out.join(GROUND_TRUTH_FILE), &gt)?;
    write_json(&out.join(SCENARIO_FILE), scenario)?;
    Ok(gt)
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Json(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| PipelineError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Json(format!("{}: {e}", path.display())))
}
