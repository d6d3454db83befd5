//! Synchronized multi-camera frame access.

use thiserror::Error;

use crate::image::Image;

/// One time index with one image per camera.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub t: usize,
    pub images: Vec<Image>,
    pub camera_ids: Vec<usize>,
}

impl FrameBundle {
    /// Bundle with camera ids `0..images.len()`.
    pub fn new(t: usize, images: Vec<Image>) -> Self {
        let camera_ids = (0..images.len()).collect();
        Self { t, images, camera_ids }
    }

    pub fn camera_count(&self) -> usize {
        self.images.len()
    }

    pub fn dimensions(&self) -> (u32, u32) {
        self.images.first().map(|i| i.dimensions()).unwrap_or((0, 0))
    }

    /// All images share one size and there are at least two cameras.
    pub fn validate(&self) -> Result<(), StreamError> {
        if self.images.len() < 2 {
            return Err(StreamError::TooFewCameras(self.images.len()));
        }
        if self.camera_ids.len() != self.images.len() {
            return Err(StreamError::Mismatch(format!(
                "{} camera ids for {} images",
                self.camera_ids.len(),
                self.images.len()
            )));
        }
        let dims = self.dimensions();
        if let Some(i) = self.images.iter().position(|im| im.dimensions() != dims) {
            return Err(StreamError::Mismatch(format!(
                "camera {} has size {:?}, expected {:?}",
                self.camera_ids[i],
                self.images[i].dimensions(),
                dims
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("need at least two cameras, got {0}")]
    TooFewCameras(usize),
    #[error("input mismatch: {0}")]
    Mismatch(String),
    #[error("frame {t} out of range (stream has {len} frames)")]
    OutOfRange { t: usize, len: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: ::image::ImageError,
    },
    #[error("simulator error: {0}")]
    Simulator(String),
}

/// Random access to a synchronized multi-camera stream.
pub trait FrameSource {
    fn camera_count(&self) -> usize;
    fn len(&self) -> usize;
    fn dimensions(&self) -> (u32, u32);
    fn bundle(&mut self, t: usize) -> Result<FrameBundle, StreamError>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// In-memory stream.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    pub bundles: Vec<FrameBundle>,
}

impl MemorySource {
    pub fn new(bundles: Vec<FrameBundle>) -> Self {
        Self { bundles }
    }

    /// Builds bundles from per-camera streams (`streams[camera][t]`).
    pub fn from_streams(streams: Vec<Vec<Image>>) -> Result<Self, StreamError> {
        let len = streams.first().map(Vec::len).unwrap_or(0);
        if streams.iter().any(|s| s.len() != len) {
            return Err(StreamError::Mismatch("per-camera frame counts differ".into()));
        }
        let mut iters: Vec<_> = streams.into_iter().map(|s| s.into_iter()).collect();
        let bundles = (0..len)
            .map(|t| FrameBundle::new(t, iters.iter_mut().map(|it| it.next().unwrap()).collect()))
            .collect();
        Ok(Self { bundles })
    }
}

impl FrameSource for MemorySource {
    fn camera_count(&self) -> usize {
        self.bundles.first().map(|b| b.camera_count()).unwrap_or(0)
    }

    fn len(&self) -> usize {
        self.bundles.len()
    }

    fn dimensions(&self) -> (u32, u32) {
        self.bundles.first().map(|b| b.dimensions()).unwrap_or((0, 0))
    }

    fn bundle(&mut self, t: usize) -> Result<FrameBundle, StreamError> {
        self.bundles.get(t).cloned().ok_or(StreamError::OutOfRange {
            t,
            len: self.bundles.len(),
        })
    }
}
