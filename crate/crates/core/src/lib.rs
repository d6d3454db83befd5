//! Virtual single-view video from a rig of synchronized cameras watching a
//! roughly planar scene.
//!
//! The crate is organised around the processing chain:
//!
//! - [`geometry`]: homographies, DLT / RANSAC estimation and image warping.
//! - [`features`]: difference-of-Gaussians keypoints, gradient-histogram
//!   descriptors and ratio-test matching.
//! - [`alignment`]: correspondence accumulation and per-camera maps into the
//!   reference camera.
//! - [`movement`]: the misalignment signal, its denoising, the clustered
//!   threshold and the camera-movement frame.
//! - [`rehoming`]: hue-segmented field areas, their agreement score and the
//!   frame at which homographies may be re-estimated.
//! - [`selection`]: occlusion scores, switch planning and output synthesis.
//! - [`metrics`]: PSNR, ITF and AvSpeed.
//! - [`simulator`]: a pinhole renderer of a textured plane with scripted rig
//!   motion and occluders, used as a ground-truth oracle.
//! - [`pipeline`]: the end-to-end loop, configuration, frame I/O and event log.
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod alignment;
pub mod features;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod movement;
pub mod pipeline;
pub mod rehoming;
pub mod selection;
pub mod simulator;
pub mod stream;

pub use crate::geometry::{CorrespondenceSet, Homography, Point2};
pub use crate::image::Image;
