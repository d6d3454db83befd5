use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::SimulatorError;
use crate::geometry::{Homography, Point2};

/// Pinhole camera pose. The camera looks from `position` towards `look_at`;
/// `up` fixes the roll (image rows run opposite to it).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
    pub focal_px: f64,
}

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

/// Procedural texture of the `z = 0` plane: a grey checkerboard with smooth
/// noise and random blobs, plus a red disc standing in for the surgical field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaneSpec {
    pub width_m: f64,
    pub height_m: f64,
    pub texels_per_m: f64,
    pub cell_m: f64,
    pub blobs: usize,
    pub field_center_m: [f64; 2],
    pub field_radius_m: f64,
    pub texture_seed: u64,
}

impl Default for PlaneSpec {
    fn default() -> Self {
        Self {
            width_m: 1.6,
            height_m: 1.2,
            texels_per_m: 1000.0,
            cell_m: 0.05,
            blobs: 700,
            field_center_m: [0.0, 0.0],
            field_radius_m: 0.15,
            texture_seed: 7,
        }
    }
}

/// Occluder position at a frame, in image pixels of the affected cameras.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
}

/// A filled disc drawn over the listed cameras' views. Its centre follows a
/// piecewise-linear path through the keyframes and holds the first/last
/// position outside their range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub radius_px: f64,
    pub color: [u8; 3],
    pub trajectory: Vec<Keyframe>,
    pub cameras: Vec<usize>,
}

impl Occluder {
    pub fn center_at(&self, t: usize) -> Option<Point2> {
        let first = self.trajectory.first()?;
        let last = self.trajectory.last()?;
        if t <= first.frame {
            return Some(Point2::new(first.x, first.y));
        }
        if t >= last.frame {
            return Some(Point2::new(last.x, last.y));
        }
        let k = self
            .trajectory
            .windows(2)
            .find(|w| t >= w[0].frame && t <= w[1].frame)?;
        let span = (k[1].frame - k[0].frame).max(1) as f64;
        let a = (t - k[0].frame) as f64 / span;
        Some(Point2::new(
            k[0].x + a * (k[1].x - k[0].x),
            k[0].y + a * (k[1].y - k[0].y),
        ))
    }
}

/// Rigid motion of the whole rig about its centroid, starting at `frame` and
/// completed after `ramp_frames` frames (`0` = instantaneous).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigMove {
    pub frame: usize,
    /// Axis-angle rotation, radians.
    #[serde(default)]
    pub rotation: [f64; 3],
    /// Translation, metres.
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default)]
    pub ramp_frames: usize,
}

impl RigMove {
    fn progress(&self, t: usize) -> f64 {
        if t < self.frame {
            0.0
        } else if self.ramp_frames == 0 {
            1.0
        } else {
            ((t - self.frame + 1) as f64 / self.ramp_frames as f64).min(1.0)
        }
    }

    pub fn end_frame(&self) -> usize {
        self.frame + self.ramp_frames.saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub cameras: Vec<CameraPose>,
    #[serde(default)]
    pub plane: PlaneSpec,
    #[serde(default)]
    pub occluders: Vec<Occluder>,
    #[serde(default)]
    pub rig_moves: Vec<RigMove>,
    pub duration: usize,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    /// Uniform per-channel sensor noise amplitude, in intensity levels.
    #[serde(default)]
    pub noise: u8,
}

/// Camera intrinsics and world-to-camera rotation/translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub k: Matrix3<f64>,
    pub rotation: Matrix3<f64>,
    pub center: Vector3<f64>,
}

impl CameraModel {
    /// Homography from plane coordinates (metres on `z = 0`) to pixels.
    pub fn plane_to_image(&self) -> Matrix3<f64> {
        let t = -(self.rotation * self.center);
        let r = &self.rotation;
        let rt = Matrix3::new(
            r[(0, 0)],
            r[(0, 1)],
            t[0],
            r[(1, 0)],
            r[(1, 1)],
            t[1],
            r[(2, 0)],
            r[(2, 1)],
            t[2],
        );
        self.k * rt
    }

    /// Depth of a world point along the optical axis.
    pub fn depth(&self, world: Vector3<f64>) -> f64 {
        (self.rotation * (world - self.center))[2]
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimulatorError> {
        let bad = |m: String| Err(SimulatorError::InvalidScenario(m));
        if self.cameras.is_empty() {
            return bad("no cameras".into());
        }
        if self.duration == 0 {
            return bad("duration must be at least one frame".into());
        }
        if !(self.fps > 0.0) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if self.width < 32 || self.height < 32 {
            return bad(format!("image size {}x{} below 32x32", self.width, self.height));
        }
        if self.rig_moves.windows(2).any(|w| w[0].frame > w[1].frame) {
            return bad("rig moves are not sorted by frame".into());
        }
        let p = &self.plane;
        if !(p.width_m > 0.0 && p.height_m > 0.0 && p.texels_per_m > 0.0 && p.cell_m > 0.0) {
            return bad("plane extent, texel density and cell size must be positive".into());
        }
        for (i, o) in self.occluders.iter().enumerate() {
            if o.trajectory.is_empty() {
                return bad(format!("occluder {i} has no keyframes"));
            }
            if o.trajectory.windows(2).any(|w| w[0].frame > w[1].frame) {
                return bad(format!("occluder {i} keyframes not sorted"));
            }
            if let Some(c) = o.cameras.iter().find(|&&c| c >= self.cameras.len()) {
                return bad(format!("occluder {i} refers to camera {c}"));
            }
        }
        // Every pose the rig passes through must be valid.
        let mut checkpoints = vec![0];
        for m in &self.rig_moves {
            checkpoints.push(m.frame);
            checkpoints.push(m.end_frame());
        }
        for t in checkpoints {
            self.camera_models(t)?;
        }
        Ok(())
    }

    pub fn camera_count(&self) -> usize {
        self.cameras.len()
    }

    /// Camera models at frame `t`, with all rig moves applied.
    pub fn camera_models(&self, t: usize) -> Result<Vec<CameraModel>, SimulatorError> {
        let mut poses: Vec<(Vector3<f64>, Matrix3<f64>)> = self
            .cameras
            .iter()
            .enumerate()
            .map(|(i, c)| {
                base_orientation(c)
                    .map(|r| (Vector3::from(c.position), r))
                    .map_err(|e| SimulatorError::InvalidScenario(format!("camera {i}: {e}")))
            })
            .collect::<Result<_, _>>()?;
        for m in &self.rig_moves {
            let a = m.progress(t);
            if a == 0.0 {
                continue;
            }
            let centroid = poses.iter().map(|p| p.0).sum::<Vector3<f64>>() / poses.len() as f64;
            let rot = Rotation3::new(Vector3::from(m.rotation) * a).into_inner();
            let shift = Vector3::from(m.translation) * a;
            for p in poses.iter_mut() {
                p.0 = centroid + rot * (p.0 - centroid) + shift;
                p.1 *= rot.transpose();
            }
        }
        let models: Vec<CameraModel> = self
            .cameras
            .iter()
            .zip(poses)
            .map(|(c, (center, rotation))| CameraModel {
                k: Matrix3::new(
                    c.focal_px,
                    0.0,
                    (self.width as f64 - 1.0) / 2.0,
                    0.0,
                    c.focal_px,
                    (self.height as f64 - 1.0) / 2.0,
                    0.0,
                    0.0,
                    1.0,
                ),
                rotation,
                center,
            })
            .collect();
        for (i, m) in models.iter().enumerate() {
            if self.cameras[i].focal_px <= 0.0 {
                return Err(SimulatorError::InvalidScenario(format!(
                    "camera {i}: focal length must be positive"
                )));
            }
            if m.center[2] <= 0.0 {
                return Err(SimulatorError::InvalidScenario(format!(
                    "camera {i} is behind the plane at frame {t}"
                )));
            }
            // Every image corner must see the plane in front of the camera.
            let h = m.plane_to_image();
            let inv = h
                .try_inverse()
                .ok_or_else(|| SimulatorError::InvalidScenario(format!("camera {i}: degenerate view of the plane")))?;
            for (x, y) in [
                (0.0, 0.0),
                (self.width as f64 - 1.0, 0.0),
                (0.0, self.height as f64 - 1.0),
                (self.width as f64 - 1.0, self.height as f64 - 1.0),
            ] {
                let p = inv * Vector3::new(x, y, 1.0);
                let world = Vector3::new(p[0] / p[2], p[1] / p[2], 0.0);
                if !(p[2].abs() > 1e-12) || m.depth(world) <= 0.0 {
                    return Err(SimulatorError::InvalidScenario(format!(
                        "camera {i} does not look at the plane at frame {t}"
                    )));
                }
            }
        }
        Ok(models)
    }

    /// Plane-induced homographies mapping each camera's pixels into camera 0.
    pub fn ground_truth_homographies(&self, t: usize) -> Result<Vec<Homography>, SimulatorError> {
        let models = self.camera_models(t)?;
        let to_ref = models[0].plane_to_image();
        models
            .iter()
            .map(|m| {
                let inv = m
                    .plane_to_image()
                    .try_inverse()
                    .ok_or_else(|| SimulatorError::InvalidScenario("singular camera".into()))?;
                Homography::from_matrix(to_ref * inv).map_err(|e| SimulatorError::InvalidScenario(e.to_string()))
            })
            .collect()
    }

    /// Frames at which rig moves begin.
    pub fn move_frames(&self) -> Vec<usize> {
        self.rig_moves.iter().map(|m| m.frame).collect()
    }
}

fn base_orientation(c: &CameraPose) -> Result<Matrix3<f64>, String> {
    let pos = Vector3::from(c.position);
    let fwd = Vector3::from(c.look_at) - pos;
    if fwd.norm() < 1e-9 {
        return Err("look_at coincides with position".into());
    }
    let fwd = fwd.normalize();
    let right = fwd.cross(&Vector3::from(c.up));
    if right.norm() < 1e-9 {
        return Err("up vector is parallel to the viewing direction".into());
    }
    let right = right.normalize();
    let down = fwd.cross(&right);
    Ok(Matrix3::from_rows(&[
        right.transpose(),
        down.transpose(),
        fwd.transpose(),
    ]))
}
