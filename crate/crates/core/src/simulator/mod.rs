//! Ground-truth oracle: a pinhole rig watching a textured plane, with scripted
//! rig motion and occluder discs.
//!
//! Frames are rendered by inverse-mapping each pixel onto the plane and
//! sampling a procedural texture; ground-truth inter-camera homographies come
//! in closed form from the camera models, so they carry no estimation error.

mod render;
mod scenario;
mod texture;

use nalgebra::Vector3;
use thiserror::Error;

pub use render::{render, FrameTruth, GroundTruth, Renderer};
pub use scenario::{CameraModel, CameraPose, Keyframe, Occluder, PlaneSpec, RigMove, Scenario};
pub use texture::PlaneTexture;

use crate::geometry::{warp_point, Homography, Point2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulatorError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("frame {t} outside scenario of {duration} frames")]
    FrameOutOfRange { t: usize, duration: usize },
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
}

/// Colour used for occluder discs (surgical-gown green, outside the field hues).
pub const OCCLUDER_GREEN: [u8; 3] = [40, 110, 60];

const RIG_RADIUS_M: f64 = 0.18;
const RIG_HEIGHT_M: f64 = 1.0;
const ROLLS_DEG: [f64; 5] = [0.0, 4.0, -3.0, 6.0, -5.0];
const FOCAL_SCALE: [f64; 5] = [1.0, 1.02, 0.985, 1.03, 0.97];

/// Five cameras on a pentagon above the plane centre, all aimed at the origin,
/// with small roll and focal-length differences between them.
pub fn pentagon_rig(width: u32) -> Vec<CameraPose> {
    let focal = 760.0 * width as f64 / 640.0;
    (0..5)
        .map(|i| {
            let a = (90.0 + 72.0 * i as f64).to_radians();
            let roll = ROLLS_DEG[i].to_radians();
            CameraPose {
                position: [RIG_RADIUS_M * a.cos(), RIG_RADIUS_M * a.sin(), RIG_HEIGHT_M],
                look_at: [0.0, 0.0, 0.0],
                up: [roll.sin(), roll.cos(), 0.0],
                focal_px: focal * FOCAL_SCALE[i],
            }
        })
        .collect()
}

/// Scenario with the default rig and plane and nothing happening.
pub fn base_scenario(name: &str, width: u32, height: u32, duration: usize, fps: f64) -> Scenario {
    Scenario {
        name: name.to_string(),
        cameras: pentagon_rig(width),
        plane: PlaneSpec::default(),
        occluders: Vec::new(),
        rig_moves: Vec::new(),
        duration,
        fps,
        width,
        height,
        noise: 2,
    }
}

/// An occluder that slides in over the field centre of one camera, stays for
/// `[start + 20, end - 20]` and slides out again by `end`.
pub fn passing_occluder(camera: usize, start: usize, end: usize, width: u32, height: u32) -> Occluder {
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let radius = 0.27 * width as f64;
    let off = -radius - 10.0;
    Occluder {
        radius_px: radius,
        color: OCCLUDER_GREEN,
        trajectory: vec![
            Keyframe {
                frame: start,
                x: off,
                y: cy,
            },
            Keyframe {
                frame: start + 20,
                x: cx,
                y: cy,
            },
            Keyframe {
                frame: end - 20,
                x: cx,
                y: cy,
            },
            Keyframe {
                frame: end,
                x: off,
                y: cy,
            },
        ],
        cameras: vec![camera],
    }
}

/// The rig motion used by the built-in scenarios: a tilt of a few degrees
/// combined with a pull towards the plane.
pub fn light_move(frame: usize, scale: f64) -> RigMove {
    RigMove {
        frame,
        rotation: [(4.0f64).to_radians() * scale, 0.0, 0.0],
        translation: [0.0, 0.03 * scale, -0.12 * scale],
        ramp_frames: 0,
    }
}

/// Built-in scenarios: `static`, `one-move`, `occluded-then-clear` and
/// `two-moves-20min`.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let (w, h) = (640, 480);
    let static_ = base_scenario("static", w, h, 900, 30.0);

    let mut one_move = base_scenario("one-move", w, h, 1800, 30.0);
    one_move.rig_moves.push(light_move(900, 1.0));
    for (cam, start, end) in [
        (0, 150, 330),
        (2, 400, 560),
        (1, 620, 800),
        (3, 1080, 1260),
        (4, 1300, 1450),
        (0, 1500, 1700),
    ] {
        one_move.occluders.push(passing_occluder(cam, start, end, w, h));
    }

    let mut clear = base_scenario("occluded-then-clear", w, h, 1800, 30.0);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    for (cam, dy) in [(1usize, -20.0), (3, 25.0)] {
        clear.occluders.push(Occluder {
            radius_px: 0.3 * w as f64,
            color: OCCLUDER_GREEN,
            trajectory: vec![
                Keyframe {
                    frame: 0,
                    x: cx - 30.0,
                    y: cy + dy,
                },
                Keyframe {
                    frame: 600,
                    x: cx + 30.0,
                    y: cy - dy,
                },
                Keyframe {
                    frame: 1170,
                    x: cx,
                    y: cy,
                },
                Keyframe {
                    frame: 1200,
                    x: -0.3 * w as f64 - 10.0,
                    y: cy,
                },
            ],
            cameras: vec![cam],
        });
    }

    // One frame per second keeps 25 simulated minutes affordable.
    let (sw, sh) = (320, 240);
    let mut two = base_scenario("two-moves-20min", sw, sh, 1500, 1.0);
    two.rig_moves.push(light_move(240, 1.0));
    two.rig_moves.push(RigMove {
        frame: 900,
        rotation: [0.0, (-4.0f64).to_radians(), 0.0],
        translation: [0.02, 0.0, 0.1],
        ramp_frames: 0,
    });

    vec![static_, one_move, clear, two]
}

pub fn builtin_scenario(name: &str) -> Result<Scenario, SimulatorError> {
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| SimulatorError::UnknownScenario(name.to_string()))
}

/// Mean pairwise distance, in the reference image, between the aligned images
/// of the same plane point seen by two cameras. With `maps` equal to the
/// ground-truth homographies this is zero; with stale maps after a rig move it
/// is the misalignment a perfect feature matcher would measure.
pub fn expected_misalignment(scenario: &Scenario, t: usize, maps: &[Homography]) -> Result<f64, SimulatorError> {
    let models = scenario.camera_models(t)?;
    let to_plane = models[0]
        .plane_to_image()
        .try_inverse()
        .ok_or_else(|| SimulatorError::InvalidScenario("singular reference camera".into()))?;
    let to_img: Vec<_> = models.iter().map(|m| m.plane_to_image()).collect();
    let (w, h) = (scenario.width as f64, scenario.height as f64);
    let inside = |p: &Point2| p.x >= 0.0 && p.y >= 0.0 && p.x <= w - 1.0 && p.y <= h - 1.0;
    let step = (w / 32.0).max(4.0);
    let (mut sum, mut n) = (0.0, 0usize);
    let mut y = step / 2.0;
    while y < h {
        let mut x = step / 2.0;
        while x < w {
            let p = to_plane * Vector3::new(x, y, 1.0);
            let plane = Vector3::new(p[0] / p[2], p[1] / p[2], 1.0);
            let aligned: Option<Vec<Point2>> = to_img
                .iter()
                .zip(maps)
                .map(|(hm, m)| {
                    let q = hm * plane;
                    let q = Point2::new(q[0] / q[2], q[1] / q[2]);
                    if !inside(&q) {
                        return None;
                    }
                    warp_point(m, q).ok().filter(inside)
                })
                .collect();
            if let Some(a) = aligned {
                for i in 0..a.len() {
                    for j in i + 1..a.len() {
                        sum += a[i].distance(&a[j]);
                        n += 1;
                    }
                }
            }
            x += step;
        }
        y += step;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_validate() {
        for s in builtin_scenarios() {
            s.validate().unwrap_or_else(|e| panic!("{}: {e}", s.name));
        }
        assert!(builtin_scenario("nope").is_err());
    }

    #[test]
    fn reference_homography_is_identity() {
        let s = builtin_scenario("one-move").unwrap();
        for t in [0, 899, 900, 1799] {
            let hs = s.ground_truth_homographies(t).unwrap();
            assert!(hs[0].max_abs_diff(&Homography::identity()) < 1e-9);
        }
    }

    #[test]
    fn stale_maps_after_move_are_misaligned() {
        let s = builtin_scenario("one-move").unwrap();
        let before = s.ground_truth_homographies(0).unwrap();
        assert!(expected_misalignment(&s, 0, &before).unwrap() < 1e-6);
        let stale = expected_misalignment(&s, 900, &before).unwrap();
        assert!(stale > 8.0, "stale misalignment {stale}");
        let after = s.ground_truth_homographies(900).unwrap();
        assert!(expected_misalignment(&s, 900, &after).unwrap() < 1e-6);
    }

    #[test]
    fn invalid_scenarios() {
        let mut s = base_scenario("x", 64, 48, 10, 30.0);
        s.cameras[1].position = [0.0, 0.0, -1.0];
        assert!(matches!(s.validate(), Err(SimulatorError::InvalidScenario(_))));

        let mut s = base_scenario("x", 64, 48, 10, 30.0);
        s.cameras[2].look_at = s.cameras[2].position;
        assert!(matches!(s.validate(), Err(SimulatorError::InvalidScenario(_))));

        let mut s = base_scenario("x", 64, 48, 10, 30.0);
        s.rig_moves = vec![light_move(5, 1.0), light_move(2, 1.0)];
        assert!(matches!(s.validate(), Err(SimulatorError::InvalidScenario(_))));

        let mut s = base_scenario("x", 64, 48, 10, 30.0);
        s.rig_moves = vec![RigMove {
            frame: 3,
            rotation: [0.0; 3],
            translation: [0.0, 0.0, -2.0],
            ramp_frames: 0,
        }];
        assert!(matches!(s.validate(), Err(SimulatorError::InvalidScenario(_))));
    }

    #[test]
    fn occluder_path_interpolates_and_holds() {
        let o = passing_occluder(0, 100, 200, 640, 480);
        assert_eq!(o.center_at(0), o.center_at(100));
        assert_eq!(o.center_at(150).unwrap(), Point2::new(319.5, 239.5));
        let mid = o.center_at(110).unwrap();
        assert!(mid.x > o.center_at(100).unwrap().x && mid.x < 319.5);
        assert_eq!(o.center_at(5000), o.center_at(200));
    }
}
