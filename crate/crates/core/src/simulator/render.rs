use nalgebra::{Matrix3, Vector3};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{CameraModel, Scenario};
use super::texture::PlaneTexture;
use super::SimulatorError;
use crate::geometry::{sample_bilinear, Homography};
use crate::image::Image;
use crate::stream::{FrameBundle, FrameSource, StreamError};

/// Ground truth for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    /// Plane-induced homography from each camera into camera 0.
    pub homographies: Vec<Homography>,
    /// Fraction of each image covered by occluder discs.
    pub occluded_fraction: Vec<f64>,
    /// Visible (unoccluded) field pixels per camera.
    pub field_pixels: Vec<u64>,
}

/// Ground truth for a whole rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    pub seed: u64,
    pub fps: f64,
    pub rig_move_frames: Vec<usize>,
    pub frames: Vec<FrameTruth>,
}

struct BaseView {
    key: [u64; 12],
    image: Image,
    field: Vec<bool>,
}

fn pose_key(m: &CameraModel) -> [u64; 12] {
    let mut k = [0u64; 12];
    for (i, v) in m.rotation.iter().chain(m.center.iter()).enumerate() {
        k[i] = v.to_bits();
    }
    k
}

/// Renders frames of a scenario on demand. The noise-free view of the plane is
/// cached per camera pose, so static stretches only pay for occluders and noise.
pub struct Renderer {
    scenario: Scenario,
    seed: u64,
    texture: PlaneTexture,
    cache: Vec<Option<BaseView>>,
}

impl Renderer {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self, SimulatorError> {
        scenario.validate()?;
        Ok(Self {
            scenario: scenario.clone(),
            seed,
            texture: PlaneTexture::generate(&scenario.plane),
            cache: (0..scenario.camera_count()).map(|_| None).collect(),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn texture(&self) -> &PlaneTexture {
        &self.texture
    }

    fn base_view(&mut self, cam: usize, model: &CameraModel) -> &BaseView {
        let key = pose_key(model);
        let stale = self.cache[cam].as_ref().is_none_or(|b| b.key != key);
        if stale {
            let (image, field) = render_plane(&self.texture, model, self.scenario.width, self.scenario.height);
            self.cache[cam] = Some(BaseView { key, image, field });
        }
        self.cache[cam].as_ref().unwrap()
    }

    /// Renders every camera at frame `t` and reports that frame's ground truth.
    pub fn render_frame(&mut self, t: usize) -> Result<(Vec<Image>, FrameTruth), SimulatorError> {
        if t >= self.scenario.duration {
            return Err(SimulatorError::FrameOutOfRange {
                t,
                duration: self.scenario.duration,
            });
        }
        let models = self.scenario.camera_models(t)?;
        let homographies = self.scenario.ground_truth_homographies(t)?;
        let (w, h) = (self.scenario.width, self.scenario.height);
        let area = (w as u64 * h as u64) as f64;
        let noise = self.scenario.noise;
        let occluders = self.scenario.occluders.clone();
        let seed = self.seed;
        let mut images = Vec::with_capacity(models.len());
        let mut occluded_fraction = Vec::with_capacity(models.len());
        let mut field_pixels = Vec::with_capacity(models.len());
        for (cam, model) in models.iter().enumerate() {
            let base = self.base_view(cam, model);
            let mut img = base.image.clone();
            let mut covered = vec![false; (w * h) as usize];
            for o in occluders.iter().filter(|o| o.cameras.contains(&cam)) {
                let Some(c) = o.center_at(t) else { continue };
                let r = o.radius_px;
                let x0 = (c.x - r).floor().max(0.0);
                let y0 = (c.y - r).floor().max(0.0);
                let x1 = (c.x + r).ceil().min(w as f64 - 1.0);
                let y1 = (c.y + r).ceil().min(h as f64 - 1.0);
                if x0 > x1 || y0 > y1 {
                    continue;
                }
                for y in y0 as u32..=y1 as u32 {
                    for x in x0 as u32..=x1 as u32 {
                        if (x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2) <= r * r {
                            covered[(y * w + x) as usize] = true;
                            img.put_pixel(x, y, ::image::Rgb(o.color));
                        }
                    }
                }
            }
            let n_cov = covered.iter().filter(|&&c| c).count();
            let n_field = base.field.iter().zip(&covered).filter(|(&f, &c)| f && !c).count();
            if noise > 0 {
                add_noise(&mut img, noise, frame_seed(seed, t, cam));
            }
            images.push(img);
            occluded_fraction.push(n_cov as f64 / area);
            field_pixels.push(n_field as u64);
        }
        Ok((
            images,
            FrameTruth {
                homographies,
                occluded_fraction,
                field_pixels,
            },
        ))
    }

    pub fn truth_at(&mut self, t: usize) -> Result<FrameTruth, SimulatorError> {
        self.render_frame(t).map(|(_, truth)| truth)
    }
}

impl FrameSource for Renderer {
    fn camera_count(&self) -> usize {
        self.scenario.camera_count()
    }

    fn len(&self) -> usize {
        self.scenario.duration
    }

    fn dimensions(&self) -> (u32, u32) {
        (self.scenario.width, self.scenario.height)
    }

    fn bundle(&mut self, t: usize) -> Result<FrameBundle, StreamError> {
        match self.render_frame(t) {
            Ok((images, _)) => Ok(FrameBundle::new(t, images)),
            Err(SimulatorError::FrameOutOfRange { t, duration }) => Err(StreamError::OutOfRange { t, len: duration }),
            Err(e) => Err(StreamError::Simulator(e.to_string())),
        }
    }
}

fn frame_seed(seed: u64, t: usize, cam: usize) -> u64 {
    // splitmix-style mixing keeps per-frame streams independent of render order
    let mut z =
        seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (cam as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn add_noise(img: &mut Image, level: u8, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = 2 * level as i32 + 1;
    let raw: &mut [u8] = img.as_mut();
    let mut bytes = vec![0u8; raw.len()];
    rng.fill_bytes(&mut bytes);
    for (p, b) in raw.iter_mut().zip(bytes) {
        let n = ((b as i32 * span) >> 8) - level as i32;
        *p = (*p as i32 + n).clamp(0, 255) as u8;
    }
}

/// Noise-free view of the textured plane and its field mask.
fn render_plane(tex: &PlaneTexture, model: &CameraModel, w: u32, h: u32) -> (Image, Vec<bool>) {
    let to_plane: Matrix3<f64> = model
        .plane_to_image()
        .try_inverse()
        .expect("validated camera sees the plane");
    let mut img = Image::new(w, h);
    let mut field = vec![false; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let p = to_plane * Vector3::new(x as f64, y as f64, 1.0);
            let (xm, ym) = (p[0] / p[2], p[1] / p[2]);
            let (tx, ty) = tex.texel(xm, ym);
            // texel centres sit at half-integers
            if let Some(rgb) = sample_bilinear(&tex.image, tx - 0.5, ty - 0.5) {
                img.put_pixel(
                    x,
                    y,
                    ::image::Rgb([(rgb[0] + 0.5) as u8, (rgb[1] + 0.5) as u8, (rgb[2] + 0.5) as u8]),
                );
            }
            field[(y * w + x) as usize] = tex.in_field(xm, ym);
        }
    }
    (img, field)
}

/// Renders the whole scenario into memory. Only suitable for short scenarios.
pub fn render(scenario: &Scenario, seed: u64) -> Result<(Vec<Vec<Image>>, GroundTruth), SimulatorError> {
    let mut r = Renderer::new(scenario, seed)?;
    let mut streams: Vec<Vec<Image>> = vec![Vec::with_capacity(scenario.duration); scenario.camera_count()];
    let mut frames = Vec::with_capacity(scenario.duration);
    for t in 0..scenario.duration {
        let (imgs, truth) = r.render_frame(t)?;
        for (s, img) in streams.iter_mut().zip(imgs) {
            s.push(img);
        }
        frames.push(truth);
    }
    Ok((
        streams,
        GroundTruth {
            scenario: scenario.name.clone(),
            seed,
            fps: scenario.fps,
            rig_move_frames: scenario.move_frames(),
            frames,
        },
    ))
}
