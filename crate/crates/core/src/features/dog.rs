//! Difference-of-Gaussians detector with gradient-histogram descriptors.

use std::f64::consts::PI;

use super::{Descriptor, DetectorConfig, FeatureError, Keypoint, KeypointSet, DESCRIPTOR_LEN, MIN_IMAGE_SIDE};
use crate::geometry::Point2;
use crate::image::{GrayImage, Image};

/// Blur already present in a camera image.
const INPUT_BLUR: f64 = 0.5;
/// Pixels skipped at every octave border.
const BORDER: usize = 5;
const ORI_BINS: usize = 36;
const ORI_PEAK_RATIO: f64 = 0.8;
const ORI_SIGMA_FACTOR: f64 = 1.5;
const DESC_WIDTH: usize = 4;
const DESC_BINS: usize = 8;
const DESC_SCALE_FACTOR: f64 = 3.0;
const DESC_CLAMP: f32 = 0.2;

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k.into_iter().map(|v| v as f32).collect()
}

/// Separable Gaussian blur with replicated borders.
fn blur(img: &GrayImage, sigma: f64) -> GrayImage {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (w, h) = (img.width, img.height);
    let mut tmp = GrayImage::new(w, h);
    let mut padded = vec![0.0f32; w + 2 * r as usize];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            let x = (i as isize - r).clamp(0, w as isize - 1) as usize;
            *p = row[x];
        }
        let out = &mut tmp.data[y * w..(y + 1) * w];
        for (t, &kv) in k.iter().enumerate() {
            for (o, s) in out.iter_mut().zip(&padded[t..t + w]) {
                *o += kv * s;
            }
        }
    }
    let mut out = GrayImage::new(w, h);
    for y in 0..h {
        let dst = &mut out.data[y * w..(y + 1) * w];
        for (ki, &kv) in k.iter().enumerate() {
            let sy = (y as isize + ki as isize - r).clamp(0, h as isize - 1) as usize;
            let src = &tmp.data[sy * w..(sy + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

struct Octave {
    gauss: Vec<GrayImage>,
    dog: Vec<GrayImage>,
}

fn build_pyramid(gray: &GrayImage, cfg: &DetectorConfig) -> Vec<Octave> {
    let s = cfg.scales_per_octave;
    let k = 2f64.powf(1.0 / s as f64);
    let init = (cfg.sigma * cfg.sigma - INPUT_BLUR * INPUT_BLUR).max(0.01).sqrt();
    let mut base = blur(gray, init);
    let mut octaves = Vec::new();
    for o in 0..cfg.octaves {
        if o > 0 {
            let prev: &Octave = octaves.last().unwrap();
            base = prev.gauss[s].downsample2();
        }
        if base.width < 2 * BORDER + 3 || base.height < 2 * BORDER + 3 {
            break;
        }
        let mut gauss = vec![base.clone()];
        for i in 1..s + 3 {
            let prev = cfg.sigma * k.powi(i as i32 - 1);
            let total = prev * k;
            let g = blur(&gauss[i - 1], (total * total - prev * prev).sqrt());
            gauss.push(g);
        }
        let dog = gauss
            .windows(2)
            .map(|w| GrayImage {
                width: w[0].width,
                height: w[0].height,
                data: w[1].data.iter().zip(&w[0].data).map(|(a, b)| a - b).collect(),
            })
            .collect();
        octaves.push(Octave { gauss, dog });
    }
    octaves
}

struct Candidate {
    octave: usize,
    layer: usize,
    x: usize,
    y: usize,
    /// Sub-pixel offsets in (x, y, layer).
    offset: [f64; 3],
    response: f64,
}

fn is_extremum(dog: &[GrayImage], layer: usize, x: usize, y: usize) -> bool {
    let w = dog[layer].width;
    let c = y * w + x;
    let v = dog[layer].data[c];
    let offsets = [c - w - 1, c - w, c - w + 1, c - 1, c + 1, c + w - 1, c + w, c + w + 1];
    let mid = &dog[layer].data;
    let (lo, hi) = (&dog[layer - 1].data, &dog[layer + 1].data);
    if v > 0.0 {
        offsets.iter().all(|&i| mid[i] < v) && lo[c] < v && hi[c] < v && offsets.iter().all(|&i| lo[i] < v && hi[i] < v)
    } else {
        offsets.iter().all(|&i| mid[i] > v) && lo[c] > v && hi[c] > v && offsets.iter().all(|&i| lo[i] > v && hi[i] > v)
    }
}

/// Quadratic fit of the DoG around a discrete extremum.
fn refine(
    dog: &[GrayImage],
    octave: usize,
    mut layer: usize,
    mut x: usize,
    mut y: usize,
    cfg: &DetectorConfig,
) -> Option<Candidate> {
    let s = cfg.scales_per_octave;
    let (w, h) = (dog[0].width, dog[0].height);
    for _ in 0..5 {
        let d = |l: usize, xx: usize, yy: usize| dog[l].get(xx, yy) as f64;
        let v = d(layer, x, y);
        let g = [
            0.5 * (d(layer, x + 1, y) - d(layer, x - 1, y)),
            0.5 * (d(layer, x, y + 1) - d(layer, x, y - 1)),
            0.5 * (d(layer + 1, x, y) - d(layer - 1, x, y)),
        ];
        let dxx = d(layer, x + 1, y) + d(layer, x - 1, y) - 2.0 * v;
        let dyy = d(layer, x, y + 1) + d(layer, x, y - 1) - 2.0 * v;
        let dss = d(layer + 1, x, y) + d(layer - 1, x, y) - 2.0 * v;
        let dxy =
            0.25 * (d(layer, x + 1, y + 1) - d(layer, x - 1, y + 1) - d(layer, x + 1, y - 1) + d(layer, x - 1, y - 1));
        let dxs =
            0.25 * (d(layer + 1, x + 1, y) - d(layer + 1, x - 1, y) - d(layer - 1, x + 1, y) + d(layer - 1, x - 1, y));
        let dys =
            0.25 * (d(layer + 1, x, y + 1) - d(layer + 1, x, y - 1) - d(layer - 1, x, y + 1) + d(layer - 1, x, y - 1));
        let hess = nalgebra::Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
        let inv = hess.try_inverse()?;
        let off = -(inv * nalgebra::Vector3::new(g[0], g[1], g[2]));
        if off.iter().all(|o| o.abs() < 0.5) {
            let response = v + 0.5 * (g[0] * off[0] + g[1] * off[1] + g[2] * off[2]);
            if response.abs() < cfg.contrast_threshold / s as f64 {
                return None;
            }
            let tr = dxx + dyy;
            let det = dxx * dyy - dxy * dxy;
            let r = cfg.edge_threshold;
            if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
                return None;
            }
            return Some(Candidate {
                octave,
                layer,
                x,
                y,
                offset: [off[0], off[1], off[2]],
                response: response.abs(),
            });
        }
        let nx = x as f64 + off[0].round();
        let ny = y as f64 + off[1].round();
        let nl = layer as f64 + off[2].round();
        if nl < 1.0
            || nl > s as f64
            || nx < BORDER as f64
            || ny < BORDER as f64
            || nx >= (w - BORDER) as f64
            || ny >= (h - BORDER) as f64
        {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        layer = nl as usize;
    }
    None
}

/// Gradient magnitude and direction of one smoothed layer. Border pixels are zero.
struct GradField {
    width: usize,
    height: usize,
    mag: Vec<f32>,
    ang: Vec<f32>,
}

impl GradField {
    fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width, img.height);
        let mut mag = vec![0.0f32; w * h];
        let mut ang = vec![0.0f32; w * h];
        for y in 1..h.saturating_sub(1) {
            for x in 1..w - 1 {
                let i = y * w + x;
                let dx = img.data[i + 1] - img.data[i - 1];
                let dy = img.data[i + w] - img.data[i - w];
                mag[i] = (dx * dx + dy * dy).sqrt();
                ang[i] = fast_angle(dy, dx);
            }
        }
        Self {
            width: w,
            height: h,
            mag,
            ang,
        }
    }
}

/// Polynomial atan2 mapped to `[0, 2π)`; absolute error below 0.0015 rad.
#[inline]
fn fast_angle(y: f32, x: f32) -> f32 {
    const TAU: f32 = std::f32::consts::TAU;
    let ax = x.abs();
    let ay = y.abs();
    let (mn, mx) = if ax < ay { (ax, ay) } else { (ay, ax) };
    if mx == 0.0 {
        return 0.0;
    }
    let a = mn / mx;
    let s = a * a;
    let mut r = ((-0.046_496_473 * s + 0.159_314_22) * s - 0.327_622_77) * s * a + a;
    if ay > ax {
        r = std::f32::consts::FRAC_PI_2 - r;
    }
    if x < 0.0 {
        r = std::f32::consts::PI - r;
    }
    if y < 0.0 {
        r = -r;
    }
    if r < 0.0 {
        r += TAU;
    }
    r
}

/// `exp(-d² · c)` for `d` in `-radius..=radius`.
fn gauss_table(radius: isize, c: f64) -> Vec<f32> {
    (-radius..=radius).map(|d| (-(d * d) as f64 * c).exp() as f32).collect()
}

fn orientations(img: &GradField, x: usize, y: usize, scale: f64) -> Vec<f64> {
    let sigma = ORI_SIGMA_FACTOR * scale;
    let radius = (3.0 * sigma).round() as isize;
    let mut hist = [0.0f64; ORI_BINS];
    let (w, h) = (img.width as isize, img.height as isize);
    let table = gauss_table(radius, 1.0 / (2.0 * sigma * sigma));
    let bin_scale = ORI_BINS as f32 / std::f32::consts::TAU;
    for dy in -radius..=radius {
        let yy = y as isize + dy;
        if yy <= 0 || yy >= h - 1 {
            continue;
        }
        let wy = table[(dy + radius) as usize];
        for dx in -radius..=radius {
            let xx = x as isize + dx;
            if xx <= 0 || xx >= w - 1 || dx * dx + dy * dy > radius * radius {
                continue;
            }
            let i = yy as usize * img.width + xx as usize;
            let (mag, ang) = (img.mag[i], img.ang[i]);
            let weight = wy * table[(dx + radius) as usize];
            let bin = ((ang * bin_scale + 0.5) as usize) % ORI_BINS;
            hist[bin] += (weight * mag) as f64;
        }
    }
    for _ in 0..2 {
        let prev = hist;
        for i in 0..ORI_BINS {
            let l = prev[(i + ORI_BINS - 1) % ORI_BINS];
            let r = prev[(i + 1) % ORI_BINS];
            hist[i] = 0.25 * l + 0.5 * prev[i] + 0.25 * r;
        }
    }
    let max = hist.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..ORI_BINS {
        let l = hist[(i + ORI_BINS - 1) % ORI_BINS];
        let r = hist[(i + 1) % ORI_BINS];
        let c = hist[i];
        if c > l && c > r && c >= ORI_PEAK_RATIO * max {
            let interp = 0.5 * (l - r) / (l - 2.0 * c + r);
            let bin = i as f64 + interp;
            out.push((bin / ORI_BINS as f64 * 2.0 * PI).rem_euclid(2.0 * PI));
        }
    }
    out
}

fn describe(img: &GradField, x: f64, y: f64, scale: f64, angle: f64) -> Descriptor {
    let d = DESC_WIDTH as f64;
    let n = DESC_BINS as f64;
    let hist_width = DESC_SCALE_FACTOR * scale;
    let radius = (hist_width * std::f64::consts::SQRT_2 * (d + 1.0) * 0.5).round() as isize;
    let (cos_t, sin_t) = (angle.cos(), angle.sin());
    let mut hist = [0.0f32; (DESC_WIDTH + 2) * (DESC_WIDTH + 2) * (DESC_BINS + 2)];
    let idx = |r: usize, c: usize, o: usize| (r * (DESC_WIDTH + 2) + c) * (DESC_BINS + 2) + o;
    // The window weight is rotation invariant, so it separates over dx, dy.
    let table = gauss_table(radius, 1.0 / (d * d * 0.5 * hist_width * hist_width));
    let xi = x.round() as isize;
    let yi = y.round() as isize;
    let (w, h) = (img.width as isize, img.height as isize);
    let (cos_t, sin_t) = ((cos_t / hist_width) as f32, (sin_t / hist_width) as f32);
    let half = (d / 2.0 - 0.5) as f32;
    let df = d as f32;
    let bin_scale = n as f32 / std::f32::consts::TAU;
    let angle = angle as f32;
    for dy in -radius..=radius {
        let yy = yi + dy;
        if yy <= 0 || yy >= h - 1 {
            continue;
        }
        let wy = table[(dy + radius) as usize];
        for dx in -radius..=radius {
            let rx = cos_t * dx as f32 + sin_t * dy as f32;
            let ry = -sin_t * dx as f32 + cos_t * dy as f32;
            // bin coordinates shifted by the padding cell; checked after the
            // shift because `x + 1.0` can round up to the excluded bound
            let rp = ry + half + 1.0;
            let cp = rx + half + 1.0;
            if !(rp > 0.0 && rp < df + 1.0 && cp > 0.0 && cp < df + 1.0) {
                continue;
            }
            let xx = xi + dx;
            if xx <= 0 || xx >= w - 1 {
                continue;
            }
            let i = yy as usize * img.width + xx as usize;
            let mag = img.mag[i];
            let mut ori = img.ang[i] - angle;
            if ori < 0.0 {
                ori += std::f32::consts::TAU;
            }
            let weight = wy * table[(dx + radius) as usize] * mag;
            let obin = ori * bin_scale;

            // truncation equals floor here: rp, cp > 0 and obin ≥ 0
            let (ri, ci) = (rp as usize, cp as usize);
            let o0 = (obin as i32) as f32;
            let (fr, fc, fo) = (rp - ri as f32, cp - ci as f32, obin - o0);
            // the padded histogram has one spare cell on each side, and two
            // spare orientation bins that are folded back below
            let o = o0 as usize;
            let base = idx(ri, ci, o);
            let row = (DESC_WIDTH + 2) * (DESC_BINS + 2);
            let col = DESC_BINS + 2;
            let v_r1 = weight * fr;
            let v_r0 = weight - v_r1;
            let v_00 = v_r0 * (1.0 - fc);
            let v_01 = v_r0 - v_00;
            let v_10 = v_r1 * (1.0 - fc);
            let v_11 = v_r1 - v_10;
            for (off, v) in [(0, v_00), (col, v_01), (row, v_10), (row + col, v_11)] {
                let hi = v * fo;
                hist[base + off] += v - hi;
                hist[base + off + 1] += hi;
            }
        }
    }
    let mut desc = [0.0f32; DESCRIPTOR_LEN];
    let mut k = 0;
    for r in 1..=DESC_WIDTH {
        for c in 1..=DESC_WIDTH {
            for o in 0..DESC_BINS {
                desc[k] = hist[idx(r, c, o)];
                if o < 2 {
                    desc[k] += hist[idx(r, c, o + DESC_BINS)];
                }
                k += 1;
            }
        }
    }
    normalize(&mut desc);
    desc.iter_mut().for_each(|v| *v = v.min(DESC_CLAMP));
    normalize(&mut desc);
    desc
}

fn normalize(d: &mut Descriptor) {
    let norm = d.iter().map(|v| v * v).sum::<f32>().sqrt();
    if norm > 0.0 {
        d.iter_mut().for_each(|v| *v /= norm);
    }
}

/// Detects difference-of-Gaussians extrema and describes each with a
/// 4×4×8 gradient histogram. Output is capped at `cfg.max_keypoints`,
/// strongest response first, ties broken by position then orientation.
pub fn detect_and_describe(img: &Image, cfg: &DetectorConfig) -> Result<KeypointSet, FeatureError> {
    let (w, h) = img.dimensions();
    if w < MIN_IMAGE_SIDE || h < MIN_IMAGE_SIDE {
        return Err(FeatureError::ImageTooSmall {
            width: w,
            height: h,
            min: MIN_IMAGE_SIDE,
        });
    }
    let gray = GrayImage::from_rgb(img);
    let pyramid = build_pyramid(&gray, cfg);
    let s = cfg.scales_per_octave;
    let prefilter = (0.5 * cfg.contrast_threshold / s as f64) as f32;

    let mut candidates = Vec::new();
    for (o, oct) in pyramid.iter().enumerate() {
        let (ow, oh) = (oct.dog[0].width, oct.dog[0].height);
        for layer in 1..=s {
            let img = &oct.dog[layer];
            for y in BORDER..oh - BORDER {
                for x in BORDER..ow - BORDER {
                    let v = img.data[y * ow + x];
                    if v.abs() <= prefilter || !is_extremum(&oct.dog, layer, x, y) {
                        continue;
                    }
                    if let Some(c) = refine(&oct.dog, o, layer, x, y, cfg) {
                        candidates.push(c);
                    }
                }
            }
        }
    }
    let position = |c: &Candidate| {
        let f = (1usize << c.octave) as f64;
        Point2::new((c.x as f64 + c.offset[0]) * f, (c.y as f64 + c.offset[1]) * f)
    };
    candidates.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then_with(|| position(a).x.total_cmp(&position(b).x))
            .then_with(|| position(a).y.total_cmp(&position(b).y))
    });

    let mut grads: Vec<Vec<Option<GradField>>> =
        pyramid.iter().map(|o| o.gauss.iter().map(|_| None).collect()).collect();
    let mut out: Vec<(Keypoint, Descriptor)> = Vec::new();
    for c in &candidates {
        if out.len() >= cfg.max_keypoints {
            break;
        }
        let oct = &pyramid[c.octave];
        let octave_scale = cfg.sigma * 2f64.powf((c.layer as f64 + c.offset[2]) / s as f64);
        let g = grads[c.octave][c.layer].get_or_insert_with(|| GradField::new(&oct.gauss[c.layer]));
        let f = (1usize << c.octave) as f64;
        let (px, py) = (c.x as f64 + c.offset[0], c.y as f64 + c.offset[1]);
        for angle in orientations(g, c.x, c.y, octave_scale) {
            let desc = describe(g, px, py, octave_scale, angle);
            out.push((
                Keypoint {
                    position: Point2::new(px * f, py * f),
                    scale: octave_scale * f,
                    orientation: angle,
                    response: c.response,
                },
                desc,
            ));
        }
    }
    out.sort_by(|(a, _), (b, _)| {
        b.response
            .total_cmp(&a.response)
            .then_with(|| a.position.x.total_cmp(&b.position.x))
            .then_with(|| a.position.y.total_cmp(&b.position.y))
            .then_with(|| a.orientation.total_cmp(&b.orientation))
    });
    out.truncate(cfg.max_keypoints);
    let (keypoints, descriptors) = out.into_iter().unzip();
    Ok(KeypointSet { keypoints, descriptors })
}
