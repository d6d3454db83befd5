#![allow(dead_code)]

use nalgebra::Matrix3;
use rand::Rng;
use singleview::geometry::{warp_point, Homography, Point2};
use singleview::simulator::{base_scenario, Renderer, Scenario};
use singleview::stream::FrameBundle;
use singleview::Image;

/// Random well-conditioned homography that keeps `[0, 640)²` in front of the camera.
pub fn random_homography(rng: &mut impl Rng) -> Homography {
    loop {
        let a = rng.gen_range(-0.5..0.5f64);
        let s = rng.gen_range(0.7..1.4f64);
        let (c, sn) = (a.cos() * s, a.sin() * s);
        let m = Matrix3::new(
            c + rng.gen_range(-0.1..0.1),
            -sn + rng.gen_range(-0.1..0.1),
            rng.gen_range(-60.0..60.0),
            sn + rng.gen_range(-0.1..0.1),
            c + rng.gen_range(-0.1..0.1),
            rng.gen_range(-60.0..60.0),
            rng.gen_range(-2e-4..2e-4),
            rng.gen_range(-2e-4..2e-4),
            1.0,
        );
        if m.determinant().abs() > 0.1 {
            if let Ok(h) = Homography::from_matrix(m) {
                return h;
            }
        }
    }
}

pub fn random_point(rng: &mut impl Rng, w: f64, h: f64) -> Point2 {
    Point2::new(rng.gen_range(0.0..w), rng.gen_range(0.0..h))
}

pub fn apply(h: &Homography, p: Point2) -> Point2 {
    warp_point(h, p).expect("finite point")
}

/// Mean reprojection distance between two maps over a grid on the image interior.
pub fn mean_map_distance(a: &Homography, b: &Homography, w: u32, h: u32) -> f64 {
    let (mut s, mut n) = (0.0, 0);
    let step = 16.0;
    let mut y = 0.1 * h as f64;
    while y < 0.9 * h as f64 {
        let mut x = 0.1 * w as f64;
        while x < 0.9 * w as f64 {
            let p = Point2::new(x, y);
            s += apply(a, p).distance(&apply(b, p));
            n += 1;
            x += step;
        }
        y += step;
    }
    s / n as f64
}

/// Five-camera rig over the default plane with nothing happening.
pub fn quiet_scenario(w: u32, h: u32, duration: usize) -> Scenario {
    base_scenario("quiet", w, h, duration, 30.0)
}

pub fn render_bundle(s: &Scenario, seed: u64, t: usize) -> FrameBundle {
    let mut r = Renderer::new(s, seed).unwrap();
    let (images, _) = r.render_frame(t).unwrap();
    FrameBundle::new(t, images)
}

/// Copy of `img` shifted by whole pixels, black where nothing maps in.
pub fn shifted(img: &Image, dx: i64, dy: i64) -> Image {
    let (w, h) = img.dimensions();
    let mut out = Image::new(w, h);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let (sx, sy) = (x - dx, y - dy);
            if sx >= 0 && sy >= 0 && sx < w as i64 && sy < h as i64 {
                out.put_pixel(x as u32, y as u32, *img.get_pixel(sx as u32, sy as u32));
            }
        }
    }
    out
}

/// Crop of `img` starting at `(x0, y0)`.
pub fn crop(img: &Image, x0: u32, y0: u32, w: u32, h: u32) -> Image {
    ::image::imageops::crop_imm(img, x0, y0, w, h).to_image()
}

/// Mean absolute per-channel difference over pixels where `mask` holds.
pub fn masked_mad(a: &Image, b: &Image, mask: impl Fn(u32, u32) -> bool) -> f64 {
    let (mut s, mut n) = (0.0, 0u64);
    for (x, y, p) in a.enumerate_pixels() {
        if !mask(x, y) {
            continue;
        }
        let q = b.get_pixel(x, y);
        for c in 0..3 {
            s += (p[c] as f64 - q[c] as f64).abs();
        }
        n += 3;
    }
    assert!(n > 0, "empty mask");
    s / n as f64
}
