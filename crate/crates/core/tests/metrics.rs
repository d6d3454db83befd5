mod common;

use common::crop;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use singleview::metrics::*;
use singleview::simulator::{builtin_scenario, Renderer};
use singleview::Image;

fn texture_view() -> Image {
    let s = builtin_scenario("static").unwrap();
    Renderer::new(&s, 0).unwrap().render_frame(0).unwrap().0.remove(0)
}

/// Window sliding right over the texture by `k` pixels per frame; the content
/// therefore moves left by `k` pixels per frame.
fn panning(k: u32, frames: u32) -> Vec<Image> {
    let full = texture_view();
    (0..frames).map(|t| crop(&full, 40 + k * t, 120, 300, 220)).collect()
}

#[test]
fn static_video_has_zero_speed() {
    let f = crop(&texture_view(), 100, 100, 300, 220);
    let v = vec![f; 8];
    assert_eq!(avspeed(&v, &AvSpeedConfig::default()).unwrap(), 0.0);
    assert_eq!(itf(&v).unwrap(), PSNR_CAP);
}

#[test]
fn one_pixel_per_frame() {
    let v = avspeed(&panning(1, 20), &AvSpeedConfig::default()).unwrap();
    assert!((v - 1.0).abs() <= 0.1, "avspeed {v}");
}

#[test]
fn translation_consistency() {
    for k in [3u32, 8, 17, 30, 45] {
        let v = avspeed(&panning(k, 6), &AvSpeedConfig::default()).unwrap();
        assert!((v - k as f64).abs() <= 0.1 * k as f64, "k = {k}: {v}");
    }
}

#[test]
fn alternating_video_itf_is_pairwise_psnr() {
    let a = crop(&texture_view(), 0, 0, 64, 48);
    let b = crop(&texture_view(), 3, 0, 64, 48);
    let p = psnr(&a, &b).unwrap();
    let v: Vec<Image> = (0..9).map(|i| if i % 2 == 0 { a.clone() } else { b.clone() }).collect();
    assert!((itf(&v).unwrap() - p).abs() < 1e-12);
}

fn random_image(rng: &mut impl Rng, w: u32, h: u32) -> Image {
    let mut img = Image::new(w, h);
    for p in img.pixels_mut() {
        *p = ::image::Rgb([rng.gen(), rng.gen(), rng.gen()]);
    }
    img
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn psnr_is_symmetric(seed in any::<u64>(), w in 1u32..20, h in 1u32..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_image(&mut rng, w, h), random_image(&mut rng, w, h));
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn itf_is_bounded_mean_of_pairs(seed in any::<u64>(), n in 2usize..10, same in prop::collection::vec(any::<bool>(), 10)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut video: Vec<Image> = Vec::new();
        for i in 0..n {
            // repeat some frames so capped transitions occur too
            if i > 0 && same[i] {
                video.push(video[i - 1].clone());
            } else {
                video.push(random_image(&mut rng, 12, 9));
            }
        }
        let v = itf(&video).unwrap();
        prop_assert!((0.0..=PSNR_CAP).contains(&v));
        let mean = video.windows(2).map(|w| psnr(&w[0], &w[1]).unwrap()).sum::<f64>() / (n - 1) as f64;
        prop_assert!((v - mean).abs() < 1e-9);
    }
}
