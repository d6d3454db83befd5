mod common;

use common::{crop, masked_mad, mean_map_distance, quiet_scenario, render_bundle};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use singleview::alignment::*;
use singleview::features::{DetectorConfig, FeatureParams};
use singleview::geometry::{warp_coverage, CorrespondenceSet, GeometryError, Homography, Point2, RansacConfig};
use singleview::movement::misalignment_at;
use singleview::simulator::{builtin_scenario, Keyframe, Occluder, Renderer, OCCLUDER_GREEN};
use singleview::stream::FrameBundle;
use singleview::Image;

fn static_frame(t: usize) -> FrameBundle {
    let s = builtin_scenario("static").unwrap();
    render_bundle(&s, 0, t)
}

#[test]
fn identical_streams_align_to_identity() {
    let img = static_frame(0).images.remove(0);
    let bundles: Vec<FrameBundle> = (0..3).map(|t| FrameBundle::new(t, vec![img.clone(); 5])).collect();
    let acc = accumulate_correspondences(&bundles, 0, 100, 10, &FeatureParams::default()).unwrap();
    assert_eq!(acc.frames_used, 1);
    for (cam, set) in acc.sets.iter().enumerate().skip(1) {
        assert!(set.len() >= 100, "camera {cam}: {}", set.len());
        assert!(set.pairs.iter().all(|(a, b)| a == b));
    }
    let state = compute_alignment(&acc.sets, 0, 7, &RansacConfig::default(), 1).unwrap();
    assert_eq!(state.valid_from, 7);
    for m in &state.maps {
        assert!(m.max_abs_diff(&Homography::identity()) < 1e-6);
    }
}

#[test]
fn sparse_matches_accumulate_over_frames() {
    let full = static_frame(0).images.remove(0);
    // each bundle shows a different part of the texture, cam 1 offset by (5, 3)
    let bundles: Vec<FrameBundle> = (0..30)
        .map(|t| {
            let x = 12 * t as u32;
            FrameBundle::new(
                t,
                vec![crop(&full, x + 5, 103, 240, 180), crop(&full, x, 100, 240, 180)],
            )
        })
        .collect();
    let params = FeatureParams {
        detector: DetectorConfig {
            max_keypoints: 30,
            ..DetectorConfig::default()
        },
        ..FeatureParams::default()
    };
    let acc = accumulate_correspondences(&bundles, 0, 100, 30, &params).unwrap();
    assert!(acc.frames_used >= 5, "{} frames", acc.frames_used);
    assert!(acc.counts[1] >= 100, "{} pairs", acc.counts[1]);
    let state = compute_alignment(&acc.sets, 0, 0, &RansacConfig::default(), 1).unwrap();
    let expected = Homography::translation(-5.0, -3.0);
    assert!(mean_map_distance(&state.maps[1], &expected, 240, 180) < 0.5);
}

#[test]
fn fully_occluded_camera_is_named() {
    let mut s = quiet_scenario(320, 240, 4);
    s.occluders.push(Occluder {
        radius_px: 400.0,
        color: OCCLUDER_GREEN,
        trajectory: vec![Keyframe {
            frame: 0,
            x: 160.0,
            y: 120.0,
        }],
        cameras: vec![2],
    });
    let bundles: Vec<FrameBundle> = (0..4).map(|t| render_bundle(&s, 0, t)).collect();
    let err = accumulate_correspondences(&bundles, 0, 50, 4, &FeatureParams::default()).unwrap_err();
    assert!(
        matches!(err, AlignmentError::InsufficientCorrespondences { camera: 2, .. }),
        "{err:?}"
    );
}

fn simulator_alignment() -> (AlignmentState, FrameBundle) {
    let s = builtin_scenario("static").unwrap();
    let mut r = Renderer::new(&s, 0).unwrap();
    let bundles: Vec<FrameBundle> = (0..3)
        .map(|t| FrameBundle::new(t, r.render_frame(t).unwrap().0))
        .collect();
    let acc = accumulate_correspondences(&bundles, 0, 200, 3, &FeatureParams::default()).unwrap();
    let state = compute_alignment(&acc.sets, 0, 0, &RansacConfig::default(), 1).unwrap();
    (state, bundles.into_iter().next().unwrap())
}

#[test]
fn simulator_alignment_matches_ground_truth() {
    let s = builtin_scenario("static").unwrap();
    let gt = s.ground_truth_homographies(0).unwrap();
    let (state, bundle) = simulator_alignment();
    for (cam, (m, g)) in state.maps.iter().zip(&gt).enumerate() {
        let err = mean_map_distance(m, g, s.width, s.height);
        assert!(err < 1.0, "camera {cam}: {err} px");
    }
    // aligned views agree with each other under the misalignment measure
    let aligned = apply_alignment(&state, &bundle).unwrap();
    let d = misalignment_at(&aligned, 10, &FeatureParams::default())
        .unwrap()
        .unwrap();
    assert!(d < 2.0, "D_t after alignment {d}");
}

#[test]
fn collinear_correspondences_are_degenerate() {
    let line: Vec<(Point2, Point2)> = (0..20)
        .map(|i| {
            let p = Point2::new(10.0 * i as f64, 5.0 * i as f64 + 3.0);
            (p, Point2::new(p.x + 2.0, p.y))
        })
        .collect();
    let good: Vec<(Point2, Point2)> = (0..20)
        .map(|i| {
            let p = Point2::new((i * 37 % 200) as f64, (i * 53 % 150) as f64);
            (p, p)
        })
        .collect();
    let sets = vec![
        CorrespondenceSet::default(),
        CorrespondenceSet::new(good).unwrap(),
        CorrespondenceSet::new(line).unwrap(),
    ];
    let err = compute_alignment(&sets, 0, 0, &RansacConfig::default(), 1).unwrap_err();
    assert!(
        matches!(
            err,
            AlignmentError::Estimation {
                camera: 2,
                source: GeometryError::DegenerateConfiguration(_)
            }
        ),
        "{err:?}"
    );
}

#[test]
fn ground_truth_alignment_is_photometrically_consistent() {
    let s = builtin_scenario("static").unwrap();
    let gt = s.ground_truth_homographies(0).unwrap();
    let bundle = static_frame(0);
    let state = AlignmentState {
        reference_camera: 0,
        maps: gt.clone(),
        valid_from: 0,
    };
    let aligned = apply_alignment(&state, &bundle).unwrap();
    let (w, h) = (s.width, s.height);
    // pixels at least two pixels inside each warped footprint
    let inner: Vec<Vec<bool>> = gt
        .iter()
        .map(|g| {
            let shrink = Homography::translation(2.0, 2.0);
            warp_coverage(&g.compose(&shrink).unwrap(), w - 4, h - 4, w, h).unwrap()
        })
        .collect();
    for i in 0..5 {
        for j in i + 1..5 {
            let mad = masked_mad(&aligned.images[i], &aligned.images[j], |x, y| {
                let k = (y * w + x) as usize;
                inner[i][k] && inner[j][k]
            });
            assert!(mad < 10.0, "views {i}/{j}: {mad}");
        }
    }
}

#[test]
fn translation_leaves_black_margin() {
    let img = static_frame(0).images.remove(1);
    let bundle = FrameBundle::new(0, vec![img.clone(), img.clone()]);
    let state = AlignmentState {
        reference_camera: 0,
        maps: vec![Homography::identity(), Homography::translation(7.0, 0.0)],
        valid_from: 0,
    };
    let out = apply_alignment(&state, &bundle).unwrap();
    assert_eq!(out.images[0], img);
    for y in 0..img.height() {
        for x in 0..7 {
            assert_eq!(out.images[1].get_pixel(x, y).0, [0, 0, 0]);
        }
        assert_eq!(out.images[1].get_pixel(7, y), img.get_pixel(0, y));
    }
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
    fn identity_alignment_is_identity(seed in any::<u64>(), n in 2usize..6, w in 1u32..24, h in 1u32..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let images: Vec<Image> = (0..n).map(|_| random_image(&mut rng, w, h)).collect();
        let bundle = FrameBundle::new(3, images);
        let out = apply_alignment(&AlignmentState::identity(n, 0, 0), &bundle).unwrap();
        prop_assert_eq!(out.images, bundle.images);
        prop_assert_eq!(out.t, 3);
    }
}
