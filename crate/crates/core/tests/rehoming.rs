use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use singleview::image::filled;
use singleview::rehoming::*;
use singleview::simulator::{builtin_scenario, Renderer};
use singleview::Image;

#[test]
fn simulator_field_area_matches_raster() {
    let s = builtin_scenario("static").unwrap();
    let (images, truth) = Renderer::new(&s, 0).unwrap().render_frame(0).unwrap();
    let seg = FieldSegmentation::default();
    let frame = (s.width * s.height) as f64;
    for (cam, img) in images.iter().enumerate() {
        let expected = truth.field_pixels[cam] as f64;
        assert!(expected > 0.0 && expected < 0.5 * frame);
        let got = surgical_field_area(img, &seg) as f64;
        assert!(
            (got - expected).abs() <= 0.05 * expected,
            "camera {cam}: {got} vs {expected}"
        );
    }
}

#[test]
fn colour_fixtures() {
    let seg = FieldSegmentation::default();
    assert_eq!(surgical_field_area(&filled(40, 30, [0, 255, 0]), &seg), 0);
    assert_eq!(surgical_field_area(&filled(40, 30, [255, 0, 0]), &seg), 1200);
}

#[test]
fn area_agreement_fixtures() {
    assert_eq!(agreement_from_areas(&[100; 5]).unwrap(), 0.0);
    assert!((agreement_from_areas(&[120, 100, 100, 100, 80]).unwrap() - 0.4).abs() < 1e-9);
    assert!((agreement_from_areas(&[200, 100, 100, 100, 100]).unwrap() - 100.0 / 120.0).abs() < 1e-9);
    assert!(matches!(
        agreement_from_areas(&[0; 5]),
        Err(RehomingError::AllZeroAreas)
    ));
}

fn scripted(values: &[f64], cadence: usize) -> Result<(usize, Vec<RehomingSignal>), RehomingError> {
    let cfg = RehomingConfig {
        cadence,
        s_threshold: 0.5,
        persistence: 3,
    };
    detect_rehoming_time(values.len() * cadence, 0, &cfg, |t| Ok(Some(values[t / cadence])))
}

#[test]
fn rule_fixtures() {
    assert_eq!(scripted(&[0.9, 0.7, 0.4, 0.3, 0.2], 30).unwrap().0, 60);
    assert!(matches!(
        scripted(&[0.6; 8], 30),
        Err(RehomingError::NoRehomingFound { .. })
    ));
}

#[test]
fn occluded_then_clear() {
    let s = builtin_scenario("occluded-then-clear").unwrap();
    let mut r = Renderer::new(&s, 0).unwrap();
    let (t_h, samples) =
        detect_rehoming_in(&mut r, 0, &RehomingConfig::default(), &FieldSegmentation::default()).unwrap();
    assert!((1200..=1290).contains(&t_h), "t_h = {t_h}");
    assert!(samples.iter().filter(|s| s.t < 1170).all(|s| s.s >= 0.5));
}

fn random_image(seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Image::new(24, 16);
    for p in img.pixels_mut() {
        *p = ::image::Rgb([rng.gen(), rng.gen(), rng.gen()]);
    }
    img
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn agreement_is_scale_invariant(areas in prop::collection::vec(0u64..10_000, 2..8), c in 1u64..1000) {
        prop_assume!(areas.iter().any(|&a| a > 0));
        let scaled: Vec<u64> = areas.iter().map(|a| a * c).collect();
        let (a, b) = (agreement_from_areas(&areas).unwrap(), agreement_from_areas(&scaled).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn agreement_zero_iff_equal(areas in prop::collection::vec(0u64..50, 2..8)) {
        prop_assume!(areas.iter().any(|&a| a > 0));
        let s = agreement_from_areas(&areas).unwrap();
        prop_assert_eq!(s == 0.0, areas.iter().all(|&a| a == areas[0]));
    }

    #[test]
    fn rehoming_lands_on_the_cadence_grid(
        values in prop::collection::vec(prop::option::of(0.0..1.0f64), 1..60),
        from_t in 0usize..100,
        cadence in 1usize..40,
        persistence in 1usize..5,
    ) {
        let cfg = RehomingConfig { cadence, s_threshold: 0.5, persistence };
        let len = from_t + values.len() * cadence;
        let res = detect_rehoming_time::<RehomingError>(len, from_t, &cfg, |t| Ok(values[(t - from_t) / cadence]));
        if let Ok((t_h, samples)) = res {
            prop_assert!(t_h >= from_t);
            prop_assert_eq!((t_h - from_t) % cadence, 0);
            prop_assert!(samples.iter().all(|s| (s.t - from_t) % cadence == 0));
        }
    }

    #[test]
    fn area_is_monotone_under_union(seed in any::<u64>(), extra in prop::collection::vec((0u32..24, 0u32..16), 0..100)) {
        let seg = FieldSegmentation::default();
        let a = random_image(seed);
        let mut b = a.clone();
        for (x, y) in extra {
            b.put_pixel(x, y, ::image::Rgb([200, 30, 40]));
        }
        prop_assert!(surgical_field_area(&b, &seg) >= surgical_field_area(&a, &seg));
    }
}
