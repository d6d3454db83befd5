mod common;

use common::{apply, random_homography, random_point};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use singleview::geometry::*;
use singleview::simulator::{builtin_scenario, Renderer};

fn exact_set(h: &Homography, pts: &[Point2]) -> CorrespondenceSet {
    CorrespondenceSet::new(pts.iter().map(|&p| (p, apply(h, p))).collect()).unwrap()
}

#[test]
fn dlt_recovers_random_generator() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let h = random_homography(&mut rng);
        let pts: Vec<Point2> = (0..20).map(|_| random_point(&mut rng, 640.0, 640.0)).collect();
        let est = estimate_dlt(&exact_set(&h, &pts)).unwrap();
        for &p in &pts {
            assert!(apply(&est, p).distance(&apply(&h, p)) < 1e-6);
        }
    }
}

#[test]
fn ransac_with_thirty_percent_outliers() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..20 {
        let h = random_homography(&mut rng);
        let inliers: Vec<Point2> = (0..100).map(|_| random_point(&mut rng, 640.0, 640.0)).collect();
        let mut set = exact_set(&h, &inliers);
        for _ in 0..30 {
            set.push(
                random_point(&mut rng, 640.0, 640.0),
                random_point(&mut rng, 640.0, 640.0),
            );
        }
        let fit = estimate_ransac(&set, &RansacConfig::default(), trial).unwrap();
        let worst = inliers
            .iter()
            .map(|&p| apply(&fit.homography, p).distance(&apply(&h, p)))
            .fold(0.0, f64::max);
        assert!(worst <= 1.0, "trial {trial}: worst error {worst}");
        let flagged = fit.inliers[..100].iter().filter(|&&b| b).count();
        assert!(flagged >= 95, "trial {trial}: {flagged} inliers flagged");
    }
}

#[test]
fn warp_round_trip_on_texture() {
    let s = builtin_scenario("static").unwrap();
    let img = Renderer::new(&s, 0).unwrap().render_frame(0).unwrap().0.remove(0);
    let (w, h) = img.dimensions();
    let hm = Homography::from_rows([[1.02, 0.03, 6.5], [-0.02, 0.99, -4.25], [1e-5, -2e-5, 1.0]]).unwrap();
    let there = warp_image(&hm, &img, w, h).unwrap();
    let back = warp_image(&hm.inverse().unwrap(), &there, w, h).unwrap();
    // pixels whose forward image lies well inside the frame
    let (mut sum, mut n) = (0.0, 0u64);
    for y in 0..h {
        for x in 0..w {
            let q = apply(&hm, Point2::new(x as f64, y as f64));
            if q.x < 2.0 || q.y < 2.0 || q.x > w as f64 - 3.0 || q.y > h as f64 - 3.0 {
                continue;
            }
            let (a, b) = (img.get_pixel(x, y), back.get_pixel(x, y));
            for c in 0..3 {
                sum += (a[c] as f64 - b[c] as f64).abs();
            }
            n += 3;
        }
    }
    let mad = sum / n as f64;
    assert!(mad < 2.0, "round-trip mean abs difference {mad}");
}

fn arb_homography() -> impl Strategy<Value = Homography> {
    any::<u64>().prop_map(|s| random_homography(&mut ChaCha8Rng::seed_from_u64(s)))
}

fn arb_points(n: usize) -> impl Strategy<Value = Vec<Point2>> {
    prop::collection::vec((0.0..640.0f64, 0.0..640.0f64), n..n + 20)
        .prop_map(|v| v.into_iter().map(|(x, y)| Point2::new(x, y)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn compose_with_inverse_is_identity(h in arb_homography()) {
        let id = h.compose(&h.inverse().unwrap()).unwrap();
        prop_assert!(id.max_abs_diff(&Homography::identity()) < 1e-9);
    }

    #[test]
    fn warp_point_round_trips(h in arb_homography(), x in 0.0..640.0f64, y in 0.0..640.0f64) {
        let p = Point2::new(x, y);
        let back = apply(&h.inverse().unwrap(), apply(&h, p));
        prop_assert!(back.distance(&p) < 1e-9);
    }

    #[test]
    fn dlt_exact_input_reprojects(h in arb_homography(), pts in arb_points(6)) {
        let set = exact_set(&h, &pts);
        if let Ok(est) = estimate_dlt(&set) {
            for (s, d) in &set.pairs {
                prop_assert!(apply(&est, *s).distance(d) < 1e-6);
            }
        }
    }

    #[test]
    fn dlt_is_scale_covariant(h in arb_homography(), pts in arb_points(8), s in 0.25..4.0f64) {
        let set = exact_set(&h, &pts);
        let scaled = CorrespondenceSet::new(
            set.pairs.iter().map(|(a, b)| (*a, Point2::new(s * b.x, s * b.y))).collect(),
        ).unwrap();
        if let (Ok(e1), Ok(e2)) = (estimate_dlt(&set), estimate_dlt(&scaled)) {
            for p in &pts {
                let (q1, q2) = (apply(&e1, *p), apply(&e2, *p));
                prop_assert!(Point2::new(s * q1.x, s * q1.y).distance(&q2) < 1e-6);
            }
        }
    }

    #[test]
    fn ransac_is_reproducible(h in arb_homography(), seed in any::<u64>(), noise_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let mut set = exact_set(&h, &(0..30).map(|_| random_point(&mut rng, 640.0, 640.0)).collect::<Vec<_>>());
        for _ in 0..10 {
            let a = random_point(&mut rng, 640.0, 640.0);
            set.push(a, Point2::new(a.x + rng.gen_range(-80.0..80.0), a.y));
        }
        let cfg = RansacConfig { max_iters: 200, ..RansacConfig::default() };
        let a = estimate_ransac(&set, &cfg, seed);
        let b = estimate_ransac(&set, &cfg, seed);
        prop_assert_eq!(a, b);
    }
}
