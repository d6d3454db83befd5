//! Recovers a known homography from correspondences contaminated with outliers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use singleview::geometry::{estimate_ransac, warp_point, CorrespondenceSet, Homography, Point2, RansacConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truth = Homography::from_rows([[0.96, -0.12, 25.0], [0.1, 1.04, -12.0], [1e-4, -5e-5, 1.0]])?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pairs = Vec::new();
    for i in 0..200 {
        let p = Point2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0));
        let q = if i % 10 < 7 {
            warp_point(&truth, p)?
        } else {
            Point2::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0))
        };
        pairs.push((p, q));
    }
    let fit = estimate_ransac(&CorrespondenceSet::new(pairs)?, &RansacConfig::default(), 1)?;
    println!("inliers: {} of 200", fit.inlier_count());
    println!("estimated: {:?}", fit.homography.to_row_major());
    println!("max entry difference: {:.2e}", fit.homography.max_abs_diff(&truth));
    Ok(())
}
