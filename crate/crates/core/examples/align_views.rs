//! Accumulates correspondences over a few frames, aligns every camera to
//! camera 0 and compares the estimate with the simulator's ground truth.

use singleview::alignment::{accumulate_correspondences, apply_alignment, compute_alignment};
use singleview::features::FeatureParams;
use singleview::geometry::{warp_point, Point2, RansacConfig};
use singleview::simulator::{base_scenario, Renderer};
use singleview::stream::FrameBundle;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = base_scenario("align", 320, 240, 10, 30.0);
    let mut r = Renderer::new(&s, 0)?;
    let mut bundles = Vec::new();
    for t in 0..s.duration {
        bundles.push(FrameBundle::new(t, r.render_frame(t)?.0));
    }
    let acc = accumulate_correspondences(&bundles, 0, 200, 10, &FeatureParams::default())?;
    println!(
        "frames used: {}, correspondences per camera: {:?}",
        acc.frames_used, acc.counts
    );
    let state = compute_alignment(&acc.sets, 0, 0, &RansacConfig::default(), 1)?;
    let truth = s.ground_truth_homographies(0)?;
    let centre = Point2::new(160.0, 120.0);
    for (cam, (est, gt)) in state.maps.iter().zip(&truth).enumerate() {
        let err = warp_point(est, centre)?.distance(&warp_point(gt, centre)?);
        println!("camera {cam}: image centre lands {err:.3} px from ground truth");
    }
    let aligned = apply_alignment(&state, &bundles[0])?;
    println!(
        "aligned bundle: {} views of {:?}",
        aligned.camera_count(),
        aligned.dimensions()
    );
    Ok(())
}
