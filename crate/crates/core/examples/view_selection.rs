//! Plans camera switches from per-frame occlusion scores.

use singleview::selection::{plan_switches, scores_from_areas};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Camera 0 gets covered from frame 20 to 60; camera 2 briefly looks better at frame 80.
    let scores: Vec<Vec<f64>> = (0..120)
        .map(|t| {
            let a0 = if (20..60).contains(&t) { 3_000 } else { 10_000 };
            let a2 = if t == 80 { 10_500 } else { 9_500 };
            scores_from_areas(&[a0, 9_800, a2])
        })
        .collect();
    let sched = plan_switches(&scores, 15, 0.8)?;
    for seg in &sched.segments {
        println!("frames {:3}..{:3}: camera {}", seg.start, seg.end, seg.camera);
    }
    Ok(())
}
