//! Detects keypoints in two simulated camera views and matches them.

use singleview::features::{detect_and_describe, match_descriptors, DetectorConfig};
use singleview::simulator::{builtin_scenario, Renderer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = builtin_scenario("static")?;
    let (views, _) = Renderer::new(&scenario, 0)?.render_frame(0)?;
    let cfg = DetectorConfig {
        max_keypoints: 500,
        ..DetectorConfig::default()
    };
    let a = detect_and_describe(&views[0], &cfg)?;
    let b = detect_and_describe(&views[1], &cfg)?;
    let m = match_descriptors(&a, &b, 0.75)?;
    println!(
        "camera 0: {} keypoints, camera 1: {} keypoints, {} matches",
        a.len(),
        b.len(),
        m.len()
    );
    for mt in m.matches.iter().take(5) {
        let (p, q) = (a.keypoints[mt.index_a].position, b.keypoints[mt.index_b].position);
        println!(
            "({:7.2}, {:7.2}) -> ({:7.2}, {:7.2})  distance {:.3}",
            p.x, p.y, q.x, q.y, mt.distance
        );
    }
    Ok(())
}
