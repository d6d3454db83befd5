//! Renders the built-in scenarios' first frame and prints their ground truth.

use singleview::simulator::{builtin_scenarios, Renderer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for s in builtin_scenarios() {
        let mut r = Renderer::new(&s, 0)?;
        let (views, truth) = r.render_frame(0)?;
        println!(
            "{}: {} cameras at {}x{}, {} frames at {} fps, rig moves at {:?}",
            s.name,
            views.len(),
            s.width,
            s.height,
            s.duration,
            s.fps,
            s.move_frames()
        );
        println!("  field pixels per camera at frame 0: {:?}", truth.field_pixels);
        println!("  camera 1 -> camera 0: {:?}", truth.homographies[1].to_row_major());
    }
    Ok(())
}
