//! ITF and AvSpeed of a still clip and of a clip panning 4 px per frame.

use image::imageops::crop_imm;
use singleview::metrics::{avspeed, itf, AvSpeedConfig};
use singleview::simulator::{builtin_scenario, Renderer};
use singleview::Image;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = builtin_scenario("static")?;
    let full = Renderer::new(&s, 0)?.render_frame(0)?.0.remove(0);
    let clip = |step: u32| -> Vec<Image> {
        (0..15)
            .map(|t| crop_imm(&full, 60 + step * t, 100, 320, 240).to_image())
            .collect()
    };
    let cfg = AvSpeedConfig::default();
    for step in [0, 4] {
        let v = clip(step);
        println!(
            "pan {step} px/frame: ITF {:.2} dB, AvSpeed {:.2} px/frame",
            itf(&v)?,
            avspeed(&v, &cfg)?
        );
    }
    Ok(())
}
