//! Field areas and their agreement score while two occluders leave the views.

use singleview::rehoming::{
    agreement_from_areas, detect_rehoming_in, measure_areas, FieldSegmentation, RehomingConfig,
};
use singleview::simulator::{builtin_scenario, Renderer};
use singleview::stream::FrameSource;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = builtin_scenario("occluded-then-clear")?;
    let seg = FieldSegmentation::default();
    let mut r = Renderer::new(&s, 0)?;
    for t in [0, 600, 1150, 1200, 1500] {
        let m = measure_areas(&r.bundle(t)?, &seg);
        println!(
            "frame {t:4}: areas {:?}  S = {:.3}",
            m.areas,
            agreement_from_areas(&m.areas)?
        );
    }
    let (t_h, _) = detect_rehoming_in(&mut r, 0, &RehomingConfig::default(), &seg)?;
    println!("homographies may be re-estimated from frame {t_h}");
    Ok(())
}
