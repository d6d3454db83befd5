//! Aligns a short clip, moves the rig after the initial alignment window and
//! reports the frame at which the misalignment signal crosses its threshold.

use singleview::pipeline::{analyze, detect_events, PipelineConfig, Record};
use singleview::simulator::{base_scenario, light_move, Renderer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut s = base_scenario("moving", 320, 240, 600, 30.0);
    s.rig_moves.push(light_move(400, 1.0));
    let cfg = PipelineConfig::default();
    let mut r = Renderer::new(&s, 0)?;
    let analysis = analyze(&cfg, &mut r)?;
    let seg = cfg.segmentation.clone();
    let events = detect_events(&cfg, &analysis, &mut (&mut r, &seg))?;
    for rec in &events.log.records {
        match rec {
            Record::Movement { event, .. } => println!(
                "movement at frame {} (true move at 400), threshold {:.2}, runs {:?}",
                event.t_c, event.threshold_used, event.run_values
            ),
            Record::Rehoming { t, .. } => println!("re-aligned from frame {t}"),
            _ => {}
        }
    }
    Ok(())
}
