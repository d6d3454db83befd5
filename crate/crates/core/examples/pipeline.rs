//! End to end: simulate a short rig with one move and one occluder, run the
//! pipeline in memory and score the output against camera 0 alone.

use singleview::metrics::evaluate_stream;
use singleview::pipeline::{run_pipeline, PipelineConfig, PipelineError};
use singleview::simulator::{base_scenario, light_move, passing_occluder, Renderer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut s = base_scenario("demo", 320, 240, 540, 30.0);
    s.rig_moves.push(light_move(360, 1.0));
    s.occluders.push(passing_occluder(0, 40, 140, 320, 240));
    let cfg = PipelineConfig::default();

    let mut z = Vec::new();
    let out = run_pipeline(&cfg, &mut Renderer::new(&s, 0)?, &mut |_, img| {
        z.push(img);
        Ok(())
    })?;
    println!(
        "movements: {:?}",
        out.log.movement_events().iter().map(|e| e.t_c).collect::<Vec<_>>()
    );
    println!("re-alignments: {:?}", out.log.rehoming_times());
    for seg in &out.schedule.segments {
        println!("frames {:3}..{:3}: camera {}", seg.start, seg.end, seg.camera);
    }

    let mut r = Renderer::new(&s, 0)?;
    let cam0 = (0..s.duration).map(|t| {
        r.render_frame(t)
            .map(|mut f| f.0.swap_remove(0))
            .map_err(PipelineError::from)
    });
    let (base, _) = evaluate_stream(cam0, &cfg.metrics)?;
    let (ours, _) = evaluate_stream(z.into_iter().map(Ok::<_, PipelineError>), &cfg.metrics)?;
    println!("camera 0 only: ITF {:.2} dB, AvSpeed {:.2}", base.itf_db, base.avspeed);
    println!("switched view: ITF {:.2} dB, AvSpeed {:.2}", ours.itf_db, ours.avspeed);
    Ok(())
}
