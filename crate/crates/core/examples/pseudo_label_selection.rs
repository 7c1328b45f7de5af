//! Scores pseudo-labeled images and drops the weakest fifth.

use labelsmith::pls::{self, PlsConfig};
use labelsmith::sim::{self, DetectorParams, SceneParams};

fn main() -> labelsmith::Result<()> {
    let scenes = sim::gen_scenes(&SceneParams {
        n_images: 300,
        ..Default::default()
    })?;
    let dets = sim::gen_detections(&scenes.set, &DetectorParams::heterogeneous())?;
    let preds = &dets.variants[0];

    let cfg = PlsConfig {
        beta: 0.25,
        ..PlsConfig::default()
    };
    let report = pls::select(preds, &cfg)?;
    println!("kept {} removed {}", report.summary.kept, report.summary.removed);
    println!("kept boxes per class {:?}", report.summary.kept_boxes_per_class);
    for row in report.images.iter().filter(|r| !r.kept).take(5) {
        println!("drop {} s={:.2} c={:.2} d={:.2}", row.image_id, row.s, row.c, row.d);
    }

    let val = sim::gen_detections(&scenes.set, &DetectorParams::low_score())?;
    let rec = pls::recommend_threshold(&val.variants[0], &scenes.set, 0.5)?;
    println!("recommended threshold {:.3} from {} matches", rec.delta_s, rec.matched);
    Ok(())
}
