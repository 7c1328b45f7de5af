//! Generates a small synthetic dataset with detector output and writes it
//! to a temporary directory.

use labelsmith::io;
use labelsmith::sim::{self, DetectorParams, SceneParams};

fn main() -> labelsmith::Result<()> {
    let scenes = sim::gen_scenes(&SceneParams {
        n_images: 10,
        seed: 42,
        ..Default::default()
    })?;
    let dets = sim::gen_detections(&scenes.set, &DetectorParams::calibrated().with_seed(42))?;

    let dir = std::env::temp_dir().join("labelsmith_sim");
    std::fs::create_dir_all(&dir).expect("temp dir");
    io::save_annotations(&dir.join("annotations.json"), &scenes.set)?;
    for v in &dets.variants {
        io::save_detections(&dir.join(format!("preds_{}.json", v.variant)), v)?;
    }
    let first = &scenes.set.images[0];
    let png = dir.join(&first.file_name);
    scenes
        .raster
        .render(&first.image_id)?
        .save(&png)
        .expect("write png");
    println!("class counts {:?}", scenes.class_counts);
    println!("missed {} of {} objects, {} false positives", dets.truth.n_undetected, dets.truth.n_gt, dets.truth.n_fp);
    println!("wrote {}", dir.display());
    Ok(())
}
