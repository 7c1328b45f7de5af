//! Round-trips annotations and predictions through the JSON formats and
//! reads a KITTI label file.

use std::fs;

use labelsmith::io::{self, AnnotationFormat, KittiOptions};
use labelsmith::sim::{self, DetectorParams, SceneParams};

fn main() -> labelsmith::Result<()> {
    let dir = std::env::temp_dir().join("labelsmith_dataset_io");
    fs::create_dir_all(&dir).expect("temp dir");

    let scenes = sim::gen_scenes(&SceneParams {
        n_images: 5,
        ..Default::default()
    })?;
    let ann = dir.join("annotations.json");
    io::save_annotations(&ann, &scenes.set)?;
    let back = io::load_annotations(&ann, AnnotationFormat::CocoJson)?;
    println!("{} images, {} boxes, equal after reload: {}", back.images.len(), back.num_boxes(), back == scenes.set);

    let dets = sim::gen_detections(&scenes.set, &DetectorParams::calibrated())?;
    let preds = dir.join("preds.json");
    io::save_detections(&preds, &dets.variants[0])?;
    println!("{} detections reloaded", io::load_detections(&preds)?.num_detections());

    let kitti = dir.join("000001.txt");
    fs::write(
        &kitti,
        "Car 0.00 0 -1.58 100.0 50.0 140.0 70.0 1.6 1.7 4.2 -3.2 1.7 13.0 -1.8\n\
         DontCare -1 -1 -10 300.0 40.0 330.0 60.0 -1 -1 -1 -1000 -1000 -1000 -10\n",
    )
    .expect("write label");
    let set = io::load_kitti(&kitti, &KittiOptions::default())?;
    let img = &set.images[0];
    println!(
        "kitti {}: {:?} as {:?}, {} ignore region(s)",
        img.image_id,
        set.classes,
        img.labels[0].bbox.to_array(),
        img.ignore_regions.len()
    );
    Ok(())
}
