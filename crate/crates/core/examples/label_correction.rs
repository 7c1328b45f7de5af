//! Injects label errors, then repairs them with predictions from a perfect
//! detector run on the original and three augmented variants.

use labelsmith::corrupt::{self, ErrorParams};
use labelsmith::glc::{self, GlcConfig};
use labelsmith::quality::quality;
use labelsmith::sim::{self, DetectorParams, SceneParams};

fn main() -> labelsmith::Result<()> {
    let clean = sim::gen_scenes(&SceneParams {
        n_images: 200,
        ..Default::default()
    })?
    .set;
    let dets = sim::gen_detections(&clean, &DetectorParams::perfect())?;
    let params = ErrorParams {
        class_flip_frac: 0.2,
        ..corrupt::level_preset(1)?
    };
    let (noisy, _ledger) = corrupt::inject(&clean, &params)?;

    let (original, augmented) = dets.variants.split_first().expect("original first");
    let report = glc::run(&noisy, original, augmented, &GlcConfig::default())?;
    println!("{:#?}", report.summary);

    let fixed = glc::apply_corrections(&noisy, &report)?;
    let as_preds = |set: &labelsmith::dataset::AnnotationSet| {
        let mut d = labelsmith::dataset::DetectionSet::default();
        for img in &set.images {
            for l in &img.labels {
                d.push(&img.image_id, labelsmith::geometry::Detection::new(l.bbox, l.class_id, 1.0).expect("score"));
            }
        }
        d
    };
    for (name, set) in [("noisy", &noisy), ("corrected", &fixed)] {
        let q = quality(&as_preds(set), &clean, 0.5);
        println!("{name:9} mdr {:.3} udr {:.3} acc {:.3}", q.mdr.unwrap(), q.udr.unwrap(), q.macc.unwrap());
    }
    Ok(())
}
