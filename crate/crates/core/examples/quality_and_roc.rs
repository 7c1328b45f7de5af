//! Pseudo-label quality and the ROC of selection metrics on a simulated
//! detector whose difficulty varies per image.

use labelsmith::quality::{self, CompareConfig};
use labelsmith::sim::{self, DetectorParams, SceneParams};

fn main() -> labelsmith::Result<()> {
    let scenes = sim::gen_scenes(&SceneParams {
        n_images: 1000,
        ..Default::default()
    })?;
    let dets = sim::gen_detections(&scenes.set, &DetectorParams::heterogeneous())?;
    let preds = &dets.variants[0];

    let q = quality::quality(preds, &scenes.set, 0.5);
    println!("mdr {:?} udr {:?} macc {:?} miou {:?}", q.mdr, q.udr, q.macc, q.miou);
    println!("ledger mdr {:?}", dets.truth.mdr());

    let cmp = quality::compare_metrics(preds, &scenes.set, &CompareConfig::default())?;
    println!("{} of {} images miss most objects", cmp.n_positive, cmp.n_images);
    for row in &cmp.rows {
        println!("{:22} auc {:.3}", row.metric, row.roc.auc);
    }
    Ok(())
}
