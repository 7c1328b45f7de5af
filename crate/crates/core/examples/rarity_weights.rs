//! Class frequencies, per-image rarity scores and sampling weights.

use labelsmith::sim::{self, ClassWeights, SceneParams};
use labelsmith::stats;

fn main() -> labelsmith::Result<()> {
    let scenes = sim::gen_scenes(&SceneParams {
        n_images: 200,
        num_classes: 5,
        class_weights: ClassWeights::PowerLaw(2.0),
        ..Default::default()
    })?;
    let freq = stats::class_frequencies(&scenes.set);
    for (k, n) in &freq.freq {
        println!("{:8} {n}", scenes.set.classes[*k]);
    }

    let weights = stats::export_weights(&scenes.set, 20.0)?;
    let mut top: Vec<_> = weights.weights.iter().collect();
    top.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.image_id.cmp(&b.image_id)));
    for w in top.iter().take(5) {
        let img = scenes.set.image(&w.image_id).expect("known id");
        println!("{} weight {:.2} classes {:?}", w.image_id, w.weight, img.distinct_classes());
    }
    Ok(())
}
