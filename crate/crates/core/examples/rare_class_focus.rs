//! Splits a set into rare and common images and plans two epochs.

use labelsmith::rcf::{self, PlanOptions};
use labelsmith::sim::{self, SceneParams};

fn main() -> labelsmith::Result<()> {
    let scenes = sim::gen_scenes(&SceneParams {
        n_images: 40,
        ..Default::default()
    })?;
    let strata = rcf::stratify_set(&scenes.set, 8, 20.0)?;
    println!("rare: {:?}", strata.rare);

    let plan = rcf::plan_epochs(&strata, &PlanOptions::new(8, 2, 1))?;
    for (e, batches) in plan.epochs.iter().enumerate() {
        println!("epoch {e}: {} batches", batches.len());
        for b in batches.iter().take(2) {
            let ids: Vec<String> = b
                .iter()
                .map(|x| if x.origin.is_rare() { format!("*{}", x.image_id) } else { x.image_id.clone() })
                .collect();
            println!("  {}", ids.join(" "));
        }
    }
    Ok(())
}
