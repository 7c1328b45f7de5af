//! Builds collages of the rarest class from simulated scenes and writes
//! them as PNGs.

use labelsmith::rcc::{self, Layout, RccConfig};
use labelsmith::sim::{self, SceneParams};
use labelsmith::stats;

fn main() -> labelsmith::Result<()> {
    let scenes = sim::gen_scenes(&SceneParams {
        n_images: 60,
        ..Default::default()
    })?;
    let rarest = stats::class_frequencies(&scenes.set).rarest_first()[0];

    let cfg = RccConfig {
        layout: Layout::Grid4x4,
        canvas_w: 512,
        canvas_h: 512,
        seed: 7,
        ..RccConfig::new([rarest])
    };
    let run = rcc::build_collages(&scenes.set, &scenes.raster, &cfg)?;
    let augmented = rcc::append_collages(&scenes.set, &run.collages)?;
    println!(
        "class {rarest}: {} boxes before, {} after, {} collage(s)",
        stats::class_frequencies(&scenes.set).get(rarest),
        stats::class_frequencies(&augmented).get(rarest),
        run.collages.len()
    );

    let dir = std::env::temp_dir().join("labelsmith_collages");
    std::fs::create_dir_all(&dir).expect("temp dir");
    rcc::save_collage_images(&dir, &run.collages)?;
    println!("wrote {}", dir.display());
    Ok(())
}
