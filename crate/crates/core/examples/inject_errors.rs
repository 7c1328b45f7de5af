//! Corrupts a clean set at Level 1 and restores it from the ledger.

use labelsmith::corrupt;
use labelsmith::sim::{self, SceneParams};

fn main() -> labelsmith::Result<()> {
    let clean = sim::gen_scenes(&SceneParams::default())?.set;
    let params = corrupt::level_preset(1)?.with_seed(3);
    let (noisy, ledger) = corrupt::inject(&clean, &params)?;
    println!(
        "boxes {} -> {}: dropped {}, false {}, perturbed {}",
        clean.num_boxes(),
        noisy.num_boxes(),
        ledger.dropped.len(),
        ledger.added_false.len(),
        ledger.perturbed.len()
    );
    println!("restored equals clean: {}", corrupt::restore(&noisy, &ledger)? == clean);
    Ok(())
}
