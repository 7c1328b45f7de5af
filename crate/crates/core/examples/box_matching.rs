//! IoU, greedy matching and box transforms.

use labelsmith::geometry::{greedy_match, iou, BBox, BoxTransform};

fn main() -> labelsmith::Result<()> {
    let a = BBox::new(0.0, 0.0, 10.0, 10.0)?;
    let b = BBox::new(5.0, 0.0, 10.0, 10.0)?;
    println!("iou(a, b) = {:.4}", iou(&a, &b));

    let gt = [a, BBox::new(50.0, 50.0, 20.0, 20.0)?];
    let preds = [BBox::new(52.0, 51.0, 20.0, 20.0)?, b, BBox::new(90.0, 0.0, 5.0, 5.0)?];
    let m = greedy_match(&gt, &preds, 0.3);
    for p in &m.pairs {
        println!("gt {} <-> pred {} at {:.3}", p.gt, p.pred, p.iou);
    }
    println!("unmatched gt {:?}, unmatched preds {:?}", m.unmatched_gt, m.unmatched_pred);

    // flipping twice is the identity
    let flip = BoxTransform::hflip(100.0);
    let once = flip.apply(&b)?;
    println!("{:?} -> {:?} -> {:?}", b.to_array(), once.to_array(), flip.inverse().apply(&once)?.to_array());
    Ok(())
}
