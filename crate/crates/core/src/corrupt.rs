//! Synthetic ground-truth errors: dropped boxes, false boxes, box noise and
//! class flips, with a ledger that restores the clean set exactly.

use std::collections::HashMap;

use log::warn;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationSet, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::{BBox, LabeledBox};
use crate::rng;

const STREAM_DROP: u64 = 0x6572_7201;
const STREAM_FALSE: u64 = 0x6572_7202;
const STREAM_NOISE: u64 = 0x6572_7203;
const STREAM_FLIP: u64 = 0x6572_7204;

/// Placement attempts per false box before it is skipped.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorParams {
    /// Fraction of all boxes dropped (missing GT).
    pub drop_frac: f64,
    /// False boxes added to every image.
    pub false_per_image: usize,
    /// Width range of false boxes, pixels.
    pub false_w_range: [f64; 2],
    /// Height range of false boxes, pixels.
    pub false_h_range: [f64; 2],
    /// Fraction of images whose boxes are perturbed.
    pub noise_image_frac: f64,
    /// Relative size perturbation.
    pub eps_b: f64,
    /// Fraction of boxes given a different random class.
    pub class_flip_frac: f64,
    pub seed: u64,
}

impl ErrorParams {
    /// No corruption at all.
    pub fn none() -> Self {
        Self {
            drop_frac: 0.0,
            false_per_image: 0,
            false_w_range: [10.0, 100.0],
            false_h_range: [10.0, 100.0],
            noise_image_frac: 0.0,
            eps_b: 0.0,
            class_flip_frac: 0.0,
            seed: 0,
        }
    }

    /// Only class flips at `frac`.
    pub fn class_flips(frac: f64) -> Self {
        Self {
            class_flip_frac: frac,
            ..Self::none()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("drop_frac", self.drop_frac),
            ("noise_image_frac", self.noise_image_frac),
            ("class_flip_frac", self.class_flip_frac),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.eps_b >= 0.0 && self.eps_b.is_finite()) {
            return Err(Error::Config(format!("eps_b must be non-negative, got {}", self.eps_b)));
        }
        for (name, [lo, hi]) in [("false_w_range", self.false_w_range), ("false_h_range", self.false_h_range)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Config(format!("{name} must satisfy 0 < min <= max, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Preset corruption levels. Level 1: 20% dropped, one false box per image,
/// 20% of images perturbed with eps 0.1. Level 2: 50% dropped, five false
/// boxes per image, 20% of images perturbed with eps 0.2.
pub fn level_preset(level: u8) -> Result<ErrorParams> {
    let base = ErrorParams {
        false_w_range: [10.0, 100.0],
        false_h_range: [10.0, 100.0],
        noise_image_frac: 0.20,
        ..ErrorParams::none()
    };
    match level {
        1 => Ok(ErrorParams {
            drop_frac: 0.20,
            false_per_image: 1,
            eps_b: 0.1,
            ..base
        }),
        2 => Ok(ErrorParams {
            drop_frac: 0.50,
            false_per_image: 5,
            eps_b: 0.2,
            ..base
        }),
        other => Err(Error::Config(format!("unknown error level {other}; expected 1 or 2"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedBox {
    pub image_id: String,
    /// Index in the clean image's label list.
    pub index: usize,
    pub label: LabeledBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseBox {
    pub image_id: String,
    /// Index in the corrupted image's label list.
    pub index: usize,
    pub label: LabeledBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedBox {
    pub image_id: String,
    /// Index in the clean image's label list.
    pub index: usize,
    pub original: BBox,
    pub perturbed: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlippedClass {
    pub image_id: String,
    /// Index in the clean image's label list.
    pub index: usize,
    pub old_class: usize,
    pub new_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPlacement {
    pub image_id: String,
    pub count: usize,
}

/// Everything [`inject`] changed.
///
/// In the corrupted set each image holds its surviving clean boxes in their
/// original order followed by its false boxes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InjectionLedger {
    pub dropped: Vec<DroppedBox>,
    pub added_false: Vec<FalseBox>,
    pub perturbed: Vec<PerturbedBox>,
    pub class_flipped: Vec<FlippedClass>,
    pub skipped_false: Vec<SkippedPlacement>,
}

impl InjectionLedger {
    pub fn is_empty(&self) -> bool {
        self.dropped.is_empty()
            && self.added_false.is_empty()
            && self.perturbed.is_empty()
            && self.class_flipped.is_empty()
    }

    /// Clean label index of every label in the corrupted image, `None` for
    /// false boxes.
    pub fn clean_indices(&self, image_id: &str, clean_len: usize) -> Vec<Option<usize>> {
        let mut dropped: Vec<usize> = self
            .dropped
            .iter()
            .filter(|d| d.image_id == image_id)
            .map(|d| d.index)
            .collect();
        dropped.sort_unstable();
        let mut out: Vec<Option<usize>> = (0..clean_len)
            .filter(|i| dropped.binary_search(i).is_err())
            .map(Some)
            .collect();
        out.extend(
            self.added_false
                .iter()
                .filter(|f| f.image_id == image_id)
                .map(|_| None),
        );
        out
    }
}

/// Applies `params` to a copy of `set`. Steps run in order: drop, false boxes,
/// box noise, class flips. Noise and flips only touch surviving clean boxes.
pub fn inject(set: &AnnotationSet, params: &ErrorParams) -> Result<(AnnotationSet, InjectionLedger)> {
    params.validate()?;
    let mut ledger = InjectionLedger::default();

    // (a) global uniform drop sample over all boxes
    let all: Vec<(usize, usize)> = set
        .images
        .iter()
        .enumerate()
        .flat_map(|(ii, img)| (0..img.labels.len()).map(move |li| (ii, li)))
        .collect();
    let n_drop = ((params.drop_frac * all.len() as f64) + 1e-9).floor() as usize;
    let mut dropped_flags: Vec<Vec<bool>> = set.images.iter().map(|i| vec![false; i.labels.len()]).collect();
    if n_drop > 0 {
        let mut r = rng::stream(params.seed, STREAM_DROP);
        let mut picks = index::sample(&mut r, all.len(), n_drop.min(all.len())).into_vec();
        picks.sort_unstable();
        for p in picks {
            let (ii, li) = all[p];
            dropped_flags[ii][li] = true;
            ledger.dropped.push(DroppedBox {
                image_id: set.images[ii].image_id.clone(),
                index: li,
                label: set.images[ii].labels[li],
            });
        }
    }

    // surviving[ii] = clean indices still present, in order
    let surviving: Vec<Vec<usize>> = dropped_flags
        .iter()
        .map(|f| f.iter().enumerate().filter(|(_, d)| !**d).map(|(i, _)| i).collect())
        .collect();

    let mut out = set.clone();
    for (ii, img) in out.images.iter_mut().enumerate() {
        img.labels = surviving[ii].iter().map(|&li| set.images[ii].labels[li]).collect();
    }

    // (b) false boxes, avoiding every clean box and earlier false boxes
    if params.false_per_image > 0 && set.num_classes() > 0 {
        let mut r = rng::stream(params.seed, STREAM_FALSE);
        for (ii, img) in out.images.iter_mut().enumerate() {
            let clean = &set.images[ii];
            let mut occupied: Vec<BBox> = clean.labels.iter().map(|l| l.bbox).collect();
            let mut skipped = 0;
            for _ in 0..params.false_per_image {
                match place_false_box(&mut r, clean, &occupied, params) {
                    Some(bbox) => {
                        let class_id = r.random_range(0..set.num_classes());
                        let label = LabeledBox::new(bbox, class_id);
                        occupied.push(bbox);
                        ledger.added_false.push(FalseBox {
                            image_id: img.image_id.clone(),
                            index: img.labels.len(),
                            label,
                        });
                        img.labels.push(label);
                    }
                    None => skipped += 1,
                }
            }
            if skipped > 0 {
                warn!("image `{}`: skipped {skipped} false boxes, no free position found", img.image_id);
                ledger.skipped_false.push(SkippedPlacement {
                    image_id: img.image_id.clone(),
                    count: skipped,
                });
            }
        }
    }

    // (c) box noise on a uniform sample of images
    let n_noisy = ((params.noise_image_frac * set.images.len() as f64) + 1e-9).floor() as usize;
    if n_noisy > 0 && params.eps_b > 0.0 {
        let mut r = rng::stream(params.seed, STREAM_NOISE);
        let mut picks = index::sample(&mut r, set.images.len(), n_noisy).into_vec();
        picks.sort_unstable();
        for ii in picks {
            let img = &mut out.images[ii];
            let (w, h) = (img.width_f(), img.height_f());
            for (pos, &clean_idx) in surviving[ii].iter().enumerate() {
                let original = img.labels[pos].bbox;
                let perturbed = perturb_box(&original, params.eps_b, signs(&mut r), w, h);
                img.labels[pos].bbox = perturbed;
                ledger.perturbed.push(PerturbedBox {
                    image_id: img.image_id.clone(),
                    index: clean_idx,
                    original,
                    perturbed,
                });
            }
        }
    }

    // (d) class flips over surviving clean boxes
    let k = set.num_classes();
    let candidates: Vec<(usize, usize)> = surviving
        .iter()
        .enumerate()
        .flat_map(|(ii, s)| (0..s.len()).map(move |pos| (ii, pos)))
        .collect();
    let n_flip = ((params.class_flip_frac * candidates.len() as f64) + 1e-9).floor() as usize;
    if n_flip > 0 && k >= 2 {
        let mut r = rng::stream(params.seed, STREAM_FLIP);
        let mut picks = index::sample(&mut r, candidates.len(), n_flip).into_vec();
        picks.sort_unstable();
        for p in picks {
            let (ii, pos) = candidates[p];
            let label = &mut out.images[ii].labels[pos];
            let old = label.class_id;
            // uniform over the other k - 1 classes
            let mut new = r.random_range(0..k - 1);
            if new >= old {
                new += 1;
            }
            label.class_id = new;
            ledger.class_flipped.push(FlippedClass {
                image_id: out.images[ii].image_id.clone(),
                index: surviving[ii][pos],
                old_class: old,
                new_class: new,
            });
        }
    }

    Ok((out, ledger))
}

type Signs = [f64; 4];

fn signs(r: &mut impl Rng) -> Signs {
    let mut s = [1.0; 4];
    for v in &mut s {
        if r.random::<bool>() {
            *v = -1.0;
        }
    }
    s
}

/// Perturbs a box's size by `eps_b` of its width/height and shifts it by half
/// the size change. `signs` are `[sigma_w, sigma_h, sigma_x, sigma_y]`. The
/// result is clipped to the frame and kept at least one pixel in size.
pub fn perturb_box(b: &BBox, eps_b: f64, signs: Signs, frame_w: f64, frame_h: f64) -> BBox {
    let [sw, sh, sx, sy] = signs;
    let dw = sw * eps_b * b.w();
    let dh = sh * eps_b * b.h();
    let (x0, x1) = clip_span(b.x() + sx * dw / 2.0, b.w() + dw, frame_w);
    let (y0, y1) = clip_span(b.y() + sy * dh / 2.0, b.h() + dh, frame_h);
    BBox::from_corners(x0, y0, x1, y1).unwrap_or(*b)
}

fn clip_span(start: f64, len: f64, limit: f64) -> (f64, f64) {
    let min_len = 1.0f64.min(limit);
    let mut a = start.clamp(0.0, limit);
    let mut b = (start + len).clamp(0.0, limit);
    if b - a < min_len {
        let mid = ((a + b) / 2.0).clamp(min_len / 2.0, limit - min_len / 2.0);
        a = mid - min_len / 2.0;
        b = mid + min_len / 2.0;
    }
    (a, b)
}

fn place_false_box(r: &mut impl Rng, img: &ImageRecord, occupied: &[BBox], params: &ErrorParams) -> Option<BBox> {
    let (iw, ih) = (img.width_f(), img.height_f());
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let w = rng::uniform(r, params.false_w_range[0], params.false_w_range[1]);
        let h = rng::uniform(r, params.false_h_range[0], params.false_h_range[1]);
        if w > iw || h > ih {
            continue;
        }
        let x = rng::uniform(r, 0.0, iw - w);
        let y = rng::uniform(r, 0.0, ih - h);
        let Ok(candidate) = BBox::new(x, y, w, h) else {
            continue;
        };
        if occupied.iter().all(|o| !o.intersects(&candidate)) {
            return Some(candidate);
        }
    }
    None
}

/// Reconstructs the clean set from a corrupted set and its ledger.
pub fn restore(corrupted: &AnnotationSet, ledger: &InjectionLedger) -> Result<AnnotationSet> {
    let mut dropped: HashMap<&str, Vec<&DroppedBox>> = HashMap::new();
    for d in &ledger.dropped {
        dropped.entry(&d.image_id).or_default().push(d);
    }
    let mut n_false: HashMap<&str, usize> = HashMap::new();
    for f in &ledger.added_false {
        *n_false.entry(&f.image_id).or_default() += 1;
    }
    let mut perturbed: HashMap<(&str, usize), &PerturbedBox> = HashMap::new();
    for p in &ledger.perturbed {
        perturbed.insert((&p.image_id, p.index), p);
    }
    let mut flipped: HashMap<(&str, usize), &FlippedClass> = HashMap::new();
    for f in &ledger.class_flipped {
        flipped.insert((&f.image_id, f.index), f);
    }

    let mut out = corrupted.clone();
    for img in &mut out.images {
        let id = img.image_id.as_str();
        let nf = n_false.get(id).copied().unwrap_or(0);
        if nf > img.labels.len() {
            return Err(Error::Dataset(format!("ledger lists more false boxes than image `{id}` holds")));
        }
        let survivors = &img.labels[..img.labels.len() - nf];
        let mut drops: Vec<&DroppedBox> = dropped.get(id).cloned().unwrap_or_default();
        drops.sort_by_key(|d| d.index);
        let clean_len = survivors.len() + drops.len();

        let mut labels = Vec::with_capacity(clean_len);
        let mut next_survivor = survivors.iter();
        let mut next_drop = drops.iter().peekable();
        for clean_idx in 0..clean_len {
            if next_drop.peek().is_some_and(|d| d.index == clean_idx) {
                labels.push(next_drop.next().unwrap().label);
                continue;
            }
            let mut l = *next_survivor
                .next()
                .ok_or_else(|| Error::Dataset(format!("ledger does not match image `{id}`")))?;
            if let Some(p) = perturbed.get(&(id, clean_idx)) {
                l.bbox = p.original;
            }
            if let Some(f) = flipped.get(&(id, clean_idx)) {
                l.class_id = f.old_class;
            }
            labels.push(l);
        }
        img.labels = labels;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn grid_set(n_images: usize, per_image: usize) -> AnnotationSet {
        let mut set = AnnotationSet::new(vec!["a".into(), "b".into(), "c".into()]);
        for i in 0..n_images {
            let labels = (0..per_image)
                .map(|j| LabeledBox::new(bb(5.0 + 60.0 * j as f64, 10.0, 40.0, 30.0), (i + j) % 3))
                .collect();
            set.images
                .push(ImageRecord::new(format!("im{i:03}"), "x.png", 1024, 512).with_labels(labels));
        }
        set
    }

    #[test]
    fn presets_match_levels() {
        let l1 = level_preset(1).unwrap();
        assert_eq!(l1.drop_frac, 0.20);
        assert_eq!(l1.false_per_image, 1);
        assert_eq!(l1.eps_b, 0.1);
        assert_eq!(l1.noise_image_frac, 0.20);
        assert_eq!(l1.false_w_range, [10.0, 100.0]);
        let l2 = level_preset(2).unwrap();
        assert_eq!(l2.drop_frac, 0.50);
        assert_eq!(l2.false_per_image, 5);
        assert_eq!(l2.eps_b, 0.2);
        assert_eq!(l2.class_flip_frac, 0.0);
        assert!(level_preset(3).is_err());
    }

    #[test]
    fn zero_params_is_identity() {
        let set = grid_set(5, 4);
        let (out, ledger) = inject(&set, &ErrorParams::none()).unwrap();
        assert_eq!(out, set);
        assert!(ledger.is_empty());
    }

    #[test]
    fn perturbation_hand_case() {
        let p = perturb_box(&bb(100., 50., 40., 20.), 0.1, [1.0; 4], 1024., 512.);
        assert!((p.w() - 44.0).abs() < 1e-12);
        assert!((p.h() - 22.0).abs() < 1e-12);
        assert!((p.x() - 102.0).abs() < 1e-12);
        assert!((p.y() - 51.0).abs() < 1e-12);
    }

    #[test]
    fn perturbation_stays_in_frame() {
        let p = perturb_box(&bb(0., 0., 10., 10.), 0.5, [1.0, 1.0, -1.0, -1.0], 12., 12.);
        assert!(p.within(12., 12.));
        let tiny = perturb_box(&bb(5., 5., 1.0, 1.0), 0.9, [-1.0; 4], 12., 12.);
        assert!(tiny.w() >= 1.0 - 1e-12 && tiny.h() >= 1.0 - 1e-12);
    }

    #[test]
    fn drop_count_is_floor() {
        let set = grid_set(100, 10);
        let params = ErrorParams {
            drop_frac: 0.2,
            ..ErrorParams::none()
        };
        let (out, ledger) = inject(&set, &params).unwrap();
        assert_eq!(ledger.dropped.len(), 200);
        assert_eq!(out.num_boxes(), 800);
    }

    #[test]
    fn false_boxes_avoid_clean_boxes() {
        let set = grid_set(30, 8);
        let params = level_preset(2).unwrap().with_seed(3);
        let (_, ledger) = inject(&set, &params).unwrap();
        assert!(!ledger.added_false.is_empty());
        for f in &ledger.added_false {
            let clean = set.image(&f.image_id).unwrap();
            assert!(clean.labels.iter().all(|l| crate::geometry::iou(&l.bbox, &f.label.bbox) == 0.0));
        }
    }

    #[test]
    fn saturated_image_skips_placement() {
        let mut set = AnnotationSet::new(vec!["a".into()]);
        set.images.push(
            ImageRecord::new("full", "x.png", 50, 50).with_labels(vec![LabeledBox::new(bb(0., 0., 50., 50.), 0)]),
        );
        let params = level_preset(1).unwrap();
        let (out, ledger) = inject(&set, &params).unwrap();
        assert_eq!(ledger.skipped_false.len(), 1);
        assert_eq!(restore(&out, &ledger).unwrap(), set);
    }

    #[test]
    fn round_trips() {
        let set = grid_set(40, 6);
        for params in [level_preset(1).unwrap(), level_preset(2).unwrap(), ErrorParams::class_flips(0.2)] {
            for seed in 0..5 {
                let params = params.clone().with_seed(seed);
                let (out, ledger) = inject(&set, &params).unwrap();
                assert_ne!(out, set);
                assert_eq!(restore(&out, &ledger).unwrap(), set);
            }
        }
    }

    #[test]
    fn seeds_change_the_drop_sample() {
        let set = grid_set(50, 6);
        let a = inject(&set, &level_preset(1).unwrap().with_seed(1)).unwrap().1;
        let b = inject(&set, &level_preset(1).unwrap().with_seed(2)).unwrap().1;
        assert_ne!(a.dropped, b.dropped);
        let again = inject(&set, &level_preset(1).unwrap().with_seed(1)).unwrap().1;
        assert_eq!(a, again);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut s = ErrorParams::none();
        s.drop_frac = 1.5;
        assert!(inject(&grid_set(1, 1), &s).is_err());
        let mut s = ErrorParams::none();
        s.false_w_range = [50.0, 10.0];
        assert!(s.validate().is_err());
    }
}
