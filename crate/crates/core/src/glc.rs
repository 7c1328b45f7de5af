//! Ground-truth label correction from teacher predictions.
//!
//! The teacher is run (outside this crate) on the original images and on a
//! few augmented copies. A prediction that survives every augmentation with
//! high IoU is considered reliable and may remove, add or fix GT labels:
//!
//! 1. a GT box that no prediction above `delta_floor` even touches is false;
//! 2. a GT box paired with a consistent prediction at IoU below `gamma_o` is
//!    replaced by the prediction (and its class fixed on disagreement);
//! 3. a consistent prediction not covered by any GT box becomes a new label.
//!
//! The steps run in that order on each image.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationSet, DetectionSet};
use crate::error::{Error, Result};
use crate::geometry::{greedy_match, iou, BBox, Detection, LabeledBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlcConfig {
    /// Score floor for predictions considered by the false-GT check.
    pub delta_floor: f64,
    /// Score floor for predictions allowed to add or replace labels.
    pub delta_s: f64,
    /// Consistency threshold on the mean IoU across augmentations.
    pub gamma_c: f64,
    /// Pairs at or above this IoU are left untouched.
    pub gamma_o: f64,
    pub match_iou: f64,
}

impl Default for GlcConfig {
    fn default() -> Self {
        Self {
            delta_floor: 0.1,
            delta_s: 0.4,
            gamma_c: 0.9,
            gamma_o: 0.9,
            match_iou: 0.5,
        }
    }
}

impl GlcConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        unit("delta_floor", self.delta_floor)?;
        unit("delta_s", self.delta_s)?;
        unit("gamma_c", self.gamma_c)?;
        unit("gamma_o", self.gamma_o)?;
        unit("match_iou", self.match_iou)?;
        if self.delta_floor > self.delta_s {
            return Err(Error::Config(format!(
                "delta_floor {} exceeds delta_s {}",
                self.delta_floor, self.delta_s
            )));
        }
        Ok(())
    }
}

/// Agreement of one original-frame detection with its augmented copies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRecord {
    pub detection_index: usize,
    /// Matched IoU per augmented variant, 0 when unmatched.
    pub variant_ious: Vec<f64>,
    pub mu_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageConsistency {
    pub image_id: String,
    pub records: Vec<ConsistencyRecord>,
}

/// Consistency records for one image. `variants` hold boxes already mapped
/// back to the original frame.
pub fn image_consistency(original: &[Detection], variants: &[Vec<BBox>], match_iou: f64) -> Vec<ConsistencyRecord> {
    let mut per_det: Vec<Vec<f64>> = vec![Vec::with_capacity(variants.len()); original.len()];
    for boxes in variants {
        let m = greedy_match(original, boxes, match_iou);
        let paired = m.pred_for_gt(original.len());
        for (i, p) in paired.into_iter().enumerate() {
            per_det[i].push(p.map_or(0.0, |p| p.iou));
        }
    }
    per_det
        .into_iter()
        .enumerate()
        .map(|(i, ious)| ConsistencyRecord {
            detection_index: i,
            mu_iou: if ious.is_empty() {
                0.0
            } else {
                ious.iter().sum::<f64>() / ious.len() as f64
            },
            variant_ious: ious,
        })
        .collect()
}

/// Consistency of every detection in `original` against each augmented set.
///
/// Augmented boxes are mapped to the original frame through the inverse of
/// their set's transform. A flip without a stored width takes the width of
/// the image from `frames`. Images missing from an augmented set count as
/// having no detections there.
pub fn consistency(
    original: &DetectionSet,
    augmented: &[DetectionSet],
    cfg: &GlcConfig,
    frames: Option<&AnnotationSet>,
) -> Result<Vec<ImageConsistency>> {
    if augmented.is_empty() {
        return Err(Error::NoAugmentedVariants);
    }
    cfg.validate()?;
    let widths: HashMap<&str, f64> = frames
        .map(|f| f.images.iter().map(|i| (i.image_id.as_str(), i.width_f())).collect())
        .unwrap_or_default();
    let lookups: Vec<HashMap<&str, &[Detection]>> = augmented.iter().map(DetectionSet::by_id).collect();

    original
        .images
        .par_iter()
        .map(|img| {
            let width = widths.get(img.image_id.as_str()).copied().unwrap_or(f64::NAN);
            let mut variants = Vec::with_capacity(augmented.len());
            for (set, lookup) in augmented.iter().zip(&lookups) {
                let back = set.transform.resolve(width).inverse();
                let dets = lookup.get(img.image_id.as_str()).copied().unwrap_or_default();
                let boxes = dets
                    .iter()
                    .map(|d| back.apply(&d.bbox))
                    .collect::<Result<Vec<_>>>()?;
                variants.push(boxes);
            }
            Ok(ImageConsistency {
                image_id: img.image_id.clone(),
                records: image_consistency(&img.detections, &variants, cfg.match_iou),
            })
        })
        .collect()
}

/// Indices of GT boxes that intersect no prediction scoring at least `delta_floor`.
pub fn detect_false_gt(gt: &[LabeledBox], preds: &[Detection], cfg: &GlcConfig) -> Vec<usize> {
    let live: Vec<&BBox> = preds
        .iter()
        .filter(|p| p.score >= cfg.delta_floor)
        .map(|p| &p.bbox)
        .collect();
    gt.iter()
        .enumerate()
        .filter(|(_, g)| live.iter().all(|p| !g.bbox.intersects(p)))
        .map(|(i, _)| i)
        .collect()
}

fn is_reliable(pred: &Detection, record: Option<&ConsistencyRecord>, cfg: &GlcConfig) -> Option<f64> {
    let mu = record?.mu_iou;
    (pred.score >= cfg.delta_s && mu > cfg.gamma_c).then_some(mu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromotedBox {
    pub label: LabeledBox,
    pub detection_index: usize,
    pub score: f64,
    pub mu_iou: f64,
}

/// Consistent predictions with no existing box at `match_iou` or above.
///
/// `records` are indexed by detection index.
pub fn detect_missing_gt(
    existing: &[BBox],
    records: &[ConsistencyRecord],
    preds: &[Detection],
    cfg: &GlcConfig,
) -> Vec<PromotedBox> {
    preds
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let mu = is_reliable(p, records.get(i), cfg)?;
            let covered = existing.iter().any(|e| iou(e, &p.bbox) >= cfg.match_iou);
            (!covered).then(|| PromotedBox {
                label: LabeledBox::new(p.bbox, p.class_id),
                detection_index: i,
                score: p.score,
                mu_iou: mu,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxReplacement {
    pub gt_index: usize,
    pub old_box: BBox,
    pub new_box: BBox,
    /// IoU between the old GT box and the prediction.
    pub iou: f64,
    pub mu_iou: f64,
    pub old_class: usize,
    /// Set when the class was corrected along with the box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_class: Option<usize>,
    pub detection_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCorrection {
    pub gt_index: usize,
    pub old_class: usize,
    pub new_class: usize,
    pub mu_iou: f64,
    pub detection_index: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoisyOutcome {
    pub replacements: Vec<BoxReplacement>,
    pub class_corrections: Vec<ClassCorrection>,
    /// Detection indices paired with some GT box, corrected or not.
    pub paired_detections: Vec<usize>,
}

/// Pairs GT with predictions scoring at least `delta_s` and fixes boxes and
/// classes where the paired prediction is consistent. Indices refer to `gt`
/// and `preds`.
pub fn correct_noisy_gt(
    gt: &[LabeledBox],
    records: &[ConsistencyRecord],
    preds: &[Detection],
    cfg: &GlcConfig,
) -> NoisyOutcome {
    let candidates: Vec<usize> = (0..preds.len()).filter(|&i| preds[i].score >= cfg.delta_s).collect();
    let boxes: Vec<&BBox> = candidates.iter().map(|&i| &preds[i].bbox).collect();
    let matching = greedy_match(gt, &boxes, cfg.match_iou);

    let mut out = NoisyOutcome::default();
    let mut pairs = matching.pairs;
    pairs.sort_by_key(|p| p.gt);
    for pair in pairs {
        let di = candidates[pair.pred];
        out.paired_detections.push(di);
        let p = &preds[di];
        let Some(mu) = is_reliable(p, records.get(di), cfg) else {
            continue;
        };
        let g = &gt[pair.gt];
        let class_change = (p.class_id != g.class_id).then_some(p.class_id);
        if pair.iou < cfg.gamma_o {
            out.replacements.push(BoxReplacement {
                gt_index: pair.gt,
                old_box: g.bbox,
                new_box: p.bbox,
                iou: pair.iou,
                mu_iou: mu,
                old_class: g.class_id,
                new_class: class_change,
                detection_index: di,
            });
        } else if let Some(new_class) = class_change {
            out.class_corrections.push(ClassCorrection {
                gt_index: pair.gt,
                old_class: g.class_id,
                new_class,
                mu_iou: mu,
                detection_index: di,
            });
        }
    }
    out.paired_detections.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemovedBox {
    pub gt_index: usize,
    pub label: LabeledBox,
    pub reason: String,
}

/// Corrections for one image. GT indices refer to the uncorrected label list;
/// each index appears in at most one category.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImageCorrections {
    pub image_id: String,
    pub removed_false_gt: Vec<RemovedBox>,
    pub added_missing_gt: Vec<PromotedBox>,
    pub replaced_noisy_boxes: Vec<BoxReplacement>,
    pub corrected_classes: Vec<ClassCorrection>,
}

impl ImageCorrections {
    pub fn is_empty(&self) -> bool {
        self.removed_false_gt.is_empty()
            && self.added_missing_gt.is_empty()
            && self.replaced_noisy_boxes.is_empty()
            && self.corrected_classes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorrectionSummary {
    pub images_checked: usize,
    pub images_corrected: usize,
    pub removed_false_gt: usize,
    pub added_missing_gt: usize,
    pub replaced_noisy_boxes: usize,
    pub corrected_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub config: GlcConfig,
    pub summary: CorrectionSummary,
    /// Images with at least one correction, ordered by image id.
    pub images: Vec<ImageCorrections>,
}

/// Runs all three checks on one image.
pub fn correct_image(
    image_id: &str,
    labels: &[LabeledBox],
    preds: &[Detection],
    records: &[ConsistencyRecord],
    cfg: &GlcConfig,
) -> ImageCorrections {
    let false_idx = detect_false_gt(labels, preds, cfg);
    let kept: Vec<usize> = (0..labels.len()).filter(|i| false_idx.binary_search(i).is_err()).collect();
    let kept_labels: Vec<LabeledBox> = kept.iter().map(|&i| labels[i]).collect();

    let noisy = correct_noisy_gt(&kept_labels, records, preds, cfg);

    // Promotions are checked against the surviving boxes and every paired
    // prediction; the latter covers each replacement box.
    let existing: Vec<BBox> = kept_labels
        .iter()
        .map(|l| l.bbox)
        .chain(noisy.paired_detections.iter().map(|&d| preds[d].bbox))
        .collect();
    let added = detect_missing_gt(&existing, records, preds, cfg);

    ImageCorrections {
        image_id: image_id.to_string(),
        removed_false_gt: false_idx
            .iter()
            .map(|&i| RemovedBox {
                gt_index: i,
                label: labels[i],
                reason: format!("no prediction with score >= {} intersects the box", cfg.delta_floor),
            })
            .collect(),
        added_missing_gt: added,
        replaced_noisy_boxes: noisy
            .replacements
            .into_iter()
            .map(|r| BoxReplacement {
                gt_index: kept[r.gt_index],
                ..r
            })
            .collect(),
        corrected_classes: noisy
            .class_corrections
            .into_iter()
            .map(|c| ClassCorrection {
                gt_index: kept[c.gt_index],
                ..c
            })
            .collect(),
    }
}

/// Full correction pass over `set` given predictions on the original images
/// and on each augmented variant. Images absent from `original` are skipped.
pub fn run(
    set: &AnnotationSet,
    original: &DetectionSet,
    augmented: &[DetectionSet],
    cfg: &GlcConfig,
) -> Result<CorrectionReport> {
    let records = consistency(original, augmented, cfg, Some(set))?;
    let by_image: HashMap<&str, (&[Detection], &[ConsistencyRecord])> = original
        .images
        .iter()
        .zip(&records)
        .map(|(img, rec)| (img.image_id.as_str(), (img.detections.as_slice(), rec.records.as_slice())))
        .collect();

    let mut checked: Vec<(usize, &str, &[Detection], &[ConsistencyRecord])> = set
        .images
        .iter()
        .enumerate()
        .filter_map(|(ii, img)| {
            by_image
                .get(img.image_id.as_str())
                .map(|(d, r)| (ii, img.image_id.as_str(), *d, *r))
        })
        .collect();
    checked.sort_by(|a, b| a.1.cmp(b.1));

    let images: Vec<ImageCorrections> = checked
        .par_iter()
        .map(|(ii, id, dets, recs)| correct_image(id, &set.images[*ii].labels, dets, recs, cfg))
        .filter(|c| !c.is_empty())
        .collect();

    let summary = CorrectionSummary {
        images_checked: checked.len(),
        images_corrected: images.len(),
        removed_false_gt: images.iter().map(|i| i.removed_false_gt.len()).sum(),
        added_missing_gt: images.iter().map(|i| i.added_missing_gt.len()).sum(),
        replaced_noisy_boxes: images.iter().map(|i| i.replaced_noisy_boxes.len()).sum(),
        corrected_classes: images.iter().map(|i| i.corrected_classes.len()).sum(),
    };
    Ok(CorrectionReport {
        config: *cfg,
        summary,
        images,
    })
}

/// Applies a report to a copy of `set`. Per image: removals, then box and
/// class fixes, then additions appended after the remaining labels.
pub fn apply_corrections(set: &AnnotationSet, report: &CorrectionReport) -> Result<AnnotationSet> {
    let index = set.index();
    let mut out = set.clone();
    for corr in &report.images {
        let &ii = index
            .get(corr.image_id.as_str())
            .ok_or_else(|| Error::UnknownImage(corr.image_id.clone()))?;
        let img = &mut out.images[ii];
        let n = img.labels.len();
        let check = |i: usize| {
            if i < n {
                Ok(i)
            } else {
                Err(Error::Dataset(format!(
                    "correction for `{}` references label {i} of {n}",
                    corr.image_id
                )))
            }
        };
        let mut labels: Vec<Option<LabeledBox>> = img.labels.iter().copied().map(Some).collect();
        for r in &corr.replaced_noisy_boxes {
            let l = labels[check(r.gt_index)?].as_mut().expect("not yet removed");
            l.bbox = r.new_box;
            if let Some(c) = r.new_class {
                l.class_id = c;
            }
        }
        for c in &corr.corrected_classes {
            labels[check(c.gt_index)?].as_mut().expect("not yet removed").class_id = c.new_class;
        }
        for r in &corr.removed_false_gt {
            labels[check(r.gt_index)?] = None;
        }
        img.labels = labels.into_iter().flatten().collect();
        img.labels.extend(corr.added_missing_gt.iter().map(|a| a.label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ImageRecord;
    use crate::geometry::BoxTransform;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn det(b: BBox, class_id: usize, score: f64) -> Detection {
        Detection::new(b, class_id, score).unwrap()
    }

    fn rec(i: usize, mu: f64) -> ConsistencyRecord {
        ConsistencyRecord {
            detection_index: i,
            variant_ious: vec![mu],
            mu_iou: mu,
        }
    }

    #[test]
    fn perfect_consistency_is_one() {
        let orig = [det(bb(0., 0., 10., 10.), 0, 0.9)];
        let variants = vec![vec![bb(0., 0., 10., 10.)]; 3];
        let r = image_consistency(&orig, &variants, 0.5);
        assert_eq!(r[0].mu_iou, 1.0);
        assert_eq!(r[0].variant_ious.len(), 3);
    }

    #[test]
    fn unmatched_variant_counts_zero() {
        // variant 1 matches at IoU 0.8, variant 2 has nothing
        let orig = [det(bb(0., 0., 10., 10.), 0, 0.9)];
        let v1 = vec![bb(0., 0., 8., 10.)];
        let r = image_consistency(&orig, &[v1, vec![]], 0.5);
        assert!((r[0].mu_iou - 0.4).abs() < 1e-12);
    }

    #[test]
    fn flipped_variant_maps_back() {
        let mut original = DetectionSet::default();
        original.push("a", det(bb(10., 20., 30., 40.), 0, 0.9));
        let mut flipped = DetectionSet::new("hflip", BoxTransform::hflip(100.));
        flipped.push("a", det(bb(60., 20., 30., 40.), 0, 0.9));
        let r = consistency(&original, &[flipped], &GlcConfig::default(), None).unwrap();
        assert_eq!(r[0].records[0].mu_iou, 1.0);
    }

    #[test]
    fn flip_width_can_come_from_frames() {
        let mut original = DetectionSet::default();
        original.push("a", det(bb(10., 20., 30., 40.), 0, 0.9));
        let mut flipped = DetectionSet::new("hflip", BoxTransform::Hflip { image_width: None });
        flipped.push("a", det(bb(60., 20., 30., 40.), 0, 0.9));
        assert!(consistency(&original, &[flipped.clone()], &GlcConfig::default(), None).is_err());
        let mut frames = AnnotationSet::new(vec!["x".into()]);
        frames.images.push(ImageRecord::new("a", "a.png", 100, 100));
        let r = consistency(&original, &[flipped], &GlcConfig::default(), Some(&frames)).unwrap();
        assert_eq!(r[0].records[0].mu_iou, 1.0);
    }

    #[test]
    fn consistency_needs_variants() {
        assert!(matches!(
            consistency(&DetectionSet::default(), &[], &GlcConfig::default(), None),
            Err(Error::NoAugmentedVariants)
        ));
    }

    #[test]
    fn false_gt_uses_intersection_at_low_score() {
        let cfg = GlcConfig::default();
        let gt = [
            LabeledBox::new(bb(0., 0., 10., 10.), 0),
            LabeledBox::new(bb(100., 100., 10., 10.), 0),
        ];
        let preds = [det(bb(8., 8., 10., 10.), 0, 0.12), det(bb(100., 100., 10., 10.), 0, 0.05)];
        assert_eq!(detect_false_gt(&gt, &preds, &cfg), vec![1]);
    }

    #[test]
    fn missing_gt_promotion() {
        let cfg = GlcConfig::default();
        let preds = [det(bb(50., 50., 10., 10.), 1, 0.8)];
        let promoted = detect_missing_gt(&[], &[rec(0, 0.95)], &preds, &cfg);
        assert_eq!(promoted.len(), 1);
        assert_eq!(promoted[0].label.class_id, 1);
        // already represented by a GT box at IoU 0.6
        let existing = [bb(50., 50., 10., 6.)];
        assert!((iou(&existing[0], &preds[0].bbox) - 0.6).abs() < 1e-12);
        assert!(detect_missing_gt(&existing, &[rec(0, 0.95)], &preds, &cfg).is_empty());
        // inconsistent or low score
        assert!(detect_missing_gt(&[], &[rec(0, 0.5)], &preds, &cfg).is_empty());
        let weak = [det(bb(50., 50., 10., 10.), 1, 0.3)];
        assert!(detect_missing_gt(&[], &[rec(0, 0.95)], &weak, &cfg).is_empty());
    }

    #[test]
    fn noisy_replacement_thresholds() {
        let cfg = GlcConfig::default();
        let gt = [LabeledBox::new(bb(0., 0., 10., 10.), 0)];
        // IoU 0.7
        let preds = [det(bb(0., 0., 7., 10.), 0, 0.9)];
        let out = correct_noisy_gt(&gt, &[rec(0, 0.95)], &preds, &cfg);
        assert_eq!(out.replacements.len(), 1);
        assert_eq!(out.replacements[0].new_box, preds[0].bbox);
        // IoU 0.95 is at or above gamma_o
        let close = [det(bb(0., 0., 9.5, 10.), 0, 0.9)];
        let out = correct_noisy_gt(&gt, &[rec(0, 1.0)], &close, &cfg);
        assert!(out.replacements.is_empty() && out.class_corrections.is_empty());
        assert_eq!(out.paired_detections, vec![0]);
        // not consistent
        let out = correct_noisy_gt(&gt, &[rec(0, 0.85)], &preds, &cfg);
        assert!(out.replacements.is_empty());
    }

    #[test]
    fn class_disagreement_is_corrected() {
        let cfg = GlcConfig::default();
        let gt = [LabeledBox::new(bb(0., 0., 10., 10.), 2)];
        let preds = [det(bb(0., 0., 10., 10.), 1, 0.9)];
        let out = correct_noisy_gt(&gt, &[rec(0, 1.0)], &preds, &cfg);
        assert_eq!(out.class_corrections.len(), 1);
        assert_eq!(out.class_corrections[0].new_class, 1);
        // box and class fixed together land in one category
        let loose = [det(bb(0., 0., 7., 10.), 1, 0.9)];
        let out = correct_noisy_gt(&gt, &[rec(0, 1.0)], &loose, &cfg);
        assert_eq!(out.replacements[0].new_class, Some(1));
        assert!(out.class_corrections.is_empty());
    }

    fn two_box_set() -> AnnotationSet {
        let mut set = AnnotationSet::new(vec!["a".into(), "b".into()]);
        set.images.push(ImageRecord::new("i", "i.png", 100, 100).with_labels(vec![
            LabeledBox::new(bb(0., 0., 10., 10.), 0),
            LabeledBox::new(bb(50., 50., 10., 10.), 1),
        ]));
        set
    }

    #[test]
    fn apply_empty_report_is_identity() {
        let set = two_box_set();
        let report = CorrectionReport {
            config: GlcConfig::default(),
            summary: CorrectionSummary::default(),
            images: vec![],
        };
        assert_eq!(apply_corrections(&set, &report).unwrap(), set);
    }

    #[test]
    fn apply_removal_keeps_other_box() {
        let set = two_box_set();
        let report = CorrectionReport {
            config: GlcConfig::default(),
            summary: CorrectionSummary::default(),
            images: vec![ImageCorrections {
                image_id: "i".into(),
                removed_false_gt: vec![RemovedBox {
                    gt_index: 0,
                    label: set.images[0].labels[0],
                    reason: String::new(),
                }],
                ..Default::default()
            }],
        };
        let out = apply_corrections(&set, &report).unwrap();
        assert_eq!(out.images[0].labels, vec![set.images[0].labels[1]]);
        assert_eq!(set.images[0].labels.len(), 2);
    }

    #[test]
    fn images_outside_the_bundle_are_untouched() {
        let set = two_box_set();
        let original = DetectionSet::default();
        let aug = DetectionSet::new("blur", BoxTransform::Identity);
        let report = run(&set, &original, &[aug], &GlcConfig::default()).unwrap();
        assert_eq!(report.summary.images_checked, 0);
        assert!(report.images.is_empty());
    }

    #[test]
    fn end_to_end_single_image() {
        let set = two_box_set();
        let mut original = DetectionSet::default();
        original.images.push(crate::dataset::ImageDetections {
            image_id: "i".into(),
            detections: vec![
                det(bb(50., 50., 10., 10.), 0, 0.9),
                det(bb(20., 20., 10., 10.), 1, 0.8),
            ],
        });
        let mut aug = original.clone();
        aug.variant = "blur".into();
        let report = run(&set, &original, &[aug], &GlcConfig::default()).unwrap();
        let c = &report.images[0];
        assert_eq!(c.removed_false_gt.len(), 1);
        assert_eq!(c.corrected_classes.len(), 1);
        assert_eq!(c.added_missing_gt.len(), 1);
        let fixed = apply_corrections(&set, &report).unwrap();
        assert_eq!(
            fixed.images[0].labels,
            vec![LabeledBox::new(bb(50., 50., 10., 10.), 0), LabeledBox::new(bb(20., 20., 10., 10.), 1)]
        );
    }
}
