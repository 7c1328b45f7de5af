//! Class frequencies, the per-image rarity score and its linear scaling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{distinct, AnnotationSet, DetectionSet};
use crate::error::{Error, Result};

/// Frequencies below this value are raised to it before taking the log, so
/// that a class seen once still gets a finite (and maximal) rarity term.
pub const DEFAULT_LOG_FLOOR: u64 = 2;

/// Per-class box counts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassStats {
    pub freq: BTreeMap<usize, u64>,
    pub total: u64,
}

impl ClassStats {
    pub fn from_class_ids(num_classes: usize, ids: impl IntoIterator<Item = usize>) -> Self {
        let mut freq: BTreeMap<usize, u64> = (0..num_classes).map(|k| (k, 0)).collect();
        let mut total = 0;
        for id in ids {
            *freq.entry(id).or_insert(0) += 1;
            total += 1;
        }
        Self { freq, total }
    }

    pub fn get(&self, class_id: usize) -> u64 {
        self.freq.get(&class_id).copied().unwrap_or(0)
    }

    /// Class ids ordered from rarest to most common (ties by id).
    pub fn rarest_first(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.freq.keys().copied().collect();
        ids.sort_by_key(|k| (self.get(*k), *k));
        ids
    }
}

/// Box counts per class over every image of an annotation set.
pub fn class_frequencies(set: &AnnotationSet) -> ClassStats {
    ClassStats::from_class_ids(
        set.num_classes(),
        set.images.iter().flat_map(|i| i.labels.iter().map(|l| l.class_id)),
    )
}

/// Box counts per class over every image of a detection set.
pub fn detection_frequencies(set: &DetectionSet) -> ClassStats {
    let k = set.max_class_id().map_or(0, |m| m + 1);
    ClassStats::from_class_ids(
        k,
        set.images.iter().flat_map(|i| i.detections.iter().map(|d| d.class_id)),
    )
}

/// Mean inverse-log frequency over the distinct classes present.
///
/// Returns 0 for an image without boxes. Frequencies are floored at
/// `log_floor` (at least 2) before the natural log is taken.
pub fn rarity_score(
    class_ids: impl IntoIterator<Item = usize>,
    stats: &ClassStats,
    log_floor: u64,
) -> Result<f64> {
    let classes = distinct(class_ids);
    if classes.is_empty() {
        return Ok(0.0);
    }
    let floor = log_floor.max(2);
    let mut sum = 0.0;
    for k in &classes {
        let f = *stats
            .freq
            .get(k)
            .ok_or_else(|| Error::Dataset(format!("class {k} missing from class statistics")))?;
        sum += 1.0 / (f.max(floor) as f64).ln();
    }
    Ok(sum / classes.len() as f64)
}

/// Linearly maps scores onto `[1, gamma_f]`: min to 1, max to `gamma_f`.
/// A constant input maps to all ones.
pub fn scale_scores(raw: &[f64], gamma_f: f64) -> Result<Vec<f64>> {
    if !(gamma_f > 1.0 && gamma_f.is_finite()) {
        return Err(Error::Config(format!("gamma_f must be > 1, got {gamma_f}")));
    }
    if raw.is_empty() {
        return Err(Error::Empty("cannot scale an empty score list"));
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range <= 0.0 {
        return Ok(vec![1.0; raw.len()]);
    }
    Ok(raw
        .iter()
        .map(|r| 1.0 + (r - lo) / range * (gamma_f - 1.0))
        .collect())
}

/// Raw and scaled rarity of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub image_id: String,
    pub raw_f: f64,
    pub scaled_f: f64,
}

/// Rarity scores for every image of `set`, in set order.
pub fn image_scores(set: &AnnotationSet, stats: &ClassStats, gamma_f: f64) -> Result<Vec<ImageScore>> {
    let raw = set
        .images
        .iter()
        .map(|img| rarity_score(img.labels.iter().map(|l| l.class_id), stats, DEFAULT_LOG_FLOOR))
        .collect::<Result<Vec<_>>>()?;
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    let scaled = scale_scores(&raw, gamma_f)?;
    Ok(set
        .images
        .iter()
        .zip(raw.into_iter().zip(scaled))
        .map(|(img, (raw_f, scaled_f))| ImageScore {
            image_id: img.image_id.clone(),
            raw_f,
            scaled_f,
        })
        .collect())
}

/// Per-image weights for a re-weighting trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageWeights {
    pub gamma_f: f64,
    pub weights: Vec<ImageWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageWeight {
    pub image_id: String,
    pub weight: f64,
}

pub fn export_weights(set: &AnnotationSet, gamma_f: f64) -> Result<ImageWeights> {
    let stats = class_frequencies(set);
    let scores = image_scores(set, &stats, gamma_f)?;
    Ok(ImageWeights {
        gamma_f,
        weights: scores
            .into_iter()
            .map(|s| ImageWeight {
                image_id: s.image_id,
                weight: s.scaled_f,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ImageRecord;
    use crate::geometry::{BBox, LabeledBox};
    use proptest::prelude::*;

    fn stats(pairs: &[(usize, u64)]) -> ClassStats {
        let freq: BTreeMap<usize, u64> = pairs.iter().copied().collect();
        let total = freq.values().sum();
        ClassStats { freq, total }
    }

    fn image(id: &str, classes: &[usize]) -> ImageRecord {
        let labels = classes
            .iter()
            .enumerate()
            .map(|(i, &c)| LabeledBox::new(BBox::new(i as f64, 0.0, 1.0, 1.0).unwrap(), c))
            .collect();
        ImageRecord::new(id, format!("{id}.png"), 64, 64).with_labels(labels)
    }

    #[test]
    fn frequencies_count_boxes() {
        let mut set = AnnotationSet::new(vec!["A".into(), "B".into()]);
        set.images.push(image("1", &[0, 0]));
        set.images.push(image("2", &[1]));
        let s = class_frequencies(&set);
        assert_eq!(s.get(0), 2);
        assert_eq!(s.get(1), 1);
        assert_eq!(s.total, 3);

        let empty = class_frequencies(&AnnotationSet::new(vec!["A".into()]));
        assert_eq!(empty.get(0), 0);
        assert_eq!(empty.total, 0);
    }

    #[test]
    fn rarity_hand_values() {
        let s = stats(&[(0, 10), (1, 100)]);
        let both = rarity_score([0, 1], &s, 2).unwrap();
        assert!((both - 0.325721).abs() < 1e-6, "{both}");
        // duplicate boxes of one class count once
        let only_a = rarity_score([0, 0, 0], &s, 2).unwrap();
        assert!((only_a - 0.434294).abs() < 1e-6, "{only_a}");
        let floored = rarity_score([0], &stats(&[(0, 1)]), 2).unwrap();
        assert!((floored - 1.0 / 2f64.ln()).abs() < 1e-12);
        assert!((floored - 1.442695).abs() < 1e-6);
        assert_eq!(rarity_score([], &s, 2).unwrap(), 0.0);
        assert!(rarity_score([5], &s, 2).is_err());
    }

    #[test]
    fn scaling_examples() {
        let out = scale_scores(&[0.2, 0.3, 0.4], 20.0).unwrap();
        for (got, want) in out.iter().zip([1.0, 10.5, 20.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert_eq!(scale_scores(&[0.7], 5.0).unwrap(), vec![1.0]);
        assert_eq!(scale_scores(&[5.0, 5.0, 5.0], 5.0).unwrap(), vec![1.0; 3]);
        assert!(scale_scores(&[1.0], 1.0).is_err());
        assert!(scale_scores(&[], 2.0).is_err());
    }

    #[test]
    fn weights_hit_scaling_endpoints() {
        let mut set = AnnotationSet::new(vec!["A".into(), "B".into()]);
        set.images.push(image("common", &[0, 0, 0]));
        set.images.push(image("rare", &[1]));
        let w = export_weights(&set, 20.0).unwrap();
        assert_eq!(w.weights[0].weight, 1.0);
        assert_eq!(w.weights[1].weight, 20.0);

        let mut uniform = AnnotationSet::new(vec!["A".into()]);
        uniform.images.push(image("a", &[0]));
        uniform.images.push(image("b", &[0]));
        let w = export_weights(&uniform, 20.0).unwrap();
        assert!(w.weights.iter().all(|w| w.weight == 1.0));
    }

    proptest! {
        #[test]
        fn scaling_preserves_order(raw in prop::collection::vec(0.0..5.0f64, 1..30), gamma in 1.5..50.0f64) {
            let scaled = scale_scores(&raw, gamma).unwrap();
            for i in 0..raw.len() {
                prop_assert!(scaled[i] >= 1.0 - 1e-12 && scaled[i] <= gamma + 1e-9);
                for j in 0..raw.len() {
                    if raw[i] < raw[j] {
                        prop_assert!(scaled[i] <= scaled[j]);
                    }
                }
            }
        }

        #[test]
        fn lowering_a_frequency_never_lowers_the_score(
            freqs in prop::collection::vec(1u64..1000, 1..8),
            which in 0usize..8,
            drop in 1u64..500,
        ) {
            let k = which % freqs.len();
            let table: Vec<(usize, u64)> = freqs.iter().copied().enumerate().collect();
            let before = rarity_score(0..freqs.len(), &stats(&table), 2).unwrap();
            let mut lowered = table.clone();
            lowered[k].1 = lowered[k].1.saturating_sub(drop).max(1);
            let after = rarity_score(0..freqs.len(), &stats(&lowered), 2).unwrap();
            prop_assert!(after >= before);
        }
    }
}
