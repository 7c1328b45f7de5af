//! Pseudo-label selection: score filtering, the per-image retention and
//! class-rarity metrics, ranked removal of weak images, and the threshold
//! recommendation from validation predictions.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{distinct, AnnotationSet, DetectionSet, ImageDetections};
use crate::error::{Error, Result};
use crate::geometry::{greedy_match, Detection};
use crate::stats::ClassStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlsConfig {
    pub delta_s: f64,
    /// Low reference threshold giving each image's detection baseline.
    pub alpha: f64,
    /// Weight of the class metric in the combined score.
    pub beta: f64,
    /// Fraction of images to remove.
    pub removal_frac: f64,
}

impl Default for PlsConfig {
    fn default() -> Self {
        Self {
            delta_s: 0.4,
            alpha: 0.1,
            beta: 0.1,
            removal_frac: 0.2,
        }
    }
}

impl PlsConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        unit("delta_s", self.delta_s)?;
        unit("alpha", self.alpha)?;
        unit("beta", self.beta)?;
        unit("removal_frac", self.removal_frac)?;
        if self.alpha > self.delta_s {
            return Err(Error::Config(format!(
                "alpha {} exceeds delta_s {}",
                self.alpha, self.delta_s
            )));
        }
        Ok(())
    }
}

/// Keeps detections scoring at least `delta_s`; image order and per-image
/// order are preserved, and images left empty are kept.
pub fn filter_by_score(dets: &DetectionSet, delta_s: f64) -> DetectionSet {
    DetectionSet {
        variant: dets.variant.clone(),
        transform: dets.transform,
        images: dets
            .images
            .iter()
            .map(|img| ImageDetections {
                image_id: img.image_id.clone(),
                detections: img.detections.iter().filter(|d| d.score >= delta_s).copied().collect(),
            })
            .collect(),
    }
}

fn count_at(dets: &[Detection], thresh: f64) -> usize {
    dets.iter().filter(|d| d.score >= thresh).count()
}

/// Share of an image's reference-level detections that survive `delta_s`.
/// An image with nothing at the reference level scores 0.
pub fn score_metric(dets: &[Detection], delta_s: f64, alpha: f64) -> f64 {
    let base = count_at(dets, alpha);
    if base == 0 {
        return 0.0;
    }
    count_at(dets, delta_s) as f64 / base as f64
}

/// Mean of `1 - f_k / total` over the distinct classes in `class_ids`.
/// Returns 0 for an empty list or an empty dataset.
pub fn class_metric(class_ids: &[usize], stats: &ClassStats) -> f64 {
    let classes = distinct(class_ids.iter().copied());
    if classes.is_empty() || stats.total == 0 {
        return 0.0;
    }
    let total = stats.total as f64;
    classes.iter().map(|&k| 1.0 - stats.get(k) as f64 / total).sum::<f64>() / classes.len() as f64
}

pub fn d_metric(s: f64, c: f64, beta: f64) -> f64 {
    (1.0 - beta) * s + beta * c
}

/// Mean score of detections at or above `alpha`, 0 when there are none.
pub fn mean_score(dets: &[Detection], alpha: f64) -> f64 {
    let (sum, n) = dets
        .iter()
        .filter(|d| d.score >= alpha)
        .fold((0.0, 0usize), |(s, n), d| (s + d.score, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSelection {
    pub image_id: String,
    pub n_at_delta: usize,
    pub n_at_alpha: usize,
    pub s: f64,
    pub c: f64,
    pub d: f64,
    /// Mean score at the reference level, kept as a comparison baseline.
    pub mean_score: f64,
    pub kept: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub images: usize,
    pub kept: usize,
    pub removed: usize,
    /// Boxes at `delta_s` per class in kept images.
    pub kept_boxes_per_class: BTreeMap<usize, u64>,
    pub removed_boxes_per_class: BTreeMap<usize, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub config: PlsConfig,
    pub summary: SelectionSummary,
    /// One row per image, in input order.
    pub images: Vec<ImageSelection>,
}

impl SelectionReport {
    pub fn kept_ids(&self) -> impl Iterator<Item = &str> {
        self.images.iter().filter(|i| i.kept).map(|i| i.image_id.as_str())
    }
}

/// Number of images removed from `n` at fraction `frac` (rounded up).
pub fn removal_count(n: usize, frac: f64) -> usize {
    ((frac * n as f64).ceil() as usize).min(n)
}

/// Per-image metric rows for `dets`, with every row marked kept.
pub fn image_metrics(dets: &DetectionSet, cfg: &PlsConfig) -> Vec<ImageSelection> {
    let at_alpha: Vec<usize> = dets
        .images
        .iter()
        .flat_map(|i| i.detections.iter().filter(|d| d.score >= cfg.alpha).map(|d| d.class_id))
        .collect();
    let k = at_alpha.iter().max().map_or(0, |m| m + 1);
    let stats = ClassStats::from_class_ids(k, at_alpha);

    dets.images
        .par_iter()
        .map(|img| {
            let classes: Vec<usize> = img
                .detections
                .iter()
                .filter(|d| d.score >= cfg.alpha)
                .map(|d| d.class_id)
                .collect();
            let s = score_metric(&img.detections, cfg.delta_s, cfg.alpha);
            let c = class_metric(&classes, &stats);
            ImageSelection {
                image_id: img.image_id.clone(),
                n_at_delta: count_at(&img.detections, cfg.delta_s),
                n_at_alpha: classes.len(),
                s,
                c,
                d: d_metric(s, c, cfg.beta),
                mean_score: mean_score(&img.detections, cfg.alpha),
                kept: true,
            }
        })
        .collect()
}

/// Ranks images by the combined metric (ascending, ties by image id) and
/// removes the lowest `ceil(removal_frac * l)`.
pub fn select(dets: &DetectionSet, cfg: &PlsConfig) -> Result<SelectionReport> {
    cfg.validate()?;
    let mut rows = image_metrics(dets, cfg);

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| rows[a].d.total_cmp(&rows[b].d).then_with(|| rows[a].image_id.cmp(&rows[b].image_id)));
    let removed = removal_count(rows.len(), cfg.removal_frac);
    for &i in &order[..removed] {
        rows[i].kept = false;
    }

    let mut summary = SelectionSummary {
        images: rows.len(),
        kept: rows.len() - removed,
        removed,
        ..Default::default()
    };
    for (row, img) in rows.iter().zip(&dets.images) {
        let bucket = if row.kept {
            &mut summary.kept_boxes_per_class
        } else {
            &mut summary.removed_boxes_per_class
        };
        for d in img.detections.iter().filter(|d| d.score >= cfg.delta_s) {
            *bucket.entry(d.class_id).or_insert(0) += 1;
        }
    }
    Ok(SelectionReport {
        config: *cfg,
        summary,
        images: rows,
    })
}

/// Pseudo-labels to train on: kept images only, filtered at `delta_s`.
pub fn kept_detections(dets: &DetectionSet, report: &SelectionReport) -> DetectionSet {
    let kept: HashMap<&str, bool> = report.images.iter().map(|r| (r.image_id.as_str(), r.kept)).collect();
    let mut out = filter_by_score(dets, report.config.delta_s);
    out.images.retain(|i| kept.get(i.image_id.as_str()).copied().unwrap_or(false));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecommendation {
    pub delta_s: f64,
    pub matched: usize,
    pub match_iou: f64,
}

/// Mean score of predictions matched (class-agnostic) to validation GT.
pub fn recommend_threshold(preds: &DetectionSet, gt: &AnnotationSet, match_iou: f64) -> Result<ThresholdRecommendation> {
    let by_id = preds.by_id();
    let mut sum = 0.0;
    let mut matched = 0usize;
    for img in &gt.images {
        let Some(dets) = by_id.get(img.image_id.as_str()) else {
            continue;
        };
        let m = greedy_match(&img.labels, dets, match_iou);
        for p in &m.pairs {
            sum += dets[p.pred].score;
            matched += 1;
        }
    }
    if matched == 0 {
        return Err(Error::NoMatchedDetections);
    }
    Ok(ThresholdRecommendation {
        delta_s: sum / matched as f64,
        matched,
        match_iou,
    })
}
