//! Pseudo-label quality against reference labels, and ROC analysis of
//! per-image selection metrics.
//!
//! Matching here is class-agnostic: a box found with the wrong class counts
//! against accuracy, not as a miss.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationSet, DetectionSet};
use crate::error::{Error, Result};
use crate::geometry::{greedy_match, Detection, LabeledBox};
use crate::pls::{image_metrics, mean_score, PlsConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageQuality {
    pub image_id: String,
    pub n_gt: usize,
    pub n_pred: usize,
    pub n_matched: usize,
    pub n_class_agree: usize,
    pub iou_sum: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mdr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub udr: Option<f64>,
}

/// Micro-averaged metrics over every box. A metric is absent when its
/// denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub match_iou: f64,
    pub n_gt: usize,
    pub n_pred: usize,
    pub n_matched: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mdr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub udr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub miou: Option<f64>,
    pub images: Vec<ImageQuality>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn image_quality(image_id: &str, gt: &[LabeledBox], preds: &[Detection], match_iou: f64) -> ImageQuality {
    let m = greedy_match(gt, preds, match_iou);
    let n_class_agree = m
        .pairs
        .iter()
        .filter(|p| gt[p.gt].class_id == preds[p.pred].class_id)
        .count();
    ImageQuality {
        image_id: image_id.to_string(),
        n_gt: gt.len(),
        n_pred: preds.len(),
        n_matched: m.pairs.len(),
        n_class_agree,
        iou_sum: m.pairs.iter().map(|p| p.iou).sum(),
        mdr: ratio(m.unmatched_gt.len(), gt.len()),
        udr: ratio(m.unmatched_pred.len(), preds.len()),
    }
}

/// Scores `preds` against `gt` over the images of `gt`. Images missing from
/// `preds` have no predictions; predictions on images outside `gt` are ignored.
pub fn quality(preds: &DetectionSet, gt: &AnnotationSet, match_iou: f64) -> QualityReport {
    let by_id = preds.by_id();
    let images: Vec<ImageQuality> = gt
        .images
        .par_iter()
        .map(|img| {
            let dets = by_id.get(img.image_id.as_str()).copied().unwrap_or_default();
            image_quality(&img.image_id, &img.labels, dets, match_iou)
        })
        .collect();
    let n_gt: usize = images.iter().map(|i| i.n_gt).sum();
    let n_pred: usize = images.iter().map(|i| i.n_pred).sum();
    let n_matched: usize = images.iter().map(|i| i.n_matched).sum();
    let agree: usize = images.iter().map(|i| i.n_class_agree).sum();
    let iou_sum: f64 = images.iter().map(|i| i.iou_sum).sum();
    QualityReport {
        match_iou,
        n_gt,
        n_pred,
        n_matched,
        mdr: ratio(n_gt - n_matched, n_gt),
        udr: ratio(n_pred - n_matched, n_pred),
        macc: ratio(agree, n_matched),
        miou: (n_matched > 0).then(|| iou_sum / n_matched as f64),
        images,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissLabel {
    pub image_id: String,
    pub mdr: f64,
    /// True when more than `mdr_cut` of the image's objects are missed.
    pub positive: bool,
}

/// Per-image miss labels after filtering predictions at `delta_s`. Only
/// images with at least one GT box get a label.
pub fn mdr_labels(preds: &DetectionSet, gt: &AnnotationSet, delta_s: f64, mdr_cut: f64, match_iou: f64) -> Vec<MissLabel> {
    let filtered = crate::pls::filter_by_score(preds, delta_s);
    quality(&filtered, gt, match_iou)
        .images
        .into_iter()
        .filter_map(|q| {
            let mdr = q.mdr?;
            Some(MissLabel {
                image_id: q.image_id,
                mdr,
                positive: mdr > mdr_cut,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    /// Score cutoffs, ascending; point `i + 1` flags every score `<= thresholds[i]`.
    pub thresholds: Vec<f64>,
    /// Starts at 0 and ends at 1.
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub auc: f64,
}

/// ROC of a metric where a low score flags a positive. Tied scores form one
/// threshold, so ties contribute half credit through the trapezoid rule.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocResult> {
    assert_eq!(scores.len(), labels.len(), "one label per score");
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut thresholds = Vec::new();
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x, y) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        let (px, py) = (*fpr.last().unwrap(), *tpr.last().unwrap());
        auc += (x - px) * (y + py) / 2.0;
        thresholds.push(t);
        tpr.push(y);
        fpr.push(x);
    }
    Ok(RocResult { thresholds, tpr, fpr, auc })
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side is constant or fewer than two points are given.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    /// Threshold for both the miss labels and the retention metric.
    pub delta_s: f64,
    pub alpha: f64,
    pub betas: Vec<f64>,
    pub mdr_cut: f64,
    pub match_iou: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            delta_s: 0.9,
            alpha: 0.1,
            betas: vec![0.0, 0.1, 0.25],
            mdr_cut: 0.5,
            match_iou: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRoc {
    pub metric: String,
    pub roc: RocResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub config: CompareConfig,
    pub n_images: usize,
    pub n_positive: usize,
    /// Rank correlation of the retention metric with per-image miss rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spearman_s_mdr: Option<f64>,
    pub rows: Vec<MetricRoc>,
}

/// ROC of the retention metric, the combined metric at each beta, mean score
/// and detection count, all against the same miss labels.
pub fn compare_metrics(preds: &DetectionSet, gt: &AnnotationSet, cfg: &CompareConfig) -> Result<CompareReport> {
    let labels = mdr_labels(preds, gt, cfg.delta_s, cfg.mdr_cut, cfg.match_iou);
    let flags: Vec<bool> = labels.iter().map(|l| l.positive).collect();
    let empty: &[Detection] = &[];
    let by_id = preds.by_id();
    let per_image: Vec<&[Detection]> = labels
        .iter()
        .map(|l| by_id.get(l.image_id.as_str()).copied().unwrap_or(empty))
        .collect();

    // Combined-metric rows need dataset-wide class counts, so they come from
    // the prediction set with every labeled image present.
    let mut full = preds.clone();
    let known: HashMap<&str, usize> = full
        .images
        .iter()
        .enumerate()
        .map(|(i, img)| (img.image_id.as_str(), i))
        .collect();
    let missing: Vec<String> = labels
        .iter()
        .filter(|l| !known.contains_key(l.image_id.as_str()))
        .map(|l| l.image_id.clone())
        .collect();
    for id in missing {
        full.images.push(crate::dataset::ImageDetections {
            image_id: id,
            detections: vec![],
        });
    }

    let mut rows = Vec::new();
    let mut s_values = None;
    let mut betas = vec![None];
    betas.extend(cfg.betas.iter().copied().map(Some));
    for beta in betas {
        let pls = PlsConfig {
            delta_s: cfg.delta_s,
            alpha: cfg.alpha,
            beta: beta.unwrap_or(0.0),
            removal_frac: 0.0,
        };
        pls.validate()?;
        let metrics = image_metrics(&full, &pls);
        let index: HashMap<&str, usize> = metrics
            .iter()
            .enumerate()
            .map(|(i, m)| (m.image_id.as_str(), i))
            .collect();
        let pick = |l: &MissLabel| &metrics[index[l.image_id.as_str()]];
        match beta {
            None => {
                let s: Vec<f64> = labels.iter().map(|l| pick(l).s).collect();
                rows.push(MetricRoc {
                    metric: "retention".into(),
                    roc: roc_auc(&s, &flags)?,
                });
                s_values = Some(s);
            }
            Some(b) => {
                let d: Vec<f64> = labels.iter().map(|l| pick(l).d).collect();
                rows.push(MetricRoc {
                    metric: format!("combined_beta_{b}"),
                    roc: roc_auc(&d, &flags)?,
                });
            }
        }
    }
    let mu: Vec<f64> = per_image.iter().map(|d| mean_score(d, cfg.alpha)).collect();
    rows.push(MetricRoc {
        metric: "mean_score".into(),
        roc: roc_auc(&mu, &flags)?,
    });
    let n: Vec<f64> = per_image
        .iter()
        .map(|d| d.iter().filter(|x| x.score >= cfg.alpha).count() as f64)
        .collect();
    rows.push(MetricRoc {
        metric: "detection_count".into(),
        roc: roc_auc(&n, &flags)?,
    });

    let mdr: Vec<f64> = labels.iter().map(|l| l.mdr).collect();
    Ok(CompareReport {
        config: cfg.clone(),
        n_images: labels.len(),
        n_positive: flags.iter().filter(|&&f| f).count(),
        spearman_s_mdr: s_values.and_then(|s| spearman(&s, &mdr)),
        rows,
    })
}
