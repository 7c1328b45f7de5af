//! Axis-aligned box geometry, IoU, frame transforms and the greedy
//! one-to-one matcher shared by every other module.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a box lies inside an image frame.
pub const BOUNDS_EPS: f64 = 1e-6;

/// Axis-aligned box in pixels: top-left corner plus width and height.
///
/// Serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BBox {
    /// Builds a box, rejecting non-finite coordinates and non-positive sizes.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let invalid = |reason| Error::InvalidBox { x, y, w, h, reason };
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(invalid("width and height must be positive"));
        }
        Ok(Self { x, y, w, h })
    }

    /// Builds a box from corner coordinates `(x1, y1, x2, y2)`.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        Self::new(x1, y1, x2 - x1, y2 - y1)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// Area computed from the corner span so that `iou(a, a)` is exactly 1.
    pub fn area(&self) -> f64 {
        (self.right() - self.x) * (self.bottom() - self.y)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    /// Area of the overlap with `other`, zero when disjoint or only touching.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.intersection_area(other) > 0.0
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &BBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    /// True when the box lies inside a `width` x `height` frame.
    pub fn within(&self, width: f64, height: f64) -> bool {
        self.x >= -BOUNDS_EPS
            && self.y >= -BOUNDS_EPS
            && self.right() <= width + BOUNDS_EPS
            && self.bottom() <= height + BOUNDS_EPS
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from([x, y, w, h]: [f64; 4]) -> Result<Self> {
        BBox::new(x, y, w, h)
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Ground-truth box with its class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub bbox: BBox,
    pub class_id: usize,
}

impl LabeledBox {
    pub fn new(bbox: BBox, class_id: usize) -> Self {
        Self { bbox, class_id }
    }
}

/// Model prediction: box, class and confidence in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: usize,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BBox, class_id: usize, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::ScoreOutOfRange(score));
        }
        Ok(Self {
            bbox,
            class_id,
            score,
        })
    }
}

/// Anything that carries a box; lets the matcher accept labels and detections alike.
pub trait HasBox {
    fn bbox(&self) -> &BBox;
}

impl HasBox for BBox {
    fn bbox(&self) -> &BBox {
        self
    }
}

impl HasBox for LabeledBox {
    fn bbox(&self) -> &BBox {
        &self.bbox
    }
}

impl HasBox for Detection {
    fn bbox(&self) -> &BBox {
        &self.bbox
    }
}

impl<T: HasBox> HasBox for &T {
    fn bbox(&self) -> &BBox {
        (*self).bbox()
    }
}

/// Geometric part of an inference-time augmentation.
///
/// Photometric augmentations (blur, noise) map boxes through `Identity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BoxTransform {
    #[default]
    Identity,
    /// Horizontal flip. `image_width` may be left unset and resolved per
    /// image from the companion annotation set.
    Hflip {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        image_width: Option<f64>,
    },
}

impl BoxTransform {
    pub fn hflip(image_width: f64) -> Self {
        BoxTransform::Hflip {
            image_width: Some(image_width),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BoxTransform::Identity => "identity",
            BoxTransform::Hflip { .. } => "hflip",
        }
    }

    /// Fills a missing flip width from the image the boxes belong to.
    pub fn resolve(&self, image_width: f64) -> Self {
        match *self {
            BoxTransform::Hflip { image_width: None } => BoxTransform::hflip(image_width),
            t => t,
        }
    }

    /// The transform mapping transformed boxes back to the original frame.
    /// Both supported transforms are involutions.
    pub fn inverse(&self) -> Self {
        *self
    }

    pub fn apply(&self, b: &BBox) -> Result<BBox> {
        match *self {
            BoxTransform::Identity => Ok(*b),
            BoxTransform::Hflip { image_width } => {
                let width = image_width
                    .filter(|w| w.is_finite() && *w > 0.0)
                    .ok_or(Error::MissingImageWidth("hflip"))?;
                BBox::new(width - b.x() - b.w(), b.y(), b.w(), b.h())
            }
        }
    }
}

/// One accepted pair of a matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub gt: usize,
    pub pred: usize,
    pub iou: f64,
}

/// Result of one-to-one matching between ground truth and predictions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Matching {
    /// Pairs in acceptance order (descending IoU).
    pub pairs: Vec<MatchPair>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

impl Matching {
    /// Prediction index paired with each ground-truth index.
    pub fn pred_for_gt(&self, n_gt: usize) -> Vec<Option<MatchPair>> {
        let mut out = vec![None; n_gt];
        for p in &self.pairs {
            out[p.gt] = Some(*p);
        }
        out
    }

    /// Ground-truth index paired with each prediction index.
    pub fn gt_for_pred(&self, n_pred: usize) -> Vec<Option<MatchPair>> {
        let mut out = vec![None; n_pred];
        for p in &self.pairs {
            out[p.pred] = Some(*p);
        }
        out
    }
}

/// Greedy one-to-one matching by descending IoU.
///
/// Candidate pairs with `iou >= iou_thresh` are taken in order of decreasing
/// IoU, ties broken by lower gt index then lower prediction index. Each index
/// is consumed at most once.
///
/// # Panics
///
/// If `iou_thresh` is outside `(0, 1]`.
pub fn greedy_match<G: HasBox, P: HasBox>(gt: &[G], preds: &[P], iou_thresh: f64) -> Matching {
    assert!(
        iou_thresh > 0.0 && iou_thresh <= 1.0,
        "match threshold must lie in (0, 1], got {iou_thresh}"
    );
    let mut candidates = Vec::new();
    for (gi, g) in gt.iter().enumerate() {
        for (pi, p) in preds.iter().enumerate() {
            let v = iou(g.bbox(), p.bbox());
            if v >= iou_thresh {
                candidates.push(MatchPair {
                    gt: gi,
                    pred: pi,
                    iou: v,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.iou
            .partial_cmp(&a.iou)
            .unwrap_or(Ordering::Equal)
            .then(a.gt.cmp(&b.gt))
            .then(a.pred.cmp(&b.pred))
    });

    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; preds.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if gt_used[c.gt] || pred_used[c.pred] {
            continue;
        }
        gt_used[c.gt] = true;
        pred_used[c.pred] = true;
        pairs.push(c);
    }
    let unmatched = |used: &[bool]| {
        used.iter()
            .enumerate()
            .filter(|(_, u)| !**u)
            .map(|(i, _)| i)
            .collect()
    };
    Matching {
        unmatched_gt: unmatched(&gt_used),
        unmatched_pred: unmatched(&pred_used),
        pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&b(0., 0., 10., 10.), &b(0., 0., 10., 10.)), 1.0);
        assert_eq!(iou(&b(0., 0., 10., 10.), &b(20., 20., 5., 5.)), 0.0);
        // intersection 1, union 4 + 4 - 1 = 7
        assert!((iou(&b(0., 0., 2., 2.), &b(1., 1., 2., 2.)) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn touching_boxes_do_not_intersect() {
        assert!(!b(0., 0., 10., 10.).intersects(&b(10., 0., 5., 5.)));
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(BBox::new(0., 0., 0., 5.).is_err());
        assert!(BBox::new(0., 0., 5., -1.).is_err());
        assert!(BBox::new(f64::NAN, 0., 5., 5.).is_err());
        assert!(serde_json::from_str::<BBox>("[0, 0, 0, 1]").is_err());
    }

    #[test]
    fn transform_examples() {
        let box_ = b(3., 4., 5., 6.);
        assert_eq!(BoxTransform::Identity.apply(&box_).unwrap(), box_);
        let flipped = BoxTransform::hflip(100.)
            .apply(&b(10., 20., 30., 40.))
            .unwrap();
        assert_eq!(flipped, b(60., 20., 30., 40.));
        let missing = BoxTransform::Hflip { image_width: None };
        assert!(matches!(missing.apply(&box_), Err(Error::MissingImageWidth(_))));
        assert!(BoxTransform::hflip(-3.0).apply(&box_).is_err());
        assert_eq!(missing.resolve(100.), BoxTransform::hflip(100.));
    }

    #[test]
    fn match_examples() {
        let gt = [b(0., 0., 10., 10.)];
        let m = greedy_match(&gt, &[b(0., 0., 10., 10.)], 0.5);
        assert_eq!(m.pairs, vec![MatchPair { gt: 0, pred: 0, iou: 1.0 }]);
        let m = greedy_match(&gt, &[b(20., 20., 5., 5.)], 0.5);
        assert!(m.pairs.is_empty());
        assert_eq!(m.unmatched_gt, vec![0]);
        assert_eq!(m.unmatched_pred, vec![0]);
        let empty: [BBox; 0] = [];
        assert_eq!(greedy_match(&empty, &empty, 0.5), Matching::default());
    }

    #[test]
    fn match_tie_break_prefers_lower_indices() {
        let gt = [b(0., 0., 10., 10.), b(0., 0., 10., 10.)];
        let preds = [b(0., 0., 10., 10.), b(0., 0., 10., 10.)];
        let m = greedy_match(&gt, &preds, 0.5);
        assert_eq!((m.pairs[0].gt, m.pairs[0].pred), (0, 0));
        assert_eq!((m.pairs[1].gt, m.pairs[1].pred), (1, 1));
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0..100.0f64, 0.0..100.0f64, 0.5..50.0f64, 0.5..50.0f64)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_reflexive(a in arb_box(), c in arb_box()) {
            prop_assert_eq!(iou(&a, &c), iou(&c, &a));
            prop_assert_eq!(iou(&a, &a), 1.0);
            let v = iou(&a, &c);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn hflip_is_an_involution(a in arb_box()) {
            let t = BoxTransform::hflip(200.0);
            let back = t.inverse().apply(&t.apply(&a).unwrap()).unwrap();
            prop_assert!((back.x() - a.x()).abs() < 1e-9);
            prop_assert_eq!(back.w(), a.w());
        }

        #[test]
        fn matching_partitions_indices(
            gt in prop::collection::vec(arb_box(), 0..6),
            preds in prop::collection::vec(arb_box(), 0..6),
            thresh in 0.05..1.0f64,
        ) {
            let m = greedy_match(&gt, &preds, thresh);
            prop_assert!(m.pairs.len() <= gt.len().min(preds.len()));
            let mut g: Vec<usize> = m.pairs.iter().map(|p| p.gt).chain(m.unmatched_gt.iter().copied()).collect();
            g.sort_unstable();
            prop_assert_eq!(g, (0..gt.len()).collect::<Vec<_>>());
            let mut p: Vec<usize> = m.pairs.iter().map(|p| p.pred).chain(m.unmatched_pred.iter().copied()).collect();
            p.sort_unstable();
            prop_assert_eq!(p, (0..preds.len()).collect::<Vec<_>>());
            prop_assert!(m.pairs.iter().all(|p| p.iou >= thresh));
            prop_assert_eq!(m.clone(), greedy_match(&gt, &preds, thresh));
        }
    }
}
