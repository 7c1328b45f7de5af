//! Synthetic scenes and a noisy detector with a known error ledger.
//!
//! Scenes are non-overlapping class-colored rectangles on black. The
//! detector misses, jitters, mislabels and hallucinates boxes at configured
//! rates and records exactly what it did, so every metric computed on its
//! output can be checked against ground truth.

use std::collections::{BTreeMap, HashMap};

use image::{Rgb, RgbImage};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationSet, DetectionSet, ImageDetections, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, BoxTransform, Detection, LabeledBox};
use crate::rcc::RasterSource;
use crate::rng::{self, SeededRng};

const TAG_SCENE: u64 = 0x5343;
const TAG_DETECT: u64 = 0x4454;
const TAG_VARIANT: u64 = 0x5641;
const PLACEMENT_ATTEMPTS: usize = 50;

fn image_stream(seed: u64, tag: u64, index: usize) -> SeededRng {
    rng::stream(seed, (tag << 48) | index as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeights {
    /// Weight of class `k` is `(k + 1)^-exponent`.
    PowerLaw(f64),
    Explicit(Vec<f64>),
}

impl ClassWeights {
    pub fn weights(&self, num_classes: usize) -> Vec<f64> {
        match self {
            ClassWeights::PowerLaw(e) => (0..num_classes).map(|k| ((k + 1) as f64).powf(-e)).collect(),
            ClassWeights::Explicit(w) => w.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub n_images: usize,
    pub image_w: u32,
    pub image_h: u32,
    pub num_classes: usize,
    pub class_weights: ClassWeights,
    /// Inclusive range of boxes per image.
    pub boxes_per_image: [usize; 2],
    /// Inclusive range of box side lengths in pixels.
    pub box_size: [u32; 2],
    /// Minimum empty margin between boxes.
    pub gap: u32,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            n_images: 100,
            image_w: 320,
            image_h: 240,
            num_classes: 4,
            class_weights: ClassWeights::PowerLaw(1.5),
            boxes_per_image: [1, 6],
            box_size: [16, 48],
            gap: 2,
            seed: 0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_classes == 0 {
            return fail("num_classes must be positive".into());
        }
        let w = self.class_weights.weights(self.num_classes);
        if w.len() != self.num_classes {
            return fail(format!("{} class weights for {} classes", w.len(), self.num_classes));
        }
        if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return fail("class weights must be positive".into());
        }
        let [lo, hi] = self.boxes_per_image;
        if lo > hi {
            return fail(format!("boxes_per_image range [{lo}, {hi}] is empty"));
        }
        let [smin, smax] = self.box_size;
        if smin == 0 || smin > smax {
            return fail(format!("box_size range [{smin}, {smax}] is invalid"));
        }
        if smax > self.image_w.min(self.image_h) {
            return fail(format!(
                "box size {smax} does not fit a {}x{} image",
                self.image_w, self.image_h
            ));
        }
        Ok(())
    }
}

/// Color of class `k`: hues spaced by the golden angle.
pub fn class_color(k: usize) -> Rgb<u8> {
    let h = (k as f64 * 137.507_764) % 360.0 / 60.0;
    let (s, v) = (0.8, 0.95);
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |f: f64| ((f + m) * 255.0).round() as u8;
    Rgb([q(r), q(g), q(b)])
}

/// Renders the clean scene of every generated image on demand.
#[derive(Debug, Clone, Default)]
pub struct SceneRaster {
    scenes: HashMap<String, (u32, u32, Vec<LabeledBox>)>,
}

impl SceneRaster {
    pub fn from_set(set: &AnnotationSet) -> Self {
        Self {
            scenes: set
                .images
                .iter()
                .map(|i| (i.image_id.clone(), (i.width, i.height, i.labels.clone())))
                .collect(),
        }
    }

    pub fn render(&self, image_id: &str) -> Result<RgbImage> {
        let (w, h, labels) = self
            .scenes
            .get(image_id)
            .ok_or_else(|| Error::UnknownImage(image_id.to_string()))?;
        let mut img = RgbImage::new(*w, *h);
        for l in labels {
            let b = &l.bbox;
            let color = class_color(l.class_id);
            let (x0, y0) = (b.x().round() as u32, b.y().round() as u32);
            let (x1, y1) = ((b.right().round() as u32).min(*w), (b.bottom().round() as u32).min(*h));
            for y in y0..y1 {
                for x in x0..x1 {
                    img.put_pixel(x, y, color);
                }
            }
        }
        Ok(img)
    }
}

impl RasterSource for SceneRaster {
    fn load(&self, image: &ImageRecord) -> Result<RgbImage> {
        self.render(&image.image_id)
    }
}

#[derive(Debug, Clone)]
pub struct Scenes {
    pub set: AnnotationSet,
    /// Boxes generated per class.
    pub class_counts: Vec<u64>,
    pub raster: SceneRaster,
}

fn place_scene(params: &SceneParams, classes: &WeightedIndex<f64>, rng: &mut SeededRng) -> Vec<LabeledBox> {
    let n = rng.random_range(params.boxes_per_image[0]..=params.boxes_per_image[1]);
    let gap = params.gap as f64;
    let mut out: Vec<LabeledBox> = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let w = rng.random_range(params.box_size[0]..=params.box_size[1]);
            let h = rng.random_range(params.box_size[0]..=params.box_size[1]);
            let x = rng.random_range(0..=params.image_w - w);
            let y = rng.random_range(0..=params.image_h - h);
            let b = BBox::new(x as f64, y as f64, w as f64, h as f64).expect("positive size");
            let padded = BBox::new(b.x() - gap, b.y() - gap, b.w() + 2.0 * gap, b.h() + 2.0 * gap).expect("positive size");
            if out.iter().all(|o| !o.bbox.intersects(&padded)) {
                out.push(LabeledBox::new(b, classes.sample(rng)));
                break;
            }
        }
    }
    out
}

/// Generates scenes. Images are named `scene_00000`, ... in index order.
/// A box that cannot be placed without overlap after repeated tries is
/// skipped, so crowded scene settings may yield fewer boxes than drawn.
pub fn gen_scenes(params: &SceneParams) -> Result<Scenes> {
    params.validate()?;
    let classes = WeightedIndex::new(params.class_weights.weights(params.num_classes))
        .map_err(|e| Error::Config(format!("class weights: {e}")))?;
    let images: Vec<ImageRecord> = (0..params.n_images)
        .into_par_iter()
        .map(|i| {
            let mut rng = image_stream(params.seed, TAG_SCENE, i);
            let id = format!("scene_{i:05}");
            ImageRecord::new(&id, format!("{id}.png"), params.image_w, params.image_h)
                .with_labels(place_scene(params, &classes, &mut rng))
        })
        .collect();
    let mut set = AnnotationSet::new((0..params.num_classes).map(|k| format!("class{k}")).collect());
    set.images = images;
    let mut class_counts = vec![0u64; params.num_classes];
    for l in set.images.iter().flat_map(|i| &i.labels) {
        class_counts[l.class_id] += 1;
    }
    let raster = SceneRaster::from_set(&set);
    Ok(Scenes {
        set,
        class_counts,
        raster,
    })
}

/// Normal score distribution clipped to [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub mean: f64,
    pub std: f64,
}

impl ScoreModel {
    fn sample(&self, shift: f64, rng: &mut SeededRng) -> f64 {
        let mean = self.mean - shift;
        let s = if self.std > 0.0 {
            Normal::new(mean, self.std).expect("validated").sample(rng)
        } else {
            mean
        };
        s.clamp(0.0, 1.0)
    }
}

/// Per-image difficulty `d`, uniform in [0, 1]. Harder images miss more
/// objects and score the found ones lower.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Difficulty {
    /// Added to the miss probability at `d = 1`.
    pub miss_boost: f64,
    /// Subtracted from the matched-score mean at `d = 1`.
    pub score_shift: f64,
}

impl Difficulty {
    pub fn is_off(&self) -> bool {
        self.miss_boost == 0.0 && self.score_shift == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantParams {
    pub name: String,
    /// Store boxes mirrored horizontally, as a detector run on a flipped image would.
    #[serde(default)]
    pub flip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    pub miss_prob: f64,
    /// Per-class overrides of `miss_prob`.
    pub class_miss_prob: BTreeMap<usize, f64>,
    /// Mean number of false positives per image (Poisson).
    pub fp_per_image: f64,
    /// Inclusive side-length range of false positives, pixels.
    pub fp_size: [f64; 2],
    /// Box jitter, relative to box size.
    pub jitter: f64,
    pub matched_score: ScoreModel,
    pub false_score: ScoreModel,
    pub confusion_prob: f64,
    pub difficulty: Difficulty,
    /// Augmented variants besides the original.
    pub variants: Vec<VariantParams>,
    /// Score threshold for the ledger's thresholded miss counts.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self::calibrated()
    }
}

fn standard_variants() -> Vec<VariantParams> {
    vec![
        VariantParams {
            name: "hflip".into(),
            flip: true,
        },
        VariantParams {
            name: "blur".into(),
            flip: false,
        },
        VariantParams {
            name: "noise".into(),
            flip: false,
        },
    ]
}

impl DetectorParams {
    /// Predictions equal the labels under every variant, all scored 1.
    pub fn perfect() -> Self {
        Self {
            miss_prob: 0.0,
            class_miss_prob: BTreeMap::new(),
            fp_per_image: 0.0,
            fp_size: [16.0, 48.0],
            jitter: 0.0,
            matched_score: ScoreModel { mean: 1.0, std: 0.0 },
            false_score: ScoreModel { mean: 0.0, std: 0.0 },
            confusion_prob: 0.0,
            difficulty: Difficulty::default(),
            variants: standard_variants(),
            threshold: 0.5,
            seed: 0,
        }
    }

    /// Uniform moderate noise.
    pub fn calibrated() -> Self {
        Self {
            miss_prob: 0.1,
            fp_per_image: 0.5,
            jitter: 0.03,
            matched_score: ScoreModel { mean: 0.75, std: 0.15 },
            false_score: ScoreModel { mean: 0.25, std: 0.1 },
            confusion_prob: 0.05,
            ..Self::perfect()
        }
    }

    /// Difficulty varies per image, so some images lose most of their objects.
    pub fn heterogeneous() -> Self {
        Self {
            miss_prob: 0.05,
            fp_per_image: 1.0,
            jitter: 0.03,
            matched_score: ScoreModel { mean: 1.0, std: 0.08 },
            false_score: ScoreModel { mean: 0.3, std: 0.15 },
            confusion_prob: 0.02,
            difficulty: Difficulty {
                miss_boost: 0.3,
                score_shift: 0.15,
            },
            threshold: 0.9,
            ..Self::perfect()
        }
    }

    /// Matched scores centered at 0.36, nothing missed or hallucinated.
    pub fn low_score() -> Self {
        Self {
            jitter: 0.02,
            matched_score: ScoreModel { mean: 0.36, std: 0.1 },
            false_score: ScoreModel { mean: 0.1, std: 0.05 },
            ..Self::perfect()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "perfect" => Ok(Self::perfect()),
            "calibrated" => Ok(Self::calibrated()),
            "heterogeneous" => Ok(Self::heterogeneous()),
            "low_score" => Ok(Self::low_score()),
            other => Err(Error::Config(format!("unknown detector preset `{other}`"))),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        prob("miss_prob", self.miss_prob)?;
        for (k, p) in &self.class_miss_prob {
            prob(&format!("class_miss_prob[{k}]"), *p)?;
        }
        prob("confusion_prob", self.confusion_prob)?;
        prob("threshold", self.threshold)?;
        prob("difficulty.miss_boost", self.difficulty.miss_boost)?;
        let bad = |m: String| Err(Error::Config(m));
        if !(self.fp_per_image >= 0.0 && self.fp_per_image.is_finite()) {
            return bad(format!("fp_per_image must be non-negative, got {}", self.fp_per_image));
        }
        if !(self.fp_size[0] >= 1.0 && self.fp_size[1] >= self.fp_size[0]) {
            return bad(format!("fp_size range {:?} is invalid", self.fp_size));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return bad(format!("jitter must be non-negative, got {}", self.jitter));
        }
        for (name, m) in [("matched_score", self.matched_score), ("false_score", self.false_score)] {
            if !(m.std >= 0.0 && m.std.is_finite() && m.mean.is_finite()) {
                return bad(format!("{name} needs a finite mean and non-negative std"));
            }
        }
        if self.fp_per_image > 0.0 && self.matched_score.mean <= self.false_score.mean {
            return bad("matched_score mean must exceed false_score mean".into());
        }
        Ok(())
    }

    fn miss_for(&self, class_id: usize) -> f64 {
        self.class_miss_prob.get(&class_id).copied().unwrap_or(self.miss_prob)
    }
}

/// What the detector did on one image, for the original variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTruth {
    pub image_id: String,
    pub difficulty: f64,
    pub n_gt: usize,
    pub n_undetected: usize,
    /// Detected objects scoring below the ledger threshold.
    pub n_below_threshold: usize,
    pub n_fp: usize,
    pub n_confused: usize,
    /// Sum of IoUs between detected objects and their jittered boxes.
    pub iou_sum: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_mdr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_mdr_at_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLedger {
    pub threshold: f64,
    pub n_gt: usize,
    pub n_undetected: usize,
    pub n_fp: usize,
    pub n_confused: usize,
    /// Sum of per-detection IoUs with the source box.
    pub iou_sum: f64,
    /// Detected objects scoring at or above `threshold`, per class.
    pub retained_per_class: BTreeMap<usize, u64>,
    pub images: Vec<ImageTruth>,
}

impl TruthLedger {
    pub fn mdr(&self) -> Option<f64> {
        (self.n_gt > 0).then(|| self.n_undetected as f64 / self.n_gt as f64)
    }

    pub fn udr(&self) -> Option<f64> {
        let detected = self.n_gt - self.n_undetected;
        let total = detected + self.n_fp;
        (total > 0).then(|| self.n_fp as f64 / total as f64)
    }

    pub fn macc(&self) -> Option<f64> {
        let detected = self.n_gt - self.n_undetected;
        (detected > 0).then(|| 1.0 - self.n_confused as f64 / detected as f64)
    }

    pub fn miou(&self) -> Option<f64> {
        let detected = self.n_gt - self.n_undetected;
        (detected > 0).then(|| self.iou_sum / detected as f64)
    }
}

#[derive(Debug, Clone)]
pub struct SimDetections {
    /// Original predictions first, then one set per augmented variant.
    pub variants: Vec<DetectionSet>,
    pub truth: TruthLedger,
}

fn jitter_box(b: &BBox, sigma: f64, fw: f64, fh: f64, rng: &mut SeededRng) -> BBox {
    if sigma == 0.0 {
        return *b;
    }
    let n = Normal::new(0.0, sigma).expect("validated");
    let x = b.x() + n.sample(rng) * b.w();
    let y = b.y() + n.sample(rng) * b.h();
    let w = (b.w() * (1.0 + n.sample(rng))).max(1.0);
    let h = (b.h() * (1.0 + n.sample(rng))).max(1.0);
    let x1 = x.clamp(0.0, fw - 1.0);
    let y1 = y.clamp(0.0, fh - 1.0);
    let x2 = (x + w).clamp(x1 + 1.0, fw);
    let y2 = (y + h).clamp(y1 + 1.0, fh);
    BBox::from_corners(x1, y1, x2, y2).expect("span of at least one pixel")
}

fn false_positives(
    labels: &[LabeledBox],
    params: &DetectorParams,
    num_classes: usize,
    fw: f64,
    fh: f64,
    rng: &mut SeededRng,
) -> Vec<Detection> {
    if params.fp_per_image == 0.0 {
        return Vec::new();
    }
    let n = Poisson::new(params.fp_per_image).expect("validated").sample(rng) as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..PLACEMENT_ATTEMPTS {
            let w = rng::uniform(rng, params.fp_size[0], params.fp_size[1]).min(fw);
            let h = rng::uniform(rng, params.fp_size[0], params.fp_size[1]).min(fh);
            let x = rng::uniform(rng, 0.0, fw - w);
            let y = rng::uniform(rng, 0.0, fh - h);
            let b = BBox::new(x, y, w, h).expect("positive size");
            if labels.iter().all(|l| !l.bbox.intersects(&b)) {
                let class_id = rng.random_range(0..num_classes.max(1));
                let score = params.false_score.sample(0.0, rng);
                out.push(Detection::new(b, class_id, score).expect("clamped score"));
                break;
            }
        }
    }
    out
}

fn other_class(class_id: usize, num_classes: usize, rng: &mut SeededRng) -> usize {
    if num_classes < 2 {
        return class_id;
    }
    let k = rng.random_range(0..num_classes - 1);
    if k >= class_id {
        k + 1
    } else {
        k
    }
}

/// One image: which objects are found is decided once; each variant draws
/// its own jitter, scores and false positives.
struct ImageRun {
    per_variant: Vec<Vec<Detection>>,
    truth: ImageTruth,
    /// Classes of found objects scoring at or above the threshold.
    retained: Vec<usize>,
}

fn detect_image(img: &ImageRecord, index: usize, params: &DetectorParams, num_classes: usize) -> ImageRun {
    let (fw, fh) = (img.width_f(), img.height_f());
    let mut rng = image_stream(params.seed, TAG_DETECT, index);
    let difficulty = if params.difficulty.is_off() { 0.0 } else { rng.random::<f64>() };
    let shift = params.difficulty.score_shift * difficulty;

    let found: Vec<Option<usize>> = img
        .labels
        .iter()
        .map(|l| {
            let p = (params.miss_for(l.class_id) + params.difficulty.miss_boost * difficulty).min(1.0);
            let missed = rng.random_bool(p);
            let class_id = if rng.random_bool(params.confusion_prob) {
                other_class(l.class_id, num_classes, &mut rng)
            } else {
                l.class_id
            };
            (!missed).then_some(class_id)
        })
        .collect();

    let n_variants = 1 + params.variants.len();
    let mut retained = Vec::new();
    let mut per_variant = Vec::with_capacity(n_variants);
    let mut truth = ImageTruth {
        image_id: img.image_id.clone(),
        difficulty,
        n_gt: img.labels.len(),
        n_undetected: found.iter().filter(|f| f.is_none()).count(),
        n_below_threshold: 0,
        n_fp: 0,
        n_confused: 0,
        iou_sum: 0.0,
        true_mdr: None,
        true_mdr_at_threshold: None,
    };
    for v in 0..n_variants {
        let mut vr = if v == 0 {
            rng.clone()
        } else {
            image_stream(params.seed, TAG_VARIANT + v as u64, index)
        };
        let mut dets = Vec::with_capacity(img.labels.len());
        for (l, f) in img.labels.iter().zip(&found) {
            let Some(class_id) = *f else { continue };
            let b = jitter_box(&l.bbox, params.jitter, fw, fh, &mut vr);
            let score = params.matched_score.sample(shift, &mut vr);
            if v == 0 {
                truth.iou_sum += iou(&b, &l.bbox);
                truth.n_confused += usize::from(class_id != l.class_id);
                if score < params.threshold {
                    truth.n_below_threshold += 1;
                } else {
                    retained.push(class_id);
                }
            }
            dets.push(Detection::new(b, class_id, score).expect("clamped score"));
        }
        let fps = false_positives(&img.labels, params, num_classes, fw, fh, &mut vr);
        if v == 0 {
            truth.n_fp = fps.len();
        }
        dets.extend(fps);
        per_variant.push(dets);
    }
    if truth.n_gt > 0 {
        let n = truth.n_gt as f64;
        truth.true_mdr = Some(truth.n_undetected as f64 / n);
        truth.true_mdr_at_threshold = Some((truth.n_undetected + truth.n_below_threshold) as f64 / n);
    }
    ImageRun {
        per_variant,
        truth,
        retained,
    }
}

/// Runs the simulated detector over `gt`.
pub fn gen_detections(gt: &AnnotationSet, params: &DetectorParams) -> Result<SimDetections> {
    params.validate()?;
    let k = gt.num_classes();
    let rows: Vec<ImageRun> = gt
        .images
        .par_iter()
        .enumerate()
        .map(|(i, img)| detect_image(img, i, params, k))
        .collect();

    let mut variants = vec![DetectionSet::new("original", BoxTransform::Identity)];
    for v in &params.variants {
        let t = if v.flip {
            BoxTransform::Hflip { image_width: None }
        } else {
            BoxTransform::Identity
        };
        variants.push(DetectionSet::new(&v.name, t));
    }
    let mut truth = TruthLedger {
        threshold: params.threshold,
        n_gt: 0,
        n_undetected: 0,
        n_fp: 0,
        n_confused: 0,
        iou_sum: 0.0,
        retained_per_class: BTreeMap::new(),
        images: Vec::with_capacity(rows.len()),
    };
    for (run, img) in rows.into_iter().zip(&gt.images) {
        for (vi, dets) in run.per_variant.into_iter().enumerate() {
            let flip = vi > 0 && params.variants[vi - 1].flip;
            let dets = if flip {
                let t = BoxTransform::hflip(img.width_f());
                dets.into_iter()
                    .map(|d| Ok(Detection { bbox: t.apply(&d.bbox)?, ..d }))
                    .collect::<Result<Vec<_>>>()?
            } else {
                dets
            };
            variants[vi].images.push(ImageDetections {
                image_id: img.image_id.clone(),
                detections: dets,
            });
        }
        for k in run.retained {
            *truth.retained_per_class.entry(k).or_insert(0) += 1;
        }
        let t = run.truth;
        truth.n_gt += t.n_gt;
        truth.n_undetected += t.n_undetected;
        truth.n_fp += t.n_fp;
        truth.n_confused += t.n_confused;
        truth.iou_sum += t.iou_sum;
        truth.images.push(t);
    }
    Ok(SimDetections { variants, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::quality;

    fn small(n: usize, seed: u64) -> SceneParams {
        SceneParams {
            n_images: n,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn class_counts_follow_weights() {
        let params = SceneParams {
            n_images: 1000,
            num_classes: 2,
            class_weights: ClassWeights::Explicit(vec![9.0, 1.0]),
            boxes_per_image: [1, 1],
            ..Default::default()
        };
        let s = gen_scenes(&params).unwrap();
        assert!(s.set.images.iter().all(|i| i.labels.len() == 1));
        // binomial(1000, 0.1): sd = sqrt(90)
        let sd = 90f64.sqrt();
        assert!((s.class_counts[1] as f64 - 100.0).abs() <= 3.0 * sd, "{:?}", s.class_counts);
        assert_eq!(s.class_counts.iter().sum::<u64>(), 1000);
    }

    #[test]
    fn scenes_are_valid_and_disjoint() {
        let s = gen_scenes(&small(50, 3)).unwrap();
        s.set.validate().unwrap();
        for img in &s.set.images {
            for (i, a) in img.labels.iter().enumerate() {
                for b in &img.labels[i + 1..] {
                    assert!(!a.bbox.intersects(&b.bbox));
                }
            }
        }
    }

    #[test]
    fn scenes_are_deterministic() {
        assert_eq!(gen_scenes(&small(20, 7)).unwrap().set, gen_scenes(&small(20, 7)).unwrap().set);
        assert_ne!(gen_scenes(&small(20, 7)).unwrap().set, gen_scenes(&small(20, 8)).unwrap().set);
    }

    #[test]
    fn raster_paints_boxes() {
        let s = gen_scenes(&small(1, 1)).unwrap();
        let img = &s.set.images[0];
        let r = s.raster.render(&img.image_id).unwrap();
        let l = img.labels[0];
        let (x, y) = (l.bbox.x() as u32, l.bbox.y() as u32);
        assert_eq!(*r.get_pixel(x, y), class_color(l.class_id));
        assert_ne!(class_color(0), class_color(1));
    }

    #[test]
    fn perfect_detector_reproduces_labels() {
        let s = gen_scenes(&small(30, 2)).unwrap();
        let d = gen_detections(&s.set, &DetectorParams::perfect()).unwrap();
        assert_eq!(d.variants.len(), 4);
        let q = quality(&d.variants[0], &s.set, 0.5);
        assert_eq!((q.mdr, q.udr, q.miou), (Some(0.0), Some(0.0), Some(1.0)));
        // the flipped variant maps back onto the labels
        let flipped = &d.variants[1];
        for (img, dets) in s.set.images.iter().zip(&flipped.images) {
            let back = flipped.transform.resolve(img.width_f()).inverse();
            for (l, det) in img.labels.iter().zip(&dets.detections) {
                assert_eq!(back.apply(&det.bbox).unwrap(), l.bbox);
            }
        }
    }

    #[test]
    fn miss_rate_within_binomial_bound() {
        let params = SceneParams {
            n_images: 2500,
            boxes_per_image: [4, 4],
            ..Default::default()
        };
        let s = gen_scenes(&params).unwrap();
        let det = DetectorParams {
            miss_prob: 0.3,
            ..DetectorParams::perfect()
        };
        let d = gen_detections(&s.set, &det).unwrap();
        let n = d.truth.n_gt as f64;
        let mdr = quality(&d.variants[0], &s.set, 0.5).mdr.unwrap();
        assert_eq!(Some(mdr), d.truth.mdr());
        assert!((mdr - 0.3).abs() <= 3.0 * (0.3 * 0.7 / n).sqrt());
    }

    #[test]
    fn heterogeneous_preset_has_hard_images() {
        let s = gen_scenes(&small(500, 4)).unwrap();
        let d = gen_detections(&s.set, &DetectorParams::heterogeneous()).unwrap();
        let imgs: Vec<f64> = d.truth.images.iter().filter_map(|t| t.true_mdr_at_threshold).collect();
        let hard = imgs.iter().filter(|&&m| m > 0.5).count();
        assert!(hard as f64 >= 0.2 * imgs.len() as f64, "{hard} of {}", imgs.len());
    }

    #[test]
    fn invalid_params() {
        let bad = DetectorParams {
            miss_prob: 1.5,
            ..DetectorParams::perfect()
        };
        assert!(bad.validate().is_err());
        let scene = SceneParams {
            box_size: [10, 400],
            ..Default::default()
        };
        assert!(scene.validate().is_err());
    }
}
