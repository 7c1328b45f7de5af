//! Rare-class focus: split the labeled set into rare and common images by
//! rarity score, then plan batches so that every batch carries rare images.
//!
//! The plan is plain data. A trainer reads the batches in order and applies
//! its own augmentation to entries flagged `augment`.

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::AnnotationSet;
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{class_frequencies, image_scores, ClassStats};

const STREAM_COMMON: u64 = 0x7263_6601;
const STREAM_RARE_1: u64 = 0x7263_6602;
const STREAM_RARE_2: u64 = 0x7263_6603;

/// Rare/common split of a labeled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strata {
    /// Rare image ids, highest rarity first.
    pub rare: Vec<String>,
    /// Remaining image ids, in set order.
    pub common: Vec<String>,
}

/// Smallest rare-set size giving every batch of size `batch_size` a rare image.
pub fn rare_count(num_images: usize, batch_size: usize) -> usize {
    num_images.div_ceil(batch_size)
}

/// Ranks images by rarity score (descending, ties by image id) and takes the
/// top `ceil(m / B)` as rare. Collage images are always common.
pub fn stratify(set: &AnnotationSet, stats: &ClassStats, batch_size: usize, gamma_f: f64) -> Result<Strata> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let m = set.images.len();
    if m < batch_size {
        return Err(Error::InsufficientImages(format!(
            "{m} images cannot fill a batch of {batch_size}"
        )));
    }
    let scores = image_scores(set, stats, gamma_f)?;
    let eligible: Vec<(String, f64)> = set
        .images
        .iter()
        .zip(&scores)
        .filter(|(img, _)| !img.collage)
        .map(|(img, s)| (img.image_id.clone(), s.raw_f))
        .collect();
    let rare = top_k(eligible, rare_count(m, batch_size));
    let rare_ids: HashSet<&str> = rare.iter().map(String::as_str).collect();
    let common = set
        .images
        .iter()
        .filter(|img| !rare_ids.contains(img.image_id.as_str()))
        .map(|img| img.image_id.clone())
        .collect();
    Ok(Strata { rare, common })
}

/// Convenience wrapper computing class statistics from `set` itself.
pub fn stratify_set(set: &AnnotationSet, batch_size: usize, gamma_f: f64) -> Result<Strata> {
    stratify(set, &class_frequencies(set), batch_size, gamma_f)
}

/// Ids of the `k` highest-scoring entries, ties broken by ascending id.
///
/// Ranking on the raw score is equivalent to ranking on any strictly
/// increasing rescaling of it.
pub fn top_k(mut scored: Vec<(String, f64)>, k: usize) -> Vec<String> {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    scored.into_iter().take(k).map(|(id, _)| id).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Common,
    RareCopy1,
    RareCopy2,
}

impl Origin {
    pub fn is_rare(&self) -> bool {
        !matches!(self, Origin::Common)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub image_id: String,
    pub origin: Origin,
    pub augment: bool,
}

pub type Batch = Vec<BatchEntry>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Two rare entries per batch (one from each rare stream) instead of one.
    pub pair_rare: bool,
    pub augment_rare: bool,
}

impl PlanOptions {
    pub fn new(batch_size: usize, epochs: usize, seed: u64) -> Self {
        Self {
            batch_size,
            epochs,
            seed,
            pair_rare: true,
            augment_rare: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
    pub pair_rare: bool,
    pub rare_set: Vec<String>,
    pub epochs: Vec<Vec<Batch>>,
}

/// Cycles through `ids` in shuffled passes, reshuffling on wrap.
struct RareStream<'a> {
    ids: &'a [String],
    order: Vec<usize>,
    pos: usize,
    rng: rng::SeededRng,
}

impl<'a> RareStream<'a> {
    fn new(ids: &'a [String], rng: rng::SeededRng) -> Self {
        Self {
            ids,
            order: Vec::new(),
            pos: 0,
            rng,
        }
    }

    fn restart(&mut self) {
        self.order = (0..self.ids.len()).collect();
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    fn next(&mut self) -> &'a str {
        if self.pos >= self.order.len() {
            self.restart();
        }
        let id = &self.ids[self.order[self.pos]];
        self.pos += 1;
        id
    }
}

/// Plans `opts.epochs` epochs of batches.
///
/// Each batch holds one entry from each of two independently shuffled rare
/// streams (one stream when `pair_rare` is off) plus common images. Every
/// common image appears exactly once per epoch; the final batch of an epoch
/// may hold fewer common images. Rare streams restart at each epoch so every
/// rare image is drawn at least once per epoch.
pub fn plan_epochs(strata: &Strata, opts: &PlanOptions) -> Result<BatchPlan> {
    let b = opts.batch_size;
    let rare_per_batch = if opts.pair_rare { 2 } else { 1 };
    if opts.pair_rare && b % 2 != 0 {
        return Err(Error::Config(format!("batch size {b} must be even when rare pairs are enabled")));
    }
    if b <= rare_per_batch {
        return Err(Error::Config(format!(
            "batch size {b} leaves no room for common images"
        )));
    }
    if strata.rare.is_empty() {
        return Err(Error::InsufficientImages("rare set is empty".into()));
    }
    if strata.common.len() + rare_per_batch * strata.rare.len() < b {
        return Err(Error::InsufficientImages(format!(
            "{} common and {} rare images cannot fill one batch of {b}",
            strata.common.len(),
            strata.rare.len()
        )));
    }
    let common_per_batch = b - rare_per_batch;

    let mut common_rng = rng::stream(opts.seed, STREAM_COMMON);
    let mut stream1 = RareStream::new(&strata.rare, rng::stream(opts.seed, STREAM_RARE_1));
    let mut stream2 = RareStream::new(&strata.rare, rng::stream(opts.seed, STREAM_RARE_2));

    let mut epochs = Vec::with_capacity(opts.epochs);
    for _ in 0..opts.epochs {
        let mut common: Vec<&String> = strata.common.iter().collect();
        common.shuffle(&mut common_rng);
        stream1.restart();
        stream2.restart();

        let n_batches = common.len().div_ceil(common_per_batch).max(1);
        let mut batches = Vec::with_capacity(n_batches);
        let mut chunks = common.chunks(common_per_batch);
        for _ in 0..n_batches {
            let mut batch = Vec::with_capacity(b);
            batch.push(BatchEntry {
                image_id: stream1.next().to_string(),
                origin: Origin::RareCopy1,
                augment: opts.augment_rare,
            });
            if opts.pair_rare {
                batch.push(BatchEntry {
                    image_id: stream2.next().to_string(),
                    origin: Origin::RareCopy2,
                    augment: opts.augment_rare,
                });
            }
            for id in chunks.next().unwrap_or_default() {
                batch.push(BatchEntry {
                    image_id: (*id).clone(),
                    origin: Origin::Common,
                    augment: false,
                });
            }
            batches.push(batch);
        }
        epochs.push(batches);
    }

    Ok(BatchPlan {
        batch_size: b,
        seed: opts.seed,
        pair_rare: opts.pair_rare,
        rare_set: strata.rare.clone(),
        epochs,
    })
}
