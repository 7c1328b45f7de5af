//! In-memory annotation and detection sets.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Detection, LabeledBox};

/// One image with its ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    pub labels: Vec<LabeledBox>,
    /// Regions to ignore (KITTI `DontCare`, COCO crowd). Excluded from class
    /// statistics, matching and corrections.
    pub ignore_regions: Vec<BBox>,
    /// Synthetic collage produced by the rare-class collage step.
    pub collage: bool,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>, file_name: impl Into<String>, width: u32, height: u32) -> Self {
        Self {
            image_id: image_id.into(),
            file_name: file_name.into(),
            width,
            height,
            labels: Vec::new(),
            ignore_regions: Vec::new(),
            collage: false,
        }
    }

    pub fn with_labels(mut self, labels: Vec<LabeledBox>) -> Self {
        self.labels = labels;
        self
    }

    pub fn width_f(&self) -> f64 {
        f64::from(self.width)
    }

    pub fn height_f(&self) -> f64 {
        f64::from(self.height)
    }

    /// Distinct class ids present, in ascending order.
    pub fn distinct_classes(&self) -> Vec<usize> {
        distinct(self.labels.iter().map(|l| l.class_id))
    }
}

pub(crate) fn distinct(ids: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut v: Vec<usize> = ids.into_iter().collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Ground-truth annotations: a class table and an ordered list of images.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationSet {
    pub classes: Vec<String>,
    pub images: Vec<ImageRecord>,
}

impl AnnotationSet {
    pub fn new(classes: Vec<String>) -> Self {
        Self {
            classes,
            images: Vec::new(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn num_boxes(&self) -> usize {
        self.images.iter().map(|i| i.labels.len()).sum()
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.image_id == image_id)
    }

    /// Lookup table from image id to position in `images`.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.images
            .iter()
            .enumerate()
            .map(|(i, r)| (r.image_id.as_str(), i))
            .collect()
    }

    /// Checks unique image ids, known class ids and in-bounds boxes.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for img in &self.images {
            if !seen.insert(img.image_id.as_str()) {
                return Err(Error::Dataset(format!("duplicate image id `{}`", img.image_id)));
            }
            if img.width == 0 || img.height == 0 {
                return Err(Error::Dataset(format!("image `{}` has zero size", img.image_id)));
            }
            for (i, l) in img.labels.iter().enumerate() {
                if l.class_id >= self.classes.len() {
                    return Err(Error::Dataset(format!(
                        "image `{}` label {i}: class id {} not in class table of {} classes",
                        img.image_id,
                        l.class_id,
                        self.classes.len()
                    )));
                }
                if !l.bbox.within(img.width_f(), img.height_f()) {
                    return Err(Error::Dataset(format!(
                        "image `{}` label {i}: box {:?} outside {}x{} frame",
                        img.image_id,
                        l.bbox.to_array(),
                        img.width,
                        img.height
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Predictions for one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageDetections {
    pub image_id: String,
    pub detections: Vec<Detection>,
}

/// Model predictions for a set of images under one inference-time variant.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    /// Augmentation name, e.g. `original`, `hflip`, `blur`.
    pub variant: String,
    pub transform: crate::geometry::BoxTransform,
    pub images: Vec<ImageDetections>,
}

impl Default for DetectionSet {
    fn default() -> Self {
        Self::new("original", crate::geometry::BoxTransform::Identity)
    }
}

impl DetectionSet {
    pub fn new(variant: impl Into<String>, transform: crate::geometry::BoxTransform) -> Self {
        Self {
            variant: variant.into(),
            transform,
            images: Vec::new(),
        }
    }

    pub fn num_detections(&self) -> usize {
        self.images.iter().map(|i| i.detections.len()).sum()
    }

    pub fn by_id(&self) -> HashMap<&str, &[Detection]> {
        self.images
            .iter()
            .map(|i| (i.image_id.as_str(), i.detections.as_slice()))
            .collect()
    }

    pub fn get(&self, image_id: &str) -> Option<&[Detection]> {
        self.images
            .iter()
            .find(|i| i.image_id == image_id)
            .map(|i| i.detections.as_slice())
    }

    /// Appends a detection, creating the image entry on first use.
    pub fn push(&mut self, image_id: &str, det: Detection) {
        match self.images.iter_mut().rev().find(|i| i.image_id == image_id) {
            Some(entry) => entry.detections.push(det),
            None => self.images.push(ImageDetections {
                image_id: image_id.to_string(),
                detections: vec![det],
            }),
        }
    }

    /// Largest class id seen, if any.
    pub fn max_class_id(&self) -> Option<usize> {
        self.images
            .iter()
            .flat_map(|i| i.detections.iter().map(|d| d.class_id))
            .max()
    }
}
