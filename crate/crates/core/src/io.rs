//! Reading and writing annotation sets, detection sets and reports.
//!
//! The interchange format is a COCO-like JSON document:
//!
//! ```json
//! {
//!   "categories": [{"id": 0, "name": "Car"}],
//!   "images": [{"id": "000001", "file_name": "000001.png", "width": 1242, "height": 375}],
//!   "annotations": [{"id": 0, "image_id": "000001", "category_id": 0, "bbox": [x, y, w, h]}]
//! }
//! ```
//!
//! Detection files carry an optional header naming the inference variant:
//!
//! ```json
//! {
//!   "header": {"variant": "hflip", "width": 1024},
//!   "images": ["000001"],
//!   "detections": [{"image_id": "000001", "class_id": 0, "bbox": [x, y, w, h], "score": 0.7}]
//! }
//! ```
//!
//! KITTI label directories are supported read-only.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationSet, DetectionSet, ImageDetections, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::{BBox, BoxTransform, Detection, LabeledBox};

/// Annotation file formats accepted by [`load_annotations`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationFormat {
    #[default]
    CocoJson,
    KittiTxt,
}

impl FromStr for AnnotationFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coco_json" | "json" | "coco" => Ok(AnnotationFormat::CocoJson),
            "kitti_txt" | "kitti" => Ok(AnnotationFormat::KittiTxt),
            other => Err(Error::Config(format!("unknown annotation format `{other}`"))),
        }
    }
}

/// KITTI ingestion options. Label files carry no image size, so sizes are
/// read from `image_dir` when available and fall back to `default_size`.
#[derive(Debug, Clone)]
pub struct KittiOptions {
    pub image_dir: Option<PathBuf>,
    pub default_size: (u32, u32),
    /// Fixed class table; when `None`, classes are taken in order of first appearance.
    pub classes: Option<Vec<String>>,
}

impl Default for KittiOptions {
    fn default() -> Self {
        Self {
            image_dir: None,
            default_size: (1242, 375),
            classes: None,
        }
    }
}

pub fn load_annotations(path: &Path, format: AnnotationFormat) -> Result<AnnotationSet> {
    match format {
        AnnotationFormat::CocoJson => load_coco_json(path),
        AnnotationFormat::KittiTxt => load_kitti(path, &KittiOptions::default()),
    }
}

// ---------------------------------------------------------------------------
// COCO-like JSON

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawId {
    Int(i64),
    Str(String),
}

impl RawId {
    fn into_string(self) -> String {
        match self {
            RawId::Int(i) => i.to_string(),
            RawId::Str(s) => s,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
struct RawCoco {
    #[serde(default)]
    categories: Vec<RawCategory>,
    #[serde(default)]
    images: Vec<RawImage>,
    #[serde(default)]
    annotations: Vec<RawAnnotation>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawCategory {
    id: RawId,
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawImage {
    id: RawId,
    #[serde(default)]
    file_name: String,
    width: u32,
    height: u32,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    collage: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAnnotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<u64>,
    image_id: RawId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category_id: Option<RawId>,
    bbox: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    iscrowd: Option<u8>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    ignore: bool,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_json<T: DeserializeOwned + Default>(path: &Path, text: &str) -> Result<T> {
    if text.trim().is_empty() {
        return Ok(T::default());
    }
    serde_json::from_str(text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_bbox(path: &Path, record: usize, raw: &[f64]) -> Result<BBox> {
    let [x, y, w, h] = raw else {
        return Err(Error::parse(path, record, "bbox", format!("expected 4 numbers, got {}", raw.len())));
    };
    BBox::new(*x, *y, *w, *h).map_err(|e| Error::parse(path, record, "bbox", e.to_string()))
}

fn load_coco_json(path: &Path) -> Result<AnnotationSet> {
    let raw: RawCoco = parse_json(path, &read_text(path)?)?;

    let mut category_index = HashMap::new();
    let mut classes = Vec::with_capacity(raw.categories.len());
    for (i, c) in raw.categories.into_iter().enumerate() {
        let key = c.id.into_string();
        if category_index.insert(key.clone(), i).is_some() {
            return Err(Error::parse(path, i, "categories.id", format!("duplicate category id {key}")));
        }
        classes.push(c.name);
    }

    let mut set = AnnotationSet::new(classes);
    let mut image_index = HashMap::new();
    for (i, img) in raw.images.into_iter().enumerate() {
        let id = img.id.into_string();
        if img.width == 0 || img.height == 0 {
            return Err(Error::parse(path, i, "images.width", "image size must be positive"));
        }
        if image_index.insert(id.clone(), i).is_some() {
            return Err(Error::parse(path, i, "images.id", format!("duplicate image id `{id}`")));
        }
        let mut rec = ImageRecord::new(id, img.file_name, img.width, img.height);
        rec.collage = img.collage;
        set.images.push(rec);
    }

    for (i, ann) in raw.annotations.into_iter().enumerate() {
        let image_id = ann.image_id.into_string();
        let &slot = image_index
            .get(&image_id)
            .ok_or_else(|| Error::parse(path, i, "annotations.image_id", format!("unknown image `{image_id}`")))?;
        let bbox = parse_bbox(path, i, &ann.bbox)?;
        let rec = &mut set.images[slot];
        if !bbox.within(rec.width_f(), rec.height_f()) {
            return Err(Error::parse(
                path,
                i,
                "annotations.bbox",
                format!("box outside {}x{} image", rec.width, rec.height),
            ));
        }
        if ann.ignore || ann.iscrowd == Some(1) {
            rec.ignore_regions.push(bbox);
            continue;
        }
        let cat = ann
            .category_id
            .ok_or_else(|| Error::parse(path, i, "annotations.category_id", "missing"))?
            .into_string();
        let &class_id = category_index
            .get(&cat)
            .ok_or_else(|| Error::parse(path, i, "annotations.category_id", format!("unknown category {cat}")))?;
        rec.labels.push(LabeledBox::new(bbox, class_id));
    }
    Ok(set)
}

#[derive(Serialize)]
struct CocoOut<'a> {
    categories: Vec<RawCategory>,
    images: Vec<RawImageRef<'a>>,
    annotations: Vec<RawAnnotation>,
}

#[derive(Serialize)]
struct RawImageRef<'a> {
    id: &'a str,
    file_name: &'a str,
    width: u32,
    height: u32,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    collage: bool,
}

/// Writes `set` in the canonical JSON format. Class ids become category ids.
pub fn save_annotations(path: &Path, set: &AnnotationSet) -> Result<()> {
    let mut annotations = Vec::with_capacity(set.num_boxes());
    let mut next_id = 0u64;
    for img in &set.images {
        for l in &img.labels {
            annotations.push(RawAnnotation {
                id: Some(next_id),
                image_id: RawId::Str(img.image_id.clone()),
                category_id: Some(RawId::Int(l.class_id as i64)),
                bbox: l.bbox.to_array().to_vec(),
                iscrowd: None,
                ignore: false,
            });
            next_id += 1;
        }
        for r in &img.ignore_regions {
            annotations.push(RawAnnotation {
                id: Some(next_id),
                image_id: RawId::Str(img.image_id.clone()),
                category_id: None,
                bbox: r.to_array().to_vec(),
                iscrowd: None,
                ignore: true,
            });
            next_id += 1;
        }
    }
    let doc = CocoOut {
        categories: set
            .classes
            .iter()
            .enumerate()
            .map(|(i, name)| RawCategory {
                id: RawId::Int(i as i64),
                name: name.clone(),
            })
            .collect(),
        images: set
            .images
            .iter()
            .map(|i| RawImageRef {
                id: &i.image_id,
                file_name: &i.file_name,
                width: i.width,
                height: i.height,
                collage: i.collage,
            })
            .collect(),
        annotations,
    };
    write_json(path, &doc)
}

// ---------------------------------------------------------------------------
// KITTI

const KITTI_DONT_CARE: &str = "DontCare";
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Loads KITTI object labels from a single `.txt` file or a directory of them.
///
/// Each line reads `type truncated occluded alpha x1 y1 x2 y2 ...`; only the
/// first eight fields are used. Boxes are clipped to the image frame.
/// `DontCare` lines become ignore regions.
pub fn load_kitti(path: &Path, opts: &KittiOptions) -> Result<AnnotationSet> {
    let files = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "txt"))
            .collect();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };

    let fixed_classes = opts.classes.is_some();
    let mut set = AnnotationSet::new(opts.classes.clone().unwrap_or_default());
    for file in files {
        let stem = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let (width, height, file_name) = kitti_image_size(&stem, opts);
        let mut rec = ImageRecord::new(stem, file_name, width, height);
        let text = read_text(&file)?;
        for (line_no, line) in text.lines().enumerate() {
            let line_no = line_no + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() < 8 {
                return Err(Error::parse(&file, line_no, "bbox", format!("expected at least 8 fields, got {}", fields.len())));
            }
            let coord = |i: usize, name: &str| -> Result<f64> {
                fields[i]
                    .parse::<f64>()
                    .map_err(|e| Error::parse(&file, line_no, name, e.to_string()))
            };
            let x1 = coord(4, "x1")?.max(0.0);
            let y1 = coord(5, "y1")?.max(0.0);
            let x2 = coord(6, "x2")?.min(f64::from(width));
            let y2 = coord(7, "y2")?.min(f64::from(height));
            let bbox = BBox::from_corners(x1, y1, x2, y2)
                .map_err(|e| Error::parse(&file, line_no, "bbox", e.to_string()))?;
            let class_name = fields[0];
            if class_name == KITTI_DONT_CARE {
                rec.ignore_regions.push(bbox);
                continue;
            }
            let class_id = match set.class_id(class_name) {
                Some(id) => id,
                None if fixed_classes => {
                    return Err(Error::parse(&file, line_no, "type", format!("unknown class `{class_name}`")))
                }
                None => {
                    set.classes.push(class_name.to_string());
                    set.classes.len() - 1
                }
            };
            rec.labels.push(LabeledBox::new(bbox, class_id));
        }
        set.images.push(rec);
    }
    Ok(set)
}

fn kitti_image_size(stem: &str, opts: &KittiOptions) -> (u32, u32, String) {
    if let Some(dir) = &opts.image_dir {
        for ext in IMAGE_EXTENSIONS {
            let candidate = dir.join(format!("{stem}.{ext}"));
            if let Ok((w, h)) = image::image_dimensions(&candidate) {
                return (w, h, format!("{stem}.{ext}"));
            }
        }
    }
    let (w, h) = opts.default_size;
    (w, h, format!("{stem}.png"))
}

// ---------------------------------------------------------------------------
// Detections

#[derive(Debug, Serialize, Deserialize)]
struct DetectionHeader {
    #[serde(default = "default_variant")]
    variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<f64>,
}

fn default_variant() -> String {
    "original".to_string()
}

#[derive(Debug, Default, Deserialize)]
struct RawDetectionFile {
    #[serde(default)]
    header: Option<DetectionHeader>,
    #[serde(default)]
    images: Vec<RawId>,
    #[serde(default)]
    detections: Vec<RawDetection>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDetection {
    image_id: RawId,
    class_id: usize,
    bbox: Vec<f64>,
    score: f64,
}

/// Variant names whose boxes live in a horizontally flipped frame.
fn transform_for_variant(variant: &str, width: Option<f64>) -> BoxTransform {
    match variant {
        "hflip" | "flip" | "horizontal_flip" => BoxTransform::Hflip { image_width: width },
        _ => BoxTransform::Identity,
    }
}

pub fn load_detections(path: &Path) -> Result<DetectionSet> {
    let raw: RawDetectionFile = parse_json(path, &read_text(path)?)?;
    let header = raw.header.unwrap_or(DetectionHeader {
        variant: default_variant(),
        width: None,
    });
    if let Some(w) = header.width {
        if !(w.is_finite() && w > 0.0) {
            return Err(Error::parse(path, 0, "header.width", "width must be positive"));
        }
    }
    let mut set = DetectionSet::new(
        header.variant.clone(),
        transform_for_variant(&header.variant, header.width),
    );
    let mut slots: HashMap<String, usize> = HashMap::new();
    for id in raw.images {
        let id = id.into_string();
        if !slots.contains_key(&id) {
            slots.insert(id.clone(), set.images.len());
            set.images.push(ImageDetections {
                image_id: id,
                detections: Vec::new(),
            });
        }
    }
    for (i, d) in raw.detections.into_iter().enumerate() {
        if !(0.0..=1.0).contains(&d.score) {
            return Err(Error::parse(path, i, "score", format!("score out of range: {}", d.score)));
        }
        let bbox = parse_bbox(path, i, &d.bbox)?;
        let id = d.image_id.into_string();
        let slot = *slots.entry(id.clone()).or_insert_with(|| {
            set.images.push(ImageDetections {
                image_id: id,
                detections: Vec::new(),
            });
            set.images.len() - 1
        });
        set.images[slot].detections.push(Detection {
            bbox,
            class_id: d.class_id,
            score: d.score,
        });
    }
    Ok(set)
}

#[derive(Serialize)]
struct DetectionFileOut<'a> {
    header: DetectionHeader,
    images: Vec<&'a str>,
    detections: Vec<RawDetection>,
}

pub fn save_detections(path: &Path, set: &DetectionSet) -> Result<()> {
    let width = match set.transform {
        BoxTransform::Hflip { image_width } => image_width,
        BoxTransform::Identity => None,
    };
    let doc = DetectionFileOut {
        header: DetectionHeader {
            variant: set.variant.clone(),
            width,
        },
        images: set.images.iter().map(|i| i.image_id.as_str()).collect(),
        detections: set
            .images
            .iter()
            .flat_map(|img| {
                img.detections.iter().map(|d| RawDetection {
                    image_id: RawId::Str(img.image_id.clone()),
                    class_id: d.class_id,
                    bbox: d.bbox.to_array().to_vec(),
                    score: d.score,
                })
            })
            .collect(),
    };
    write_json(path, &doc)
}

// ---------------------------------------------------------------------------
// Reports

pub fn save_report<T: Serialize + ?Sized>(path: &Path, report: &T) -> Result<()> {
    write_json(path, report)
}

pub fn load_report<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Serializes to pretty JSON and atomically replaces `path`.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Writes through a temporary file in the destination directory so a failed
/// write never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
