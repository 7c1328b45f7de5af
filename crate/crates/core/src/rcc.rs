//! Rare-class collage: crop rare objects with random context, upscale them
//! and paste them side by side onto blank canvases as new labeled images.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationSet, ImageRecord};
use crate::error::{Error, Result};
use crate::geometry::{BBox, LabeledBox};
use crate::rng;

const STREAM_EXPAND: u64 = 0x7263_6301;
const STREAM_SHUFFLE: u64 = 0x7263_6302;
const STREAM_SCALE: u64 = 0x7263_6303;

/// Height range, as a fraction of the canvas, used when scale variation is on.
pub const SCALE_VARIATION_RANGE: (f64, f64) = (0.5, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Crops scaled to the canvas height and pasted left to right.
    #[default]
    Horizontal,
    /// Canvas split into 4x4 cells, one crop per cell.
    Grid4x4,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizontal" => Ok(Layout::Horizontal),
            "grid4x4" | "grid" => Ok(Layout::Grid4x4),
            other => Err(Error::Config(format!("unknown layout `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RccConfig {
    pub rare_classes: BTreeSet<usize>,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub layout: Layout,
    pub scale_variation: bool,
    pub canvas_w: u32,
    pub canvas_h: u32,
    pub seed: u64,
    /// Prefix for generated image ids and file names.
    pub id_prefix: String,
}

impl RccConfig {
    pub fn new(rare_classes: impl IntoIterator<Item = usize>) -> Self {
        Self {
            rare_classes: rare_classes.into_iter().collect(),
            gamma_min: 0.25,
            gamma_max: 0.75,
            layout: Layout::Horizontal,
            scale_variation: false,
            canvas_w: 1024,
            canvas_h: 512,
            seed: 0,
            id_prefix: "collage".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rare_classes.is_empty() {
            return Err(Error::Config("rare class set is empty".into()));
        }
        if !(self.gamma_min >= 0.0 && self.gamma_max >= self.gamma_min && self.gamma_max.is_finite()) {
            return Err(Error::Config(format!(
                "expected 0 <= gamma_min <= gamma_max, got [{}, {}]",
                self.gamma_min, self.gamma_max
            )));
        }
        if self.canvas_w == 0 || self.canvas_h == 0 {
            return Err(Error::Config("canvas dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Grows `b` by `p_r` times its size on every side, clipped to the image.
pub fn expand_box(b: &BBox, p_r: f64, img_w: f64, img_h: f64) -> BBox {
    let x1 = (b.x() - p_r * b.w()).max(0.0);
    let y1 = (b.y() - p_r * b.h()).max(0.0);
    let x2 = (b.x() + (1.0 + p_r) * b.w()).min(img_w);
    let y2 = (b.y() + (1.0 + p_r) * b.h()).min(img_h);
    // The input box lies inside the image, so the clipped span stays positive.
    BBox::from_corners(x1, y1, x2, y2).unwrap_or(*b)
}

/// Supplies decoded source images.
pub trait RasterSource: Sync {
    fn load(&self, image: &ImageRecord) -> Result<RgbImage>;
}

/// Reads images from `root/<file_name>`.
#[derive(Debug, Clone)]
pub struct DirSource {
    pub root: PathBuf,
}

impl DirSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl RasterSource for DirSource {
    fn load(&self, image: &ImageRecord) -> Result<RgbImage> {
        let path = self.root.join(&image.file_name);
        let img = image::open(&path).map_err(|source| Error::Image { path, source })?;
        Ok(img.to_rgb8())
    }
}

/// Where one collage label came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_image_id: String,
    pub source_box_index: usize,
    pub p_r: f64,
    /// Pixel rectangle the crop was pasted into.
    pub placement: BBox,
    /// True for the rare object the crop was cut around, false for context
    /// objects that happened to lie fully inside the crop.
    pub primary: bool,
}

#[derive(Debug, Clone)]
pub struct CollageOutput {
    pub image_id: String,
    pub image: RgbImage,
    pub labels: Vec<LabeledBox>,
    pub provenance: Vec<Provenance>,
}

impl CollageOutput {
    pub fn record(&self) -> ImageRecord {
        let mut rec = ImageRecord::new(
            self.image_id.clone(),
            format!("{}.png", self.image_id),
            self.image.width(),
            self.image.height(),
        )
        .with_labels(self.labels.clone());
        rec.collage = true;
        rec
    }
}

#[derive(Debug, Clone, Default)]
pub struct CollageRun {
    pub collages: Vec<CollageOutput>,
    /// Set when the run produced nothing useful, e.g. no rare boxes.
    pub warning: Option<String>,
}

/// One rare object's crop and its paste rectangle.
#[derive(Debug, Clone)]
struct Piece {
    image_idx: usize,
    label_idx: usize,
    p_r: f64,
    crop: BBox,
    collage: usize,
    px: u32,
    py: u32,
    pw: u32,
    ph: u32,
}

/// Builds collages for every rare-class box in `set`.
///
/// Random draws happen in a fixed order: one expansion factor per rare box
/// in set order, one shuffle of the crops, then one scale factor per crop
/// when scale variation is on. Rendering runs in parallel afterwards.
pub fn build_collages(set: &AnnotationSet, source: &dyn RasterSource, cfg: &RccConfig) -> Result<CollageRun> {
    cfg.validate()?;
    let mut expand_rng = rng::stream(cfg.seed, STREAM_EXPAND);
    let mut pieces = Vec::new();
    for (ii, img) in set.images.iter().enumerate() {
        for (li, l) in img.labels.iter().enumerate() {
            if !cfg.rare_classes.contains(&l.class_id) {
                continue;
            }
            let p_r = rng::uniform(&mut expand_rng, cfg.gamma_min, cfg.gamma_max);
            let crop = expand_box(&l.bbox, p_r, img.width_f(), img.height_f());
            pieces.push(Piece {
                image_idx: ii,
                label_idx: li,
                p_r,
                crop,
                collage: 0,
                px: 0,
                py: 0,
                pw: 0,
                ph: 0,
            });
        }
    }
    if pieces.is_empty() {
        return Ok(CollageRun {
            collages: Vec::new(),
            warning: Some("no boxes of the rare classes were found".into()),
        });
    }
    pieces.shuffle(&mut rng::stream(cfg.seed, STREAM_SHUFFLE));
    let n_collages = layout_pieces(&mut pieces, cfg);

    let windows = cut_windows(set, source, &pieces)?;

    let mut by_collage: Vec<Vec<usize>> = vec![Vec::new(); n_collages];
    for (pi, p) in pieces.iter().enumerate() {
        by_collage[p.collage].push(pi);
    }
    let collages = by_collage
        .par_iter()
        .enumerate()
        .map(|(ci, members)| render_collage(set, cfg, ci, members, &pieces, &windows))
        .collect();
    Ok(CollageRun {
        collages,
        warning: None,
    })
}

/// Assigns each piece a collage index and paste rectangle. Returns the
/// number of collages.
fn layout_pieces(pieces: &mut [Piece], cfg: &RccConfig) -> usize {
    let mut scale_rng = rng::stream(cfg.seed, STREAM_SCALE);
    let (cw, ch) = (f64::from(cfg.canvas_w), f64::from(cfg.canvas_h));
    let mut scale_factor = || {
        if cfg.scale_variation {
            rng::uniform(&mut scale_rng, SCALE_VARIATION_RANGE.0, SCALE_VARIATION_RANGE.1)
        } else {
            1.0
        }
    };
    match cfg.layout {
        Layout::Horizontal => {
            let mut collage = 0;
            let mut cursor = 0u32;
            for p in pieces.iter_mut() {
                let target_h = (ch * scale_factor()).round().clamp(1.0, ch);
                let mut w = (p.crop.w() * target_h / p.crop.h()).round().max(1.0);
                let mut h = target_h;
                if w > cw {
                    // A lone crop wider than the canvas is shrunk to fit.
                    w = cw;
                    h = (p.crop.h() * cw / p.crop.w()).round().clamp(1.0, ch);
                }
                let (w, h) = (w as u32, h as u32);
                if cursor > 0 && cursor + w > cfg.canvas_w {
                    collage += 1;
                    cursor = 0;
                }
                p.collage = collage;
                p.px = cursor;
                p.py = 0;
                p.pw = w;
                p.ph = h;
                cursor += w;
            }
            collage + 1
        }
        Layout::Grid4x4 => {
            const CELLS: usize = 16;
            let edge = |i: usize, total: u32| (i as u64 * u64::from(total) / 4) as u32;
            for (n, p) in pieces.iter_mut().enumerate() {
                let cell = n % CELLS;
                let (col, row) = (cell % 4, cell / 4);
                let (x0, x1) = (edge(col, cfg.canvas_w), edge(col + 1, cfg.canvas_w));
                let (y0, y1) = (edge(row, cfg.canvas_h), edge(row + 1, cfg.canvas_h));
                let (cell_w, cell_h) = (f64::from((x1 - x0).max(1)), f64::from((y1 - y0).max(1)));
                let s = (cell_w / p.crop.w()).min(cell_h / p.crop.h()) * scale_factor();
                p.collage = n / CELLS;
                p.px = x0;
                p.py = y0;
                p.pw = (p.crop.w() * s).round().clamp(1.0, cell_w) as u32;
                p.ph = (p.crop.h() * s).round().clamp(1.0, cell_h) as u32;
            }
            pieces.len().div_ceil(CELLS)
        }
    }
}

/// Source pixels around one crop, with a one-pixel margin for bilinear taps.
struct Window {
    pixels: RgbImage,
    x0: u32,
    y0: u32,
}

fn cut_windows(set: &AnnotationSet, source: &dyn RasterSource, pieces: &[Piece]) -> Result<Vec<Window>> {
    let mut by_image: HashMap<usize, Vec<usize>> = HashMap::new();
    for (pi, p) in pieces.iter().enumerate() {
        by_image.entry(p.image_idx).or_default().push(pi);
    }
    let mut groups: Vec<(usize, Vec<usize>)> = by_image.into_iter().collect();
    groups.sort_unstable_by_key(|(ii, _)| *ii);

    let cut: Vec<Vec<(usize, Window)>> = groups
        .par_iter()
        .map(|(ii, members)| {
            let rec = &set.images[*ii];
            let img = source.load(rec)?;
            if img.width() != rec.width || img.height() != rec.height {
                return Err(Error::Dataset(format!(
                    "image `{}` is {}x{} but annotated as {}x{}",
                    rec.image_id,
                    img.width(),
                    img.height(),
                    rec.width,
                    rec.height
                )));
            }
            Ok(members
                .iter()
                .map(|&pi| {
                    let c = &pieces[pi].crop;
                    let x0 = (c.x().floor() - 1.0).max(0.0) as u32;
                    let y0 = (c.y().floor() - 1.0).max(0.0) as u32;
                    let x1 = ((c.right().ceil() + 1.0) as u32).min(img.width());
                    let y1 = ((c.bottom().ceil() + 1.0) as u32).min(img.height());
                    let pixels = image::imageops::crop_imm(&img, x0, y0, x1 - x0, y1 - y0).to_image();
                    (pi, Window { pixels, x0, y0 })
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut slots: Vec<Option<Window>> = (0..pieces.len()).map(|_| None).collect();
    for (pi, w) in cut.into_iter().flatten() {
        slots[pi] = Some(w);
    }
    Ok(slots.into_iter().map(|w| w.expect("every piece has a window")).collect())
}

/// Bilinear sample at continuous pixel-index coordinates, clamped to the edge.
fn sample_bilinear(img: &RgbImage, u: f64, v: f64) -> [f64; 3] {
    let max_x = f64::from(img.width() - 1);
    let max_y = f64::from(img.height() - 1);
    let u = u.clamp(0.0, max_x);
    let v = v.clamp(0.0, max_y);
    let (x0, y0) = (u.floor(), v.floor());
    let (fx, fy) = (u - x0, v - y0);
    let (x0, y0) = (x0 as u32, y0 as u32);
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let p = |x, y| img.get_pixel(x, y).0;
    let (a, b, c, d) = (p(x0, y0), p(x1, y0), p(x0, y1), p(x1, y1));
    let mut out = [0.0; 3];
    for ch in 0..3 {
        let top = f64::from(a[ch]) * (1.0 - fx) + f64::from(b[ch]) * fx;
        let bottom = f64::from(c[ch]) * (1.0 - fx) + f64::from(d[ch]) * fx;
        out[ch] = top * (1.0 - fy) + bottom * fy;
    }
    out
}

fn render_collage(
    set: &AnnotationSet,
    cfg: &RccConfig,
    index: usize,
    members: &[usize],
    pieces: &[Piece],
    windows: &[Window],
) -> CollageOutput {
    let mut canvas = RgbImage::from_pixel(cfg.canvas_w, cfg.canvas_h, Rgb([0, 0, 0]));
    let mut labels = Vec::new();
    let mut provenance = Vec::new();
    for &pi in members {
        let p = &pieces[pi];
        let win = &windows[pi];
        let sx = f64::from(p.pw) / p.crop.w();
        let sy = f64::from(p.ph) / p.crop.h();
        for j in 0..p.ph {
            let v = p.crop.y() + (f64::from(j) + 0.5) / sy - 0.5 - f64::from(win.y0);
            for i in 0..p.pw {
                let u = p.crop.x() + (f64::from(i) + 0.5) / sx - 0.5 - f64::from(win.x0);
                let px = sample_bilinear(&win.pixels, u, v);
                let rgb = px.map(|c| c.round().clamp(0.0, 255.0) as u8);
                canvas.put_pixel(p.px + i, p.py + j, Rgb(rgb));
            }
        }

        let placement = BBox::new(f64::from(p.px), f64::from(p.py), f64::from(p.pw), f64::from(p.ph))
            .expect("paste rectangle is at least one pixel");
        let src = &set.images[p.image_idx];
        let map_x = |x: f64| (f64::from(p.px) + (x - p.crop.x()) * sx).clamp(placement.x(), placement.right());
        let map_y = |y: f64| (f64::from(p.py) + (y - p.crop.y()) * sy).clamp(placement.y(), placement.bottom());
        for (li, l) in src.labels.iter().enumerate() {
            let primary = li == p.label_idx;
            if !primary && !p.crop.contains(&l.bbox) {
                continue;
            }
            let Ok(bbox) = BBox::from_corners(map_x(l.bbox.x()), map_y(l.bbox.y()), map_x(l.bbox.right()), map_y(l.bbox.bottom()))
            else {
                continue;
            };
            labels.push(LabeledBox::new(bbox, l.class_id));
            provenance.push(Provenance {
                source_image_id: src.image_id.clone(),
                source_box_index: li,
                p_r: p.p_r,
                placement,
                primary,
            });
        }
    }
    CollageOutput {
        image_id: format!("{}_{index:04}", cfg.id_prefix),
        image: canvas,
        labels,
        provenance,
    }
}

/// Adds the collages to `set` as new images flagged as collages.
pub fn append_collages(set: &AnnotationSet, collages: &[CollageOutput]) -> Result<AnnotationSet> {
    let mut out = set.clone();
    for c in collages {
        if out.image(&c.image_id).is_some() {
            return Err(Error::Dataset(format!("collage id `{}` already present", c.image_id)));
        }
        out.images.push(c.record());
    }
    Ok(out)
}

/// Annotation set holding only the collages, sharing `classes`.
pub fn collage_annotations(classes: &[String], collages: &[CollageOutput]) -> AnnotationSet {
    AnnotationSet {
        classes: classes.to_vec(),
        images: collages.iter().map(CollageOutput::record).collect(),
    }
}

/// Writes every collage as `<dir>/<image_id>.png`.
pub fn save_collage_images(dir: &Path, collages: &[CollageOutput]) -> Result<()> {
    for c in collages {
        let path = dir.join(format!("{}.png", c.image_id));
        let mut bytes = Vec::new();
        c.image
            .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?;
        crate::io::write_atomic(&path, &bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct MemSource(HashMap<String, RgbImage>);

    impl RasterSource for MemSource {
        fn load(&self, image: &ImageRecord) -> Result<RgbImage> {
            self.0
                .get(&image.image_id)
                .cloned()
                .ok_or_else(|| Error::UnknownImage(image.image_id.clone()))
        }
    }

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn expand_examples() {
        let e = expand_box(&bb(100., 50., 40., 20.), 0.25, 1024., 512.);
        assert_eq!(e, bb(90., 45., 60., 30.));
        let b = bb(3., 4., 5., 6.);
        assert_eq!(expand_box(&b, 0.0, 100., 100.), b);
        let clamped = expand_box(&bb(0., 0., 40., 20.), 1.0, 1024., 512.);
        assert_eq!((clamped.x(), clamped.y()), (0., 0.));
        assert_eq!((clamped.right(), clamped.bottom()), (80., 40.));
    }

    proptest! {
        #[test]
        fn expansion_contains_input(
            x in 0.0..90.0f64, y in 0.0..90.0f64, w in 0.5..10.0f64, h in 0.5..10.0f64, p in 0.0..2.0f64,
        ) {
            let b = bb(x, y, w, h);
            let e = expand_box(&b, p, 100.0, 100.0);
            prop_assert!(e.contains(&b));
            prop_assert!(e.within(100.0, 100.0));
        }
    }

    fn two_rare_boxes() -> (AnnotationSet, MemSource) {
        let mut set = AnnotationSet::new(vec!["common".into(), "rare".into()]);
        let mut images = HashMap::new();
        for (id, w) in [("a", 30.0), ("b", 40.0)] {
            let rec = ImageRecord::new(id, format!("{id}.png"), 200, 100)
                .with_labels(vec![LabeledBox::new(bb(10., 10., w, 40.), 1)]);
            images.insert(id.to_string(), RgbImage::from_pixel(200, 100, Rgb([200, 10, 10])));
            set.images.push(rec);
        }
        (set, MemSource(images))
    }

    #[test]
    fn horizontal_placements_accumulate_width() {
        // p_r = 0 keeps crops at the object: widths 30 and 40 at height 40,
        // scaled to height 400 they become 300 and 400 pixels wide.
        let (set, src) = two_rare_boxes();
        let mut cfg = RccConfig::new([1]);
        cfg.gamma_min = 0.0;
        cfg.gamma_max = 0.0;
        cfg.canvas_w = 1024;
        cfg.canvas_h = 400;
        let run = build_collages(&set, &src, &cfg).unwrap();
        assert_eq!(run.collages.len(), 1);
        let mut xs: Vec<(f64, f64)> = run.collages[0]
            .provenance
            .iter()
            .map(|p| (p.placement.x(), p.placement.w()))
            .collect();
        xs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let widths: Vec<f64> = xs.iter().map(|x| x.1).collect();
        assert_eq!(xs[0].0, 0.0);
        assert_eq!(xs[1].0, xs[0].1);
        assert!(widths == vec![300.0, 400.0] || widths == vec![400.0, 300.0]);
    }

    #[test]
    fn overflow_starts_a_new_collage() {
        let (set, src) = two_rare_boxes();
        let mut cfg = RccConfig::new([1]);
        cfg.gamma_min = 0.0;
        cfg.gamma_max = 0.0;
        cfg.canvas_w = 500;
        cfg.canvas_h = 400;
        let run = build_collages(&set, &src, &cfg).unwrap();
        assert_eq!(run.collages.len(), 2);
    }

    #[test]
    fn grid_holds_sixteen_per_collage() {
        let mut set = AnnotationSet::new(vec!["rare".into()]);
        let mut images = HashMap::new();
        for i in 0..17 {
            let id = format!("i{i}");
            set.images.push(
                ImageRecord::new(&id, "x.png", 64, 64).with_labels(vec![LabeledBox::new(bb(20., 20., 10., 10.), 0)]),
            );
            images.insert(id, RgbImage::from_pixel(64, 64, Rgb([0, 255, 0])));
        }
        let mut cfg = RccConfig::new([0]);
        cfg.layout = Layout::Grid4x4;
        let run = build_collages(&set, &MemSource(images), &cfg).unwrap();
        assert_eq!(run.collages.len(), 2);
        assert_eq!(run.collages[0].labels.len(), 16);
        assert_eq!(run.collages[1].labels.len(), 1);
        for c in &run.collages {
            for l in &c.labels {
                assert!(l.bbox.within(1024.0, 512.0));
            }
        }
    }

    #[test]
    fn no_rare_boxes_warns() {
        let (set, src) = two_rare_boxes();
        let run = build_collages(&set, &src, &RccConfig::new([0])).unwrap();
        assert!(run.collages.is_empty());
        assert!(run.warning.is_some());
    }

    #[test]
    fn append_counts_pasted_instances() {
        let (set, src) = two_rare_boxes();
        assert_eq!(append_collages(&set, &[]).unwrap(), set);
        let run = build_collages(&set, &src, &RccConfig::new([1])).unwrap();
        let out = append_collages(&set, &run.collages).unwrap();
        let before = crate::stats::class_frequencies(&set).get(1);
        let after = crate::stats::class_frequencies(&out).get(1);
        let pasted: usize = run.collages.iter().map(|c| c.labels.iter().filter(|l| l.class_id == 1).count()).sum();
        assert_eq!(after - before, pasted as u64);
        assert!(out.images.last().unwrap().collage);
        assert!(append_collages(&out, &run.collages).is_err());
    }
}
