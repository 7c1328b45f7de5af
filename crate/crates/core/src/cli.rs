//! Command-line front end. Every subcommand reads its settings from flags,
//! then from its section of the `--config` JSON file, then from defaults,
//! and writes reports wrapped with the tool version and the effective
//! settings.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::corrupt::{self, ErrorParams};
use crate::dataset::{AnnotationSet, DetectionSet};
use crate::error::{Error, Result};
use crate::glc::{self, GlcConfig};
use crate::io::{self, AnnotationFormat, KittiOptions};
use crate::pls::{self, PlsConfig};
use crate::quality::{self, CompareConfig};
use crate::rcc::{self, DirSource, Layout, RccConfig};
use crate::rcf::{self, PlanOptions};
use crate::sim::{self, DetectorParams, SceneParams};
use crate::stats;

pub const TOOL: &str = "labelsmith";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const THREADS_ENV: &str = "LABELSMITH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "labelsmith", version, about = "Dataset tooling for semi-supervised object detection")]
struct Cli {
    /// JSON file with one section per subcommand plus top-level `seed` and `log_level`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random decision (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// error, warn, info, debug or trace (default warn).
    #[arg(long, global = true)]
    log_level: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Class frequencies and per-image rarity scores.
    Stats(StatsArgs),
    /// Build rare-class collages and append them to the set.
    Rcc(RccArgs),
    /// Split into rare and common images and plan batches.
    Rcf(RcfArgs),
    /// Correct GT labels from consistent teacher predictions.
    Glc(GlcArgs),
    /// Inject synthetic label errors with a restore ledger.
    InjectErrors(InjectArgs),
    /// Rank pseudo-labeled images and drop the weakest.
    Pls(PlsArgs),
    /// Pseudo-label quality against reference labels.
    Eval(EvalArgs),
    /// ROC of per-image selection metrics against miss labels.
    EvalRoc(EvalRocArgs),
    /// Recommend a score threshold from validation predictions.
    RecommendThreshold(RecommendArgs),
    /// Generate synthetic scenes and simulated detector output.
    Simulate(SimulateArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Stats(_) => "stats",
            Command::Rcc(_) => "rcc",
            Command::Rcf(_) => "rcf",
            Command::Glc(_) => "glc",
            Command::InjectErrors(_) => "inject-errors",
            Command::Pls(_) => "pls",
            Command::Eval(_) => "eval",
            Command::EvalRoc(_) => "eval-roc",
            Command::RecommendThreshold(_) => "recommend-threshold",
            Command::Simulate(_) => "simulate",
        }
    }
}

/// Fills every `None` field of `$args` from `$file`.
macro_rules! overlay {
    ($args:ident, $file:ident; $($field:ident),+ $(,)?) => {
        $( if $args.$field.is_none() { $args.$field = $file.$field.clone(); } )+
    };
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct InputArgs {
    /// Annotation file (COCO-like JSON) or KITTI label directory.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// coco_json or kitti_txt.
    #[arg(long)]
    format: Option<String>,
    /// Image directory used to size KITTI frames.
    #[arg(long)]
    image_dir: Option<PathBuf>,
}

impl InputArgs {
    fn overlay(&mut self, file: &InputArgs) {
        let args = self;
        overlay!(args, file; annotations, format, image_dir);
        args.format.get_or_insert_with(|| "coco_json".into());
    }

    fn load(&self) -> Result<AnnotationSet> {
        let path = required(&self.annotations, "--annotations")?;
        let format: AnnotationFormat = self.format.as_deref().unwrap_or("coco_json").parse()?;
        info!("loading annotations from {}", path.display());
        let set = match format {
            AnnotationFormat::KittiTxt => io::load_kitti(
                path,
                &KittiOptions {
                    image_dir: self.image_dir.clone(),
                    ..Default::default()
                },
            )?,
            f => io::load_annotations(path, f)?,
        };
        set.validate()?;
        Ok(set)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct StatsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: InputArgs,
    /// Upper end of the scaled rarity score (default 20).
    #[arg(long)]
    gamma_f: Option<f64>,
    /// Write per-image sampling weights here.
    #[arg(long)]
    export_weights: Option<PathBuf>,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RccArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: InputArgs,
    /// Directory holding the source images.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Comma-separated class names or ids.
    #[arg(long, value_delimiter = ',')]
    rare_classes: Option<Vec<String>>,
    #[arg(long)]
    gamma_min: Option<f64>,
    #[arg(long)]
    gamma_max: Option<f64>,
    /// horizontal or grid4x4.
    #[arg(long)]
    layout: Option<String>,
    /// Canvas size as WxH (default 1024x512).
    #[arg(long)]
    canvas: Option<String>,
    /// Randomize pasted crop heights.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    scale_variation: bool,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RcfArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: InputArgs,
    /// Default 8.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Default 20.
    #[arg(long)]
    gamma_f: Option<f64>,
    /// Default 1.
    #[arg(long)]
    epochs: Option<usize>,
    /// One rare entry per batch instead of a pair.
    #[arg(long)]
    no_pair_rare: bool,
    /// Do not flag rare entries for augmentation.
    #[arg(long)]
    no_augment_rare: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GlcArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: InputArgs,
    /// Predictions on the original images.
    #[arg(long)]
    preds: Option<PathBuf>,
    /// Comma-separated prediction files, one per augmented variant.
    #[arg(long, value_delimiter = ',')]
    preds_aug: Option<Vec<PathBuf>>,
    #[arg(long)]
    delta_floor: Option<f64>,
    #[arg(long)]
    delta_s: Option<f64>,
    #[arg(long)]
    gamma_c: Option<f64>,
    #[arg(long)]
    gamma_o: Option<f64>,
    #[arg(long)]
    match_iou: Option<f64>,
    /// Corrected annotation file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct InjectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    input: InputArgs,
    /// Preset corruption level, 1 or 2.
    #[arg(long)]
    level: Option<u8>,
    /// JSON error params; overrides --level.
    #[arg(long)]
    custom: Option<PathBuf>,
    /// Fraction of boxes given a random other class.
    #[arg(long)]
    class_flip: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PlsArgs {
    #[arg(long)]
    preds: Option<PathBuf>,
    /// Default 0.4.
    #[arg(long)]
    delta_s: Option<f64>,
    /// Default 0.1.
    #[arg(long)]
    alpha: Option<f64>,
    /// Default 0.1.
    #[arg(long)]
    beta: Option<f64>,
    /// Fraction of images to remove (default 0.2).
    #[arg(long)]
    remove: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Filtered predictions of the kept images.
    #[arg(long)]
    kept_preds: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalArgs {
    #[arg(long)]
    preds: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    input: InputArgs,
    /// Score threshold applied before matching (default 0.9).
    #[arg(long)]
    delta_s: Option<f64>,
    #[arg(long)]
    match_iou: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalRocArgs {
    #[arg(long)]
    preds: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    input: InputArgs,
    #[arg(long)]
    delta_s: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated weights for the combined metric.
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    #[arg(long)]
    mdr_cut: Option<f64>,
    #[arg(long)]
    match_iou: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RecommendArgs {
    #[arg(long)]
    preds: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    input: InputArgs,
    #[arg(long)]
    match_iou: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateArgs {
    /// JSON scene params; defaults apply to missing fields.
    #[arg(long)]
    scenes: Option<PathBuf>,
    /// JSON detector params; overrides --preset.
    #[arg(long)]
    detector: Option<PathBuf>,
    /// perfect, calibrated, heterogeneous or low_score (default calibrated).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Do not render scene images.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    skip_images: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    log_level: Option<String>,
    stats: StatsArgs,
    rcc: RccArgs,
    rcf: RcfArgs,
    glc: GlcArgs,
    #[serde(rename = "inject-errors")]
    inject_errors: InjectArgs,
    pls: PlsArgs,
    eval: EvalArgs,
    #[serde(rename = "eval-roc")]
    eval_roc: EvalRocArgs,
    #[serde(rename = "recommend-threshold")]
    recommend_threshold: RecommendArgs,
    simulate: SimulateArgs,
}

#[derive(Serialize)]
struct Envelope<'a, C: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a C,
    result: &'a R,
}

struct Ctx {
    command: &'static str,
    seed: u64,
}

impl Ctx {
    fn report<C: Serialize, R: Serialize>(&self, path: Option<&Path>, config: &C, result: &R) -> Result<()> {
        let env = Envelope {
            tool: TOOL,
            version: VERSION,
            command: self.command,
            seed: self.seed,
            config,
            result,
        };
        match path {
            Some(p) => {
                info!("writing {}", p.display());
                io::save_report(p, &env)
            }
            None => {
                let mut text = serde_json::to_string_pretty(&env).expect("reports serialize");
                text.push('\n');
                std::io::Write::write_all(&mut std::io::stdout().lock(), text.as_bytes())
                    .map_err(|e| Error::io("<stdout>", e))
            }
        }
    }
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::Config(format!("missing required option {flag}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn load_preds(path: &Path) -> Result<DetectionSet> {
    info!("loading predictions from {}", path.display());
    io::load_detections(path)
}

fn run_stats(ctx: &Ctx, mut a: StatsArgs, f: &StatsArgs) -> Result<()> {
    a.input.overlay(&f.input);
    overlay!(a, f; gamma_f, export_weights, out);
    let gamma_f = *a.gamma_f.get_or_insert(20.0);
    let set = a.input.load()?;
    let freq = stats::class_frequencies(&set);
    let scores = stats::image_scores(&set, &freq, gamma_f)?;

    #[derive(Serialize)]
    struct ClassRow<'a> {
        class_id: usize,
        name: &'a str,
        boxes: u64,
    }
    #[derive(Serialize)]
    struct StatsResult<'a> {
        images: usize,
        boxes: u64,
        classes: Vec<ClassRow<'a>>,
        rarest_first: Vec<usize>,
        image_scores: Vec<stats::ImageScore>,
    }
    let result = StatsResult {
        images: set.images.len(),
        boxes: freq.total,
        classes: set
            .classes
            .iter()
            .enumerate()
            .map(|(k, name)| ClassRow {
                class_id: k,
                name,
                boxes: freq.get(k),
            })
            .collect(),
        rarest_first: freq.rarest_first(),
        image_scores: scores,
    };
    if let Some(path) = &a.export_weights {
        io::save_report(path, &stats::export_weights(&set, gamma_f)?)?;
    }
    ctx.report(a.out.as_deref(), &a, &result)
}

fn parse_canvas(s: &str) -> Result<(u32, u32)> {
    let bad = || Error::Config(format!("canvas must look like WIDTHxHEIGHT, got `{s}`"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((w.trim().parse().map_err(|_| bad())?, h.trim().parse().map_err(|_| bad())?))
}

fn resolve_classes(set: &AnnotationSet, tokens: &[String]) -> Result<Vec<usize>> {
    tokens
        .iter()
        .map(|t| {
            let t = t.trim();
            set.class_id(t)
                .or_else(|| t.parse::<usize>().ok().filter(|&k| k < set.num_classes()))
                .ok_or_else(|| Error::Config(format!("unknown class `{t}`")))
        })
        .collect()
}

fn run_rcc(ctx: &Ctx, mut a: RccArgs, f: &RccArgs) -> Result<()> {
    a.input.overlay(&f.input);
    overlay!(a, f; images, rare_classes, gamma_min, gamma_max, layout, canvas, out_dir);
    a.scale_variation |= f.scale_variation;
    let gamma_min = *a.gamma_min.get_or_insert(0.25);
    let gamma_max = *a.gamma_max.get_or_insert(0.75);
    let layout: Layout = a.layout.get_or_insert_with(|| "horizontal".into()).parse()?;
    let (canvas_w, canvas_h) = parse_canvas(a.canvas.get_or_insert_with(|| "1024x512".into()))?;
    let images = required(&a.images, "--images")?.clone();
    let out_dir = required(&a.out_dir, "--out-dir")?.clone();
    let tokens = required(&a.rare_classes, "--rare-classes")?.clone();

    let set = a.input.load()?;
    let rare = resolve_classes(&set, &tokens)?;
    let cfg = RccConfig {
        gamma_min,
        gamma_max,
        layout,
        scale_variation: a.scale_variation,
        canvas_w,
        canvas_h,
        seed: ctx.seed,
        ..RccConfig::new(rare)
    };
    let run = rcc::build_collages(&set, &DirSource::new(images), &cfg)?;
    if let Some(w) = &run.warning {
        warn!("{w}");
    }
    let augmented = rcc::append_collages(&set, &run.collages)?;
    let img_dir = out_dir.join("images");
    create_dir(&img_dir)?;
    rcc::save_collage_images(&img_dir, &run.collages)?;
    io::save_annotations(&out_dir.join("collages.json"), &rcc::collage_annotations(&set.classes, &run.collages))?;
    io::save_annotations(&out_dir.join("augmented.json"), &augmented)?;

    #[derive(Serialize)]
    struct CollageRow<'a> {
        image_id: &'a str,
        width: u32,
        height: u32,
        provenance: &'a [rcc::Provenance],
    }
    #[derive(Serialize)]
    struct RccResult<'a> {
        #[serde(skip_serializing_if = "Option::is_none")]
        warning: Option<&'a str>,
        collages: Vec<CollageRow<'a>>,
        boxes_before: stats::ClassStats,
        boxes_after: stats::ClassStats,
    }
    let result = RccResult {
        warning: run.warning.as_deref(),
        collages: run
            .collages
            .iter()
            .map(|c| CollageRow {
                image_id: &c.image_id,
                width: c.image.width(),
                height: c.image.height(),
                provenance: &c.provenance,
            })
            .collect(),
        boxes_before: stats::class_frequencies(&set),
        boxes_after: stats::class_frequencies(&augmented),
    };
    ctx.report(Some(&out_dir.join("rcc_report.json")), &a, &result)
}

fn run_rcf(ctx: &Ctx, mut a: RcfArgs, f: &RcfArgs) -> Result<()> {
    a.input.overlay(&f.input);
    overlay!(a, f; batch_size, gamma_f, epochs, out);
    a.no_pair_rare |= f.no_pair_rare;
    a.no_augment_rare |= f.no_augment_rare;
    let batch_size = *a.batch_size.get_or_insert(8);
    let gamma_f = *a.gamma_f.get_or_insert(20.0);
    let epochs = *a.epochs.get_or_insert(1);
    let set = a.input.load()?;
    let strata = rcf::stratify_set(&set, batch_size, gamma_f)?;
    let opts = PlanOptions {
        pair_rare: !a.no_pair_rare,
        augment_rare: !a.no_augment_rare,
        ..PlanOptions::new(batch_size, epochs, ctx.seed)
    };
    let plan = rcf::plan_epochs(&strata, &opts)?;

    #[derive(Serialize)]
    struct RcfResult {
        strata: rcf::Strata,
        plan: rcf::BatchPlan,
    }
    ctx.report(a.out.as_deref(), &a, &RcfResult { strata, plan })
}

fn run_glc(ctx: &Ctx, mut a: GlcArgs, f: &GlcArgs) -> Result<()> {
    a.input.overlay(&f.input);
    overlay!(a, f; preds, preds_aug, delta_floor, delta_s, gamma_c, gamma_o, match_iou, out, report);
    let d = GlcConfig::default();
    let cfg = GlcConfig {
        delta_floor: *a.delta_floor.get_or_insert(d.delta_floor),
        delta_s: *a.delta_s.get_or_insert(d.delta_s),
        gamma_c: *a.gamma_c.get_or_insert(d.gamma_c),
        gamma_o: *a.gamma_o.get_or_insert(d.gamma_o),
        match_iou: *a.match_iou.get_or_insert(d.match_iou),
    };
    cfg.validate()?;
    let set = a.input.load()?;
    let original = load_preds(required(&a.preds, "--preds")?)?;
    let augmented = required(&a.preds_aug, "--preds-aug")?
        .iter()
        .map(|p| load_preds(p))
        .collect::<Result<Vec<_>>>()?;
    let report = glc::run(&set, &original, &augmented, &cfg)?;
    let corrected = glc::apply_corrections(&set, &report)?;
    info!(
        "removed {}, added {}, replaced {}, reclassified {}",
        report.summary.removed_false_gt,
        report.summary.added_missing_gt,
        report.summary.replaced_noisy_boxes,
        report.summary.corrected_classes
    );
    if let Some(out) = &a.out {
        io::save_annotations(out, &corrected)?;
    }
    ctx.report(a.report.as_deref(), &a, &report)
}

fn run_inject(ctx: &Ctx, mut a: InjectArgs, f: &InjectArgs) -> Result<()> {
    a.input.overlay(&f.input);
    overlay!(a, f; level, custom, class_flip, out, ledger);
    let mut params = match (&a.custom, a.level) {
        (Some(path), _) => io::load_report::<ErrorParams>(path)?,
        (None, Some(level)) => corrupt::level_preset(level)?,
        (None, None) if a.class_flip.is_some() => ErrorParams::none(),
        (None, None) => return Err(Error::Config("one of --level, --custom or --class-flip is required".into())),
    };
    if let Some(frac) = a.class_flip {
        params.class_flip_frac = frac;
    }
    params.seed = ctx.seed;
    params.validate()?;
    let out = required(&a.out, "--out")?.clone();
    let set = a.input.load()?;
    let (corrupted, ledger) = corrupt::inject(&set, &params)?;
    io::save_annotations(&out, &corrupted)?;

    #[derive(Serialize)]
    struct Effective<'a> {
        #[serde(flatten)]
        args: &'a InjectArgs,
        params: &'a ErrorParams,
    }
    ctx.report(a.ledger.as_deref(), &Effective { args: &a, params: &params }, &ledger)
}

fn run_pls(ctx: &Ctx, mut a: PlsArgs, f: &PlsArgs) -> Result<()> {
    overlay!(a, f; preds, delta_s, alpha, beta, remove, out, kept_preds);
    let d = PlsConfig::default();
    let cfg = PlsConfig {
        delta_s: *a.delta_s.get_or_insert(d.delta_s),
        alpha: *a.alpha.get_or_insert(d.alpha),
        beta: *a.beta.get_or_insert(d.beta),
        removal_frac: *a.remove.get_or_insert(d.removal_frac),
    };
    cfg.validate()?;
    let preds = load_preds(required(&a.preds, "--preds")?)?;
    let report = pls::select(&preds, &cfg)?;
    if let Some(path) = &a.kept_preds {
        io::save_detections(path, &pls::kept_detections(&preds, &report))?;
    }
    ctx.report(a.out.as_deref(), &a, &report)
}

fn run_eval(ctx: &Ctx, mut a: EvalArgs, f: &EvalArgs) -> Result<()> {
    a.input.overlay(&f.input);
    overlay!(a, f; preds, delta_s, match_iou, out);
    let delta_s = *a.delta_s.get_or_insert(0.9);
    let match_iou = *a.match_iou.get_or_insert(0.5);
    let preds = load_preds(required(&a.preds, "--preds")?)?;
    let gt = a.input.load()?;
    let report = quality::quality(&pls::filter_by_score(&preds, delta_s), &gt, match_iou);
    ctx.report(a.out.as_deref(), &a, &report)
}

fn run_eval_roc(ctx: &Ctx, mut a: EvalRocArgs, f: &EvalRocArgs) -> Result<()> {
    a.input.overlay(&f.input);
    overlay!(a, f; preds, delta_s, alpha, betas, mdr_cut, match_iou, out);
    let d = CompareConfig::default();
    let cfg = CompareConfig {
        delta_s: *a.delta_s.get_or_insert(d.delta_s),
        alpha: *a.alpha.get_or_insert(d.alpha),
        betas: a.betas.get_or_insert(d.betas).clone(),
        mdr_cut: *a.mdr_cut.get_or_insert(d.mdr_cut),
        match_iou: *a.match_iou.get_or_insert(d.match_iou),
    };
    let preds = load_preds(required(&a.preds, "--preds")?)?;
    let gt = a.input.load()?;
    let report = quality::compare_metrics(&preds, &gt, &cfg)?;
    ctx.report(a.out.as_deref(), &a, &report)
}

fn run_recommend(ctx: &Ctx, mut a: RecommendArgs, f: &RecommendArgs) -> Result<()> {
    a.input.overlay(&f.input);
    overlay!(a, f; preds, match_iou, out);
    let match_iou = *a.match_iou.get_or_insert(0.5);
    let preds = load_preds(required(&a.preds, "--preds")?)?;
    let gt = a.input.load()?;
    let rec = pls::recommend_threshold(&preds, &gt, match_iou)?;
    ctx.report(a.out.as_deref(), &a, &rec)
}

fn run_simulate(ctx: &Ctx, mut a: SimulateArgs, f: &SimulateArgs) -> Result<()> {
    overlay!(a, f; scenes, detector, preset, out_dir);
    a.skip_images |= f.skip_images;
    let out_dir = required(&a.out_dir, "--out-dir")?.clone();
    let mut scene_params: SceneParams = match &a.scenes {
        Some(p) => io::load_report(p)?,
        None => SceneParams::default(),
    };
    let mut det_params = match &a.detector {
        Some(p) => io::load_report(p)?,
        None => DetectorParams::preset(a.preset.get_or_insert_with(|| "calibrated".into()))?,
    };
    scene_params.seed = ctx.seed;
    det_params.seed = ctx.seed;

    let scenes = sim::gen_scenes(&scene_params)?;
    let dets = sim::gen_detections(&scenes.set, &det_params)?;
    create_dir(&out_dir)?;
    io::save_annotations(&out_dir.join("annotations.json"), &scenes.set)?;
    let mut pred_files = Vec::new();
    for v in &dets.variants {
        let name = format!("preds_{}.json", v.variant);
        io::save_detections(&out_dir.join(&name), v)?;
        pred_files.push(name);
    }
    if !a.skip_images {
        let img_dir = out_dir.join("images");
        create_dir(&img_dir)?;
        use rayon::prelude::*;
        scenes.set.images.par_iter().try_for_each(|img| {
            let path = img_dir.join(&img.file_name);
            let raster = scenes.raster.render(&img.image_id)?;
            let mut bytes = Vec::new();
            raster
                .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
                .map_err(|source| Error::Image {
                    path: path.clone(),
                    source,
                })?;
            io::write_atomic(&path, &bytes)
        })?;
    }

    #[derive(Serialize)]
    struct Effective<'a> {
        #[serde(flatten)]
        args: &'a SimulateArgs,
        scene_params: &'a SceneParams,
        detector_params: &'a DetectorParams,
    }
    #[derive(Serialize)]
    struct SimResult<'a> {
        class_counts: &'a [u64],
        prediction_files: Vec<String>,
        truth: &'a sim::TruthLedger,
    }
    ctx.report(
        Some(&out_dir.join("truth.json")),
        &Effective {
            args: &a,
            scene_params: &scene_params,
            detector_params: &det_params,
        },
        &SimResult {
            class_counts: &scenes.class_counts,
            prediction_files: pred_files,
            truth: &dets.truth,
        },
    )
}

fn init_logging(level: &str) -> Result<()> {
    let filter: log::LevelFilter = level
        .parse()
        .map_err(|_| Error::Config(format!("unknown log level `{level}`")))?;
    // A second init in the same process is harmless.
    let _ = env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .try_init();
    Ok(())
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    // The global pool can only be built once per process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let file: ConfigFile = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.clone(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => ConfigFile::default(),
    };
    init_logging(cli.log_level.as_deref().or(file.log_level.as_deref()).unwrap_or("warn"))?;
    init_threads()?;
    let ctx = Ctx {
        command: cli.command.name(),
        seed: cli.seed.or(file.seed).unwrap_or(0),
    };
    match cli.command {
        Command::Stats(a) => run_stats(&ctx, a, &file.stats),
        Command::Rcc(a) => run_rcc(&ctx, a, &file.rcc),
        Command::Rcf(a) => run_rcf(&ctx, a, &file.rcf),
        Command::Glc(a) => run_glc(&ctx, a, &file.glc),
        Command::InjectErrors(a) => run_inject(&ctx, a, &file.inject_errors),
        Command::Pls(a) => run_pls(&ctx, a, &file.pls),
        Command::Eval(a) => run_eval(&ctx, a, &file.eval),
        Command::EvalRoc(a) => run_eval_roc(&ctx, a, &file.eval_roc),
        Command::RecommendThreshold(a) => run_recommend(&ctx, a, &file.recommend_threshold),
        Command::Simulate(a) => run_simulate(&ctx, a, &file.simulate),
    }
}

/// Runs the tool on `argv` (program name first) and returns the exit code:
/// 0 on success, 1 on a usage or configuration error, 2 on a data error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_data_error() {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_and_usage_codes() {
        assert_eq!(run(["labelsmith", "pls", "--help"]), 0);
        assert_eq!(run(["labelsmith", "pls", "--bogus"]), 1);
        assert_eq!(run(["labelsmith"]), 1);
    }

    #[test]
    fn missing_required_option_is_usage_error() {
        assert_eq!(run(["labelsmith", "pls"]), 1);
    }

    #[test]
    fn missing_input_file_is_data_error() {
        assert_eq!(run(["labelsmith", "pls", "--preds", "/nonexistent/preds.json"]), 2);
    }

    #[test]
    fn canvas_parsing() {
        assert_eq!(parse_canvas("640x480").unwrap(), (640, 480));
        assert!(parse_canvas("640").is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let file = PlsArgs {
            delta_s: Some(0.5),
            beta: Some(0.3),
            ..Default::default()
        };
        let mut a = PlsArgs {
            delta_s: Some(0.7),
            ..Default::default()
        };
        overlay!(a, file; delta_s, beta, alpha);
        assert_eq!((a.delta_s, a.beta, a.alpha), (Some(0.7), Some(0.3), None));
    }

    #[test]
    fn config_sections_parse() {
        let text = r#"{"seed": 3, "pls": {"beta": 0.25}, "inject-errors": {"level": 2}, "stats": {"annotations": "a.json"}}"#;
        let c: ConfigFile = serde_json::from_str(text).unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.pls.beta, Some(0.25));
        assert_eq!(c.inject_errors.level, Some(2));
        assert_eq!(c.stats.input.annotations, Some(PathBuf::from("a.json")));
        assert!(serde_json::from_str::<ConfigFile>(r#"{"pls": {"betta": 1}}"#).is_err());
    }
}
