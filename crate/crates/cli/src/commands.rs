//! One function per subcommand. Each validates its inputs up front and
//! then delegates to the core library.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use annoseg::eval::{render_diff, EvalReport, Evaluator};
use annoseg::fcn::{load_checkpoint, save_checkpoint, Fcn8sParams};
use annoseg::imaging::{BinarizeParams, RasterImage};
use annoseg::page_gt::{
    decode_label_png, encode_label_png, parse_page_xml, rasterize_gt, LabelMap, AMBIGUOUS,
    ANNOTATION, BACKGROUND,
};
use annoseg::synth::{generate_pages, to_page_xml};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::pipeline::{
    create_dir, image_path, input_binarization, label_path, page_path, predict_page, train_pages,
    write_file, Manifest,
};
use crate::CliError;

/// Files in `dir` with extension `ext`, keyed by stem.
fn files_by_stem(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let rd = std::fs::read_dir(dir)
        .map_err(|e| CliError::Validation(format!("cannot read directory {}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in rd {
        let path = entry.map_err(|e| CliError::runtime(e.to_string()))?.path();
        if path.is_file() && path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path.clone());
            }
        }
    }
    Ok(out)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub background: u64,
    pub annotation: u64,
    pub ambiguous: u64,
}

impl ClassCounts {
    pub fn of(lm: &LabelMap) -> Self {
        ClassCounts {
            background: lm.count(BACKGROUND) as u64,
            annotation: lm.count(ANNOTATION) as u64,
            ambiguous: lm.count(AMBIGUOUS) as u64,
        }
    }

    fn add(&mut self, o: &ClassCounts) {
        self.background += o.background;
        self.annotation += o.annotation;
        self.ambiguous += o.ambiguous;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterizeSummary {
    pub pages: BTreeMap<String, ClassCounts>,
    pub total: ClassCounts,
    pub skipped_regions: usize,
    pub unpaired: Vec<String>,
}

/// Turn every (image, PAGE-XML) pair into a label PNG in `out`. Unpaired
/// files are listed in the summary and make the command fail after the
/// paired ones are written.
pub fn gt_rasterize(
    xml_dir: &Path,
    image_dir: &Path,
    out: &Path,
    binarization: BinarizeParams,
) -> Result<RasterizeSummary, CliError> {
    let xmls = files_by_stem(xml_dir, "xml")?;
    let images = files_by_stem(image_dir, "png")?;
    create_dir(out)?;
    let mut summary = RasterizeSummary::default();
    if xmls.is_empty() && images.is_empty() {
        log::warn!("no PAGE-XML or PNG files found");
    }
    for (stem, xml) in &xmls {
        let Some(img_path) = images.get(stem) else {
            summary.unpaired.push(xml.display().to_string());
            continue;
        };
        let parsed = parse_page_xml(&read_bytes(xml)?)
            .map_err(|e| CliError::runtime(format!("{}: {e}", xml.display())))?;
        for w in &parsed.warnings {
            log::warn!("{}: {w:?}", xml.display());
        }
        summary.skipped_regions += parsed.skipped_regions();
        let img = RasterImage::load_png(img_path)?;
        let gt = &parsed.ground_truth;
        if (gt.page_height, gt.page_width) != (img.height(), img.width()) {
            return Err(CliError::runtime(format!(
                "{} declares {}x{} but {} is {}x{}",
                xml.display(),
                gt.page_height,
                gt.page_width,
                img_path.display(),
                img.height(),
                img.width()
            )));
        }
        let lm = rasterize_gt(&img, gt, binarization)?;
        encode_label_png(&lm).save_png(out.join(format!("{stem}.png")))?;
        let counts = ClassCounts::of(&lm);
        summary.total.add(&counts);
        summary.pages.insert(stem.clone(), counts);
    }
    for (stem, img) in &images {
        if !xmls.contains_key(stem) {
            summary.unpaired.push(img.display().to_string());
        }
    }
    write_file(
        &out.join("summary.json"),
        serde_json::to_string_pretty(&summary).unwrap().as_bytes(),
    )?;
    if !summary.unpaired.is_empty() {
        return Err(CliError::runtime(format!(
            "unpaired files: {}",
            summary.unpaired.join(", ")
        )));
    }
    Ok(summary)
}

/// Write `train + test` synthetic pages and the manifest to `out`.
pub fn synth(cfg: &RunConfig, train: usize, test: usize, out: &Path) -> Result<Manifest, CliError> {
    cfg.synth.validate()?;
    for sub in ["images", "page", "labels"] {
        create_dir(&out.join(sub))?;
    }
    let pages = generate_pages(&cfg.synth, 0..(train + test) as u64)?;
    let mut manifest = Manifest::default();
    for (i, page) in pages.iter().enumerate() {
        let stem = format!("page{i:04}");
        page.image.save_png(image_path(out, &stem))?;
        encode_label_png(&page.labels).save_png(label_path(out, &stem))?;
        let xml = to_page_xml(&page.ground_truth, &format!("{stem}.png"));
        write_file(&page_path(out, &stem), xml.as_bytes())?;
        if i < train {
            manifest.train.push(stem);
        } else {
            manifest.test.push(stem);
        }
    }
    manifest.save(out)?;
    Ok(manifest)
}

/// Page image and label map for `stem`, rasterizing the PAGE-XML when no
/// label PNG exists.
fn load_pair(dir: &Path, stem: &str, b: BinarizeParams) -> Result<(RasterImage, LabelMap), CliError> {
    let img = RasterImage::load_png(image_path(dir, stem))?;
    let lp = label_path(dir, stem);
    let labels = if lp.exists() {
        decode_label_png(&RasterImage::load_png(&lp)?)?
    } else {
        let parsed = parse_page_xml(&read_bytes(&page_path(dir, stem))?)?;
        rasterize_gt(&img, &parsed.ground_truth, b)?
    };
    if (labels.height(), labels.width()) != (img.height(), img.width()) {
        return Err(CliError::runtime(format!("{stem}: labels and image differ in size")));
    }
    Ok((img, labels))
}

/// Stored beside the checkpoint so inference preprocesses like training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub binarize: Option<BinarizeParams>,
    pub config: RunConfig,
}

pub const CHECKPOINT: &str = "model.ckpt";
pub const MODEL_META: &str = "model.json";
pub const LOSS_LOG: &str = "losses.csv";

/// Train on the manifest's training split and write checkpoint, metadata
/// and loss log to `out`. A non-finite loss stops training; the last good
/// parameters are still saved and the command fails.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<Vec<f64>, CliError> {
    cfg.validate()?;
    let dir = cfg
        .data
        .dir
        .as_ref()
        .ok_or_else(|| CliError::Validation("train needs data.dir (or --data)".into()))?;
    let manifest = Manifest::load(dir)?;
    if manifest.train.is_empty() {
        return Err(CliError::Validation("manifest has no training pages".into()));
    }
    let pages = manifest
        .train
        .iter()
        .map(|s| load_pair(dir, s, cfg.binarization))
        .collect::<Result<Vec<_>, _>>()?;
    create_dir(out)?;
    let outcome = train_pages(cfg, &pages, |step, loss| {
        if (step + 1) % 50 == 0 {
            log::info!("step {} loss {loss:.5}", step + 1);
        }
    })?;
    save_checkpoint(&outcome.params, out.join(CHECKPOINT))?;
    let meta = ModelMeta {
        binarize: input_binarization(cfg),
        config: cfg.clone(),
    };
    write_file(
        &out.join(MODEL_META),
        serde_json::to_string_pretty(&meta).unwrap().as_bytes(),
    )?;
    let mut log = String::from("step,loss\n");
    for (i, l) in outcome.losses.iter().enumerate() {
        log.push_str(&format!("{},{l}\n", i + 1));
    }
    write_file(&out.join(LOSS_LOG), log.as_bytes())?;
    if let Some(e) = outcome.error {
        return Err(CliError::Runtime(format!(
            "training stopped: {e}; last good checkpoint kept in {}",
            out.display()
        )));
    }
    Ok(outcome.losses)
}

pub fn load_model(model_dir: &Path) -> Result<(Fcn8sParams<f32>, ModelMeta), CliError> {
    let params = load_checkpoint::<f32>(model_dir.join(CHECKPOINT))?;
    let meta_path = model_dir.join(MODEL_META);
    let text = std::fs::read_to_string(&meta_path)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", meta_path.display())))?;
    let meta: ModelMeta = serde_json::from_str(&text)
        .map_err(|e| CliError::runtime(format!("bad {}: {e}", meta_path.display())))?;
    Ok((params, meta))
}

/// PNG inputs: a single file or every `.png` in a directory.
fn input_images(input: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    if input.is_file() {
        let stem = input
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::Validation(format!("bad file name {}", input.display())))?;
        return Ok(vec![(stem.to_string(), input.to_path_buf())]);
    }
    Ok(files_by_stem(input, "png")?.into_iter().collect())
}

/// Label PNG plus one 16-bit probability PNG per class for every input
/// image. Inference settings come from `cfg`, preprocessing from the model.
pub fn infer(cfg: &RunConfig, model_dir: &Path, input: &Path, out: &Path) -> Result<Vec<String>, CliError> {
    let v = cfg.inference.violations();
    if !v.is_empty() {
        return Err(CliError::Validation(v.join("\n")));
    }
    let (params, meta) = load_model(model_dir)?;
    let images = input_images(input)?;
    create_dir(out)?;
    let mut done = Vec::new();
    for (stem, path) in images {
        let img = RasterImage::load_png(&path)?;
        let (probs, labels) = predict_page(&params, &img, meta.binarize, cfg)?;
        encode_label_png(&labels).save_png(out.join(format!("{stem}_labels.png")))?;
        probs.save_png16(out, &stem)?;
        done.push(stem);
    }
    Ok(done)
}

/// Compare predicted label PNGs (`<stem>_labels.png` or `<stem>.png`) with
/// ground-truth label PNGs (`<stem>.png`); writes `report.json` and a diff
/// image per page to `out`.
pub fn eval(cfg: &RunConfig, pred_dir: &Path, gt_dir: &Path, out: &Path) -> Result<EvalReport, CliError> {
    let gts = files_by_stem(gt_dir, "png")?;
    let preds = files_by_stem(pred_dir, "png")?;
    create_dir(out)?;
    let mut ev = Evaluator::new(2);
    let mut missing = Vec::new();
    for (stem, gt_path) in &gts {
        let pred_path = preds
            .get(&format!("{stem}_labels"))
            .or_else(|| preds.get(stem))
            .filter(|p| *p != gt_path);
        let Some(pred_path) = pred_path else {
            missing.push(stem.clone());
            continue;
        };
        let gt = decode_label_png(&RasterImage::load_png(gt_path)?)?;
        let pred = decode_label_png(&RasterImage::load_png(pred_path)?)?;
        ev.add_page(&pred, &gt)
            .map_err(|e| CliError::runtime(format!("{stem}: {e}")))?;
        render_diff(&pred, &gt)?.save_png(out.join(format!("{stem}_diff.png")))?;
    }
    if !missing.is_empty() {
        return Err(CliError::runtime(format!("no prediction for: {}", missing.join(", "))));
    }
    if ev.confusion().total() == 0 && gts.is_empty() {
        return Err(CliError::Validation(format!("no ground truth in {}", gt_dir.display())));
    }
    let report = ev.report(cfg.eval.aggregation);
    write_file(
        &out.join("report.json"),
        serde_json::to_string_pretty(&report).unwrap().as_bytes(),
    )?;
    Ok(report)
}
