//! Dataset layout on disk and the train / infer / eval steps shared by the
//! subcommands and the end-to-end checks.
//!
//! A dataset directory looks like
//!
//! ```text
//! manifest.json       {"train": [stems], "test": [stems]}
//! images/<stem>.png
//! page/<stem>.xml
//! labels/<stem>.png   white / red / blue label encoding
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use annoseg::augment::{Inception, PatchSampler, RandomCrop};
use annoseg::eval::{EvalReport, Evaluator};
use annoseg::fcn::{Fcn8sParams, TrainPage, Trainer};
use annoseg::imaging::{binarize_adaptive, BinarizeParams, RasterImage};
use annoseg::infer::{argmax_labels, predict_tiled, FcnModel, ProbabilityMap};
use annoseg::page_gt::LabelMap;
use annoseg::synth::{generate_pages, SynthPage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SamplerKind};
use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::runtime(format!("bad manifest {}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        write_file(&dir.join(MANIFEST), serde_json::to_string_pretty(self).unwrap().as_bytes())
    }
}

pub fn image_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join("images").join(format!("{stem}.png"))
}

pub fn page_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join("page").join(format!("{stem}.xml"))
}

pub fn label_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join("labels").join(format!("{stem}.png"))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", path.display())))
}

/// What the network sees: the page itself or its binarization as RGB.
pub fn prepare_input(img: &RasterImage, binarize: Option<BinarizeParams>) -> Result<RasterImage, CliError> {
    Ok(match binarize {
        Some(p) => binarize_adaptive(img, p.window, p.offset)?.to_raster_rgb(),
        None => img.clone(),
    })
}

pub fn input_binarization(cfg: &RunConfig) -> Option<BinarizeParams> {
    cfg.binarized_input().then_some(cfg.binarization)
}

pub fn make_sampler(cfg: &RunConfig) -> Box<dyn PatchSampler> {
    match cfg.sampler.kind {
        SamplerKind::Inception => Box::new(Inception(cfg.sampler.inception)),
        SamplerKind::RandomCrop | SamplerKind::BinarizedCrop => Box::new(RandomCrop {
            size: cfg.sampler.crop_size,
        }),
    }
}

/// Result of a training run. `error` is set when training stopped early;
/// `params` then holds the last good state.
pub struct TrainOutcome {
    pub params: Fcn8sParams<f32>,
    pub losses: Vec<f64>,
    pub error: Option<annoseg::Error>,
}

/// Train from raw pages. `on_step` sees `(step, loss)` after every step.
pub fn train_pages(
    cfg: &RunConfig,
    pages: &[(RasterImage, LabelMap)],
    mut on_step: impl FnMut(usize, f64),
) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let binarize = input_binarization(cfg);
    let pages: Vec<TrainPage> = pages
        .iter()
        .map(|(img, labels)| {
            Ok(TrainPage {
                image: prepare_input(img, binarize)?,
                labels: labels.clone(),
            })
        })
        .collect::<Result<_, CliError>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = Fcn8sParams::<f32>::init(&cfg.network.network_config(), &mut rng)?;
    let tc = cfg.optimizer.train_config();
    let mut trainer = Trainer::new(params, tc)?;
    let sampler = make_sampler(cfg);
    let mut error = None;
    for step in 0..tc.steps {
        match trainer.step_sampled(&pages, sampler.as_ref(), &mut rng) {
            Ok(loss) => on_step(step, loss),
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: trainer.params,
        losses: trainer.losses,
        error,
    })
}

pub fn predict_page(
    params: &Fcn8sParams<f32>,
    img: &RasterImage,
    binarize: Option<BinarizeParams>,
    cfg: &RunConfig,
) -> Result<(ProbabilityMap, LabelMap), CliError> {
    let input = prepare_input(img, binarize)?;
    let model = FcnModel {
        params: params.clone(),
    };
    let probs = predict_tiled(&model, &input, &cfg.inference)?;
    let labels = argmax_labels(&probs);
    Ok((probs, labels))
}

/// Outcome of a synthesize → train → infer → evaluate run.
pub struct Experiment {
    pub report: EvalReport,
    pub losses: Vec<f64>,
    pub train_seconds: f64,
    pub total_seconds: f64,
}

/// Run the whole pipeline in memory on synthetic pages: pages
/// `0..train_pages` train, the next `test_pages` are evaluated.
pub fn synthetic_experiment(cfg: &RunConfig) -> Result<Experiment, CliError> {
    let t0 = Instant::now();
    let n_train = cfg.data.train_pages as u64;
    let n_test = cfg.data.test_pages as u64;
    let to_pair = |p: SynthPage| (p.image, p.labels);
    let train: Vec<_> = generate_pages(&cfg.synth, 0..n_train)?.into_iter().map(to_pair).collect();
    let test: Vec<_> = generate_pages(&cfg.synth, n_train..n_train + n_test)?
        .into_iter()
        .map(to_pair)
        .collect();
    let outcome = train_pages(cfg, &train, |step, loss| {
        if (step + 1) % 100 == 0 {
            log::info!("step {} loss {loss:.4}", step + 1);
        }
    })?;
    if let Some(e) = outcome.error {
        return Err(e.into());
    }
    let train_seconds = t0.elapsed().as_secs_f64();
    let binarize = input_binarization(cfg);
    let mut ev = Evaluator::new(2);
    for (img, gt) in &test {
        let (_, pred) = predict_page(&outcome.params, img, binarize, cfg)?;
        ev.add_page(&pred, gt)?;
    }
    Ok(Experiment {
        report: ev.report(cfg.eval.aggregation),
        losses: outcome.losses,
        train_seconds,
        total_seconds: t0.elapsed().as_secs_f64(),
    })
}
