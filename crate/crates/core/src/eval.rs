//! Confusion matrices and IoU metrics.
//!
//! Ground-truth ambiguous pixels are skipped entirely. For class `i`,
//! `IoU_i = n_ii / (t_i + Σ_j n_ji − n_ii)` where `n_ij` counts pixels of
//! true class `i` predicted as `j` and `t_i = Σ_j n_ij`.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::RasterImage;
use crate::page_gt::{LabelMap, AMBIGUOUS, ANNOTATION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_cl: usize,
    /// Row-major, `counts[i * n_cl + j]` = true `i` predicted `j`.
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_cl: usize) -> Self {
        ConfusionMatrix {
            n_cl,
            counts: vec![0; n_cl * n_cl],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            n_cl: n,
            counts: rows.concat(),
        })
    }

    pub fn n_cl(&self) -> usize {
        self.n_cl
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.n_cl + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `t_i`: pixels whose true class is `i`.
    pub fn true_total(&self, i: usize) -> u64 {
        (0..self.n_cl).map(|j| self.get(i, j)).sum()
    }

    /// Pixels predicted as class `i`.
    pub fn pred_total(&self, i: usize) -> u64 {
        (0..self.n_cl).map(|j| self.get(j, i)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n_cl).map(<[u64]>::to_vec).collect()
    }

    /// Add one page. Returns the number of GT-ambiguous pixels skipped.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<u64> {
        if pred.height() != gt.height() || pred.width() != gt.width() {
            return Err(Error::Shape(format!(
                "prediction is {}x{} but ground truth is {}x{}",
                pred.height(),
                pred.width(),
                gt.height(),
                gt.width()
            )));
        }
        let n = self.n_cl;
        if let Some(p) = pred.labels().iter().position(|&l| l as usize >= n) {
            return Err(Error::InvalidArgument(format!(
                "prediction contains label {} at pixel (x={}, y={})",
                pred.labels()[p],
                p % pred.width(),
                p / pred.width()
            )));
        }
        let mut skipped = 0;
        for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
            if g == AMBIGUOUS {
                skipped += 1;
                continue;
            }
            self.counts[g as usize * n + p as usize] += 1;
        }
        Ok(skipped)
    }
}

impl AddAssign<&ConfusionMatrix> for ConfusionMatrix {
    fn add_assign(&mut self, rhs: &ConfusionMatrix) {
        assert_eq!(self.n_cl, rhs.n_cl, "confusion matrices of different size");
        for (a, b) in self.counts.iter_mut().zip(&rhs.counts) {
            *a += b;
        }
    }
}

/// Two-class confusion for one prediction/ground-truth pair.
pub fn accumulate_confusion(pred: &LabelMap, gt: &LabelMap) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(2);
    cm.accumulate(pred, gt)?;
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub iou: f64,
    /// Class never occurs in either ground truth or prediction; `iou` is
    /// then 1 by convention.
    pub absent: bool,
}

pub fn iou_per_class(cm: &ConfusionMatrix) -> Vec<ClassIou> {
    (0..cm.n_cl())
        .map(|i| {
            let tp = cm.get(i, i);
            let denom = cm.true_total(i) + cm.pred_total(i) - tp;
            if denom == 0 {
                ClassIou {
                    iou: 1.0,
                    absent: true,
                }
            } else {
                ClassIou {
                    iou: tp as f64 / denom as f64,
                    absent: false,
                }
            }
        })
        .collect()
}

pub fn mean_iou(cm: &ConfusionMatrix) -> f64 {
    let per = iou_per_class(cm);
    per.iter().map(|c| c.iou).sum::<f64>() / per.len() as f64
}

/// How page results are combined into one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Sum confusion matrices over pages, then compute IoU once.
    #[default]
    Micro,
    /// Average per-page mean IoUs.
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub aggregation: Aggregation,
    pub per_class_iou: Vec<f64>,
    pub absent_classes: Vec<usize>,
    pub mean_iou: f64,
    pub confusion: Vec<Vec<u64>>,
    pub evaluated_pixels: u64,
    pub ambiguous_pixels: u64,
    pub pages: usize,
}

/// Accumulates pages and produces an [`EvalReport`].
#[derive(Debug, Clone)]
pub struct Evaluator {
    total: ConfusionMatrix,
    page_means: Vec<f64>,
    ambiguous: u64,
}

impl Default for Evaluator {
    fn default() -> Self {
        Evaluator::new(2)
    }
}

impl Evaluator {
    pub fn new(n_cl: usize) -> Self {
        Evaluator {
            total: ConfusionMatrix::new(n_cl),
            page_means: Vec::new(),
            ambiguous: 0,
        }
    }

    pub fn add_page(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<ConfusionMatrix> {
        let mut cm = ConfusionMatrix::new(self.total.n_cl());
        self.ambiguous += cm.accumulate(pred, gt)?;
        self.total += &cm;
        self.page_means.push(mean_iou(&cm));
        Ok(cm)
    }

    pub fn confusion(&self) -> &ConfusionMatrix {
        &self.total
    }

    pub fn report(&self, aggregation: Aggregation) -> EvalReport {
        let per = iou_per_class(&self.total);
        let mean = match aggregation {
            Aggregation::Micro => mean_iou(&self.total),
            Aggregation::Macro if self.page_means.is_empty() => 1.0,
            Aggregation::Macro => self.page_means.iter().sum::<f64>() / self.page_means.len() as f64,
        };
        EvalReport {
            aggregation,
            per_class_iou: per.iter().map(|c| c.iou).collect(),
            absent_classes: per
                .iter()
                .enumerate()
                .filter(|(_, c)| c.absent)
                .map(|(i, _)| i)
                .collect(),
            mean_iou: mean,
            confusion: self.total.rows(),
            evaluated_pixels: self.total.total(),
            ambiguous_pixels: self.ambiguous,
            pages: self.page_means.len(),
        }
    }
}

pub const TP_RGB: [u8; 3] = [0, 255, 0];
pub const TN_RGB: [u8; 3] = [0, 0, 0];
pub const FP_RGB: [u8; 3] = [255, 0, 0];
pub const FN_RGB: [u8; 3] = [0, 0, 255];
pub const IGNORED_RGB: [u8; 3] = [128, 128, 128];

/// Annotation-class diff: TP green, TN black, FP red, FN blue, GT-ambiguous
/// gray.
pub fn render_diff(pred: &LabelMap, gt: &LabelMap) -> Result<RasterImage> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::Shape("prediction and ground truth differ in size".into()));
    }
    let data = pred
        .labels()
        .iter()
        .zip(gt.labels())
        .flat_map(|(&p, &g)| {
            if g == AMBIGUOUS {
                return IGNORED_RGB;
            }
            match (p == ANNOTATION, g == ANNOTATION) {
                (true, true) => TP_RGB,
                (false, false) => TN_RGB,
                (true, false) => FP_RGB,
                (false, true) => FN_RGB,
            }
        })
        .collect();
    RasterImage::new(pred.height(), pred.width(), 3, data)
}
