//! Sliding-window inference with overlap averaging.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcn::{fcn8s_forward, image_to_tensor, softmax, Fcn8sParams, Real, INPUT_MULTIPLE};
use crate::imaging::{crop, save_png16, RasterImage, Rect};
use crate::page_gt::LabelMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    pub patch: usize,
    pub overlap: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            patch: 512,
            overlap: 128,
        }
    }
}

impl InferenceConfig {
    pub fn stride(&self) -> usize {
        self.patch - self.overlap
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.patch == 0 || !self.patch.is_multiple_of(INPUT_MULTIPLE) {
            v.push(format!(
                "patch must be a positive multiple of {INPUT_MULTIPLE}, got {}",
                self.patch
            ));
        }
        if self.overlap >= self.patch {
            v.push(format!(
                "overlap {} must be smaller than patch {}",
                self.overlap, self.patch
            ));
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(v.join("; ")))
        }
    }
}

/// Tile origins along one axis: `0, s, 2s, …` with the last one moved flush
/// to the border.
pub fn tile_starts(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = len - patch;
    let mut starts: Vec<usize> = (0..).map(|i| i * stride).take_while(|&s| s < last).collect();
    starts.push(last);
    starts
}

/// Row-major tiles covering an `h`×`w` page.
pub fn tile_plan(h: usize, w: usize, cfg: &InferenceConfig) -> Result<Vec<Rect>> {
    cfg.validate()?;
    if h < cfg.patch || w < cfg.patch {
        return Err(Error::InvalidArgument(format!(
            "{h}x{w} image is smaller than the {p}x{p} patch",
            p = cfg.patch
        )));
    }
    let tops = tile_starts(h, cfg.patch, cfg.stride());
    let lefts = tile_starts(w, cfg.patch, cfg.stride());
    Ok(tops
        .iter()
        .flat_map(|&t| lefts.iter().map(move |&l| Rect::new(t, l, cfg.patch, cfg.patch)))
        .collect())
}

/// Per-pixel class probabilities, `num_classes × H × W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    num_classes: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(num_classes: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_classes * height * width {
            return Err(Error::Shape(format!(
                "{num_classes}x{height}x{width} probability map needs {} values, got {}",
                num_classes * height * width,
                data.len()
            )));
        }
        Ok(ProbabilityMap {
            num_classes,
            height,
            width,
            data,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    /// Largest deviation of a per-pixel sum from 1.
    pub fn max_simplex_error(&self) -> f64 {
        let n = self.height * self.width;
        (0..n)
            .map(|p| {
                let s: f64 = (0..self.num_classes).map(|c| self.data[c * n + p]).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// One 16-bit PNG per class, `round(p·65535)`.
    pub fn save_png16(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        for c in 0..self.num_classes {
            let values = self
                .plane(c)
                .iter()
                .map(|&p| (p.clamp(0.0, 1.0) * 65535.0).round() as u16)
                .collect();
            save_png16(
                dir.as_ref().join(format!("{stem}_prob{c}.png")),
                self.height,
                self.width,
                values,
            )?;
        }
        Ok(())
    }
}

/// Anything that maps a patch to per-pixel class probabilities. `rect` is
/// where the patch sits in the page.
pub trait PatchModel: Sync {
    fn num_classes(&self) -> usize;
    fn predict_patch(&self, patch: &RasterImage, rect: Rect) -> Result<ProbabilityMap>;
}

/// FCN-8s parameters used as a [`PatchModel`].
pub struct FcnModel<T> {
    pub params: Fcn8sParams<T>,
}

impl<T: Real> PatchModel for FcnModel<T> {
    fn num_classes(&self) -> usize {
        self.params.config.num_classes
    }

    fn predict_patch(&self, patch: &RasterImage, _rect: Rect) -> Result<ProbabilityMap> {
        let x = image_to_tensor::<T>(patch, self.params.config.in_channels)?;
        let probs = softmax(&fcn8s_forward(&self.params, &x)?);
        ProbabilityMap::new(
            self.num_classes(),
            patch.height(),
            patch.width(),
            probs.data().iter().map(|v| v.as_f64()).collect(),
        )
    }
}

/// Coverage count of each pixel under `tiles`.
pub fn coverage(h: usize, w: usize, tiles: &[Rect]) -> Vec<u32> {
    let mut cov = vec![0u32; h * w];
    for t in tiles {
        for y in t.top..t.bottom() {
            for c in &mut cov[y * w + t.left..y * w + t.right()] {
                *c += 1;
            }
        }
    }
    cov
}

/// Average each tile's probabilities over every pixel it covers.
///
/// Tiles are evaluated in parallel; accumulation happens in tile-plan
/// order, so the result does not depend on scheduling.
pub fn predict_tiled<M: PatchModel + ?Sized>(
    model: &M,
    img: &RasterImage,
    cfg: &InferenceConfig,
) -> Result<ProbabilityMap> {
    let (h, w) = (img.height(), img.width());
    let tiles = tile_plan(h, w, cfg)?;
    let k = model.num_classes();
    let preds: Vec<ProbabilityMap> = tiles
        .par_iter()
        .map(|&r| {
            let p = model.predict_patch(&crop(img, r)?, r)?;
            if (p.num_classes, p.height, p.width) != (k, r.height, r.width) {
                return Err(Error::Shape(format!(
                    "model returned {}x{}x{} for a {}x{} patch",
                    p.num_classes, p.height, p.width, r.height, r.width
                )));
            }
            Ok(p)
        })
        .collect::<Result<_>>()?;
    Ok(accumulate_tiles(h, w, k, &tiles, &preds))
}

pub(crate) fn accumulate_tiles(
    h: usize,
    w: usize,
    k: usize,
    tiles: &[Rect],
    preds: &[ProbabilityMap],
) -> ProbabilityMap {
    let mut acc = vec![0.0f64; k * h * w];
    for (r, p) in tiles.iter().zip(preds) {
        for c in 0..k {
            for ty in 0..r.height {
                let src = &p.plane(c)[ty * r.width..(ty + 1) * r.width];
                let off = (c * h + r.top + ty) * w + r.left;
                for (a, &v) in acc[off..off + r.width].iter_mut().zip(src) {
                    *a += v;
                }
            }
        }
    }
    let cov = coverage(h, w, tiles);
    for c in 0..k {
        for (a, &n) in acc[c * h * w..(c + 1) * h * w].iter_mut().zip(&cov) {
            *a /= n as f64;
        }
    }
    ProbabilityMap {
        num_classes: k,
        height: h,
        width: w,
        data: acc,
    }
}

/// Per-pixel argmax; ties go to the lower class index.
pub fn argmax_labels(pm: &ProbabilityMap) -> LabelMap {
    let n = pm.height * pm.width;
    let labels = (0..n)
        .map(|p| {
            let mut best = 0;
            for c in 1..pm.num_classes {
                if pm.data[c * n + p] > pm.data[best * n + p] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    LabelMap::from_raw(pm.height, pm.width, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tile_plans() {
        let cfg = InferenceConfig::default();
        assert_eq!(tile_plan(512, 512, &cfg).unwrap(), vec![Rect::new(0, 0, 512, 512)]);
        let t = tile_plan(896, 896, &cfg).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(tile_starts(896, 512, 384), vec![0, 384]);
        assert_eq!(tile_starts(1000, 512, 384), vec![0, 384, 488]);
        assert_eq!(tile_starts(1187, 512, 384), vec![0, 384, 675]);
        assert!(tile_plan(511, 600, &cfg).is_err());
        assert!(tile_plan(600, 600, &InferenceConfig { patch: 500, overlap: 0 }).is_err());
        assert!(tile_plan(600, 600, &InferenceConfig { patch: 64, overlap: 64 }).is_err());
    }

    #[test]
    fn coverage_is_complete_and_row_major() {
        let cfg = InferenceConfig::default();
        let tiles = tile_plan(1000, 1187, &cfg).unwrap();
        assert_eq!(tiles.len(), 9);
        assert!(tiles.windows(2).all(|p| (p[0].top, p[0].left) < (p[1].top, p[1].left)));
        assert!(tiles.iter().all(|t| t.fits_in(1000, 1187)));
        assert!(coverage(1000, 1187, &tiles).iter().all(|&c| c >= 1));
    }

    #[test]
    fn argmax_ties_go_to_background() {
        let pm = ProbabilityMap::new(2, 1, 3, vec![0.9, 0.5, 0.2, 0.1, 0.5, 0.8]).unwrap();
        assert_eq!(argmax_labels(&pm).labels(), &[0, 0, 1]);
    }
}
