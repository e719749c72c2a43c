//! Training-patch samplers. Both samplers cut the same rect out of the
//! image and its label map; labels are only ever resized nearest-neighbor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{crop, crop_plane, resize_bilinear, resize_plane_nearest, RasterImage, Rect};
use crate::page_gt::LabelMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InceptionSamplerConfig {
    pub min_area_frac: f64,
    pub max_area_frac: f64,
    /// Aspect ratios are width / height.
    pub min_aspect: f64,
    pub max_aspect: f64,
    pub out_size: usize,
    pub max_attempts: usize,
}

impl Default for InceptionSamplerConfig {
    fn default() -> Self {
        InceptionSamplerConfig {
            min_area_frac: 0.08,
            max_area_frac: 1.0,
            min_aspect: 3.0 / 4.0,
            max_aspect: 4.0 / 3.0,
            out_size: 512,
            max_attempts: 10,
        }
    }
}

impl InceptionSamplerConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.min_area_frac > 0.0
            && self.min_area_frac <= self.max_area_frac
            && self.max_area_frac <= 1.0)
        {
            v.push(format!(
                "need 0 < min_area_frac <= max_area_frac <= 1, got {} and {}",
                self.min_area_frac, self.max_area_frac
            ));
        }
        if !(self.min_aspect > 0.0 && self.min_aspect <= self.max_aspect && self.max_aspect.is_finite()) {
            v.push(format!(
                "need 0 < min_aspect <= max_aspect, got {} and {}",
                self.min_aspect, self.max_aspect
            ));
        }
        if self.out_size == 0 {
            v.push("out_size must be positive".into());
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

/// Aligned image/label patch and where it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub patch: RasterImage,
    pub labels: LabelMap,
    pub source_rect: Rect,
    /// Set when the Inception sampler gave up and used the centered square.
    pub fallback: bool,
}

fn check_pair(img: &RasterImage, lm: &LabelMap) -> Result<()> {
    if img.height() != lm.height() || img.width() != lm.width() {
        return Err(Error::Shape(format!(
            "image is {}x{} but labels are {}x{}",
            img.height(),
            img.width(),
            lm.height(),
            lm.width()
        )));
    }
    Ok(())
}

/// Crop `rect` from both and resize to `out` (image bilinear, labels
/// nearest-neighbor).
fn cut(img: &RasterImage, lm: &LabelMap, rect: Rect, out: usize, fallback: bool) -> Result<Sample> {
    let patch = resize_bilinear(&crop(img, rect)?, out, out)?;
    let labels = crop_plane(lm.labels(), lm.width(), rect);
    let labels = resize_plane_nearest(&labels, rect.height, rect.width, out, out);
    Ok(Sample {
        patch,
        labels: LabelMap::from_raw(out, out, labels),
        source_rect: rect,
        fallback,
    })
}

/// Uniform `size`×`size` crop with no resizing.
pub fn sample_random_crop<R: Rng + ?Sized>(
    img: &RasterImage,
    lm: &LabelMap,
    size: usize,
    rng: &mut R,
) -> Result<Sample> {
    check_pair(img, lm)?;
    let rect = draw_crop_rect(img.height(), img.width(), size, rng)?;
    cut(img, lm, rect, size, false)
}

pub fn draw_crop_rect<R: Rng + ?Sized>(h: usize, w: usize, size: usize, rng: &mut R) -> Result<Rect> {
    if size == 0 || h < size || w < size {
        return Err(Error::InvalidArgument(format!(
            "cannot crop {size}x{size} from a {h}x{w} image"
        )));
    }
    let top = rng.random_range(0..=h - size);
    let left = rng.random_range(0..=w - size);
    Ok(Rect::new(top, left, size, size))
}

/// Outcome of the Inception rect search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InceptionDraw {
    pub rect: Rect,
    pub fallback: bool,
}

/// Draw a crop rect with random area fraction and aspect ratio.
///
/// Each attempt draws `area = U[min, max]·H·W` and `aspect = U[min, max]`,
/// giving `w = round(√(area·aspect))`, `h = round(√(area/aspect))`. The
/// first attempt that fits is placed uniformly; if none of the
/// `max_attempts` fit, the centered `min(H, W)` square is used.
pub fn draw_inception_rect<R: Rng + ?Sized>(
    h: usize,
    w: usize,
    cfg: &InceptionSamplerConfig,
    rng: &mut R,
) -> InceptionDraw {
    let total = (h * w) as f64;
    for _ in 0..cfg.max_attempts {
        let area = rng.random_range(cfg.min_area_frac..=cfg.max_area_frac) * total;
        let aspect = rng.random_range(cfg.min_aspect..=cfg.max_aspect);
        let cw = ((area * aspect).sqrt().round() as usize).max(1);
        let ch = ((area / aspect).sqrt().round() as usize).max(1);
        if cw <= w && ch <= h {
            let top = rng.random_range(0..=h - ch);
            let left = rng.random_range(0..=w - cw);
            return InceptionDraw {
                rect: Rect::new(top, left, ch, cw),
                fallback: false,
            };
        }
    }
    let side = h.min(w);
    InceptionDraw {
        rect: Rect::new((h - side) / 2, (w - side) / 2, side, side),
        fallback: true,
    }
}

pub fn sample_inception<R: Rng + ?Sized>(
    img: &RasterImage,
    lm: &LabelMap,
    cfg: &InceptionSamplerConfig,
    rng: &mut R,
) -> Result<Sample> {
    check_pair(img, lm)?;
    cfg.validate()?;
    let d = draw_inception_rect(img.height(), img.width(), cfg, rng);
    cut(img, lm, d.rect, cfg.out_size, d.fallback)
}

/// Object-safe sampler interface used by the training loop.
pub trait PatchSampler: Send + Sync {
    fn sample(&self, img: &RasterImage, lm: &LabelMap, rng: &mut dyn rand::RngCore) -> Result<Sample>;
    fn out_size(&self) -> usize;
}

#[derive(Debug, Clone, Copy)]
pub struct RandomCrop {
    pub size: usize,
}

impl PatchSampler for RandomCrop {
    fn sample(&self, img: &RasterImage, lm: &LabelMap, rng: &mut dyn rand::RngCore) -> Result<Sample> {
        sample_random_crop(img, lm, self.size, rng)
    }

    fn out_size(&self) -> usize {
        self.size
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Inception(pub InceptionSamplerConfig);

impl PatchSampler for Inception {
    fn sample(&self, img: &RasterImage, lm: &LabelMap, rng: &mut dyn rand::RngCore) -> Result<Sample> {
        sample_inception(img, lm, &self.0, rng)
    }

    fn out_size(&self) -> usize {
        self.0.out_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::nearest_index;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn textured(h: usize, w: usize) -> (RasterImage, LabelMap) {
        let data = (0..h * w * 3).map(|i| (i * 7 % 253) as u8).collect();
        let labels = (0..h * w).map(|i| ((i / 3 + i / w) % 3) as u8).collect();
        (
            RasterImage::new(h, w, 3, data).unwrap(),
            LabelMap::new(h, w, labels).unwrap(),
        )
    }

    #[test]
    fn single_position_crop() {
        let (img, lm) = textured(64, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_random_crop(&img, &lm, 64, &mut rng).unwrap();
        assert_eq!(s.source_rect, Rect::new(0, 0, 64, 64));
        assert_eq!(s.patch, img);
        assert_eq!(s.labels, lm);
        assert!(sample_random_crop(&img, &lm, 65, &mut rng).is_err());
    }

    #[test]
    fn random_crop_is_seed_deterministic() {
        let (img, lm) = textured(100, 118);
        let a = sample_random_crop(&img, &lm, 51, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_random_crop(&img, &lm, 51, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.patch, crop(&img, a.source_rect).unwrap());
    }

    #[test]
    fn forced_identity_inception() {
        let (img, lm) = textured(64, 64);
        let cfg = InceptionSamplerConfig {
            min_area_frac: 1.0,
            max_area_frac: 1.0,
            min_aspect: 1.0,
            max_aspect: 1.0,
            out_size: 64,
            max_attempts: 10,
        };
        let s = sample_inception(&img, &lm, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(!s.fallback);
        assert_eq!(s.source_rect, Rect::new(0, 0, 64, 64));
        assert_eq!(s.patch, img);
        assert_eq!(s.labels, lm);
    }

    #[test]
    fn wide_image_falls_back_to_center_square() {
        // min crop height is √(0.08·4000·100 / (4/3)) ≈ 155 > 100: no attempt fits
        let (img, lm) = textured(100, 4000);
        let cfg = InceptionSamplerConfig::default();
        for seed in 0..5 {
            let s = sample_inception(&img, &lm, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(s.fallback);
            assert_eq!(s.source_rect, Rect::new(0, 1950, 100, 100));
            assert_eq!((s.patch.height(), s.patch.width()), (512, 512));
            let expect = resize_bilinear(&crop(&img, s.source_rect).unwrap(), 512, 512).unwrap();
            assert_eq!(s.patch, expect);
        }
    }

    #[test]
    fn labels_follow_the_image_rect() {
        let (img, lm) = textured(90, 70);
        let cfg = InceptionSamplerConfig {
            out_size: 48,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let s = sample_inception(&img, &lm, &cfg, &mut rng).unwrap();
            let r = s.source_rect;
            assert!(r.fits_in(90, 70));
            for oy in 0..48 {
                for ox in 0..48 {
                    let sy = r.top + nearest_index(oy, r.height, 48);
                    let sx = r.left + nearest_index(ox, r.width, 48);
                    assert_eq!(s.labels.get(oy, ox), lm.get(sy, sx));
                }
            }
            let expect = resize_bilinear(&crop(&img, r).unwrap(), 48, 48).unwrap();
            assert_eq!(s.patch, expect);
        }
    }

    #[test]
    fn config_validation() {
        assert!(InceptionSamplerConfig::default().validate().is_ok());
        let bad = InceptionSamplerConfig {
            min_area_frac: 0.0,
            min_aspect: 2.0,
            max_aspect: 1.0,
            out_size: 0,
            ..Default::default()
        };
        assert_eq!(bad.violations().len(), 3);
    }
}
