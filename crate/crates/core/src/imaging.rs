//! Raster image primitives.
//!
//! Everything in here is a pure function over row-major 8-bit buffers:
//! grayscale conversion, local-mean binarization, cropping and bilinear
//! resampling. The bilinear convention (half-pixel centers, edge clamped)
//! is shared with the network's upsampling layers.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, RgbImage};

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn new(top: usize, left: usize, height: usize, width: usize) -> Self {
        Rect {
            top,
            left,
            height,
            width,
        }
    }

    pub fn bottom(&self) -> usize {
        self.top + self.height
    }

    pub fn right(&self) -> usize {
        self.left + self.width
    }

    pub fn fits_in(&self, height: usize, width: usize) -> bool {
        self.height >= 1 && self.width >= 1 && self.bottom() <= height && self.right() <= width
    }

    /// Compose a rect expressed relative to `self` into host coordinates.
    pub fn nested(&self, inner: Rect) -> Rect {
        Rect::new(
            self.top + inner.top,
            self.left + inner.left,
            inner.height,
            inner.width,
        )
    }

    pub(crate) fn check(&self, height: usize, width: usize) -> Result<()> {
        if self.fits_in(height, width) {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                rect: *self,
                height,
                width,
            })
        }
    }
}

/// H×W×C image with 8-bit samples, C ∈ {1, 3}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dims must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} image needs {} samples, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(RasterImage {
            height,
            width,
            channels,
            data,
        })
    }

    /// Image filled with one color (`value.len()` gives the channel count).
    pub fn filled(height: usize, width: usize, value: &[u8]) -> Result<Self> {
        let data = value
            .iter()
            .copied()
            .cycle()
            .take(height * width * value.len())
            .collect();
        RasterImage::new(height, width, value.len(), data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [u8] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Replicate a single-channel image into three identical channels.
    pub fn to_rgb(&self) -> RasterImage {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        RasterImage {
            height: self.height,
            width: self.width,
            channels: 3,
            data,
        }
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)?;
        Ok(Self::from_dynamic(img))
    }

    pub fn from_dynamic(img: DynamicImage) -> Self {
        match img {
            DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                RasterImage {
                    height: h as usize,
                    width: w as usize,
                    channels: 1,
                    data: g.into_raw(),
                }
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                RasterImage {
                    height: h as usize,
                    width: w as usize,
                    channels: 3,
                    data: rgb.into_raw(),
                }
            }
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let (w, h) = (self.width as u32, self.height as u32);
        match self.channels {
            1 => GrayImage::from_raw(w, h, self.data.clone())
                .expect("buffer length checked at construction")
                .save(path.as_ref())?,
            _ => RgbImage::from_raw(w, h, self.data.clone())
                .expect("buffer length checked at construction")
                .save(path.as_ref())?,
        }
        Ok(())
    }
}

/// Write a 16-bit single-channel PNG.
pub fn save_png16(path: impl AsRef<Path>, height: usize, width: usize, data: Vec<u16>) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(width as u32, height as u32, data)
            .ok_or_else(|| Error::Shape("16-bit buffer does not match dims".into()))?;
    buf.save(path.as_ref())?;
    Ok(())
}

/// Per-pixel black/white image. `true` means black.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    height: usize,
    width: usize,
    black: Vec<bool>,
}

impl BinaryImage {
    pub fn new(height: usize, width: usize, black: Vec<bool>) -> Result<Self> {
        if black.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} binary image needs {} pixels, got {}",
                height * width,
                black.len()
            )));
        }
        Ok(BinaryImage {
            height,
            width,
            black,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_black(&self, y: usize, x: usize) -> bool {
        self.black[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.black
    }

    pub fn count_black(&self) -> usize {
        self.black.iter().filter(|&&b| b).count()
    }

    /// Render as an RGB image, black ink on white paper.
    pub fn to_raster_rgb(&self) -> RasterImage {
        let data = self
            .black
            .iter()
            .flat_map(|&b| if b { [0u8; 3] } else { [255u8; 3] })
            .collect();
        RasterImage {
            height: self.height,
            width: self.width,
            channels: 3,
            data,
        }
    }
}

/// Luma conversion with BT.601 weights.
pub fn to_grayscale(img: &RasterImage) -> RasterImage {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| luma(p[0], p[1], p[2]))
        .collect();
    RasterImage {
        height: img.height,
        width: img.width,
        channels: 1,
        data,
    }
}

#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    let v = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
    v.round().clamp(0.0, 255.0) as u8
}

/// Local-mean thresholding parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinarizeParams {
    pub window: usize,
    pub offset: i32,
}

impl Default for BinarizeParams {
    fn default() -> Self {
        BinarizeParams {
            window: 31,
            offset: 15,
        }
    }
}

impl BinarizeParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "binarization window must be odd and >= 3, got {}",
                self.window
            )));
        }
        Ok(())
    }
}

/// A pixel is black iff its gray value is below the mean of its
/// `window`×`window` neighborhood (edge-replicated) minus `offset`.
///
/// The comparison is done in integers: `gray·n < sum − offset·n` with
/// `n = window²`, so there is no rounding anywhere.
pub fn binarize_adaptive(img: &RasterImage, window: usize, offset: i32) -> Result<BinaryImage> {
    BinarizeParams { window, offset }.validate()?;
    let gray = to_grayscale(img);
    let (h, w) = (gray.height, gray.width);
    let r = window / 2;

    // Horizontal clamped box sums, then vertical over those.
    let mut hsum = vec![0i64; h * w];
    let mut prefix = vec![0i64; w.max(h) + 1];
    for y in 0..h {
        let row = &gray.data[y * w..(y + 1) * w];
        clamped_box_sums(row.iter().map(|&v| v as i64), w, r, &mut prefix, &mut hsum[y * w..(y + 1) * w]);
    }
    let mut sums = vec![0i64; h * w];
    let mut col_out = vec![0i64; h];
    for x in 0..w {
        clamped_box_sums((0..h).map(|y| hsum[y * w + x]), h, r, &mut prefix, &mut col_out);
        for y in 0..h {
            sums[y * w + x] = col_out[y];
        }
    }

    let n = (window * window) as i64;
    let black = gray
        .data
        .iter()
        .zip(&sums)
        .map(|(&g, &s)| (g as i64) * n < s - offset as i64 * n)
        .collect();
    Ok(BinaryImage {
        height: h,
        width: w,
        black,
    })
}

fn clamped_box_sums(
    values: impl Iterator<Item = i64>,
    len: usize,
    r: usize,
    prefix: &mut [i64],
    out: &mut [i64],
) {
    prefix[0] = 0;
    let mut first = 0;
    let mut last = 0;
    for (i, v) in values.enumerate() {
        if i == 0 {
            first = v;
        }
        last = v;
        prefix[i + 1] = prefix[i] + v;
    }
    for (i, o) in out.iter_mut().enumerate().take(len) {
        let lo = i as isize - r as isize;
        let hi = i + r;
        let left_over = if lo < 0 { (-lo) as i64 } else { 0 };
        let right_over = if hi >= len { (hi - (len - 1)) as i64 } else { 0 };
        let a = lo.max(0) as usize;
        let b = hi.min(len - 1);
        *o = prefix[b + 1] - prefix[a] + left_over * first + right_over * last;
    }
}

pub fn crop(img: &RasterImage, r: Rect) -> Result<RasterImage> {
    r.check(img.height, img.width)?;
    let c = img.channels;
    let mut data = Vec::with_capacity(r.height * r.width * c);
    for y in r.top..r.bottom() {
        let start = (y * img.width + r.left) * c;
        data.extend_from_slice(&img.data[start..start + r.width * c]);
    }
    Ok(RasterImage {
        height: r.height,
        width: r.width,
        channels: c,
        data,
    })
}

/// Crop any row-major single-value-per-pixel buffer.
pub(crate) fn crop_plane<T: Copy>(data: &[T], width: usize, r: Rect) -> Vec<T> {
    let mut out = Vec::with_capacity(r.height * r.width);
    for y in r.top..r.bottom() {
        out.extend_from_slice(&data[y * width + r.left..y * width + r.right()]);
    }
    out
}

/// Sampling taps along one axis: for each output index, the two source
/// indices and the weight of the second one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub i0: usize,
    pub i1: usize,
    pub frac: f64,
}

/// Source position `s = (d + 0.5)·in/out − 0.5`, clamped to `[0, in − 1]`.
pub fn bilinear_taps(in_len: usize, out_len: usize) -> Vec<Tap> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            Tap {
                i0,
                i1,
                frac: s - i0 as f64,
            }
        })
        .collect()
}

/// Bilinear resize of one real-valued plane.
pub fn resize_plane_bilinear(
    src: &[f64],
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f64> {
    assert_eq!(src.len(), in_h * in_w);
    if in_h == out_h && in_w == out_w {
        return src.to_vec();
    }
    let ty = bilinear_taps(in_h, out_h);
    let tx = bilinear_taps(in_w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for t in &ty {
        let r0 = &src[t.i0 * in_w..(t.i0 + 1) * in_w];
        let r1 = &src[t.i1 * in_w..(t.i1 + 1) * in_w];
        for u in &tx {
            let top = r0[u.i0] * (1.0 - u.frac) + r0[u.i1] * u.frac;
            let bot = r1[u.i0] * (1.0 - u.frac) + r1[u.i1] * u.frac;
            out.push(top * (1.0 - t.frac) + bot * t.frac);
        }
    }
    out
}

/// Bilinear resize of an 8-bit image; each interpolated value is rounded.
pub fn resize_bilinear(img: &RasterImage, out_h: usize, out_w: usize) -> Result<RasterImage> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be positive, got {out_h}x{out_w}"
        )));
    }
    if out_h == img.height && out_w == img.width {
        return Ok(img.clone());
    }
    let c = img.channels;
    let ty = bilinear_taps(img.height, out_h);
    let tx = bilinear_taps(img.width, out_w);
    let mut data = vec![0u8; out_h * out_w * c];
    let src = &img.data;
    let iw = img.width;
    for (oy, t) in ty.iter().enumerate() {
        for (ox, u) in tx.iter().enumerate() {
            for ch in 0..c {
                let at = |y: usize, x: usize| src[(y * iw + x) * c + ch] as f64;
                let top = at(t.i0, u.i0) * (1.0 - u.frac) + at(t.i0, u.i1) * u.frac;
                let bot = at(t.i1, u.i0) * (1.0 - u.frac) + at(t.i1, u.i1) * u.frac;
                let v = top * (1.0 - t.frac) + bot * t.frac;
                data[(oy * out_w + ox) * c + ch] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(RasterImage {
        height: out_h,
        width: out_w,
        channels: c,
        data,
    })
}

/// Nearest-neighbor source index: `floor((d + 0.5)·in/out)`, clamped.
pub fn nearest_index(d: usize, in_len: usize, out_len: usize) -> usize {
    let s = ((d as f64 + 0.5) * in_len as f64 / out_len as f64).floor() as usize;
    s.min(in_len - 1)
}

pub(crate) fn resize_plane_nearest<T: Copy>(
    src: &[T],
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<T> {
    if in_h == out_h && in_w == out_w {
        return src.to_vec();
    }
    let xs: Vec<usize> = (0..out_w).map(|d| nearest_index(d, in_w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for oy in 0..out_h {
        let sy = nearest_index(oy, in_h, out_h);
        let row = &src[sy * in_w..(sy + 1) * in_w];
        out.extend(xs.iter().map(|&sx| row[sx]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(h: usize, w: usize, data: Vec<u8>) -> RasterImage {
        RasterImage::new(h, w, 1, data).unwrap()
    }

    #[test]
    fn grayscale_weights() {
        let img = RasterImage::new(1, 3, 3, vec![255, 255, 255, 0, 0, 0, 255, 0, 0]).unwrap();
        assert_eq!(to_grayscale(&img).data(), &[255, 0, 76]);
        let g = gray(1, 2, vec![7, 9]);
        assert_eq!(to_grayscale(&g), g);
    }

    #[test]
    fn uniform_image_thresholds() {
        let img = RasterImage::filled(9, 11, &[128]).unwrap();
        let b = binarize_adaptive(&img, 5, 10).unwrap();
        assert_eq!(b.count_black(), 0);
        let b = binarize_adaptive(&img, 5, -10).unwrap();
        assert_eq!(b.count_black(), 99);
    }

    #[test]
    fn rejects_bad_windows() {
        let img = RasterImage::filled(4, 4, &[0]).unwrap();
        assert!(binarize_adaptive(&img, 4, 0).is_err());
        assert!(binarize_adaptive(&img, 1, 0).is_err());
        assert!(binarize_adaptive(&img, 3, 0).is_ok());
    }

    /// Brute-force clamped neighborhood mean, in floating point.
    fn oracle_binarize(img: &RasterImage, window: usize, offset: i32) -> Vec<bool> {
        let g = to_grayscale(img);
        let (h, w) = (g.height() as isize, g.width() as isize);
        let r = (window / 2) as isize;
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let yy = (y + dy).clamp(0, h - 1) as usize;
                        let xx = (x + dx).clamp(0, w - 1) as usize;
                        s += g.pixel(yy, xx)[0] as f64;
                    }
                }
                let mean = s / (window * window) as f64;
                out.push((g.pixel(y as usize, x as usize)[0] as f64) < mean - offset as f64);
            }
        }
        out
    }

    #[test]
    fn dark_blob_on_light_background() {
        let mut data = vec![200u8; 64];
        for (y, x) in [(3, 3), (3, 4), (4, 3), (4, 4)] {
            data[y * 8 + x] = 10;
        }
        let img = gray(8, 8, data);
        let b = binarize_adaptive(&img, 7, 10).unwrap();
        let expected = oracle_binarize(&img, 7, 10);
        assert_eq!(b.as_slice(), expected.as_slice());
        let blacks: Vec<usize> = (0..64).filter(|&i| b.as_slice()[i]).collect();
        assert_eq!(blacks, vec![27, 28, 35, 36]);
    }

    #[test]
    fn crop_cases() {
        let img = RasterImage::new(2, 3, 1, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(crop(&img, Rect::new(0, 0, 2, 3)).unwrap(), img);
        assert_eq!(crop(&img, Rect::new(0, 0, 1, 1)).unwrap().data(), &[1]);
        assert!(crop(&img, Rect::new(1, 1, 2, 1)).is_err());
        assert!(crop(&img, Rect::new(0, 0, 0, 1)).is_err());

        let (h, w) = (1000, 1187);
        let data: Vec<u8> = (0..h * w * 3).map(|i| (i * 31 % 251) as u8).collect();
        let big = RasterImage::new(h, w, 3, data).unwrap();
        let p = crop(&big, Rect::new(100, 200, 512, 512)).unwrap();
        assert_eq!((p.height(), p.width()), (512, 512));
        for (y, x) in [(0, 0), (511, 511), (17, 300), (511, 0)] {
            assert_eq!(p.pixel(y, x), big.pixel(100 + y, 200 + x));
        }
        assert_eq!(p.pixel(511, 511), big.pixel(611, 711));
    }

    #[test]
    fn resize_2x2_to_4x4_matches_pointwise_formula() {
        let img = gray(2, 2, vec![0, 100, 100, 200]);
        let out = resize_bilinear(&img, 4, 4).unwrap();
        let src = [[0.0, 100.0], [100.0, 200.0]];
        for oy in 0..4 {
            for ox in 0..4 {
                let sy = ((oy as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 1.0);
                let sx = ((ox as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 1.0);
                let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                let (y1, x1) = ((y0 + 1).min(1), (x0 + 1).min(1));
                let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
                let v = src[y0][x0] * (1.0 - fy) * (1.0 - fx)
                    + src[y0][x1] * (1.0 - fy) * fx
                    + src[y1][x0] * fy * (1.0 - fx)
                    + src[y1][x1] * fy * fx;
                assert_eq!(out.pixel(oy, ox)[0], v.round() as u8, "({oy},{ox})");
            }
        }
        // corners are clamped onto the source corners
        assert_eq!(out.pixel(0, 0)[0], 0);
        assert_eq!(out.pixel(3, 3)[0], 200);
        // 0.5625·0 + 0.1875·100 + 0.1875·100 + 0.0625·200
        assert_eq!(out.pixel(1, 1)[0], 50);
    }

    #[test]
    fn resize_constant_and_identity() {
        let img = RasterImage::filled(5, 7, &[9, 99, 199]).unwrap();
        let out = resize_bilinear(&img, 13, 3).unwrap();
        assert!(out.data().chunks(3).all(|p| p == [9, 99, 199]));
        assert_eq!(resize_bilinear(&img, 5, 7).unwrap(), img);
        assert!(resize_bilinear(&img, 0, 7).is_err());
    }

    #[test]
    fn nearest_resize_picks_mapped_source() {
        let src: Vec<u8> = (0..12).collect();
        let out = resize_plane_nearest(&src, 3, 4, 6, 2);
        for oy in 0..6 {
            for ox in 0..2 {
                let sy = nearest_index(oy, 3, 6);
                let sx = nearest_index(ox, 4, 2);
                assert_eq!(out[oy * 2 + ox], src[sy * 4 + sx]);
            }
        }
    }

    proptest! {
        #[test]
        fn nested_crops_compose(
            h in 4usize..20, w in 4usize..20,
            seed in any::<u64>(),
        ) {
            let data: Vec<u8> = (0..h * w).map(|i| (i as u64 ^ seed).wrapping_mul(2654435761) as u8).collect();
            let img = gray(h, w, data);
            let a = Rect::new(1, 2.min(w - 2), h - 2, w - 2.min(w - 2));
            let b = Rect::new(1, 0, a.height - 1, 1);
            let twice = crop(&crop(&img, a).unwrap(), b).unwrap();
            prop_assert_eq!(twice, crop(&img, a.nested(b)).unwrap());
        }

        #[test]
        fn resize_stays_within_input_range(
            h in 1usize..8, w in 1usize..8, oh in 1usize..20, ow in 1usize..20,
            data in proptest::collection::vec(any::<u8>(), 64),
        ) {
            let img = gray(h, w, data[..h * w].to_vec());
            let lo = *img.data().iter().min().unwrap();
            let hi = *img.data().iter().max().unwrap();
            let out = resize_bilinear(&img, oh, ow).unwrap();
            prop_assert!(out.data().iter().all(|&v| v >= lo && v <= hi));
        }

        #[test]
        fn binarization_matches_bruteforce(
            h in 1usize..12, w in 1usize..12,
            half in 1usize..5, offset in -20i32..20,
            data in proptest::collection::vec(any::<u8>(), 144),
        ) {
            let img = gray(h, w, data[..h * w].to_vec());
            let win = 2 * half + 1;
            let b = binarize_adaptive(&img, win, offset).unwrap();
            let expect = oracle_binarize(&img, win, offset);
            prop_assert_eq!(b.as_slice(), expect.as_slice());
        }
    }
}
