//! Synthetic documents with exact ground truth.
//!
//! A page has a printed text block (glyph boxes, straight horizontal
//! rules) on a tinted, slightly noisy paper, plus handwritten-looking
//! annotations: marginal notes, interlinear notes and underlines, drawn as
//! jittered polylines in colored ink or pencil. Optional printed
//! look-alikes (script-type marginalia, flourishes, wavy rules) use the same
//! stroke shapes in the printed ink, so shape alone cannot tell them from
//! handwriting. Every annotation stroke gets a polygon (its convex hull,
//! dilated); look-alikes get none. The label map is
//! produced by running [`rasterize_gt`] over the rendered image, so the
//! synthetic data goes through the same ground-truth path as real pages.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{BinarizeParams, RasterImage};
use crate::page_gt::{rasterize_gt, LabelMap, PageGroundTruth, Point, Polygon, ANNOTATION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    /// Baseline-to-baseline distance of printed lines, min/max.
    pub line_spacing: [usize; 2],
    pub glyph_height: [usize; 2],
    /// Stroke thickness of printed glyphs.
    pub glyph_stroke: usize,
    /// Straight printed horizontal rules per page.
    pub rules: [usize; 2],
    pub rule_thickness: [usize; 2],
    /// Annotation items (notes or underlines) per page.
    pub annotation_strokes: [usize; 2],
    /// Printed items laid out like annotations but drawn in printed ink;
    /// they are background.
    pub printed_lookalikes: [usize; 2],
    pub stroke_thickness: [usize; 2],
    /// Vertical jitter of handwritten polylines, in pixels.
    pub jitter: f64,
    /// Probability that an annotation item is an underline.
    pub underline_prob: f64,
    /// Probability that an annotation item is written between lines.
    pub interlinear_prob: f64,
    /// Gray level range of the paper.
    pub paper: [u8; 2],
    /// Gray level range of printed ink.
    pub printed_ink: [u8; 2],
    /// Amplitude of per-pixel paper noise.
    pub noise: u8,
    /// Extra dilation of annotation polygons beyond the stroke reach.
    pub hull_margin: usize,
    pub binarization: BinarizeParams,
    /// Accepted range of the annotation pixel fraction; pages outside it
    /// are regenerated.
    pub annotation_fraction: [f64; 2],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            height: 1187,
            width: 1000,
            line_spacing: [30, 42],
            glyph_height: [10, 16],
            glyph_stroke: 2,
            rules: [1, 3],
            rule_thickness: [1, 3],
            annotation_strokes: [6, 12],
            printed_lookalikes: [0, 0],
            stroke_thickness: [2, 3],
            jitter: 1.5,
            underline_prob: 0.35,
            interlinear_prob: 0.25,
            paper: [200, 245],
            printed_ink: [15, 60],
            noise: 5,
            hull_margin: 3,
            binarization: BinarizeParams::default(),
            annotation_fraction: [0.005, 0.15],
            seed: 0,
        }
    }
}

const MAX_REGENERATIONS: usize = 20;

impl SynthConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.height < 512 || self.width < 512 {
            v.push(format!(
                "synthetic pages must be at least 512x512, got {}x{}",
                self.height, self.width
            ));
        }
        let ranges: [(&str, [usize; 2]); 7] = [
            ("line_spacing", self.line_spacing),
            ("glyph_height", self.glyph_height),
            ("rules", self.rules),
            ("rule_thickness", self.rule_thickness),
            ("annotation_strokes", self.annotation_strokes),
            ("printed_lookalikes", self.printed_lookalikes),
            ("stroke_thickness", self.stroke_thickness),
        ];
        for (name, [lo, hi]) in ranges {
            if lo > hi {
                v.push(format!("{name}: min {lo} exceeds max {hi}"));
            }
        }
        if self.glyph_height[0] < 4 || self.glyph_stroke == 0 {
            v.push("glyphs need height >= 4 and a positive stroke".into());
        }
        if self.line_spacing[0] < self.glyph_height[1] + 8 {
            v.push("line_spacing min must exceed glyph_height max by at least 8".into());
        }
        if self.stroke_thickness[0] == 0 || self.rule_thickness[0] == 0 {
            v.push("thicknesses must be positive".into());
        }
        for (name, [lo, hi]) in [("paper", self.paper), ("printed_ink", self.printed_ink)] {
            if lo > hi {
                v.push(format!("{name}: min {lo} exceeds max {hi}"));
            }
        }
        if self.printed_ink[1] >= self.paper[0] {
            v.push("printed ink must be darker than the paper".into());
        }
        if !(0.0..=1.0).contains(&self.underline_prob)
            || !(0.0..=1.0).contains(&self.interlinear_prob)
            || self.underline_prob + self.interlinear_prob > 1.0
        {
            v.push("underline_prob and interlinear_prob must be probabilities summing to <= 1".into());
        }
        let [flo, fhi] = self.annotation_fraction;
        if !(0.0 <= flo && flo <= fhi && fhi <= 1.0) {
            v.push(format!("annotation_fraction must satisfy 0 <= min <= max <= 1, got [{flo}, {fhi}]"));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            v.push("jitter must be finite and >= 0".into());
        }
        if let Err(e) = self.binarization.validate() {
            v.push(e.to_string());
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

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPage {
    pub image: RasterImage,
    pub ground_truth: PageGroundTruth,
    pub labels: LabelMap,
}

impl SynthPage {
    pub fn annotation_fraction(&self) -> f64 {
        self.labels.count(ANNOTATION) as f64 / (self.labels.height() * self.labels.width()) as f64
    }
}

struct Canvas {
    h: usize,
    w: usize,
    data: Vec<u8>,
}

impl Canvas {
    fn set(&mut self, x: i64, y: i64, rgb: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h {
            let i = (y as usize * self.w + x as usize) * 3;
            self.data[i..i + 3].copy_from_slice(&rgb);
        }
    }

    fn fill_rect(&mut self, x: i64, y: i64, w: i64, h: i64, rgb: [u8; 3]) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.set(xx, yy, rgb);
            }
        }
    }

    /// Square brush of side `t` dragged along the segment.
    fn stroke(&mut self, a: (f64, f64), b: (f64, f64), t: usize, rgb: [u8; 3]) {
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let steps = (len * 2.0).ceil().max(1.0) as usize;
        let off = (t as f64 - 1.0) / 2.0;
        for s in 0..=steps {
            let f = s as f64 / steps as f64;
            let x = (a.0 + (b.0 - a.0) * f - off).round() as i64;
            let y = (a.1 + (b.1 - a.1) * f - off).round() as i64;
            self.fill_rect(x, y, t as i64, t as i64, rgb);
        }
    }

    fn polyline(&mut self, pts: &[(f64, f64)], t: usize, rgb: [u8; 3]) {
        if pts.len() == 1 {
            self.stroke(pts[0], pts[0], t, rgb);
        }
        for seg in pts.windows(2) {
            self.stroke(seg[0], seg[1], t, rgb);
        }
    }
}

fn range<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [usize; 2]) -> usize {
    rng.random_range(lo..=hi)
}

fn range_u8<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [u8; 2]) -> u8 {
    rng.random_range(lo..=hi)
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; returns the hull counter-clockwise.
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Convex hull of the stroke dilated by `radius` (16-gon Minkowski sum),
/// rounded outward to integer vertices and clamped to the page.
fn dilated_hull(pts: &[(f64, f64)], radius: f64, h: usize, w: usize) -> Option<Polygon> {
    // circumscribe the circle so the polygon contains the full disc
    let r = radius / (std::f64::consts::PI / 16.0).cos();
    let mut cloud = Vec::with_capacity(pts.len() * 16);
    for &(x, y) in pts {
        for k in 0..16 {
            let a = k as f64 * std::f64::consts::PI / 8.0;
            cloud.push((x + r * a.cos(), y + r * a.sin()));
        }
    }
    let hull = convex_hull(cloud);
    let (cx, cy) = hull
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.0, sy + p.1));
    let (cx, cy) = (cx / hull.len() as f64, cy / hull.len() as f64);
    let mut out: Vec<Point> = Vec::with_capacity(hull.len());
    for (x, y) in hull {
        let rx = if x >= cx { x.ceil() } else { x.floor() };
        let ry = if y >= cy { y.ceil() } else { y.floor() };
        let p = Point::new(
            (rx as i64).clamp(0, w as i64 - 1),
            (ry as i64).clamp(0, h as i64 - 1),
        );
        if out.last() != Some(&p) && out.first() != Some(&p) {
            out.push(p);
        }
    }
    Polygon::new(out).ok()
}

/// A cursive-looking word: a baseline with loops of random height.
fn handwritten_word<R: Rng + ?Sized>(
    rng: &mut R,
    x0: f64,
    baseline: f64,
    len: f64,
    letter_h: f64,
    jitter: f64,
) -> Vec<(f64, f64)> {
    let slant = rng.random_range(-0.35..0.35);
    let freq = rng.random_range(0.25..0.45);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let drift_rate = rng.random_range(-0.06..0.06);
    let mut pts = Vec::new();
    let mut t = 0.0;
    let mut wobble = 0.0;
    while t <= len {
        wobble = (wobble + rng.random_range(-jitter..=jitter) * 0.5).clamp(-jitter * 2.0, jitter * 2.0);
        let loop_h = letter_h * (0.5 + 0.5 * (freq * t + phase).sin()).powf(0.7);
        let y = baseline + drift_rate * t + wobble - loop_h;
        let x = x0 + t + slant * (baseline - y);
        pts.push((x, y));
        t += rng.random_range(1.5..3.0);
    }
    pts
}

struct Ink {
    rgb: [u8; 3],
}

fn annotation_ink<R: Rng + ?Sized>(rng: &mut R) -> Ink {
    let j = |rng: &mut R, v: i32| (v + rng.random_range(-15..=15)).clamp(0, 255) as u8;
    let rgb = match rng.random_range(0..4) {
        0 => [j(rng, 40), j(rng, 60), j(rng, 160)],  // blue ink
        1 => [j(rng, 115), j(rng, 65), j(rng, 30)],  // iron-gall brown
        2 => [j(rng, 170), j(rng, 40), j(rng, 45)],  // red
        _ => {
            let g = j(rng, 105); // pencil
            [g, g, g.saturating_add(6)]
        }
    };
    Ink { rgb }
}

/// Render one page; see the module docs.
pub fn generate_page<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<SynthPage> {
    cfg.validate()?;
    let mut last = None;
    for _ in 0..MAX_REGENERATIONS {
        let page = render_page(cfg, rng)?;
        let f = page.annotation_fraction();
        let wants_annotations = cfg.annotation_strokes[1] > 0;
        let [lo, hi] = cfg.annotation_fraction;
        if !wants_annotations || (f >= lo && f <= hi) {
            return Ok(page);
        }
        last = Some(page);
    }
    log::warn!("synthetic page annotation fraction stayed outside the configured band");
    Ok(last.expect("at least one attempt"))
}

fn render_page<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<SynthPage> {
    let (h, w) = (cfg.height, cfg.width);
    let paper = range_u8(rng, cfg.paper) as i32;
    let tint = [0, -rng.random_range(2..10), -rng.random_range(8..25)];
    let gradient = rng.random_range(-10.0..10.0) / h as f64;
    let mut canvas = Canvas {
        h,
        w,
        data: vec![0; h * w * 3],
    };
    for y in 0..h {
        let shade = (gradient * y as f64) as i32;
        for x in 0..w {
            let n = rng.random_range(-(cfg.noise as i32)..=cfg.noise as i32);
            let i = (y * w + x) * 3;
            for c in 0..3 {
                canvas.data[i + c] = (paper + tint[c] + shade + n).clamp(0, 255) as u8;
            }
        }
    }

    let hf = h as f64;
    let wf = w as f64;
    let left_margin = (wf * rng.random_range(0.18..0.24)) as i64;
    let right_margin = (wf * rng.random_range(0.10..0.14)) as i64;
    let top = (hf * rng.random_range(0.05..0.08)) as i64;
    let bottom = h as i64 - (hf * rng.random_range(0.05..0.08)) as i64;
    let text_right = w as i64 - right_margin;
    let spacing = range(rng, cfg.line_spacing) as i64;
    let glyph_h = range(rng, cfg.glyph_height) as i64;
    let print_gray = range_u8(rng, cfg.printed_ink);
    let print_rgb = [print_gray, print_gray, print_gray.saturating_add(rng.random_range(0..6))];
    let gs = cfg.glyph_stroke as i64;

    // Printed lines (baselines) and wide gaps reserved for interlinear notes.
    let mut baselines = Vec::new();
    let mut gaps = Vec::new();
    let mut y = top + glyph_h;
    while y < bottom {
        baselines.push(y);
        if rng.random_bool(0.12) && y + 2 * spacing < bottom {
            gaps.push(y + spacing);
            y += 2 * spacing;
        } else {
            y += spacing;
        }
    }
    let n_rules = range(rng, cfg.rules).min(baselines.len());
    let mut rule_lines = Vec::new();
    for _ in 0..n_rules {
        let i = rng.random_range(0..baselines.len());
        if !rule_lines.contains(&i) {
            rule_lines.push(i);
        }
    }
    let mut line_extents = Vec::new();
    for (i, &base) in baselines.iter().enumerate() {
        if rule_lines.contains(&i) {
            let t = range(rng, cfg.rule_thickness) as i64;
            let y0 = base - glyph_h / 2;
            canvas.fill_rect(left_margin, y0, text_right - left_margin, t, print_rgb);
            line_extents.push(None);
            continue;
        }
        let end = if rng.random_bool(0.15) {
            left_margin + ((text_right - left_margin) as f64 * rng.random_range(0.3..0.8)) as i64
        } else {
            text_right
        };
        let mut x = left_margin;
        while x < end {
            let letters = rng.random_range(2..9);
            for _ in 0..letters {
                let gw = rng.random_range(glyph_h * 4 / 10..=glyph_h * 8 / 10).max(gs + 1);
                if x + gw > end {
                    break;
                }
                let tall = rng.random_bool(0.2);
                let gh = if tall { glyph_h } else { glyph_h * 2 / 3 };
                let gy = base - gh;
                // sides: left, right, top, bottom, middle bar
                let shape: u8 = rng.random_range(1..32);
                if shape & 1 != 0 {
                    canvas.fill_rect(x, gy, gs, gh, print_rgb);
                }
                if shape & 2 != 0 {
                    canvas.fill_rect(x + gw - gs, gy, gs, gh, print_rgb);
                }
                if shape & 4 != 0 {
                    canvas.fill_rect(x, gy, gw, gs, print_rgb);
                }
                if shape & 8 != 0 {
                    canvas.fill_rect(x, base - gs, gw, gs, print_rgb);
                }
                if shape & 16 != 0 {
                    canvas.fill_rect(x, gy + gh / 2, gw, gs, print_rgb);
                }
                x += gw + 2;
            }
            x += rng.random_range(glyph_h / 2..=glyph_h);
        }
        line_extents.push(Some((left_margin, end.min(x))));
    }

    // Annotations and printed look-alikes share the layout, so they never
    // overlap each other.
    let mut polygons = Vec::new();
    let n_items = range(rng, cfg.annotation_strokes);
    let n_lookalikes = range(rng, cfg.printed_lookalikes);
    let mut printed = vec![false; n_items];
    for _ in 0..n_lookalikes {
        let at = rng.random_range(0..=printed.len());
        printed.insert(at, true);
    }
    let mut used_gaps = Vec::new();
    let mut underlined = Vec::new();
    let mut margin_cursor_left = top;
    let mut margin_cursor_right = top;
    for is_printed in printed {
        let rgb = if is_printed { print_rgb } else { annotation_ink(rng).rgb };
        let t = range(rng, cfg.stroke_thickness);
        let reach = t as f64 / 2.0 + cfg.hull_margin as f64 + 1.0;
        let letter_h = rng.random_range(7.0..12.0);
        let u: f64 = rng.random();
        let mut strokes: Vec<Vec<(f64, f64)>> = Vec::new();
        let text_lines: Vec<(i64, (i64, i64))> = baselines
            .iter()
            .zip(&line_extents)
            .filter_map(|(&b, e)| e.map(|e| (b, e)))
            .filter(|(b, _)| !underlined.contains(b))
            .collect();
        if u < cfg.underline_prob && !text_lines.is_empty() {
            let (base, (x0, x1)) = text_lines[rng.random_range(0..text_lines.len())];
            underlined.push(base);
            let span = (x1 - x0).max(40);
            let len = rng.random_range(40.min(span)..=span) as f64;
            let sx = x0 as f64 + rng.random_range(0.0..=(span as f64 - len).max(0.0));
            let y0 = base as f64 + t as f64 + cfg.hull_margin as f64 + 2.0;
            let slope = rng.random_range(-0.015..0.015);
            let mut pts = Vec::new();
            let mut x = sx;
            let mut wob = 0.0;
            while x <= sx + len {
                wob = (wob + rng.random_range(-cfg.jitter..=cfg.jitter) * 0.4)
                    .clamp(-cfg.jitter, cfg.jitter);
                pts.push((x, y0 + slope * (x - sx) + wob.max(-1.0)));
                x += rng.random_range(4.0..9.0);
            }
            strokes.push(pts);
        } else if u < cfg.underline_prob + cfg.interlinear_prob && gaps.len() > used_gaps.len() {
            let gi = loop {
                let g = rng.random_range(0..gaps.len());
                if !used_gaps.contains(&g) {
                    break g;
                }
            };
            used_gaps.push(gi);
            let base = gaps[gi] as f64 - (spacing as f64 - glyph_h as f64 - letter_h) / 2.0;
            let mut x = left_margin as f64 + rng.random_range(0.0..(wf * 0.2));
            let words = rng.random_range(1..5);
            for _ in 0..words {
                let len = rng.random_range(25.0..80.0);
                if x + len > text_right as f64 {
                    break;
                }
                strokes.push(handwritten_word(rng, x, base, len, letter_h, cfg.jitter));
                x += len + rng.random_range(12.0..25.0);
            }
        } else {
            // marginal note, stacked down the left or right margin
            let left = rng.random_bool(0.65);
            let (mx0, mx1) = if left {
                (8.0, left_margin as f64 - 14.0)
            } else {
                (text_right as f64 + 12.0, wf - 8.0)
            };
            let cursor = if left { &mut margin_cursor_left } else { &mut margin_cursor_right };
            let lines = rng.random_range(1..4);
            let pitch = letter_h + 2.0 * reach + rng.random_range(2.0..8.0);
            for _ in 0..lines {
                let base = *cursor as f64 + letter_h + reach + rng.random_range(0.0..10.0);
                if base + reach + 4.0 >= bottom as f64 {
                    break;
                }
                let mut x = mx0 + rng.random_range(0.0..10.0);
                loop {
                    let len = rng.random_range(20.0..60.0f64).min(mx1 - x - 10.0);
                    if len < 15.0 {
                        break;
                    }
                    strokes.push(handwritten_word(rng, x, base, len, letter_h, cfg.jitter));
                    x += len + 12.0 + rng.random_range(4.0..12.0);
                }
                *cursor = (base + reach + pitch - letter_h) as i64;
            }
            *cursor += rng.random_range(10..60);
        }
        for pts in strokes {
            if pts.is_empty() {
                continue;
            }
            canvas.polyline(&pts, t, rgb);
            if is_printed {
                continue;
            }
            if let Some(p) = dilated_hull(&pts, reach, h, w) {
                polygons.push(p);
            }
        }
    }

    let image = RasterImage::new(h, w, 3, canvas.data)?;
    let ground_truth = PageGroundTruth::new(h, w, polygons)?;
    let labels = rasterize_gt(&image, &ground_truth, cfg.binarization)?;
    Ok(SynthPage {
        image,
        ground_truth,
        labels,
    })
}

/// Independent stream for page `index` of a dataset seeded with `seed`.
pub fn page_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Pages `indices` of the dataset described by `cfg`, generated in
/// parallel. Page `i` depends only on `cfg` and `i`.
pub fn generate_pages(cfg: &SynthConfig, indices: std::ops::Range<u64>) -> Result<Vec<SynthPage>> {
    cfg.validate()?;
    indices
        .into_par_iter()
        .map(|i| generate_page(cfg, &mut page_rng(cfg.seed, i)))
        .collect()
}

/// Minimal PAGE-XML document for a synthetic page.
pub fn to_page_xml(gt: &PageGroundTruth, image_filename: &str) -> String {
    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str(
        "<PcGts xmlns=\"http://schema.primaresearch.org/PAGE/gts/pagecontent/2019-07-15\">\n",
    );
    let _ = writeln!(
        s,
        "  <Page imageFilename=\"{}\" imageWidth=\"{}\" imageHeight=\"{}\">",
        xml_escape(image_filename),
        gt.page_width,
        gt.page_height
    );
    for (i, poly) in gt.regions.iter().enumerate() {
        let pts: Vec<String> = poly.points().iter().map(|p| format!("{},{}", p.x, p.y)).collect();
        let _ = writeln!(
            s,
            "    <TextRegion id=\"a{}\"><Coords points=\"{}\"/></TextRegion>",
            i + 1,
            pts.join(" ")
        );
    }
    s.push_str("  </Page>\n</PcGts>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::page_gt::{parse_page_xml, AMBIGUOUS, BACKGROUND};

    fn small() -> SynthConfig {
        SynthConfig {
            height: 544,
            width: 512,
            ..Default::default()
        }
    }

    #[test]
    fn no_annotations_means_all_background() {
        let cfg = SynthConfig {
            annotation_strokes: [0, 0],
            ..small()
        };
        let p = generate_page(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(p.ground_truth.regions.is_empty());
        assert_eq!(p.labels.count(BACKGROUND), 544 * 512);
    }

    #[test]
    fn printed_lookalikes_are_background_ink() {
        let cfg = SynthConfig {
            height: 512,
            width: 512,
            annotation_strokes: [0, 0],
            printed_lookalikes: [4, 4],
            ..SynthConfig::default()
        };
        let plain = SynthConfig {
            printed_lookalikes: [0, 0],
            ..cfg.clone()
        };
        let page = generate_page(&cfg, &mut page_rng(3, 0)).unwrap();
        assert!(page.ground_truth.regions.is_empty());
        assert_eq!(page.labels.count(ANNOTATION), 0);
        let without = generate_page(&plain, &mut page_rng(3, 0)).unwrap();
        assert_ne!(page.image, without.image);
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_page(&small(), &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = generate_page(&small(), &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
        let c = generate_page(&small(), &mut ChaCha8Rng::seed_from_u64(43)).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn labels_reproduce_through_rasterize_gt_and_xml() {
        for seed in 0..4 {
            let p = generate_page(&small(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(
                rasterize_gt(&p.image, &p.ground_truth, BinarizeParams::default()).unwrap(),
                p.labels
            );
            let xml = to_page_xml(&p.ground_truth, "p.png");
            let parsed = parse_page_xml(xml.as_bytes()).unwrap();
            assert!(parsed.warnings.is_empty());
            assert_eq!(parsed.ground_truth, p.ground_truth);
            assert!(p.labels.count(AMBIGUOUS) > 0);
        }
    }

    #[test]
    fn annotation_fraction_in_band() {
        let cfg = SynthConfig::default();
        for seed in 0..3 {
            let p = generate_page(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let f = p.annotation_fraction();
            assert!((0.005..=0.15).contains(&f), "seed {seed}: {f}");
        }
    }

    #[test]
    fn dataset_pages_are_independent_of_batching() {
        let cfg = small();
        let all = generate_pages(&cfg, 0..3).unwrap();
        let last = generate_pages(&cfg, 2..3).unwrap();
        assert_eq!(all[2], last[0]);
        assert_ne!(all[0].image, all[1].image);
    }

    #[test]
    fn rejects_tiny_pages() {
        let cfg = SynthConfig {
            height: 100,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hull_contains_its_points() {
        let pts = vec![(10.0, 10.0), (30.5, 12.2), (20.0, 25.0), (18.0, 15.0)];
        let poly = dilated_hull(&pts, 3.0, 100, 100).unwrap();
        for &(x, y) in &pts {
            for dx in -2..=2 {
                for dy in -2..=2 {
                    let p = Point::new((x as i64) + dx, (y as i64) + dy);
                    assert!(poly.contains(p), "{p:?}");
                }
            }
        }
    }
}
