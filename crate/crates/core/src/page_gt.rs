//! PAGE-XML ground truth and its three-class rasterization.
//!
//! A pixel is *annotation* when it is black after binarization and inside
//! an annotation polygon, *ambiguous* when it is inside a polygon but
//! white, and *background* everywhere else. Polygon membership uses the
//! even-odd rule on integer pixel coordinates with edge pixels counted as
//! inside; all geometry is done in exact integer arithmetic.

use crate::error::{Error, Result};
use crate::imaging::{binarize_adaptive, BinarizeParams, RasterImage};

pub const BACKGROUND: u8 = 0;
pub const ANNOTATION: u8 = 1;
pub const AMBIGUOUS: u8 = 2;

pub const BACKGROUND_RGB: [u8; 3] = [255, 255, 255];
pub const ANNOTATION_RGB: [u8; 3] = [255, 0, 0];
pub const AMBIGUOUS_RGB: [u8; 3] = [0, 0, 255];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub fn new(x: i64, y: i64) -> Self {
        Point { x, y }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polygon {
    points: Vec<Point>,
}

impl Polygon {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "a polygon needs at least 3 vertices, got {}",
                points.len()
            )));
        }
        if points.iter().any(|p| p.x < 0 || p.y < 0) {
            return Err(Error::InvalidArgument(
                "polygon coordinates must be non-negative".into(),
            ));
        }
        Ok(Polygon { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.points.len();
        (0..n).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    /// Even-odd membership; points lying exactly on an edge are inside.
    pub fn contains(&self, p: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if on_segment(p, a, b) {
                return true;
            }
            if (a.y > p.y) != (b.y > p.y) {
                // x-coordinate of the crossing is strictly right of p.x iff
                // (b.x-a.x)(p.y-a.y) / (b.y-a.y) > p.x - a.x.
                let lhs = (b.x - a.x) as i128 * (p.y - a.y) as i128;
                let rhs = (p.x - a.x) as i128 * (b.y - a.y) as i128;
                let crosses_right = if b.y > a.y { lhs > rhs } else { lhs < rhs };
                if crosses_right {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let min_x = self.points.iter().map(|p| p.x).min().unwrap();
        let max_x = self.points.iter().map(|p| p.x).max().unwrap();
        let min_y = self.points.iter().map(|p| p.y).min().unwrap();
        let max_y = self.points.iter().map(|p| p.y).max().unwrap();
        (Point::new(min_x, min_y), Point::new(max_x, max_y))
    }

    /// Set `mask[y*width + x]` for every pixel that [`Polygon::contains`].
    ///
    /// Scanline fill: on row `y` the even-odd interior is the union of
    /// `[c0, c1), [c2, c3), ...` over the sorted edge crossings, then every
    /// lattice point on an edge is added.
    pub fn fill_mask(&self, mask: &mut [bool], height: usize, width: usize) {
        let (lo, hi) = self.bounding_box();
        let y_end = (hi.y).min(height as i64 - 1);
        let mut crossings: Vec<i64> = Vec::new();
        for y in lo.y.max(0)..=y_end {
            crossings.clear();
            for (a, b) in self.edges() {
                if (a.y > y) != (b.y > y) {
                    // ceil of the crossing x-coordinate
                    let num = (b.x - a.x) * (y - a.y);
                    let den = b.y - a.y;
                    crossings.push(a.x + div_ceil(num, den));
                }
            }
            crossings.sort_unstable();
            let row = y as usize * width;
            for pair in crossings.chunks_exact(2) {
                let start = pair[0].max(0);
                let end = pair[1].min(width as i64);
                for x in start..end {
                    mask[row + x as usize] = true;
                }
            }
        }
        for (a, b) in self.edges() {
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let g = gcd(dx.unsigned_abs(), dy.unsigned_abs()).max(1) as i64;
            let (sx, sy) = (dx / g, dy / g);
            for k in 0..=g {
                let (x, y) = (a.x + k * sx, a.y + k * sy);
                if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                    mask[y as usize * width + x as usize] = true;
                }
            }
        }
    }
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    let cross = (b.x - a.x) as i128 * (p.y - a.y) as i128 - (b.y - a.y) as i128 * (p.x - a.x) as i128;
    cross == 0
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

fn div_ceil(num: i64, den: i64) -> i64 {
    let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
    num.div_euclid(den) + i64::from(num.rem_euclid(den) != 0)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Page dimensions plus the annotation polygons, in document order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageGroundTruth {
    pub page_width: usize,
    pub page_height: usize,
    pub regions: Vec<Polygon>,
}

impl PageGroundTruth {
    pub fn new(page_height: usize, page_width: usize, regions: Vec<Polygon>) -> Result<Self> {
        if page_width == 0 || page_height == 0 {
            return Err(Error::InvalidArgument("page dims must be positive".into()));
        }
        Ok(PageGroundTruth {
            page_width,
            page_height,
            regions,
        })
    }

    /// Union of all polygon interiors.
    pub fn inside_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.page_width * self.page_height];
        for poly in &self.regions {
            poly.fill_mask(&mut mask, self.page_height, self.page_width);
        }
        mask
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseWarning {
    SkippedRegion { index: usize, id: Option<String>, reason: String },
    ClampedVertex { index: usize, x: i64, y: i64 },
}

#[derive(Debug, Clone)]
pub struct ParsedPage {
    pub ground_truth: PageGroundTruth,
    pub warnings: Vec<ParseWarning>,
}

impl ParsedPage {
    pub fn skipped_regions(&self) -> usize {
        self.warnings
            .iter()
            .filter(|w| matches!(w, ParseWarning::SkippedRegion { .. }))
            .count()
    }
}

/// Read the region/polygon subset of a PAGE-XML document.
///
/// Element names are matched on their local part, so any PAGE schema
/// version works. Every element named `*Region` with a `Coords` child
/// contributes one polygon, taken from the `points` attribute or from
/// legacy `<Point x= y=/>` children.
pub fn parse_page_xml(xml: &[u8]) -> Result<ParsedPage> {
    let text = std::str::from_utf8(xml).map_err(|e| Error::PageXml(format!("not UTF-8: {e}")))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::PageXml(e.to_string()))?;
    let page = doc
        .descendants()
        .find(|n| n.is_element() && n.tag_name().name() == "Page")
        .ok_or_else(|| Error::PageXml("no Page element".into()))?;
    let dim = |attr: &str| -> Result<usize> {
        let v = page
            .attribute(attr)
            .ok_or_else(|| Error::PageXml(format!("Page element lacks {attr}")))?;
        match v.trim().parse::<usize>() {
            Ok(d) if d > 0 => Ok(d),
            _ => Err(Error::PageXml(format!("bad {attr} value {v:?}"))),
        }
    };
    let width = dim("imageWidth")?;
    let height = dim("imageHeight")?;

    let mut regions = Vec::new();
    let mut warnings = Vec::new();
    let region_nodes = page
        .descendants()
        .filter(|n| n.is_element() && n.tag_name().name().ends_with("Region"));
    for (index, node) in region_nodes.enumerate() {
        let id = node.attribute("id").map(str::to_owned);
        let skip = |reason: String| ParseWarning::SkippedRegion {
            index,
            id: id.clone(),
            reason,
        };
        let Some(coords) = node
            .children()
            .find(|c| c.is_element() && c.tag_name().name() == "Coords")
        else {
            warnings.push(skip("no Coords".into()));
            continue;
        };
        let raw = match read_coords(coords) {
            Ok(pts) => pts,
            Err(reason) => {
                warnings.push(skip(reason));
                continue;
            }
        };
        if raw.len() < 3 {
            warnings.push(skip(format!("{} points, need at least 3", raw.len())));
            continue;
        }
        let mut pts = Vec::with_capacity(raw.len());
        for (x, y) in raw {
            let cx = x.clamp(0, width as i64 - 1);
            let cy = y.clamp(0, height as i64 - 1);
            if (cx, cy) != (x, y) {
                warnings.push(ParseWarning::ClampedVertex { index, x, y });
            }
            pts.push(Point::new(cx, cy));
        }
        regions.push(Polygon { points: pts });
    }
    if !warnings.is_empty() {
        log::warn!("PAGE-XML: {} warning(s)", warnings.len());
    }
    Ok(ParsedPage {
        ground_truth: PageGroundTruth {
            page_width: width,
            page_height: height,
            regions,
        },
        warnings,
    })
}

fn read_coords(coords: roxmltree::Node) -> std::result::Result<Vec<(i64, i64)>, String> {
    if let Some(points) = coords.attribute("points") {
        return points
            .split_whitespace()
            .map(|pair| {
                let (x, y) = pair
                    .split_once(',')
                    .ok_or_else(|| format!("malformed point {pair:?}"))?;
                Ok((parse_coord(x)?, parse_coord(y)?))
            })
            .collect();
    }
    coords
        .children()
        .filter(|c| c.is_element() && c.tag_name().name() == "Point")
        .map(|p| {
            let x = p.attribute("x").ok_or("Point without x")?;
            let y = p.attribute("y").ok_or("Point without y")?;
            Ok((parse_coord(x)?, parse_coord(y)?))
        })
        .collect()
}

fn parse_coord(s: &str) -> std::result::Result<i64, String> {
    s.trim()
        .parse::<i64>()
        .map_err(|_| format!("non-integer coordinate {s:?}"))
}

/// Per-pixel class map over {background, annotation, ambiguous}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} label map needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > AMBIGUOUS) {
            return Err(Error::InvalidArgument(format!("label value {bad} not in {{0,1,2}}")));
        }
        Ok(LabelMap {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: u8) -> Result<Self> {
        LabelMap::new(height, width, vec![label; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub(crate) fn from_raw(height: usize, width: usize, labels: Vec<u8>) -> Self {
        debug_assert_eq!(labels.len(), height * width);
        LabelMap {
            height,
            width,
            labels,
        }
    }
}

/// Three-class ground truth from an image and its polygons.
pub fn rasterize_gt(
    img: &RasterImage,
    gt: &PageGroundTruth,
    params: BinarizeParams,
) -> Result<LabelMap> {
    if img.height() != gt.page_height || img.width() != gt.page_width {
        return Err(Error::Shape(format!(
            "image is {}x{} but PAGE declares {}x{}",
            img.height(),
            img.width(),
            gt.page_height,
            gt.page_width
        )));
    }
    params.validate()?;
    let inside = gt.inside_mask();
    if !inside.iter().any(|&b| b) {
        return Ok(LabelMap::from_raw(
            img.height(),
            img.width(),
            vec![BACKGROUND; inside.len()],
        ));
    }
    let bin = binarize_adaptive(img, params.window, params.offset)?;
    let labels = inside
        .iter()
        .zip(bin.as_slice())
        .map(|(&ins, &black)| match (ins, black) {
            (false, _) => BACKGROUND,
            (true, true) => ANNOTATION,
            (true, false) => AMBIGUOUS,
        })
        .collect();
    Ok(LabelMap::from_raw(img.height(), img.width(), labels))
}

pub fn encode_label_png(lm: &LabelMap) -> RasterImage {
    let data = lm
        .labels
        .iter()
        .flat_map(|&l| match l {
            ANNOTATION => ANNOTATION_RGB,
            AMBIGUOUS => AMBIGUOUS_RGB,
            _ => BACKGROUND_RGB,
        })
        .collect();
    RasterImage::new(lm.height, lm.width, 3, data).expect("dims come from a valid label map")
}

pub fn decode_label_png(img: &RasterImage) -> Result<LabelMap> {
    let rgb = img.to_rgb();
    let mut labels = Vec::with_capacity(img.height() * img.width());
    for (i, p) in rgb.data().chunks_exact(3).enumerate() {
        let l = match [p[0], p[1], p[2]] {
            BACKGROUND_RGB => BACKGROUND,
            ANNOTATION_RGB => ANNOTATION,
            AMBIGUOUS_RGB => AMBIGUOUS,
            _ => {
                return Err(Error::IllegalLabelColor {
                    x: i % img.width(),
                    y: i / img.width(),
                    r: p[0],
                    g: p[1],
                    b: p[2],
                })
            }
        };
        labels.push(l);
    }
    Ok(LabelMap::from_raw(img.height(), img.width(), labels))
}
