//! Silhouette extraction and metrology for one camera view.
//!
//! The chain is [`otsu_threshold`] → [`binarize`] → [`clean_silhouette`] →
//! [`measure_view`], and [`assemble_features`] reconciles the three views
//! into length, width, thickness and the three projected areas.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("image dimensions must be ≥ 1".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::PixelCountMismatch {
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, level: u8) -> Result<Self> {
        Self::new(width, height, vec![level; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &p in &self.pixels {
            hist[p as usize] += 1;
        }
        hist
    }

    /// Inverts intensities (255 − v).
    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| 255 - p).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("mask dimensions must be ≥ 1".into()));
        }
        if mask.len() != width * height {
            return Err(Error::PixelCountMismatch {
                expected: width * height,
                got: mask.len(),
            });
        }
        Ok(Self {
            width,
            height,
            mask,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// (min_x, max_x, min_y, max_y) of the foreground, or `None` if empty.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for (i, _) in self.mask.iter().enumerate().filter(|(_, &m)| m) {
            let (x, y) = (i % self.width, i / self.width);
            bb = Some(match bb {
                None => (x, x, y, y),
                Some((x0, x1, y0, y1)) => (x0.min(x), x1.max(x), y0.min(y), y1.max(y)),
            });
        }
        bb
    }
}

// 256-bit comparison of D_a² · m_b against D_b² · m_a.
fn mul_wide(x: u128, y: u64) -> (u128, u128) {
    let y = y as u128;
    let lo_part = (x & u64::MAX as u128) * y;
    let mid = (x >> 64) * y;
    let (lo, carry) = lo_part.overflowing_add(mid << 64);
    ((mid >> 64) + carry as u128, lo)
}

#[derive(Clone, Copy)]
struct Score {
    d2: u128,
    m: u64,
}

impl Score {
    fn greater_than(&self, other: &Score) -> bool {
        mul_wide(self.d2, other.m) > mul_wide(other.d2, self.m)
    }
}

/// Otsu threshold on the 256-bin histogram.
///
/// Pixels `≤ k` form the dark class. Between-class variance
/// `ω₀ω₁(μ₀ − μ₁)²` equals `(N·S₀ − n₀·S)² / (N²·n₀·n₁)`, so candidates are
/// compared exactly in integer arithmetic and ties resolve to the lowest k.
pub fn otsu_threshold(img: &GrayImage) -> Result<u8> {
    let hist = img.histogram();
    let distinct: Vec<usize> = (0..256).filter(|&v| hist[v] > 0).collect();
    if distinct.len() < 2 {
        return Err(Error::DegenerateHistogram(img.pixels[0]));
    }
    let n_total: u64 = hist.iter().sum();
    let s_total: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();

    let mut best_k = 0u8;
    let mut best = Score { d2: 0, m: 1 };
    let (mut n0, mut s0) = (0u64, 0u64);
    for k in 0..255usize {
        n0 += hist[k];
        s0 += k as u64 * hist[k];
        let n1 = n_total - n0;
        let score = if n0 == 0 || n1 == 0 {
            Score { d2: 0, m: 1 }
        } else {
            let d = n_total as i128 * s0 as i128 - n0 as i128 * s_total as i128;
            let d = d.unsigned_abs();
            Score {
                d2: d * d,
                m: n0 * n1,
            }
        };
        if score.greater_than(&best) {
            best = score;
            best_k = k as u8;
        }
    }
    Ok(best_k)
}

/// Thresholds at `k` so that the fruit is always `true`.
///
/// Pixels above `k` form the bright class. The background is the class that
/// dominates the image border; when that is the bright class (and the dark
/// class is non-empty) the mask is complemented.
pub fn binarize(img: &GrayImage, k: u8) -> BinaryImage {
    let mut mask: Vec<bool> = img.pixels.iter().map(|&p| p > k).collect();
    let (w, h) = (img.width, img.height);
    let mut bright = 0usize;
    let mut dark = 0usize;
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                if mask[y * w + x] {
                    bright += 1;
                } else {
                    dark += 1;
                }
            }
        }
    }
    let any_dark = mask.iter().any(|&m| !m);
    if bright > dark && any_dark {
        mask.iter_mut().for_each(|m| *m = !*m);
    }
    BinaryImage {
        width: w,
        height: h,
        mask,
    }
}

const N4: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
const N8: [(isize, isize); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

fn flood(
    w: usize,
    h: usize,
    seeds: &[usize],
    member: impl Fn(usize) -> bool,
    nbrs: &[(isize, isize)],
    visited: &mut [bool],
) -> Vec<usize> {
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for &s in seeds {
        if !visited[s] && member(s) {
            visited[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(i) = queue.pop_front() {
        out.push(i);
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for &(dx, dy) in nbrs {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            let j = ny as usize * w + nx as usize;
            if !visited[j] && member(j) {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    out
}

/// 4-connected foreground components in raster order of their first pixel.
pub fn components_4(bin: &BinaryImage) -> Vec<Vec<usize>> {
    let (w, h) = (bin.width, bin.height);
    let mut visited = vec![false; w * h];
    let mut comps = Vec::new();
    for i in 0..w * h {
        if bin.mask[i] && !visited[i] {
            comps.push(flood(w, h, &[i], |j| bin.mask[j], &N4, &mut visited));
        }
    }
    comps
}

/// Keeps the largest 4-connected component (earliest in raster order on
/// ties) and fills every background region that is not 8-connected to the
/// border.
pub fn clean_silhouette(bin: &BinaryImage) -> Result<BinaryImage> {
    let (w, h) = (bin.width, bin.height);
    let comps = components_4(bin);
    let largest = comps
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
        .map(|(_, c)| c)
        .ok_or(Error::EmptyMask)?;
    let mut kept = vec![false; w * h];
    for &i in largest {
        kept[i] = true;
    }

    let border: Vec<usize> = (0..w * h)
        .filter(|&i| {
            let (x, y) = (i % w, i / w);
            x == 0 || y == 0 || x == w - 1 || y == h - 1
        })
        .collect();
    let mut visited = vec![false; w * h];
    flood(w, h, &border, |j| !kept[j], &N8, &mut visited);
    let mask = (0..w * h).map(|i| kept[i] || !visited[i]).collect();
    Ok(BinaryImage {
        width: w,
        height: h,
        mask,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationScale {
    pub mm_per_pixel: f64,
    pub mm2_per_pixel: f64,
}

impl CalibrationScale {
    pub fn from_mm_per_pixel(mm_per_pixel: f64) -> Result<Self> {
        if !(mm_per_pixel > 0.0 && mm_per_pixel.is_finite()) {
            return Err(Error::InvalidParameter("mm_per_pixel must be positive".into()));
        }
        Ok(Self {
            mm_per_pixel,
            mm2_per_pixel: mm_per_pixel * mm_per_pixel,
        })
    }
}

/// Scale from a target of known size: mean of the two per-axis ratios.
pub fn calibrate(known_mm: (f64, f64), measured_px: (f64, f64)) -> Result<CalibrationScale> {
    let all = [known_mm.0, known_mm.1, measured_px.0, measured_px.1];
    if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidParameter(
            "calibration sizes must be positive".into(),
        ));
    }
    let mpp = 0.5 * (known_mm.0 / measured_px.0 + known_mm.1 / measured_px.1);
    CalibrationScale::from_mm_per_pixel(mpp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewMeasurement {
    /// mm
    pub extent_h: f64,
    pub extent_v: f64,
    /// mm²
    pub area: f64,
}

pub fn measure_view(bin: &BinaryImage, scale: &CalibrationScale) -> Result<ViewMeasurement> {
    let (x0, x1, y0, y1) = bin.bounding_box().ok_or(Error::EmptyMask)?;
    Ok(ViewMeasurement {
        extent_h: (x1 - x0 + 1) as f64 * scale.mm_per_pixel,
        extent_v: (y1 - y0 + 1) as f64 * scale.mm_per_pixel,
        area: bin.count() as f64 * scale.mm2_per_pixel,
    })
}

/// Physical features recovered from the three views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractedFeatures {
    pub length: f64,
    pub width: f64,
    pub thickness: f64,
    pub pa1: f64,
    pub pa2: f64,
    pub pa3: f64,
}

impl ExtractedFeatures {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.length,
            self.width,
            self.thickness,
            self.pa1,
            self.pa2,
            self.pa3,
        ]
    }
}

/// Views must be ordered (L × W), (L × T), (W × T). Each dimension appears
/// in two views and is reported as the mean of both extents.
pub fn assemble_features(
    m1: &ViewMeasurement,
    m2: &ViewMeasurement,
    m3: &ViewMeasurement,
) -> ExtractedFeatures {
    ExtractedFeatures {
        length: 0.5 * (m1.extent_h + m2.extent_h),
        width: 0.5 * (m1.extent_v + m3.extent_h),
        thickness: 0.5 * (m2.extent_v + m3.extent_v),
        pa1: m1.area,
        pa2: m2.area,
        pa3: m3.area,
    }
}

/// Threshold, binarize and clean one view.
pub fn segment(img: &GrayImage) -> Result<BinaryImage> {
    let k = otsu_threshold(img)?;
    clean_silhouette(&binarize(img, k))
}

/// Full per-fruit extraction from three views.
pub fn extract_features(views: &[GrayImage; 3], scale: &CalibrationScale) -> Result<ExtractedFeatures> {
    let mut m = Vec::with_capacity(3);
    for v in views {
        m.push(measure_view(&segment(v)?, scale)?);
    }
    Ok(assemble_features(&m[0], &m[1], &m[2]))
}

/// Pixel extents (width, height) of the segmented calibration target.
pub fn target_extent_px(img: &GrayImage) -> Result<(f64, f64)> {
    let bin = segment(img)?;
    let (x0, x1, y0, y1) = bin.bounding_box().ok_or(Error::EmptyMask)?;
    Ok(((x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin_from(rows: &[&str]) -> BinaryImage {
        let h = rows.len();
        let w = rows[0].len();
        let mask = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        BinaryImage::new(w, h, mask).unwrap()
    }

    #[test]
    fn two_level_tie_breaks_low() {
        let img = GrayImage::new(2, 2, vec![0, 0, 255, 255]).unwrap();
        assert_eq!(otsu_threshold(&img).unwrap(), 0);
    }

    #[test]
    fn single_level_is_degenerate() {
        let img = GrayImage::filled(3, 3, 7).unwrap();
        assert!(matches!(otsu_threshold(&img), Err(Error::DegenerateHistogram(7))));
    }

    #[test]
    fn wide_mul_orders_correctly() {
        let big = u128::MAX / 3;
        assert!(mul_wide(big, 5) > mul_wide(big, 4));
        assert!(mul_wide(big, 1) < mul_wide(big / 2 + big, 1));
        assert_eq!(mul_wide(3, 7), (0, 21));
    }

    #[test]
    fn all_bright_stays_foreground() {
        let img = GrayImage::filled(4, 4, 255).unwrap();
        assert!(binarize(&img, 254).mask().iter().all(|&m| m));
    }

    #[test]
    fn dark_fruit_on_bright_background_is_complemented() {
        let mut px = vec![230u8; 20 * 20];
        for y in 6..14 {
            for x in 5..15 {
                px[y * 20 + x] = 30;
            }
        }
        let img = GrayImage::new(20, 20, px).unwrap();
        let k = otsu_threshold(&img).unwrap();
        let b = binarize(&img, k);
        assert_eq!(b.count(), 80);
        assert!(b.get(10, 10));
        assert!(!b.get(0, 0));
    }

    #[test]
    fn speckles_removed() {
        let b = bin_from(&[
            "#.........",
            "...###....",
            "..#####...",
            "..#####..#",
            "...###....",
            "......#...",
        ]);
        let c = clean_silhouette(&b).unwrap();
        assert_eq!(c.count(), 16);
        assert!(!c.get(0, 0) && !c.get(9, 3) && !c.get(6, 5));
    }

    #[test]
    fn ring_is_filled() {
        let b = bin_from(&[
            ".......",
            ".#####.",
            ".#...#.",
            ".#...#.",
            ".#####.",
            ".......",
        ]);
        let c = clean_silhouette(&b).unwrap();
        assert_eq!(c.count(), 20);
        assert!(c.get(3, 2));
    }

    #[test]
    fn diagonal_hole_is_not_border_connected_under_8() {
        // the corner gap touches the hole only diagonally from outside; the
        // 4-connected ring still encloses it for 8-connected background
        let b = bin_from(&[
            ".....",
            ".###.",
            ".#.#.",
            ".###.",
            ".....",
        ]);
        assert_eq!(clean_silhouette(&b).unwrap().count(), 9);
    }

    #[test]
    fn checkerboard_keeps_first_pixel() {
        let b = bin_from(&["#.", ".#"]);
        let c = clean_silhouette(&b).unwrap();
        assert_eq!(c.mask(), &[true, false, false, false]);
    }

    #[test]
    fn empty_mask_errors() {
        let b = bin_from(&["...", "..."]);
        assert!(matches!(clean_silhouette(&b), Err(Error::EmptyMask)));
        let s = CalibrationScale::from_mm_per_pixel(1.0).unwrap();
        assert!(matches!(measure_view(&b, &s), Err(Error::EmptyMask)));
    }

    #[test]
    fn calibration_examples() {
        let s = calibrate((20.0, 20.0), (40.0, 40.0)).unwrap();
        assert_eq!(s.mm_per_pixel, 0.5);
        assert_eq!(s.mm2_per_pixel, 0.25);
        assert_eq!(calibrate((20.0, 10.0), (40.0, 20.0)).unwrap().mm_per_pixel, 0.5);
        let s = calibrate((20.0, 20.0), (40.0, 42.0)).unwrap();
        assert!((s.mm_per_pixel - 0.488_095_238).abs() < 1e-8);
        assert!((s.mm2_per_pixel / (s.mm_per_pixel * s.mm_per_pixel) - 1.0).abs() < 1e-12);
        assert!(calibrate((0.0, 20.0), (40.0, 40.0)).is_err());
        assert!(calibrate((20.0, 20.0), (-1.0, 40.0)).is_err());
    }

    #[test]
    fn rectangle_measurement() {
        let (w, h) = (80, 50);
        let mask = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                (10..60).contains(&x) && (10..40).contains(&y)
            })
            .collect();
        let b = BinaryImage::new(w, h, mask).unwrap();
        let m = measure_view(&b, &CalibrationScale::from_mm_per_pixel(0.5).unwrap()).unwrap();
        // 1500 px × 0.25 mm²/px
        assert_eq!((m.extent_h, m.extent_v, m.area), (25.0, 15.0, 375.0));
    }

    #[test]
    fn single_pixel_measurement() {
        let b = bin_from(&["...", ".#.", "..."]);
        let m = measure_view(&b, &CalibrationScale::from_mm_per_pixel(1.0).unwrap()).unwrap();
        assert_eq!((m.extent_h, m.extent_v, m.area), (1.0, 1.0, 1.0));
    }

    #[test]
    fn assemble_means() {
        let m1 = ViewMeasurement { extent_h: 46.0, extent_v: 44.0, area: 1.0 };
        let m2 = ViewMeasurement { extent_h: 46.4, extent_v: 41.0, area: 2.0 };
        let m3 = ViewMeasurement { extent_h: 44.0, extent_v: 41.0, area: 3.0 };
        let f = assemble_features(&m1, &m2, &m3);
        assert!((f.length - 46.2).abs() < 1e-12);
        assert_eq!(f.width, 44.0);
        assert_eq!(f.thickness, 41.0);
        assert_eq!([f.pa1, f.pa2, f.pa3], [1.0, 2.0, 3.0]);
    }
}
