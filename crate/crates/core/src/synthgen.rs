//! Synthetic ground truth: per-variety fruit draws and three-view silhouette
//! renders.
//!
//! Fruit geometry is a superellipsoid `|x/a|ⁿ + |y/b|ⁿ + |z/c|ⁿ ≤ 1` with one
//! exponent per variety. Its silhouette along each principal axis is the
//! superellipse through the two remaining semi-axes, which is what
//! [`render_views`] rasterizes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Variety;
use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::special::gamma_fn;

/// Admissible density band in g/mm³.
pub const DENSITY_RANGE: (f64, f64) = (0.0008, 0.0015);

/// Default relative standard deviation of the multiplicative mass noise.
pub const DEFAULT_MASS_NOISE: f64 = 0.02;

const MAX_REDRAWS: usize = 100;

/// Generation parameters for one variety. Lengths in mm, density in g/mm³.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarietyParams {
    pub variety: Variety,
    pub length_mean: f64,
    pub length_std: f64,
    pub width_mean: f64,
    pub width_std: f64,
    pub thickness_mean: f64,
    pub thickness_std: f64,
    pub density: f64,
    pub squareness: f64,
}

/// Published per-variety anchors used for calibration.
#[derive(Debug, Clone, Copy)]
pub struct VarietyTable {
    pub variety: Variety,
    /// (mean, std) of length, width and thickness in mm.
    pub length: (f64, f64),
    pub width: (f64, f64),
    pub thickness: (f64, f64),
    /// Mean mass in g.
    pub mass_mean: f64,
    /// Mean projected area of the length × width view in mm².
    pub pa1_mean: f64,
}

pub const VARIETY_TABLE: [VarietyTable; 5] = [
    VarietyTable {
        variety: Variety::Ordubad,
        length: (46.64, 2.80),
        width: (44.68, 3.11),
        thickness: (41.22, 2.53),
        mass_mean: 47.81,
        pa1_mean: 1878.12,
    },
    VarietyTable {
        variety: Variety::Shahrod,
        length: (52.34, 3.44),
        width: (38.44, 2.71),
        thickness: (38.39, 2.74),
        mass_mean: 38.36,
        pa1_mean: 1860.30,
    },
    VarietyTable {
        variety: Variety::Maragheh,
        length: (36.59, 2.04),
        width: (33.22, 2.03),
        thickness: (31.52, 1.77),
        mass_mean: 22.51,
        pa1_mean: 1147.78,
    },
    VarietyTable {
        variety: Variety::Oromieh,
        length: (34.87, 1.93),
        width: (32.66, 1.93),
        thickness: (32.51, 2.20),
        mass_mean: 21.39,
        pa1_mean: 1062.29,
    },
    VarietyTable {
        variety: Variety::Nasiri,
        length: (45.62, 3.07),
        width: (42.83, 3.39),
        thickness: (40.01, 2.93),
        mass_mean: 44.69,
        pa1_mean: 1759.89,
    },
];

/// Area of the superellipse `|x/a|ⁿ + |y/b|ⁿ ≤ 1`.
pub fn superellipse_area(a: f64, b: f64, n: f64) -> f64 {
    let g = gamma_fn(1.0 + 1.0 / n);
    4.0 * a * b * g * g / gamma_fn(1.0 + 2.0 / n)
}

/// Volume of the superellipsoid `|x/a|ⁿ + |y/b|ⁿ + |z/c|ⁿ ≤ 1`.
pub fn superellipsoid_volume(a: f64, b: f64, c: f64, n: f64) -> f64 {
    let g = gamma_fn(1.0 + 1.0 / n);
    8.0 * a * b * c * g * g * g / gamma_fn(1.0 + 3.0 / n)
}

/// Solves `superellipse_area(a, b, n) = target` for `n ≥ 2` by bisection.
///
/// Targets at or below the ellipse area map to `n = 2`.
pub fn fit_squareness(a: f64, b: f64, target: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && target > 0.0) {
        return Err(Error::InvalidParameter(
            "squareness fit needs positive semi-axes and area".into(),
        ));
    }
    if target >= 4.0 * a * b {
        return Err(Error::InvalidParameter(format!(
            "area {target} is not below the bounding rectangle {}",
            4.0 * a * b
        )));
    }
    let (mut lo, mut hi) = (2.0_f64, 2.0_f64);
    if superellipse_area(a, b, lo) >= target {
        return Ok(2.0);
    }
    while superellipse_area(a, b, hi) < target {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::InvalidParameter("squareness bisection diverged".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if superellipse_area(a, b, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

impl VarietyParams {
    /// Calibrates density from the mean ellipsoid volume and squareness from
    /// the mean length × width projected area.
    pub fn calibrated(table: &VarietyTable) -> Result<Self> {
        let (l, w, t) = (table.length.0, table.width.0, table.thickness.0);
        let ellipsoid = std::f64::consts::PI / 6.0 * l * w * t;
        let params = Self {
            variety: table.variety,
            length_mean: l,
            length_std: table.length.1,
            width_mean: w,
            width_std: table.width.1,
            thickness_mean: t,
            thickness_std: table.thickness.1,
            density: table.mass_mean / ellipsoid,
            squareness: fit_squareness(l / 2.0, w / 2.0, table.pa1_mean)?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.length_mean,
            self.width_mean,
            self.thickness_mean,
            self.length_std,
            self.width_std,
            self.thickness_std,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "{}: means and stds must be positive",
                self.variety
            )));
        }
        if !(self.squareness >= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "{}: squareness {} < 2",
                self.variety, self.squareness
            )));
        }
        if !(DENSITY_RANGE.0..=DENSITY_RANGE.1).contains(&self.density) {
            return Err(Error::InvalidParameter(format!(
                "{}: density {} outside {:?}",
                self.variety, self.density, DENSITY_RANGE
            )));
        }
        Ok(())
    }

    /// Copy with every dimension std multiplied by `factor`.
    pub fn with_std_scale(&self, factor: f64) -> Self {
        Self {
            length_std: self.length_std * factor,
            width_std: self.width_std * factor,
            thickness_std: self.thickness_std * factor,
            ..self.clone()
        }
    }

    /// Analytic length × width silhouette area at the mean dimensions.
    pub fn mean_pa1(&self) -> f64 {
        superellipse_area(self.length_mean / 2.0, self.width_mean / 2.0, self.squareness)
    }
}

/// The five varieties, calibrated from the published anchor table.
pub fn default_varieties() -> Vec<VarietyParams> {
    VARIETY_TABLE
        .iter()
        .map(|t| VarietyParams::calibrated(t).expect("built-in table is valid"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFruit {
    pub variety: Variety,
    /// mm
    pub length: f64,
    pub width: f64,
    pub thickness: f64,
    /// g
    pub mass: f64,
    pub squareness: f64,
    pub seed: u64,
}

impl GroundTruthFruit {
    pub fn volume(&self) -> f64 {
        superellipsoid_volume(
            self.length / 2.0,
            self.width / 2.0,
            self.thickness / 2.0,
            self.squareness,
        )
    }
}

fn draw_positive(rng: &mut ChaCha8Rng, mean: f64, std: f64) -> Result<f64> {
    if std == 0.0 {
        return if mean > 0.0 {
            Ok(mean)
        } else {
            Err(Error::DegenerateDraw(0))
        };
    }
    let dist = Normal::new(mean, std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    for _ in 0..=MAX_REDRAWS {
        let v = dist.sample(rng);
        if v > 0.0 {
            return Ok(v);
        }
    }
    Err(Error::DegenerateDraw(MAX_REDRAWS))
}

/// Draws one fruit. Dimensions are independent normals, redrawn while
/// non-positive; mass is density × superellipsoid volume times a
/// log-normal factor with relative spread `mass_noise`.
pub fn sample_fruit(params: &VarietyParams, seed: u64, mass_noise: f64) -> Result<GroundTruthFruit> {
    if !(params.squareness >= 2.0 && params.density > 0.0) || mass_noise < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "{}: invalid generation parameters",
            params.variety
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let length = draw_positive(&mut rng, params.length_mean, params.length_std)?;
    let width = draw_positive(&mut rng, params.width_mean, params.width_std)?;
    let thickness = draw_positive(&mut rng, params.thickness_mean, params.thickness_std)?;
    let z: f64 = rng.sample(StandardNormal);
    let mut fruit = GroundTruthFruit {
        variety: params.variety,
        length,
        width,
        thickness,
        mass: 0.0,
        squareness: params.squareness,
        seed,
    };
    fruit.mass = params.density * fruit.volume() * (mass_noise * z).exp();
    Ok(fruit)
}

/// SplitMix64 finalizer over (master, stream, index); used wherever a child
/// seed is needed so that streams never overlap.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub mm_per_pixel: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub foreground_level: u8,
    pub background_level: u8,
    pub noise_std: f64,
    pub blur_radius: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            mm_per_pixel: 0.1,
            image_width: 800,
            image_height: 800,
            foreground_level: 200,
            background_level: 20,
            noise_std: 6.0,
            blur_radius: 1,
        }
    }
}

impl RenderConfig {
    pub fn noise_free(&self) -> Self {
        Self {
            noise_std: 0.0,
            blur_radius: 0,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mm_per_pixel > 0.0) || self.image_width == 0 || self.image_height == 0 {
            return Err(Error::InvalidParameter("render scale and size must be positive".into()));
        }
        let gap = (self.foreground_level as i32 - self.background_level as i32).abs();
        if gap < 64 {
            return Err(Error::InvalidParameter(format!(
                "foreground/background levels differ by {gap} < 64"
            )));
        }
        if self.noise_std < 0.0 {
            return Err(Error::InvalidParameter("negative noise std".into()));
        }
        Ok(())
    }
}

/// Rasterizes the superellipse with semi-axes `(a_mm, b_mm)` centred in the
/// frame: a pixel is foreground when its centre satisfies
/// `|x/a|ⁿ + |y/b|ⁿ ≤ 1`. Returns the foreground mask.
pub fn rasterize_superellipse(
    a_mm: f64,
    b_mm: f64,
    n: f64,
    cfg: &RenderConfig,
) -> Result<Vec<bool>> {
    let a = a_mm / cfg.mm_per_pixel;
    let b = b_mm / cfg.mm_per_pixel;
    let (w, h) = (cfg.image_width, cfg.image_height);
    // keep one background pixel on every side
    let needed_w = (2.0 * a).ceil() as usize + 2;
    let needed_h = (2.0 * b).ceil() as usize + 2;
    if needed_w > w || needed_h > h {
        return Err(Error::OutOfFrame {
            needed_w,
            needed_h,
            width: w,
            height: h,
        });
    }
    let cx = w as f64 / 2.0;
    let cy = h as f64 / 2.0;
    let mut mask = vec![false; w * h];
    for row in 0..h {
        let y = (row as f64 + 0.5 - cy) / b;
        let t = y.abs().powf(n);
        if t > 1.0 {
            continue;
        }
        let half = a * (1.0 - t).powf(1.0 / n);
        let first = (cx - half - 0.5).ceil().max(0.0) as usize;
        let last = (cx + half - 0.5).floor();
        if last < 0.0 {
            continue;
        }
        let last = (last as usize).min(w - 1);
        if first <= last {
            mask[row * w + first..=row * w + last].fill(true);
        }
    }
    Ok(mask)
}

fn box_blur(buf: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    if r == 0 {
        return buf.to_vec();
    }
    let ri = r as isize;
    let norm = (2 * r + 1) as f64;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dx in -ri..=ri {
                let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                s += buf[y * w + xx];
            }
            tmp[y * w + x] = s / norm;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for dy in -ri..=ri {
                let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                s += tmp[yy * w + x];
            }
            out[y * w + x] = s / norm;
        }
    }
    out
}

/// Renders one view: rasterize, box-blur, then add Gaussian sensor noise.
pub fn render_view(
    a_mm: f64,
    b_mm: f64,
    n: f64,
    cfg: &RenderConfig,
    noise_seed: u64,
) -> Result<GrayImage> {
    cfg.validate()?;
    let mask = rasterize_superellipse(a_mm, b_mm, n, cfg)?;
    let (w, h) = (cfg.image_width, cfg.image_height);
    let fg = cfg.foreground_level as f64;
    let bg = cfg.background_level as f64;
    let mut buf: Vec<f64> = mask.iter().map(|&m| if m { fg } else { bg }).collect();
    buf = box_blur(&buf, w, h, cfg.blur_radius);
    if cfg.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        for v in buf.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += cfg.noise_std * z;
        }
    }
    let pixels = buf.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    GrayImage::new(w, h, pixels)
}

/// The three axis-aligned views: (L × W), (L × T), (W × T), horizontal axis first.
pub fn render_views(fruit: &GroundTruthFruit, cfg: &RenderConfig) -> Result<[GrayImage; 3]> {
    let (l, w, t) = (fruit.length / 2.0, fruit.width / 2.0, fruit.thickness / 2.0);
    let n = fruit.squareness;
    let axes = [(l, w), (l, t), (w, t)];
    let mut views = Vec::with_capacity(3);
    for (i, (a, b)) in axes.into_iter().enumerate() {
        views.push(render_view(a, b, n, cfg, derive_seed(fruit.seed, 0x5EED, i as u64))?);
    }
    Ok(views.try_into().expect("three views"))
}

/// Square calibration target of side `size_mm`, rendered with the rig's
/// levels but without noise.
pub fn render_calibration_target(size_mm: f64, cfg: &RenderConfig) -> Result<GrayImage> {
    cfg.validate()?;
    let side = (size_mm / cfg.mm_per_pixel).round() as usize;
    let (w, h) = (cfg.image_width, cfg.image_height);
    if side == 0 || side + 2 > w || side + 2 > h {
        return Err(Error::OutOfFrame {
            needed_w: side + 2,
            needed_h: side + 2,
            width: w,
            height: h,
        });
    }
    let (x0, y0) = ((w - side) / 2, (h - side) / 2);
    let pixels = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            if (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y) {
                cfg.foreground_level
            } else {
                cfg.background_level
            }
        })
        .collect();
    GrayImage::new(w, h, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ordubad() -> VarietyParams {
        default_varieties().remove(0)
    }

    #[test]
    fn ordubad_anchor_values() {
        let p = ordubad();
        assert_eq!(p.variety, Variety::Ordubad);
        assert_eq!(p.length_mean, 46.64);
        assert_eq!(p.length_std, 2.80);
        assert_eq!(p.width_mean, 44.68);
        assert_eq!(p.thickness_mean, 41.22);
    }

    #[test]
    fn ordubad_density_from_mean_ellipsoid() {
        // hand arithmetic: (π/6)·46.64·44.68·41.22 = 44975.6 mm³; 47.81 / 44975.6
        let vol = std::f64::consts::PI / 6.0 * 46.64 * 44.68 * 41.22;
        assert!((vol - 44_975.6).abs() < 0.5);
        let p = ordubad();
        assert!((p.density - 1.063e-3).abs() < 1e-6, "{}", p.density);
    }

    #[test]
    fn ordubad_squareness_bisection() {
        let p = ordubad();
        let ellipse = std::f64::consts::PI * 23.32 * 22.34;
        assert!((ellipse - 1636.7).abs() < 0.5);
        assert!(p.squareness > 2.0);
        // independent check: area at the fitted exponent reproduces PA₁
        assert!((superellipse_area(23.32, 22.34, p.squareness) - 1878.12).abs() < 1e-6);
        assert!((p.squareness - 3.3296).abs() < 1e-3);
    }

    #[test]
    fn all_defaults_validate() {
        let v = default_varieties();
        assert_eq!(v.len(), 5);
        for p in &v {
            p.validate().unwrap();
        }
    }

    #[test]
    fn volume_reduces_to_ellipsoid() {
        let v = superellipsoid_volume(3.0, 2.0, 1.5, 2.0);
        assert!((v - 4.0 / 3.0 * std::f64::consts::PI * 9.0).abs() < 1e-9);
        let a = superellipse_area(3.0, 2.0, 2.0);
        assert!((a - std::f64::consts::PI * 6.0).abs() < 1e-12);
    }

    #[test]
    fn zero_std_zero_noise_is_deterministic_limit() {
        let mut p = ordubad();
        p.length_std = 0.0;
        p.width_std = 0.0;
        p.thickness_std = 0.0;
        let f = sample_fruit(&p, 9, 0.0).unwrap();
        assert_eq!(f.length, p.length_mean);
        let expect = p.density
            * superellipsoid_volume(p.length_mean / 2.0, p.width_mean / 2.0, p.thickness_mean / 2.0, p.squareness);
        assert_eq!(f.mass, expect);
    }

    #[test]
    fn same_seed_same_fruit() {
        let p = ordubad();
        assert_eq!(sample_fruit(&p, 77, 0.02).unwrap(), sample_fruit(&p, 77, 0.02).unwrap());
        assert_ne!(sample_fruit(&p, 77, 0.02).unwrap(), sample_fruit(&p, 78, 0.02).unwrap());
    }

    #[test]
    fn degenerate_params_fail_after_redraws() {
        let mut p = ordubad();
        p.length_mean = -1000.0;
        p.length_std = 1.0;
        assert!(matches!(sample_fruit(&p, 1, 0.0), Err(Error::DegenerateDraw(_))));
    }

    #[test]
    fn circle_area_matches_analytic() {
        let cfg = RenderConfig {
            mm_per_pixel: 0.1,
            image_width: 260,
            image_height: 260,
            noise_std: 0.0,
            blur_radius: 0,
            ..RenderConfig::default()
        };
        // r = 12 mm = 120 px
        let mask = rasterize_superellipse(12.0, 12.0, 2.0, &cfg).unwrap();
        let count = mask.iter().filter(|&&m| m).count() as f64;
        let ratio = count / (std::f64::consts::PI * 120.0 * 120.0);
        assert!((0.99..=1.01).contains(&ratio), "{ratio}");
    }

    #[test]
    fn horizontal_extent_matches_length() {
        let p = ordubad();
        let fruit = sample_fruit(&p, 3, 0.0).unwrap();
        let cfg = RenderConfig::default().noise_free();
        let views = render_views(&fruit, &cfg).unwrap();
        let img = &views[0];
        let cols: Vec<usize> = (0..img.width())
            .filter(|&x| (0..img.height()).any(|y| img.get(x, y) == cfg.foreground_level))
            .collect();
        let extent = (cols.last().unwrap() - cols[0] + 1) as f64;
        let expect = (fruit.length / cfg.mm_per_pixel).round();
        assert!((extent - expect).abs() <= 1.0, "{extent} vs {expect}");
    }

    #[test]
    fn noise_free_render_is_two_level() {
        let fruit = sample_fruit(&ordubad(), 5, 0.02).unwrap();
        let cfg = RenderConfig::default().noise_free();
        for v in render_views(&fruit, &cfg).unwrap() {
            let mut levels: Vec<u8> = v.pixels().to_vec();
            levels.sort_unstable();
            levels.dedup();
            assert_eq!(levels, vec![cfg.background_level, cfg.foreground_level]);
        }
    }

    #[test]
    fn oversized_fruit_is_rejected() {
        let cfg = RenderConfig {
            image_width: 100,
            image_height: 100,
            ..RenderConfig::default()
        };
        let fruit = sample_fruit(&ordubad(), 1, 0.0).unwrap();
        assert!(matches!(render_views(&fruit, &cfg), Err(Error::OutOfFrame { .. })));
    }

    #[test]
    fn close_levels_rejected() {
        let cfg = RenderConfig {
            foreground_level: 100,
            background_level: 60,
            ..RenderConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
