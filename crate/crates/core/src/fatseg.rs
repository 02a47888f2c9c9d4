//! Polar sweep segmentation of subcutaneous fat and the visceral to
//! subcutaneous fat ratio.
//!
//! A ray is cast from the sweep center every `granular_degree` degrees. On
//! each ray [`find_last_point`] locates the inner edge of the outermost fat
//! band and the outermost fat pixel; the band contributes the annular sector
//! `0.5 * (d1 - d2) * dθ`, with `d1`, `d2` the squared radii of the outer and
//! inner edge. Summing over the full turn gives the subcutaneous area. Total
//! fat is a plain pixel count and visceral fat is what is left:
//!
//! ```text
//! ratio = total / subcut - 1 = (total - subcut) / subcut
//! ```
//!
//! Volumes are handled as stacks of slices: totals and subcutaneous areas are
//! summed over z before dividing.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{open_mask, threshold_fat, MorphologyConfig, ThresholdConfig};
use crate::raycast::{find_last_point, line_iter, PixelPoint, RayHit};
use crate::volume::{BinaryMask, HuVolume, MaskView, SliceSelector, FOREGROUND};

pub const DEFAULT_GRANULAR_DEGREE: f64 = 0.05;
/// Visceral/subcutaneous ratio at or above which a case is labelled Crohn's.
pub const RATIO_THRESHOLD: f64 = 0.63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterMode {
    /// `(width / 2, height / 2)`, rounded down.
    #[default]
    ImageCenter,
    Explicit(PixelPoint),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RayLength {
    /// Rays long enough to leave the image in every direction, corners included.
    #[default]
    Diagonal,
    /// End point `center + (cos θ · width/2, sin θ · height/2)`, which can
    /// fall short of the corners.
    HalfExtent,
}

/// Unit of the angular step in the sector-area term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AngleUnit {
    #[default]
    Radians,
    /// Multiplies by the step in degrees, inflating areas by 180/π. For
    /// auditing against the literal formula only.
    Degrees,
}

/// Where on a ray the fat boundary is placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryModel {
    /// Halfway between the hit pixel and the next pixel on the ray, i.e. on
    /// the pixel edge the ray crosses.
    #[default]
    HalfStep,
    /// At the center of the hit pixel. Underestimates each radius by half a
    /// step on average.
    PixelCenter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub granular_degree: f64,
    pub center: CenterMode,
    pub ray_length: RayLength,
    pub angle_unit: AngleUnit,
    pub boundary: BoundaryModel,
    /// Rasterized masks only: one 3x3 closing to fill radial gaps.
    pub close_gaps: bool,
    /// Worker threads; 1 runs on the calling thread.
    pub threads: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            granular_degree: DEFAULT_GRANULAR_DEGREE,
            center: CenterMode::default(),
            ray_length: RayLength::default(),
            angle_unit: AngleUnit::default(),
            boundary: BoundaryModel::default(),
            close_gaps: false,
            threads: 1,
        }
    }
}

impl SweepConfig {
    pub fn with_step(granular_degree: f64) -> Self {
        Self { granular_degree, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.granular_degree;
        if !(g.is_finite() && g > 0.0 && g <= 90.0) {
            return Err(Error::InvalidConfig(format!(
                "granular degree must be in (0, 90], got {g}"
            )));
        }
        if self.threads == 0 {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Rays per sweep: angles `k · step` for `k = 0..n` cover `[0, 360)`.
    pub fn ray_count(&self) -> usize {
        ((360.0 / self.granular_degree) - 1e-9).ceil() as usize
    }

    fn step_factor(&self) -> f64 {
        match self.angle_unit {
            AngleUnit::Radians => self.granular_degree * PI / 180.0,
            AngleUnit::Degrees => self.granular_degree,
        }
    }

    fn center_for(&self, width: usize, height: usize) -> Result<PixelPoint> {
        let c = match self.center {
            CenterMode::ImageCenter => PixelPoint::new((width / 2) as i64, (height / 2) as i64),
            CenterMode::Explicit(p) => p,
        };
        if c.x < 0 || c.y < 0 || c.x as usize >= width || c.y as usize >= height {
            return Err(Error::DegenerateCenter { x: c.x, y: c.y, width, height });
        }
        Ok(c)
    }

    fn ray_end(&self, center: PixelPoint, theta_deg: f64, width: usize, height: usize) -> PixelPoint {
        let t = theta_deg * PI / 180.0;
        let (rx, ry) = match self.ray_length {
            RayLength::Diagonal => {
                let l = (width as f64).hypot(height as f64).ceil();
                (l, l)
            }
            RayLength::HalfExtent => (width as f64 / 2.0, height as f64 / 2.0),
        };
        PixelPoint::new(
            center.x + (t.cos() * rx).round() as i64,
            center.y + (t.sin() * ry).round() as i64,
        )
    }
}

/// One ray of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub theta_deg: f64,
    pub end: PixelPoint,
    pub hit: RayHit,
    /// Squared radius of the outer boundary; present when the ray contributes.
    pub d1: Option<f64>,
    /// Squared radius of the inner boundary.
    pub d2: Option<f64>,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTrace {
    pub center: PixelPoint,
    pub records: Vec<SweepRecord>,
}

impl SweepTrace {
    pub fn contributing_rays(&self) -> usize {
        self.records.iter().filter(|r| r.d1.is_some()).count()
    }

    /// Sum of contributions in ascending-θ order.
    pub fn area(&self) -> f64 {
        self.records.iter().map(|r| r.contribution).sum()
    }
}

/// Number of fat pixels.
pub fn total_fat_area(m: &MaskView<'_>) -> u64 {
    m.count_foreground()
}

fn boundary_radius2(
    center: PixelPoint,
    hit: PixelPoint,
    next: Option<PixelPoint>,
    model: BoundaryModel,
) -> f64 {
    let (px, py) = match (model, next) {
        (BoundaryModel::HalfStep, Some(n)) => {
            ((hit.x + n.x) as f64 / 2.0, (hit.y + n.y) as f64 / 2.0)
        }
        _ => (hit.x as f64, hit.y as f64),
    };
    let (dx, dy) = (px - center.x as f64, py - center.y as f64);
    dx * dx + dy * dy
}

fn cast_ray(img: &MaskView<'_>, cfg: &SweepConfig, center: PixelPoint, k: usize) -> SweepRecord {
    let theta_deg = k as f64 * cfg.granular_degree;
    let end = cfg.ray_end(center, theta_deg, img.width, img.height);
    let hit = find_last_point(img, center, end);
    let (d1, d2, contribution) = match hit.both() {
        Some((inner, outer)) => {
            let d1 = boundary_radius2(center, outer, hit.outer_next, cfg.boundary);
            let d2 = boundary_radius2(center, inner, hit.inner_next, cfg.boundary);
            (Some(d1), Some(d2), 0.5 * (d1 - d2) * cfg.step_factor())
        }
        None => (None, None, 0.0),
    };
    SweepRecord { theta_deg, end, hit, d1, d2, contribution }
}

fn sweep(img: &MaskView<'_>, cfg: &SweepConfig, parallel: bool) -> Result<SweepTrace> {
    let center = cfg.center_for(img.width, img.height)?;
    let n = cfg.ray_count();
    let records = if parallel {
        (0..n).into_par_iter().map(|k| cast_ray(img, cfg, center, k)).collect()
    } else {
        (0..n).map(|k| cast_ray(img, cfg, center, k)).collect()
    };
    Ok(SweepTrace { center, records })
}

/// Runs `f` on a dedicated pool when more than one thread is requested.
/// The flag passed to `f` says whether parallel iterators may be used.
fn with_threads<T: Send>(threads: usize, f: impl FnOnce(bool) -> Result<T> + Send) -> Result<T> {
    if threads <= 1 {
        return f(false);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| f(true))
}

/// Subcutaneous fat area of one slice by polar integration, with the
/// per-ray trace. The sum runs in ascending θ regardless of threading.
pub fn compute_subcut_area(m: &MaskView<'_>, cfg: &SweepConfig) -> Result<(f64, SweepTrace)> {
    cfg.validate()?;
    let trace = with_threads(cfg.threads, |par| sweep(m, cfg, par))?;
    Ok((trace.area(), trace))
}

/// Paints every traced ray from just past its inner hit up to its outer hit.
pub fn rasterize_trace(width: usize, height: usize, trace: &SweepTrace) -> Vec<u8> {
    let mut out = vec![0u8; width * height];
    for rec in &trace.records {
        let Some((inner, outer)) = rec.hit.both() else { continue };
        let mut painting = false;
        for p in line_iter(trace.center, rec.end) {
            if painting && p.x >= 0 && p.y >= 0 && (p.x as usize) < width && (p.y as usize) < height {
                out[p.x as usize + width * p.y as usize] = FOREGROUND;
            }
            if p == outer {
                break;
            }
            if p == inner {
                painting = true;
            }
        }
    }
    out
}

/// Subcutaneous fat mask for every slice of `m`.
pub fn subcut_mask(m: &BinaryMask, cfg: &SweepConfig) -> Result<BinaryMask> {
    Ok(segment_subcut(m, cfg)?.0)
}

/// Subcutaneous fat mask plus the sweep trace of each slice.
pub fn segment_subcut(m: &BinaryMask, cfg: &SweepConfig) -> Result<(BinaryMask, Vec<SweepTrace>)> {
    cfg.validate()?;
    let shape = m.shape();
    let traces = with_threads(cfg.threads, |par| {
        (0..shape.nz).map(|z| sweep(&m.view(z), cfg, par)).collect::<Result<Vec<_>>>()
    })?;
    let slices = traces.iter().map(|t| rasterize_trace(shape.nx, shape.ny, t)).collect();
    let out = BinaryMask::from_slices(shape.nx, shape.ny, m.spacing(), slices);
    let out = if cfg.close_gaps { crate::preprocess::close_mask(&out) } else { out };
    Ok((out, traces))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub threshold: ThresholdConfig,
    pub morphology: MorphologyConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceMeasurement {
    pub z: usize,
    pub total_fat: u64,
    pub subcut: f64,
    pub contributing_rays: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FatMeasurement {
    /// Fat pixels (one slice) or voxels (a stack).
    pub total_fat: u64,
    /// Subcutaneous area (or volume) from the polar integral, in pixel units.
    pub subcut: f64,
    pub visceral: f64,
    pub ratio: f64,
    /// Total fat in mm² for one slice, mm³ for a stack.
    pub physical_total_mm: f64,
    pub physical_subcut_mm: f64,
    pub slices: Vec<SliceMeasurement>,
    pub warnings: Vec<String>,
}

impl FatMeasurement {
    pub fn label(&self) -> Result<Label> {
        classify_by_ratio(self.ratio)
    }
}

fn measure_slice(view: &MaskView<'_>, z: usize, cfg: &SweepConfig, par: bool) -> Result<SliceMeasurement> {
    let trace = sweep(view, cfg, par)?;
    let subcut = trace.area();
    let contributing_rays = trace.contributing_rays();
    if contributing_rays == 0 || subcut <= 0.0 {
        return Err(Error::NoSubcutaneousFat);
    }
    Ok(SliceMeasurement { z, total_fat: total_fat_area(view), subcut, contributing_rays })
}

/// Ratio of an already thresholded mask over the selected slices. Slices
/// without subcutaneous fat are skipped with a warning.
pub fn measure_mask(m: &BinaryMask, sel: SliceSelector, cfg: &SweepConfig) -> Result<FatMeasurement> {
    let range = sel.resolve(m.shape().nz)?;
    measure_range(m, range, 0, cfg)
}

/// `z_offset` is added to reported slice indices.
fn measure_range(
    m: &BinaryMask,
    range: std::ops::RangeInclusive<usize>,
    z_offset: usize,
    cfg: &SweepConfig,
) -> Result<FatMeasurement> {
    cfg.validate()?;
    let per_slice = with_threads(cfg.threads, |par| {
        Ok(range
            .clone()
            .map(|z| (z + z_offset, measure_slice(&m.view(z), z + z_offset, cfg, par)))
            .collect::<Vec<_>>())
    })?;

    let mut slices = Vec::new();
    let mut warnings = Vec::new();
    for (z, r) in per_slice {
        match r {
            Ok(s) => slices.push(s),
            Err(Error::NoSubcutaneousFat) => {
                warnings.push(format!("slice {z}: no subcutaneous fat, skipped"))
            }
            Err(e) => return Err(e),
        }
    }
    if slices.is_empty() {
        return Err(Error::NoSubcutaneousFat);
    }

    let total_fat: u64 = slices.iter().map(|s| s.total_fat).sum();
    let subcut: f64 = slices.iter().map(|s| s.subcut).sum();
    let sp = m.spacing();
    let unit = if range.start() == range.end() { sp.pixel_area_mm2() } else { sp.voxel_volume_mm3() };
    Ok(FatMeasurement {
        total_fat,
        subcut,
        visceral: total_fat as f64 - subcut,
        ratio: total_fat as f64 / subcut - 1.0,
        physical_total_mm: total_fat as f64 * unit,
        physical_subcut_mm: subcut * unit,
        slices,
        warnings,
    })
}

/// Threshold and opening, restricted to the selected slices.
pub fn fat_mask(vol: &HuVolume, sel: SliceSelector, cfg: &PipelineConfig) -> Result<BinaryMask> {
    let sub = vol.extract_slices(sel)?;
    let mask = threshold_fat(&sub, cfg.threshold)?;
    Ok(open_mask(&mask, cfg.morphology))
}

/// Ratio for a single-slice volume.
pub fn fat_ratio_2d(slice: &HuVolume, cfg: &PipelineConfig) -> Result<FatMeasurement> {
    if slice.shape().nz != 1 {
        return Err(Error::InvalidInput(format!(
            "expected a single slice, got {} slices",
            slice.shape().nz
        )));
    }
    fat_ratio_3d(slice, SliceSelector::All, cfg)
}

/// Ratio over a stack: slice totals and subcutaneous areas are summed in
/// ascending z before dividing.
pub fn fat_ratio_3d(vol: &HuVolume, sel: SliceSelector, cfg: &PipelineConfig) -> Result<FatMeasurement> {
    let offset = *sel.resolve(vol.shape().nz)?.start();
    let mask = fat_mask(vol, sel, cfg)?;
    measure_range(&mask, 0..=mask.shape().nz - 1, offset, &cfg.sweep)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "CD")]
    Crohns,
    #[serde(rename = "ITB")]
    IntestinalTb,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Crohns => "CD",
            Label::IntestinalTb => "ITB",
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Crohns => Label::IntestinalTb,
            Label::IntestinalTb => Label::Crohns,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CD" => Ok(Label::Crohns),
            "ITB" => Ok(Label::IntestinalTb),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

/// CD when the ratio reaches the threshold, ITB below it.
pub fn classify_by_ratio(ratio: f64) -> Result<Label> {
    if !ratio.is_finite() {
        return Err(Error::NonFiniteRatio(ratio));
    }
    Ok(if ratio >= RATIO_THRESHOLD { Label::Crohns } else { Label::IntestinalTb })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Shape, Spacing};

    fn disk_mask(n: usize, rings: &[(f64, f64)]) -> BinaryMask {
        let c = (n / 2) as f64;
        let mut m = BinaryMask::zeros(Shape::new(n, n, 1).unwrap(), Spacing::default());
        for y in 0..n {
            for x in 0..n {
                let d2 = (x as f64 - c).powi(2) + (y as f64 - c).powi(2);
                let on = rings.iter().any(|&(r, big_r)| d2 > r * r && d2 <= big_r * big_r);
                m.set(x, y, 0, on);
            }
        }
        m
    }

    #[test]
    fn ray_count_is_half_open() {
        assert_eq!(SweepConfig::with_step(0.05).ray_count(), 7200);
        assert_eq!(SweepConfig::with_step(1.0).ray_count(), 360);
        assert_eq!(SweepConfig::with_step(0.7).ray_count(), 515);
        assert_eq!(SweepConfig::with_step(90.0).ray_count(), 4);
    }

    #[test]
    fn invalid_steps() {
        for g in [0.0, -1.0, 91.0, f64::NAN, f64::INFINITY] {
            assert!(SweepConfig::with_step(g).validate().is_err(), "{g}");
        }
    }

    #[test]
    fn all_black_has_zero_area() {
        let m = disk_mask(64, &[]);
        let (area, trace) = compute_subcut_area(&m.view(0), &SweepConfig::with_step(1.0)).unwrap();
        assert_eq!(area, 0.0);
        assert_eq!(trace.contributing_rays(), 0);
        assert_eq!(subcut_mask(&m, &SweepConfig::with_step(1.0)).unwrap().count_foreground(), 0);
    }

    #[test]
    fn explicit_center_outside_is_degenerate() {
        let m = disk_mask(32, &[]);
        let cfg = SweepConfig {
            center: CenterMode::Explicit(PixelPoint::new(40, 3)),
            ..SweepConfig::default()
        };
        assert!(matches!(
            compute_subcut_area(&m.view(0), &cfg),
            Err(Error::DegenerateCenter { .. })
        ));
    }

    #[test]
    fn annulus_area_close_to_analytic() {
        let m = disk_mask(256, &[(30.0, 60.0)]);
        let (area, trace) = compute_subcut_area(&m.view(0), &SweepConfig::with_step(0.25)).unwrap();
        let exact = PI * (60.0f64.powi(2) - 30.0f64.powi(2));
        assert!((area / exact - 1.0).abs() < 0.01, "{area} vs {exact}");
        assert_eq!(trace.records.len(), 1440);
        for r in &trace.records {
            if let (Some(d1), Some(d2)) = (r.d1, r.d2) {
                assert!(d1 >= d2 && d2 >= 0.0);
            }
        }
    }

    #[test]
    fn degrees_mode_scales_by_180_over_pi() {
        let m = disk_mask(128, &[(20.0, 40.0)]);
        let rad = compute_subcut_area(&m.view(0), &SweepConfig::with_step(1.0)).unwrap().0;
        let cfg = SweepConfig { angle_unit: AngleUnit::Degrees, ..SweepConfig::with_step(1.0) };
        let deg = compute_subcut_area(&m.view(0), &cfg).unwrap().0;
        assert!((deg / rad - 180.0 / PI).abs() < 1e-9);
    }

    #[test]
    fn half_extent_misses_corner_fat() {
        // fat only in the corners of the image
        let n = 100usize;
        let mut m = BinaryMask::zeros(Shape::new(n, n, 1).unwrap(), Spacing::default());
        for y in 0..n {
            for x in 0..n {
                let corner = (x < 8 || x >= n - 8) && (y < 8 || y >= n - 8);
                m.set(x, y, 0, corner && (x % 7 != 0));
            }
        }
        let diag = compute_subcut_area(&m.view(0), &SweepConfig::with_step(1.0)).unwrap().0;
        let cfg = SweepConfig { ray_length: RayLength::HalfExtent, ..SweepConfig::with_step(1.0) };
        let half = compute_subcut_area(&m.view(0), &cfg).unwrap().0;
        assert!(diag > 0.0);
        assert_eq!(half, 0.0);
    }

    #[test]
    fn parallel_sweep_is_bit_identical() {
        let m = disk_mask(200, &[(10.0, 20.0), (40.0, 80.0)]);
        let seq = compute_subcut_area(&m.view(0), &SweepConfig::with_step(0.1)).unwrap();
        for threads in [2, 4, 8] {
            let cfg = SweepConfig { threads, ..SweepConfig::with_step(0.1) };
            let par = compute_subcut_area(&m.view(0), &cfg).unwrap();
            assert_eq!(seq.0.to_bits(), par.0.to_bits());
            assert_eq!(seq.1, par.1);
        }
    }

    #[test]
    fn mask_without_fat_is_an_error() {
        let m = disk_mask(40, &[]);
        assert!(matches!(
            measure_mask(&m, SliceSelector::All, &SweepConfig::default()),
            Err(Error::NoSubcutaneousFat)
        ));
    }

    #[test]
    fn stack_skips_empty_slices_with_warning() {
        let a = disk_mask(128, &[(20.0, 40.0)]);
        let empty = disk_mask(128, &[]);
        let data = [a.data(), empty.data()].concat();
        let stack = BinaryMask::new(Shape::new(128, 128, 2).unwrap(), Spacing::default(), data).unwrap();
        let cfg = SweepConfig::with_step(0.5);
        let m = measure_mask(&stack, SliceSelector::All, &cfg).unwrap();
        let single = measure_mask(&a, SliceSelector::All, &cfg).unwrap();
        assert_eq!(m.slices.len(), 1);
        assert_eq!(m.warnings.len(), 1);
        assert!(m.warnings[0].starts_with("slice 1:"));
        assert_eq!(m.ratio, single.ratio);
    }

    #[test]
    fn ratio_identity_holds_exactly() {
        let m = disk_mask(160, &[(0.0, 10.0), (30.0, 60.0)]);
        let r = measure_mask(&m, SliceSelector::All, &SweepConfig::with_step(0.5)).unwrap();
        assert_eq!(r.ratio, r.total_fat as f64 / r.subcut - 1.0);
        assert_eq!(r.visceral, r.total_fat as f64 - r.subcut);
    }

    #[test]
    fn threshold_rule() {
        assert_eq!(classify_by_ratio(0.70).unwrap(), Label::Crohns);
        assert_eq!(classify_by_ratio(0.62).unwrap(), Label::IntestinalTb);
        assert_eq!(classify_by_ratio(0.63).unwrap(), Label::Crohns);
        assert!(matches!(classify_by_ratio(f64::NAN), Err(Error::NonFiniteRatio(_))));
        assert!(classify_by_ratio(f64::INFINITY).is_err());
    }

    #[test]
    fn label_parsing() {
        assert_eq!("cd".parse::<Label>().unwrap(), Label::Crohns);
        assert_eq!(" ITB ".parse::<Label>().unwrap(), Label::IntestinalTb);
        assert!(matches!("TB".parse::<Label>(), Err(Error::UnknownLabel(_))));
    }
}
