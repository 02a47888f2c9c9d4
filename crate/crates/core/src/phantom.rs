//! Synthetic abdominal CT phantoms with known fat geometry.
//!
//! Cross-section, from the outside in: air, a skin layer, muscle, an
//! elliptical subcutaneous fat ring, more muscle, and circular visceral fat
//! blobs inside the ring. Every pixel takes the tissue of the innermost
//! region containing its center, so region counts are exact and disjoint.
//! Every slice of a phantom has the same geometry.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::ThresholdConfig;
use crate::raycast::{line_iter, PixelPoint};
use crate::volume::{BinaryMask, HuVolume, Shape, Spacing};

use std::f64::consts::PI;

/// Axis-aligned ellipse centered on the phantom center; `a` along x, `b` along y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub a: f64,
    pub b: f64,
}

impl Ellipse {
    pub fn circle(r: f64) -> Self {
        Self { a: r, b: r }
    }

    pub fn area(&self) -> f64 {
        PI * self.a * self.b
    }

    fn level(&self, dx: f64, dy: f64) -> f64 {
        (dx / self.a).powi(2) + (dy / self.b).powi(2)
    }

    fn shrink(&self, t: f64) -> Ellipse {
        Ellipse { a: self.a - t, b: self.b - t }
    }
}

/// Visceral fat disk; center given relative to the phantom center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub dx: f64,
    pub dy: f64,
    pub r: f64,
}

/// One-pixel line at fat HU, drawn outside the body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtifactLine {
    pub start: PixelPoint,
    pub end: PixelPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub n_slices: usize,
    pub spacing: Spacing,
    pub body: Ellipse,
    pub skin_thickness: f64,
    pub ring_inner: Ellipse,
    pub ring_outer: Ellipse,
    pub blobs: Vec<Blob>,
    pub fat_hu: i16,
    pub muscle_hu: i16,
    pub air_hu: i16,
    pub skin_hu: i16,
    pub noise_sigma: f64,
    pub seed: u64,
    pub artifact_lines: Vec<ArtifactLine>,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self::annulus(512, 512, 50.0, 100.0)
    }
}

impl PhantomSpec {
    /// Circular ring `r_inner < d <= r_outer` inside a body four pixels
    /// larger than the ring, no blobs.
    pub fn annulus(width: usize, height: usize, r_inner: f64, r_outer: f64) -> Self {
        Self {
            width,
            height,
            n_slices: 1,
            spacing: Spacing::default(),
            body: Ellipse::circle(r_outer + 4.0),
            skin_thickness: 2.0,
            ring_inner: Ellipse::circle(r_inner),
            ring_outer: Ellipse::circle(r_outer),
            blobs: Vec::new(),
            fat_hu: -100,
            muscle_hu: 40,
            air_hu: -1000,
            skin_hu: 20,
            noise_sigma: 0.0,
            seed: 0,
            artifact_lines: Vec::new(),
        }
    }

    pub fn with_blob(mut self, dx: f64, dy: f64, r: f64) -> Self {
        self.blobs.push(Blob { dx, dy, r });
        self
    }

    pub fn with_slices(mut self, n: usize) -> Self {
        self.n_slices = n;
        self
    }

    /// Adds a horizontal and a vertical 1 px line between the body and the
    /// image border, like a scanner table edge.
    pub fn with_table_artifacts(mut self) -> Self {
        let (cx, cy) = self.center();
        let below = cy + self.body.b.ceil() as i64 + 6;
        let right = cx + self.body.a.ceil() as i64 + 6;
        let (w, h) = (self.width as i64, self.height as i64);
        if below < h {
            self.artifact_lines.push(ArtifactLine {
                start: PixelPoint::new(2, below),
                end: PixelPoint::new(w - 3, below),
            });
        }
        if right < w {
            self.artifact_lines.push(ArtifactLine {
                start: PixelPoint::new(right, 2),
                end: PixelPoint::new(right, (cy - 10).max(2)),
            });
        }
        self
    }

    pub fn center(&self) -> (i64, i64) {
        ((self.width / 2) as i64, (self.height / 2) as i64)
    }

    pub fn analytic_subcut(&self) -> f64 {
        self.ring_outer.area() - self.ring_inner.area()
    }

    pub fn analytic_visceral(&self) -> f64 {
        self.blobs.iter().map(|b| PI * b.r * b.r).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGeometry(m));
        if self.width < 8 || self.height < 8 || self.n_slices == 0 {
            return bad(format!(
                "image must be at least 8x8x1, got {}x{}x{}",
                self.width, self.height, self.n_slices
            ));
        }
        if self.width > i16::MAX as usize || self.height > i16::MAX as usize {
            return bad("image too large".into());
        }
        for (name, e) in [("body", self.body), ("ring_inner", self.ring_inner), ("ring_outer", self.ring_outer)] {
            if !(e.a.is_finite() && e.b.is_finite() && e.a > 0.0 && e.b > 0.0) {
                return bad(format!("{name} semi-axes must be positive, got {e:?}"));
            }
        }
        if !(self.skin_thickness.is_finite() && self.skin_thickness >= 0.0) {
            return bad(format!("skin thickness {}", self.skin_thickness));
        }
        let (cx, cy) = self.center();
        let room_x = (cx.min(self.width as i64 - 1 - cx)) as f64;
        let room_y = (cy.min(self.height as i64 - 1 - cy)) as f64;
        if self.body.a >= room_x || self.body.b >= room_y {
            return bad(format!("body {:?} does not fit inside the image", self.body));
        }
        let inside = self.body.shrink(self.skin_thickness);
        if self.ring_outer.a > inside.a || self.ring_outer.b > inside.b {
            return bad("subcutaneous ring must lie inside the body, under the skin".into());
        }
        if self.ring_inner.a >= self.ring_outer.a || self.ring_inner.b >= self.ring_outer.b {
            return bad("ring inner boundary must be smaller than its outer boundary".into());
        }
        let hole = self.ring_inner.a.min(self.ring_inner.b);
        for (i, b) in self.blobs.iter().enumerate() {
            if !(b.r.is_finite() && b.r > 0.0 && b.dx.is_finite() && b.dy.is_finite()) {
                return bad(format!("blob {i} is degenerate: {b:?}"));
            }
            if b.dx.hypot(b.dy) + b.r >= hole {
                return bad(format!(
                    "blob {i} (r = {:.2}) is not strictly inside the ring's inner boundary (r = {hole})",
                    b.r
                ));
            }
            for (j, c) in self.blobs.iter().enumerate().skip(i + 1) {
                if (b.dx - c.dx).hypot(b.dy - c.dy) <= b.r + c.r {
                    return bad(format!("blobs {i} and {j} overlap"));
                }
            }
        }
        let window = ThresholdConfig::default();
        if !window.contains(self.fat_hu) {
            return bad(format!("fat HU {} is outside the fat window", self.fat_hu));
        }
        for (name, hu) in [("muscle", self.muscle_hu), ("air", self.air_hu), ("skin", self.skin_hu)] {
            if window.contains(hu) {
                return bad(format!("{name} HU {hu} falls inside the fat window"));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise sigma {}", self.noise_sigma));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Air,
    Skin,
    Muscle,
    SubcutFat,
    VisceralFat,
    Artifact,
}

/// Pixel counts of one slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RegionCounts {
    pub air: u64,
    pub skin: u64,
    pub muscle: u64,
    pub subcut: u64,
    pub visceral: u64,
    pub artifact: u64,
}

impl RegionCounts {
    pub fn total(&self) -> u64 {
        self.air + self.skin + self.muscle + self.subcut + self.visceral + self.artifact
    }

    /// Pixels inside the fat window.
    pub fn fat(&self) -> u64 {
        self.subcut + self.visceral + self.artifact
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomTruth {
    pub analytic_subcut: f64,
    pub analytic_visceral: f64,
    pub analytic_total_fat: f64,
    /// Analytic visceral / subcutaneous area.
    pub true_ratio: f64,
    /// Per slice.
    pub counts: RegionCounts,
    /// Rasterized visceral / subcutaneous pixel counts.
    pub rasterized_ratio: f64,
    pub n_slices: usize,
    /// Fat-window voxels over all slices, noise-free.
    pub fat_voxels_total: u64,
    pub spec: PhantomSpec,
}

/// Region of every pixel of one slice, x-fastest.
pub fn render_regions(spec: &PhantomSpec) -> Result<Vec<Region>> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let (cx, cy) = spec.center();
    let under_skin = spec.body.shrink(spec.skin_thickness);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = ((x as i64 - cx) as f64, (y as i64 - cy) as f64);
            let region = if spec.blobs.iter().any(|b| (dx - b.dx).powi(2) + (dy - b.dy).powi(2) <= b.r * b.r) {
                Region::VisceralFat
            } else if spec.ring_inner.level(dx, dy) <= 1.0 {
                Region::Muscle
            } else if spec.ring_outer.level(dx, dy) <= 1.0 {
                Region::SubcutFat
            } else if under_skin.a > 0.0 && under_skin.b > 0.0 && under_skin.level(dx, dy) <= 1.0 {
                Region::Muscle
            } else if spec.body.level(dx, dy) <= 1.0 {
                Region::Skin
            } else {
                Region::Air
            };
            out.push(region);
        }
    }
    for line in &spec.artifact_lines {
        for p in line_iter(line.start, line.end) {
            if p.x < 0 || p.y < 0 || p.x as usize >= w || p.y as usize >= h {
                continue;
            }
            let i = p.x as usize + w * p.y as usize;
            match out[i] {
                Region::Air | Region::Artifact => out[i] = Region::Artifact,
                other => {
                    return Err(Error::InvalidGeometry(format!(
                        "artifact pixel ({}, {}) falls on {other:?}, not air",
                        p.x, p.y
                    )))
                }
            }
        }
    }
    Ok(out)
}

/// All-slice mask of the given regions.
pub fn region_mask(spec: &PhantomSpec, regions: &[Region]) -> Result<BinaryMask> {
    let labels = render_regions(spec)?;
    let slice: Vec<u8> = labels.iter().map(|r| if regions.contains(r) { 255 } else { 0 }).collect();
    let shape = Shape::new(spec.width, spec.height, spec.n_slices)?;
    BinaryMask::new(shape, spec.spacing, slice.repeat(spec.n_slices))
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<(HuVolume, PhantomTruth)> {
    let labels = render_regions(spec)?;
    let mut counts = RegionCounts::default();
    let slice: Vec<i16> = labels
        .iter()
        .map(|r| match r {
            Region::Air => {
                counts.air += 1;
                spec.air_hu
            }
            Region::Skin => {
                counts.skin += 1;
                spec.skin_hu
            }
            Region::Muscle => {
                counts.muscle += 1;
                spec.muscle_hu
            }
            Region::SubcutFat => {
                counts.subcut += 1;
                spec.fat_hu
            }
            Region::VisceralFat => {
                counts.visceral += 1;
                spec.fat_hu
            }
            Region::Artifact => {
                counts.artifact += 1;
                spec.fat_hu
            }
        })
        .collect();

    let mut data = slice.repeat(spec.n_slices);
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let noise = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::InvalidGeometry(format!("noise: {e}")))?;
        for v in &mut data {
            let n = (*v as f64 + noise.sample(&mut rng)).round();
            *v = n.clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        }
    }
    let shape = Shape::new(spec.width, spec.height, spec.n_slices)?;
    let vol = HuVolume::new(shape, spec.spacing, data)?;

    let subcut = spec.analytic_subcut();
    let visceral = spec.analytic_visceral();
    let truth = PhantomTruth {
        analytic_subcut: subcut,
        analytic_visceral: visceral,
        analytic_total_fat: subcut + visceral,
        true_ratio: visceral / subcut,
        counts,
        rasterized_ratio: counts.visceral as f64 / counts.subcut as f64,
        n_slices: spec.n_slices,
        fat_voxels_total: counts.fat() * spec.n_slices as u64,
        spec: spec.clone(),
    };
    Ok((vol, truth))
}

/// Clearance kept between a near-threshold blob and the ring.
const BLOB_GAP: f64 = 4.0;

/// Replaces the template's blobs with one centered disk whose area makes
/// the analytic ratio equal `target_ratio`. A single disk is the largest
/// visceral area that fits in the ring's hole, so anything it cannot reach
/// is infeasible.
pub fn near_threshold_phantom(target_ratio: f64, template: &PhantomSpec) -> Result<(HuVolume, PhantomTruth)> {
    if !(target_ratio.is_finite() && (0.0..2.0).contains(&target_ratio)) {
        return Err(Error::InvalidConfig(format!("target ratio {target_ratio} outside [0, 2)")));
    }
    let mut spec = template.clone();
    spec.blobs.clear();
    spec.validate()?;
    if target_ratio > 0.0 {
        let needed = target_ratio * spec.analytic_subcut();
        let room = spec.ring_inner.a.min(spec.ring_inner.b) - BLOB_GAP;
        let mut r = (needed / PI).sqrt();
        // keep the analytic ratio from rounding to just below the target
        while PI * r * r / spec.analytic_subcut() < target_ratio {
            r = r.next_up();
        }
        if r > room {
            return Err(Error::Infeasible(format!(
                "visceral area {needed:.1} px needs a blob of radius {r:.1}, only {room:.1} fits"
            )));
        }
        spec.blobs.push(Blob { dx: 0.0, dy: 0.0, r });
    }
    generate_phantom(&spec)
}
