//! In-memory CT volumes, binary masks and axial slice selection.
//!
//! Voxels are stored x-fastest (`x + nx * (y + ny * z)`), the same order
//! NIfTI uses on disk, so a z-slice is a contiguous run of `nx * ny` values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid dimensions `(nx, ny, nz)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Shape {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidInput(format!(
                "shape ({nx}, {ny}, {nz}) has an empty dimension"
            )));
        }
        Ok(Self { nx, ny, nz })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn to_vec(self) -> Vec<usize> {
        vec![self.nx, self.ny, self.nz]
    }
}

/// Millimetres per voxel along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl Spacing {
    pub fn new(sx: f64, sy: f64, sz: f64) -> Result<Self> {
        for (axis, v) in [("x", sx), ("y", sy), ("z", sz)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "spacing along {axis} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(Self { sx, sy, sz })
    }

    pub fn pixel_area_mm2(&self) -> f64 {
        self.sx * self.sy
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.sx * self.sy * self.sz
    }
}

impl Default for Spacing {
    fn default() -> Self {
        Self { sx: 1.0, sy: 1.0, sz: 1.0 }
    }
}

/// A CT volume in Hounsfield units.
#[derive(Debug, Clone, PartialEq)]
pub struct HuVolume {
    shape: Shape,
    spacing: Spacing,
    data: Vec<i16>,
}

impl HuVolume {
    pub fn new(shape: Shape, spacing: Spacing, data: Vec<i16>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::InvalidInput(format!(
                "volume data has {} samples but shape {:?} needs {}",
                data.len(),
                shape,
                shape.len()
            )));
        }
        Ok(Self { shape, spacing, data })
    }

    pub fn filled(shape: Shape, spacing: Spacing, hu: i16) -> Self {
        Self { shape, spacing, data: vec![hu; shape.len()] }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[i16] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [i16] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<i16> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> i16 {
        self.data[x + self.shape.nx * (y + self.shape.ny * z)]
    }

    pub fn slice(&self, z: usize) -> &[i16] {
        let n = self.shape.slice_len();
        &self.data[z * n..(z + 1) * n]
    }

    /// Sub-volume holding exactly the selected z-slices, in order.
    pub fn extract_slices(&self, sel: SliceSelector) -> Result<HuVolume> {
        let range = sel.resolve(self.shape.nz)?;
        let n = self.shape.slice_len();
        let data = self.data[range.start() * n..(range.end() + 1) * n].to_vec();
        let shape = Shape { nz: range.end() - range.start() + 1, ..self.shape };
        Ok(HuVolume { shape, spacing: self.spacing, data })
    }

    /// Stacks volumes with equal in-plane shape along z.
    pub fn concat(parts: &[HuVolume]) -> Result<HuVolume> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("nothing to concatenate".into()))?;
        let mut data = Vec::new();
        let mut nz = 0;
        for p in parts {
            if (p.shape.nx, p.shape.ny) != (first.shape.nx, first.shape.ny) {
                return Err(Error::ShapeMismatch(first.shape.to_vec(), p.shape.to_vec()));
            }
            nz += p.shape.nz;
            data.extend_from_slice(&p.data);
        }
        let shape = Shape { nz, ..first.shape };
        Ok(HuVolume { shape, spacing: first.spacing, data })
    }
}

pub const FOREGROUND: u8 = 255;
pub const BACKGROUND: u8 = 0;

/// A {0, 255} mask over a slice or a volume.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    shape: Shape,
    spacing: Spacing,
    data: Vec<u8>,
}

impl BinaryMask {
    /// Validates that every value is 0 or 255.
    pub fn new(shape: Shape, spacing: Spacing, data: Vec<u8>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::InvalidMask(format!(
                "mask data has {} samples but shape {:?} needs {}",
                data.len(),
                shape,
                shape.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v != FOREGROUND && v != BACKGROUND) {
            return Err(Error::InvalidMask(format!("value {v} is neither 0 nor 255")));
        }
        Ok(Self { shape, spacing, data })
    }

    pub fn zeros(shape: Shape, spacing: Spacing) -> Self {
        Self { shape, spacing, data: vec![BACKGROUND; shape.len()] }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[x + self.shape.nx * (y + self.shape.ny * z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, on: bool) {
        let i = x + self.shape.nx * (y + self.shape.ny * z);
        self.data[i] = if on { FOREGROUND } else { BACKGROUND };
    }

    pub fn count_foreground(&self) -> u64 {
        self.data.iter().filter(|&&v| v == FOREGROUND).count() as u64
    }

    pub fn view(&self, z: usize) -> MaskView<'_> {
        let n = self.shape.slice_len();
        MaskView {
            width: self.shape.nx,
            height: self.shape.ny,
            data: &self.data[z * n..(z + 1) * n],
        }
    }

    pub(crate) fn slice_mut(&mut self, z: usize) -> &mut [u8] {
        let n = self.shape.slice_len();
        &mut self.data[z * n..(z + 1) * n]
    }

    pub fn extract_slices(&self, sel: SliceSelector) -> Result<BinaryMask> {
        let range = sel.resolve(self.shape.nz)?;
        let n = self.shape.slice_len();
        let data = self.data[range.start() * n..(range.end() + 1) * n].to_vec();
        let shape = Shape { nz: range.end() - range.start() + 1, ..self.shape };
        Ok(BinaryMask { shape, spacing: self.spacing, data })
    }

    /// Builds a mask from per-slice buffers that are already {0, 255}.
    pub(crate) fn from_slices(
        nx: usize,
        ny: usize,
        spacing: Spacing,
        slices: Vec<Vec<u8>>,
    ) -> BinaryMask {
        let nz = slices.len();
        let data: Vec<u8> = slices.into_iter().flatten().collect();
        debug_assert_eq!(data.len(), nx * ny * nz);
        BinaryMask { shape: Shape { nx, ny, nz }, spacing, data }
    }
}

/// Borrowed 2D slice of a mask, indexed as `(x, y)` with `x < width`.
#[derive(Debug, Clone, Copy)]
pub struct MaskView<'a> {
    pub width: usize,
    pub height: usize,
    pub data: &'a [u8],
}

impl<'a> MaskView<'a> {
    pub fn new(width: usize, height: usize, data: &'a [u8]) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "view of {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Pixel value, or `None` outside the image.
    #[inline]
    pub fn at(&self, x: i64, y: i64) -> Option<u8> {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            Some(self.data[x as usize + self.width * y as usize])
        } else {
            None
        }
    }

    pub fn count_foreground(&self) -> u64 {
        self.data.iter().filter(|&&v| v == FOREGROUND).count() as u64
    }
}

/// Which axial slices to process. Indices are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SliceSelector {
    Single { z: usize },
    Range { z_start: usize, z_end: usize },
    All,
}

impl SliceSelector {
    /// Resolves against a volume with `nz` slices.
    pub fn resolve(self, nz: usize) -> Result<std::ops::RangeInclusive<usize>> {
        let (a, b) = match self {
            SliceSelector::Single { z } => (z, z),
            SliceSelector::Range { z_start, z_end } => {
                if z_start > z_end {
                    return Err(Error::InvalidConfig(format!(
                        "slice range {z_start}:{z_end} is reversed"
                    )));
                }
                (z_start, z_end)
            }
            SliceSelector::All => (0, nz.saturating_sub(1)),
        };
        if nz == 0 {
            return Err(Error::IndexOutOfRange { index: a, len: 0 });
        }
        if b >= nz {
            return Err(Error::IndexOutOfRange { index: b, len: nz });
        }
        Ok(a..=b)
    }
}

impl std::str::FromStr for SliceSelector {
    type Err = Error;

    /// Parses `z`, `z0:z1` or `all`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(SliceSelector::All);
        }
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("bad slice index {t:?}")))
        };
        match s.split_once(':') {
            Some((a, b)) => {
                let (z_start, z_end) = (parse(a)?, parse(b)?);
                if z_start > z_end {
                    return Err(Error::InvalidConfig(format!("slice range {s} is reversed")));
                }
                Ok(SliceSelector::Range { z_start, z_end })
            }
            None => Ok(SliceSelector::Single { z: parse(s)? }),
        }
    }
}
