//! HU windowing into a fat mask, and a square-element binary opening that
//! strips thin bright artifacts (scanner table edges, 1 px lines).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, HuVolume, BACKGROUND, FOREGROUND};

pub const DEFAULT_HU_MIN: i16 = -150;
pub const DEFAULT_HU_MAX: i16 = 0;

/// Inclusive HU window selecting fat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub hu_min: i16,
    pub hu_max: i16,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self { hu_min: DEFAULT_HU_MIN, hu_max: DEFAULT_HU_MAX }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hu_min > self.hu_max {
            return Err(Error::InvalidConfig(format!(
                "HU window is empty: min {} > max {}",
                self.hu_min, self.hu_max
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, hu: i16) -> bool {
        self.hu_min <= hu && hu <= self.hu_max
    }
}

/// Opening with a 3x3 square: `erosion_iterations` erosions, then
/// `dilation_iterations` dilations. Zero iterations of both disables it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphologyConfig {
    pub erosion_iterations: u32,
    pub dilation_iterations: u32,
}

impl Default for MorphologyConfig {
    fn default() -> Self {
        Self { erosion_iterations: 1, dilation_iterations: 1 }
    }
}

impl MorphologyConfig {
    pub fn disabled() -> Self {
        Self { erosion_iterations: 0, dilation_iterations: 0 }
    }

    pub fn is_disabled(&self) -> bool {
        self.erosion_iterations == 0 && self.dilation_iterations == 0
    }
}

/// 255 where `hu_min <= HU <= hu_max`, else 0. Shape and spacing carry over.
pub fn threshold_fat(v: &HuVolume, cfg: ThresholdConfig) -> Result<BinaryMask> {
    cfg.validate()?;
    let data = v
        .data()
        .iter()
        .map(|&hu| if cfg.contains(hu) { FOREGROUND } else { BACKGROUND })
        .collect();
    BinaryMask::new(v.shape(), v.spacing(), data)
}

/// Applies the opening slice by slice; no structuring element spans z.
pub fn open_mask(m: &BinaryMask, cfg: MorphologyConfig) -> BinaryMask {
    let mut out = m.clone();
    if cfg.is_disabled() {
        return out;
    }
    let (w, h) = (m.shape().nx, m.shape().ny);
    let mut scratch = vec![0u8; w * h];
    for z in 0..m.shape().nz {
        let slice = out.slice_mut(z);
        for _ in 0..cfg.erosion_iterations {
            erode_square(slice, &mut scratch, w, h);
        }
        for _ in 0..cfg.dilation_iterations {
            dilate_square(slice, &mut scratch, w, h);
        }
    }
    out
}

/// Dilation followed by erosion, each once; used to close radial gaps in
/// rasterized masks.
pub fn close_mask(m: &BinaryMask) -> BinaryMask {
    let mut out = m.clone();
    let (w, h) = (m.shape().nx, m.shape().ny);
    let mut scratch = vec![0u8; w * h];
    for z in 0..m.shape().nz {
        let slice = out.slice_mut(z);
        dilate_square(slice, &mut scratch, w, h);
        erode_square(slice, &mut scratch, w, h);
    }
    out
}

/// In-place 3x3 erosion. Pixels outside the image count as background, so
/// the outermost ring of pixels always erodes.
pub(crate) fn erode_square(img: &mut [u8], scratch: &mut [u8], w: usize, h: usize) {
    // The square element is separable: horizontal then vertical 3-tap minimum.
    for y in 0..h {
        let row = &img[y * w..(y + 1) * w];
        let dst = &mut scratch[y * w..(y + 1) * w];
        for x in 0..w {
            let keep = x > 0 && x + 1 < w && row[x - 1] != 0 && row[x] != 0 && row[x + 1] != 0;
            dst[x] = if keep { FOREGROUND } else { BACKGROUND };
        }
    }
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let keep = y > 0
                && y + 1 < h
                && scratch[i - w] != 0
                && scratch[i] != 0
                && scratch[i + w] != 0;
            img[i] = if keep { FOREGROUND } else { BACKGROUND };
        }
    }
}

/// In-place 3x3 dilation; out-of-image neighbours contribute nothing.
pub(crate) fn dilate_square(img: &mut [u8], scratch: &mut [u8], w: usize, h: usize) {
    for y in 0..h {
        let row = &img[y * w..(y + 1) * w];
        let dst = &mut scratch[y * w..(y + 1) * w];
        for x in 0..w {
            let on = row[x] != 0
                || (x > 0 && row[x - 1] != 0)
                || (x + 1 < w && row[x + 1] != 0);
            dst[x] = if on { FOREGROUND } else { BACKGROUND };
        }
    }
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let on = scratch[i] != 0
                || (y > 0 && scratch[i - w] != 0)
                || (y + 1 < h && scratch[i + w] != 0);
            img[i] = if on { FOREGROUND } else { BACKGROUND };
        }
    }
}
