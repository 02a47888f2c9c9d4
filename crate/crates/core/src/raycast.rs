//! Integer line rasterization and the per-ray boundary search.
//!
//! [`line_iter`] is the classic integer Bresenham walk. Ties (the ideal line
//! passing exactly halfway between two pixels) are broken as if the line
//! were always drawn from its canonical end (smaller coordinate along the
//! major axis), so `line_iter(a, b)` and `line_iter(b, a)` visit the same
//! pixels in opposite order.

use serde::{Deserialize, Serialize};

use crate::volume::{MaskView, BACKGROUND, FOREGROUND};

/// Integer pixel coordinate; `x` is the column, `y` the row. May lie outside
/// an image while a ray is being traced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: i64,
    pub y: i64,
}

impl PixelPoint {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    pub fn dist2(self, other: PixelPoint) -> i64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }
}

impl From<(i64, i64)> for PixelPoint {
    fn from((x, y): (i64, i64)) -> Self {
        Self { x, y }
    }
}

impl std::str::FromStr for PixelPoint {
    type Err = String;

    /// Parses `x,y`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(',').ok_or_else(|| format!("expected x,y, got {s:?}"))?;
        let parse = |t: &str| t.trim().parse::<i64>().map_err(|e| format!("{t:?}: {e}"));
        Ok(Self { x: parse(a)?, y: parse(b)? })
    }
}

/// Iterator over the 8-connected pixels from `start` to `end`, both included.
#[derive(Debug, Clone)]
pub struct LineIter {
    x: i64,
    y: i64,
    step_x: i64,
    step_y: i64,
    x_major: bool,
    d_major: i64,
    d_minor: i64,
    decision: i64,
    /// Step the minor axis on a zero decision value too. Set when walking
    /// from the non-canonical end, which mirrors the tie rule.
    round_up: bool,
    remaining: usize,
}

pub fn line_iter(start: PixelPoint, end: PixelPoint) -> LineIter {
    let (dx, dy) = (end.x - start.x, end.y - start.y);
    let (adx, ady) = (dx.abs(), dy.abs());
    let x_major = adx >= ady;
    let (d_major, d_minor) = if x_major { (adx, ady) } else { (ady, adx) };
    let round_up = if x_major { dx < 0 } else { dy < 0 };
    LineIter {
        x: start.x,
        y: start.y,
        step_x: dx.signum(),
        step_y: dy.signum(),
        x_major,
        d_major,
        d_minor,
        decision: 2 * d_minor - d_major,
        round_up,
        remaining: d_major as usize + 1,
    }
}

impl Iterator for LineIter {
    type Item = PixelPoint;

    #[inline]
    fn next(&mut self) -> Option<PixelPoint> {
        if self.remaining == 0 {
            return None;
        }
        let p = PixelPoint { x: self.x, y: self.y };
        self.remaining -= 1;
        if self.remaining > 0 {
            let minor = self.decision > 0 || (self.round_up && self.decision == 0);
            if self.x_major {
                self.x += self.step_x;
                if minor {
                    self.y += self.step_y;
                }
            } else {
                self.y += self.step_y;
                if minor {
                    self.x += self.step_x;
                }
            }
            if minor {
                self.decision -= 2 * self.d_major;
            }
            self.decision += 2 * self.d_minor;
        }
        Some(p)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for LineIter {}

impl std::iter::FusedIterator for LineIter {}

/// Result of walking one ray.
///
/// `inner` is the last background pixel that was followed by a fat pixel
/// (the inner edge of the outermost fat band), `outer` the last fat pixel.
/// The `*_next` fields hold the point that follows each hit on the
/// rasterized line, so callers can place the boundary between the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RayHit {
    pub inner: Option<PixelPoint>,
    pub outer: Option<PixelPoint>,
    pub inner_next: Option<PixelPoint>,
    pub outer_next: Option<PixelPoint>,
}

impl RayHit {
    pub fn both(&self) -> Option<(PixelPoint, PixelPoint)> {
        Some((self.inner?, self.outer?))
    }
}

/// Walks `line_iter(start, end)` over `img`, skipping points outside it.
pub fn find_last_point(img: &MaskView<'_>, start: PixelPoint, end: PixelPoint) -> RayHit {
    let mut last_black: Option<PixelPoint> = None;
    let mut last_black_next: Option<PixelPoint> = None;
    let mut hit = RayHit::default();
    let mut want_black_next = false;
    let mut want_white_next = false;
    let mut prev: Option<PixelPoint> = None;
    let mut before_white: Option<PixelPoint> = None;

    for p in line_iter(start, end) {
        if want_black_next {
            last_black_next = Some(p);
            want_black_next = false;
        }
        if want_white_next {
            hit.outer_next = Some(p);
            want_white_next = false;
        }
        if let Some(v) = img.at(p.x, p.y) {
            if v == BACKGROUND {
                last_black = Some(p);
                last_black_next = None;
                want_black_next = true;
            } else if last_black.is_some() {
                hit.inner = last_black;
                hit.inner_next = last_black_next;
            }
            if v == FOREGROUND {
                hit.outer = Some(p);
                hit.outer_next = None;
                before_white = prev;
                want_white_next = true;
            }
        }
        prev = Some(p);
    }

    // outer was the final point of the line: continue one step past it
    if let (Some(o), None) = (hit.outer, hit.outer_next) {
        let back = before_white.unwrap_or(o);
        hit.outer_next = Some(PixelPoint::new(2 * o.x - back.x, 2 * o.y - back.y));
    }
    hit
}
