//! Glyph sources. The procedural atlas draws every (glyph, form) pair from
//! a small vocabulary of strokes so no font files are needed.

use std::collections::HashMap;

use super::{RenderError, RenderStyle};
use crate::shaper::{GlyphBase, LigatureId, PresentationForm};

/// Coverage bitmap for one glyph, baseline-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphBitmap {
    pub width: usize,
    pub height: usize,
    /// Row whose center carries the baseline stroke.
    pub baseline: usize,
    pub coverage: Vec<f32>,
}

impl GlyphBitmap {
    /// Ink bounding box `(x0, y0, x1, y1)`, exclusive ends.
    pub fn ink_bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut b: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.coverage[y * self.width + x] > 0.0 {
                    b = Some(match b {
                        None => (x, y, x + 1, y + 1),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
                    });
                }
            }
        }
        b
    }
}

/// Anything that can turn a shaped glyph into a coverage bitmap.
pub trait GlyphRasterizer: Send + Sync {
    fn rasterize_glyph(
        &self,
        base: GlyphBase,
        form: PresentationForm,
        style: &RenderStyle,
    ) -> Result<GlyphBitmap, RenderError>;
}

/// Human-readable glyph name used in error messages.
pub fn glyph_name(base: GlyphBase, form: PresentationForm) -> String {
    match base {
        GlyphBase::Letter(l) => format!("U+{:04X} {}", l.as_char() as u32, form),
        GlyphBase::Ligature(l) => format!("{l:?} {form}"),
        GlyphBase::Space => format!("space {form}"),
    }
}

/// Stable glyph index: letters first, then ligatures.
fn glyph_index(base: GlyphBase) -> Option<usize> {
    match base {
        GlyphBase::Letter(l) => Some(l.ordinal()),
        GlyphBase::Ligature(lig) => {
            let k = LigatureId::ALL.iter().position(|&x| x == lig).expect("listed");
            Some(33 + k)
        }
        GlyphBase::Space => None,
    }
}

const ASCENT: f64 = 0.8;
const DESCENT: f64 = 0.45;

#[derive(Debug, Clone, Copy)]
enum Body {
    Bowl,
    TallStem,
    Loop,
    Descender,
    Hook,
    Wave,
}

const BODIES: [Body; 6] = [
    Body::Bowl,
    Body::TallStem,
    Body::Loop,
    Body::Descender,
    Body::Hook,
    Body::Wave,
];

type Point = (f64, f64);

/// Deterministic stroke-built atlas covering every supported letter and
/// ligature in all four forms.
#[derive(Debug, Clone, Default)]
pub struct ProceduralAtlas;

impl ProceduralAtlas {
    /// Body width in em for glyph `n`.
    fn body_width(n: usize) -> f64 {
        0.42 + 0.06 * (n % 3) as f64
    }

    /// Polylines in em units, x rightwards from the glyph's left edge, y up
    /// from the baseline.
    fn strokes(n: usize, form: PresentationForm) -> Vec<Vec<Point>> {
        let w = Self::body_width(n);
        let mut s: Vec<Vec<Point>> = Vec::new();
        let left = if form.joins_following() { -0.2 } else { 0.0 };
        let right = if form.joins_preceding() { w + 0.2 } else { w };
        s.push(vec![(left, 0.0), (right, 0.0)]);
        match BODIES[n % 6] {
            Body::Bowl => s.push(vec![(0.0, 0.3), (0.12 * w, 0.0), (0.88 * w, 0.0), (w, 0.3)]),
            Body::TallStem => s.push(vec![(0.55 * w, 0.0), (0.55 * w, 0.75)]),
            Body::Loop => {
                let (cx, cy, r) = (0.5 * w, 0.17, 0.17);
                s.push(
                    (0..=16)
                        .map(|i| {
                            let a = i as f64 * std::f64::consts::PI / 8.0 - std::f64::consts::FRAC_PI_2;
                            (cx + r * a.cos(), cy + r * a.sin())
                        })
                        .collect(),
                );
            }
            Body::Descender => s.push(vec![(0.65 * w, 0.0), (0.55 * w, -0.3), (0.15 * w, -0.38)]),
            Body::Hook => s.push(vec![(0.8 * w, 0.0), (0.8 * w, 0.38), (0.4 * w, 0.5)]),
            Body::Wave => s.push(vec![
                (0.0, 0.0),
                (0.0, 0.12),
                (0.25 * w, 0.28),
                (0.5 * w, 0.12),
                (0.75 * w, 0.28),
                (w, 0.12),
                (w, 0.0),
            ]),
        }
        // k = 0: no ticks, 1..=3 ticks above, 4..=6 ticks below
        let k = n / 6;
        let ticks = if k == 0 { 0 } else { (k - 1) % 3 + 1 };
        let up = k <= 3;
        for i in 0..ticks {
            let x = w * [0.15, 0.33, 0.68][i];
            let y = if up { 0.24 } else { -0.24 };
            s.push(vec![(x, 0.0), (x, y)]);
        }
        match form {
            // free-standing end: a small upward flourish on the left
            PresentationForm::Isolated | PresentationForm::Final => {
                s.push(vec![(0.08, 0.0), (0.0, 0.16)]);
            }
            // word-initial entry stroke on the right
            PresentationForm::Initial => s.push(vec![(w - 0.08, 0.0), (w, 0.2)]),
            PresentationForm::Medial => {}
        }
        s
    }
}

/// Distance from `p` to the segment `a`-`b`.
fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Coverage of a round-capped stroke of `thickness` pixels at distance `d`.
pub(crate) fn stroke_coverage(d: f64, thickness: f64) -> f32 {
    (thickness / 2.0 + 0.5 - d).clamp(0.0, 1.0) as f32
}

/// Draws a pixel-space segment into `coverage` with max compositing.
pub(crate) fn draw_segment(
    coverage: &mut [f32],
    width: usize,
    height: usize,
    a: Point,
    b: Point,
    thickness: f64,
) {
    let r = thickness / 2.0 + 1.0;
    let x0 = (a.0.min(b.0) - r).floor().max(0.0) as usize;
    let y0 = (a.1.min(b.1) - r).floor().max(0.0) as usize;
    let x1 = ((a.0.max(b.0) + r).ceil().max(0.0) as usize).min(width);
    let y1 = ((a.1.max(b.1) + r).ceil().max(0.0) as usize).min(height);
    for y in y0..y1 {
        for x in x0..x1 {
            let d = segment_distance((x as f64 + 0.5, y as f64 + 0.5), a, b);
            let c = stroke_coverage(d, thickness);
            let px = &mut coverage[y * width + x];
            if c > *px {
                *px = c;
            }
        }
    }
}

impl GlyphRasterizer for ProceduralAtlas {
    fn rasterize_glyph(
        &self,
        base: GlyphBase,
        form: PresentationForm,
        style: &RenderStyle,
    ) -> Result<GlyphBitmap, RenderError> {
        let n = glyph_index(base).ok_or_else(|| RenderError::MissingGlyph(glyph_name(base, form)))?;
        let s = style.glyph_scale;
        let t = style.stroke_thickness;
        let pad = (t / 2.0).ceil() as usize + 1;
        let w = Self::body_width(n);
        let width = (w * s).ceil() as usize + 2 * pad;
        let above = (ASCENT * s).ceil() as usize + pad;
        let height = above + (DESCENT * s).ceil() as usize + pad;
        let baseline = above;
        let to_px = |(x, y): Point| (pad as f64 + x * s, baseline as f64 + 0.5 - y * s);
        let mut coverage = vec![0.0f32; width * height];
        for line in Self::strokes(n, form) {
            for pair in line.windows(2) {
                draw_segment(&mut coverage, width, height, to_px(pair[0]), to_px(pair[1]), t);
            }
        }
        Ok(GlyphBitmap {
            width,
            height,
            baseline,
            coverage,
        })
    }
}

/// User-supplied bitmaps keyed by (glyph, form). Bitmaps are used at their
/// stored size; style scale is ignored.
#[derive(Debug, Clone, Default)]
pub struct BitmapAtlas {
    glyphs: HashMap<(GlyphBase, PresentationForm), GlyphBitmap>,
}

impl BitmapAtlas {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, base: GlyphBase, form: PresentationForm, bitmap: GlyphBitmap) {
        self.glyphs.insert((base, form), bitmap);
    }

    pub fn len(&self) -> usize {
        self.glyphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.glyphs.is_empty()
    }
}

impl GlyphRasterizer for BitmapAtlas {
    fn rasterize_glyph(
        &self,
        base: GlyphBase,
        form: PresentationForm,
        _style: &RenderStyle,
    ) -> Result<GlyphBitmap, RenderError> {
        self.glyphs
            .get(&(base, form))
            .cloned()
            .ok_or_else(|| RenderError::MissingGlyph(glyph_name(base, form)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shaper::Letter;

    fn all_glyphs() -> Vec<(GlyphBase, PresentationForm)> {
        let mut out = Vec::new();
        for l in Letter::all() {
            for f in PresentationForm::ALL {
                out.push((GlyphBase::Letter(l), f));
            }
        }
        for lig in LigatureId::ALL {
            for f in PresentationForm::ALL {
                out.push((GlyphBase::Ligature(lig), f));
            }
        }
        out
    }

    fn components(bm: &GlyphBitmap, threshold: f32) -> usize {
        let (w, h) = (bm.width, bm.height);
        let mut seen = vec![false; w * h];
        let mut count = 0;
        for start in 0..w * h {
            if seen[start] || bm.coverage[start] < threshold {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % w) as isize, (i / w) as isize);
                for (dx, dy) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] && bm.coverage[j] >= threshold {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        count
    }

    #[test]
    fn every_glyph_is_distinct_and_connected() {
        let style = RenderStyle::default();
        let atlas = ProceduralAtlas;
        let bitmaps: Vec<_> = all_glyphs()
            .into_iter()
            .map(|(b, f)| atlas.rasterize_glyph(b, f, &style).unwrap())
            .collect();
        for (i, a) in bitmaps.iter().enumerate() {
            assert_eq!(components(a, 0.5), 1, "glyph {i} is not connected: {:?}", all_glyphs()[i]);
            for (j, b) in bitmaps.iter().enumerate().skip(i + 1) {
                assert!(a != b, "glyphs {i} and {j} coincide");
            }
        }
    }

    #[test]
    fn missing_glyph_is_named() {
        let atlas = BitmapAtlas::new();
        let beh = GlyphBase::Letter(Letter::new('\u{0628}').unwrap());
        let err = atlas
            .rasterize_glyph(beh, PresentationForm::Initial, &RenderStyle::default())
            .unwrap_err();
        assert!(err.to_string().contains("U+0628 initial"), "{err}");
    }
}
