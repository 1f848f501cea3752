//! Right-to-left placement of shaped glyphs onto a foreground layer.

use super::atlas::{draw_segment, GlyphBitmap, GlyphRasterizer};
use super::{Layer, RenderError, RenderStyle};
use crate::shaper::{GlyphBase, ShapedGlyph};

/// Advance of a space glyph, in em.
const SPACE_ADVANCE: f64 = 0.35;
/// Extra gap between paws, in em.
const PAW_GAP: f64 = 0.12;
/// Margin kept around the ink after cropping.
pub const CROP_MARGIN: usize = 2;

enum Placed {
    Glyph(GlyphBitmap),
    Gap(usize),
}

/// Lays glyphs out right to left (first logical glyph rightmost), joins
/// connected neighbours with a baseline stroke and crops the result to its
/// ink plus a 2 px margin. The layer's gray is `style.fg_gray` everywhere.
pub fn rasterize(
    glyphs: &[ShapedGlyph],
    style: &RenderStyle,
    atlas: &dyn GlyphRasterizer,
) -> Result<Layer, RenderError> {
    if glyphs.is_empty() {
        return Err(RenderError::NothingToDraw);
    }
    style.validate()?;
    let kerning = style.kerning.max(0.0).round() as usize;
    let paw_gap = (PAW_GAP * style.glyph_scale).round() as usize;
    let mut placed = Vec::with_capacity(glyphs.len());
    for g in glyphs {
        placed.push(match g.base {
            GlyphBase::Space => Placed::Gap((SPACE_ADVANCE * style.glyph_scale).round() as usize),
            base => Placed::Glyph(atlas.rasterize_glyph(base, g.form, style)?),
        });
    }
    let above = placed
        .iter()
        .filter_map(|p| match p {
            Placed::Glyph(b) => Some(b.baseline),
            Placed::Gap(_) => None,
        })
        .max()
        .unwrap_or(0);
    let below = placed
        .iter()
        .filter_map(|p| match p {
            Placed::Glyph(b) => Some(b.height - b.baseline),
            Placed::Gap(_) => None,
        })
        .max()
        .unwrap_or(1);

    // Horizontal extents measured from the right edge.
    let mut spans = Vec::with_capacity(placed.len());
    let mut cursor = 0usize;
    for (i, p) in placed.iter().enumerate() {
        let w = match p {
            Placed::Glyph(b) => b.width,
            Placed::Gap(w) => *w,
        };
        spans.push((cursor, cursor + w));
        cursor += w;
        if i + 1 < placed.len() {
            let joined = glyphs[i].form.joins_following() && glyphs[i + 1].form.joins_preceding();
            cursor += kerning + if joined { 0 } else { paw_gap };
        }
    }
    let width = cursor;
    let height = above + below;
    let mut layer = Layer::transparent(width, height);
    for (p, &(r0, r1)) in placed.iter().zip(&spans) {
        if let Placed::Glyph(b) = p {
            let x_off = width - r1;
            let y_off = above - b.baseline;
            for y in 0..b.height {
                for x in 0..b.width {
                    let c = b.coverage[y * b.width + x];
                    let a = &mut layer.alpha[(y + y_off) * width + x + x_off];
                    if c > *a {
                        *a = c;
                    }
                }
            }
            debug_assert_eq!(r1 - r0, b.width);
        }
    }
    // baseline connectors across kerning gaps inside a paw
    let by = above as f64 + 0.5;
    for i in 0..placed.len().saturating_sub(1) {
        if glyphs[i].form.joins_following() && glyphs[i + 1].form.joins_preceding() {
            let right_glyph_left = (width - spans[i].1) as f64;
            let left_glyph_right = (width - spans[i + 1].0) as f64;
            draw_segment(
                &mut layer.alpha,
                width,
                height,
                (left_glyph_right - 1.0, by),
                (right_glyph_left + 1.0, by),
                style.stroke_thickness,
            );
        }
    }
    layer.gray.iter_mut().for_each(|g| *g = style.fg_gray as f32);
    let (x0, y0, x1, y1) = layer.alpha_bounds(0.0).ok_or(RenderError::NothingToDraw)?;
    let m = CROP_MARGIN as isize;
    let mut out = layer.crop_padded(x0 as isize - m, y0 as isize - m, x1 as isize + m, y1 as isize + m);
    out.gray.iter_mut().for_each(|g| *g = style.fg_gray as f32);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::ProceduralAtlas;
    use crate::shaper::shape;

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(
            rasterize(&[], &RenderStyle::default(), &ProceduralAtlas),
            Err(RenderError::NothingToDraw)
        ));
    }

    #[test]
    fn single_glyph_box_plus_margin() {
        let style = RenderStyle::default();
        let glyphs = shape("\u{0628}").unwrap();
        let bm = ProceduralAtlas
            .rasterize_glyph(glyphs[0].base, glyphs[0].form, &style)
            .unwrap();
        let (x0, y0, x1, y1) = bm.ink_bounds().unwrap();
        let layer = rasterize(&glyphs, &style, &ProceduralAtlas).unwrap();
        assert_eq!(layer.width, x1 - x0 + 2 * CROP_MARGIN);
        assert_eq!(layer.height, y1 - y0 + 2 * CROP_MARGIN);
        let (bx0, by0, bx1, by1) = layer.alpha_bounds(0.0).unwrap();
        assert_eq!((bx0, by0), (CROP_MARGIN, CROP_MARGIN));
        assert_eq!((layer.width - bx1, layer.height - by1), (CROP_MARGIN, CROP_MARGIN));
    }

    #[test]
    fn first_logical_glyph_is_rightmost() {
        // BEH then space then the tall-stem glyph: ink on the right half must
        // match the BEH rendering alone.
        let style = RenderStyle::default();
        let beh = rasterize(&shape("\u{0628}").unwrap(), &style, &ProceduralAtlas).unwrap();
        let both = rasterize(&shape("\u{0628} \u{062A}").unwrap(), &style, &ProceduralAtlas).unwrap();
        assert!(both.width > beh.width);
        let right: f32 = (0..both.height)
            .flat_map(|y| (both.width - beh.width..both.width).map(move |x| (x, y)))
            .map(|(x, y)| both.alpha[y * both.width + x])
            .sum();
        let alone: f32 = beh.alpha.iter().sum();
        assert!((right - alone).abs() < 1e-3, "{right} vs {alone}");
    }
}
