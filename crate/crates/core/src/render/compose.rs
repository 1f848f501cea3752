use super::{GrayImage, Layer, RenderError};

/// Alpha-composites a foreground layer over a background crop. The
/// foreground gray is first mixed with `blend` (weight `mix` on the
/// foreground). Result is clamped to `[0, 255]`.
pub fn compose_scene(fg: &Layer, blend: &[f32], bg: &[f32], mix: f32) -> Result<GrayImage, RenderError> {
    let n = fg.width * fg.height;
    if blend.len() != n || bg.len() != n {
        return Err(RenderError::Dimensions(format!(
            "foreground {}x{} has {n} pixels, blend {} and background {}",
            fg.width,
            fg.height,
            blend.len(),
            bg.len()
        )));
    }
    let values: Vec<f32> = (0..n)
        .map(|i| {
            let a = fg.alpha[i].clamp(0.0, 1.0);
            let f = mix * fg.gray[i] + (1.0 - mix) * blend[i];
            (a * f + (1.0 - a) * bg[i]).clamp(0.0, 255.0)
        })
        .collect();
    Ok(GrayImage::from_f32(fg.width, fg.height, &values))
}
