use super::RenderError;

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, RenderError> {
        if pixels.len() != width * height {
            return Err(RenderError::Dimensions(format!(
                "{} pixels cannot fill {width}x{height}",
                pixels.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
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

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    /// Mirrors the image left to right.
    pub fn flip_horizontal(&self) -> GrayImage {
        let mut out = self.clone();
        for row in out.pixels.chunks_mut(self.width.max(1)) {
            row.reverse();
        }
        out
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.pixels.iter().map(|&p| p as f32).collect()
    }

    pub fn from_f32(width: usize, height: usize, values: &[f32]) -> GrayImage {
        GrayImage {
            width,
            height,
            pixels: values.iter().map(|&v| to_byte(v)).collect(),
        }
    }

    /// Sub-image starting at `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> GrayImage {
        let mut pixels = Vec::with_capacity(width * height);
        for row in y..y + height {
            pixels.extend_from_slice(&self.pixels[row * self.width + x..][..width]);
        }
        GrayImage {
            width,
            height,
            pixels,
        }
    }

    /// Bilinear resampling to `width x height`.
    pub fn resize(&self, width: usize, height: usize) -> GrayImage {
        let values = resize_bilinear(&self.to_f32(), self.width, self.height, width, height);
        GrayImage::from_f32(width, height, &values)
    }

    /// Bilinear resize to the given height, keeping the aspect ratio.
    pub fn resize_to_height(&self, height: usize) -> GrayImage {
        let width = ((self.width as f64 * height as f64 / self.height as f64).round() as usize).max(1);
        self.resize(width, height)
    }

    /// Separable `[1 2 1] / 4` blur with edge replication.
    pub fn blur(&self) -> GrayImage {
        let (w, h) = (self.width, self.height);
        let src = self.to_f32();
        let mut tmp = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let l = src[y * w + x.saturating_sub(1)];
                let r = src[y * w + (x + 1).min(w - 1)];
                tmp[y * w + x] = 0.25 * l + 0.5 * src[y * w + x] + 0.25 * r;
            }
        }
        let mut out = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let u = tmp[y.saturating_sub(1) * w + x];
                let d = tmp[(y + 1).min(h - 1) * w + x];
                out[y * w + x] = 0.25 * u + 0.5 * tmp[y * w + x] + 0.25 * d;
            }
        }
        GrayImage::from_f32(w, h, &out)
    }

    pub fn distinct_values(&self) -> usize {
        let mut seen = [false; 256];
        self.pixels.iter().for_each(|&p| seen[p as usize] = true);
        seen.iter().filter(|&&s| s).count()
    }
}

pub(crate) fn to_byte(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Bilinear resampling with pixel centers at half-integer positions.
pub fn resize_bilinear(src: &[f32], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f32> {
    if sw == dw && sh == dh {
        return src.to_vec();
    }
    let axis = |d: usize, s: usize| -> Vec<(usize, usize, f32)> {
        let scale = s as f64 / d as f64;
        (0..d)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (s - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(s - 1);
                (lo, hi, (pos - lo as f64) as f32)
            })
            .collect()
    };
    let xs = axis(dw, sw);
    let ys = axis(dh, sh);
    let mut out = Vec::with_capacity(dw * dh);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * sw + x0] * (1.0 - fx) + src[y0 * sw + x1] * fx;
            let bot = src[y1 * sw + x0] * (1.0 - fx) + src[y1 * sw + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Foreground layer: per-pixel gray level and coverage in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub width: usize,
    pub height: usize,
    pub gray: Vec<f32>,
    pub alpha: Vec<f32>,
}

impl Layer {
    pub fn transparent(width: usize, height: usize) -> Self {
        Layer {
            width,
            height,
            gray: vec![0.0; width * height],
            alpha: vec![0.0; width * height],
        }
    }

    /// Bounding box `(x0, y0, x1, y1)` (exclusive ends) of pixels with
    /// alpha above `threshold`.
    pub fn alpha_bounds(&self, threshold: f32) -> Option<(usize, usize, usize, usize)> {
        let mut b: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.alpha[y * self.width + x] > threshold {
                    b = Some(match b {
                        None => (x, y, x + 1, y + 1),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
                    });
                }
            }
        }
        b
    }

    /// Copies the region `[x0, x1) x [y0, y1)`, padding with transparency
    /// where it leaves the layer. Coordinates may be negative.
    pub fn crop_padded(&self, x0: isize, y0: isize, x1: isize, y1: isize) -> Layer {
        let (w, h) = ((x1 - x0).max(0) as usize, (y1 - y0).max(0) as usize);
        let mut out = Layer::transparent(w, h);
        for y in 0..h {
            let sy = y as isize + y0;
            if sy < 0 || sy >= self.height as isize {
                continue;
            }
            for x in 0..w {
                let sx = x as isize + x0;
                if sx < 0 || sx >= self.width as isize {
                    continue;
                }
                let s = sy as usize * self.width + sx as usize;
                out.gray[y * w + x] = self.gray[s];
                out.alpha[y * w + x] = self.alpha[s];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_resize_is_exact() {
        let img = GrayImage::new(3, 2, vec![0, 10, 20, 30, 40, 250]).unwrap();
        assert_eq!(img.resize(3, 2), img);
    }

    #[test]
    fn flip_is_an_involution() {
        let img = GrayImage::new(3, 2, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(img.flip_horizontal().pixels(), &[3, 2, 1, 6, 5, 4]);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = GrayImage::filled(17, 9, 77);
        let r = img.resize(40, 32);
        assert!(r.pixels().iter().all(|&p| p == 77));
        assert_eq!(img.resize_to_height(32).height(), 32);
    }

    #[test]
    fn blur_preserves_flat_regions() {
        let img = GrayImage::filled(5, 5, 200);
        assert_eq!(img.blur(), img);
    }
}
