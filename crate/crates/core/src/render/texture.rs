//! Background and blend textures: seeded value noise, or crops of
//! user-supplied natural images.

use std::path::Path;

use rand::Rng;

use super::{pgm, resize_bilinear, GrayImage, RenderError};

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Two-octave value noise in `[lo, hi]`.
pub fn value_noise<R: Rng>(rng: &mut R, width: usize, height: usize, lo: f32, hi: f32) -> Vec<f32> {
    let mut acc = vec![0.0f64; width * height];
    let mut total = 0.0;
    let base_cell = rng.gen_range(6.0..20.0f64);
    for (octave, amp) in [(0, 1.0f64), (1, 0.5)] {
        let cell = base_cell / (1 << octave) as f64;
        let gw = (width as f64 / cell).ceil() as usize + 2;
        let gh = (height as f64 / cell).ceil() as usize + 2;
        let grid: Vec<f64> = (0..gw * gh).map(|_| rng.gen::<f64>()).collect();
        for y in 0..height {
            let gy = y as f64 / cell;
            let (iy, ty) = (gy.floor() as usize, smooth(gy.fract()));
            for x in 0..width {
                let gx = x as f64 / cell;
                let (ix, tx) = (gx.floor() as usize, smooth(gx.fract()));
                let g = |i: usize, j: usize| grid[j * gw + i];
                let top = g(ix, iy) * (1.0 - tx) + g(ix + 1, iy) * tx;
                let bot = g(ix, iy + 1) * (1.0 - tx) + g(ix + 1, iy + 1) * tx;
                acc[y * width + x] += amp * (top * (1.0 - ty) + bot * ty);
            }
        }
        total += amp;
    }
    acc.iter()
        .map(|&v| lo + (hi - lo) * (v / total) as f32)
        .collect()
}

/// Natural images to crop scene backgrounds from.
#[derive(Debug, Clone, Default)]
pub struct TextureBank {
    images: Vec<GrayImage>,
}

impl TextureBank {
    /// Loads every `.pgm` in `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self, RenderError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| RenderError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
            .collect();
        paths.sort();
        let images = paths
            .iter()
            .map(|p| pgm::read_pgm(p))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|img| !img.is_empty())
            .collect::<Vec<_>>();
        if images.is_empty() {
            return Err(RenderError::Config(format!(
                "no usable .pgm textures in {}",
                dir.display()
            )));
        }
        Ok(TextureBank { images })
    }

    pub fn from_images(images: Vec<GrayImage>) -> Self {
        TextureBank {
            images: images.into_iter().filter(|i| !i.is_empty()).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Random `width x height` crop; small sources are upscaled first.
    pub fn crop<R: Rng>(&self, rng: &mut R, width: usize, height: usize) -> Option<Vec<f32>> {
        if self.images.is_empty() {
            return None;
        }
        let img = &self.images[rng.gen_range(0..self.images.len())];
        let img = if img.width() < width || img.height() < height {
            let s = (width as f64 / img.width() as f64).max(height as f64 / img.height() as f64);
            let (w, h) = (
                ((img.width() as f64 * s).ceil() as usize).max(width),
                ((img.height() as f64 * s).ceil() as usize).max(height),
            );
            GrayImage::from_f32(w, h, &resize_bilinear(&img.to_f32(), img.width(), img.height(), w, h))
        } else {
            img.clone()
        };
        let x = rng.gen_range(0..=img.width() - width);
        let y = rng.gen_range(0..=img.height() - height);
        Some(img.crop(x, y, width, height).to_f32())
    }
}
