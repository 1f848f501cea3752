//! Synthetic text-image rendering: procedural glyphs, right-to-left layout,
//! perspective warp and scene compositing, plus corpus generation.

mod atlas;
mod compose;
mod corpus;
mod image;
mod layout;
pub mod pgm;
mod texture;
mod warp;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::shaper::{normalize_label, shape, ShapeError};

pub use atlas::{glyph_name, BitmapAtlas, GlyphBitmap, GlyphRasterizer, ProceduralAtlas};
pub use compose::compose_scene;
pub use corpus::{build_corpus, CorpusManifest, CorpusReport, ManifestRecord};
pub use image::{resize_bilinear, GrayImage, Layer};
pub use layout::{rasterize, CROP_MARGIN};
pub use texture::{value_noise, TextureBank};
pub use warp::{perspective_warp, Homography};

/// Height of every emitted image.
pub const OUTPUT_HEIGHT: usize = 32;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("glyph {0} is missing from the atlas")]
    MissingGlyph(String),
    #[error("nothing to draw")]
    NothingToDraw,
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("homography is singular or not finite")]
    SingularHomography,
    #[error("invalid style: {0}")]
    InvalidStyle(String),
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("render config: {0}")]
    Config(String),
    #[error(transparent)]
    ConfigFile(#[from] ConfigError),
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("corpus size must be at least 1")]
    EmptyCorpus,
    #[error("malformed manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
}

impl RenderError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        RenderError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RenderMode {
    Scene,
    Video,
}

impl RenderMode {
    pub fn name(self) -> &'static str {
        match self {
            RenderMode::Scene => "scene",
            RenderMode::Video => "video",
        }
    }
}

impl fmt::Display for RenderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RenderMode {
    type Err = RenderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scene" => Ok(RenderMode::Scene),
            "video" => Ok(RenderMode::Video),
            other => Err(RenderError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Per-sample drawing parameters. Lengths in pixels, angles in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderStyle {
    pub glyph_scale: f64,
    pub stroke_thickness: f64,
    pub kerning: f64,
    pub skew: f64,
    pub rotation: f64,
    pub fg_gray: u8,
    pub bg_gray: u8,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            glyph_scale: 32.0,
            stroke_thickness: 2.0,
            kerning: 1.0,
            skew: 0.0,
            rotation: 0.0,
            fg_gray: 0,
            bg_gray: 255,
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: String| Err(RenderError::InvalidStyle(m));
        if !(self.glyph_scale > 0.0 && self.glyph_scale.is_finite()) {
            return bad(format!("glyph_scale {} must be positive", self.glyph_scale));
        }
        if !(self.stroke_thickness > 0.0 && self.stroke_thickness.is_finite()) {
            return bad(format!("stroke_thickness {} must be positive", self.stroke_thickness));
        }
        if self.rotation.abs() > 15f64.to_radians() {
            return bad(format!("rotation {} exceeds 15 degrees", self.rotation));
        }
        if self.skew.abs() > 0.5 {
            return bad(format!("skew {} exceeds 0.5", self.skew));
        }
        Ok(())
    }

    /// Extra check for flat two-tone video rendering.
    pub fn validate_video(&self) -> Result<(), RenderError> {
        self.validate()?;
        if (self.fg_gray as i32 - self.bg_gray as i32).abs() < 40 {
            return Err(RenderError::InvalidStyle(format!(
                "video grays {} and {} differ by less than 40",
                self.fg_gray, self.bg_gray
            )));
        }
        Ok(())
    }
}

/// Randomization ranges for rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub rotation_max_deg: f64,
    pub skew_max: f64,
    pub stroke_min: f64,
    pub stroke_max: f64,
    pub mix_min: f64,
    pub mix_max: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub kerning_min: f64,
    pub kerning_max: f64,
    /// Corner displacement bound as a fraction of each dimension.
    pub corner_jitter: f64,
    /// Minimum gray distance between text and mean background.
    pub min_contrast: f64,
    pub texture_dir: Option<PathBuf>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            rotation_max_deg: 7.0,
            skew_max: 0.3,
            stroke_min: 1.0,
            stroke_max: 3.0,
            mix_min: 0.6,
            mix_max: 1.0,
            scale_min: 28.0,
            scale_max: 36.0,
            kerning_min: 0.0,
            kerning_max: 3.0,
            corner_jitter: 0.1,
            min_contrast: 60.0,
            texture_dir: None,
        }
    }
}

const CONFIG_KEYS: [&str; 13] = [
    "rotation_max_deg",
    "skew_max",
    "stroke_min",
    "stroke_max",
    "mix_min",
    "mix_max",
    "scale_min",
    "scale_max",
    "kerning_min",
    "kerning_max",
    "corner_jitter",
    "min_contrast",
    "texture_dir",
];

impl RenderConfig {
    /// Overrides defaults with any keys present; unknown keys are errors.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, RenderError> {
        kv.check_known(&CONFIG_KEYS)?;
        let mut c = RenderConfig::default();
        let fields: [(&str, &mut f64); 12] = [
            ("rotation_max_deg", &mut c.rotation_max_deg),
            ("skew_max", &mut c.skew_max),
            ("stroke_min", &mut c.stroke_min),
            ("stroke_max", &mut c.stroke_max),
            ("mix_min", &mut c.mix_min),
            ("mix_max", &mut c.mix_max),
            ("scale_min", &mut c.scale_min),
            ("scale_max", &mut c.scale_max),
            ("kerning_min", &mut c.kerning_min),
            ("kerning_max", &mut c.kerning_max),
            ("corner_jitter", &mut c.corner_jitter),
            ("min_contrast", &mut c.min_contrast),
        ];
        for (key, slot) in fields {
            if let Some(v) = kv.get::<f64>(key)? {
                *slot = v;
            }
        }
        c.texture_dir = kv.get_raw("texture_dir").filter(|s| !s.is_empty()).map(PathBuf::from);
        c.validate()?;
        Ok(c)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.insert("rotation_max_deg", self.rotation_max_deg);
        kv.insert("skew_max", self.skew_max);
        kv.insert("stroke_min", self.stroke_min);
        kv.insert("stroke_max", self.stroke_max);
        kv.insert("mix_min", self.mix_min);
        kv.insert("mix_max", self.mix_max);
        kv.insert("scale_min", self.scale_min);
        kv.insert("scale_max", self.scale_max);
        kv.insert("kerning_min", self.kerning_min);
        kv.insert("kerning_max", self.kerning_max);
        kv.insert("corner_jitter", self.corner_jitter);
        kv.insert("min_contrast", self.min_contrast);
        kv.insert(
            "texture_dir",
            self.texture_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        kv
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::Config(m.to_string()));
        let range_ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !(0.0..=15.0).contains(&self.rotation_max_deg) {
            return bad("rotation_max_deg must lie in [0, 15]");
        }
        if !(0.0..=0.5).contains(&self.skew_max) {
            return bad("skew_max must lie in [0, 0.5]");
        }
        if !range_ok(self.stroke_min, self.stroke_max) || self.stroke_min <= 0.0 {
            return bad("stroke range must be positive and ordered");
        }
        if !range_ok(self.mix_min, self.mix_max) || self.mix_min < 0.0 || self.mix_max > 1.0 {
            return bad("mix range must be ordered within [0, 1]");
        }
        if !range_ok(self.scale_min, self.scale_max) || self.scale_min <= 0.0 {
            return bad("scale range must be positive and ordered");
        }
        if !range_ok(self.kerning_min, self.kerning_max) || self.kerning_min < 0.0 {
            return bad("kerning range must be non-negative and ordered");
        }
        if !(0.0..0.5).contains(&self.corner_jitter) {
            return bad("corner_jitter must lie in [0, 0.5)");
        }
        if !(40.0..=200.0).contains(&self.min_contrast) {
            return bad("min_contrast must lie in [40, 200]");
        }
        Ok(())
    }
}

/// A rendered, labeled training image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub pixels: GrayImage,
    pub label: String,
    pub seed: u64,
    pub mode: RenderMode,
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Renders labels into images; holds the glyph source and optional textures.
#[derive(Clone)]
pub struct Renderer {
    config: RenderConfig,
    atlas: Arc<dyn GlyphRasterizer>,
    textures: TextureBank,
}

impl fmt::Debug for Renderer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Renderer").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Default for Renderer {
    fn default() -> Self {
        Renderer {
            config: RenderConfig::default(),
            atlas: Arc::new(ProceduralAtlas),
            textures: TextureBank::default(),
        }
    }
}

impl Renderer {
    /// Builds a renderer with the procedural atlas, loading textures when
    /// the config names a directory.
    pub fn new(config: RenderConfig) -> Result<Self, RenderError> {
        config.validate()?;
        let textures = match &config.texture_dir {
            Some(dir) => TextureBank::load_dir(dir)?,
            None => TextureBank::default(),
        };
        Ok(Renderer {
            config,
            atlas: Arc::new(ProceduralAtlas),
            textures,
        })
    }

    pub fn with_atlas(mut self, atlas: Arc<dyn GlyphRasterizer>) -> Self {
        self.atlas = atlas;
        self
    }

    pub fn with_textures(mut self, textures: TextureBank) -> Self {
        self.textures = textures;
        self
    }

    pub fn config(&self) -> &RenderConfig {
        &self.config
    }

    fn sample_style<R: Rng>(&self, rng: &mut R, mode: RenderMode) -> RenderStyle {
        let c = &self.config;
        let glyph_scale = uniform(rng, c.scale_min, c.scale_max);
        let stroke_thickness = uniform(rng, c.stroke_min, c.stroke_max);
        let kerning = uniform(rng, c.kerning_min, c.kerning_max);
        let (rotation, skew) = match mode {
            RenderMode::Scene => {
                let r = c.rotation_max_deg.to_radians();
                (uniform(rng, -r, r), uniform(rng, -c.skew_max, c.skew_max))
            }
            RenderMode::Video => (0.0, 0.0),
        };
        RenderStyle {
            glyph_scale,
            stroke_thickness,
            kerning,
            skew,
            rotation,
            fg_gray: 0,
            bg_gray: 255,
        }
    }

    /// Renders `label` deterministically from `(label, mode, seed)`.
    pub fn render_sample(&self, label: &str, mode: RenderMode, seed: u64) -> Result<LabeledImage, RenderError> {
        let label = normalize_label(label);
        let pixels = match mode {
            RenderMode::Scene => self.render_scene(&label, seed)?,
            RenderMode::Video => self.render_video_flat(&label, seed)?.blur(),
        };
        Ok(LabeledImage {
            pixels: pixels.resize_to_height(OUTPUT_HEIGHT),
            label,
            seed,
            mode,
        })
    }

    /// Video-mode image before the blur and final resize: exactly two gray
    /// levels, no geometric distortion.
    pub fn render_video_flat(&self, label: &str, seed: u64) -> Result<GrayImage, RenderError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut style = self.sample_style(&mut rng, RenderMode::Video);
        let gap = (self.config.min_contrast.round() as i32).min(120);
        let bg = rng.gen_range(0..=255i32);
        // fg is drawn from the grays at least `gap` away from bg
        let below = (bg - gap + 1).max(0);
        let above = (255 - (bg + gap) + 1).max(0);
        let pick = rng.gen_range(0..below + above);
        let fg = if pick < below { pick } else { bg + gap + (pick - below) };
        style.fg_gray = fg as u8;
        style.bg_gray = bg as u8;
        style.validate_video()?;
        let layer = rasterize(&shape(label)?, &style, self.atlas.as_ref())?;
        let pixels = layer
            .alpha
            .iter()
            .map(|&a| if a >= 0.5 { style.fg_gray } else { style.bg_gray })
            .collect();
        GrayImage::new(layer.width, layer.height, pixels)
    }

    fn render_scene(&self, label: &str, seed: u64) -> Result<GrayImage, RenderError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let style = self.sample_style(&mut rng, RenderMode::Scene);
        let layer = rasterize(&shape(label)?, &style, self.atlas.as_ref())?;
        let (w, h) = (layer.width as f64, layer.height as f64);
        let (cx, cy) = (w / 2.0, h / 2.0);
        let (s, c) = style.rotation.sin_cos();
        let geometric = Homography::from_matrix([
            [c, -s + style.skew * c, 0.0],
            [s, c + style.skew * s, 0.0],
            [0.0, 0.0, 1.0],
        ])?;
        let j = self.config.corner_jitter;
        let src = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
        let mut dst = [(0.0, 0.0); 4];
        for (d, &(x, y)) in dst.iter_mut().zip(&src) {
            let (gx, gy) = geometric.apply(x - cx, y - cy);
            *d = (gx + uniform(&mut rng, -j, j) * w, gy + uniform(&mut rng, -j, j) * h);
        }
        let xmin = dst.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let ymin = dst.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let xmax = dst.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let ymax = dst.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let m = CROP_MARGIN as f64;
        for d in dst.iter_mut() {
            *d = (d.0 - xmin + m, d.1 - ymin + m);
        }
        let h_mat = Homography::from_corners(src, dst)?;
        let out_w = (xmax - xmin + 2.0 * m).ceil() as usize;
        let out_h = (ymax - ymin + 2.0 * m).ceil() as usize;
        let mut warped = perspective_warp(&layer, &h_mat, out_w, out_h)?;

        let n = out_w * out_h;
        let bg = match self.textures.crop(&mut rng, out_w, out_h) {
            Some(crop) => crop,
            None => {
                let spread = uniform(&mut rng, 20.0, 60.0) as f32;
                let lo = uniform(&mut rng, 0.0, 255.0 - spread as f64) as f32;
                value_noise(&mut rng, out_w, out_h, lo, lo + spread)
            }
        };
        let mean = bg.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        let gap = self.config.min_contrast;
        let fg = if mean >= 127.5 {
            uniform(&mut rng, 0.0, (mean - gap).max(0.0))
        } else {
            uniform(&mut rng, (mean + gap).min(255.0), 255.0)
        } as f32;
        warped.gray.iter_mut().for_each(|g| *g = fg);
        let blend = value_noise(&mut rng, out_w, out_h, (fg - 40.0).max(0.0), (fg + 40.0).min(255.0));
        let mix = uniform(&mut rng, self.config.mix_min, self.config.mix_max) as f32;
        compose_scene(&warped, &blend, &bg, mix)
    }
}

/// Renders with the default renderer (procedural atlas, noise textures).
pub fn render_sample(label: &str, mode: RenderMode, seed: u64) -> Result<LabeledImage, RenderError> {
    Renderer::default().render_sample(label, mode, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    const WORD: &str = "\u{0643}\u{062A}\u{0627}\u{0628}";

    #[test]
    fn determinism_and_height() {
        for mode in [RenderMode::Scene, RenderMode::Video] {
            let a = render_sample(WORD, mode, 42).unwrap();
            let b = render_sample(WORD, mode, 42).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.pixels.height(), OUTPUT_HEIGHT);
            let c = render_sample(WORD, mode, 43).unwrap();
            assert_ne!(a.pixels, c.pixels);
        }
    }

    #[test]
    fn video_flat_has_two_levels_and_scene_has_texture() {
        let r = Renderer::default();
        for seed in 0..20 {
            assert_eq!(r.render_video_flat(WORD, seed).unwrap().distinct_values(), 2);
            let scene = r.render_sample(WORD, RenderMode::Scene, seed).unwrap();
            assert!(scene.pixels.distinct_values() > 2);
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let c = RenderConfig::default();
        assert_eq!(RenderConfig::from_key_values(&c.to_key_values()).unwrap(), c);
        let mut kv = KeyValues::default();
        kv.insert("rotation_max_deg", 20);
        assert!(RenderConfig::from_key_values(&kv).is_err());
        let mut kv = KeyValues::default();
        kv.insert("colour", 1);
        assert!(RenderConfig::from_key_values(&kv).is_err());
    }

    #[test]
    fn style_bounds() {
        let mut s = RenderStyle::default();
        assert!(s.validate().is_ok());
        s.rotation = 0.3;
        assert!(s.validate().is_err());
        s.rotation = 0.0;
        s.fg_gray = 100;
        s.bg_gray = 120;
        assert!(s.validate_video().is_err());
    }
}
