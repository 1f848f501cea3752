use std::fmt::Write as _;

use crate::config::KeyValues;
use crate::ctc::Alphabet;
use crate::nn::{Activation, LayerKind, LayerSpec};
use crate::render::RenderMode;

use super::ModelError;

/// Architecture of the recognizer: conv stack, recurrent sizes, alphabet
/// and fixed input size.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub layers: Vec<LayerSpec>,
    /// Hidden units per direction in each bidirectional layer.
    pub hidden: usize,
    /// Number of stacked bidirectional layers.
    pub depth: usize,
    pub alphabet: Alphabet,
    pub height: usize,
    pub width: usize,
}

fn conv(c: usize) -> LayerSpec {
    LayerSpec::conv([3, 3], [1, 1], c)
}

fn relu() -> LayerSpec {
    LayerSpec::activation(Activation::Relu)
}

impl NetworkConfig {
    /// VGG-style stack with rectangular third and fourth pools, two
    /// bidirectional layers of 256 units.
    pub fn default_for(mode: RenderMode, alphabet: Alphabet) -> Self {
        let width = match mode {
            RenderMode::Scene => 100,
            RenderMode::Video => 504,
        };
        let layers = vec![
            conv(64),
            relu(),
            LayerSpec::max_pool([2, 2], [2, 2]),
            conv(128),
            relu(),
            LayerSpec::max_pool([2, 2], [2, 2]),
            conv(256),
            relu(),
            conv(256),
            relu(),
            LayerSpec::max_pool([2, 1], [2, 1]),
            conv(512),
            LayerSpec::batch_norm(),
            relu(),
            conv(512),
            LayerSpec::batch_norm(),
            relu(),
            LayerSpec::max_pool([2, 1], [2, 1]),
            LayerSpec::conv([2, 2], [0, 0], 512),
            relu(),
        ];
        NetworkConfig {
            layers,
            hidden: 256,
            depth: 2,
            alphabet,
            height: 32,
            width,
        }
    }

    /// Small network for 8x20 inputs, used by gradient checks.
    pub fn toy(alphabet: Alphabet) -> Self {
        NetworkConfig {
            layers: vec![
                LayerSpec::conv([3, 3], [1, 1], 4),
                relu(),
                LayerSpec::max_pool([2, 2], [2, 2]),
                LayerSpec::conv([3, 3], [1, 1], 8),
                LayerSpec::batch_norm(),
                relu(),
                LayerSpec::max_pool([2, 1], [2, 1]),
                LayerSpec::conv([2, 2], [0, 0], 8),
                relu(),
            ],
            hidden: 6,
            depth: 1,
            alphabet,
            height: 8,
            width: 20,
        }
    }

    /// Divides every conv width by `divisor` (at least one channel).
    pub fn with_channel_divisor(mut self, divisor: usize) -> Self {
        for l in &mut self.layers {
            if l.kind == LayerKind::Conv {
                l.channels_out = (l.channels_out / divisor.max(1)).max(1);
            }
        }
        self
    }

    pub fn with_recurrent(mut self, hidden: usize, depth: usize) -> Self {
        self.hidden = hidden;
        self.depth = depth;
        self
    }

    pub fn with_input(mut self, height: usize, width: usize) -> Self {
        self.height = height;
        self.width = width;
        self
    }

    /// Output classes including the blank.
    pub fn num_classes(&self) -> usize {
        self.alphabet.num_classes()
    }

    /// `(channels, height, width)` after each layer, for input `height x width`.
    pub fn shapes_for(&self, height: usize, width: usize) -> Result<Vec<(usize, usize, usize)>, ModelError> {
        let mut c = 1;
        let (mut h, mut w) = (height, width);
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            l.validate()?;
            if l.kind == LayerKind::BatchNorm && i == 0 {
                return Err(ModelError::Config("batch norm cannot be the first layer".into()));
            }
            (h, w) = l.output_hw(h, w)?;
            if l.kind == LayerKind::Conv {
                c = l.channels_out;
            }
            out.push((c, h, w));
        }
        Ok(out)
    }

    /// Channels and sequence length of the feature sequence.
    pub fn feature_shape(&self) -> Result<(usize, usize), ModelError> {
        let shapes = self.shapes_for(self.height, self.width)?;
        let &(c, h, w) = shapes
            .last()
            .ok_or_else(|| ModelError::Config("empty conv stack".into()))?;
        if h != 1 {
            return Err(ModelError::Config(format!(
                "conv stack leaves height {h}, expected 1"
            )));
        }
        Ok((c, w))
    }

    pub fn sequence_length(&self) -> Result<usize, ModelError> {
        self.feature_shape().map(|(_, t)| t)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden == 0 || self.depth == 0 {
            return Err(ModelError::Config("recurrent stack needs hidden >= 1 and depth >= 1".into()));
        }
        if !self.layers.iter().any(|l| l.kind == LayerKind::Conv) {
            return Err(ModelError::Config("conv stack has no convolution".into()));
        }
        self.feature_shape().map(|_| ())
    }

    /// `key=value` text, as stored in checkpoints.
    pub fn to_text(&self) -> String {
        let layers: Vec<String> = self.layers.iter().map(ToString::to_string).collect();
        let alphabet: Vec<String> = self
            .alphabet
            .classes()
            .iter()
            .map(|&c| format!("{:04X}", c as u32))
            .collect();
        let mut out = String::new();
        let _ = writeln!(out, "height={}", self.height);
        let _ = writeln!(out, "width={}", self.width);
        let _ = writeln!(out, "hidden={}", self.hidden);
        let _ = writeln!(out, "depth={}", self.depth);
        let _ = writeln!(out, "layers={}", layers.join(","));
        let _ = writeln!(out, "alphabet={}", alphabet.join(" "));
        out
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self, ModelError> {
        let need = |k: &str| -> Result<usize, ModelError> {
            kv.get::<usize>(k)?
                .ok_or_else(|| ModelError::Config(format!("missing key {k}")))
        };
        let layers = kv
            .get_raw("layers")
            .ok_or_else(|| ModelError::Config("missing key layers".into()))?
            .split(',')
            .map(|s| s.trim().parse::<LayerSpec>())
            .collect::<Result<Vec<_>, _>>()?;
        let classes = kv
            .get_raw("alphabet")
            .ok_or_else(|| ModelError::Config("missing key alphabet".into()))?
            .split_whitespace()
            .map(|h| {
                u32::from_str_radix(h, 16)
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| ModelError::Config(format!("bad alphabet code {h:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let config = NetworkConfig {
            layers,
            hidden: need("hidden")?,
            depth: need("depth")?,
            alphabet: Alphabet::new(classes)?,
            height: need("height")?,
            width: need("width")?,
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alphabet() -> Alphabet {
        Alphabet::new(vec!['\u{0628}', '\u{062A}']).unwrap()
    }

    /// Independent shape arithmetic for the default stack.
    fn oracle_length(width: usize) -> usize {
        let w = width / 2 / 2; // two square pools
        w - 1 // final 2x2 valid conv; rectangular pools keep the width
    }

    #[test]
    fn default_lengths_match_shape_oracle() {
        let scene = NetworkConfig::default_for(RenderMode::Scene, alphabet());
        assert_eq!(scene.feature_shape().unwrap(), (512, 24));
        assert_eq!(oracle_length(100), 24);
        let video = NetworkConfig::default_for(RenderMode::Video, alphabet());
        assert_eq!(video.feature_shape().unwrap(), (512, oracle_length(504)));
        assert_eq!(video.sequence_length().unwrap(), 125);
        let narrow = scene.clone().with_input(32, 20);
        assert_eq!(narrow.sequence_length().unwrap(), oracle_length(20));
    }

    #[test]
    fn height_must_collapse() {
        let tall = NetworkConfig::default_for(RenderMode::Scene, alphabet()).with_input(64, 100);
        assert!(matches!(tall.validate(), Err(ModelError::Config(_))));
    }

    #[test]
    fn text_round_trip() {
        let c = NetworkConfig::default_for(RenderMode::Video, alphabet()).with_channel_divisor(8);
        let kv = KeyValues::parse(&c.to_text()).unwrap();
        assert_eq!(NetworkConfig::from_key_values(&kv).unwrap(), c);
        assert_eq!(NetworkConfig::toy(alphabet()).sequence_length().unwrap(), 9);
    }
}
