//! The assembled CNN-BLSTM recognizer: preprocessing, convolutional
//! stack, column-wise map-to-sequence, bidirectional LSTM stack and a
//! per-frame affine projection onto the CTC classes.

mod checkpoint;
mod config;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::ConfigError;
use crate::ctc::{beam_decode, greedy_decode, CtcError, SequenceLogits};
use crate::nn::gemm::{gemm, Op};
use crate::nn::{
    activation_backward, activation_forward, batchnorm_backward, batchnorm_forward, conv2d_backward,
    conv2d_forward, maxpool_backward, maxpool_forward, Activation, BatchNormCache, BatchNormMode,
    BatchNormState, LayerKind, LayerSpec, NnError, Parameter, PoolCache, Tensor,
};
use crate::recurrent::{LstmStack, RecurrentError, StackCache};
use crate::render::{resize_bilinear, GrayImage};

pub use checkpoint::{Checkpoint, StoredTensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::NetworkConfig;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("network config: {0}")]
    Config(String),
    #[error(transparent)]
    ConfigFile(#[from] ConfigError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Recurrent(#[from] RecurrentError),
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error("image is empty")]
    EmptyImage,
    #[error("input is {found:?} but the network expects [N, 1, {height}, {width}]")]
    InputMismatch {
        height: usize,
        width: usize,
        found: Vec<usize>,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unknown checkpoint version {0}")]
    UnknownVersion(u32),
    #[error("corrupt checkpoint header: {0}")]
    CorruptHeader(String),
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("checkpoint parameters do not match the network: {0}")]
    ParameterMismatch(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Resizes (bilinear) to `height x width`, mirrors left-right so columns
/// run in Arabic reading order, and maps bytes to `[-1, 1]`.
pub fn preprocess(img: &GrayImage, height: usize, width: usize) -> Result<Vec<f64>, ModelError> {
    if img.is_empty() {
        return Err(ModelError::EmptyImage);
    }
    let resized = resize_bilinear(&img.to_f32(), img.width(), img.height(), width, height);
    let mut out = Vec::with_capacity(width * height);
    for row in resized.chunks(width) {
        out.extend(row.iter().rev().map(|&v| v as f64 / 127.5 - 1.0));
    }
    Ok(out)
}

/// Preprocesses images into an `[N, 1, H, W]` batch.
pub fn preprocess_batch(images: &[&GrayImage], height: usize, width: usize) -> Result<Tensor, ModelError> {
    let mut data = Vec::with_capacity(images.len() * height * width);
    for img in images {
        data.extend(preprocess(img, height, width)?);
    }
    Ok(Tensor::from_vec(&[images.len(), 1, height, width], data)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoder {
    Greedy,
    Beam(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    Conv {
        spec: LayerSpec,
        weight: Parameter,
        bias: Parameter,
    },
    Pool(LayerSpec),
    BatchNorm {
        gamma: Parameter,
        beta: Parameter,
        state: BatchNormState,
    },
    Activation(Activation),
}

enum StageCache {
    Input(Tensor),
    Pool(PoolCache),
    BatchNorm(BatchNormCache),
    Activation { x: Tensor, y: Tensor },
}

/// Intermediate values kept by [`Model::forward`] for the backward pass.
pub struct ForwardCache {
    stages: Vec<StageCache>,
    feature_dims: [usize; 4],
    rnn: Vec<(StackCache, Tensor)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: NetworkConfig,
    pub stages: Vec<Stage>,
    pub rnn: LstmStack,
    /// `[classes, 2 * hidden]`.
    pub proj_weight: Parameter,
    pub proj_bias: Parameter,
}

fn uniform_tensor<R: Rng>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
        .expect("length matches shape")
}

impl Model {
    /// Fresh model with seeded random initialization.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(config, Some(&mut rng))
    }

    /// Model with every parameter zero (batch-norm scales one).
    pub fn zeros(config: NetworkConfig) -> Result<Self, ModelError> {
        Self::build(config, None)
    }

    fn build(config: NetworkConfig, mut rng: Option<&mut ChaCha8Rng>) -> Result<Self, ModelError> {
        config.validate()?;
        let shapes = config.shapes_for(config.height, config.width)?;
        let mut stages = Vec::with_capacity(config.layers.len());
        let mut c_in = 1;
        for (spec, &(c, _, _)) in config.layers.iter().zip(&shapes) {
            stages.push(match spec.kind {
                LayerKind::Conv => {
                    let shape = [spec.channels_out, c_in, spec.kernel[0], spec.kernel[1]];
                    let fan_in = (c_in * spec.kernel[0] * spec.kernel[1]) as f64;
                    let weight = match rng.as_deref_mut() {
                        Some(r) => uniform_tensor(r, &shape, (6.0 / fan_in).sqrt()),
                        None => Tensor::zeros(&shape),
                    };
                    Stage::Conv {
                        spec: *spec,
                        weight: Parameter::new(weight),
                        bias: Parameter::new(Tensor::zeros(&[spec.channels_out])),
                    }
                }
                LayerKind::MaxPool => Stage::Pool(*spec),
                LayerKind::BatchNorm => Stage::BatchNorm {
                    gamma: Parameter::new(Tensor::filled(&[c], 1.0)),
                    beta: Parameter::new(Tensor::zeros(&[c])),
                    state: BatchNormState::new(c),
                },
                LayerKind::Activation(a) => Stage::Activation(a),
            });
            c_in = c;
        }
        let (feat, _) = config.feature_shape()?;
        let (h, k) = (config.hidden, config.num_classes());
        let rnn = match rng.as_deref_mut() {
            Some(r) => LstmStack::init(feat, h, config.depth, r),
            None => LstmStack::new(
                (0..config.depth)
                    .map(|i| crate::recurrent::BiLstmLayer::zeros(if i == 0 { feat } else { 2 * h }, h))
                    .collect(),
            )?,
        };
        let proj = match rng {
            Some(r) => uniform_tensor(r, &[k, 2 * h], (6.0 / (k + 2 * h) as f64).sqrt()),
            None => Tensor::zeros(&[k, 2 * h]),
        };
        Ok(Model {
            config,
            stages,
            rnn,
            proj_weight: Parameter::new(proj),
            proj_bias: Parameter::new(Tensor::zeros(&[k])),
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    fn check_input(&self, batch: &Tensor) -> Result<usize, ModelError> {
        let s = batch.shape();
        if s.len() != 4 || s[1] != 1 || s[2] != self.config.height || s[3] != self.config.width || s[0] == 0 {
            return Err(ModelError::InputMismatch {
                height: self.config.height,
                width: self.config.width,
                found: s.to_vec(),
            });
        }
        Ok(s[0])
    }

    /// Runs the network on `[N, 1, H, W]`. Train mode uses batch statistics
    /// in batch-norm layers (updating their running averages) and keeps a
    /// cache for [`Model::backward`].
    pub fn forward(
        &mut self,
        batch: &Tensor,
        mode: BatchNormMode,
    ) -> Result<(Vec<SequenceLogits>, ForwardCache), ModelError> {
        let (logits, cache, states) = self.forward_pass(batch, mode)?;
        let mut states = states.into_iter();
        for stage in &mut self.stages {
            if let Stage::BatchNorm { state, .. } = stage {
                *state = states.next().expect("one state per batch-norm stage");
            }
        }
        Ok((logits, cache))
    }

    /// Inference-mode forward pass; batch-norm running statistics are used
    /// and left untouched.
    pub fn infer(&self, batch: &Tensor) -> Result<Vec<SequenceLogits>, ModelError> {
        Ok(self.forward_pass(batch, BatchNormMode::Infer)?.0)
    }

    /// Forward computation on `&self`; returns the batch-norm statistics as
    /// they stand after the pass.
    fn forward_pass(
        &self,
        batch: &Tensor,
        mode: BatchNormMode,
    ) -> Result<(Vec<SequenceLogits>, ForwardCache, Vec<BatchNormState>), ModelError> {
        let n = self.check_input(batch)?;
        let mut caches = Vec::with_capacity(self.stages.len());
        let mut states = Vec::new();
        let mut x = batch.clone();
        for stage in &self.stages {
            x = match stage {
                Stage::Conv { spec, weight, bias } => {
                    let y = conv2d_forward(&x, &weight.value, &bias.value, spec)?;
                    caches.push(StageCache::Input(x));
                    y
                }
                Stage::Pool(spec) => {
                    let (y, c) = maxpool_forward(&x, spec)?;
                    caches.push(StageCache::Pool(c));
                    y
                }
                Stage::BatchNorm { gamma, beta, state } => {
                    let mut state = state.clone();
                    let (y, c) = batchnorm_forward(&x, &gamma.value, &beta.value, &mut state, mode)?;
                    states.push(state);
                    caches.push(StageCache::BatchNorm(c));
                    y
                }
                Stage::Activation(kind) => {
                    let y = activation_forward(&x, *kind);
                    caches.push(StageCache::Activation { x, y: y.clone() });
                    y
                }
            };
        }
        let feature_dims = x.dims4()?;
        let [_, c, _, t] = feature_dims;
        let items: Vec<Tensor> = (0..n)
            .map(|b| {
                let plane = &x.data()[b * c * t..(b + 1) * c * t];
                let mut seq = vec![0.0; t * c];
                for ch in 0..c {
                    for step in 0..t {
                        seq[step * c + ch] = plane[ch * t + step];
                    }
                }
                Tensor::from_vec(&[t, c], seq).expect("sized")
            })
            .collect();
        let rnn = &self.rnn;
        let (w, bias) = (&self.proj_weight.value, &self.proj_bias.value);
        let k = bias.len();
        let outputs: Vec<Result<(SequenceLogits, (StackCache, Tensor)), ModelError>> = items
            .into_par_iter()
            .map(|seq| {
                let (hs, cache) = rnn.forward(&seq)?;
                let [steps, d] = hs.dims2()?;
                let mut logits = vec![0.0; steps * k];
                for row in logits.chunks_mut(k) {
                    row.copy_from_slice(bias.data());
                }
                gemm(steps, d, k, 1.0, hs.data(), Op::N, w.data(), Op::T, 1.0, &mut logits);
                let logits = SequenceLogits::new(Tensor::from_vec(&[steps, k], logits)?)?;
                Ok((logits, (cache, hs)))
            })
            .collect();
        let mut logits = Vec::with_capacity(n);
        let mut rnn_caches = Vec::with_capacity(n);
        for o in outputs {
            let (l, c) = o?;
            logits.push(l);
            rnn_caches.push(c);
        }
        Ok((
            logits,
            ForwardCache {
                stages: caches,
                feature_dims,
                rnn: rnn_caches,
            },
            states,
        ))
    }

    /// Adds the gradients of the loss whose logit gradients are `dlogits`
    /// to every parameter's `grad`.
    pub fn backward(&mut self, cache: &ForwardCache, dlogits: &[Tensor]) -> Result<(), ModelError> {
        if dlogits.len() != cache.rnn.len() {
            return Err(ModelError::Config(format!(
                "{} logit gradients for a batch of {}",
                dlogits.len(),
                cache.rnn.len()
            )));
        }
        let rnn = &self.rnn;
        let w = &self.proj_weight.value;
        let k = self.proj_bias.value.len();
        let per_item: Vec<Result<_, ModelError>> = dlogits
            .par_iter()
            .zip(cache.rnn.par_iter())
            .map(|(dy, (stack_cache, hs))| {
                let [steps, d] = hs.dims2()?;
                if dy.shape() != [steps, k] {
                    return Err(ModelError::Config(format!("logit gradient shape {:?}", dy.shape())));
                }
                let mut dw = vec![0.0; k * d];
                gemm(k, steps, d, 1.0, dy.data(), Op::T, hs.data(), Op::N, 0.0, &mut dw);
                let mut db = vec![0.0; k];
                for row in dy.data().chunks(k) {
                    for (a, b) in db.iter_mut().zip(row) {
                        *a += b;
                    }
                }
                let mut dh = vec![0.0; steps * d];
                gemm(steps, k, d, 1.0, dy.data(), Op::N, w.data(), Op::N, 0.0, &mut dh);
                let dh = Tensor::from_vec(&[steps, d], dh)?;
                let (dseq, grads) = rnn.backward(&dh, stack_cache)?;
                Ok((dw, db, dseq, grads))
            })
            .collect();
        let [n, c, fh, t] = cache.feature_dims;
        let mut dfeat = Tensor::zeros(&[n, c, fh, t]);
        for (b, item) in per_item.into_iter().enumerate() {
            let (dw, db, dseq, grads) = item?;
            for (g, v) in self.proj_weight.grad.data_mut().iter_mut().zip(&dw) {
                *g += v;
            }
            for (g, v) in self.proj_bias.grad.data_mut().iter_mut().zip(&db) {
                *g += v;
            }
            self.rnn.accumulate(&grads)?;
            let plane = &mut dfeat.data_mut()[b * c * t..(b + 1) * c * t];
            for ch in 0..c {
                for step in 0..t {
                    plane[ch * t + step] = dseq.data()[step * c + ch];
                }
            }
        }
        let mut dy = dfeat;
        for (stage, sc) in self.stages.iter_mut().zip(&cache.stages).rev() {
            dy = match (stage, sc) {
                (Stage::Conv { spec, weight, bias }, StageCache::Input(x)) => {
                    let g = conv2d_backward(x, &weight.value, spec, &dy)?;
                    weight.grad.add_assign(&g.dw)?;
                    bias.grad.add_assign(&g.db)?;
                    g.dx
                }
                (Stage::Pool(_), StageCache::Pool(c)) => maxpool_backward(&dy, c)?,
                (Stage::BatchNorm { gamma, beta, .. }, StageCache::BatchNorm(c)) => {
                    let (dx, dg, db) = batchnorm_backward(&dy, &gamma.value, c)?;
                    gamma.grad.add_assign(&dg)?;
                    beta.grad.add_assign(&db)?;
                    dx
                }
                (Stage::Activation(kind), StageCache::Activation { x, y }) => {
                    activation_backward(x, y, &dy, *kind)
                }
                _ => return Err(ModelError::Config("forward cache does not match the network".into())),
            };
        }
        Ok(())
    }

    /// Trainable parameters with stable names, in checkpoint order.
    pub fn parameters(&self) -> Vec<(String, &Parameter)> {
        let mut out = Vec::new();
        for (i, stage) in self.stages.iter().enumerate() {
            match stage {
                Stage::Conv { weight, bias, .. } => {
                    out.push((format!("conv{i}.weight"), weight));
                    out.push((format!("conv{i}.bias"), bias));
                }
                Stage::BatchNorm { gamma, beta, .. } => {
                    out.push((format!("bn{i}.gamma"), gamma));
                    out.push((format!("bn{i}.beta"), beta));
                }
                _ => {}
            }
        }
        for (l, layer) in self.rnn.layers.iter().enumerate() {
            for (dir, p) in [("fwd", &layer.forward), ("bwd", &layer.backward)] {
                let [w_ih, w_hh, b] = p.parameters();
                out.push((format!("rnn{l}.{dir}.w_ih"), w_ih));
                out.push((format!("rnn{l}.{dir}.w_hh"), w_hh));
                out.push((format!("rnn{l}.{dir}.bias"), b));
            }
        }
        out.push(("proj.weight".into(), &self.proj_weight));
        out.push(("proj.bias".into(), &self.proj_bias));
        out
    }

    /// Mutable access in the same order as [`Model::parameters`].
    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for stage in &mut self.stages {
            match stage {
                Stage::Conv { weight, bias, .. } => {
                    out.push(weight);
                    out.push(bias);
                }
                Stage::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma);
                    out.push(beta);
                }
                _ => {}
            }
        }
        for layer in &mut self.rnn.layers {
            out.extend(layer.forward.parameters_mut());
            out.extend(layer.backward.parameters_mut());
        }
        out.push(&mut self.proj_weight);
        out.push(&mut self.proj_bias);
        out
    }

    /// Every stored tensor (parameters, then batch-norm running statistics)
    /// with its name.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> =
            self.parameters().into_iter().map(|(n, p)| (n, &p.value)).collect();
        for (i, stage) in self.stages.iter().enumerate() {
            if let Stage::BatchNorm { state, .. } = stage {
                out.push((format!("bn{i}.running_mean"), &state.running_mean));
                out.push((format!("bn{i}.running_var"), &state.running_var));
            }
        }
        out
    }

    pub(crate) fn named_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        let mut states = Vec::new();
        for stage in &mut self.stages {
            match stage {
                Stage::Conv { weight, bias, .. } => {
                    out.push(&mut weight.value);
                    out.push(&mut bias.value);
                }
                Stage::BatchNorm { gamma, beta, state } => {
                    out.push(&mut gamma.value);
                    out.push(&mut beta.value);
                    states.push(state);
                }
                _ => {}
            }
        }
        for layer in &mut self.rnn.layers {
            for p in layer.forward.parameters_mut() {
                out.push(&mut p.value);
            }
            for p in layer.backward.parameters_mut() {
                out.push(&mut p.value);
            }
        }
        out.push(&mut self.proj_weight.value);
        out.push(&mut self.proj_bias.value);
        for s in states {
            out.push(&mut s.running_mean);
            out.push(&mut s.running_var);
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|(_, p)| p.value.len()).sum()
    }

    /// Rounds every stored value to single precision, the checkpoint
    /// storage format.
    pub fn round_to_f32(&mut self) {
        for t in self.named_tensors_mut() {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Transcribes images (any size; they are resized to the input size).
    pub fn recognize(&self, images: &[&GrayImage], decoder: Decoder) -> Result<Vec<String>, ModelError> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let batch = preprocess_batch(images, self.config.height, self.config.width)?;
        let logits = self.infer(&batch)?;
        logits
            .iter()
            .map(|l| {
                let labels = match decoder {
                    Decoder::Greedy => greedy_decode(l),
                    Decoder::Beam(w) => beam_decode(l, w)?,
                };
                Ok(self.config.alphabet.decode(&labels))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctc::Alphabet;

    fn alphabet() -> Alphabet {
        Alphabet::new(vec!['a', 'b', 'c']).unwrap()
    }

    #[test]
    fn preprocess_scaling_and_flip() {
        let img = GrayImage::filled(100, 32, 128);
        let v = preprocess(&img, 32, 100).unwrap();
        assert!(v.iter().all(|&x| (x - (128.0 / 127.5 - 1.0)).abs() < 1e-12));
        assert!((v[0] - 0.00392).abs() < 1e-5);
        let ramp = GrayImage::new(4, 1, vec![0, 85, 170, 255]).unwrap();
        assert_eq!(preprocess(&ramp, 1, 4).unwrap(), vec![1.0, 170.0 / 127.5 - 1.0, 85.0 / 127.5 - 1.0, -1.0]);
        assert!(matches!(
            preprocess(&GrayImage::filled(0, 0, 0), 32, 100),
            Err(ModelError::EmptyImage)
        ));
    }

    #[test]
    fn logits_have_derived_length_and_identical_items_agree() {
        let config = NetworkConfig::toy(alphabet());
        let mut model = Model::new(config.clone(), 1).unwrap();
        let img = GrayImage::new(20, 8, (0..160).map(|i| (i * 7 % 256) as u8).collect()).unwrap();
        let batch = preprocess_batch(&[&img, &img], 8, 20).unwrap();
        let (logits, _) = model.forward(&batch, BatchNormMode::Train).unwrap();
        assert_eq!(logits.len(), 2);
        assert_eq!(logits[0].frames(), config.sequence_length().unwrap());
        assert_eq!(logits[0].classes(), 4);
        assert_eq!(logits[0], logits[1]);
    }

    #[test]
    fn wrong_width_is_a_config_mismatch() {
        let model = Model::new(NetworkConfig::toy(alphabet()), 1).unwrap();
        let batch = Tensor::zeros(&[1, 1, 8, 24]);
        assert!(matches!(model.infer(&batch), Err(ModelError::InputMismatch { .. })));
    }

    #[test]
    fn parameter_names_are_unique() {
        let model = Model::new(NetworkConfig::toy(alphabet()), 1).unwrap();
        let names: Vec<String> = model.named_tensors().into_iter().map(|(n, _)| n).collect();
        let set: std::collections::BTreeSet<_> = names.iter().collect();
        assert_eq!(set.len(), names.len());
        assert_eq!(model.parameters().len(), model.clone().parameters_mut().len());
    }
}
