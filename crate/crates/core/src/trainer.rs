//! Minibatch training with Adadelta updates, validation, and fine-tuning.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ctc::{ctc_loss, required_frames, Alphabet, CtcError};
use crate::eval::{evaluate, EvalPair, Granularity};
use crate::model::{preprocess_batch, Checkpoint, Decoder, Model, ModelError};
use crate::nn::{BatchNormMode, Parameter};
use crate::render::{pgm, CorpusManifest, GrayImage, RenderError};
use crate::seed::{derive_seed, mix_seed};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("alphabet lacks characters: {}", format_chars(.0))]
    MissingCharacters(Vec<char>),
    #[error("{infeasible} of {total} samples cannot be aligned in the available frames (limit 1%)")]
    TooManyInfeasible { infeasible: usize, total: usize },
    #[error("non-finite gradient in {name} at index {index}: {value}")]
    NonFiniteGradient {
        name: String,
        index: usize,
        value: f64,
    },
    #[error("invalid hyperparameters: {0}")]
    Hyper(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Ctc(#[from] CtcError),
}

fn format_chars(chars: &[char]) -> String {
    chars
        .iter()
        .map(|c| format!("{c:?} (U+{:04X})", *c as u32))
        .collect::<Vec<_>>()
        .join(", ")
}

/// One labeled image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub image: GrayImage,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Loads every image listed in a corpus manifest; paths are relative to
    /// the manifest's directory.
    pub fn from_manifest(path: &Path) -> Result<Self, TrainError> {
        let manifest = CorpusManifest::load(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let samples = manifest
            .records
            .iter()
            .map(|r| {
                Ok(Sample {
                    image: pgm::read_pgm(&dir.join(&r.path))?,
                    label: r.label.clone(),
                })
            })
            .collect::<Result<Vec<_>, RenderError>>()?;
        Ok(Dataset { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sorted set of label characters.
    pub fn characters(&self) -> BTreeSet<char> {
        self.samples.iter().flat_map(|s| s.label.chars()).collect()
    }

    pub fn alphabet(&self) -> Result<Alphabet, CtcError> {
        Alphabet::new(self.characters().into_iter().collect())
    }
}

/// Running averages for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaSlot {
    pub mean_sq_grad: Vec<f64>,
    pub mean_sq_update: Vec<f64>,
}

impl AdadeltaSlot {
    pub fn new(len: usize) -> Self {
        AdadeltaSlot {
            mean_sq_grad: vec![0.0; len],
            mean_sq_update: vec![0.0; len],
        }
    }
}

/// One Adadelta update of `param` in place.
pub fn adadelta_step(param: &mut [f64], grad: &[f64], slot: &mut AdadeltaSlot, rho: f64, eps: f64) {
    for i in 0..param.len() {
        let g = grad[i];
        let eg = &mut slot.mean_sq_grad[i];
        *eg = rho * *eg + (1.0 - rho) * g * g;
        let ex = &mut slot.mean_sq_update[i];
        let delta = -((*ex + eps).sqrt() / (*eg + eps).sqrt()) * g;
        *ex = rho * *ex + (1.0 - rho) * delta * delta;
        param[i] += delta;
    }
}

/// Optimizer state for a whole model, one slot per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    pub rho: f64,
    pub eps: f64,
    pub slots: Vec<AdadeltaSlot>,
}

impl AdadeltaState {
    pub fn new(model: &Model, rho: f64, eps: f64) -> Self {
        AdadeltaState {
            rho,
            eps,
            slots: model
                .parameters()
                .iter()
                .map(|(_, p)| AdadeltaSlot::new(p.value.len()))
                .collect(),
        }
    }

    /// Applies one update to every parameter. Gradients are checked first,
    /// so a non-finite value leaves the model untouched.
    pub fn step(&mut self, model: &mut Model) -> Result<(), TrainError> {
        for (name, p) in model.parameters() {
            if let Some((index, &value)) = p.grad.data().iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(TrainError::NonFiniteGradient { name, index, value });
            }
        }
        let (rho, eps) = (self.rho, self.eps);
        for (p, slot) in model.parameters_mut().into_iter().zip(&mut self.slots) {
            let Parameter { value, grad } = p;
            adadelta_step(value.data_mut(), grad.data(), slot, rho, eps);
        }
        Ok(())
    }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(model: &mut Model, max_norm: f64) -> f64 {
    let norm = model
        .parameters()
        .iter()
        .flat_map(|(_, p)| p.grad.data().iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for p in model.parameters_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub rho: f64,
    pub eps: f64,
    /// Global gradient-norm limit; off by default.
    pub clip: Option<f64>,
    /// Worker threads; 1 gives the deterministic single-threaded mode and
    /// 0 uses the global pool.
    pub threads: usize,
    /// Stop once validation word accuracy reaches this value.
    pub target_wrr: Option<f64>,
    /// Where to write the best checkpoint as training progresses.
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            epochs: 10,
            batch_size: 32,
            seed: 0,
            rho: 0.95,
            eps: 1e-6,
            clip: None,
            threads: 1,
            target_wrr: None,
            checkpoint_path: None,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Hyper("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.rho) || !(self.eps > 0.0) {
            return Err(TrainError::Hyper("rho must lie in [0, 1) and eps be positive".into()));
        }
        if let Some(c) = self.clip {
            if !(c > 0.0) {
                return Err(TrainError::Hyper("clip must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_crr: Option<f64>,
    pub val_wrr: Option<f64>,
}

impl fmt::Display for EpochLog {
    /// `epoch<TAB>mean_loss<TAB>val_crr<TAB>val_wrr`; missing validation
    /// values print as `NA`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.6}"));
        write!(
            f,
            "{}\t{:.6}\t{}\t{}",
            self.epoch,
            self.mean_loss,
            opt(self.val_crr),
            opt(self.val_wrr)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub log: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub skipped_infeasible: usize,
}

/// Encodes labels, skipping those that cannot be aligned in `frames`.
fn encode_corpus(alphabet: &Alphabet, data: &Dataset, frames: usize) -> Result<(Vec<Option<Vec<usize>>>, usize), TrainError> {
    let missing: BTreeSet<char> = data.samples.iter().flat_map(|s| alphabet.missing(&s.label)).collect();
    if !missing.is_empty() {
        return Err(TrainError::MissingCharacters(missing.into_iter().collect()));
    }
    let mut infeasible = 0;
    let targets = data
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let t = alphabet.encode(&s.label)?;
            if required_frames(&t) > frames {
                infeasible += 1;
                warn!(
                    "sample {i} ({:?}) needs {} frames, only {frames} available; skipped ({infeasible} so far)",
                    s.label,
                    required_frames(&t)
                );
                Ok(None)
            } else {
                Ok(Some(t))
            }
        })
        .collect::<Result<Vec<_>, CtcError>>()?;
    if infeasible * 100 > data.len() {
        return Err(TrainError::TooManyInfeasible {
            infeasible,
            total: data.len(),
        });
    }
    Ok((targets, infeasible))
}

/// Forward and backward over one batch, adding `scale` times the gradient
/// of the summed CTC loss into the model. Returns the unscaled summed loss.
pub fn accumulate_batch(model: &mut Model, images: &[&GrayImage], targets: &[&[usize]], scale: f64) -> Result<f64, TrainError> {
    let cfg = model.config();
    let batch = preprocess_batch(images, cfg.height, cfg.width)?;
    let (logits, cache) = model.forward(&batch, BatchNormMode::Train)?;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (l, t) in logits.iter().zip(targets) {
        let out = ctc_loss(l, t)?;
        total += out.loss;
        let mut g = out.grad;
        if scale != 1.0 {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
        grads.push(g);
    }
    model.backward(&cache, &grads)?;
    Ok(total)
}

/// Character and word recognition rates of greedy transcriptions.
pub fn validate_model(model: &Model, data: &Dataset) -> Result<(f64, f64), TrainError> {
    let mut pairs = Vec::with_capacity(data.len());
    for chunk in data.samples.chunks(64) {
        let images: Vec<&GrayImage> = chunk.iter().map(|s| &s.image).collect();
        let rts = model.recognize(&images, Decoder::Greedy)?;
        for (rt, s) in rts.into_iter().zip(chunk) {
            pairs.push(EvalPair::new(&rt, &s.label));
        }
    }
    let report = evaluate(&pairs, Granularity::Word).map_err(|e| TrainError::Hyper(e.to_string()))?;
    Ok((report.crr, report.wrr))
}

fn run_in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, TrainError> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| TrainError::Hyper(e.to_string()))?;
    Ok(pool.install(f))
}

fn training_loop(
    mut model: Model,
    train: &Dataset,
    val: &Dataset,
    hyper: &TrainHyper,
    start: Checkpoint,
) -> Result<(Checkpoint, TrainRun), TrainError> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let frames = model.config().sequence_length()?;
    let alphabet = model.config().alphabet.clone();
    let (targets, skipped) = encode_corpus(&alphabet, train, frames)?;
    if !val.is_empty() {
        let missing: BTreeSet<char> = val.samples.iter().flat_map(|s| alphabet.missing(&s.label)).collect();
        if !missing.is_empty() {
            return Err(TrainError::MissingCharacters(missing.into_iter().collect()));
        }
    }
    let usable: Vec<usize> = (0..train.len()).filter(|&i| targets[i].is_some()).collect();
    let mut optimizer = AdadeltaState::new(&model, hyper.rho, hyper.eps);
    let shuffle_seed = derive_seed(hyper.seed, "shuffle");
    let mut log = Vec::with_capacity(hyper.epochs);
    let mut best: Option<(f64, usize)> = None;
    let mut best_ckpt = start;
    for epoch in 1..=hyper.epochs {
        let mut order = usable.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(shuffle_seed, epoch as u64)));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(hyper.batch_size) {
            let images: Vec<&GrayImage> = chunk.iter().map(|&i| &train.samples[i].image).collect();
            let tgts: Vec<&[usize]> = chunk
                .iter()
                .map(|&i| targets[i].as_deref().expect("usable"))
                .collect();
            model.zero_grad();
            let loss = accumulate_batch(&mut model, &images, &tgts, 1.0 / chunk.len() as f64)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteGradient {
                    name: "loss".into(),
                    index: epoch,
                    value: loss,
                });
            }
            if let Some(c) = hyper.clip {
                clip_gradients(&mut model, c);
            }
            optimizer.step(&mut model)?;
            epoch_loss += loss;
        }
        let mean_loss = epoch_loss / usable.len() as f64;
        let (val_crr, val_wrr) = if val.is_empty() {
            (None, None)
        } else {
            let (c, w) = validate_model(&model, val)?;
            (Some(c), Some(w))
        };
        let entry = EpochLog {
            epoch,
            mean_loss,
            val_crr,
            val_wrr,
        };
        info!("{entry}");
        log.push(entry);
        // without validation data the latest epoch counts as best
        let score = val_crr.unwrap_or(epoch as f64);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, epoch));
            best_ckpt = Checkpoint::from_model(&model, epoch, mean_loss);
            if let Some(path) = &hyper.checkpoint_path {
                best_ckpt.save(path)?;
            }
        }
        if let (Some(target), Some(w)) = (hyper.target_wrr, val_wrr) {
            if w >= target {
                info!("validation WRR {w:.4} reached target {target}; stopping");
                break;
            }
        }
    }
    Ok((
        best_ckpt,
        TrainRun {
            log,
            best_epoch: best.map(|(_, e)| e),
            skipped_infeasible: skipped,
        },
    ))
}

/// Trains `model` on `train`, validating on `val` after every epoch. The
/// returned checkpoint holds the parameters with the best validation CRR.
pub fn train(model: Model, train: &Dataset, val: &Dataset, hyper: &TrainHyper) -> Result<(Checkpoint, TrainRun), TrainError> {
    let start = Checkpoint::from_model(&model, 0, 0.0);
    run_in_pool(hyper.threads, || training_loop(model, train, val, hyper, start))?
}

/// Resumes training from `checkpoint` with fresh optimizer state. The
/// checkpoint alphabet must cover every character of both corpora.
pub fn finetune(
    checkpoint: &Checkpoint,
    train: &Dataset,
    val: &Dataset,
    hyper: &TrainHyper,
) -> Result<(Checkpoint, TrainRun), TrainError> {
    let alphabet = &checkpoint.config.alphabet;
    let missing: BTreeSet<char> = train
        .samples
        .iter()
        .chain(&val.samples)
        .flat_map(|s| alphabet.missing(&s.label))
        .collect();
    if !missing.is_empty() {
        return Err(TrainError::MissingCharacters(missing.into_iter().collect()));
    }
    let model = checkpoint.to_model()?;
    let start = checkpoint.clone();
    run_in_pool(hyper.threads, || training_loop(model, train, val, hyper, start))?
}
