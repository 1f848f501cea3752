//! Command-line entry point: shaping diagnostics, corpus synthesis,
//! training, fine-tuning, evaluation and recognition.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use arabic_ocr::config::{ConfigError, KeyValues};
use arabic_ocr::ctc::{Alphabet, CtcError};
use arabic_ocr::eval::{evaluate, join_predictions, parse_predictions, Granularity};
use arabic_ocr::model::{Checkpoint, Decoder, Model, ModelError, NetworkConfig};
use arabic_ocr::render::{build_corpus, pgm, CorpusManifest, RenderConfig, RenderError, RenderMode, Renderer};
use arabic_ocr::seed::derive_seed;
use arabic_ocr::shaper::{normalize_label, shape, split_paws, GlyphBase, ShapeError};
use arabic_ocr::trainer::{finetune, train, Dataset, TrainError, TrainHyper, TrainRun};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arabic-ocr", version, about = "Arabic scene and video text recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the glyph, form and paw breakdown of a text.
    Shape {
        text: String,
    },
    /// Render a synthetic corpus from a vocabulary file.
    Synth(SynthArgs),
    /// Train a recognizer from scratch.
    Train(TrainArgs),
    /// Continue training from a checkpoint with fresh optimizer state.
    Finetune(FinetuneArgs),
    /// Score predictions against a corpus manifest.
    Eval(EvalArgs),
    /// Transcribe images with a trained checkpoint.
    Recognize(RecognizeArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// One label per line.
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// key=value file with rendering ranges and any of the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct HyperArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Enable gradient-norm clipping at this value.
    #[arg(long)]
    clip: Option<f64>,
    /// Stop once validation WRR reaches this value.
    #[arg(long)]
    target_wrr: Option<f64>,
    /// Also write the per-epoch log here.
    #[arg(long)]
    log: Option<PathBuf>,
    /// key=value file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    val_manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Alphabet file (one character per line); derived from the corpus if absent.
    #[arg(long)]
    alphabet: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    channel_divisor: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    val_manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Lines of `image_path<TAB>recognized text`.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, default_value = "word")]
    granularity: String,
}

#[derive(Args)]
struct RecognizeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Transcribe every image of this manifest (paths printed as listed).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Beam width; greedy decoding when absent.
    #[arg(long)]
    beam: Option<usize>,
    images: Vec<PathBuf>,
}

/// Failure classes with distinct exit codes.
#[derive(Debug)]
enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ShapeError> for CliError {
    fn from(e: ShapeError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Config(_) | RenderError::ConfigFile(_) | RenderError::InvalidStyle(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) | ModelError::ConfigFile(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CtcError> for CliError {
    fn from(e: CtcError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteGradient { .. } => CliError::Numeric(e.to_string()),
            TrainError::Hyper(_) => CliError::Config(e.to_string()),
            TrainError::Model(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

/// Flag > config file > default resolution, recording what was chosen.
struct Resolver {
    file: KeyValues,
    resolved: Vec<(String, String)>,
}

impl Resolver {
    fn new(path: Option<&Path>) -> Result<Self, CliError> {
        let file = match path {
            Some(p) => KeyValues::load(p)?,
            None => KeyValues::default(),
        };
        Ok(Resolver {
            file,
            resolved: Vec::new(),
        })
    }

    fn pick<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError> {
        let v = match flag {
            Some(v) => v,
            None => self.file.get::<T>(key)?.unwrap_or(default),
        };
        self.resolved.push((key.to_string(), v.to_string()));
        Ok(v)
    }

    fn pick_opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file.get::<T>(key)?,
        };
        self.resolved.push((
            key.to_string(),
            v.as_ref().map_or_else(|| "none".to_string(), ToString::to_string),
        ));
        Ok(v)
    }

    fn note(&mut self, key: &str, value: impl Display) {
        self.resolved.push((key.to_string(), value.to_string()));
    }

    /// Resolved settings go to stderr so stdout carries only results.
    fn echo(&self) {
        for (k, v) in &self.resolved {
            eprintln!("config\t{k}\t{v}");
        }
    }
}

fn parse_mode(s: &str) -> Result<RenderMode, CliError> {
    s.parse().map_err(|e: RenderError| CliError::Config(e.to_string()))
}

fn cmd_shape(text: &str) -> Result<(), CliError> {
    if text.is_empty() {
        return Err(CliError::Config("shape needs a non-empty text argument".into()));
    }
    let glyphs = shape(text)?;
    let normalized: Vec<char> = normalize_label(text).chars().collect();
    println!("index\tglyph\tcodepoints\tform\tpaw");
    let mut paw = 0;
    let mut index = 0;
    for word in glyphs.split(|g| g.base == GlyphBase::Space) {
        for p in split_paws(word.to_vec()) {
            for g in &p.glyphs {
                let cps: Vec<String> = normalized[g.source_span.clone()]
                    .iter()
                    .map(|c| format!("U+{:04X}", *c as u32))
                    .collect();
                println!("{index}\t{}\t{}\t{}\t{paw}", g.base, cps.join(" "), g.form);
                index += 1;
            }
            paw += 1;
        }
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let count = r.pick("count", a.count, 1000)?;
    let seed = r.pick("seed", a.seed, 0)?;
    let mode = parse_mode(&r.pick("mode", a.mode.clone(), "scene".to_string())?)?;
    let mut render_kv = KeyValues::default();
    for (k, v) in r.file.iter() {
        if !["count", "seed", "mode"].contains(&k) {
            render_kv.insert(k, v);
        }
    }
    let render_config = RenderConfig::from_key_values(&render_kv)?;
    for (k, v) in render_config.to_key_values().iter() {
        r.note(k, v);
    }
    let master_seed = derive_seed(seed, "synth");
    r.note("master_seed", master_seed);
    r.echo();
    let text = std::fs::read_to_string(&a.vocab)
        .map_err(|e| CliError::Config(format!("{}: {e}", a.vocab.display())))?;
    let vocab: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    for w in &vocab {
        shape(w).map_err(|e| CliError::Data(format!("vocabulary entry {w:?}: {e}")))?;
    }
    let renderer = Renderer::new(render_config)?;
    let report = build_corpus(&renderer, &vocab, count, master_seed, mode, &a.out)?;
    println!("manifest\t{}", report.manifest_path.display());
    println!("count\t{}", report.manifest.count());
    println!("rendered\t{}", report.rendered);
    println!("skipped\t{}", report.skipped);
    Ok(())
}

fn resolve_hyper(h: &HyperArgs, r: &mut Resolver) -> Result<TrainHyper, CliError> {
    let d = TrainHyper::default();
    let seed = r.pick("seed", h.seed, 0)?;
    let hyper = TrainHyper {
        epochs: r.pick("epochs", h.epochs, d.epochs)?,
        batch_size: r.pick("batch_size", h.batch_size, d.batch_size)?,
        seed: derive_seed(seed, "train"),
        rho: r.pick("rho", None, d.rho)?,
        eps: r.pick("eps", None, d.eps)?,
        clip: r.pick_opt("clip", h.clip)?,
        threads: r.pick("threads", h.threads, d.threads)?,
        target_wrr: r.pick_opt("target_wrr", h.target_wrr)?,
        checkpoint_path: None,
    };
    Ok(hyper)
}

const TRAIN_KEYS: [&str; 12] = [
    "seed", "epochs", "batch_size", "rho", "eps", "clip", "threads", "target_wrr", "mode",
    "channel_divisor", "hidden", "depth",
];

fn load_dataset(path: Option<&Path>) -> Result<Dataset, CliError> {
    match path {
        Some(p) => Dataset::from_manifest(p).map_err(Into::into),
        None => Ok(Dataset::default()),
    }
}

fn report_run(run: &TrainRun, log: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let lines: String = run.log.iter().map(|e| format!("{e}\n")).collect();
    print!("{lines}");
    if let Some(p) = log {
        std::fs::write(p, &lines).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
    }
    if run.skipped_infeasible > 0 {
        log::warn!("{} infeasible samples skipped", run.skipped_infeasible);
    }
    eprintln!("checkpoint\t{}", out.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let mut r = Resolver::new(a.hyper.config.as_deref())?;
    r.file.check_known(&TRAIN_KEYS)?;
    let mut hyper = resolve_hyper(&a.hyper, &mut r)?;
    let mode = parse_mode(&r.pick("mode", a.mode.clone(), "scene".to_string())?)?;
    let divisor = r.pick("channel_divisor", a.channel_divisor, 1)?;
    let hidden = r.pick("hidden", a.hidden, 256)?;
    let depth = r.pick("depth", a.depth, 2)?;
    let train_set = load_dataset(Some(&a.manifest))?;
    let val = load_dataset(a.val_manifest.as_deref())?;
    let alphabet = match &a.alphabet {
        Some(p) => Alphabet::load(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => {
            let mut chars = train_set.characters();
            chars.extend(val.characters());
            Alphabet::new(chars.into_iter().collect())?
        }
    };
    r.note("alphabet_size", alphabet.len());
    r.echo();
    let config = NetworkConfig::default_for(mode, alphabet)
        .with_channel_divisor(divisor)
        .with_recurrent(hidden, depth);
    let model = Model::new(config, derive_seed(hyper.seed, "init"))?;
    hyper.checkpoint_path = Some(a.out.clone());
    let (ckpt, run) = train(model, &train_set, &val, &hyper)?;
    ckpt.save(&a.out)?;
    report_run(&run, a.hyper.log.as_deref(), &a.out)
}

fn cmd_finetune(a: &FinetuneArgs) -> Result<(), CliError> {
    let mut r = Resolver::new(a.hyper.config.as_deref())?;
    r.file.check_known(&TRAIN_KEYS[..8])?;
    let mut hyper = resolve_hyper(&a.hyper, &mut r)?;
    r.note("checkpoint", a.checkpoint.display());
    r.echo();
    let start = Checkpoint::load(&a.checkpoint)?;
    let train_set = load_dataset(Some(&a.manifest))?;
    let val = load_dataset(a.val_manifest.as_deref())?;
    hyper.checkpoint_path = Some(a.out.clone());
    let (ckpt, run) = finetune(&start, &train_set, &val, &hyper)?;
    ckpt.save(&a.out)?;
    report_run(&run, a.hyper.log.as_deref(), &a.out)
}

fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let granularity: Granularity = a.granularity.parse().map_err(CliError::Config)?;
    let mut r = Resolver::new(None)?;
    r.note("granularity", &a.granularity);
    r.echo();
    let manifest = CorpusManifest::load(&a.manifest)?;
    let text = std::fs::read_to_string(&a.predictions)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.predictions.display())))?;
    let preds = parse_predictions(&text).map_err(|e| CliError::Data(e.to_string()))?;
    let gt: Vec<(String, String)> = manifest
        .records
        .iter()
        .map(|rec| (rec.path.clone(), rec.label.clone()))
        .collect();
    let pairs = join_predictions(&gt, &preds).map_err(|e| CliError::Data(e.to_string()))?;
    let report = evaluate(&pairs, granularity).map_err(|e| CliError::Data(e.to_string()))?;
    print!("{}", report.to_tsv());
    Ok(())
}

fn cmd_recognize(a: &RecognizeArgs) -> Result<(), CliError> {
    let decoder = match a.beam {
        Some(0) => return Err(CliError::Config("beam width must be at least 1".into())),
        Some(w) => Decoder::Beam(w),
        None => Decoder::Greedy,
    };
    let mut r = Resolver::new(None)?;
    r.note("checkpoint", a.checkpoint.display());
    r.note("decoder", a.beam.map_or("greedy".to_string(), |w| format!("beam:{w}")));
    r.echo();
    let mut jobs: Vec<(String, PathBuf)> = a
        .images
        .iter()
        .map(|p| (p.display().to_string(), p.clone()))
        .collect();
    if let Some(m) = &a.manifest {
        let manifest = CorpusManifest::load(m)?;
        let dir = m.parent().unwrap_or(Path::new("."));
        jobs.extend(manifest.records.iter().map(|rec| (rec.path.clone(), dir.join(&rec.path))));
    }
    if jobs.is_empty() {
        return Err(CliError::Config("no images given".into()));
    }
    let model = Checkpoint::load(&a.checkpoint)?.to_model()?;
    for chunk in jobs.chunks(64) {
        let images = chunk
            .iter()
            .map(|(_, p)| pgm::read_pgm(p))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<_> = images.iter().collect();
        for ((name, _), text) in chunk.iter().zip(model.recognize(&refs, decoder)?) {
            println!("{name}\t{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Shape { text } => cmd_shape(text),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Finetune(a) => cmd_finetune(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Recognize(a) => cmd_recognize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
