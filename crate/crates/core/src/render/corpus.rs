//! Corpus generation and manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{pgm, RenderError, RenderMode, Renderer, OUTPUT_HEIGHT};
use crate::seed::mix_seed;

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    /// Image path relative to the manifest's directory.
    pub path: String,
    pub label: String,
    pub mode: RenderMode,
    pub seed: u64,
}

/// Index of a rendered corpus: a `#master_seed=..\tcount=..` header line
/// followed by `path\tlabel\tmode\tseed` records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub master_seed: u64,
    pub records: Vec<ManifestRecord>,
}

impl CorpusManifest {
    pub fn count(&self) -> usize {
        self.records.len()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("#master_seed={}\tcount={}\n", self.master_seed, self.count());
        for r in &self.records {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", r.path, r.label, r.mode, r.seed);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, RenderError> {
        let bad = |line: usize, message: &str| RenderError::Manifest {
            line,
            message: message.to_string(),
        };
        let mut master_seed = 0;
        let mut declared = None;
        let mut records = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                for field in header.split('\t') {
                    match field.split_once('=') {
                        Some(("master_seed", v)) => {
                            master_seed = v.parse().map_err(|_| bad(n, "invalid master_seed"))?
                        }
                        Some(("count", v)) => {
                            declared = Some(v.parse::<usize>().map_err(|_| bad(n, "invalid count"))?)
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(bad(n, "expected path, label, mode and seed"));
            }
            if !seen.insert(fields[0].to_string()) {
                return Err(bad(n, "duplicate path"));
            }
            records.push(ManifestRecord {
                path: fields[0].to_string(),
                label: fields[1].to_string(),
                mode: fields[2].parse().map_err(|_| bad(n, "invalid mode"))?,
                seed: fields[3].parse().map_err(|_| bad(n, "invalid seed"))?,
            });
        }
        if let Some(c) = declared {
            if c != records.len() {
                return Err(bad(0, &format!("header count {c} but {} records", records.len())));
            }
        }
        Ok(CorpusManifest { master_seed, records })
    }

    pub fn load(path: &Path) -> Result<Self, RenderError> {
        let text = std::fs::read_to_string(path).map_err(|e| RenderError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), RenderError> {
        std::fs::write(path, self.to_text()).map_err(|e| RenderError::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusReport {
    pub manifest: CorpusManifest,
    pub manifest_path: PathBuf,
    pub rendered: usize,
    pub skipped: usize,
}

/// Per-image seed for sample `i`.
pub fn sample_seed(master_seed: u64, i: usize) -> u64 {
    mix_seed(master_seed, i as u64)
}

fn is_valid_image(path: &Path) -> bool {
    pgm::read_pgm(path).is_ok_and(|img| img.height() == OUTPUT_HEIGHT && img.width() > 0)
}

/// Renders `n` samples into `out_dir` and writes `manifest.tsv` there.
/// Sample `i` uses seed `mix_seed(master_seed, i)` and a vocabulary entry
/// drawn from that seed. Existing valid images are kept, so an interrupted
/// run can simply be repeated.
pub fn build_corpus(
    renderer: &Renderer,
    vocab: &[String],
    n: usize,
    master_seed: u64,
    mode: RenderMode,
    out_dir: &Path,
) -> Result<CorpusReport, RenderError> {
    if vocab.is_empty() {
        return Err(RenderError::EmptyVocabulary);
    }
    if n == 0 {
        return Err(RenderError::EmptyCorpus);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| RenderError::io(out_dir, e))?;
    let outcomes: Vec<Result<(ManifestRecord, bool), RenderError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = sample_seed(master_seed, i);
            let word = &vocab[(mix_seed(seed, 0x006C_6162_656C) % vocab.len() as u64) as usize];
            let name = format!("img_{i:06}.pgm");
            let path = out_dir.join(&name);
            let label = crate::shaper::normalize_label(word);
            let fresh = !is_valid_image(&path);
            if fresh {
                let sample = renderer.render_sample(word, mode, seed)?;
                pgm::write_pgm(&path, &sample.pixels)?;
            }
            Ok((
                ManifestRecord {
                    path: name,
                    label,
                    mode,
                    seed,
                },
                fresh,
            ))
        })
        .collect();
    let mut records = Vec::with_capacity(n);
    let mut rendered = 0;
    for outcome in outcomes {
        let (record, fresh) = outcome?;
        rendered += fresh as usize;
        records.push(record);
    }
    let manifest = CorpusManifest { master_seed, records };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.save(&manifest_path)?;
    Ok(CorpusReport {
        manifest,
        manifest_path,
        rendered,
        skipped: n - rendered,
    })
}
