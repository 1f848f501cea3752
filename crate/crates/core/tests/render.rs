use std::collections::HashMap;
use std::sync::Arc;

use arabic_ocr::render::{
    build_corpus, pgm, rasterize, BitmapAtlas, CorpusManifest, GlyphBitmap, Homography, Layer, ProceduralAtlas,
    RenderMode, RenderStyle, Renderer, OUTPUT_HEIGHT,
};
use arabic_ocr::shaper::{normalize_label, shape, GlyphBase, Letter, LigatureId, PresentationForm};
use proptest::prelude::*;

/// Number of 8-connected components among pixels with alpha >= 0.5.
fn components(layer: &Layer) -> usize {
    let (w, h) = (layer.width, layer.height);
    let ink: Vec<bool> = layer.alpha.iter().map(|&a| a >= 0.5).collect();
    let mut seen = vec![false; w * h];
    let mut count = 0;
    for start in 0..w * h {
        if !ink[start] || seen[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if ink[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if (dx, dy) != (0, 0) && nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                        visit(ny as usize * w + nx as usize);
                    }
                }
            }
        }
    }
    count
}

#[test]
fn two_glyph_paw_is_one_connected_stroke() {
    // joining must merge the two glyphs' body strokes into one component,
    // whatever marks either glyph carries
    let words = ["\u{0628}\u{062D}", "\u{062C}\u{062A}", "\u{0633}\u{0645}", "\u{0639}\u{0647}", "\u{0644}\u{0645}", "\u{0641}\u{0627}"];
    for word in words {
        let glyphs = shape(word).unwrap();
        assert_eq!(glyphs.len(), 2);
        for kerning in [0.0, 1.0, 3.0] {
            for stroke in [1.0, 2.0, 3.0] {
                let style = RenderStyle {
                    kerning,
                    stroke_thickness: stroke,
                    ..RenderStyle::default()
                };
                let alone: usize = glyphs
                    .iter()
                    .map(|g| components(&rasterize(std::slice::from_ref(g), &style, &ProceduralAtlas).unwrap()))
                    .sum();
                let layer = rasterize(&glyphs, &style, &ProceduralAtlas).unwrap();
                assert_eq!(components(&layer), alone - 1, "{word} kerning {kerning} stroke {stroke}");
            }
        }
    }
}

#[test]
fn separate_paws_do_not_touch() {
    // DAL ends the first paw
    let glyphs = shape("\u{0628}\u{062F}\u{062D}").unwrap();
    let style = RenderStyle::default();
    let alone: usize = glyphs
        .iter()
        .map(|g| components(&rasterize(std::slice::from_ref(g), &style, &ProceduralAtlas).unwrap()))
        .sum();
    let layer = rasterize(&glyphs, &style, &ProceduralAtlas).unwrap();
    assert_eq!(components(&layer), alone - 1);
}

fn chi_square(counts: &[usize], n: usize) -> f64 {
    let e = n as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

#[test]
fn corpus_labels_are_uniform_over_the_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let vocab: Vec<String> = ["\u{0628}", "\u{062A}", "\u{062B}", "\u{062C}", "\u{062D}", "\u{062E}", "\u{062F}", "\u{0630}", "\u{0631}", "\u{0632}"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let n = 1000;
    let report = build_corpus(&Renderer::default(), &vocab, n, 5, RenderMode::Video, dir.path()).unwrap();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for r in &report.manifest.records {
        *counts.entry(r.label.as_str()).or_default() += 1;
    }
    assert_eq!(counts.len(), 10, "every label appears");
    let c: Vec<usize> = vocab.iter().map(|v| counts[v.as_str()]).collect();
    // 9 degrees of freedom: the 0.999 quantile is 27.88
    let stat = chi_square(&c, n);
    assert!(stat < 27.88, "chi-square {stat} for {c:?}");
}

#[test]
fn corpus_is_resumable_and_manifest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let vocab = vec!["\u{0643}\u{062A}\u{0627}\u{0628}".to_string(), "\u{0644}\u{0627}".to_string()];
    let renderer = Renderer::default();
    let first = build_corpus(&renderer, &vocab, 6, 77, RenderMode::Scene, dir.path()).unwrap();
    assert_eq!((first.rendered, first.skipped), (6, 0));
    let original = std::fs::read(dir.path().join("img_000003.pgm")).unwrap();

    std::fs::remove_file(dir.path().join("img_000003.pgm")).unwrap();
    // a truncated file is not valid and is re-rendered
    std::fs::write(dir.path().join("img_000004.pgm"), b"P5\n10 32\n255\n").unwrap();
    let second = build_corpus(&renderer, &vocab, 6, 77, RenderMode::Scene, dir.path()).unwrap();
    assert_eq!((second.rendered, second.skipped), (2, 4));
    assert_eq!(std::fs::read(dir.path().join("img_000003.pgm")).unwrap(), original);
    assert_eq!(first.manifest, second.manifest);

    let loaded = CorpusManifest::load(&second.manifest_path).unwrap();
    assert_eq!(loaded, second.manifest);
    for r in &loaded.records {
        assert_eq!(normalize_label(&r.label), r.label);
        let img = pgm::read_pgm(&dir.path().join(&r.path)).unwrap();
        assert_eq!(img.height(), OUTPUT_HEIGHT);
        let again = renderer.render_sample(&r.label, r.mode, r.seed).unwrap();
        assert_eq!(again.pixels, img);
    }
}

#[test]
fn minimal_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let w = "\u{0628}\u{064E}\u{0627}\u{0628}".to_string();
    let report = build_corpus(&Renderer::default(), &[w.clone()], 1, 1, RenderMode::Video, dir.path()).unwrap();
    assert_eq!(report.manifest.count(), 1);
    assert_eq!(report.manifest.records[0].label, normalize_label(&w));
    assert!(dir.path().join(&report.manifest.records[0].path).exists());
}

/// Atlas whose every glyph is a one-row bar on the baseline.
fn bar_atlas() -> BitmapAtlas {
    let mut atlas = BitmapAtlas::new();
    let bar = GlyphBitmap {
        width: 9,
        height: 5,
        baseline: 2,
        coverage: (0..45).map(|i| if i / 9 == 2 { 1.0 } else { 0.0 }).collect(),
    };
    for form in PresentationForm::ALL {
        for l in Letter::all() {
            atlas.insert(GlyphBase::Letter(l), form, bar.clone());
        }
        for lig in LigatureId::ALL {
            atlas.insert(GlyphBase::Ligature(lig), form, bar.clone());
        }
    }
    atlas
}

/// Per-column ink centroid rows (columns without ink are skipped).
fn ink_rows(pixels: &[u8], width: usize, bg: u8) -> Vec<f64> {
    let height = pixels.len() / width;
    (0..width)
        .filter_map(|x| {
            let (mut m, mut s) = (0.0, 0.0);
            for y in 0..height {
                let d = (pixels[y * width + x] as f64 - bg as f64).abs();
                m += d;
                s += d * y as f64;
            }
            (m > 0.0).then(|| s / m)
        })
        .collect()
}

#[test]
fn video_mode_keeps_a_straight_baseline() {
    let renderer = Renderer::default().with_atlas(Arc::new(bar_atlas()));
    for (i, label) in ["\u{0628}\u{062A}\u{062B}\u{062C}\u{062D}", "\u{0645}\u{062F}\u{0631}\u{0633} \u{0644}\u{0627}"]
        .iter()
        .enumerate()
    {
        for seed in 0..10u64 {
            let seed = seed + 100 * i as u64;
            let flat = renderer.render_video_flat(label, seed).unwrap();
            // background is the most frequent gray
            let mut hist = [0usize; 256];
            flat.pixels().iter().for_each(|&p| hist[p as usize] += 1);
            let bg = (0..256).max_by_key(|&v| hist[v]).unwrap() as u8;
            let rows = ink_rows(flat.pixels(), flat.width(), bg);
            let (lo, hi) = rows.iter().fold((f64::MAX, f64::MIN), |(a, b), &r| (a.min(r), b.max(r)));
            assert!(hi - lo <= 1.0, "{label} seed {seed}: baseline rows span {lo}..{hi}");

            let out = renderer.render_sample(label, RenderMode::Video, seed).unwrap().pixels;
            assert_eq!(out.height(), OUTPUT_HEIGHT);
            let rows = ink_rows(out.pixels(), out.width(), bg);
            let (lo, hi) = rows.iter().fold((f64::MAX, f64::MIN), |(a, b), &r| (a.min(r), b.max(r)));
            assert!(hi - lo <= 1.0, "{label} seed {seed}: final baseline rows span {lo}..{hi}");
        }
    }
}

#[test]
fn scene_mode_has_texture() {
    for seed in 0..5 {
        let img = Renderer::default()
            .render_sample("\u{0645}\u{0631}\u{062D}\u{0628}\u{0627}", RenderMode::Scene, seed)
            .unwrap()
            .pixels;
        assert!(img.distinct_values() > 2);
    }
}

#[test]
fn projective_corner_maps_by_hand_arithmetic() {
    let h = Homography::from_matrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.001, 0.0, 1.0]]).unwrap();
    let (x, y) = h.apply(100.0, 0.0);
    assert!((x - 100.0 / 1.1).abs() < 1e-12 && y.abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_image_is_32_high_and_reproducible(
        letters in prop::collection::vec(0usize..28, 1..7),
        seed in any::<u64>(),
        video in any::<bool>(),
    ) {
        let all: Vec<Letter> = Letter::all().take(28).collect();
        let label: String = letters.iter().map(|&i| all[i].as_char()).collect();
        let mode = if video { RenderMode::Video } else { RenderMode::Scene };
        let r = Renderer::default();
        let a = r.render_sample(&label, mode, seed).unwrap();
        let b = r.render_sample(&label, mode, seed).unwrap();
        prop_assert_eq!(a.pixels.height(), OUTPUT_HEIGHT);
        prop_assert_eq!(&a.pixels, &b.pixels);
        prop_assert_eq!(&a.label, &label);
        let bytes = pgm::encode_pgm(&a.pixels);
        prop_assert_eq!(pgm::decode_pgm(&bytes).unwrap(), a.pixels);
    }

    #[test]
    fn video_flat_has_two_levels(letters in prop::collection::vec(0usize..28, 1..6), seed in any::<u64>()) {
        let all: Vec<Letter> = Letter::all().take(28).collect();
        let label: String = letters.iter().map(|&i| all[i].as_char()).collect();
        let flat = Renderer::default().render_video_flat(&label, seed).unwrap();
        prop_assert_eq!(flat.distinct_values(), 2);
    }
}
