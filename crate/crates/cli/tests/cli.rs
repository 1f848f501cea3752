use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arabic-ocr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Value of `key` in the two-column TSV output.
fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('\t')))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

#[test]
fn shape_prints_forms_and_paws() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["shape", "\u{0628}\u{062F}\u{0628}"]);
    assert!(o.status.success());
    let rows: Vec<Vec<String>> = stdout(&o).lines().skip(1).map(|l| l.split('\t').map(String::from).collect()).collect();
    let forms: Vec<&str> = rows.iter().map(|r| r[3].as_str()).collect();
    let paws: Vec<&str> = rows.iter().map(|r| r[4].as_str()).collect();
    assert_eq!(forms, ["initial", "final", "isolated"]);
    assert_eq!(paws, ["0", "0", "1"]);
    assert_eq!(run(dir.path(), &["shape", "abc"]).status.code(), Some(2));
}

#[test]
fn synth_writes_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("v.txt"), "\u{0645}\u{0646}\n\u{0628}\u{0627}\u{0628}\n").unwrap();
    let args = ["synth", "--vocab", "v.txt", "--count", "10", "--seed", "4", "--mode", "video", "--out", "c"];
    let first = run(dir.path(), &args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(field(&stdout(&first), "rendered"), "10");
    let pgms = std::fs::read_dir(dir.path().join("c"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pgm"))
        .count();
    assert_eq!(pgms, 10);
    assert!(dir.path().join("c/manifest.tsv").exists());

    let again = run(dir.path(), &args);
    assert_eq!((field(&stdout(&again), "rendered"), field(&stdout(&again), "skipped")), ("0", "10"));
    // resolved settings are echoed on stderr
    assert!(String::from_utf8_lossy(&again.stderr).contains("config\tseed\t4"));
}

#[test]
fn exit_codes_classify_failures() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(dir.path(), &["synth", "--vocab", "nope.txt", "--count", "1", "--out", "c"]);
    assert_eq!(missing.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.cfg"), "count=ten\n").unwrap();
    std::fs::write(dir.path().join("v.txt"), "\u{0645}\n").unwrap();
    let bad = run(dir.path(), &["synth", "--vocab", "v.txt", "--out", "c", "--config", "bad.cfg"]);
    assert_eq!(bad.status.code(), Some(2));
    std::fs::write(dir.path().join("latin.txt"), "hello\n").unwrap();
    let latin = run(dir.path(), &["synth", "--vocab", "latin.txt", "--count", "1", "--out", "c"]);
    assert_eq!(latin.status.code(), Some(3));
    assert_eq!(run(dir.path(), &["recognize", "--checkpoint", "x", "--beam", "0", "a.pgm"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["recognize", "--checkpoint", "missing.ckpt", "a.pgm"]).status.code(), Some(3));
}

#[test]
fn eval_of_ground_truth_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("v.txt"), "\u{0645}\u{0646}\n\u{0644}\u{0627}\n").unwrap();
    assert!(run(dir.path(), &["synth", "--vocab", "v.txt", "--count", "5", "--out", "c"]).status.success());
    let manifest = std::fs::read_to_string(dir.path().join("c/manifest.tsv")).unwrap();
    let preds: String = manifest
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            format!("{}\t{}\n", f[0], f[1])
        })
        .collect();
    std::fs::write(dir.path().join("p.tsv"), &preds).unwrap();
    let o = run(dir.path(), &["eval", "--manifest", "c/manifest.tsv", "--predictions", "p.tsv"]);
    assert!(o.status.success());
    let out = stdout(&o);
    for key in ["crr", "wrr", "lrr"] {
        assert_eq!(field(&out, key).parse::<f64>().unwrap(), 1.0, "{out}");
    }
    let o = run(dir.path(), &["eval", "--manifest", "c/manifest.tsv", "--predictions", "p.tsv", "--granularity", "page"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_rejects_an_alphabet_missing_corpus_characters() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("v.txt"), "\u{0645}\u{0646}\n").unwrap();
    assert!(run(dir.path(), &["synth", "--vocab", "v.txt", "--count", "2", "--out", "c"]).status.success());
    std::fs::write(dir.path().join("a.txt"), "\u{0645}\n").unwrap();
    let o = run(
        dir.path(),
        &["train", "--manifest", "c/manifest.tsv", "--alphabet", "a.txt", "--out", "m.ckpt", "--epochs", "1", "--channel-divisor", "16", "--hidden", "4", "--depth", "1"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn train_recognize_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("v.txt"), "\u{0645}\u{0646}\n").unwrap();
    assert!(run(dir.path(), &["synth", "--vocab", "v.txt", "--count", "1", "--seed", "2", "--out", "c"]).status.success());
    let t = run(
        dir.path(),
        &[
            "train", "--manifest", "c/manifest.tsv", "--val-manifest", "c/manifest.tsv", "--out", "m.ckpt", "--epochs", "200",
            "--batch-size", "1", "--channel-divisor", "8", "--hidden", "32", "--depth", "1", "--target-wrr", "1.0", "--log", "log.tsv",
        ],
    );
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    let log = std::fs::read_to_string(dir.path().join("log.tsv")).unwrap();
    assert_eq!(log, stdout(&t));
    assert!(log.lines().last().unwrap().ends_with("\t1.000000"), "{log}");

    for beam in [None, Some("3")] {
        let mut args = vec!["recognize", "--checkpoint", "m.ckpt", "--manifest", "c/manifest.tsv"];
        if let Some(b) = beam {
            args.extend(["--beam", b]);
        }
        let r = run(dir.path(), &args);
        assert!(r.status.success());
        assert_eq!(stdout(&r), "img_000000.pgm\t\u{0645}\u{0646}\n");
        std::fs::write(dir.path().join("p.tsv"), stdout(&r)).unwrap();
        let e = run(dir.path(), &["eval", "--manifest", "c/manifest.tsv", "--predictions", "p.tsv"]);
        assert_eq!(field(&stdout(&e), "wrr"), "1");
    }

    let f = run(dir.path(), &["finetune", "--checkpoint", "m.ckpt", "--manifest", "c/manifest.tsv", "--out", "f.ckpt", "--epochs", "0"]);
    assert!(f.status.success());
    assert_eq!(std::fs::read(dir.path().join("f.ckpt")).unwrap(), std::fs::read(dir.path().join("m.ckpt")).unwrap());
}
