//! Drives the `scene-annotate` binary end to end. One synthetic corpus and
//! one trained bundle are shared by the tests in this file.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use scene_annotate::ModelBundle;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scene-annotate"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn fresh(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Shared {
    corpus: PathBuf,
    model: PathBuf,
}

impl Shared {
    fn manifest(&self) -> PathBuf {
        self.corpus.join("manifest.jsonl")
    }

    fn bundle(&self) -> PathBuf {
        self.model.join("model.bundle")
    }

    fn test_images(&self) -> Vec<PathBuf> {
        let mut v: Vec<PathBuf> = fs::read_dir(self.corpus.join("images"))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.file_name().unwrap().to_str().unwrap().contains("_test_"))
            .collect();
        v.sort();
        v
    }
}

fn shared() -> &'static Shared {
    static SHARED: OnceLock<Shared> = OnceLock::new();
    SHARED.get_or_init(|| {
        let root = fresh("cli-shared");
        let corpus = root.join("corpus");
        let model = root.join("model");
        ok(&["synth", "--preset", "table1", "--out", s(&corpus)]);
        ok(&["train", "--manifest", s(&corpus.join("manifest.jsonl")), "--out", s(&model)]);
        Shared { corpus, model }
    })
}

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

#[test]
fn synth_reruns_are_byte_identical() {
    let a = fresh("synth-a");
    let b = fresh("synth-b");
    ok(&["synth", "--preset", "table1", "--out", s(&a)]);
    ok(&["synth", "--preset", "table1", "--out", s(&b)]);
    let (fa, fb) = (files_under(&a), files_under(&b));
    assert_eq!(fa.len(), 125 * 2 + 1);
    assert!(fa == fb);
}

#[test]
fn synth_seed_flag_changes_the_corpus() {
    let a = fresh("synth-seed");
    ok(&["synth", "--preset", "table1", "--seed", "7", "--out", s(&a)]);
    let img = "images/butterfly_train_000.png";
    assert_ne!(fs::read(a.join(img)).unwrap(), fs::read(shared().corpus.join(img)).unwrap());
}

#[test]
fn empty_spec_writes_an_empty_manifest() {
    let dir = fresh("synth-empty");
    let spec = dir.join("empty.json");
    fs::write(&spec, "{}").unwrap();
    ok(&["synth", "--spec", s(&spec), "--out", s(&dir.join("out"))]);
    let text = fs::read_to_string(dir.join("out/manifest.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1, "header only: {text}");
}

#[test]
fn bundle_round_trips_byte_identically() {
    let bytes = fs::read(shared().bundle()).unwrap();
    let bundle = ModelBundle::decode(&bytes).unwrap();
    assert_eq!(bundle.encode().unwrap(), bytes);
    assert_eq!(bundle.model.model.topics, 8);
    assert_eq!(bundle.model.model.p_z_given_r.len(), bundle.model.model.regions() * 8);
    assert_eq!(bundle.categories.len(), 8);
}

#[test]
fn bundle_with_another_version_is_refused() {
    let dir = fresh("bad-version");
    let mut bytes = fs::read(shared().bundle()).unwrap();
    bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
    let bad = dir.join("model.bundle");
    fs::write(&bad, bytes).unwrap();
    let img = &shared().test_images()[0];
    let out = run(&["annotate", "--bundle", s(&bad), s(img), "--out", s(&dir)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version"));
}

#[test]
fn tau_changes_tags_but_not_rankings() {
    let images = shared().test_images();
    assert_eq!(images.len(), 60);
    let lo = fresh("tau-0");
    let hi = fresh("tau-1.1");
    let bundle = shared().bundle();
    for (dir, tau) in [(&lo, "0"), (&hi, "1.1")] {
        let mut args = vec!["annotate", "--bundle", s(&bundle), "--tau", tau, "--out", s(dir)];
        args.extend(images.iter().map(|p| s(p)));
        ok(&args);
    }
    let count = |d: &Path| fs::read_dir(d).unwrap().count();
    assert_eq!(count(&lo), 120);
    assert_eq!(count(&hi), 120);
    let mut tagged = 0;
    for img in &images {
        let stem = img.file_stem().unwrap().to_str().unwrap();
        let side = format!("{stem}.annotations.json");
        let (a, b) = (read_json(&lo.join(&side)), read_json(&hi.join(&side)));
        let (ra, rb) = (a["regions"].as_array().unwrap(), b["regions"].as_array().unwrap());
        assert_eq!(ra.len(), rb.len());
        for (x, y) in ra.iter().zip(rb) {
            assert_eq!(x["ranking"], y["ranking"]);
            assert_eq!(x["bbox"], y["bbox"]);
            assert!(y["tag"].is_null());
            if x["diagnostic"].is_null() {
                assert_eq!(x["tag"], x["ranking"][0]["category"]);
                tagged += 1;
            }
        }
    }
    assert!(tagged >= 120);
}

#[test]
fn config_file_sits_between_bundle_and_flags() {
    let dir = fresh("precedence");
    let cfg = dir.join("cfg.toml");
    fs::write(&cfg, "tau = 0.5\n").unwrap();
    let img = shared().test_images()[0].clone();
    let bundle = shared().bundle();
    let tau_of = |extra: &[&str], sub: &str| {
        let out = dir.join(sub);
        let mut args = vec!["annotate", "--bundle", s(&bundle), "--out", s(&out)];
        args.extend_from_slice(extra);
        args.push(s(&img));
        ok(&args);
        let stem = img.file_stem().unwrap().to_str().unwrap();
        read_json(&out.join(format!("{stem}.annotations.json")))["tau"].as_f64().unwrap()
    };
    assert_eq!(tau_of(&[], "bundle"), 0.3);
    assert_eq!(tau_of(&["--config", s(&cfg)], "file"), 0.5);
    assert_eq!(tau_of(&["--config", s(&cfg), "--tau", "0.7"], "flag"), 0.7);
}

#[test]
fn segment_and_extract_write_their_outputs() {
    let dir = fresh("segment-extract");
    let img = &shared().test_images()[0];
    ok(&["segment", s(img), "--out", s(&dir)]);
    let stem = img.file_stem().unwrap().to_str().unwrap();
    assert!(dir.join(format!("{stem}.mask.png")).is_file());
    let summary = read_json(&dir.join(format!("{stem}.segments.json")));
    assert!(!summary["regions"].as_array().unwrap().is_empty());

    ok(&["extract", "--manifest", s(&shared().manifest()), "--out", s(&dir)]);
    let text = fs::read_to_string(dir.join("features.jsonl")).unwrap();
    let first: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["pad_o"].as_array().unwrap().len(), 144);
    assert_eq!(first["pad_z"].as_array().unwrap().len(), 144);
    assert!(text.lines().count() >= 250);
}

#[test]
fn evaluate_reports_agree_with_each_other() {
    let dir = fresh("evaluate");
    ok(&["evaluate", "--bundle", s(&shared().bundle()), "--manifest", s(&shared().manifest()), "--out", s(&dir)]);
    for f in ["pretest.csv", "pretest_oo.csv", "pretest_oz.csv", "adaptive.csv", "prf.csv", "evaluation.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let report = read_json(&dir.join("evaluation.json"));
    assert_eq!(report["images"].as_array().unwrap().len(), 60);

    // the TOTAL row of the pre-test table sums the category rows
    let mut rdr = csv::Reader::from_path(dir.join("pretest.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let (total, cats) = rows.split_last().unwrap();
    assert_eq!(&total[0], "TOTAL");
    for col in 1..7 {
        let sum: u64 = cats.iter().map(|r| r[col].parse::<u64>().unwrap()).sum();
        assert_eq!(total[col].parse::<u64>().unwrap(), sum, "column {col}");
    }

    let h = &report["heldout"];
    let (o, z, a, i) = (
        h["pad_o"].as_u64().unwrap(),
        h["pad_z"].as_u64().unwrap(),
        h["adaptive"].as_u64().unwrap(),
        h["ideal"].as_u64().unwrap(),
    );
    assert!(o.max(z) <= a && a <= i, "{h}");
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["synth"]).status.code(), Some(2));
    assert_eq!(run(&["annotate", "--bundle", "/nonexistent/model.bundle", "x.png"]).status.code(), Some(3));
    let dir = fresh("exit-codes");
    let out = run(&["train", "--manifest", s(&dir.join("missing.jsonl")), "--out", s(&dir)]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(&[
        "annotate",
        "--bundle",
        s(&shared().bundle()),
        "--tau",
        "-1",
        "--out",
        s(&dir),
        s(&shared().test_images()[0]),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn training_refuses_a_single_category() {
    let dir = fresh("one-category");
    let spec = dir.join("one.json");
    fs::write(
        &spec,
        r#"{"seed": 1, "categories": ["sea"],
            "scenes": [{"name": "sea", "background": 0, "background_fills": [{"kind": "solid", "rgb": [20, 60, 200]}]}],
            "per_scene": {"train": 2, "pretest": 1, "test": 1}}"#,
    )
    .unwrap();
    ok(&["synth", "--spec", s(&spec), "--out", s(&dir)]);
    let out = run(&["train", "--manifest", s(&dir.join("manifest.jsonl")), "--out", s(&dir)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 2 categories"));
}
