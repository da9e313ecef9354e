use std::path::Path;
use std::process::{Command, Output};

use latentnav::data::generate_episodes;
use latentnav::experiment::Preset;
use serde_json::Value;

fn latentnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latentnav"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = latentnav(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

/// Runs a command expected to fail and returns the error kind it reports.
fn fails(args: &[&str]) -> String {
    let out = latentnav(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let line = String::from_utf8_lossy(&out.stderr);
    let err: Value = serde_json::from_str(line.lines().last().unwrap()).expect("stderr ends with a JSON error");
    assert!(err["message"].as_str().is_some());
    err["kind"].as_str().unwrap().to_string()
}

fn manifest(dir: &Path, command: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(format!("{command}.manifest.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn smoke_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let common = ["--preset", "smoke", "--out", s(out)];
    let with = |cmd: &'static str| -> Vec<&str> { [&[cmd][..], &common[..]].concat() };

    ok(&with("train-codec"));
    assert!(out.join("codec.json").exists());
    let codec_hash = manifest(out, "train-codec")["artifacts"]["codec"].as_str().unwrap().to_string();

    let stats: Value = serde_json::from_str(&ok(&with("gen-data"))).unwrap();
    assert!(stats["records"].as_u64().unwrap() > 0);
    let m = manifest(out, "gen-data");
    assert_eq!(m["artifacts"]["codec"], codec_hash.as_str());
    let first_hash = m["artifacts"]["dataset"].clone();

    // same seed, same bytes
    ok(&with("gen-data"));
    assert_eq!(manifest(out, "gen-data")["artifacts"]["dataset"], first_hash);

    let dataset = out.join("dataset.jsonl");
    let described: Value = serde_json::from_str(&ok(&["stats", "--dataset", s(&dataset)])).unwrap();
    assert_eq!(described["stats"]["records"], stats["records"]);

    ok(&with("train"));
    assert!(out.join("checkpoint.bin").exists());
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + Preset::smoke().train.steps.unwrap());

    let summary = ok(&[&with("eval")[..], &["--modes", "non-cot,mm-cot", "--episodes", "3"]].concat());
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("non-cot,3,") && rows[2].starts_with("mm-cot,3,"));
    assert!(out.join("reports-mm-cot.jsonl").exists());

    let bench = ok(&with("bench-codec"));
    let mse: Vec<f64> = bench.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(mse.len(), 4);
    assert!(mse.windows(2).all(|w| w[1] < w[0]), "{mse:?}");
}

#[test]
fn record_count_is_one_per_chunk_without_augmentation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = out.join("plain.toml");
    std::fs::write(&cfg, "[data]\naugment = false\n").unwrap();
    let base = ["--preset", "smoke", "--out", s(out)];
    ok(&[&["train-codec"][..], &base[..]].concat());

    let plain: Value = serde_json::from_str(&ok(&[&["gen-data"][..], &base[..], &["--config", s(&cfg)]].concat())).unwrap();
    let augmented: Value = serde_json::from_str(&ok(&[&["gen-data"][..], &base[..]].concat())).unwrap();

    let d = Preset::smoke().data;
    let episodes = generate_episodes(d.seed, d.episodes, &d.world, &d.task, &d.render).unwrap();
    let expected: usize = episodes.iter().map(|e| e.trajectory.len().div_ceil(d.k)).sum();
    assert_eq!(plain["records"].as_u64().unwrap() as usize, expected);
    assert!(augmented["records"].as_u64().unwrap() > plain["records"].as_u64().unwrap());
}

#[test]
fn missing_codec_is_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fails(&["gen-data", "--preset", "smoke", "--out", s(dir.path())]), "missing-artifact");
    assert_eq!(fails(&["stats", "--dataset", s(&dir.path().join("nope.jsonl"))]), "missing-artifact");
}

#[test]
fn dataset_from_another_codec_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let other = dir.path().join("other.toml");
    std::fs::write(&other, "[codec]\nseed = 9\n").unwrap();
    ok(&["train-codec", "--preset", "smoke", "--out", s(&a)]);
    ok(&["train-codec", "--preset", "smoke", "--out", s(&b), "--config", s(&other)]);
    ok(&["gen-data", "--preset", "smoke", "--out", s(&a)]);
    let kind = fails(&[
        "train",
        "--preset",
        "smoke",
        "--out",
        s(&b),
        "--dataset",
        s(&a.join("dataset.jsonl")),
    ]);
    assert_eq!(kind, "hash-mismatch");
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    assert_eq!(fails(&["experiment", "no-such", "--preset", "smoke", "--out", out]), "invalid-config");
    assert_eq!(fails(&["train-codec", "--preset", "huge", "--out", out]), "invalid-config");
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[train]\nbatch_size = 0\n").unwrap();
    assert_eq!(fails(&["train-codec", "--preset", "smoke", "--out", out, "--config", s(&bad)]), "invalid-config");
}

#[test]
fn report_renders_tables_and_charts() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("r.csv");
    std::fs::write(
        &results,
        "experiment,label,eval_mode,sr,isr,csr,cgt,aps\n\
         var-scale,scale-1,non-cot,0.1,0.2,0.1,0.1,10\n\
         var-scale,scale-2,non-cot,0.2,0.3,0.2,0.1,10\n\
         alignment-ablation,with-alignment,non-cot,0.1,0.2,0.1,0.1,10\n\
         alignment-ablation,without-alignment,non-cot,0.0,0.1,0.0,0.0,10\n",
    )
    .unwrap();
    let out = dir.path().join("rep");
    let listed = ok(&["report", "--results", s(&results), "--out", s(&out)]);
    assert_eq!(listed.lines().count(), 3);
    let md = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert!(md.contains("## var-scale") && md.contains("| with-alignment | non-cot | 1 |"));
    assert!(std::fs::read_to_string(out.join("var-scale-isr.svg")).unwrap().contains("<polyline"));
    assert!(std::fs::read_to_string(out.join("alignment-ablation-isr.svg")).unwrap().contains("<rect"));
}
