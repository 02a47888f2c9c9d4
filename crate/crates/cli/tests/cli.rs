use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn vsfat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsfat")).args(args).output().expect("run vsfat")
}

fn ok_json(args: &[&str]) -> Value {
    let out = vsfat(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Phantom {
    _dir: tempfile::TempDir,
    volume: PathBuf,
    truth: Value,
    truth_mask: PathBuf,
}

fn phantom(extra: &[&str]) -> Phantom {
    let dir = tempfile::tempdir().unwrap();
    let volume = dir.path().join("p.nii.gz");
    let truth_mask = dir.path().join("subcut.nii.gz");
    let mut args = vec!["phantom", "-o", s(&volume), "--truth-mask", s(&truth_mask)];
    args.extend_from_slice(extra);
    ok_json(&args);
    let sidecar = std::fs::read(dir.path().join("p.nii.gz.truth.json")).unwrap();
    Phantom { truth: serde_json::from_slice(&sidecar).unwrap(), volume, truth_mask, _dir: dir }
}

#[test]
fn mask_counts_match_truth() {
    let p = phantom(&["--blob", "20"]);
    let out = p.volume.with_file_name("m.nii");
    let r = ok_json(&["mask", s(&p.volume), "-o", s(&out), "--no-opening"]);
    assert_eq!(r["foreground"], p.truth["fat_voxels_total"]);
    assert!(out.exists());
}

#[test]
fn opening_removes_artifact_pixels() {
    let p = phantom(&["--blob", "20", "--artifacts"]);
    let out = p.volume.with_file_name("m.nii");
    let raw = ok_json(&["mask", s(&p.volume), "-o", s(&out), "--no-opening"]);
    let opened = ok_json(&["mask", s(&p.volume), "-o", s(&out)]);
    assert!(raw["foreground"].as_u64() > opened["foreground"].as_u64());
}

#[test]
fn bad_path_is_a_data_error() {
    let out = vsfat(&["mask", "/no/such/file.nii", "-o", "/tmp/x.nii"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
    assert!(out.stdout.is_empty());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(vsfat(&["ratio"]).status.code(), Some(1));
    assert_eq!(vsfat(&["ratio", "x.nii", "--granular-degree", "0"]).status.code(), Some(1));
    assert_eq!(vsfat(&["ratio", "x.nii", "--slices", "5:2"]).status.code(), Some(1));
    assert_eq!(vsfat(&["bench", "x.nii", "--reps", "1"]).status.code(), Some(1));
    assert_eq!(vsfat(&["--help"]).status.code(), Some(0));
    assert_eq!(vsfat(&["--version"]).status.code(), Some(0));
}

#[test]
fn ratio_of_disk_phantom() {
    let p = phantom(&["--blob", "20"]);
    let r = ok_json(&["ratio", s(&p.volume)]);
    let ratio = r["ratio"].as_f64().unwrap();
    assert!((ratio / 0.0533 - 1.0).abs() < 0.05);
    assert_eq!(r["label"], "ITB");
    for key in ["total", "subcut", "visceral", "warnings"] {
        assert!(r.get(key).is_some(), "{key}");
    }
    let with_ref = ok_json(&["ratio", s(&p.volume), "--reference-ratio", "0.0533"]);
    assert!(with_ref["relative_error"].as_f64().unwrap() < 0.05);
}

#[test]
fn near_threshold_phantom_is_crohns() {
    let p = phantom(&["--ring-inner", "100", "--ring-outer", "130", "--target-ratio", "0.70"]);
    assert!((p.truth["true_ratio"].as_f64().unwrap() - 0.70).abs() < 1e-9);
    let r = ok_json(&["ratio", s(&p.volume)]);
    assert_eq!(r["label"], "CD");
}

#[test]
fn air_only_volume_fails_with_two() {
    let p = phantom(&["--size", "64", "--ring-inner", "10", "--ring-outer", "20", "--blob", "3"]);
    // a window that excludes every tissue leaves nothing but air
    let out = vsfat(&["ratio", s(&p.volume), "--hu-min", "500", "--hu-max", "600"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn mask_input_without_fat_fails_with_two() {
    let p = phantom(&["--size", "64", "--ring-inner", "10", "--ring-outer", "20"]);
    let m = p.volume.with_file_name("empty.nii");
    ok_json(&["mask", s(&p.volume), "-o", s(&m), "--hu-min", "500", "--hu-max", "600"]);
    let out = vsfat(&["ratio", s(&m), "--mask-input"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("subcutaneous"));
}

#[test]
fn segment_matches_true_band() {
    let p = phantom(&["--blob", "20"]);
    let seg = p.volume.with_file_name("seg.nii.gz");
    let trace = p.volume.with_file_name("trace.csv");
    let r = ok_json(&["segment", s(&p.volume), "-o", s(&seg), "--trace", s(&trace)]);
    assert_eq!(r["shape"], serde_json::json!([512, 512, 1]));
    let cmp = ok_json(&["compare", s(&seg), s(&p.truth_mask)]);
    assert!(cmp["dice"].as_f64().unwrap() >= 0.95, "{cmp}");
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("theta,inner_x,inner_y,outer_x,outer_y,contribution"));
    assert_eq!(lines.count(), 7200);
}

#[test]
fn trace_has_z_column_for_stacks() {
    let p = phantom(&["--size", "128", "--ring-inner", "20", "--ring-outer", "40", "--depth", "3"]);
    let seg = p.volume.with_file_name("seg.nii");
    let trace = p.volume.with_file_name("trace.csv");
    ok_json(&["segment", s(&p.volume), "-o", s(&seg), "--trace", s(&trace), "--slices", "1:2", "--granular-degree", "0.7"]);
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("z,theta,"));
    assert_eq!(text.lines().count(), 1 + 2 * 515);
    assert!(text.lines().nth(1).unwrap().starts_with("1,0,"));
}

#[test]
fn score_examples() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ptb.csv");
    std::fs::write(&csv, "slice_index,prob\n0,0.9\n1,0.99\n10,0.8\n20,0.7\n30,0.1\n").unwrap();
    let r = ok_json(&["score", "--ratio", "0.5", "--ptb-csv", s(&csv)]);
    assert_eq!(r["label"], "ITB");
    assert!((r["score_crohn"].as_f64().unwrap() + 0.13).abs() < 1e-12);
    assert!((r["score_tb"].as_f64().unwrap() - 0.93).abs() < 1e-12);
    assert_eq!(r["n_probabilities"], 4);

    let r = ok_json(&["score", "--ratio", "0.9"]);
    assert_eq!(r["label"], "CD");
    assert_eq!(r["p_ptb"], 0.0);

    std::fs::write(&csv, "slice_index,prob\n0,0.9\n10,oops\n").unwrap();
    let out = vsfat(&["score", "--ratio", "0.5", "--ptb-csv", s(&csv)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn compare_identical_and_mismatched() {
    let a = phantom(&["--size", "64", "--ring-inner", "10", "--ring-outer", "20"]);
    let b = phantom(&["--size", "96", "--ring-inner", "10", "--ring-outer", "20"]);
    let r = ok_json(&["compare", s(&a.truth_mask), s(&a.truth_mask)]);
    assert_eq!(r["dice"], 1.0);
    assert_eq!(r["jaccard"], 1.0);
    let out = vsfat(&["compare", s(&a.truth_mask), s(&b.truth_mask)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn metrics_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, truth) = (dir.path().join("pred.csv"), dir.path().join("truth.csv"));
    // tp=2, fp=1, fn=1, tn=6 with CD positive
    let truth_labels = ["CD", "CD", "CD", "ITB", "ITB", "ITB", "ITB", "ITB", "ITB", "ITB"];
    let pred_labels = ["CD", "CD", "ITB", "CD", "ITB", "ITB", "ITB", "ITB", "ITB", "ITB"];
    let rows = |labels: &[&str]| {
        let mut t = String::from("case_id,label\n");
        for (i, l) in labels.iter().enumerate().rev() {
            t += &format!("case{i},{l}\n");
        }
        t
    };
    std::fs::write(&truth, rows(&truth_labels)).unwrap();
    std::fs::write(&pred, rows(&pred_labels)).unwrap();
    let r = ok_json(&["metrics", s(&pred), s(&truth)]);
    assert_eq!(r["counts"], serde_json::json!({"tp": 2, "fp": 1, "fn": 1, "tn": 6}));
    assert!((r["metrics"]["mcc"].as_f64().unwrap() - 11.0 / 21.0).abs() < 1e-12);
    assert!((r["metrics"]["accuracy"].as_f64().unwrap() - 0.8).abs() < 1e-12);
}

#[test]
fn ratio_is_deterministic_across_threads() {
    let p = phantom(&["--size", "256", "--ring-inner", "30", "--ring-outer", "60", "--blob", "12", "--depth", "3"]);
    let base = vsfat(&["ratio", s(&p.volume)]).stdout;
    for n in ["1", "4", "8"] {
        assert_eq!(vsfat(&["ratio", s(&p.volume), "--parallel", n]).stdout, base);
    }
}

#[test]
fn csv_format() {
    let p = phantom(&["--size", "128", "--ring-inner", "20", "--ring-outer", "40", "--blob", "8"]);
    let out = vsfat(&["--format", "csv", "ratio", s(&p.volume)]);
    let text = String::from_utf8(out.stdout).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.split(',').any(|h| h == "ratio"));
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn bench_report() {
    let p = phantom(&["--size", "96", "--ring-inner", "15", "--ring-outer", "30", "--depth", "2"]);
    let r = ok_json(&["bench", s(&p.volume), "--reps", "3", "--granular-degree", "1", "--parallel", "2"]);
    assert_eq!(r["repetitions"], 3);
    assert_eq!(r["threads"], 2);
    assert_eq!(r["voxels"], 96 * 96 * 2);
    assert!(r["total_with_io"]["mean_s"].as_f64() >= r["total"]["mean_s"].as_f64());
}

#[test]
fn phantom_from_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"width": 128, "height": 128, "ring_inner": {"a": 20, "b": 15}, "ring_outer": {"a": 40, "b": 30}, "body": {"a": 45, "b": 35}}"#).unwrap();
    let out = dir.path().join("e.nii");
    let r = ok_json(&["phantom", "-o", s(&out), "--spec", s(&spec)]);
    assert_eq!(r["shape"], serde_json::json!([128, 128, 1]));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"width": 128, "height": 128}"#).unwrap();
    assert_eq!(vsfat(&["phantom", "-o", s(&out), "--spec", s(&bad)]).status.code(), Some(2));
}
