use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use segloss::io::{encode, write_tensor, Tensor, TensorData};
use segloss::{fixtures, LabelMap, ProbMap, Shape};
use serde_json::Value;
use tempfile::TempDir;

fn segloss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segloss"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, t: &Tensor) -> PathBuf {
    let p = dir.path().join(name);
    write_tensor(&p, t).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// F1 ground truth and prediction written as NTF1 files.
fn f1_files(dir: &TempDir) -> (PathBuf, PathBuf) {
    let (g, pred) = fixtures::f1();
    let gt = write(dir, "gt.ntf", &Tensor::from_labels(&g.label_map()).unwrap());
    let pr = write(dir, "pred.ntf", &Tensor::from_probs(&pred));
    (gt, pr)
}

fn entries(stdout: &[u8]) -> Vec<Value> {
    let v: Value = serde_json::from_slice(stdout).unwrap();
    v["entries"].as_array().unwrap().clone()
}

fn value_of(entries: &[Value], loss: &str) -> f64 {
    entries.iter().find(|e| e["loss"] == loss).unwrap()["value"].as_f64().unwrap()
}

#[test]
fn eval_f1_matches_oracle() {
    let dir = TempDir::new().unwrap();
    let (gt, pred) = f1_files(&dir);
    let out = segloss(&["eval", "--gt", s(&gt), "--pred", s(&pred), "--loss", "all"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let e = entries(&out.stdout);
    assert_eq!(e.len(), 17);
    let oracle = [
        ("ce", 0.22708064055624455),
        ("topk", 0.26765401552238394),
        ("focal", 0.01275145855405024),
        ("ss", 0.04499998875000281),
        ("dice", 0.053254429991948404),
        ("iou", 0.3333332638889034),
        ("tversky", 0.1999999750000031),
        ("generalized_dice", 0.19999990000005008),
        ("focal_tversky", 0.2990697282064575),
        ("asymmetric", 0.17537309179383964),
        ("penalty_gd", 0.06666662777780048),
        ("boundary", -0.3),
        ("hd", 0.09),
        ("combo", -0.34799176729857517),
        ("ell", 0.636344211744049),
    ];
    for (name, want) in oracle {
        let got = value_of(&e, name);
        assert!((got - want).abs() <= 1e-9, "{name}: {got} vs {want}");
    }
}

#[test]
fn eval_values_equal_library_bits() {
    let dir = TempDir::new().unwrap();
    let (gt, pred) = f1_files(&dir);
    let out = segloss(&["eval", "--gt", s(&gt), "--pred", s(&pred), "--loss", "dice,ce"]);
    let e = entries(&out.stdout);
    let (g, p) = fixtures::f1();
    let cfg = segloss::LossConfig::default();
    assert_eq!(value_of(&e, "dice"), segloss::loss::dice_loss(&g, &p, &cfg).unwrap().value);
    assert_eq!(value_of(&e, "ce"), segloss::loss::ce(&g, &p, &cfg).unwrap().value);
    assert_eq!(e[0]["loss"], "dice", "request order is kept");
}

#[test]
fn eval_report_carries_digests_and_config() {
    let dir = TempDir::new().unwrap();
    let (gt, pred) = f1_files(&dir);
    let out = segloss(&["eval", "--gt", s(&gt), "--pred", s(&pred), "--loss", "dice"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let digest = segloss::io::sha256_hex(&std::fs::read(&gt).unwrap());
    assert_eq!(v["inputs"][0]["sha256"], digest.as_str());
    assert_eq!(v["config"]["loss_config"]["epsilon"], 1e-6);
    assert_eq!(v["spacing"], serde_json::json!([1.0]));
}

#[test]
fn eval_config_sets_parameters() {
    let dir = TempDir::new().unwrap();
    let (gt, pred) = f1_files(&dir);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"losses": {"wce": {"weights": [0.75, 0.25]}, "combo": {"alpha": 0.5, "beta": 0.4}}}"#)
        .unwrap();
    let out = segloss(&[
        "eval", "--gt", s(&gt), "--pred", s(&pred), "--loss", "wce,combo", "--config", s(&cfg),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let e = entries(&out.stdout);
    assert!((value_of(&e, "wce") - 0.1292474720456789).abs() < 1e-9);
    assert!((value_of(&e, "combo") - -0.3448503369450639).abs() < 1e-9);
}

#[test]
fn eval_perfect_prediction() {
    let dir = TempDir::new().unwrap();
    let (g, _) = fixtures::f1();
    let gt = write(&dir, "gt.ntf", &Tensor::from_labels(&g.label_map()).unwrap());
    let pred = write(&dir, "pred.ntf", &Tensor::from_probs(&ProbMap::from_one_hot(&g)));
    let out = segloss(&["eval", "--gt", s(&gt), "--pred", s(&pred), "--loss", "all"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let e = entries(&out.stdout);
    for name in [
        "ss", "dice", "iou", "tversky", "generalized_dice", "focal_tversky", "asymmetric", "penalty_gd",
    ] {
        assert!(value_of(&e, name).abs() < 1e-12, "{name}");
    }
    assert!(value_of(&e, "ce").abs() < 1e-12);
}

#[test]
fn eval_csv_output_to_file() {
    let dir = TempDir::new().unwrap();
    let (gt, pred) = f1_files(&dir);
    let path = dir.path().join("r.csv");
    let out = segloss(&[
        "eval", "--gt", s(&gt), "--pred", s(&pred), "--loss", "ce,iou", "--format", "csv", "--out", s(&path),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "loss,family,value,flags,error");
    assert!(lines[1].starts_with("ce,distribution,0.22708064055624455,"));
    assert!(lines[2].starts_with("iou,region,"));
}

#[test]
fn missing_gt_prints_usage() {
    let out = segloss(&["eval", "--pred", "x.ntf"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Usage"));
}

#[test]
fn unknown_loss_lists_names() {
    let dir = TempDir::new().unwrap();
    let (gt, pred) = f1_files(&dir);
    let out = segloss(&["eval", "--gt", s(&gt), "--pred", s(&pred), "--loss", "dice,nope"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("nope") && err.contains("focal_tversky"), "{err}");
}

#[test]
fn malformed_inputs_name_file_and_offset() {
    let dir = TempDir::new().unwrap();
    let (gt, pred) = f1_files(&dir);
    let good = std::fs::read(&pred).unwrap();

    let magic = dir.path().join("magic.ntf");
    let mut bytes = good.clone();
    bytes[..4].copy_from_slice(b"XXXX");
    std::fs::write(&magic, bytes).unwrap();
    let out = segloss(&["eval", "--gt", s(&gt), "--pred", s(&magic)]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("bad-magic") && err.contains("magic.ntf") && err.contains("--pred"), "{err}");

    let short = dir.path().join("short.ntf");
    std::fs::write(&short, &good[..good.len() - 5]).unwrap();
    let out = segloss(&["eval", "--gt", s(&gt), "--pred", s(&short)]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("truncated") && err.contains("byte 16"), "{err}");

    let long = dir.path().join("long.ntf");
    let mut bytes = good.clone();
    bytes.extend_from_slice(&[0, 0]);
    std::fs::write(&long, bytes).unwrap();
    let out = segloss(&["eval", "--gt", s(&gt), "--pred", s(&long)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("trailing-bytes"));

    let missing = dir.path().join("absent.ntf");
    let out = segloss(&["eval", "--gt", s(&missing), "--pred", s(&pred)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("absent.ntf"));
}

#[test]
fn label_and_simplex_faults() {
    let dir = TempDir::new().unwrap();
    let (_, pred) = f1_files(&dir);
    let bad_labels = write(&dir, "labels.ntf", &Tensor::new(vec![4], TensorData::U8(vec![0, 1, 2, 0])).unwrap());
    let out = segloss(&["eval", "--gt", s(&bad_labels), "--pred", s(&pred)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("label-range"));

    let gt = write(&dir, "gt.ntf", &Tensor::new(vec![2], TensorData::U8(vec![0, 1])).unwrap());
    let off = write(&dir, "off.ntf", &Tensor::from_f64(&[2, 2], vec![0.5, 0.5, 0.6, 0.6]).unwrap());
    let out = segloss(&["eval", "--gt", s(&gt), "--pred", s(&off)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("simplex"));

    let float_gt = write(&dir, "fgt.ntf", &Tensor::from_f64(&[2], vec![0.0, 1.0]).unwrap());
    let good = write(&dir, "good.ntf", &Tensor::from_f64(&[2, 2], vec![0.5, 0.5, 0.4, 0.6]).unwrap());
    let out = segloss(&["eval", "--gt", s(&float_gt), "--pred", s(&good)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dtype-mismatch"));

    let three = write(&dir, "three.ntf", &Tensor::new(vec![3], TensorData::U8(vec![0, 1, 0])).unwrap());
    let out = segloss(&["eval", "--gt", s(&three), "--pred", s(&good)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("[shape]"));
}

#[test]
fn degenerate_only_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    // No foreground in the ground truth nor in the thresholded prediction.
    let shape = Shape::new(&[4], 2).unwrap();
    let g = LabelMap::new(shape, vec![0; 4]).unwrap();
    let gt = write(&dir, "gt.ntf", &Tensor::from_labels(&g).unwrap());
    let p = ProbMap::binary(&[4], &[0.2, 0.1, 0.3, 0.4]).unwrap();
    let pred = write(&dir, "pred.ntf", &Tensor::from_probs(&p));
    let out = segloss(&["eval", "--gt", s(&gt), "--pred", s(&pred), "--loss", "dice,hd"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    let e = entries(&out.stdout);
    assert!(e[0]["value"].is_f64());
    assert!(e[1]["value"].is_null() && e[1]["degenerate"] == true);
}

#[test]
fn dt_on_line_mask() {
    let dir = TempDir::new().unwrap();
    let mask = write(&dir, "m.ntf", &Tensor::new(vec![4], TensorData::U8(vec![0, 0, 1, 0])).unwrap());
    let out_path = dir.path().join("d.ntf");
    let out = segloss(&["dt", "--mask", s(&mask), "--out", s(&out_path)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let t = segloss::io::read_tensor(&out_path).unwrap();
    assert_eq!(t.data, TensorData::F64(vec![2.0, 1.0, 0.0, 1.0]));

    let out = segloss(&["dt", "--mask", s(&mask), "--out", s(&out_path), "--signed"]);
    assert!(out.status.success());
    let t = segloss::io::read_tensor(&out_path).unwrap();
    assert_eq!(t.data, TensorData::F64(vec![2.0, 1.0, -1.0, 1.0]));
}

#[test]
fn dt_accepts_pgm_and_spacing() {
    let dir = TempDir::new().unwrap();
    let pgm = dir.path().join("m.pgm");
    std::fs::write(&pgm, b"P5\n3 1\n255\n\xff\x00\x00").unwrap();
    let out_path = dir.path().join("d.ntf");
    let out = segloss(&["dt", "--mask", s(&pgm), "--out", s(&out_path), "--spacing", "1,2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let t = segloss::io::read_tensor(&out_path).unwrap();
    assert_eq!(t.dims, vec![1, 3]);
    assert_eq!(t.data, TensorData::F64(vec![0.0, 2.0, 4.0]));
}

#[test]
fn relations_pass() {
    let out = segloss(&["relations", "--trials", "20", "--seed", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], true);
    assert!(v["checks"].as_array().unwrap().len() >= 14);
}

#[test]
fn gradcheck_subset() {
    let out = segloss(&["gradcheck", "--loss", "dice,hd,ell", "--trials", "4", "--tol", "1e-5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["losses"].as_array().unwrap().len(), 3);

    // An impossible tolerance fails with a nonzero exit.
    let out = segloss(&["gradcheck", "--loss", "dice", "--trials", "2", "--tol", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn optimize_writes_trajectory() {
    let dir = TempDir::new().unwrap();
    let gt = segloss::optimize::centered_square(8, 4);
    let gt_path = write(&dir, "sq.ntf", &Tensor::from_labels(&gt).unwrap());
    let csv = dir.path().join("t.csv");
    let args = ["optimize", "--loss", "ce", "--gt", s(&gt_path), "--steps", "30", "--lr", "5", "--seed", "7"];
    let mut with_out = args.to_vec();
    with_out.extend(["--out", s(&csv)]);
    let out = segloss(&with_out);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 32);
    assert!(text.starts_with("step,loss,dice_coefficient,hausdorff\n"));

    let again = segloss(&args);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text, "deterministic");
}

#[test]
fn optimize_rejects_bad_learning_rate() {
    let dir = TempDir::new().unwrap();
    let gt_path = dir.path().join("g.ntf");
    std::fs::write(&gt_path, encode(&Tensor::new(vec![2], TensorData::U8(vec![0, 1])).unwrap())).unwrap();
    let out = segloss(&["optimize", "--loss", "dice", "--gt", s(&gt_path), "--lr=-1"]);
    assert_eq!(out.status.code(), Some(2));
}
