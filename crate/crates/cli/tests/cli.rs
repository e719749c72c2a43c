use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use annoseg::page_gt::{decode_label_png, encode_label_png, LabelMap, AMBIGUOUS, BACKGROUND};
use annoseg::imaging::RasterImage;
use serde_json::Value;

const SMALL: &str = r#"
seed = 3

[synth]
height = 512
width = 512
seed = 11

[sampler]
kind = "random-crop"
crop_size = 64

[network]
widths = [2, 2, 2, 2, 2]
convs_per_stack = 1

[optimizer]
steps = 2
batch_size = 1
"#;

fn annoseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_annoseg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = annoseg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["images", "page", "labels"] {
        let mut names: Vec<_> = fs::read_dir(dir.join(sub))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        names.sort();
        for p in names {
            out.push((p.display().to_string(), fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn synth_zero_pages_gives_empty_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("data");
    ok(&["--config", &cfg, "synth", "--out", s(&out), "--train", "0", "--test", "0"]);
    let m = manifest(&out);
    assert_eq!(m["train"].as_array().unwrap().len(), 0);
    assert_eq!(m["test"].as_array().unwrap().len(), 0);
}

#[test]
fn synth_is_byte_identical_across_runs_and_splits_pages() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["--config", &cfg, "synth", "--out", s(&a), "--train", "3", "--test", "2"]);
    ok(&["--config", &cfg, "--threads", "1", "synth", "--out", s(&b), "--train", "3", "--test", "2"]);
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    assert_eq!(ta.len(), 15);
    for ((_, x), (_, y)) in ta.iter().zip(&tb) {
        assert_eq!(x, y);
    }
    let m = manifest(&a);
    assert_eq!(m["train"].as_array().unwrap().len(), 3);
    assert_eq!(m["test"][0], "page0003");
}

#[test]
fn seed_flag_changes_the_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&["--config", &cfg, "synth", "--out", s(&a), "--train", "1", "--test", "0"]);
    ok(&["--config", &cfg, "--seed", "99", "synth", "--out", s(&b), "--train", "1", "--test", "0"]);
    assert_ne!(
        fs::read(a.join("images/page0000.png")).unwrap(),
        fs::read(b.join("images/page0000.png")).unwrap()
    );
}

#[test]
fn gt_rasterize_reproduces_synthetic_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let data = tmp.path().join("data");
    let out = tmp.path().join("gt");
    ok(&["--config", &cfg, "synth", "--out", s(&data), "--train", "2", "--test", "0"]);
    ok(&[
        "--config", &cfg, "gt-rasterize",
        "--xml-dir", s(&data.join("page")),
        "--image-dir", s(&data.join("images")),
        "--out", s(&out),
    ]);
    for stem in ["page0000", "page0001"] {
        let want = decode_label_png(&RasterImage::load_png(data.join(format!("labels/{stem}.png"))).unwrap()).unwrap();
        let got = decode_label_png(&RasterImage::load_png(out.join(format!("{stem}.png"))).unwrap()).unwrap();
        assert_eq!(want, got, "{stem}");
    }
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pages"].as_object().unwrap().len(), 2);
}

#[test]
fn gt_rasterize_empty_input_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let xml = tmp.path().join("xml");
    let img = tmp.path().join("img");
    fs::create_dir_all(&xml).unwrap();
    fs::create_dir_all(&img).unwrap();
    ok(&["gt-rasterize", "--xml-dir", s(&xml), "--image-dir", s(&img), "--out", s(&tmp.path().join("o"))]);
}

#[test]
fn gt_rasterize_dimension_mismatch_fails_naming_the_page() {
    let tmp = tempfile::tempdir().unwrap();
    let xml = tmp.path().join("xml");
    let img = tmp.path().join("img");
    fs::create_dir_all(&xml).unwrap();
    fs::create_dir_all(&img).unwrap();
    fs::write(
        xml.join("p.xml"),
        r#"<PcGts><Page imageFilename="p.png" imageWidth="40" imageHeight="30">
<TextRegion id="a"><Coords points="1,1 10,1 10,10"/></TextRegion></Page></PcGts>"#,
    )
    .unwrap();
    RasterImage::filled(20, 20, &[255, 255, 255]).unwrap().save_png(img.join("p.png")).unwrap();
    let out = annoseg(&["gt-rasterize", "--xml-dir", s(&xml), "--image-dir", s(&img), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("p.xml") && err.contains("30x40") && err.contains("20x20"), "{err}");
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let data = tmp.path().join("data");
    ok(&["--config", &cfg, "synth", "--out", s(&data), "--train", "2", "--test", "0"]);
    let pred = tmp.path().join("pred");
    fs::create_dir_all(&pred).unwrap();
    for stem in ["page0000", "page0001"] {
        let gt = decode_label_png(&RasterImage::load_png(data.join(format!("labels/{stem}.png"))).unwrap()).unwrap();
        let cleared: Vec<u8> = gt.labels().iter().map(|&l| if l == AMBIGUOUS { BACKGROUND } else { l }).collect();
        let pred_map = LabelMap::new(gt.height(), gt.width(), cleared).unwrap();
        encode_label_png(&pred_map).save_png(pred.join(format!("{stem}_labels.png"))).unwrap();
    }
    ok(&["--config", &cfg, "eval", "--pred", s(&pred), "--gt", s(&data.join("labels"))]);
    let r: Value = serde_json::from_str(&fs::read_to_string(pred.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["mean_iou"].as_f64().unwrap(), 1.0);
    assert!(pred.join("page0000_diff.png").exists());
}

#[test]
fn eval_with_missing_prediction_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let data = tmp.path().join("data");
    ok(&["--config", &cfg, "synth", "--out", s(&data), "--train", "1", "--test", "0"]);
    let pred = tmp.path().join("pred");
    fs::create_dir_all(&pred).unwrap();
    let out = annoseg(&["eval", "--pred", s(&pred), "--gt", s(&data.join("labels"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_then_infer_single_tile() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    let pred = tmp.path().join("pred");
    ok(&["--config", &cfg, "synth", "--out", s(&data), "--train", "1", "--test", "1"]);
    ok(&["--config", &cfg, "train", "--data", s(&data), "--out", s(&model)]);
    assert!(model.join("model.ckpt").exists());
    let losses = fs::read_to_string(model.join("losses.csv")).unwrap();
    assert_eq!(losses.lines().count(), 3);
    ok(&["--config", &cfg, "infer", "--model", s(&model), "--input", s(&data.join("images/page0001.png")), "--out", s(&pred)]);
    let labels = decode_label_png(&RasterImage::load_png(pred.join("page0001_labels.png")).unwrap()).unwrap();
    assert_eq!((labels.height(), labels.width()), (512, 512));
    assert!(labels.count(AMBIGUOUS) == 0);
    for c in 0..2 {
        let p = RasterImage::load_png(pred.join(format!("page0001_prob{c}.png")));
        assert!(p.is_ok(), "prob{c}");
    }
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.toml");
    fs::write(&p, "[optimizer]\nlr = -1.0\n").unwrap();
    let out = annoseg(&["--config", s(&p), "train", "--data", s(tmp.path()), "--out", s(&tmp.path().join("m"))]);
    assert_eq!(out.status.code(), Some(1));

    fs::write(&p, "bogus = 1\n").unwrap();
    let out = annoseg(&["--config", s(&p), "synth", "--out", s(&tmp.path().join("d"))]);
    assert_eq!(out.status.code(), Some(1));

    let out = annoseg(&["synth"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_model_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = annoseg(&[
        "infer", "--model", s(&tmp.path().join("nope")),
        "--input", s(tmp.path()), "--out", s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
