use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use abexrat::dataset::save_dataset;
use abexrat::embedder::mock_embed;
use abexrat::synthbench::{generate_synthetic, SynthSpec};
use abexrat::{Dataset, TrainConfig};
use abexrat_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = abx_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn split_blobs(dir: &Path) -> (CString, CString, Dataset) {
    let spec = SynthSpec {
        class_counts: vec![40, 40],
        dim: 6,
        separation: 1.0,
        noise: 0.05,
        seed: 11,
    };
    let data = generate_synthetic(&spec).unwrap();
    let (train, val, _) = abexrat::dataset::stratified_split(&data, [8, 1, 1], 3).unwrap();
    let tp = dir.join("train.jsonl");
    let vp = dir.join("val.jsonl");
    save_dataset(&train, &tp).unwrap();
    save_dataset(&val, &vp).unwrap();
    (cstr(tp.to_str().unwrap()), cstr(vp.to_str().unwrap()), val)
}

fn small_config() -> CString {
    let cfg = TrainConfig {
        epochs: 15,
        hidden_width: 8,
        learning_rate: 1e-2,
        seed: 5,
        ..TrainConfig::default()
    };
    cstr(&serde_json::to_string(&cfg).unwrap())
}

#[test]
fn version_is_the_package_version() {
    let v = unsafe { CStr::from_ptr(abx_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    let mut out = ptr::null_mut();
    let status = unsafe { abx_model_load(ptr::null(), &mut out) };
    assert_eq!(status, AbxStatus::NullPointer);
    assert!(last_error().contains("path"));
    assert!(out.is_null());
    unsafe {
        abx_model_free(ptr::null_mut());
        abx_string_free(ptr::null_mut());
    }
    assert_eq!(unsafe { abx_model_dims(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) }, AbxStatus::NullPointer);
}

#[test]
fn missing_model_file_is_a_data_error() {
    let mut out = ptr::null_mut();
    let path = cstr("/nonexistent/model.json");
    assert_eq!(unsafe { abx_model_load(path.as_ptr(), &mut out) }, AbxStatus::Data);
    assert!(!last_error().is_empty());
}

#[test]
fn fgm_matches_definition() {
    let g = [3.0, -4.0, 0.0];
    let mut out = [0.0; 3];
    assert_eq!(unsafe { abx_fgm_perturb(g.as_ptr(), 3, 0.5, out.as_mut_ptr()) }, AbxStatus::Ok);
    for (o, e) in out.iter().zip([0.3, -0.4, 0.0]) {
        assert!((o - e).abs() <= 1e-15);
    }
    let z = [0.0; 3];
    assert_eq!(unsafe { abx_fgm_perturb(z.as_ptr(), 3, 0.5, out.as_mut_ptr()) }, AbxStatus::Ok);
    assert_eq!(out, [0.0; 3]);
}

#[test]
fn focal_loss_worked_case_and_gradient() {
    let logits = [0.0, 0.0];
    let labels = [0usize];
    let mut loss = 0.0;
    let mut grad = [0.0; 2];
    let status = unsafe {
        abx_focal_loss(logits.as_ptr(), labels.as_ptr(), 1, 2, 3.0, ptr::null(), &mut loss, grad.as_mut_ptr())
    };
    assert_eq!(status, AbxStatus::Ok);
    assert!((loss - 0.125 * 2f64.ln()).abs() <= 1e-12);
    // p = (1/2, 1/2): coeff = 3·(1/4)·(1/2)·ln(1/2) − 1/8
    let coeff = 3.0 * 0.25 * 0.5 * 0.5f64.ln() - 0.125;
    assert!((grad[0] - coeff * 0.5).abs() <= 1e-15);
    assert!((grad[1] + coeff * 0.5).abs() <= 1e-15);

    let bad = [2usize];
    let status = unsafe { abx_focal_loss(logits.as_ptr(), bad.as_ptr(), 1, 2, 3.0, ptr::null(), &mut loss, ptr::null_mut()) };
    assert_eq!(status, AbxStatus::Data);
    let nan = [f64::NAN, 0.0];
    let status = unsafe { abx_focal_loss(nan.as_ptr(), labels.as_ptr(), 1, 2, 0.0, ptr::null(), &mut loss, ptr::null_mut()) };
    assert_eq!(status, AbxStatus::Numeric);
}

#[test]
fn mock_embed_matches_core() {
    let text = cstr("scaffold collapse on level three");
    let mut out = vec![0.0; 16];
    assert_eq!(unsafe { abx_mock_embed(text.as_ptr(), 16, out.as_mut_ptr()) }, AbxStatus::Ok);
    assert_eq!(out, mock_embed("scaffold collapse on level three", 16));
    assert_eq!(unsafe { abx_mock_embed(text.as_ptr(), 0, out.as_mut_ptr()) }, AbxStatus::InvalidArgument);
}

#[test]
fn train_predict_evaluate_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let (train, val, val_ds) = split_blobs(dir.path());
    let cfg = small_config();
    let mut model = ptr::null_mut();
    let status = unsafe { abx_train(train.as_ptr(), val.as_ptr(), cfg.as_ptr(), &mut model) };
    assert_eq!(status, AbxStatus::Ok, "{}", last_error());

    let (mut d, mut h, mut c) = (0, 0, 0);
    assert_eq!(unsafe { abx_model_dims(model, &mut d, &mut h, &mut c) }, AbxStatus::Ok);
    assert_eq!((d, h, c), (6, 8, 2));

    let mut label = ptr::null_mut();
    assert_eq!(unsafe { abx_model_label(model, 1, &mut label) }, AbxStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(label) }.to_str().unwrap(), "class_1");
    unsafe { abx_string_free(label) };
    assert_eq!(unsafe { abx_model_label(model, 2, &mut label) }, AbxStatus::InvalidArgument);

    let x: Vec<f64> = val_ds.samples[0].embedding.as_ref().unwrap().iter().map(|&v| v as f64).collect();
    let mut probs = [0.0; 2];
    assert_eq!(unsafe { abx_model_probabilities(model, x.as_ptr(), x.len(), probs.as_mut_ptr(), 2) }, AbxStatus::Ok);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let mut class = usize::MAX;
    assert_eq!(unsafe { abx_model_predict(model, x.as_ptr(), x.len(), &mut class) }, AbxStatus::Ok);
    assert_eq!(class, if probs[1] > probs[0] { 1 } else { 0 });
    assert_eq!(unsafe { abx_model_predict(model, x.as_ptr(), 3, &mut class) }, AbxStatus::Data);

    let mut report = ptr::null_mut();
    assert_eq!(unsafe { abx_model_evaluate(model, val.as_ptr(), &mut report) }, AbxStatus::Ok);
    let json: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(report) }.to_str().unwrap()).unwrap();
    unsafe { abx_string_free(report) };
    assert!(json["macro"]["f1"].as_f64().unwrap() >= 0.9);

    let path = dir.path().join("model.json");
    let cpath = cstr(path.to_str().unwrap());
    assert_eq!(unsafe { abx_model_save(model, cpath.as_ptr()) }, AbxStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { abx_model_load(cpath.as_ptr(), &mut loaded) }, AbxStatus::Ok);
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(abx_model_to_json(model, &mut a), AbxStatus::Ok);
        assert_eq!(abx_model_to_json(loaded, &mut b), AbxStatus::Ok);
        assert_eq!(CStr::from_ptr(a), CStr::from_ptr(b));
        let mut reparsed = ptr::null_mut();
        assert_eq!(abx_model_from_json(a, &mut reparsed), AbxStatus::Ok);
        abx_model_free(reparsed);
        abx_string_free(a);
        abx_string_free(b);
        abx_model_free(loaded);
        abx_model_free(model);
    }
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (train, val, _) = split_blobs(dir.path());
    let cfg = cstr(r#"{"epochs": 2, "no_such_field": 1}"#);
    let mut model = ptr::null_mut();
    let status = unsafe { abx_train(train.as_ptr(), val.as_ptr(), cfg.as_ptr(), &mut model) };
    assert_eq!(status, AbxStatus::Data);
    assert!(last_error().contains("no_such_field"));
    assert!(model.is_null());
}

#[test]
fn generated_header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/abexrat.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["abx_model_load", "abx_model_predict", "abx_focal_loss", "AbxStatus", "ABX_STATUS_NUMERIC"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler found; skipping syntax check");
        return;
    };
    assert!(status.success());
}
