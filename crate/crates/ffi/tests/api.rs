mod common;

use std::ffi::{CStr, CString};
use std::ptr;

use dialectid::charcnn::argmax;
use dialectid::corpus::preprocess;
use dialectid::kernel_models::BaseModel;
use dialectid_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(did_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn kernel_value_matches_shared_ngram_count() {
    let mut v = 0.0;
    let s = unsafe { did_kernel_value(c("abcab").as_ptr(), c("cabx").as_ptr(), 2, false, &mut v) };
    assert_eq!(s, DidStatus::Ok);
    assert_eq!(v, 2.0);
    let s = unsafe { did_kernel_value(c("abc").as_ptr(), c("abc").as_ptr(), 2, true, &mut v) };
    assert_eq!(s, DidStatus::Ok);
    assert!((v - 1.0).abs() < 1e-12);
}

#[test]
fn invalid_arguments_set_status_and_message() {
    let mut v = 0.0;
    let s = unsafe { did_kernel_value(ptr::null(), c("a").as_ptr(), 2, false, &mut v) };
    assert_eq!(s, DidStatus::NullPointer);
    assert!(last_error().contains("x is NULL"));

    let s = unsafe { did_kernel_value(c("a").as_ptr(), c("b").as_ptr(), 0, false, &mut v) };
    assert_eq!(s, DidStatus::Usage);
    assert!(!last_error().is_empty());

    let bad = [0xffu8, 0xfe, 0];
    let s = unsafe { did_kernel_value(bad.as_ptr().cast(), c("b").as_ptr(), 2, false, &mut v) };
    assert_eq!(s, DidStatus::InvalidUtf8);

    let mut model = ptr::null_mut();
    let s = unsafe { did_kernel_model_load(c("/nonexistent/model").as_ptr(), &mut model) };
    assert_eq!(s, DidStatus::Data);
    assert!(model.is_null());
    assert!(last_error().starts_with("error["));
}

#[test]
fn preprocess_round_trips_through_c_string() {
    let mut out = ptr::null_mut();
    let s = unsafe { did_preprocess(c("  Ţară   DE  la ").as_ptr(), &mut out) };
    assert_eq!(s, DidStatus::Ok);
    let got = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_string();
    unsafe { did_string_free(out) };
    assert_eq!(got, preprocess("  Ţară   DE  la "));
}

#[test]
fn kernel_models_classify_raw_text() {
    let dir = tempfile::tempdir().unwrap();
    for base in [BaseModel::Krr, BaseModel::Svm] {
        let path = common::kernel_model(dir.path(), base);
        let mut model = ptr::null_mut();
        let s = unsafe { did_kernel_model_load(c(path.to_str().unwrap()).as_ptr(), &mut model) };
        assert_eq!(s, DidStatus::Ok, "{}", last_error());
        unsafe {
            assert_eq!(did_kernel_model_classes(model), 2);
            assert_eq!(CStr::from_ptr(did_kernel_model_class_name(model, 1)).to_str().unwrap(), "RO");
            assert!(did_kernel_model_class_name(model, 2).is_null());
        }
        for (text, want) in [("ŢARĂ noua ţară", 0usize), ("CASĂ noua casă", 1)] {
            let mut label = 9;
            let mut probs = [0.0f64; 2];
            let s = unsafe { did_kernel_model_predict(model, c(text).as_ptr(), &mut label, probs.as_mut_ptr(), 2) };
            assert_eq!(s, DidStatus::Ok, "{}", last_error());
            assert_eq!(label, want, "{base:?} {text}");
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(label, if probs[0] >= probs[1] { 0 } else { 1 });
        }
        let mut label = 0;
        let mut small = [0.0f64; 1];
        let s = unsafe { did_kernel_model_predict(model, c("x").as_ptr(), &mut label, small.as_mut_ptr(), 1) };
        assert_eq!(s, DidStatus::BufferTooSmall);
        unsafe { did_kernel_model_free(model) };
    }
}

#[test]
fn cnn_prediction_and_attribution_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let (path, art) = common::cnn_model(dir.path());
    let mut model = ptr::null_mut();
    let s = unsafe { did_cnn_load(c(path.to_str().unwrap()).as_ptr(), &mut model) };
    assert_eq!(s, DidStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { did_cnn_classes(model) }, 2);

    let text = "Ţară de la mare";
    let mut label = 9;
    let mut probs = [0.0f32; 2];
    let s = unsafe { did_cnn_predict(model, c(text).as_ptr(), &mut label, probs.as_mut_ptr(), 2) };
    assert_eq!(s, DidStatus::Ok);
    let want = art.predict_proba(&[preprocess(text)]).remove(0);
    assert_eq!(probs.to_vec(), want);
    assert_eq!(label, argmax(&want));

    let mut written = 0;
    let s = unsafe { did_cnn_gradcam(model, c(text).as_ptr(), 0, ptr::null_mut(), 0, &mut written) };
    assert_eq!(s, DidStatus::BufferTooSmall);
    assert_eq!(written, preprocess(text).chars().count());
    let mut imp = vec![-1.0f32; written];
    let s = unsafe { did_cnn_gradcam(model, c(text).as_ptr(), 0, imp.as_mut_ptr(), imp.len(), &mut written) };
    assert_eq!(s, DidStatus::Ok, "{}", last_error());
    assert!(imp.iter().all(|v| (0.0..=1.0).contains(v)));

    let s = unsafe { did_cnn_gradcam(model, c(text).as_ptr(), 5, imp.as_mut_ptr(), imp.len(), &mut written) };
    assert_ne!(s, DidStatus::Ok);
    unsafe { did_cnn_free(model) };
}

#[test]
fn null_handles_are_tolerated() {
    unsafe {
        did_kernel_model_free(ptr::null_mut());
        did_cnn_free(ptr::null_mut());
        did_string_free(ptr::null_mut());
        assert_eq!(did_kernel_model_classes(ptr::null()), 0);
        assert!(did_cnn_class_name(ptr::null(), 0).is_null());
        let mut label = 0;
        let s = did_cnn_predict(ptr::null(), c("a").as_ptr(), &mut label, ptr::null_mut(), 0);
        assert_eq!(s, DidStatus::NullPointer);
    }
}
