use std::ffi::{CStr, CString};
use std::ptr;

use conlab_ffi::*;

fn last_error() -> String {
    let p = conlab_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn synthetic(labels: usize, points: usize, noise: f64) -> *mut ConlabDistribution {
    let mut d = ptr::null_mut();
    let s = unsafe { conlab_distribution_synthetic(labels, points, noise, 7, &mut d) };
    assert_eq!(s, ConlabStatus::Ok);
    assert!(!d.is_null());
    d
}

fn scores(rows: usize, labels: usize) -> *mut ConlabScores {
    let data: Vec<f64> = (0..rows * labels).map(|k| ((k * 7919) % 13) as f64 / 4.0 - 1.5).collect();
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { conlab_scores_new(data.as_ptr(), rows, labels, &mut s) }, ConlabStatus::Ok);
    s
}

#[test]
fn distribution_lifecycle_and_info() {
    let d = synthetic(4, 10, 0.2);
    let (mut c, mut n, mut v) = (0usize, 0usize, -1.0f64);
    assert_eq!(unsafe { conlab_distribution_info(d, &mut c, &mut n, &mut v) }, ConlabStatus::Ok);
    assert_eq!((c, n), (4, 10));
    assert!((v - 0.2).abs() < 1e-12);
    assert_eq!(
        unsafe { conlab_distribution_info(d, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) },
        ConlabStatus::Ok
    );
    unsafe { conlab_distribution_free(d) };
    unsafe { conlab_distribution_free(ptr::null_mut()) };
}

#[test]
fn noise_free_strict_inference_removes_violation() {
    let d = synthetic(3, 8, 0.0);
    let f = scores(8, 3);
    let mut risk = ConlabRisk::default();
    let mut delta = ConlabRiskDelta::default();
    unsafe {
        assert_eq!(conlab_population_risk(d, f, ConlabLoss::CrossEntropy, &mut risk), ConlabStatus::Ok);
        assert_eq!(conlab_risk_delta(d, f, f64::INFINITY, &mut delta), ConlabStatus::Ok);
    }
    assert!(risk.margin.is_finite() && risk.margin >= 0.0);
    assert!((delta.delta_ce - risk.violation_ce).abs() < 1e-9);
    unsafe {
        conlab_scores_free(f);
        conlab_distribution_free(d);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut d = ptr::null_mut();
    let s = unsafe { conlab_distribution_synthetic(1, 5, 0.0, 0, &mut d) };
    assert_eq!(s, ConlabStatus::InvalidArgument);
    assert!(d.is_null());
    assert!(last_error().contains("label"));

    let text = CString::new("conlab-distribution v1\nlabels x\n").unwrap();
    assert_eq!(unsafe { conlab_distribution_parse(text.as_ptr(), &mut d) }, ConlabStatus::Parse);
    assert!(last_error().starts_with("line 2"));

    let path = CString::new("/nonexistent/conlab.dist").unwrap();
    assert_eq!(unsafe { conlab_distribution_load(path.as_ptr(), &mut d) }, ConlabStatus::Io);

    let mut out = 0.0;
    assert_eq!(unsafe { conlab_lambert_w0(-1.0, &mut out) }, ConlabStatus::InvalidArgument);
    assert_eq!(unsafe { conlab_lambert_w0(1.0, ptr::null_mut()) }, ConlabStatus::NullPointer);
    assert_eq!(
        unsafe { conlab_population_risk(ptr::null(), ptr::null(), ConlabLoss::Ell1, ptr::null_mut()) },
        ConlabStatus::NullPointer
    );

    let dist = synthetic(3, 4, 0.0);
    let wrong = scores(3, 3);
    let mut delta = ConlabRiskDelta::default();
    assert_ne!(unsafe { conlab_risk_delta(dist, wrong, 1.0, &mut delta) }, ConlabStatus::Ok);
    assert_ne!(unsafe { conlab_risk_delta(dist, wrong, -1.0, &mut delta) }, ConlabStatus::Ok);
    unsafe {
        conlab_scores_free(wrong);
        conlab_distribution_free(dist);
    }
}

#[test]
fn scalar_functions() {
    let mut w = 0.0;
    assert_eq!(unsafe { conlab_lambert_w0(std::f64::consts::E, &mut w) }, ConlabStatus::Ok);
    assert!((w - 1.0).abs() < 1e-15);
    let mut mu = -1.0;
    assert_eq!(unsafe { conlab_select_mu(0.2, 0.2, &mut mu) }, ConlabStatus::Ok);
    assert!(mu.abs() < 1e-12);
    assert_eq!(unsafe { conlab_select_mu(0.5, 0.0, &mut mu) }, ConlabStatus::Ok);
    assert!(mu.is_infinite());
    let v = unsafe { CStr::from_ptr(conlab_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn round_trip_through_text_format() {
    let d = synthetic(3, 6, 1.0 / 3.0);
    let (mut c, mut n, mut v) = (0, 0, 0.0);
    unsafe { conlab_distribution_info(d, &mut c, &mut n, &mut v) };
    let dir = std::env::temp_dir().join(format!("conlab-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("d.dist");
    let spec = conlab::synth::make_finite(3, 6, 1.0 / 3.0, 7).unwrap();
    conlab::format::save_distribution(&file, &spec.dist).unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { conlab_distribution_load(path.as_ptr(), &mut e) }, ConlabStatus::Ok);
    let (mut c2, mut n2, mut v2) = (0, 0, 0.0);
    unsafe { conlab_distribution_info(e, &mut c2, &mut n2, &mut v2) };
    assert_eq!((c, n, v), (c2, n2, v2));
    unsafe {
        conlab_distribution_free(d);
        conlab_distribution_free(e);
    }
    std::fs::remove_dir_all(dir).ok();
}
