use std::ffi::{CStr, CString};
use std::ptr;

use richrep_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rr_last_error()) }.to_string_lossy().into_owned()
}

fn matrix(rows: usize, cols: usize, data: &[f64]) -> *mut RrMatrix {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { rr_matrix_new(rows, cols, data.as_ptr(), &mut m) }, RrStatus::Ok);
    m
}

fn read(m: *const RrMatrix) -> Vec<f64> {
    let n = unsafe { rr_matrix_rows(m) * rr_matrix_cols(m) };
    let mut v = vec![0.0; n];
    assert_eq!(unsafe { rr_matrix_copy_to(m, v.as_mut_ptr(), n) }, RrStatus::Ok);
    v
}

/// Two well-separated clusters in 2-d.
fn blobs() -> (Vec<f64>, Vec<usize>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..40 {
        let c = i % 2;
        let s = if c == 0 { -1.0 } else { 1.0 };
        let j = (i as f64) * 0.01;
        x.extend([s * 2.0 + j, s * 1.5 - j]);
        y.push(c);
    }
    (x, y)
}

#[test]
fn version_is_prefixed() {
    let v = unsafe { CStr::from_ptr(rr_version()) }.to_str().unwrap();
    assert!(v.starts_with('v'));
}

#[test]
fn matrix_round_trip_and_buffer_check() {
    let m = matrix(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    assert_eq!(read(m), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let mut small = [0.0; 4];
    assert_eq!(unsafe { rr_matrix_copy_to(m, small.as_mut_ptr(), 4) }, RrStatus::Buffer);
    assert!(last_error().contains("need 6"));
    unsafe { rr_matrix_free(m) };
}

#[test]
fn null_arguments_are_reported() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { rr_matrix_new(2, 2, ptr::null(), &mut m) }, RrStatus::Null);
    assert!(m.is_null());
    assert!(last_error().contains("null"));
    assert_eq!(unsafe { rr_matrix_rows(ptr::null()) }, 0);
    unsafe { rr_matrix_free(ptr::null_mut()) };
    assert!(unsafe { rr_probe_cost(ptr::null()) }.is_nan());
}

#[test]
fn success_clears_error() {
    let mut m = ptr::null_mut();
    unsafe { rr_matrix_new(1, 1, ptr::null(), &mut m) };
    assert!(!last_error().is_empty());
    let m = matrix(1, 1, &[0.0]);
    assert!(last_error().is_empty());
    unsafe { rr_matrix_free(m) };
}

#[test]
fn network_train_features_and_save() {
    let (x, y) = blobs();
    let xm = matrix(40, 2, &x);
    let sizes = [2usize, 8, 2];
    let mut net = ptr::null_mut();
    assert_eq!(
        unsafe { rr_network_mlp(sizes.as_ptr(), 3, false, 3, &mut net) },
        RrStatus::Ok
    );
    assert_eq!(unsafe { rr_network_feature_dim(net) }, 8);
    assert_eq!(unsafe { rr_network_n_classes(net) }, 2);

    let cfg = CString::new(
        r#"{"lr":0.1,"momentum":0.9,"weight_decay":0.0,"epochs":30,"batch_size":8,"schedule":{"kind":"constant"},"seed":5}"#,
    )
    .unwrap();
    let mut loss = f64::NAN;
    let st = unsafe { rr_network_train(net, xm, y.as_ptr(), y.len(), cfg.as_ptr(), &mut loss) };
    assert_eq!(st, RrStatus::Ok, "{}", last_error());
    assert!(loss.is_finite() && loss < 0.2, "loss {loss}");

    let mut f = ptr::null_mut();
    assert_eq!(unsafe { rr_network_features(net, xm, &mut f) }, RrStatus::Ok);
    assert_eq!(unsafe { (rr_matrix_rows(f), rr_matrix_cols(f)) }, (40, 8));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("n.rrnn").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { rr_network_save(net, path.as_ptr()) }, RrStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { rr_network_load(path.as_ptr(), &mut back) }, RrStatus::Ok);
    let mut f2 = ptr::null_mut();
    assert_eq!(unsafe { rr_network_features(back, xm, &mut f2) }, RrStatus::Ok);
    assert_eq!(read(f), read(f2));

    let nets = [net as *const RrNetwork, back as *const RrNetwork];
    let mut cat = ptr::null_mut();
    assert_eq!(unsafe { rr_cat_features(nets.as_ptr(), 2, xm, &mut cat) }, RrStatus::Ok);
    assert_eq!(unsafe { rr_matrix_cols(cat) }, 16);

    unsafe {
        rr_matrix_free(cat);
        rr_matrix_free(f2);
        rr_matrix_free(f);
        rr_network_free(back);
        rr_network_free(net);
        rr_matrix_free(xm);
    }
}

#[test]
fn bad_training_config_is_config_error() {
    let (x, y) = blobs();
    let xm = matrix(40, 2, &x);
    let sizes = [2usize, 4, 2];
    let mut net = ptr::null_mut();
    unsafe { rr_network_mlp(sizes.as_ptr(), 3, false, 0, &mut net) };
    let cfg = CString::new(r#"{"lr":0.1,"bogus":1}"#).unwrap();
    let st = unsafe { rr_network_train(net, xm, y.as_ptr(), y.len(), cfg.as_ptr(), ptr::null_mut()) };
    assert_eq!(st, RrStatus::Config);
    unsafe {
        rr_network_free(net);
        rr_matrix_free(xm);
    }
}

#[test]
fn missing_network_file_is_io_error() {
    let path = CString::new("/nonexistent/dir/x.rrnn").unwrap();
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { rr_network_load(path.as_ptr(), &mut net) }, RrStatus::Io);
}

#[test]
fn probe_fit_predict_and_union() {
    let (x, y) = blobs();
    let xm = matrix(40, 2, &x);
    let cfg = CString::new(r#"{"l2":0.1}"#).unwrap();
    let mut p = ptr::null_mut();
    let st = unsafe { rr_probe_fit(xm, y.as_ptr(), y.len(), cfg.as_ptr(), 1, &mut p) };
    assert_eq!(st, RrStatus::Ok, "{}", last_error());
    assert!(unsafe { rr_probe_converged(p) });
    let cost = unsafe { rr_probe_cost(p) };
    assert!(cost > 0.0 && cost < 2f64.ln());

    let mut pred = vec![9usize; 40];
    assert_eq!(unsafe { rr_probe_predict(p, xm, pred.as_mut_ptr(), 40) }, RrStatus::Ok);
    assert_eq!(pred, y);

    let mut costs = [0.0; 3];
    let st = unsafe { rr_union_cost(xm, xm, y.as_ptr(), y.len(), cfg.as_ptr(), costs.as_mut_ptr()) };
    assert_eq!(st, RrStatus::Ok);
    assert!(costs[2] <= costs[0] + 1e-6 && costs[2] <= costs[1] + 1e-6);

    let ym = &y[..10];
    let st = unsafe { rr_union_cost(xm, xm, ym.as_ptr(), ym.len(), ptr::null(), costs.as_mut_ptr()) };
    assert_eq!(st, RrStatus::Shape);
    unsafe {
        rr_probe_free(p);
        rr_matrix_free(xm);
    }
}

#[test]
fn vrex_objective_values() {
    let r = [1.0, 3.0];
    let mut out = 0.0;
    assert_eq!(unsafe { rr_vrex_objective(r.as_ptr(), 2, 0.0, &mut out) }, RrStatus::Ok);
    assert_eq!(out, 2.0);
    assert_eq!(unsafe { rr_vrex_objective(r.as_ptr(), 2, 2.0, &mut out) }, RrStatus::Ok);
    assert_eq!(out, 4.0);
    assert_eq!(unsafe { rr_vrex_objective(r.as_ptr(), 2, -1.0, &mut out) }, RrStatus::Parameter);
}

#[test]
fn run_config_reports_config_errors() {
    let bad = CString::new(r#"{"pipeline":"verify","nope":1}"#).unwrap();
    assert_eq!(unsafe { rr_run_config_json(bad.as_ptr(), ptr::null()) }, RrStatus::Config);
    assert!(last_error().contains("nope"));
    let bytes = [0xffu8, 0];
    assert_eq!(
        unsafe { rr_run_config_json(bytes.as_ptr().cast(), ptr::null()) },
        RrStatus::Utf8
    );
}

#[test]
fn header_declares_every_entry_point() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/richrep.h")).unwrap();
    for name in [
        "rr_last_error",
        "rr_version",
        "rr_matrix_new",
        "rr_network_train",
        "rr_probe_fit",
        "rr_union_cost",
        "rr_cat_features",
        "rr_vrex_objective",
        "rr_run_config_json",
        "typedef struct RrNetwork RrNetwork",
        "RR_STATUS_PANIC = 11",
    ] {
        assert!(h.contains(name), "{name} missing from header");
    }
}
