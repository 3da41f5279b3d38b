use std::ffi::{CStr, CString};
use std::ptr;

use sohkan_ffi::*;

const SMALL: &str = r#"{"profile": {"n_cycles": 40}, "train": {"steps": 120}}"#;

fn last_error() -> String {
    let p = sohkan_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn simulate(config: &str) -> *mut SohkanDataset {
    let cfg = CString::new(config).unwrap();
    let mut ds = ptr::null_mut();
    let st = unsafe { sohkan_dataset_simulate(cfg.as_ptr(), &mut ds) };
    assert_eq!(st, SohkanStatus::Ok);
    ds
}

fn train(ds: *const SohkanDataset) -> (*mut SohkanModel, f64) {
    let cfg = CString::new(SMALL).unwrap();
    let mut model = ptr::null_mut();
    let mut rmse = f64::NAN;
    let st = unsafe { sohkan_train(ds, cfg.as_ptr(), &mut model, &mut rmse) };
    assert_eq!(st, SohkanStatus::Ok, "{}", last_error());
    (model, rmse)
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(sohkan_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn simulate_train_and_query() {
    let ds = simulate(SMALL);
    assert_eq!(unsafe { sohkan_dataset_n_cycles(ds) }, 41);
    let (model, rmse) = train(ds);
    assert!(rmse.is_finite() && rmse >= 0.0);
    assert_eq!(unsafe { sohkan_model_last_cycle(model) }, 40);

    let mut y = f64::NAN;
    assert_eq!(unsafe { sohkan_model_forward(model, 0.5, 0.5, &mut y) }, SohkanStatus::Ok);
    assert!(y.is_finite());
    let mut c = f64::NAN;
    let st = unsafe { sohkan_model_predict_celsius(model, 25.0, 10, &mut c) };
    assert_eq!(st, SohkanStatus::Ok);
    assert!((20.0..60.0).contains(&c), "{c}");

    // size query, then the real call
    let mut need = 0usize;
    let st = unsafe { sohkan_soh(model, ds, ptr::null_mut(), 0, &mut need) };
    assert_eq!(st, SohkanStatus::BufferTooSmall);
    assert_eq!(need, 41);
    let mut buf = vec![0.0; need];
    let mut written = 0usize;
    let st = unsafe { sohkan_soh(model, ds, buf.as_mut_ptr(), buf.len(), &mut written) };
    assert_eq!(st, SohkanStatus::Ok, "{}", last_error());
    assert_eq!(written, 41);
    assert_eq!(buf[0], 100.0);
    assert!(buf[40] < 100.0);

    let mut text = ptr::null_mut();
    let mut r2 = f64::NAN;
    let st = unsafe { sohkan_best_formula(model, ds, &mut text, &mut r2) };
    assert_eq!(st, SohkanStatus::Ok, "{}", last_error());
    let formula = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_owned();
    assert!(formula.starts_with("A2(kbar) = "), "{formula}");
    assert!(r2 > 0.9);
    unsafe {
        sohkan_string_free(text);
        sohkan_model_free(model);
        sohkan_dataset_free(ds);
    }
}

#[test]
fn model_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    let ds = simulate(SMALL);
    let (model, _) = train(ds);
    assert_eq!(unsafe { sohkan_model_save(model, path.as_ptr()) }, SohkanStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { sohkan_model_load(path.as_ptr(), &mut back) }, SohkanStatus::Ok);
    let (mut a, mut b) = (0.0, 1.0);
    unsafe {
        sohkan_model_forward(model, 0.3, 0.7, &mut a);
        sohkan_model_forward(back, 0.3, 0.7, &mut b);
    }
    assert_eq!(a.to_bits(), b.to_bits());

    let csv = dir.path().join("d.csv");
    std::fs::write(&csv, "cycle,t_s,temp_c,current_a,voltage_v,ambient_c\n0,0,23,0,3.7,x\n").unwrap();
    let csv = CString::new(csv.to_str().unwrap()).unwrap();
    let mut bad = ptr::null_mut();
    let st = unsafe { sohkan_dataset_load_csv(csv.as_ptr(), &mut bad) };
    assert_eq!(st, SohkanStatus::Parse);
    assert!(bad.is_null());
    assert!(last_error().contains("row 2"), "{}", last_error());
    unsafe {
        sohkan_model_free(model);
        sohkan_model_free(back);
        sohkan_dataset_free(ds);
    }
}

#[test]
fn errors_map_to_codes() {
    let mut ds = ptr::null_mut();
    let st = unsafe { sohkan_dataset_load_csv(ptr::null(), &mut ds) };
    assert_eq!(st, SohkanStatus::NullArgument);
    assert!(last_error().contains("path"));

    let missing = CString::new("/nonexistent/x.csv").unwrap();
    assert_eq!(unsafe { sohkan_dataset_load_csv(missing.as_ptr(), &mut ds) }, SohkanStatus::Io);

    let bad_json = CString::new("{not json").unwrap();
    assert_eq!(unsafe { sohkan_dataset_simulate(bad_json.as_ptr(), &mut ds) }, SohkanStatus::Parse);

    let bad_cfg = CString::new(r#"{"thermal": {"tau": -1.0}}"#).unwrap();
    assert_eq!(
        unsafe { sohkan_dataset_simulate(bad_cfg.as_ptr(), &mut ds) },
        SohkanStatus::InvalidInput
    );

    let bytes = [0xffu8, 0xfe, 0];
    let st = unsafe { sohkan_dataset_load_csv(bytes.as_ptr().cast(), &mut ds) };
    assert_eq!(st, SohkanStatus::InvalidUtf8);

    let mut y = 0.0;
    assert_eq!(
        unsafe { sohkan_model_forward(ptr::null(), 0.0, 0.0, &mut y) },
        SohkanStatus::NullArgument
    );
    assert_eq!(unsafe { sohkan_dataset_n_cycles(ptr::null()) }, 0);
    unsafe {
        sohkan_dataset_free(ptr::null_mut());
        sohkan_model_free(ptr::null_mut());
        sohkan_string_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_per_thread() {
    let mut ds = ptr::null_mut();
    unsafe { sohkan_dataset_load_csv(ptr::null(), &mut ds) };
    std::thread::spawn(|| assert!(sohkan_last_error_message().is_null()))
        .join()
        .unwrap();
    assert!(!sohkan_last_error_message().is_null());
}
