use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use dualdiv_ffi::*;

fn reference() -> *mut DdModel {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { dd_model_new_gbm(1.0, 2.0, 1.0, 0.0, 0.1, 0.2, &mut m) },
        DdStatus::Ok
    );
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = dd_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn threshold_roundtrip() {
    let m = reference();
    unsafe {
        let mut theta = 0.0;
        assert_eq!(dd_model_theta(m, &mut theta), DdStatus::Ok);
        assert!((theta - 0.08).abs() < 1e-15);

        let mut t = ptr::null_mut();
        assert_eq!(dd_threshold_solve(m, 0.5, &mut t), DdStatus::Ok);
        let mut level = 0.0;
        assert_eq!(dd_threshold_level(t, &mut level), DdStatus::Ok);
        assert!((level - 1.736_115_769_521_355_3).abs() < 1e-10);
        let mut regime = DdRegime::AlwaysMax;
        assert_eq!(dd_threshold_regime(t, &mut regime), DdStatus::Ok);
        assert_eq!(regime, DdRegime::Threshold);
        let mut v = 0.0;
        assert_eq!(dd_threshold_value(t, level, &mut v), DdStatus::Ok);
        assert!((v - 4.227_821_500_961_741).abs() < 1e-9);

        let mut max_abs = f64::NAN;
        assert_eq!(
            dd_threshold_verify(t, m, 200, 1e-8, &mut max_abs),
            DdStatus::Ok
        );
        assert!(max_abs < 1e-12);

        let mut json = ptr::null_mut();
        assert_eq!(dd_threshold_to_json(t, &mut json), DdStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        assert!(text.contains("\"xhat\""));
        dd_string_free(json);
        dd_threshold_free(t);
        dd_model_free(m);
    }
}

#[test]
fn barrier_roundtrip() {
    let json = CString::new(
        r#"{"c": 1, "lambda": 2, "beta": 1, "discount": {"kind": "gbm", "r": 0, "m": 0.1, "delta": 0.2}}"#,
    )
    .unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(dd_model_from_json(json.as_ptr(), &mut m), DdStatus::Ok);
        let mut b = ptr::null_mut();
        assert_eq!(dd_barrier_solve(m, &mut b), DdStatus::Ok);
        let mut level = 0.0;
        assert_eq!(dd_barrier_level(b, &mut level), DdStatus::Ok);
        assert!((level - 3.913_836_764_685_92).abs() < 1e-10);
        let mut v = 0.0;
        assert_eq!(dd_barrier_value(b, level, &mut v), DdStatus::Ok);
        assert!((v - 12.5).abs() < 1e-9);
        let mut max_abs = 0.0;
        assert_eq!(
            dd_barrier_verify(b, m, 200, 1e-8, &mut max_abs),
            DdStatus::Ok
        );
        let mut s = ptr::null_mut();
        assert_eq!(dd_barrier_to_json(b, &mut s), DdStatus::Ok);
        assert!(CStr::from_ptr(s).to_str().unwrap().contains("\"barrier\""));
        dd_string_free(s);
        dd_barrier_free(b);
        dd_model_free(m);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut m = ptr::null_mut();
        // theta = 0.05 - 0.08 < 0
        assert_eq!(
            dd_model_new_gbm(1.0, 2.0, 1.0, 0.0, 0.05, 0.4, &mut m),
            DdStatus::Validation
        );
        assert!(m.is_null());
        assert!(last_error().starts_with("InsufficientDrift"));

        assert_eq!(
            dd_model_new_gbm(1.0, 2.0, 1.0, 0.0, 0.1, 0.2, ptr::null_mut()),
            DdStatus::NullPointer
        );
        assert!(last_error().starts_with("NullPointer"));
        let mut theta = 0.0;
        assert_eq!(
            dd_model_theta(ptr::null(), &mut theta),
            DdStatus::NullPointer
        );

        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(
            dd_model_from_json(bad.as_ptr().cast(), &mut m),
            DdStatus::InvalidUtf8
        );
        let junk = CString::new("{not json").unwrap();
        assert_eq!(
            dd_model_from_json(junk.as_ptr(), &mut m),
            DdStatus::Validation
        );
        assert!(last_error().starts_with("Json"));

        // lambda / beta <= c: no positive barrier
        assert_eq!(
            dd_model_new_gbm(1.0, 0.5, 1.0, 0.0, 0.1, 0.2, &mut m),
            DdStatus::Ok
        );
        let mut b = ptr::null_mut();
        assert_eq!(dd_barrier_solve(m, &mut b), DdStatus::Degenerate);
        assert!(last_error().starts_with("DegenerateBarrier"));
        assert!(b.is_null());

        // a successful call clears the message
        assert_eq!(dd_model_theta(m, &mut theta), DdStatus::Ok);
        assert!(dd_last_error_message().is_null());
        dd_model_free(m);

        // freeing NULL is a no-op
        dd_model_free(ptr::null_mut());
        dd_threshold_free(ptr::null_mut());
        dd_barrier_free(ptr::null_mut());
        dd_string_free(ptr::null_mut());
    }
}

#[test]
fn simulate_matches_closed_form() {
    let m = reference();
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(dd_threshold_solve(m, 0.5, &mut t), DdStatus::Ok);
        let mut level = 0.0;
        dd_threshold_level(t, &mut level);
        let mut exact = 0.0;
        dd_threshold_value(t, 1.0, &mut exact);
        let strategy = DdStrategy {
            kind: DdStrategyKind::Threshold,
            level,
            rate: 0.5,
        };
        let mut est = DdEstimate::default();
        assert_eq!(
            dd_simulate(
                m,
                strategy,
                1.0,
                20_000,
                7,
                DdEstimator::Collapsed,
                &mut est
            ),
            DdStatus::Ok
        );
        assert_eq!(est.n_paths, 20_000);
        assert!(
            (est.mean - exact).abs() <= 4.0 * est.std_err,
            "{} vs {exact}",
            est.mean
        );

        assert_eq!(
            dd_simulate(m, strategy, 1.0, 0, 7, DdEstimator::Collapsed, &mut est),
            DdStatus::Validation
        );
        assert!(last_error().starts_with("InvalidConfig"));
        dd_threshold_free(t);
        dd_model_free(m);
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include").join("dualdiv.h");
    let text = std::fs::read_to_string(&header).expect("header generated by build.rs");
    for name in [
        "dd_model_new_gbm",
        "dd_threshold_solve",
        "dd_barrier_verify",
        "dd_simulate",
        "dd_string_free",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
