use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use capfi_ffi::*;

fn last_error() -> String {
    let p = capfi_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_manifest() -> *mut CapfiManifest {
    let spec = CString::new(r#"{"n_samples":120,"seed":3,"dependency":{"bbox":0.7,"speed":0.3},"noise":0.05}"#).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { capfi_manifest_generate(spec.as_ptr(), &mut m) }, CapfiStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn generate_and_count_contexts() {
    let m = small_manifest();
    unsafe {
        assert_eq!(capfi_manifest_len(m), 120);
        let mut c = 0usize;
        let expr = CString::new("S_C ∪ S_NC").unwrap();
        assert_eq!(capfi_context_cardinality(m, expr.as_ptr(), &mut c), CapfiStatus::Ok);
        assert_eq!(c, 120);

        let bad = CString::new("S_Nope").unwrap();
        assert_eq!(capfi_context_cardinality(m, bad.as_ptr(), &mut c), CapfiStatus::InvalidArgument);
        assert!(last_error().contains("S_Nope"));
        capfi_manifest_free(m);
    }
}

#[test]
fn null_arguments_are_reported() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(capfi_manifest_load(ptr::null(), &mut m), CapfiStatus::NullArgument);
        assert!(last_error().contains("path"));
        assert_eq!(capfi_manifest_len(ptr::null()), 0);
        capfi_manifest_free(ptr::null_mut());
        capfi_model_free(ptr::null_mut());
        capfi_string_free(ptr::null_mut());
    }
}

#[test]
fn missing_file_is_io() {
    let p = CString::new("/nonexistent/manifest.json").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { capfi_manifest_load(p.as_ptr(), &mut m) }, CapfiStatus::Io);
    assert!(m.is_null());
}

#[test]
fn bad_spec_is_invalid_argument() {
    let spec = CString::new(r#"{"n_samples":10,"seed":1}"#).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { capfi_manifest_generate(spec.as_ptr(), &mut m) }, CapfiStatus::InvalidArgument);
    assert!(last_error().contains("infeasible"));
}

#[test]
fn train_predict_and_analyse() {
    let m = small_manifest();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(capfi_model_train(m, ptr::null(), 50, -1.0, 0, &mut model), CapfiStatus::Ok);
        let dim = capfi_model_dim(model);
        assert!(dim > 0);

        let rows = vec![0.0; 2 * dim];
        let mut out = [f64::NAN; 2];
        assert_eq!(capfi_model_predict(model, rows.as_ptr(), 2, dim, out.as_mut_ptr()), CapfiStatus::Ok);
        assert!(out.iter().all(|s| (0.0..=1.0).contains(s)));
        assert_eq!(out[0], out[1]);
        assert_eq!(
            capfi_model_predict(model, rows.as_ptr(), 1, dim - 1, out.as_mut_ptr()),
            CapfiStatus::InvalidArgument
        );

        let ctx = CString::new("S_C ∪ S_NC, S_FW").unwrap();
        let mut json = ptr::null_mut();
        assert_eq!(capfi_importance_run(m, model, ctx.as_ptr(), 7, 3, &mut json), CapfiStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        capfi_string_free(json);
        let report = capfi::ImportanceReport::from_json(&text).unwrap();
        assert_eq!(report.contexts.len(), 2);
        assert_eq!(report.header.seed, 7);
        assert!(!report.records.is_empty());

        capfi_model_free(model);
        capfi_manifest_free(m);
    }
}

#[test]
fn metrics_through_the_abi() {
    let scores = [0.9, 0.2, 0.6, 0.4];
    let labels = [1u8, 0, 0, 1];
    let mut v = f64::NAN;
    unsafe {
        assert_eq!(capfi_accuracy(scores.as_ptr(), labels.as_ptr(), 4, &mut v), CapfiStatus::Ok);
        assert_eq!(v, 0.5);
        assert_eq!(capfi_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut v), CapfiStatus::Ok);
        assert_eq!(v, 0.75);
        assert_eq!(capfi_f1(scores.as_ptr(), labels.as_ptr(), 4, &mut v), CapfiStatus::Ok);
        assert_eq!(v, 0.5);
        let one_class = [1u8; 4];
        assert_eq!(capfi_auc(scores.as_ptr(), one_class.as_ptr(), 4, &mut v), CapfiStatus::Undefined);
    }
}

#[test]
fn proximity_rate() {
    let mut d = vec![30.0; 16];
    d[15] = 24.0;
    let mut v = 0.0;
    unsafe {
        assert_eq!(capfi_proximity_change_rate(d.as_ptr(), d.len(), 15, &mut v), CapfiStatus::Ok);
        assert!((v - 0.4).abs() < 1e-15);
        assert_eq!(capfi_proximity_change_rate(d.as_ptr(), d.len(), 0, &mut v), CapfiStatus::InvalidArgument);
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(capfi_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include").join("capfi.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["capfi_manifest_load", "capfi_importance_run", "capfi_last_error", "CAPFI_STATUS_UNDEFINED"] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"capfi.h\"\nint main(void) { CapfiManifest *m = 0; return capfi_manifest_load(\"x\", &m) == CAPFI_STATUS_OK; }\n",
    )
    .unwrap();
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .status()
    else {
        eprintln!("no C compiler on PATH; header syntax not checked");
        return;
    };
    assert!(status.success());
}
