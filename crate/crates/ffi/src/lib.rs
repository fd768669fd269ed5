//! C ABI for the capfi toolkit.
//!
//! Every fallible call returns a [`CapfiStatus`]; on failure the message is
//! kept per thread and read back with [`capfi_last_error`]. Handles are
//! opaque and owned by the caller until passed to their `_free` function.
//! Strings returned by the library are freed with [`capfi_string_free`].
//! Panics never cross the boundary; they surface as `CAPFI_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use capfi::engine::{run_full_analysis, AnalysisConfig};
use capfi::metrics::{accuracy_raw, auc_raw, f1_raw, Metric, MetricError};
use capfi::oracle::train_builtin;
use capfi::{build_subsets, generate, load_manifest, BuiltinModel, FeatureLayout, GeneratorSpec, Manifest, TrainConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapfiStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Dataset = 4,
    Model = 5,
    Engine = 6,
    /// The metric is undefined on the given batch (AUC with one class).
    Undefined = 7,
    Panic = 8,
}

/// A loaded or generated manifest.
pub struct CapfiManifest {
    inner: Manifest,
}

/// A trained builtin surrogate.
pub struct CapfiModel {
    inner: BuiltinModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: CapfiStatus, msg: impl Into<String>) -> CapfiStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> CapfiStatus) -> CapfiStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(CapfiStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, CapfiStatus> {
    if p.is_null() {
        return Err(fail(CapfiStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CapfiStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], CapfiStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(CapfiStatus::NullArgument, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn capfi_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Static, NUL-terminated version string.
#[no_mangle]
pub extern "C" fn capfi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn capfi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a manifest (JSON, optional sidecar next to it).
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn capfi_manifest_load(path: *const c_char, out: *mut *mut CapfiManifest) -> CapfiStatus {
    guard(|| {
        if out.is_null() {
            return fail(CapfiStatus::NullArgument, "out is null");
        }
        let path = tri!(str_arg(path, "path"));
        match load_manifest(path) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(CapfiManifest { inner: m }));
                CapfiStatus::Ok
            }
            Err(capfi::DatasetError::Io { path, source }) => {
                fail(CapfiStatus::Io, format!("cannot read {}: {source}", path.display()))
            }
            Err(e) => fail(CapfiStatus::Dataset, e.to_string()),
        }
    })
}

/// Generate a synthetic manifest from a generator spec given as JSON text.
///
/// # Safety
/// `spec_json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn capfi_manifest_generate(spec_json: *const c_char, out: *mut *mut CapfiManifest) -> CapfiStatus {
    guard(|| {
        if out.is_null() {
            return fail(CapfiStatus::NullArgument, "out is null");
        }
        let text = tri!(str_arg(spec_json, "spec_json"));
        let spec = match GeneratorSpec::from_json(text) {
            Ok(s) => s,
            Err(e) => return fail(CapfiStatus::InvalidArgument, e.to_string()),
        };
        match generate(&spec) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(CapfiManifest { inner: m }));
                CapfiStatus::Ok
            }
            Err(e) => fail(CapfiStatus::Dataset, e.to_string()),
        }
    })
}

/// Number of samples; 0 for a null handle.
///
/// # Safety
/// `m` is null or a live manifest handle.
#[no_mangle]
pub unsafe extern "C" fn capfi_manifest_len(m: *const CapfiManifest) -> usize {
    m.as_ref().map_or(0, |m| m.inner.len())
}

/// # Safety
/// `m` is null or a manifest handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn capfi_manifest_free(m: *mut CapfiManifest) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Cardinality of a context notation or set expression.
///
/// # Safety
/// `m` is a live handle, `expr` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn capfi_context_cardinality(
    m: *const CapfiManifest,
    expr: *const c_char,
    out: *mut usize,
) -> CapfiStatus {
    guard(|| {
        let Some(m) = m.as_ref() else {
            return fail(CapfiStatus::NullArgument, "manifest is null");
        };
        if out.is_null() {
            return fail(CapfiStatus::NullArgument, "out is null");
        }
        let expr = tri!(str_arg(expr, "expr"));
        match build_subsets(&m.inner).evaluate(expr) {
            Ok(set) => {
                *out = set.cardinality();
                CapfiStatus::Ok
            }
            Err(e) => fail(CapfiStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Train the builtin surrogate on every modality. `context` may be null to
/// use all samples. `epochs == 0` and `l2 < 0` select the defaults.
///
/// # Safety
/// `m` is a live handle, `context` null or NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn capfi_model_train(
    m: *const CapfiManifest,
    context: *const c_char,
    epochs: usize,
    l2: f64,
    seed: u64,
    out: *mut *mut CapfiModel,
) -> CapfiStatus {
    guard(|| {
        let Some(m) = m.as_ref() else {
            return fail(CapfiStatus::NullArgument, "manifest is null");
        };
        if out.is_null() {
            return fail(CapfiStatus::NullArgument, "out is null");
        }
        let indices = if context.is_null() {
            (0..m.inner.len()).collect()
        } else {
            let expr = tri!(str_arg(context, "context"));
            match build_subsets(&m.inner).evaluate(expr) {
                Ok(s) => s.members,
                Err(e) => return fail(CapfiStatus::InvalidArgument, e.to_string()),
            }
        };
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            epochs: if epochs == 0 { d.epochs } else { epochs },
            l2: if l2 < 0.0 { d.l2 } else { l2 },
            seed,
            ..d
        };
        let layout = FeatureLayout::all(*m.inner.dims());
        match train_builtin(&m.inner, &indices, &layout, &cfg, "surrogate") {
            Ok(model) => {
                *out = Box::into_raw(Box::new(CapfiModel { inner: model }));
                CapfiStatus::Ok
            }
            Err(e) => fail(CapfiStatus::Model, e.to_string()),
        }
    })
}

/// Load a weight dump written by `capfi train`.
///
/// # Safety
/// `path` is NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn capfi_model_load(path: *const c_char, out: *mut *mut CapfiModel) -> CapfiStatus {
    guard(|| {
        if out.is_null() {
            return fail(CapfiStatus::NullArgument, "out is null");
        }
        let path = tri!(str_arg(path, "path"));
        match BuiltinModel::load(path) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(CapfiModel { inner: model }));
                CapfiStatus::Ok
            }
            Err(e) => fail(CapfiStatus::Model, e.to_string()),
        }
    })
}

/// Input width of the model; 0 for a null handle.
///
/// # Safety
/// `model` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn capfi_model_dim(model: *const CapfiModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.layout().dim())
}

/// Score `n_rows` row-major rows of width `dim` into `out`.
///
/// # Safety
/// `rows` holds `n_rows * dim` doubles and `out` room for `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn capfi_model_predict(
    model: *const CapfiModel,
    rows: *const f64,
    n_rows: usize,
    dim: usize,
    out: *mut f64,
) -> CapfiStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            return fail(CapfiStatus::NullArgument, "model is null");
        };
        let want = model.inner.layout().dim();
        if dim != want {
            return fail(CapfiStatus::InvalidArgument, format!("rows have width {dim}, model expects {want}"));
        }
        let Some(total) = n_rows.checked_mul(dim) else {
            return fail(CapfiStatus::InvalidArgument, "n_rows * dim overflows");
        };
        let rows = tri!(slice_arg(rows, total, "rows"));
        if n_rows > 0 && out.is_null() {
            return fail(CapfiStatus::NullArgument, "out is null");
        }
        for (k, row) in rows.chunks_exact(dim.max(1)).take(n_rows).enumerate() {
            *out.add(k) = model.inner.predict_row(row);
        }
        CapfiStatus::Ok
    })
}

/// # Safety
/// `model` is null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn capfi_model_free(model: *mut CapfiModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Run the importance analysis for one model over every modality and all
/// three metrics, writing the structured report as a newly allocated JSON
/// string. `contexts` is a comma list of notations or expressions, or null
/// for the 17 base sets. `repetitions == 0` uses each context's cardinality.
///
/// # Safety
/// Handles are live, `contexts` null or NUL-terminated, `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn capfi_importance_run(
    m: *const CapfiManifest,
    model: *const CapfiModel,
    contexts: *const c_char,
    seed: u64,
    repetitions: usize,
    out_json: *mut *mut c_char,
) -> CapfiStatus {
    guard(|| {
        let (Some(m), Some(model)) = (m.as_ref(), model.as_ref()) else {
            return fail(CapfiStatus::NullArgument, "manifest or model is null");
        };
        if out_json.is_null() {
            return fail(CapfiStatus::NullArgument, "out_json is null");
        }
        let index = build_subsets(&m.inner);
        let sets = if contexts.is_null() {
            index.base_sets().cloned().collect()
        } else {
            let spec = tri!(str_arg(contexts, "contexts"));
            let mut sets = Vec::new();
            for e in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                match index.evaluate(e) {
                    Ok(s) => sets.push(s),
                    Err(err) => return fail(CapfiStatus::InvalidArgument, err.to_string()),
                }
            }
            sets
        };
        let layout = model.inner.layout().clone();
        let cfg = AnalysisConfig {
            layout: layout.clone(),
            metrics: Metric::ALL.to_vec(),
            seed,
            repetitions: (repetitions > 0).then_some(repetitions),
        };
        match run_full_analysis(&m.inner, &[&model.inner], &sets, &layout.modalities, &cfg) {
            Ok(report) => match CString::new(report.to_json()) {
                Ok(s) => {
                    *out_json = s.into_raw();
                    CapfiStatus::Ok
                }
                Err(e) => fail(CapfiStatus::Engine, e.to_string()),
            },
            Err(e) => fail(CapfiStatus::Engine, e.to_string()),
        }
    })
}

type RawMetric = fn(&[f64], &[bool]) -> Result<f64, MetricError>;

unsafe fn metric_call(f: RawMetric, scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> CapfiStatus {
    guard(|| {
        if out.is_null() {
            return fail(CapfiStatus::NullArgument, "out is null");
        }
        let scores = tri!(slice_arg(scores, n, "scores"));
        let labels: Vec<bool> = tri!(slice_arg(labels, n, "labels")).iter().map(|&l| l != 0).collect();
        match f(scores, &labels) {
            Ok(v) => {
                *out = v;
                CapfiStatus::Ok
            }
            Err(e @ MetricError::SingleClass { .. }) => fail(CapfiStatus::Undefined, e.to_string()),
            Err(e) => fail(CapfiStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Accuracy at the 0.5 threshold. Labels are 0 or nonzero.
///
/// # Safety
/// `scores` and `labels` hold `n` elements; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn capfi_accuracy(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> CapfiStatus {
    metric_call(accuracy_raw, scores, labels, n, out)
}

/// ROC AUC with mid-rank ties. `CAPFI_STATUS_UNDEFINED` for one class.
///
/// # Safety
/// As [`capfi_accuracy`].
#[no_mangle]
pub unsafe extern "C" fn capfi_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> CapfiStatus {
    metric_call(auc_raw, scores, labels, n, out)
}

/// F1 at the 0.5 threshold; 1 when there is nothing to find.
///
/// # Safety
/// As [`capfi_accuracy`].
#[no_mangle]
pub unsafe extern "C" fn capfi_f1(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> CapfiStatus {
    metric_call(f1_raw, scores, labels, n, out)
}

/// `(d[0] - d[dt]) / dt` over a distance series of length `n`.
///
/// # Safety
/// `distances` holds `n` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn capfi_proximity_change_rate(
    distances: *const f64,
    n: usize,
    dt: usize,
    out: *mut f64,
) -> CapfiStatus {
    guard(|| {
        if out.is_null() {
            return fail(CapfiStatus::NullArgument, "out is null");
        }
        let d = tri!(slice_arg(distances, n, "distances"));
        match capfi::proximity_change_rate(d, dt) {
            Ok(f) => {
                *out = f.delta_p;
                CapfiStatus::Ok
            }
            Err(e) => fail(CapfiStatus::InvalidArgument, e.to_string()),
        }
    })
}
