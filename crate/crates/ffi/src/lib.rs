//! C ABI over the droidflow library.
//!
//! Every fallible function returns a [`DfStatus`]; on failure the message is
//! kept per thread and can be copied out with [`df_last_error`]. Objects are
//! handed out as opaque pointers and must be released with their `_free`
//! function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use droidflow::ir::{load_app, Label};
use droidflow::metrics::{compute_metrics, roc_auc};
use droidflow::nn::Model;
use droidflow::pipeline::{extract_features, AppFeatures, PipelineConfig, Tables};
use droidflow::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    ModelMismatch = 6,
    Metrics = 7,
    Diverged = 8,
    Panic = 9,
}

/// A loaded classifier.
pub struct DfModel(Model);

/// Features extracted from one app.
pub struct DfFeatures(AppFeatures);

/// Metric report for a labeled score vector.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DfMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub fnr: f64,
    /// NaN when only one class is present.
    pub roc_auc: f64,
    pub prc_auc: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> DfStatus {
    match e {
        Error::Io { .. } => DfStatus::Io,
        Error::Config(_) => DfStatus::Config,
        Error::ModelMismatch(_) => DfStatus::ModelMismatch,
        Error::SingleClass | Error::LengthMismatch(..) => DfStatus::Metrics,
        Error::DivergedLoss { .. } => DfStatus::Diverged,
        _ => DfStatus::Parse,
    }
}

fn guard(f: impl FnOnce() -> Result<(), DfStatus>) -> DfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DfStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            DfStatus::Panic
        }
    }
}

fn fail(e: Error) -> DfStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null() -> DfStatus {
    set_error("null pointer argument");
    DfStatus::NullPointer
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, DfStatus> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map(PathBuf::from).map_err(|_| {
        set_error("path is not valid UTF-8");
        DfStatus::InvalidUtf8
    })
}

unsafe fn slices<'a>(
    scores: *const f64,
    labels: *const u8,
    len: usize,
) -> Result<(&'a [f64], Vec<Label>), DfStatus> {
    if len > 0 && (scores.is_null() || labels.is_null()) {
        return Err(null());
    }
    if len == 0 {
        return Ok((&[], Vec::new()));
    }
    let s = std::slice::from_raw_parts(scores, len);
    let l = std::slice::from_raw_parts(labels, len)
        .iter()
        .map(|&b| if b == 0 { Label::Benign } else { Label::Malicious })
        .collect();
    Ok((s, l))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn df_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn df_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a model file written by `droidflow train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_model_load(path: *const c_char, out: *mut *mut DfModel) -> DfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let p = path_arg(path)?;
        let m = Model::load(&p).map_err(fail)?;
        *out = Box::into_raw(Box::new(DfModel(m)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a pointer from [`df_model_load`], freed once.
#[no_mangle]
pub unsafe extern "C" fn df_model_free(model: *mut DfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Extracts features from an app directory or app JSON file using the
/// bundled analysis tables and default settings.
///
/// # Safety
/// `app_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_extract(app_path: *const c_char, out: *mut *mut DfFeatures) -> DfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let p = path_arg(app_path)?;
        let app = load_app(&p).map_err(fail)?;
        let (f, _) = extract_features(&app, &Tables::default(), &PipelineConfig::default()).map_err(fail)?;
        *out = Box::into_raw(Box::new(DfFeatures(f)));
        Ok(())
    })
}

/// Number of call traces found in the app.
///
/// # Safety
/// `features` must be null or a live pointer from [`df_extract`].
#[no_mangle]
pub unsafe extern "C" fn df_features_trace_count(features: *const DfFeatures) -> usize {
    features.as_ref().map_or(0, |f| f.0.traces.len())
}

/// Number of nodes in the app's flow graph.
///
/// # Safety
/// `features` must be null or a live pointer from [`df_extract`].
#[no_mangle]
pub unsafe extern "C" fn df_features_node_count(features: *const DfFeatures) -> usize {
    features.as_ref().map_or(0, |f| f.0.graph.nodes.len())
}

/// # Safety
/// `features` must be null or a pointer from [`df_extract`], freed once.
#[no_mangle]
pub unsafe extern "C" fn df_features_free(features: *mut DfFeatures) {
    if !features.is_null() {
        drop(Box::from_raw(features));
    }
}

/// Malicious-class probability of one app.
///
/// # Safety
/// `model` and `features` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_predict(
    model: *const DfModel,
    features: *const DfFeatures,
    out_malicious: *mut f64,
) -> DfStatus {
    guard(|| {
        let (Some(m), Some(f)) = (model.as_ref(), features.as_ref()) else {
            return Err(null());
        };
        if out_malicious.is_null() {
            return Err(null());
        }
        let cfg = PipelineConfig::default();
        let sample = f.0.sample(&m.0.config, cfg.sample_bound, cfg.pad_short_traces).map_err(fail)?;
        *out_malicious = m.0.predict(&sample).malicious;
        Ok(())
    })
}

/// Threshold metrics and curve areas. Labels are 0 (benign) or nonzero
/// (malicious).
///
/// # Safety
/// `scores` and `labels` must point to `len` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_metrics(
    scores: *const f64,
    labels: *const u8,
    len: usize,
    threshold: f64,
    out: *mut DfMetrics,
) -> DfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let (s, l) = slices(scores, labels, len)?;
        let (c, r) = compute_metrics(s, &l, threshold).map_err(fail)?;
        let degenerate_auc = r.degenerate.iter().any(|d| d == "roc_auc");
        *out = DfMetrics {
            accuracy: r.accuracy,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            fpr: r.fpr,
            fnr: r.fnr,
            roc_auc: if degenerate_auc { f64::NAN } else { r.roc_auc },
            prc_auc: if degenerate_auc { f64::NAN } else { r.prc_auc },
            tp: c.tp as u64,
            fp: c.fp as u64,
            tn: c.tn as u64,
            fn_: c.fn_ as u64,
        };
        Ok(())
    })
}

/// Area under the ROC curve.
///
/// # Safety
/// `scores` and `labels` must point to `len` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn df_roc_auc(scores: *const f64, labels: *const u8, len: usize, out: *mut f64) -> DfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let (s, l) = slices(scores, labels, len)?;
        *out = roc_auc(s, &l).map_err(fail)?;
        Ok(())
    })
}
