//! C ABI over `sohkan`.
//!
//! Objects are opaque heap handles created by `*_load` / `*_simulate` /
//! `sohkan_train` and released with the matching `*_free`. Every fallible
//! call returns a [`SohkanStatus`]; on failure a message is available from
//! [`sohkan_last_error_message`] on the same thread. Output pointers are
//! written only on success. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use sohkan::commands::{self, RunConfig};
use sohkan::data::CycleDataset;
use sohkan::kan::KanModel;
use sohkan::soh::{self, OffsetHandling};
use sohkan::thermal::simulate_life;
use sohkan::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SohkanStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    Io = 3,
    /// Malformed CSV or JSON input.
    Parse = 4,
    /// Inputs violate a precondition (bad config, too few samples, ...).
    InvalidInput = 5,
    /// Divergence, failed fits, vanishing denominators.
    Numerical = 6,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 7,
    /// Internal panic; the handle arguments should be considered unusable.
    Panic = 8,
}

/// Trained two-input KAN.
pub struct SohkanModel {
    inner: KanModel,
}

/// Per-cycle telemetry.
pub struct SohkanDataset {
    inner: CycleDataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SohkanStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io(_) => SohkanStatus::Io,
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => SohkanStatus::Parse,
            Error::NonFiniteTemperature(_)
            | Error::Diverged { .. }
            | Error::FitFailed { .. }
            | Error::A2CrossesZero
            | Error::VanishingBase(_) => SohkanStatus::Numerical,
            _ => SohkanStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SohkanStatus::NullArgument, format!("`{what}` is null"))
}

/// Runs `f`, records any failure and converts it to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SohkanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SohkanStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            SohkanStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SohkanStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn config_arg(p: *const c_char) -> Result<RunConfig, Failure> {
    if p.is_null() {
        return Ok(RunConfig::default());
    }
    let text = str_arg(p, "config_json")?;
    serde_json::from_str(text).map_err(|e| Failure(SohkanStatus::Parse, format!("config: {e}")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sohkan_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn sohkan_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sohkan_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Reads a telemetry CSV (`cycle,t_s,temp_c,current_a,voltage_v,ambient_c`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sohkan_dataset_load_csv(
    path: *const c_char,
    out: *mut *mut SohkanDataset,
) -> SohkanStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let out = out_arg(out, "out")?;
        let inner = CycleDataset::load_csv(path)?;
        *out = Box::into_raw(Box::new(SohkanDataset { inner }));
        Ok(())
    })
}

/// Simulates a synthetic life. `config_json` is a run configuration in the
/// CLI's JSON format, or null for the defaults.
///
/// # Safety
/// `config_json` must be null or NUL-terminated; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sohkan_dataset_simulate(
    config_json: *const c_char,
    out: *mut *mut SohkanDataset,
) -> SohkanStatus {
    guard(|| {
        let cfg = config_arg(config_json)?;
        let out = out_arg(out, "out")?;
        let (inner, _) = simulate_life(&cfg.thermal, &cfg.profile, &cfg.schedule)?;
        *out = Box::into_raw(Box::new(SohkanDataset { inner }));
        Ok(())
    })
}

/// Number of cycles in the dataset; 0 for null.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sohkan_dataset_n_cycles(dataset: *const SohkanDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.cycles.len())
}

/// # Safety
/// `dataset` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn sohkan_dataset_free(dataset: *mut SohkanDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Trains a model on `dataset`. `config_json` may be null for defaults.
/// `test_rmse_c`, when non-null, receives the test-split RMSE in °C.
///
/// # Safety
/// Pointers must be valid or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn sohkan_train(
    dataset: *const SohkanDataset,
    config_json: *const c_char,
    out: *mut *mut SohkanModel,
    test_rmse_c: *mut f64,
) -> SohkanStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        let cfg = config_arg(config_json)?;
        let out = out_arg(out, "out")?;
        let (_, _, inner, report) = commands::train_on(&ds.inner, &cfg)?;
        if let (Some(dst), Some(v)) = (test_rmse_c.as_mut(), report.test_rmse_c) {
            *dst = v;
        }
        *out = Box::into_raw(Box::new(SohkanModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sohkan_model_load(
    path: *const c_char,
    out: *mut *mut SohkanModel,
) -> SohkanStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let out = out_arg(out, "out")?;
        let inner = KanModel::load(path)?;
        *out = Box::into_raw(Box::new(SohkanModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sohkan_model_save(
    model: *const SohkanModel,
    path: *const c_char,
) -> SohkanStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        m.inner.save(path)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn sohkan_model_free(model: *mut SohkanModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Normalized prediction `A1(t_bar) + A2(k_bar)` of T̄ one horizon ahead.
///
/// # Safety
/// `model` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sohkan_model_forward(
    model: *const SohkanModel,
    t_bar: f64,
    k_bar: f64,
    out: *mut f64,
) -> SohkanStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let out = out_arg(out, "out")?;
        *out = m.inner.forward(t_bar, k_bar);
        Ok(())
    })
}

/// Temperature one horizon ahead, in °C, from the current temperature and
/// cycle index.
///
/// # Safety
/// `model` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sohkan_model_predict_celsius(
    model: *const SohkanModel,
    temp_c: f64,
    cycle: usize,
    out: *mut f64,
) -> SohkanStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        let out = out_arg(out, "out")?;
        let k = sohkan::data::k_bar(cycle, m.meta.last_cycle);
        *out = m.norm.denormalize(m.forward(m.norm.normalize(temp_c), k));
        Ok(())
    })
}

/// Index E of the last training cycle; SoH curves have E + 1 points.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sohkan_model_last_cycle(model: *const SohkanModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.meta.last_cycle)
}

/// SoH (%) at cycles 0..=E from the learned cycle activation.
///
/// With the training `dataset` the offset is anchored; with null it is
/// used raw. Writes E + 1 values into `buf` and the count into `written`.
/// If `len` is smaller, nothing is copied, `written` receives the required
/// length and `SOHKAN_STATUS_BUFFER_TOO_SMALL` is returned.
///
/// # Safety
/// `buf` must hold `len` doubles (or be null with `len` 0); other pointers
/// valid or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn sohkan_soh(
    model: *const SohkanModel,
    dataset: *const SohkanDataset,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> SohkanStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        let written = out_arg(written, "written")?;
        let last = m.meta.last_cycle;
        if len < last + 1 || buf.is_null() {
            *written = last + 1;
            return Err(Failure(
                SohkanStatus::BufferTooSmall,
                format!("need {} values, buffer holds {len}", last + 1),
            ));
        }
        let handling = match dataset.as_ref() {
            Some(ds) => {
                let (pairs, ambient) = commands::anchor_inputs(m, &ds.inner)?;
                soh::estimate_anchor(m, &pairs.train, ambient)?.handling()
            }
            None => OffsetHandling::Raw,
        };
        let curve = soh::soh_from_a2(&soh::a2_cycle_curve(m, last)?, handling, last)?;
        let dst = std::slice::from_raw_parts_mut(buf, len);
        for (d, p) in dst.iter_mut().zip(&curve.points) {
            *d = p.soh;
        }
        *written = curve.points.len();
        Ok(())
    })
}

/// Best-ranked closed form of the cycle activation as text, e.g.
/// `A2(kbar) = 0.42 + 0.18*kbar, kbar in [0, 1]`. `dataset` enables the
/// anchored offset as in [`sohkan_soh`]. `r2`, when non-null, receives the
/// fit's R². Free the string with [`sohkan_string_free`].
///
/// # Safety
/// Pointers must be valid or null where allowed.
#[no_mangle]
pub unsafe extern "C" fn sohkan_best_formula(
    model: *const SohkanModel,
    dataset: *const SohkanDataset,
    out: *mut *mut c_char,
    r2: *mut f64,
) -> SohkanStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        let out = out_arg(out, "out")?;
        let anchor = match dataset.as_ref() {
            Some(ds) => Some(commands::anchor_inputs(m, &ds.inner)?),
            None => None,
        };
        let analysis = commands::analyse(m, anchor.as_ref().map(|(p, a)| (p, *a)))?;
        let best = analysis.dictionary.best().ok_or_else(|| {
            Failure(SohkanStatus::Numerical, "no dictionary form could be fit".into())
        })?;
        if let Some(dst) = r2.as_mut() {
            *dst = best.r2;
        }
        *out = CString::new(best.formula()).unwrap_or_default().into_raw();
        Ok(())
    })
}
