//! C ABI for the `kkr` library.
//!
//! Datasets and fitted models are exposed as opaque handles created and
//! destroyed through this interface; every fallible call returns a
//! [`KkrStatus`] code and leaves a descriptive message retrievable with
//! [`kkr_last_error_message`] (thread-local). Configuration crosses the
//! boundary as JSON documents with the same schema the CLI consumes.
//!
//! The generated header lives at `include/kkr.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use kkr::config::{RunConfig, INTEGRATOR_SUBSTEPS};
use kkr::dynamics::{sample_dataset, Dataset};
use kkr::model::KKRModel;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KkrStatus {
    KkrOk = 0,
    KkrInvalidArgument = 1,
    KkrParseError = 2,
    KkrNumericError = 3,
    KkrIoError = 4,
    KkrNullPointer = 5,
    KkrPanic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_of(err: &kkr::Error) -> KkrStatus {
    match err {
        kkr::Error::InvalidConfig(_) => KkrStatus::KkrInvalidArgument,
        kkr::Error::Parse { .. } | kkr::Error::Schema(_) | kkr::Error::Json(_) => {
            KkrStatus::KkrParseError
        }
        kkr::Error::NonFinite(_)
        | kkr::Error::DimensionMismatch(_)
        | kkr::Error::SingularGram(_)
        | kkr::Error::Overflow(_)
        | kkr::Error::NotConjugateClosed => KkrStatus::KkrNumericError,
        kkr::Error::Io(_) => KkrStatus::KkrIoError,
    }
}

/// Last error message of the calling thread; valid until the next failing
/// call on the same thread. Never null.
#[no_mangle]
pub extern "C" fn kkr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, KkrStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(KkrStatus::KkrNullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        KkrStatus::KkrInvalidArgument
    })
}

fn guard<F: FnOnce() -> KkrStatus>(f: F) -> KkrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            KkrStatus::KkrPanic
        }
    }
}

/// Opaque dataset handle.
pub struct KkrDataset {
    inner: Dataset,
}

/// Opaque fitted-model handle.
pub struct KkrModel {
    inner: KKRModel,
}

/// Loads a dataset from a CSV file (`traj_id,t,x0,...,y` schema).
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn kkr_dataset_load_csv(
    path: *const c_char,
    out: *mut *mut KkrDataset,
) -> KkrStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return KkrStatus::KkrNullPointer;
        }
        let path = match cstr_arg(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match kkr::dynamics::load_csv(Path::new(path)) {
            Ok(dataset) => {
                *out = Box::into_raw(Box::new(KkrDataset { inner: dataset }));
                KkrStatus::KkrOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Simulates a dataset from a JSON configuration holding `system` and
/// `data` sections (the CLI schema).
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string; `out` must be a
/// valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn kkr_dataset_simulate_json(
    config_json: *const c_char,
    out: *mut *mut KkrDataset,
) -> KkrStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return KkrStatus::KkrNullPointer;
        }
        let text = match cstr_arg(config_json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let result = (|| -> kkr::Result<Dataset> {
            let config = RunConfig::from_json(text)?;
            let system_section = config.system_section()?;
            let data = config.data_section()?;
            sample_dataset(
                &system_section.system()?,
                &system_section.observable()?,
                &system_section.init_box(),
                data.n,
                data.dt,
                data.h,
                INTEGRATOR_SUBSTEPS,
                data.seed,
            )
        })();
        match result {
            Ok(dataset) => {
                *out = Box::into_raw(Box::new(KkrDataset { inner: dataset }));
                KkrStatus::KkrOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Writes a dataset as CSV.
///
/// # Safety
/// `dataset` must be a live handle from this library; `path` a valid
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kkr_dataset_save_csv(
    dataset: *const KkrDataset,
    path: *const c_char,
) -> KkrStatus {
    guard(|| {
        let Some(dataset) = dataset.as_ref() else {
            set_error("null dataset handle");
            return KkrStatus::KkrNullPointer;
        };
        let path = match cstr_arg(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match kkr::dynamics::save_csv(&dataset.inner, Path::new(path)) {
            Ok(()) => KkrStatus::KkrOk,
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Shape of a dataset: trajectories, steps, state dimension, sample step.
///
/// # Safety
/// `dataset` must be a live handle; the out pointers may be null when the
/// corresponding value is not needed.
#[no_mangle]
pub unsafe extern "C" fn kkr_dataset_info(
    dataset: *const KkrDataset,
    n: *mut usize,
    horizon: *mut usize,
    state_dim: *mut usize,
    dt: *mut f64,
) -> KkrStatus {
    guard(|| {
        let Some(dataset) = dataset.as_ref() else {
            set_error("null dataset handle");
            return KkrStatus::KkrNullPointer;
        };
        if !n.is_null() {
            *n = dataset.inner.len();
        }
        if !horizon.is_null() {
            *horizon = dataset.inner.horizon();
        }
        if !state_dim.is_null() {
            *state_dim = dataset.inner.state_dim();
        }
        if !dt.is_null() {
            *dt = dataset.inner.dt();
        }
        KkrStatus::KkrOk
    })
}

/// Frees a dataset handle (null is a no-op).
///
/// # Safety
/// `dataset` must be null or a handle obtained from this library that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn kkr_dataset_free(dataset: *mut KkrDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Fits a KKR model on a dataset. The JSON configuration must hold the
/// `kernel`, `spectrum` and `kkr` sections of the CLI schema.
///
/// # Safety
/// `dataset` must be a live handle, `config_json` a valid NUL-terminated
/// string and `out` a valid pointer to receive the model handle.
#[no_mangle]
pub unsafe extern "C" fn kkr_model_fit_json(
    dataset: *const KkrDataset,
    config_json: *const c_char,
    out: *mut *mut KkrModel,
) -> KkrStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return KkrStatus::KkrNullPointer;
        }
        let Some(dataset) = dataset.as_ref() else {
            set_error("null dataset handle");
            return KkrStatus::KkrNullPointer;
        };
        let text = match cstr_arg(config_json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let result = (|| -> kkr::Result<KKRModel> {
            let config = RunConfig::from_json(text)?;
            let kernel = config.kernel_section()?;
            let spectrum_section = config.spectrum_section()?;
            let kkr_section = config.kkr_section()?;
            let spectrum = spectrum_section.sampler.sample(
                spectrum_section.d,
                dataset.inner.dt(),
                spectrum_section.seed,
            );
            kkr::model::fit(
                &dataset.inner,
                &spectrum,
                &kernel.base()?,
                kernel.normalized,
                &kkr_section.config()?,
            )
        })();
        match result {
            Ok(model) => {
                *out = Box::into_raw(Box::new(KkrModel { inner: model }));
                KkrStatus::KkrOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Saves a model as JSON.
///
/// # Safety
/// `model` must be a live handle; `path` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kkr_model_save_json(
    model: *const KkrModel,
    path: *const c_char,
) -> KkrStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            set_error("null model handle");
            return KkrStatus::KkrNullPointer;
        };
        let path = match cstr_arg(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match model.inner.save_json(Path::new(path)) {
            Ok(()) => KkrStatus::KkrOk,
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Loads a model from JSON.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` a valid pointer to
/// receive the model handle.
#[no_mangle]
pub unsafe extern "C" fn kkr_model_load_json(
    path: *const c_char,
    out: *mut *mut KkrModel,
) -> KkrStatus {
    guard(|| {
        if out.is_null() {
            set_error("null output pointer");
            return KkrStatus::KkrNullPointer;
        }
        let path = match cstr_arg(path) {
            Ok(p) => p,
            Err(status) => return status,
        };
        match KKRModel::load_json(Path::new(path)) {
            Ok(model) => {
                *out = Box::into_raw(Box::new(KkrModel { inner: model }));
                KkrStatus::KkrOk
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// State dimension expected by a model's forecasts.
///
/// # Safety
/// `model` must be a live handle; `state_dim` may be null.
#[no_mangle]
pub unsafe extern "C" fn kkr_model_state_dim(
    model: *const KkrModel,
    state_dim: *mut usize,
) -> KkrStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            set_error("null model handle");
            return KkrStatus::KkrNullPointer;
        };
        if !state_dim.is_null() {
            *state_dim = model.inner.state_dim();
        }
        KkrStatus::KkrOk
    })
}

/// Rolls out a forecast of `steps + 1` values (including the initial one)
/// into `out`. `max_imag`, when non-null, receives the largest imaginary
/// magnitude discarded by the real-part extraction.
///
/// # Safety
/// `model` must be a live handle, `x0` must point to `state_dim` doubles
/// and `out` to `steps + 1` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn kkr_model_forecast(
    model: *const KkrModel,
    x0: *const f64,
    state_dim: usize,
    steps: usize,
    out: *mut f64,
    max_imag: *mut f64,
) -> KkrStatus {
    guard(|| {
        let Some(model) = model.as_ref() else {
            set_error("null model handle");
            return KkrStatus::KkrNullPointer;
        };
        if x0.is_null() || out.is_null() {
            set_error("null buffer pointer");
            return KkrStatus::KkrNullPointer;
        }
        if state_dim != model.inner.state_dim() {
            set_error(&format!(
                "x0 has dim {state_dim}, model expects {}",
                model.inner.state_dim()
            ));
            return KkrStatus::KkrInvalidArgument;
        }
        let x0 = std::slice::from_raw_parts(x0, state_dim);
        let forecast = model.inner.forecast(x0, steps);
        let out = std::slice::from_raw_parts_mut(out, steps + 1);
        out.copy_from_slice(&forecast.values);
        if !max_imag.is_null() {
            *max_imag = forecast.max_imag;
        }
        KkrStatus::KkrOk
    })
}

/// Frees a model handle (null is a no-op).
///
/// # Safety
/// `model` must be null or a handle obtained from this library that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn kkr_model_free(model: *mut KkrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
