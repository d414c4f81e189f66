//! C ABI over the bsgl library.
//!
//! Handles are opaque pointers owned by Rust; every constructor has a
//! matching `_free`. Functions return a [`BsglStatus`] code and write results
//! through out-pointers. On failure, [`bsgl_last_error`] returns a
//! thread-local message valid until the next failing call on that thread.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use libc::{c_char, size_t};

use bsgl::inference::InferenceGrid;
use bsgl::io::{read_dataset, run_fit, write_results, DatasetSchema, FitArtifacts, PipelineOptions};
use bsgl::simulate::{generate_dataset, SimConfig};
use bsgl::Hyperparameters;
use bsgl::SpatialDataset;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

/// Status code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BsglStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DataError = 3,
    RuntimeError = 4,
    IndexOutOfRange = 5,
    BufferTooSmall = 6,
}

fn status_of(err: &bsgl::Error) -> BsglStatus {
    use bsgl::Error as E;
    match err {
        E::MissingColumn(_) | E::NoUsableRows | E::Csv(_) | E::Io(_) | E::Json(_) | E::EmptyDataset => {
            BsglStatus::DataError
        }
        E::InvalidConfig(_)
        | E::InvalidGigParameter { .. }
        | E::DegenerateSplit { .. }
        | E::InsufficientBasisFunctions { .. }
        | E::DegenerateBbox { .. } => BsglStatus::InvalidArgument,
        _ => BsglStatus::RuntimeError,
    }
}

/// Opaque dataset handle.
pub struct BsglDataset {
    inner: SpatialDataset,
}

/// Opaque fitted-model handle.
pub struct BsglFit {
    artifacts: FitArtifacts,
}

/// Plain-old-data fit configuration. `grid_q = 0` evaluates surfaces at the
/// observed training locations; any positive value requests a regular
/// grid_q x grid_q grid. Obtain defaults via [`bsgl_fit_options_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct BsglFitOptions {
    /// Total basis count; must be a perfect square.
    pub l: size_t,
    pub degree: size_t,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_lambda: f64,
    pub b_lambda: f64,
    pub n_iter: size_t,
    pub warmup: size_t,
    pub n_chains: size_t,
    pub ci_level: f64,
    pub seed: u64,
    pub include_intercept: bool,
    /// Held-out fraction in [0, 1); 0 disables the holdout.
    pub test_fraction: f64,
    pub grid_q: size_t,
    pub rhat_threshold: f64,
}

impl BsglFitOptions {
    fn to_pipeline(self) -> PipelineOptions {
        PipelineOptions {
            l: self.l,
            degree: self.degree,
            hyper: Hyperparameters {
                a_sigma: self.a_sigma,
                b_sigma: self.b_sigma,
                a_lambda: self.a_lambda,
                b_lambda: self.b_lambda,
            },
            n_iter: self.n_iter,
            warmup: self.warmup,
            n_chains: self.n_chains,
            ci_level: self.ci_level,
            seed: self.seed,
            include_intercept: self.include_intercept,
            test_fraction: self.test_fraction,
            grid: if self.grid_q == 0 {
                InferenceGrid::Observed
            } else {
                InferenceGrid::Regular { q: self.grid_q }
            },
            rhat_threshold: self.rhat_threshold,
            bbox_margin: 0.0,
        }
    }
}

/// Thread-local message for the most recent failure on this thread. The
/// pointer stays valid until the next failing call from the same thread.
#[no_mangle]
pub extern "C" fn bsgl_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library defaults mirroring the CLI: L = 25 cubic basis, 4 chains of
/// 5000 sweeps with 500 warm-up, 95% intervals, 20% holdout.
///
/// # Safety
/// `out` must be a valid pointer to uninitialized or writable memory.
#[no_mangle]
pub unsafe extern "C" fn bsgl_fit_options_default(out: *mut BsglFitOptions) -> BsglStatus {
    if out.is_null() {
        return BsglStatus::NullPointer;
    }
    let d = PipelineOptions::default();
    let opts = BsglFitOptions {
        l: d.l,
        degree: d.degree,
        a_sigma: d.hyper.a_sigma,
        b_sigma: d.hyper.b_sigma,
        a_lambda: d.hyper.a_lambda,
        b_lambda: d.hyper.b_lambda,
        n_iter: d.n_iter,
        warmup: d.warmup,
        n_chains: d.n_chains,
        ci_level: d.ci_level,
        seed: d.seed,
        include_intercept: d.include_intercept,
        test_fraction: d.test_fraction,
        grid_q: 0,
        rhat_threshold: d.rhat_threshold,
    };
    unsafe { out.write(opts) };
    BsglStatus::Ok
}

unsafe fn cstr_to_path<'a>(ptr: *const c_char) -> Result<&'a Path, BsglStatus> {
    if ptr.is_null() {
        return Err(BsglStatus::NullPointer);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_last_error("path is not valid UTF-8");
            Err(BsglStatus::InvalidArgument)
        }
    }
}

fn guard<T>(out: *mut T, f: impl FnOnce() -> Result<T, BsglStatus>) -> BsglStatus {
    if out.is_null() {
        return BsglStatus::NullPointer;
    }
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(value)) => {
            unsafe { out.write(value) };
            BsglStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => {
            set_last_error("internal panic");
            BsglStatus::RuntimeError
        }
    }
}

/// Read a dataset from a headered CSV with columns u, v, y and one column
/// per predictor. Rows with non-finite values are dropped.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid pointer.
/// The returned handle must be released with [`bsgl_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn bsgl_dataset_read_csv(
    path: *const c_char,
    out: *mut *mut BsglDataset,
) -> BsglStatus {
    guard(out, || {
        let path = cstr_to_path(path)?;
        match read_dataset(path, &DatasetSchema::default()) {
            Ok((inner, _dropped)) => Ok(Box::into_raw(Box::new(BsglDataset { inner }))),
            Err(e) => {
                set_last_error(&e.to_string());
                Err(status_of(&e))
            }
        }
    })
}

/// Generate a synthetic dataset with three spatially varying signal
/// surfaces. `constant_c` of NaN leaves predictor 4 as pure noise.
///
/// # Safety
/// `out` must be a valid pointer; free the handle with [`bsgl_dataset_free`].
#[no_mangle]
pub unsafe extern "C" fn bsgl_dataset_simulate(
    n: size_t,
    m: size_t,
    seed: u64,
    noise_var: f64,
    constant_c: f64,
    out: *mut *mut BsglDataset,
) -> BsglStatus {
    guard(out, || {
        let config = SimConfig {
            n,
            m,
            noise_var,
            constant_c: if constant_c.is_nan() { None } else { Some(constant_c) },
            ..SimConfig::new(n, m, seed)
        };
        match generate_dataset(&config) {
            Ok((inner, _truth)) => Ok(Box::into_raw(Box::new(BsglDataset { inner }))),
            Err(e) => {
                set_last_error(&e.to_string());
                Err(status_of(&e))
            }
        }
    })
}

/// Number of rows in the dataset; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn bsgl_dataset_rows(dataset: *const BsglDataset) -> size_t {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).inner.n()
}

/// Number of predictor columns; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn bsgl_dataset_predictors(dataset: *const BsglDataset) -> size_t {
    if dataset.is_null() {
        return 0;
    }
    (*dataset).inner.m()
}

/// Release a dataset handle (null is a no-op).
///
/// # Safety
/// `dataset` must have come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn bsgl_dataset_free(dataset: *mut BsglDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Run the full fit pipeline on a dataset.
///
/// # Safety
/// `dataset`, `options`, and `out` must be valid pointers. The returned
/// handle must be released with [`bsgl_fit_free`].
#[no_mangle]
pub unsafe extern "C" fn bsgl_fit_run(
    dataset: *const BsglDataset,
    options: *const BsglFitOptions,
    out: *mut *mut BsglFit,
) -> BsglStatus {
    guard(out, || {
        if dataset.is_null() || options.is_null() {
            return Err(BsglStatus::NullPointer);
        }
        let opts = (*options).to_pipeline();
        match run_fit(&(*dataset).inner, &opts) {
            Ok(artifacts) => Ok(Box::into_raw(Box::new(BsglFit { artifacts }))),
            Err(e) => {
                set_last_error(&e.to_string());
                Err(status_of(&e))
            }
        }
    })
}

/// Number of predictor groups in the fit (includes the intercept group when
/// one was requested); 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn bsgl_fit_groups(fit: *const BsglFit) -> size_t {
    if fit.is_null() {
        return 0;
    }
    (*fit).artifacts.group_names.len()
}

/// Spatial coverage probability of one predictor group.
///
/// # Safety
/// `fit` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bsgl_fit_scp(
    fit: *const BsglFit,
    group: size_t,
    out: *mut f64,
) -> BsglStatus {
    guard(out, || {
        if fit.is_null() {
            return Err(BsglStatus::NullPointer);
        }
        let summaries = &(*fit).artifacts.summaries;
        summaries.get(group).map(|s| s.scp).ok_or(BsglStatus::IndexOutOfRange)
    })
}

/// Copy the NUL-terminated group name into `buf`.
///
/// # Safety
/// `fit` must be valid and `buf` must point to at least `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn bsgl_fit_group_name(
    fit: *const BsglFit,
    group: size_t,
    buf: *mut c_char,
    cap: size_t,
) -> BsglStatus {
    if fit.is_null() || buf.is_null() {
        return BsglStatus::NullPointer;
    }
    let names = &(*fit).artifacts.group_names;
    let Some(name) = names.get(group) else {
        return BsglStatus::IndexOutOfRange;
    };
    let bytes = name.as_bytes();
    if bytes.len() + 1 > cap {
        return BsglStatus::BufferTooSmall;
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, bytes.len());
    *buf.add(bytes.len()) = 0;
    BsglStatus::Ok
}

/// Held-out mean squared prediction error; NaN when the fit had no holdout.
///
/// # Safety
/// `fit` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bsgl_fit_mspe(fit: *const BsglFit, out: *mut f64) -> BsglStatus {
    guard(out, || {
        if fit.is_null() {
            return Err(BsglStatus::NullPointer);
        }
        Ok((*fit).artifacts.mspe.unwrap_or(f64::NAN))
    })
}

/// Worst split R-hat across parameters; NaN for single-chain fits.
///
/// # Safety
/// `fit` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn bsgl_fit_worst_rhat(fit: *const BsglFit, out: *mut f64) -> BsglStatus {
    guard(out, || {
        if fit.is_null() {
            return Err(BsglStatus::NullPointer);
        }
        Ok((*fit)
            .artifacts
            .report
            .as_ref()
            .map(|r| r.worst_rhat)
            .unwrap_or(f64::NAN))
    })
}

/// Write the full artifact set (surfaces, significance, SCP, convergence,
/// predictions, manifest) into `out_dir`.
///
/// # Safety
/// `fit` must be valid; `out_dir` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bsgl_fit_write_results(
    fit: *const BsglFit,
    out_dir: *const c_char,
    save_samples: bool,
) -> BsglStatus {
    if fit.is_null() {
        return BsglStatus::NullPointer;
    }
    let dir = match cstr_to_path(out_dir) {
        Ok(d) => d,
        Err(s) => return s,
    };
    match catch_unwind(AssertUnwindSafe(|| {
        write_results(&(*fit).artifacts, dir, None, save_samples)
    })) {
        Ok(Ok(_)) => BsglStatus::Ok,
        Ok(Err(e)) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_last_error("internal panic");
            BsglStatus::RuntimeError
        }
    }
}

/// Release a fit handle (null is a no-op).
///
/// # Safety
/// `fit` must have come from [`bsgl_fit_run`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn bsgl_fit_free(fit: *mut BsglFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}
