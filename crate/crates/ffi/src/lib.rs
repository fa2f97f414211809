//! C ABI over `covlearn-core`.
//!
//! Conventions:
//! - every fallible function returns a [`CovlearnStatus`]; on failure a
//!   message is available from [`covlearn_last_error_message`] on the same
//!   thread until the next call;
//! - objects are opaque handles released with their `*_free` function;
//! - strings handed out by the library are released with
//!   [`covlearn_string_free`];
//! - panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use covlearn_core::experiment::{run_training, BoundsChoice, ExperimentConfig};
use covlearn_core::lie::{SE2Pose, Tangent3};
use covlearn_core::metrics::evaluate_dataset;
use covlearn_core::report::{Method, TrainReport};
use covlearn_core::synth::{make_dataset, Dataset, DatasetSpec};
use covlearn_core::{Error, NoiseParams};

/// Result codes. Values 2-4 match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovlearnStatus {
    Ok = 0,
    NullPointer = 1,
    ConfigError = 2,
    DataError = 3,
    ConvergenceFailure = 4,
    InvalidUtf8 = 5,
    Panic = 6,
}

/// A generated or loaded dataset.
pub struct CovlearnDataset(Dataset);

/// The result of one training run.
pub struct CovlearnReport(TrainReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(CovlearnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Config(_) | Error::Domain(_) => CovlearnStatus::ConfigError,
            Error::Convergence(_) | Error::NotPositiveDefinite { .. } => CovlearnStatus::ConvergenceFailure,
            _ => CovlearnStatus::DataError,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> CovlearnStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CovlearnStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            CovlearnStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(CovlearnStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CovlearnStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(CovlearnStatus::DataError, "string contains NUL".into()))
}

/// Message of the last failed call on this thread, or NULL. Owned by the
/// library; valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn covlearn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn covlearn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generates a dataset from a JSON spec document.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covlearn_dataset_generate(
    spec_json: *const c_char,
    out: *mut *mut CovlearnDataset,
) -> CovlearnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let spec = DatasetSpec::from_json(str_arg(spec_json, "spec_json")?)?;
        *out = Box::into_raw(Box::new(CovlearnDataset(make_dataset(&spec)?)));
        Ok(())
    })
}

/// Parses a dataset document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covlearn_dataset_from_json(
    json: *const c_char,
    out: *mut *mut CovlearnDataset,
) -> CovlearnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let d = Dataset::from_json(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(CovlearnDataset(d)));
        Ok(())
    })
}

/// Serializes a dataset; free the result with `covlearn_string_free`.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covlearn_dataset_to_json(
    dataset: *const CovlearnDataset,
    out: *mut *mut c_char,
) -> CovlearnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        *out = into_c_string(d.0.to_json()?)?;
        Ok(())
    })
}

/// Number of training and test trajectories.
///
/// # Safety
/// `dataset` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn covlearn_dataset_sizes(
    dataset: *const CovlearnDataset,
    train: *mut usize,
    test: *mut usize,
) -> CovlearnStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        *out_arg(train, "train")? = d.0.train.len();
        *out_arg(test, "test")? = d.0.test.len();
        Ok(())
    })
}

/// # Safety
/// `dataset` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn covlearn_dataset_free(dataset: *mut CovlearnDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Trains on the dataset's training split.
///
/// `method` is "ours", "nelder-mead" or "powell"; `bounds` is "tight" or
/// "loose"; `config_json` may be NULL for defaults.
///
/// # Safety
/// String arguments must be NUL-terminated (or NULL where allowed);
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covlearn_train(
    dataset: *const CovlearnDataset,
    method: *const c_char,
    bounds: *const c_char,
    config_json: *const c_char,
    out: *mut *mut CovlearnReport,
) -> CovlearnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let method: Method = str_arg(method, "method")?.parse()?;
        let choice = match str_arg(bounds, "bounds")? {
            "tight" => BoundsChoice::Tight,
            "loose" => BoundsChoice::Loose,
            other => {
                return Err(Failure(
                    CovlearnStatus::ConfigError,
                    format!("bounds must be \"tight\" or \"loose\", got {other:?}"),
                ))
            }
        };
        let config = if config_json.is_null() {
            ExperimentConfig::default()
        } else {
            ExperimentConfig::from_json(str_arg(config_json, "config_json")?)?
        };
        let report = run_training(&d.0, method, &choice, &config)?;
        *out = Box::into_raw(Box::new(CovlearnReport(report)));
        Ok(())
    })
}

/// Serializes a report; free the result with `covlearn_string_free`.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covlearn_report_to_json(
    report: *const CovlearnReport,
    out: *mut *mut c_char,
) -> CovlearnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        *out = into_c_string(r.0.to_json()?)?;
        Ok(())
    })
}

/// Learned parameters as a JSON object of class name to three variances.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covlearn_report_theta_json(
    report: *const CovlearnReport,
    out: *mut *mut c_char,
) -> CovlearnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let text = serde_json::to_string(&r.0.theta_star).map_err(Error::from)?;
        *out = into_c_string(text)?;
        Ok(())
    })
}

/// Eigenvalue spread of the learned parameters.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn covlearn_report_spread(
    report: *const CovlearnReport,
    out: *mut f64,
) -> CovlearnStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        *out_arg(out, "out")? = r.0.spread_star;
        Ok(())
    })
}

/// # Safety
/// `report` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn covlearn_report_free(report: *mut CovlearnReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Mean test-split RMSE for the parameters in `theta_json`.
///
/// # Safety
/// `dataset` must be a live handle, `theta_json` NUL-terminated and the
/// outputs writable.
#[no_mangle]
pub unsafe extern "C" fn covlearn_evaluate(
    dataset: *const CovlearnDataset,
    theta_json: *const c_char,
    transl_rmse: *mut f64,
    rot_rmse: *mut f64,
) -> CovlearnStatus {
    guard(|| {
        let d = dataset.as_ref().ok_or_else(|| null("dataset"))?;
        let theta: NoiseParams = serde_json::from_str(str_arg(theta_json, "theta_json")?)
            .map_err(|e| Failure(CovlearnStatus::ConfigError, format!("theta: {e}")))?;
        if !theta.same_classes(&d.0.spec.latent) {
            return Err(Failure(
                CovlearnStatus::ConfigError,
                "theta classes do not match the dataset".into(),
            ));
        }
        let transl = out_arg(transl_rmse, "transl_rmse")?;
        let rot = out_arg(rot_rmse, "rot_rmse")?;
        let e = evaluate_dataset(&theta, &d.0.test, &Default::default())?;
        *transl = e.mean.transl;
        *rot = e.mean.rot;
        Ok(())
    })
}

unsafe fn triple(p: *const f64, what: &str) -> Result<[f64; 3], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let v = [*p, *p.add(1), *p.add(2)];
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Failure(CovlearnStatus::ConfigError, format!("{what} is not finite")));
    }
    Ok(v)
}

unsafe fn write_triple(p: *mut f64, v: [f64; 3]) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null("out"));
    }
    for (k, x) in v.into_iter().enumerate() {
        *p.add(k) = x;
    }
    Ok(())
}

/// `out = Exp(tau)`; both are `[x, y, theta]` triples.
///
/// # Safety
/// `tau` must point to 3 readable doubles and `out` to 3 writable ones.
#[no_mangle]
pub unsafe extern "C" fn covlearn_se2_exp(tau: *const f64, out: *mut f64) -> CovlearnStatus {
    guard(|| {
        let t = triple(tau, "tau")?;
        write_triple(out, SE2Pose::exp(&Tangent3::from(t)).to_array())
    })
}

/// `out = Log(pose)`.
///
/// # Safety
/// `pose` must point to 3 readable doubles and `out` to 3 writable ones.
#[no_mangle]
pub unsafe extern "C" fn covlearn_se2_log(pose: *const f64, out: *mut f64) -> CovlearnStatus {
    guard(|| {
        let p = SE2Pose::from_array(triple(pose, "pose")?);
        let l = p.log();
        write_triple(out, [l[0], l[1], l[2]])
    })
}

/// `out = a ∘ b`.
///
/// # Safety
/// `a` and `b` must point to 3 readable doubles and `out` to 3 writable ones.
#[no_mangle]
pub unsafe extern "C" fn covlearn_se2_compose(a: *const f64, b: *const f64, out: *mut f64) -> CovlearnStatus {
    guard(|| {
        let a = SE2Pose::from_array(triple(a, "a")?);
        let b = SE2Pose::from_array(triple(b, "b")?);
        write_triple(out, a.compose(&b).to_array())
    })
}
