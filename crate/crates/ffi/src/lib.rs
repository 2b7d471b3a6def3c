//! C interface to the selamr pipeline.
//!
//! Objects are opaque handles created by `*_new`/`*_load`-style calls and
//! released with the matching `*_free`. Every fallible call returns a
//! [`SelamrStatus`]; the message of the last failure on the calling thread
//! is available from [`selamr_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use selamr_core::autodiff::checkpoint;
use selamr_core::eval::{split_records, ConfusionMatrix, RunConfig};
use selamr_core::preprocess::preprocess_records;
use selamr_core::siggen::io::read_records;
use selamr_core::siggen::{generate_records, SignalRecord};
use selamr_core::train::{train_run, TrainOutcome, Variant};
use selamr_core::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelamrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidString = 2,
    Dimension = 3,
    Domain = 4,
    Contract = 5,
    DegenerateRow = 6,
    Length = 7,
    Connectivity = 8,
    Stratification = 9,
    Invariant = 10,
    Parse = 11,
    Config = 12,
    Io = 13,
    OutOfRange = 14,
    Panic = 15,
}

impl From<&Error> for SelamrStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Dimension(_) => Self::Dimension,
            Error::Domain(_) => Self::Domain,
            Error::Contract(_) => Self::Contract,
            Error::DegenerateRow { .. } => Self::DegenerateRow,
            Error::Length(_) => Self::Length,
            Error::Connectivity { .. } => Self::Connectivity,
            Error::Stratification(_) => Self::Stratification,
            Error::Invariant(_) => Self::Invariant,
            Error::Parse(_) => Self::Parse,
            Error::Config(_) => Self::Config,
            Error::Io(_) => Self::Io,
        }
    }
}

/// Run configuration.
pub struct SelamrConfig(RunConfig);

/// Labelled signal records.
pub struct SelamrDataset(Vec<SignalRecord>);

/// A trained model with its evaluation results.
pub struct SelamrModel(TrainOutcome);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let mut bytes: Vec<u8> = msg.into();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("nul bytes were removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(SelamrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(SelamrStatus::from(&e), e.to_string())
    }
}

type FfiResult<T> = Result<T, Failure>;

fn null() -> Failure {
    Failure(SelamrStatus::NullPointer, "null pointer argument".into())
}

/// Runs `f`, records any failure, and converts panics to
/// [`SelamrStatus::Panic`].
fn guard(f: impl FnOnce() -> FfiResult<()>) -> SelamrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SelamrStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            SelamrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(SelamrStatus::InvalidString, "string is not valid UTF-8".into()))
}

unsafe fn obj<'a, T>(p: *const T) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(null)
}

unsafe fn out<'a, T>(p: *mut T) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(null)
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn selamr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn selamr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default configuration.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn selamr_config_default(out_cfg: *mut *mut SelamrConfig) -> SelamrStatus {
    guard(|| {
        *out(out_cfg)? = boxed(SelamrConfig(RunConfig::default()));
        Ok(())
    })
}

/// Parses a TOML configuration; missing keys take their defaults.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out_cfg` writable.
#[no_mangle]
pub unsafe extern "C" fn selamr_config_from_toml(toml: *const c_char, out_cfg: *mut *mut SelamrConfig) -> SelamrStatus {
    guard(|| {
        let text = str_arg(toml)?;
        let dst = out(out_cfg)?;
        *dst = boxed(SelamrConfig(RunConfig::from_toml(text)?));
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn selamr_config_free(cfg: *mut SelamrConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Synthesises the dataset described by the configuration's generator.
///
/// # Safety
/// `cfg` must be a live handle and `out_ds` writable.
#[no_mangle]
pub unsafe extern "C" fn selamr_dataset_generate(
    cfg: *const SelamrConfig,
    seed: u64,
    out_ds: *mut *mut SelamrDataset,
) -> SelamrStatus {
    guard(|| {
        let cfg = obj(cfg)?;
        let dst = out(out_ds)?;
        *dst = boxed(SelamrDataset(generate_records(&cfg.0.generate, seed)?));
        Ok(())
    })
}

/// Reads a SISO CSV or container file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_ds` writable.
#[no_mangle]
pub unsafe extern "C" fn selamr_dataset_load(path: *const c_char, out_ds: *mut *mut SelamrDataset) -> SelamrStatus {
    guard(|| {
        let p = str_arg(path)?;
        let dst = out(out_ds)?;
        *dst = boxed(SelamrDataset(read_records(Path::new(p))?));
        Ok(())
    })
}

/// Preprocesses every record in place with the configured pipeline.
///
/// # Safety
/// `ds` and `cfg` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn selamr_dataset_preprocess(ds: *mut SelamrDataset, cfg: *const SelamrConfig) -> SelamrStatus {
    guard(|| {
        let cfg = obj(cfg)?;
        let ds = ds.as_mut().ok_or_else(null)?;
        ds.0 = preprocess_records(&ds.0, &cfg.0.preprocess)?;
        Ok(())
    })
}

/// Number of records.
///
/// # Safety
/// `ds` must be a live handle and `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn selamr_dataset_len(ds: *const SelamrDataset, out_len: *mut usize) -> SelamrStatus {
    guard(|| {
        *out(out_len)? = obj(ds)?.0.len();
        Ok(())
    })
}

/// Class id of record `index`, or -1 when it is unlabelled.
///
/// # Safety
/// `ds` must be a live handle and `out_label` writable.
#[no_mangle]
pub unsafe extern "C" fn selamr_dataset_label(
    ds: *const SelamrDataset,
    index: usize,
    out_label: *mut i32,
) -> SelamrStatus {
    guard(|| {
        let r = record(obj(ds)?, index)?;
        *out(out_label)? = r.label.map_or(-1, |l| l.class_id() as i32);
        Ok(())
    })
}

/// Nominal SNR (dB) of record `index`.
///
/// # Safety
/// `ds` must be a live handle and `out_snr` writable.
#[no_mangle]
pub unsafe extern "C" fn selamr_dataset_snr(ds: *const SelamrDataset, index: usize, out_snr: *mut f64) -> SelamrStatus {
    guard(|| {
        *out(out_snr)? = record(obj(ds)?, index)?.snr_db();
        Ok(())
    })
}

fn record(ds: &SelamrDataset, index: usize) -> FfiResult<&SignalRecord> {
    ds.0.get(index).ok_or_else(|| {
        Failure(
            SelamrStatus::OutOfRange,
            format!("record {index} of {}", ds.0.len()),
        )
    })
}

/// # Safety
/// `ds` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn selamr_dataset_free(ds: *mut SelamrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trains one seeded run on preprocessed records. `variant` is one of
/// `full`, `dim-transform-instead-of-embedding`,
/// `complete-graph-instead-of-knn`, `gat-only-instead-of-gat-lpa`, or null
/// for the configured variant.
///
/// # Safety
/// `cfg` and `ds` must be live handles, `variant` null or a NUL-terminated
/// string, and `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn selamr_train(
    cfg: *const SelamrConfig,
    ds: *const SelamrDataset,
    variant: *const c_char,
    seed: u64,
    out_model: *mut *mut SelamrModel,
) -> SelamrStatus {
    guard(|| {
        let cfg = &obj(cfg)?.0;
        let ds = obj(ds)?;
        let variant: Variant = if variant.is_null() { cfg.variant } else { str_arg(variant)?.parse()? };
        let dst = out(out_model)?;
        let split = split_records(&ds.0, &cfg.split, seed)?;
        *dst = boxed(SelamrModel(train_run(&ds.0, &split, &cfg.model(), variant, seed)?));
        Ok(())
    })
}

/// Test-split metrics of a trained model.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SelamrMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    /// Epoch whose parameters scored best on validation.
    pub best_epoch: usize,
    pub runtime_secs: f64,
}

/// # Safety
/// `model` must be a live handle and `out_metrics` writable.
#[no_mangle]
pub unsafe extern "C" fn selamr_model_metrics(model: *const SelamrModel, out_metrics: *mut SelamrMetrics) -> SelamrStatus {
    guard(|| {
        let m = &obj(model)?.0;
        *out(out_metrics)? = SelamrMetrics {
            accuracy: m.test.accuracy,
            macro_precision: m.test.macro_precision,
            best_epoch: m.best_epoch,
            runtime_secs: m.runtime_secs,
        };
        Ok(())
    })
}

/// Test accuracy over records with SNR of at least `min_db`. Fails with
/// [`SelamrStatus::OutOfRange`] when no test record qualifies.
///
/// # Safety
/// `model` must be a live handle and `out_acc` writable.
#[no_mangle]
pub unsafe extern "C" fn selamr_model_accuracy_at_least(
    model: *const SelamrModel,
    min_db: f64,
    out_acc: *mut f64,
) -> SelamrStatus {
    guard(|| {
        let m = &obj(model)?.0;
        let dst = out(out_acc)?;
        *dst = m
            .test
            .accuracy_at_least(min_db)
            .ok_or_else(|| Failure(SelamrStatus::OutOfRange, format!("no test records at or above {min_db} dB")))?;
        Ok(())
    })
}

/// Writes the model parameters as a checkpoint file.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn selamr_model_save(model: *const SelamrModel, path: *const c_char) -> SelamrStatus {
    guard(|| {
        let m = &obj(model)?.0;
        checkpoint::save(&m.params, Path::new(str_arg(path)?))?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn selamr_model_free(model: *mut SelamrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Macro-averaged precision of `n` aligned predictions and labels in
/// `0..classes`. Classes never predicted contribute 0.
///
/// # Safety
/// `predicted` and `truth` must each point to `n` readable values (they may
/// be null when `n` is 0) and `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn selamr_macro_precision(
    predicted: *const usize,
    truth: *const usize,
    n: usize,
    classes: usize,
    out_value: *mut f64,
) -> SelamrStatus {
    guard(|| {
        let dst = out(out_value)?;
        let (p, t) = if n == 0 {
            (&[][..], &[][..])
        } else {
            if predicted.is_null() || truth.is_null() {
                return Err(null());
            }
            (std::slice::from_raw_parts(predicted, n), std::slice::from_raw_parts(truth, n))
        };
        *dst = ConfusionMatrix::from_predictions(p, t, classes)?.macro_precision();
        Ok(())
    })
}
