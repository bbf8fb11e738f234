//! C ABI over the annotation server core.
//!
//! Conventions:
//! - Every fallible function returns a [`WbStatus`]; results go through out
//!   pointers. On failure, [`wb_last_error_message`] describes the error.
//! - Strings in are NUL-terminated UTF-8. Strings out are owned by the
//!   caller and released with [`wb_string_free`].
//! - Handles ([`WbConfig`], [`WbWorkbench`]) are opaque and released with
//!   their `_free` function. A workbench handle may be shared across threads.
//! - Structured results are JSON strings with the same shape as the HTTP API.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use annobench::active::featurize;
use annobench::export::{self, ExportFormat};
use annobench::highlight::match_keywords;
use annobench::session::{Submission, Workbench, WorkbenchOptions};
use annobench::{Error, TaskConfig};
use indexmap::IndexMap;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Invalid = 5,
    Ingest = 6,
    Submission = 7,
    Auth = 8,
    Forbidden = 9,
    Stale = 10,
    NotFound = 11,
    Conflict = 12,
    UnknownTemplate = 13,
    Json = 14,
    Panic = 15,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WbExportFormat {
    Jsonl = 0,
    Csv = 1,
}

/// A loaded, validated task configuration.
pub struct WbConfig(TaskConfig);

/// A running task: instances, annotators and their stores.
pub struct WbWorkbench(Workbench);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> WbStatus {
    match e {
        Error::Io { .. } | Error::MissingFile(_) => WbStatus::Io,
        Error::Parse { .. } => WbStatus::Parse,
        Error::Invalid(_) => WbStatus::Invalid,
        Error::Ingest { .. } => WbStatus::Ingest,
        Error::Submission(_) => WbStatus::Submission,
        Error::Auth(_) => WbStatus::Auth,
        Error::Forbidden(_) => WbStatus::Forbidden,
        Error::Stale(_) => WbStatus::Stale,
        Error::NotFound(_) => WbStatus::NotFound,
        Error::Conflict(_) => WbStatus::Conflict,
        Error::UnknownTemplate(_) => WbStatus::UnknownTemplate,
        Error::Wizard(_) => WbStatus::Invalid,
    }
}

struct Fail(WbStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let message = match &e {
            Error::Submission(errors) => serde_json::to_string(errors).unwrap_or_else(|_| e.to_string()),
            _ => e.to_string(),
        };
        Fail(status_of(&e), message)
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(WbStatus::Json, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> WbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            WbStatus::Ok
        }
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            WbStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(WbStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(WbStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(WbStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(WbStatus::NullPointer, format!("{name} is null")))
}

fn into_c(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("no interior NUL").into_raw()
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn wb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map(|c| c.as_ptr()).unwrap_or(ptr::null()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn wb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads and validates a YAML task file.
///
/// # Safety
/// `path` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wb_config_load(path: *const c_char, out: *mut *mut WbConfig) -> WbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let config = annobench::load_config(path)?;
        *out = Box::into_raw(Box::new(WbConfig(config)));
        Ok(())
    })
}

/// # Safety
/// `config` must come from [`wb_config_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wb_config_free(config: *mut WbConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wb_config_scheme_count(config: *const WbConfig, out: *mut usize) -> WbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ref_arg(config, "config")?.0.schemes.len();
        Ok(())
    })
}

/// The config re-serialized as YAML.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wb_config_to_yaml(config: *const WbConfig, out: *mut *mut c_char) -> WbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = into_c(annobench::wizard::to_yaml(&ref_arg(config, "config")?.0));
        Ok(())
    })
}

/// Opens a workbench: ingests data and recovers stored annotators. The
/// config handle is not consumed. `background_training` of 0 disables the
/// retraining thread.
///
/// # Safety
/// `config` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wb_workbench_open(
    config: *const WbConfig,
    background_training: i32,
    out: *mut *mut WbWorkbench,
) -> WbStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let config = ref_arg(config, "config")?.0.clone();
        let wb = Workbench::open_with(
            config,
            WorkbenchOptions {
                background_training: background_training != 0,
                ..Default::default()
            },
        )?;
        *out = Box::into_raw(Box::new(WbWorkbench(wb)));
        Ok(())
    })
}

/// Snapshots every annotator and releases the handle.
///
/// # Safety
/// `wb` must come from [`wb_workbench_open`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wb_workbench_free(wb: *mut WbWorkbench) {
    if !wb.is_null() {
        let wb = Box::from_raw(wb);
        let _ = catch_unwind(AssertUnwindSafe(|| wb.0.flush()));
    }
}

/// URL-argument login; returns the annotator's user id.
///
/// # Safety
/// Pointers must be valid as documented in the module conventions.
#[no_mangle]
pub unsafe extern "C" fn wb_workbench_login_url(
    wb: *const WbWorkbench,
    worker_id: *const c_char,
    out_user_id: *mut *mut c_char,
) -> WbStatus {
    guard(|| {
        let out = out_arg(out_user_id, "out_user_id")?;
        let user = ref_arg(wb, "wb")?.0.login_url(str_arg(worker_id, "worker_id")?)?;
        *out = into_c(user);
        Ok(())
    })
}

/// The annotator's current view as JSON (same shape as `GET /task`).
///
/// # Safety
/// Pointers must be valid as documented in the module conventions.
#[no_mangle]
pub unsafe extern "C" fn wb_workbench_task_json(
    wb: *const WbWorkbench,
    user_id: *const c_char,
    out_json: *mut *mut c_char,
) -> WbStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let view = ref_arg(wb, "wb")?.0.current(str_arg(user_id, "user_id")?)?;
        *out = into_c(serde_json::to_string(&view)?);
        Ok(())
    })
}

/// Submits a JSON submission (same shape as the `POST /submit` body) and
/// returns the outcome JSON. Validation failures return
/// `WB_STATUS_SUBMISSION` with the per-scheme errors as the JSON error message.
///
/// # Safety
/// Pointers must be valid as documented in the module conventions.
#[no_mangle]
pub unsafe extern "C" fn wb_workbench_submit_json(
    wb: *const WbWorkbench,
    user_id: *const c_char,
    submission_json: *const c_char,
    out_json: *mut *mut c_char,
) -> WbStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let sub: Submission = serde_json::from_str(str_arg(submission_json, "submission_json")?)?;
        let outcome = ref_arg(wb, "wb")?.0.submit(str_arg(user_id, "user_id")?, &sub)?;
        *out = into_c(serde_json::to_string(&outcome)?);
        Ok(())
    })
}

/// Admin progress snapshot as JSON.
///
/// # Safety
/// Pointers must be valid as documented in the module conventions.
#[no_mangle]
pub unsafe extern "C" fn wb_workbench_progress_json(wb: *const WbWorkbench, out_json: *mut *mut c_char) -> WbStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        *out = into_c(serde_json::to_string(&ref_arg(wb, "wb")?.0.progress())?);
        Ok(())
    })
}

/// Writes export files into `dir` (NULL for the default) and returns a JSON summary.
///
/// # Safety
/// Pointers must be valid as documented in the module conventions; `dir` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn wb_workbench_export(
    wb: *const WbWorkbench,
    format: WbExportFormat,
    dir: *const c_char,
    out_summary_json: *mut *mut c_char,
) -> WbStatus {
    guard(|| {
        let out = out_arg(out_summary_json, "out_summary_json")?;
        let wb = &ref_arg(wb, "wb")?.0;
        let dir = if dir.is_null() {
            export::default_dir(wb.config())
        } else {
            Path::new(str_arg(dir, "dir")?).to_path_buf()
        };
        let format = match format {
            WbExportFormat::Jsonl => ExportFormat::Jsonl,
            WbExportFormat::Csv => ExportFormat::Csv,
        };
        let summary = export::export(wb, format, &dir)?;
        *out = into_c(serde_json::to_string(&summary)?);
        Ok(())
    })
}

/// Sparse n-gram feature counts of `text` as a JSON object.
///
/// # Safety
/// Pointers must be valid as documented in the module conventions.
#[no_mangle]
pub unsafe extern "C" fn wb_featurize_json(text: *const c_char, out_json: *mut *mut c_char) -> WbStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let features = featurize(str_arg(text, "text")?);
        *out = into_c(serde_json::to_string(&features.0)?);
        Ok(())
    })
}

/// Keyword matches in `text`. `groups_json` maps group names to pattern
/// lists, e.g. `{"retirement": ["retir*"]}`. Returns a JSON list of spans
/// with code-point offsets.
///
/// # Safety
/// Pointers must be valid as documented in the module conventions.
#[no_mangle]
pub unsafe extern "C" fn wb_match_keywords_json(
    text: *const c_char,
    groups_json: *const c_char,
    out_json: *mut *mut c_char,
) -> WbStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let groups: IndexMap<String, Vec<String>> = serde_json::from_str(str_arg(groups_json, "groups_json")?)?;
        for (g, ps) in &groups {
            for p in ps {
                annobench::highlight::KeywordPattern::parse(p)
                    .map_err(|m| Fail(WbStatus::Invalid, format!("group {g}: {m}")))?;
            }
        }
        let spans = match_keywords(str_arg(text, "text")?, &groups);
        *out = into_c(serde_json::to_string(&spans)?);
        Ok(())
    })
}
