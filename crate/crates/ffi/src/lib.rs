//! C ABI over the visreason pipeline.
//!
//! Every fallible function returns a [`VrStatus`] and writes its result
//! through an out-pointer. On failure a description is available from
//! [`vr_last_error`] on the same thread. Strings returned to the caller are
//! owned by the caller and released with [`vr_string_free`]; engines and
//! reports are opaque handles with their own free functions.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use libc::c_char;
use visreason::backend::parse_score;
use visreason::harness::{self, load_dataset, Config, Engine, HarnessError, RunReport};
use visreason::{
    distillation_loss, joint_validity_score, normalize_answer, reference_match_reward, relation_weight,
    ScoringParams, ValidityScore,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VrStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// An argument was out of its valid range.
    InvalidArgument = 3,
    /// Bad configuration or dataset; fix the input and retry.
    Usage = 4,
    /// The run itself failed (I/O, backend, corrupt trajectory file).
    Runtime = 5,
    /// A Rust panic was caught at the boundary.
    Panic = 6,
}

/// A configured pipeline, ready to run batches.
pub struct VrEngine {
    engine: Engine,
}

/// An accuracy report from a run or a replay.
pub struct VrReport {
    report: RunReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(VrStatus, String);

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure(VrStatus::InvalidArgument, message.into())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let status = if e.is_usage_error() { VrStatus::Usage } else { VrStatus::Runtime };
        Failure(status, e.to_string())
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `body` with panics caught, records any error and maps it to a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> VrStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            VrStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("panic inside visreason".into());
            VrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(VrStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(VrStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: callers pass either NULL or a pointer to writable storage.
    unsafe { p.as_mut() }.ok_or_else(|| Failure(VrStatus::NullArgument, format!("{name} is NULL")))
}

fn score_arg(value: f64, name: &str) -> Result<ValidityScore, Failure> {
    ValidityScore::new(value).map_err(|e| Failure::invalid(format!("{name}: {e}")))
}

fn params(gamma: f64, alpha: u32) -> Result<ScoringParams, Failure> {
    let p = ScoringParams { gamma, alpha, ..ScoringParams::default() };
    p.validate().map_err(|e| Failure::invalid(e.to_string()))?;
    Ok(p)
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::invalid("result contains a NUL byte"))
}

/// Description of the last failed call on this thread, or NULL if the last
/// call succeeded. The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn vr_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Weight of each relation of a subject holding `n_relations` relations.
///
/// # Safety
/// `out` must be NULL or point to writable storage for a `double`.
#[no_mangle]
pub unsafe extern "C" fn vr_relation_weight(n_relations: usize, gamma: f64, alpha: u32, out: *mut f64) -> VrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = relation_weight(n_relations, &params(gamma, alpha)?);
        Ok(())
    })
}

/// Joint entity-relation validity score.
///
/// # Safety
/// `out` must be NULL or point to writable storage for a `double`.
#[no_mangle]
pub unsafe extern "C" fn vr_joint_validity_score(
    score_e: f64,
    score_r: f64,
    n_relations: usize,
    gamma: f64,
    alpha: u32,
    out: *mut f64,
) -> VrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = params(gamma, alpha)?;
        *out = joint_validity_score(score_arg(score_e, "score_e")?, score_arg(score_r, "score_r")?, n_relations, &p);
        Ok(())
    })
}

/// Negative log-likelihood of a sequence from its token log-probabilities.
///
/// # Safety
/// `logprobs` must point to `len` readable doubles (it may be NULL when
/// `len` is 0); `out` must point to writable storage for a `double`.
#[no_mangle]
pub unsafe extern "C" fn vr_distillation_loss(logprobs: *const f64, len: usize, out: *mut f64) -> VrStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let values: &[f64] = if len == 0 {
            &[]
        } else if logprobs.is_null() {
            return Err(Failure(VrStatus::NullArgument, "logprobs is NULL".into()));
        } else {
            std::slice::from_raw_parts(logprobs, len)
        };
        *out = distillation_loss(values).map_err(|e| Failure::invalid(e.to_string()))?;
        Ok(())
    })
}

/// Extracts a validity score in [0, 1] from free-form judge text.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must point to a `double`.
#[no_mangle]
pub unsafe extern "C" fn vr_parse_score(text: *const c_char, out: *mut f64) -> VrStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        *out = parse_score(text).map_err(|e| Failure::invalid(e.to_string()))?.value();
        Ok(())
    })
}

/// Canonical answer form used for matching. The result is released with
/// [`vr_string_free`].
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must point to a `char *`.
#[no_mangle]
pub unsafe extern "C" fn vr_normalize_answer(text: *const c_char, out: *mut *mut c_char) -> VrStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let out = out_arg(out, "out")?;
        *out = into_c_string(normalize_answer(text))?;
        Ok(())
    })
}

/// Whether `predicted` matches any of `n_references` references after
/// normalization.
///
/// # Safety
/// `predicted` must be a NUL-terminated string; `references` must point to
/// `n_references` NUL-terminated strings; `out` must point to a `bool`.
#[no_mangle]
pub unsafe extern "C" fn vr_reference_match(
    predicted: *const c_char,
    references: *const *const c_char,
    n_references: usize,
    out: *mut bool,
) -> VrStatus {
    guard(|| {
        let predicted = str_arg(predicted, "predicted")?;
        let out = out_arg(out, "out")?;
        let refs = if n_references == 0 {
            Vec::new()
        } else if references.is_null() {
            return Err(Failure(VrStatus::NullArgument, "references is NULL".into()));
        } else {
            std::slice::from_raw_parts(references, n_references)
                .iter()
                .map(|&p| str_arg(p, "reference").map(str::to_owned))
                .collect::<Result<Vec<_>, _>>()?
        };
        *out = reference_match_reward(predicted, &refs).is_pass();
        Ok(())
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a config file and builds its backends.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` must point to a
/// `VrEngine *`. The engine is released with [`vr_engine_free`].
#[no_mangle]
pub unsafe extern "C" fn vr_engine_open(config_path: *const c_char, out: *mut *mut VrEngine) -> VrStatus {
    guard(|| {
        let path = str_arg(config_path, "config_path")?;
        let out = out_arg(out, "out")?;
        let config = Config::load(Path::new(path)).map_err(HarnessError::from)?;
        let engine = Engine::new(config).map_err(HarnessError::from)?;
        *out = Box::into_raw(Box::new(VrEngine { engine }));
        Ok(())
    })
}

/// Runs every sample of a dataset, writing trajectories and reports into
/// `out_dir`. Image paths resolve against the dataset's directory.
///
/// # Safety
/// `engine` must come from [`vr_engine_open`]; the paths must be
/// NUL-terminated strings; `out` must point to a `VrReport *`, released with
/// [`vr_report_free`].
#[no_mangle]
pub unsafe extern "C" fn vr_engine_run_batch(
    engine: *const VrEngine,
    dataset_path: *const c_char,
    out_dir: *const c_char,
    out: *mut *mut VrReport,
) -> VrStatus {
    guard(|| {
        let engine = engine.as_ref().ok_or_else(|| Failure(VrStatus::NullArgument, "engine is NULL".into()))?;
        let dataset = PathBuf::from(str_arg(dataset_path, "dataset_path")?);
        let out_dir = PathBuf::from(str_arg(out_dir, "out_dir")?);
        let out = out_arg(out, "out")?;
        let samples = load_dataset(&dataset).map_err(HarnessError::from)?;
        let base_dir = dataset.parent().unwrap_or(Path::new(""));
        let outcome = engine.engine.run_batch(&samples, base_dir, &out_dir)?;
        *out = Box::into_raw(Box::new(VrReport { report: outcome.report }));
        Ok(())
    })
}

/// Releases an engine. NULL is ignored.
///
/// # Safety
/// `engine` must be NULL or come from [`vr_engine_open`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vr_engine_free(engine: *mut VrEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Recomputes the report of a trajectory file with its recorded metric.
///
/// # Safety
/// `trajectories` must be a NUL-terminated string; `out` must point to a
/// `VrReport *`, released with [`vr_report_free`].
#[no_mangle]
pub unsafe extern "C" fn vr_replay(trajectories: *const c_char, out: *mut *mut VrReport) -> VrStatus {
    guard(|| {
        let path = str_arg(trajectories, "trajectories")?;
        let out = out_arg(out, "out")?;
        let report = harness::replay(Path::new(path), None)?;
        *out = Box::into_raw(Box::new(VrReport { report }));
        Ok(())
    })
}

fn report_ref<'a>(report: *const VrReport) -> Option<&'a RunReport> {
    // SAFETY: callers pass NULL or a live handle from this library.
    unsafe { report.as_ref() }.map(|r| &r.report)
}

/// Number of samples in the report; 0 for NULL.
///
/// # Safety
/// `report` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn vr_report_sample_count(report: *const VrReport) -> usize {
    report_ref(report).map_or(0, |r| r.overall.count)
}

/// Samples that were answered but never judged correct; 0 for NULL.
///
/// # Safety
/// `report` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn vr_report_unresolved(report: *const VrReport) -> usize {
    report_ref(report).map_or(0, |r| r.unresolved)
}

/// Samples that failed before producing an answer; 0 for NULL.
///
/// # Safety
/// `report` must be NULL or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn vr_report_stage_failures(report: *const VrReport) -> usize {
    report_ref(report).map_or(0, |r| r.stage_failures)
}

/// Overall accuracy as the percentage string written to the report (for
/// example "80.0"). Writes NULL when the report holds no samples.
///
/// # Safety
/// `report` must be a live report handle; `out` must point to a `char *`.
#[no_mangle]
pub unsafe extern "C" fn vr_report_accuracy(report: *const VrReport, out: *mut *mut c_char) -> VrStatus {
    guard(|| {
        let r = report_ref(report).ok_or_else(|| Failure(VrStatus::NullArgument, "report is NULL".into()))?;
        let out = out_arg(out, "out")?;
        *out = match &r.overall.accuracy {
            Some(a) => into_c_string(a.clone())?,
            None => ptr::null_mut(),
        };
        Ok(())
    })
}

/// The full report as JSON, identical to report.json minus the trailing
/// newline.
///
/// # Safety
/// `report` must be a live report handle; `out` must point to a `char *`.
#[no_mangle]
pub unsafe extern "C" fn vr_report_to_json(report: *const VrReport, out: *mut *mut c_char) -> VrStatus {
    guard(|| {
        let r = report_ref(report).ok_or_else(|| Failure(VrStatus::NullArgument, "report is NULL".into()))?;
        let out = out_arg(out, "out")?;
        let json = serde_json::to_string_pretty(r).map_err(|e| Failure(VrStatus::Runtime, e.to_string()))?;
        *out = into_c_string(json)?;
        Ok(())
    })
}

/// Releases a report. NULL is ignored.
///
/// # Safety
/// `report` must be NULL or a report handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vr_report_free(report: *mut VrReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
