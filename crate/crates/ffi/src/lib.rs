//! C ABI over the path-reasoning library. Handles are opaque boxed
//! pointers created and destroyed here; every fallible call returns a
//! [`CopathStatus`] and leaves a human-readable message readable via
//! [`copath_last_error_message`] on failure. Strings handed to the caller
//! are heap allocations that must go back through [`copath_string_free`].
//!
//! The generated header lives at `include/copath.h`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::io::sink;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use copath::assemble::assemble_answer;
use copath::dataset::{load_instances, save_instances, TaskInstance};
use copath::eval::{evaluate, report_to_json, EvalConfig};
use copath::learn::{load_checkpoint, save_checkpoint, train, LoadedCheckpoint, TrainConfig};
use copath::lexicon::{load_word_vectors, WordVectors};
use copath::reward::{rouge1, RougeVariant};
use copath::synth::{gen_tasks, synth_word_vectors, SynthConfig};
use copath::CopathError;

/// Outcome of a C API call. `COPATH_STATUS_OK` is zero; every other value
/// signals failure and leaves a message for `copath_last_error_message`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CopathStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    Utf8 = 2,
    /// Input values were malformed or inconsistent.
    InvalidInput = 3,
    /// A structured file or JSON document failed to parse.
    Parse = 4,
    /// Filesystem access failed.
    Io = 5,
    /// A non-finite value surfaced inside numeric code.
    Numeric = 6,
    /// A file carries a format version this build does not support.
    UnsupportedVersion = 7,
    /// The library panicked; state may be inconsistent.
    Panic = 8,
}

/// A trained model plus the vocabulary its embedding rows index.
pub struct CopathModel(LoadedCheckpoint);

/// An ordered list of reasoning tasks (two graphs, a query utterance, and
/// reference descriptions each).
pub struct CopathTasks(Vec<TaskInstance>);

/// Word vectors used to seed embedding tables.
pub struct CopathVectors(WordVectors);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let message = CString::new(msg)
        .unwrap_or_else(|_| CString::new("error message contained a NUL byte").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn fail(status: CopathStatus, msg: impl Into<String>) -> CopathStatus {
    set_last_error(msg.into());
    status
}

fn fail_from(err: CopathError) -> CopathStatus {
    let status = match &err {
        CopathError::InvalidInput(_) => CopathStatus::InvalidInput,
        CopathError::Parse { .. } => CopathStatus::Parse,
        CopathError::Numeric(_) => CopathStatus::Numeric,
        CopathError::Io { .. } => CopathStatus::Io,
        CopathError::Version { .. } => CopathStatus::UnsupportedVersion,
    };
    fail(status, err.to_string())
}

/// Run a call body behind a panic guard so unwinds never cross the ABI.
fn guarded<F: FnOnce() -> CopathStatus>(body: F) -> CopathStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(
            CopathStatus::Panic,
            "internal panic; the library state may be inconsistent",
        ),
    }
}

/// Read a required UTF-8 string argument.
///
/// # Safety
/// `ptr`, when non-null, must point to a NUL-terminated string.
unsafe fn required_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, CopathStatus> {
    if ptr.is_null() {
        return Err(fail(
            CopathStatus::NullPointer,
            format!("{what} pointer is null"),
        ));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(CopathStatus::Utf8, format!("{what} is not valid UTF-8")))
}

/// Borrow a handle argument.
///
/// # Safety
/// `ptr`, when non-null, must be a live handle of the right type.
unsafe fn required_ref<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, CopathStatus> {
    ptr.as_ref().ok_or_else(|| {
        fail(
            CopathStatus::NullPointer,
            format!("{what} handle is null"),
        )
    })
}

/// Check an out-pointer before computing the value it will receive.
fn required_out<T>(ptr: *mut T, what: &str) -> Result<(), CopathStatus> {
    if ptr.is_null() {
        Err(fail(
            CopathStatus::NullPointer,
            format!("{what} out-pointer is null"),
        ))
    } else {
        Ok(())
    }
}

/// Hand a freshly allocated string to the caller.
///
/// # Safety
/// `out` must be valid for a single pointer write.
unsafe fn give_string(out: *mut *mut c_char, value: String) -> CopathStatus {
    match CString::new(value) {
        Ok(c) => {
            *out = c.into_raw();
            CopathStatus::Ok
        }
        Err(_) => fail(
            CopathStatus::InvalidInput,
            "result contained an interior NUL byte",
        ),
    }
}

/// Library version as a static NUL-terminated string. Never null; do not
/// free.
#[no_mangle]
pub extern "C" fn copath_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on the calling thread, or null if
/// the last call succeeded. Valid until the next library call on the same
/// thread; do not free.
#[no_mangle]
pub extern "C" fn copath_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|m| m.as_ptr())
            .unwrap_or(std::ptr::null())
    })
}

/// Free a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must have been returned by a `copath_*` call that documents
/// `copath_string_free` as its deallocator, and not freed before.
#[no_mangle]
pub unsafe extern "C" fn copath_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Unigram-overlap score of `candidate` against `reference`, written to
/// `out_score`. `recall` selects recall instead of balanced F1.
///
/// # Safety
/// `candidate` and `reference` must be NUL-terminated strings; `out_score`
/// must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn copath_rouge1(
    candidate: *const c_char,
    reference: *const c_char,
    recall: bool,
    out_score: *mut f64,
) -> CopathStatus {
    guarded(|| {
        let candidate = match required_str(candidate, "candidate") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let reference = match required_str(reference, "reference") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(status) = required_out(out_score, "score") {
            return status;
        }
        let variant = if recall {
            RougeVariant::Recall
        } else {
            RougeVariant::F1
        };
        *out_score = rouge1(candidate, reference, variant);
        CopathStatus::Ok
    })
}

/// Join two serialized paths and a query utterance into one answer string.
/// The result goes to `out_answer`; free it with `copath_string_free`.
///
/// # Safety
/// The three inputs must be NUL-terminated strings; `out_answer` must be
/// valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn copath_assemble_answer(
    path_v: *const c_char,
    path_u: *const c_char,
    utterance: *const c_char,
    out_answer: *mut *mut c_char,
) -> CopathStatus {
    guarded(|| {
        let path_v = match required_str(path_v, "video path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let path_u = match required_str(path_u, "context path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let utterance = match required_str(utterance, "utterance") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(status) = required_out(out_answer, "answer") {
            return status;
        }
        give_string(out_answer, assemble_answer(path_v, path_u, utterance))
    })
}

/// Generate `count` synthetic tasks with a planted walk of `horizon` steps
/// through graphs of `nodes` entities and `branching` outgoing planted-or-
/// distractor edges per walk node. Instance seeds derive from `base_seed`.
/// The new handle goes to `out_tasks`; free it with `copath_tasks_free`.
///
/// # Safety
/// `out_tasks` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn copath_tasks_generate(
    nodes: usize,
    branching: usize,
    horizon: usize,
    base_seed: u64,
    count: usize,
    out_tasks: *mut *mut CopathTasks,
) -> CopathStatus {
    guarded(|| {
        if let Err(status) = required_out(out_tasks, "tasks") {
            return status;
        }
        let cfg = SynthConfig {
            nodes,
            branching,
            horizon,
        };
        match gen_tasks(&cfg, base_seed, count) {
            Ok(tasks) => {
                *out_tasks = Box::into_raw(Box::new(CopathTasks(tasks)));
                CopathStatus::Ok
            }
            Err(e) => fail_from(e),
        }
    })
}

/// Load tasks from a JSON-lines file written by `copath_tasks_save` (or
/// the CLI). Free the handle with `copath_tasks_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_tasks` must be valid for a
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn copath_tasks_load(
    path: *const c_char,
    out_tasks: *mut *mut CopathTasks,
) -> CopathStatus {
    guarded(|| {
        let path = match required_str(path, "path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(status) = required_out(out_tasks, "tasks") {
            return status;
        }
        match load_instances(Path::new(path)) {
            Ok(tasks) => {
                *out_tasks = Box::into_raw(Box::new(CopathTasks(tasks)));
                CopathStatus::Ok
            }
            Err(e) => fail_from(e),
        }
    })
}

/// Write tasks as one JSON object per line.
///
/// # Safety
/// `tasks` must be a live tasks handle; `path` must be a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn copath_tasks_save(
    tasks: *const CopathTasks,
    path: *const c_char,
) -> CopathStatus {
    guarded(|| {
        let tasks = match required_ref(tasks, "tasks") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let path = match required_str(path, "path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match save_instances(&tasks.0, Path::new(path)) {
            Ok(()) => CopathStatus::Ok,
            Err(e) => fail_from(e),
        }
    })
}

/// Number of tasks behind the handle, written to `out_len`.
///
/// # Safety
/// `tasks` must be a live tasks handle; `out_len` must be valid for a
/// write.
#[no_mangle]
pub unsafe extern "C" fn copath_tasks_len(
    tasks: *const CopathTasks,
    out_len: *mut usize,
) -> CopathStatus {
    guarded(|| {
        let tasks = match required_ref(tasks, "tasks") {
            Ok(t) => t,
            Err(status) => return status,
        };
        if let Err(status) = required_out(out_len, "length") {
            return status;
        }
        *out_len = tasks.0.len();
        CopathStatus::Ok
    })
}

/// Destroy a tasks handle. Null is a no-op.
///
/// # Safety
/// `tasks` must have come from a `copath_tasks_*` constructor and not be
/// freed twice.
#[no_mangle]
pub unsafe extern "C" fn copath_tasks_free(tasks: *mut CopathTasks) {
    if !tasks.is_null() {
        drop(Box::from_raw(tasks));
    }
}

/// Derive deterministic `dim`-dimensional word vectors covering every name
/// and reference token in `tasks`. Free the handle with
/// `copath_vectors_free`.
///
/// # Safety
/// `tasks` must be a live tasks handle; `out_vectors` must be valid for a
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn copath_vectors_synth(
    tasks: *const CopathTasks,
    dim: usize,
    out_vectors: *mut *mut CopathVectors,
) -> CopathStatus {
    guarded(|| {
        let tasks = match required_ref(tasks, "tasks") {
            Ok(t) => t,
            Err(status) => return status,
        };
        if let Err(status) = required_out(out_vectors, "vectors") {
            return status;
        }
        match synth_word_vectors(&tasks.0, dim) {
            Ok(vectors) => {
                *out_vectors = Box::into_raw(Box::new(CopathVectors(vectors)));
                CopathStatus::Ok
            }
            Err(e) => fail_from(e),
        }
    })
}

/// Load whitespace-separated word vectors (`token v1 v2 ...`, one per
/// line). Free the handle with `copath_vectors_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_vectors` must be valid for
/// a pointer write.
#[no_mangle]
pub unsafe extern "C" fn copath_vectors_load(
    path: *const c_char,
    out_vectors: *mut *mut CopathVectors,
) -> CopathStatus {
    guarded(|| {
        let path = match required_str(path, "path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(status) = required_out(out_vectors, "vectors") {
            return status;
        }
        match load_word_vectors(Path::new(path)) {
            Ok(vectors) => {
                *out_vectors = Box::into_raw(Box::new(CopathVectors(vectors)));
                CopathStatus::Ok
            }
            Err(e) => fail_from(e),
        }
    })
}

/// Destroy a vectors handle. Null is a no-op.
///
/// # Safety
/// `vectors` must have come from a `copath_vectors_*` constructor and not
/// be freed twice.
#[no_mangle]
pub unsafe extern "C" fn copath_vectors_free(vectors: *mut CopathVectors) {
    if !vectors.is_null() {
        drop(Box::from_raw(vectors));
    }
}

/// Train a model. `config_json` configures training (null or empty uses
/// defaults; unknown keys are rejected). The last `val_count` tasks become
/// the validation split. Free the handle with `copath_model_free`.
///
/// # Safety
/// `config_json`, when non-null, must be a NUL-terminated string; `tasks`
/// and `vectors` must be live handles; `out_model` must be valid for a
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn copath_train(
    config_json: *const c_char,
    tasks: *const CopathTasks,
    val_count: usize,
    vectors: *const CopathVectors,
    out_model: *mut *mut CopathModel,
) -> CopathStatus {
    guarded(|| {
        let config = if config_json.is_null() {
            TrainConfig::default()
        } else {
            let text = match required_str(config_json, "config JSON") {
                Ok(s) => s,
                Err(status) => return status,
            };
            if text.trim().is_empty() {
                TrainConfig::default()
            } else {
                match serde_json::from_str(text) {
                    Ok(config) => config,
                    Err(e) => return fail(CopathStatus::Parse, format!("config JSON: {e}")),
                }
            }
        };
        let tasks = match required_ref(tasks, "tasks") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let vectors = match required_ref(vectors, "vectors") {
            Ok(v) => v,
            Err(status) => return status,
        };
        if let Err(status) = required_out(out_model, "model") {
            return status;
        }
        if val_count >= tasks.0.len() {
            return fail(
                CopathStatus::InvalidInput,
                format!(
                    "validation split of {val_count} leaves no training tasks (have {})",
                    tasks.0.len()
                ),
            );
        }
        let split = tasks.0.len() - val_count;
        match train(
            &config,
            &tasks.0[..split],
            &tasks.0[split..],
            &vectors.0,
            &mut sink(),
        ) {
            Ok(out) => {
                let checkpoint = LoadedCheckpoint {
                    params: out.params,
                    vocab: out.vocab,
                    ablation: config.ablation,
                    config_hash: out.config_hash,
                };
                *out_model = Box::into_raw(Box::new(CopathModel(checkpoint)));
                CopathStatus::Ok
            }
            Err(e) => fail_from(e),
        }
    })
}

/// Load a model checkpoint. Free the handle with `copath_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_model` must be valid for a
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn copath_model_load(
    path: *const c_char,
    out_model: *mut *mut CopathModel,
) -> CopathStatus {
    guarded(|| {
        let path = match required_str(path, "path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        if let Err(status) = required_out(out_model, "model") {
            return status;
        }
        match load_checkpoint(Path::new(path)) {
            Ok(checkpoint) => {
                *out_model = Box::into_raw(Box::new(CopathModel(checkpoint)));
                CopathStatus::Ok
            }
            Err(e) => fail_from(e),
        }
    })
}

/// Write a model checkpoint. The same model always writes identical bytes.
///
/// # Safety
/// `model` must be a live model handle; `path` must be a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn copath_model_save(
    model: *const CopathModel,
    path: *const c_char,
) -> CopathStatus {
    guarded(|| {
        let model = match required_ref(model, "model") {
            Ok(m) => m,
            Err(status) => return status,
        };
        let path = match required_str(path, "path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match save_checkpoint(
            Path::new(path),
            &model.0.params,
            &model.0.vocab,
            model.0.ablation,
            &model.0.config_hash,
        ) {
            Ok(()) => CopathStatus::Ok,
            Err(e) => fail_from(e),
        }
    })
}

/// Total trainable parameter count, written to `out_count`.
///
/// # Safety
/// `model` must be a live model handle; `out_count` must be valid for a
/// write.
#[no_mangle]
pub unsafe extern "C" fn copath_model_param_count(
    model: *const CopathModel,
    out_count: *mut usize,
) -> CopathStatus {
    guarded(|| {
        let model = match required_ref(model, "model") {
            Ok(m) => m,
            Err(status) => return status,
        };
        if let Err(status) = required_out(out_count, "count") {
            return status;
        }
        *out_count = model.0.params.param_count();
        CopathStatus::Ok
    })
}

/// Hash of the training configuration that produced this model, written to
/// `out_hash`; free it with `copath_string_free`.
///
/// # Safety
/// `model` must be a live model handle; `out_hash` must be valid for a
/// pointer write.
#[no_mangle]
pub unsafe extern "C" fn copath_model_config_hash(
    model: *const CopathModel,
    out_hash: *mut *mut c_char,
) -> CopathStatus {
    guarded(|| {
        let model = match required_ref(model, "model") {
            Ok(m) => m,
            Err(status) => return status,
        };
        if let Err(status) = required_out(out_hash, "hash") {
            return status;
        }
        give_string(out_hash, model.0.config_hash.clone())
    })
}

/// Destroy a model handle. Null is a no-op.
///
/// # Safety
/// `model` must have come from a `copath_model_*` or `copath_train`
/// constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn copath_model_free(model: *mut CopathModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Greedily decode every task and write the evaluation report as a JSON
/// document to `out_json`; free it with `copath_string_free`. The model's
/// stored wiring decides which sides act. `with_oracle` additionally
/// brute-forces each instance's reward ceiling.
///
/// # Safety
/// `model`, `tasks`, and `vectors` must be live handles; `out_json` must
/// be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn copath_evaluate_json(
    model: *const CopathModel,
    tasks: *const CopathTasks,
    vectors: *const CopathVectors,
    horizon: usize,
    with_oracle: bool,
    out_json: *mut *mut c_char,
) -> CopathStatus {
    guarded(|| {
        let model = match required_ref(model, "model") {
            Ok(m) => m,
            Err(status) => return status,
        };
        let tasks = match required_ref(tasks, "tasks") {
            Ok(t) => t,
            Err(status) => return status,
        };
        let vectors = match required_ref(vectors, "vectors") {
            Ok(v) => v,
            Err(status) => return status,
        };
        if let Err(status) = required_out(out_json, "report") {
            return status;
        }
        let cfg = EvalConfig {
            horizon,
            oracle: with_oracle,
            ..EvalConfig::default()
        };
        let report = match evaluate(
            &model.0.params,
            &model.0.vocab,
            model.0.ablation,
            &model.0.config_hash,
            &tasks.0,
            &vectors.0,
            &cfg,
        ) {
            Ok(report) => report,
            Err(e) => return fail_from(e),
        };
        match report_to_json(&report) {
            Ok(json) => give_string(out_json, json),
            Err(e) => fail_from(e),
        }
    })
}
