//! C ABI over the chunkcount library.
//!
//! Objects cross the boundary as opaque handles created by `*_load`/`*_run`
//! style functions and released with the matching `*_free`. Every function
//! returns a [`ChunkcountStatus`]; on failure a message describing the error
//! is available from [`chunkcount_last_error`] on the same thread. Strings
//! returned through out-parameters are owned by the caller and released with
//! [`chunkcount_string_free`].
//!
//! Panics never unwind into C; they surface as `CHUNKCOUNT_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use chunkcount::assignment::{solve_assignment, AssignmentError, CostMatrix};
use chunkcount::config_io::{self, ConfigError, SceneConfig};
use chunkcount::orchestrator::{self, CountReport, OrchestratorError, PipelineOptions};
use chunkcount::tracker::Detection;

/// Result of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkcountStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// An argument was out of range or not valid UTF-8.
    InvalidArgument = 2,
    /// A file could not be read or written.
    Io = 3,
    /// A document was malformed or violated a constraint.
    InvalidConfig = 4,
    /// Counting failed.
    Pipeline = 5,
    /// Internal error; the library state is unchanged.
    Panic = 6,
}

/// Validated scene configuration.
pub struct ChunkcountScene(SceneConfig);

/// Frame-ordered detection stream.
pub struct ChunkcountDetections(Vec<Detection>);

/// Result of a counting run.
pub struct ChunkcountReport(CountReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ChunkcountStatus, String);

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let status = match e {
            ConfigError::Io { .. } => ChunkcountStatus::Io,
            _ => ChunkcountStatus::InvalidConfig,
        };
        Failure(status, e.to_string())
    }
}

impl From<OrchestratorError> for Failure {
    fn from(e: OrchestratorError) -> Self {
        let status = match e {
            OrchestratorError::Invalid { .. } => ChunkcountStatus::InvalidArgument,
            _ => ChunkcountStatus::Pipeline,
        };
        Failure(status, e.to_string())
    }
}

impl From<AssignmentError> for Failure {
    fn from(e: AssignmentError) -> Self {
        Failure(ChunkcountStatus::InvalidArgument, e.to_string())
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ChunkcountStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            ChunkcountStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal error: {message}"));
            ChunkcountStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(ChunkcountStatus::NullArgument, format!("{name} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure(
            ChunkcountStatus::InvalidArgument,
            format!("{name} is not valid UTF-8"),
        )
    })
}

unsafe fn emit<T>(out: *mut *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message for the last failed call on this thread, or null after a
/// successful call. Valid until the next call into the library.
#[no_mangle]
pub extern "C" fn chunkcount_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn chunkcount_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads and validates a scene file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_scene_load(
    path: *const c_char,
    out: *mut *mut ChunkcountScene,
) -> ChunkcountStatus {
    guard(|| {
        let scene = config_io::load_scene(text(path, "path")?)?;
        emit(out, ChunkcountScene(scene), "out")
    })
}

/// Parses and validates a scene document held in memory.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_scene_from_json(
    json: *const c_char,
    out: *mut *mut ChunkcountScene,
) -> ChunkcountStatus {
    guard(|| {
        let scene = SceneConfig::from_json_str(text(json, "json")?, "<memory>")?;
        emit(out, ChunkcountScene(scene), "out")
    })
}

/// Canonical JSON document for the scene.
///
/// # Safety
/// `scene` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_scene_to_json(
    scene: *const ChunkcountScene,
    out: *mut *mut c_char,
) -> ChunkcountStatus {
    guard(|| {
        let scene = borrow(scene, "scene")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = owned_string(scene.0.to_canonical_json());
        Ok(())
    })
}

/// # Safety
/// `scene` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_scene_free(scene: *mut ChunkcountScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Reads a JSON Lines detection file, ordered by frame.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_detections_read(
    path: *const c_char,
    out: *mut *mut ChunkcountDetections,
) -> ChunkcountStatus {
    guard(|| {
        let dets = config_io::read_detections(text(path, "path")?)?;
        emit(out, ChunkcountDetections(dets), "out")
    })
}

/// Parses JSON Lines detections held in memory.
///
/// # Safety
/// `jsonl` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_detections_parse(
    jsonl: *const c_char,
    out: *mut *mut ChunkcountDetections,
) -> ChunkcountStatus {
    guard(|| {
        let dets = config_io::parse_detections(text(jsonl, "jsonl")?.as_bytes())?;
        emit(out, ChunkcountDetections(dets), "out")
    })
}

/// Number of detections in the stream.
///
/// # Safety
/// `dets` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_detections_len(
    dets: *const ChunkcountDetections,
    out: *mut usize,
) -> ChunkcountStatus {
    guard(|| {
        let dets = borrow(dets, "detections")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = dets.0.len();
        Ok(())
    })
}

/// # Safety
/// `dets` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_detections_free(dets: *mut ChunkcountDetections) {
    if !dets.is_null() {
        drop(Box::from_raw(dets));
    }
}

/// Counts with `chunks` chunks on `workers` threads. `total_frames` of 0
/// means one past the last detection frame.
///
/// # Safety
/// `scene` and `dets` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_run(
    scene: *const ChunkcountScene,
    dets: *const ChunkcountDetections,
    chunks: usize,
    workers: usize,
    dedup: bool,
    total_frames: u64,
    out: *mut *mut ChunkcountReport,
) -> ChunkcountStatus {
    guard(|| {
        let scene = borrow(scene, "scene")?;
        let dets = borrow(dets, "detections")?;
        let opts = PipelineOptions {
            workers,
            dedup,
            total_frames: (total_frames > 0).then_some(total_frames),
            ..PipelineOptions::new(chunks)
        };
        let report = orchestrator::run_pipeline(&dets.0, &scene.0, &opts)?;
        emit(out, ChunkcountReport(report), "out")
    })
}

/// Single-pass reference count.
///
/// # Safety
/// `scene` and `dets` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_run_single(
    scene: *const ChunkcountScene,
    dets: *const ChunkcountDetections,
    total_frames: u64,
    out: *mut *mut ChunkcountReport,
) -> ChunkcountStatus {
    guard(|| {
        let scene = borrow(scene, "scene")?;
        let dets = borrow(dets, "detections")?;
        let opts = PipelineOptions {
            total_frames: (total_frames > 0).then_some(total_frames),
            ..PipelineOptions::new(1)
        };
        let report = orchestrator::run_single(&dets.0, &scene.0, &opts)?;
        emit(out, ChunkcountReport(report), "out")
    })
}

/// Total vehicle count of the run.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_report_total(
    report: *const ChunkcountReport,
    out: *mut u64,
) -> ChunkcountStatus {
    guard(|| {
        let report = borrow(report, "report")?;
        *out.as_mut().ok_or_else(|| null("out"))? = report.0.total;
        Ok(())
    })
}

/// Counted vehicles of chunk `index`.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_report_chunk_counted(
    report: *const ChunkcountReport,
    index: usize,
    out: *mut u64,
) -> ChunkcountStatus {
    guard(|| {
        let report = borrow(report, "report")?;
        let chunk = report.0.per_chunk.get(index).ok_or_else(|| {
            Failure(
                ChunkcountStatus::InvalidArgument,
                format!(
                    "chunk {index} out of range ({} chunks)",
                    report.0.per_chunk.len()
                ),
            )
        })?;
        *out.as_mut().ok_or_else(|| null("out"))? = chunk.counted;
        Ok(())
    })
}

/// Canonical one-line JSON form of the report, newline-terminated.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_report_to_json(
    report: *const ChunkcountReport,
    out: *mut *mut c_char,
) -> ChunkcountStatus {
    guard(|| {
        let report = borrow(report, "report")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = owned_string(report.0.to_canonical_line());
        Ok(())
    })
}

/// Appends the report to a JSON Lines results store.
///
/// # Safety
/// `store` must be a NUL-terminated string; `report` a live handle.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_report_append(
    store: *const c_char,
    report: *const ChunkcountReport,
) -> ChunkcountStatus {
    guard(|| {
        let report = borrow(report, "report")?;
        config_io::append_report(text(store, "store")?, &report.0)?;
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_report_free(report: *mut ChunkcountReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Minimum-cost assignment over a row-major `rows x cols` matrix. Entries
/// above `forbid_threshold` are never paired (pass infinity to allow all).
/// Writes the matched column of each row to `row_to_col`, or -1.
///
/// # Safety
/// `costs` must hold `rows * cols` values and `row_to_col` room for `rows`.
#[no_mangle]
pub unsafe extern "C" fn chunkcount_solve_assignment(
    costs: *const f64,
    rows: usize,
    cols: usize,
    forbid_threshold: f64,
    row_to_col: *mut i64,
) -> ChunkcountStatus {
    guard(|| {
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(ChunkcountStatus::InvalidArgument, "matrix too large".into()))?;
        let values = if n == 0 {
            Vec::new()
        } else if costs.is_null() {
            return Err(null("costs"));
        } else {
            std::slice::from_raw_parts(costs, n).to_vec()
        };
        let matrix = if n == 0 {
            CostMatrix::empty(rows, cols)
        } else {
            CostMatrix::new(rows, cols, values, forbid_threshold)?
        };
        if rows == 0 {
            return Ok(());
        }
        if row_to_col.is_null() {
            return Err(null("row_to_col"));
        }
        let out = std::slice::from_raw_parts_mut(row_to_col, rows);
        out.fill(-1);
        for (r, c) in solve_assignment(&matrix).pairs {
            out[r] = c as i64;
        }
        Ok(())
    })
}
