//! C ABI for gistcast.
//!
//! Every fallible function returns a [`GcStatus`]; on failure a message for
//! the calling thread is available from [`gc_last_error`]. Objects are
//! opaque handles created by `*_read`/`*_load`/`*_new` and released with the
//! matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gistcast::embedding::{read_table, write_table, EmbeddingTable};
use gistcast::error::Error;
use gistcast::gist::{normalize_predictions, Normalization};
use gistcast::model::{forward_rows, Checkpoint};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    BadMagic = 6,
    DimMismatch = 7,
    TruncatedPayload = 8,
    IdManifest = 9,
    MissingId = 10,
    Shape = 11,
    NonFinite = 12,
    InvalidArgument = 13,
    BufferTooSmall = 14,
    Panic = 15,
    Other = 16,
}

/// Normalization applied by [`gc_normalize_predictions`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GcNormalization {
    /// Maps into [-1, 1] with the midpoint of the range at 0.
    ZeroCentered = 0,
    /// Maps into [0, 1].
    Unit = 1,
}

/// Opaque sentence embedding table.
pub struct GcEmbeddingTable(EmbeddingTable);

/// Opaque trained model.
pub struct GcCheckpoint(Checkpoint);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GcStatus {
    match e {
        Error::Io { .. } => GcStatus::Io,
        Error::Parse { .. } | Error::Json(_) => GcStatus::Parse,
        Error::Validation(_) => GcStatus::Validation,
        Error::BadMagic(_) => GcStatus::BadMagic,
        Error::DimMismatch { .. } => GcStatus::DimMismatch,
        Error::TruncatedPayload(_) => GcStatus::TruncatedPayload,
        Error::IdManifest(_) => GcStatus::IdManifest,
        Error::MissingId(_) => GcStatus::MissingId,
        Error::Shape(_) => GcStatus::Shape,
        Error::NonFinite(_) => GcStatus::NonFinite,
        Error::InvalidArgument(_) => GcStatus::InvalidArgument,
        _ => GcStatus::Other,
    }
}

struct Fail(GcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording any error or panic for [`gc_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GcStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GcStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(GcStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Fail(GcStatus::InvalidUtf8, "path is not valid UTF-8".into()))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(GcStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next gistcast call on the same thread.
#[no_mangle]
pub extern "C" fn gc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Reads an embedding table and its id manifest. `expected_dim` of 0
/// accepts any width.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gc_embedding_table_read(
    path: *const c_char,
    expected_dim: usize,
    out: *mut *mut GcEmbeddingTable,
) -> GcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        let table = read_table(&path, (expected_dim > 0).then_some(expected_dim))?;
        *out = Box::into_raw(Box::new(GcEmbeddingTable(table)));
        Ok(())
    })
}

/// Builds a table from `count` ids and a row-major `count x dim` buffer.
///
/// # Safety
/// `ids` must point to `count` NUL-terminated strings and `data` to
/// `count * dim` floats.
#[no_mangle]
pub unsafe extern "C" fn gc_embedding_table_new(
    dim: usize,
    ids: *const *const c_char,
    data: *const f32,
    count: usize,
    out: *mut *mut GcEmbeddingTable,
) -> GcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if count > 0 && (ids.is_null() || data.is_null()) {
            return Err(null("ids or data"));
        }
        let names = (0..count)
            .map(|i| str_arg(*ids.add(i), "id").map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let values = if count == 0 { Vec::new() } else { std::slice::from_raw_parts(data, count * dim).to_vec() };
        let table = EmbeddingTable::new(dim, names, values)?;
        *out = Box::into_raw(Box::new(GcEmbeddingTable(table)));
        Ok(())
    })
}

/// Writes the table and its id manifest atomically.
///
/// # Safety
/// `table` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gc_embedding_table_write(table: *const GcEmbeddingTable, path: *const c_char) -> GcStatus {
    guard(|| {
        let t = table.as_ref().ok_or_else(|| null("table"))?;
        write_table(&t.0, &path_arg(path)?)?;
        Ok(())
    })
}

/// Row width, or 0 for a NULL handle.
///
/// # Safety
/// `table` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn gc_embedding_table_dim(table: *const GcEmbeddingTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.dim())
}

/// Number of rows, or 0 for a NULL handle.
///
/// # Safety
/// `table` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn gc_embedding_table_len(table: *const GcEmbeddingTable) -> usize {
    table.as_ref().map_or(0, |t| t.0.len())
}

/// Copies the vector for sentence `id` into `buf`, which holds `buf_len`
/// floats.
///
/// # Safety
/// `buf` must be writable for `buf_len` floats.
#[no_mangle]
pub unsafe extern "C" fn gc_embedding_table_get(
    table: *const GcEmbeddingTable,
    id: *const c_char,
    buf: *mut f32,
    buf_len: usize,
) -> GcStatus {
    guard(|| {
        let t = table.as_ref().ok_or_else(|| null("table"))?;
        let id = str_arg(id, "id")?;
        let row = t.0.get(id).ok_or_else(|| Fail(GcStatus::MissingId, format!("missing sentence id {id}")))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        if buf_len < row.len() {
            return Err(Fail(GcStatus::BufferTooSmall, format!("need {} floats, got {buf_len}", row.len())));
        }
        std::slice::from_raw_parts_mut(buf, row.len()).copy_from_slice(row);
        Ok(())
    })
}

/// # Safety
/// `table` must be NULL or come from this library, and is not used again.
#[no_mangle]
pub unsafe extern "C" fn gc_embedding_table_free(table: *mut GcEmbeddingTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Loads a checkpoint written by `gistcast train`.
///
/// # Safety
/// `path` must be NUL-terminated and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gc_checkpoint_load(path: *const c_char, out: *mut *mut GcCheckpoint) -> GcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ck = Checkpoint::load(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(GcCheckpoint(ck)));
        Ok(())
    })
}

/// Input embedding width, or 0 for a NULL handle.
///
/// # Safety
/// `ckpt` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn gc_checkpoint_dim(ckpt: *const GcCheckpoint) -> usize {
    ckpt.as_ref().map_or(0, |c| c.0.params.config.d)
}

/// Scores one collection of `m` pseudo-article embeddings (`m x d`,
/// row-major). Writes fci, food price and social-event predictions in
/// target units to `preds[3]` and, when `attn` is not NULL, the `m`
/// attention weights.
///
/// # Safety
/// `data` must hold `m * d` doubles, `preds` 3 and `attn` (if set) `m`.
#[no_mangle]
pub unsafe extern "C" fn gc_checkpoint_forward(
    ckpt: *const GcCheckpoint,
    data: *const f64,
    m: usize,
    d: usize,
    preds: *mut f64,
    attn: *mut f64,
) -> GcStatus {
    guard(|| {
        let c = ckpt.as_ref().ok_or_else(|| null("checkpoint"))?;
        if data.is_null() || preds.is_null() {
            return Err(null("data or preds"));
        }
        if m == 0 || d == 0 {
            return Err(Fail(GcStatus::InvalidArgument, "m and d must be >= 1".into()));
        }
        let rows = std::slice::from_raw_parts(data, m * d);
        let trace = forward_rows(&c.0.params, rows, d)?;
        let out = c.0.scaler.unscale(&trace.preds);
        std::slice::from_raw_parts_mut(preds, 3).copy_from_slice(&out);
        if !attn.is_null() {
            std::slice::from_raw_parts_mut(attn, m).copy_from_slice(&trace.attn_w);
        }
        Ok(())
    })
}

/// # Safety
/// `ckpt` must be NULL or come from this library, and is not used again.
#[no_mangle]
pub unsafe extern "C" fn gc_checkpoint_free(ckpt: *mut GcCheckpoint) {
    if !ckpt.is_null() {
        drop(Box::from_raw(ckpt));
    }
}

/// Min-max normalizes `n` predictions into `out`. A constant input maps to
/// the centre of the target range.
///
/// # Safety
/// `preds` and `out` must each hold `n` doubles; they may alias.
#[no_mangle]
pub unsafe extern "C" fn gc_normalize_predictions(
    preds: *const f64,
    n: usize,
    mode: GcNormalization,
    out: *mut f64,
) -> GcStatus {
    guard(|| {
        if n == 0 {
            return Ok(());
        }
        if preds.is_null() || out.is_null() {
            return Err(null("preds or out"));
        }
        let input = std::slice::from_raw_parts(preds, n).to_vec();
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Fail(GcStatus::NonFinite, "non-finite prediction".into()));
        }
        let mode = match mode {
            GcNormalization::ZeroCentered => Normalization::ZeroCentered,
            GcNormalization::Unit => Normalization::Unit,
        };
        let norm = normalize_predictions(&input, mode);
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&norm);
        Ok(())
    })
}
