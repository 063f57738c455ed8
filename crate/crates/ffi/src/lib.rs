//! C ABI for `posthoc-ood`.
//!
//! Matrices and heads cross the boundary as opaque handles created by the
//! `*_new` / `*_load` functions and released with the matching `*_free`.
//! Every fallible call returns an [`OodStatus`]; on failure a message for the
//! calling thread is available from [`ood_last_error_message`] until the next
//! failing call on that thread. Outputs are written only on success.
//!
//! Handles are immutable after creation, so sharing one across threads for
//! concurrent reads is fine.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use posthoc_ood::{
    apply_react, auroc, calibrate_threshold, classify, compute_logits, coverage_fraction,
    ensemble_logits, fpr_at_tpr, msp_score, predict_class, ClassifierHead, Decision, Error,
    FeatureMatrix, LogitMatrix, ScoreVector,
};

/// Clamp threshold tuned for the EVA-CLIP giant ImageNet-1k head.
pub const OOD_EVA_CLIP_CLAMP: f32 = -0.768_535_85;
/// Softmax temperature paired with [`OOD_EVA_CLIP_CLAMP`].
pub const OOD_DEFAULT_TEMPERATURE: f32 = 1.1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OodStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Io = 4,
    Format = 5,
    NonFinite = 6,
    Empty = 7,
    BufferTooSmall = 8,
    Panic = 99,
}

/// Opaque dense `f32` matrix: features or logits.
pub struct OodMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

/// Opaque classifier head.
pub struct OodHead(ClassifierHead);

impl OodMatrix {
    fn features(&self) -> Result<FeatureMatrix, Error> {
        FeatureMatrix::new(self.rows, self.cols, self.values.clone())
    }

    fn logits(&self) -> Result<LogitMatrix, Error> {
        LogitMatrix::new(self.rows, self.cols, self.values.clone())
    }

    fn from_matrix<K>(m: posthoc_ood::tensor::Matrix<K>) -> Self {
        OodMatrix {
            rows: m.rows(),
            cols: m.cols(),
            values: m.into_values(),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> OodStatus {
    match err {
        Error::Io { .. } | Error::Json { .. } => OodStatus::Io,
        Error::BadMagic(_)
        | Error::UnsupportedVersion(_)
        | Error::UnsupportedDtype(_)
        | Error::UnsupportedRank(_)
        | Error::Truncated { .. }
        | Error::TrailingBytes(_)
        | Error::SizeOverflow
        | Error::ZeroDimension { .. }
        | Error::WrongKind { .. } => OodStatus::Format,
        Error::NonFinite { .. } => OodStatus::NonFinite,
        Error::ShapeMismatch { .. } | Error::DimensionMismatch(_) => OodStatus::DimensionMismatch,
        Error::Empty(_) => OodStatus::Empty,
        Error::InvalidArgument(_) | Error::LabelOutOfRange { .. } => OodStatus::InvalidArgument,
    }
}

struct Failure(OodStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(OodStatus::NullPointer, format!("{what} is NULL"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> OodStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OodStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            OodStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn input_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output_slice<'a, T>(p: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(Failure(
            OodStatus::BufferTooSmall,
            format!("{what} holds {len} elements, {need} needed"),
        ));
    }
    Ok(slice::from_raw_parts_mut(p, need))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(OodStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failing call on this thread, or NULL. The pointer is
/// owned by the library and valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn ood_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Copies `rows * cols` row-major values into a new matrix.
///
/// # Safety
/// `values` must point to `rows * cols` readable floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ood_matrix_new(
    rows: usize,
    cols: usize,
    values: *const f32,
    out: *mut *mut OodMatrix,
) -> OodStatus {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure(OodStatus::InvalidArgument, "rows * cols overflows".into()))?;
        let data = input_slice(values, len, "values")?.to_vec();
        let m = FeatureMatrix::new(rows, cols, data)?;
        put(out, OodMatrix::from_matrix(m), "out")
    })
}

/// Loads a 2-D `f32` `.oodt` file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ood_matrix_load(path: *const c_char, out: *mut *mut OodMatrix) -> OodStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        put(out, OodMatrix::from_matrix(FeatureMatrix::load(path)?), "out")
    })
}

/// Writes the matrix as a 2-D `f32` `.oodt` file.
///
/// # Safety
/// `matrix` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ood_matrix_save(matrix: *const OodMatrix, path: *const c_char) -> OodStatus {
    guard(|| {
        let m = borrow(matrix, "matrix")?;
        let path = path_arg(path, "path")?;
        m.features()?.save(path)?;
        Ok(())
    })
}

/// # Safety
/// `matrix` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ood_matrix_free(matrix: *mut OodMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Row count, or 0 for NULL.
///
/// # Safety
/// `matrix` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ood_matrix_rows(matrix: *const OodMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.rows)
}

/// Column count, or 0 for NULL.
///
/// # Safety
/// `matrix` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ood_matrix_cols(matrix: *const OodMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.cols)
}

/// Copies the row-major values into `out`, which holds `len` floats.
///
/// # Safety
/// `matrix` must be a live handle; `out` must have room for `len` floats.
#[no_mangle]
pub unsafe extern "C" fn ood_matrix_copy_values(
    matrix: *const OodMatrix,
    out: *mut f32,
    len: usize,
) -> OodStatus {
    guard(|| {
        let m = borrow(matrix, "matrix")?;
        output_slice(out, len, m.values.len(), "out")?.copy_from_slice(&m.values);
        Ok(())
    })
}

/// Builds a head from row-major `feature_dim × classes` weights and a
/// length-`classes` bias.
///
/// # Safety
/// `weights` and `bias` must point to that many readable floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ood_head_new(
    feature_dim: usize,
    classes: usize,
    weights: *const f32,
    bias: *const f32,
    out: *mut *mut OodHead,
) -> OodStatus {
    guard(|| {
        let len = feature_dim
            .checked_mul(classes)
            .ok_or_else(|| Failure(OodStatus::InvalidArgument, "dims overflow".into()))?;
        let w = input_slice(weights, len, "weights")?.to_vec();
        let b = input_slice(bias, classes, "bias")?.to_vec();
        put(out, OodHead(ClassifierHead::new(feature_dim, classes, w, b)?), "out")
    })
}

/// # Safety
/// Both paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ood_head_load(
    weights_path: *const c_char,
    bias_path: *const c_char,
    out: *mut *mut OodHead,
) -> OodStatus {
    guard(|| {
        let w = path_arg(weights_path, "weights_path")?;
        let b = path_arg(bias_path, "bias_path")?;
        put(out, OodHead(ClassifierHead::load(w, b)?), "out")
    })
}

/// # Safety
/// `head` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ood_head_free(head: *mut OodHead) {
    if !head.is_null() {
        drop(Box::from_raw(head));
    }
}

/// Class count, or 0 for NULL.
///
/// # Safety
/// `head` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ood_head_classes(head: *const OodHead) -> usize {
    head.as_ref().map_or(0, |h| h.0.classes())
}

/// New matrix with every element replaced by `min(x, c)`.
///
/// # Safety
/// `features` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ood_react_apply(
    features: *const OodMatrix,
    c: f32,
    out: *mut *mut OodMatrix,
) -> OodStatus {
    guard(|| {
        let f = borrow(features, "features")?.features()?;
        put(out, OodMatrix::from_matrix(apply_react(&f, c)?), "out")
    })
}

/// Percentile `p` in (0, 100) of all activations, linear interpolation.
///
/// # Safety
/// `features` must be a live handle; `c_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ood_react_calibrate(
    features: *const OodMatrix,
    p: f64,
    c_out: *mut f32,
) -> OodStatus {
    guard(|| {
        let f = borrow(features, "features")?.features()?;
        let c = calibrate_threshold(&f, p)?;
        *c_out.as_mut().ok_or_else(|| null("c_out"))? = c;
        Ok(())
    })
}

/// Fraction of activations `<= c`.
///
/// # Safety
/// `features` must be a live handle; `fraction_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ood_coverage_fraction(
    features: *const OodMatrix,
    c: f32,
    fraction_out: *mut f64,
) -> OodStatus {
    guard(|| {
        let f = borrow(features, "features")?.features()?;
        *fraction_out.as_mut().ok_or_else(|| null("fraction_out"))? = coverage_fraction(&f, c);
        Ok(())
    })
}

/// `features × W + b`.
///
/// # Safety
/// `features` and `head` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ood_compute_logits(
    features: *const OodMatrix,
    head: *const OodHead,
    out: *mut *mut OodMatrix,
) -> OodStatus {
    guard(|| {
        let f = borrow(features, "features")?.features()?;
        let h = borrow(head, "head")?;
        put(out, OodMatrix::from_matrix(compute_logits(&f, &h.0)?), "out")
    })
}

/// Elementwise mean of `count` equally shaped logit matrices.
///
/// # Safety
/// `views` must point to `count` live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ood_ensemble_logits(
    views: *const *const OodMatrix,
    count: usize,
    out: *mut *mut OodMatrix,
) -> OodStatus {
    guard(|| {
        let handles = input_slice(views, count, "views")?;
        let mats = handles
            .iter()
            .map(|&h| borrow(h, "views[i]").and_then(|m| Ok(m.logits()?)))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&LogitMatrix> = mats.iter().collect();
        put(out, OodMatrix::from_matrix(ensemble_logits(&refs)?), "out")
    })
}

/// Temperature-scaled maximum softmax probability per row, written to
/// `scores_out` (room for `len` floats, at least the row count).
///
/// # Safety
/// `logits` must be a live handle; `scores_out` must have room for `len` floats.
#[no_mangle]
pub unsafe extern "C" fn ood_msp_score(
    logits: *const OodMatrix,
    temperature: f32,
    scores_out: *mut f32,
    len: usize,
) -> OodStatus {
    guard(|| {
        let l = borrow(logits, "logits")?.logits()?;
        let scores = msp_score(&l, temperature)?;
        output_slice(scores_out, len, scores.len(), "scores_out")?.copy_from_slice(scores.as_slice());
        Ok(())
    })
}

/// Row-wise arg-max (lowest index on ties) into `classes_out`.
///
/// # Safety
/// `logits` must be a live handle; `classes_out` must have room for `len` values.
#[no_mangle]
pub unsafe extern "C" fn ood_predict_class(
    logits: *const OodMatrix,
    classes_out: *mut u32,
    len: usize,
) -> OodStatus {
    guard(|| {
        let l = borrow(logits, "logits")?.logits()?;
        let pred = predict_class(&l);
        output_slice(classes_out, len, pred.len(), "classes_out")?.copy_from_slice(pred.as_slice());
        Ok(())
    })
}

/// Writes 1 (ID) where `score > tau` and 0 (OOD) otherwise.
///
/// # Safety
/// `scores` must point to `n` floats; `is_id_out` must have room for `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn ood_classify(
    scores: *const f32,
    n: usize,
    tau: f32,
    is_id_out: *mut u8,
) -> OodStatus {
    guard(|| {
        let s = ScoreVector::new(input_slice(scores, n, "scores")?.to_vec())?;
        let out = output_slice(is_id_out, n, n, "is_id_out")?;
        for (o, d) in out.iter_mut().zip(classify(&s, tau)) {
            *o = u8::from(d == Decision::Id);
        }
        Ok(())
    })
}

/// AUROC with ID as positives, ties counted as one half.
///
/// # Safety
/// `id` / `ood` must point to `n_id` / `n_ood` floats; `auroc_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ood_auroc(
    id: *const f32,
    n_id: usize,
    ood: *const f32,
    n_ood: usize,
    auroc_out: *mut f64,
) -> OodStatus {
    guard(|| {
        let a = input_slice(id, n_id, "id")?;
        let b = input_slice(ood, n_ood, "ood")?;
        let v = auroc(a, b)?;
        *auroc_out.as_mut().ok_or_else(|| null("auroc_out"))? = v;
        Ok(())
    })
}

/// FPR at the first observed ID-score threshold whose TPR reaches `tpr_target`.
///
/// # Safety
/// `id` / `ood` must point to `n_id` / `n_ood` floats; `fpr_out` and
/// `tau_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ood_fpr_at_tpr(
    id: *const f32,
    n_id: usize,
    ood: *const f32,
    n_ood: usize,
    tpr_target: f64,
    fpr_out: *mut f64,
    tau_out: *mut f32,
) -> OodStatus {
    guard(|| {
        let a = input_slice(id, n_id, "id")?;
        let b = input_slice(ood, n_ood, "ood")?;
        if fpr_out.is_null() {
            return Err(null("fpr_out"));
        }
        if tau_out.is_null() {
            return Err(null("tau_out"));
        }
        let op = fpr_at_tpr(a, b, tpr_target)?;
        *fpr_out = op.fpr;
        *tau_out = op.tau;
        Ok(())
    })
}
