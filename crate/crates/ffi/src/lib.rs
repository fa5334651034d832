//! C ABI over the `dcnv` library.
//!
//! Every fallible function returns a [`DcnvStatus`]; on failure a message is
//! kept per thread and can be read with [`dcnv_last_error`]. Models are
//! opaque handles created by [`dcnv_model_load`] and released with
//! [`dcnv_model_free`]. Image buffers are row-major `f64` in
//! channel, row, column order.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use dcnv::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use dcnv::data::ImageSource;
use dcnv::metrics::average_precision;
use dcnv::network::Network;
use dcnv::video::{predict_frames, Frame, Split, VideoRecord};
use dcnv::{Error, Tensor};

/// Result codes shared by every function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DcnvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Incompatible = 5,
    Shape = 6,
    Undefined = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// A loaded network (architecture plus parameters).
pub struct DcnvModel {
    ckpt: Checkpoint,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> DcnvStatus {
    match e {
        Error::Io { .. } => DcnvStatus::Io,
        Error::Format(_) | Error::Parse { .. } | Error::Validation { .. } => DcnvStatus::Format,
        Error::Incompatible { .. } => DcnvStatus::Incompatible,
        Error::InvalidShape(_) | Error::Shape(_) => DcnvStatus::Shape,
        Error::UndefinedAp | Error::EmptyVideo(_) => DcnvStatus::Undefined,
        _ => DcnvStatus::InvalidArgument,
    }
}

struct Fail(DcnvStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DcnvStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DcnvStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            DcnvStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(DcnvStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(DcnvStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(Path::new(s))
}

unsafe fn model_arg<'a>(m: *const DcnvModel) -> Result<&'a DcnvModel, Fail> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn head_arg(m: &DcnvModel, head: usize) -> Result<usize, Fail> {
    if head < m.ckpt.spec.heads.len() {
        Ok(head)
    } else {
        Err(Fail(
            DcnvStatus::InvalidArgument,
            format!("head {head} out of range ({} heads)", m.ckpt.spec.heads.len()),
        ))
    }
}

unsafe fn write_out(scores: &[f64], out: *mut f64, out_len: usize) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if out_len < scores.len() {
        return Err(Fail(
            DcnvStatus::BufferTooSmall,
            format!("output holds {out_len} scores, {} needed", scores.len()),
        ));
    }
    ptr::copy_nonoverlapping(scores.as_ptr(), out, scores.len());
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dcnv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dcnv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Load a checkpoint file into a new model handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dcnv_model_load(path: *const c_char, out: *mut *mut DcnvModel) -> DcnvStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let ckpt = load_checkpoint(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(DcnvModel { ckpt }));
        Ok(())
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`dcnv_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dcnv_model_free(model: *mut DcnvModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Write the model back to a checkpoint file.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dcnv_model_save(model: *const DcnvModel, path: *const c_char) -> DcnvStatus {
    guard(|| {
        let m = model_arg(model)?;
        save_checkpoint(&m.ckpt.spec, &m.ckpt.params, path_arg(path)?)?;
        Ok(())
    })
}

/// Input channels, stored image side and crop side of the model.
///
/// # Safety
/// `model` must be a live handle; output pointers must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn dcnv_model_input(
    model: *const DcnvModel,
    channels: *mut usize,
    resolution: *mut usize,
    crop: *mut usize,
) -> DcnvStatus {
    guard(|| {
        let s = &model_arg(model)?.ckpt.spec;
        for (p, v) in [(channels, s.input_channels), (resolution, s.input_resolution), (crop, s.crop_resolution)] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Number of output heads.
///
/// # Safety
/// `model` must be a live handle and `count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dcnv_model_head_count(model: *const DcnvModel, count: *mut usize) -> DcnvStatus {
    guard(|| {
        let m = model_arg(model)?;
        *count.as_mut().ok_or_else(|| null("count"))? = m.ckpt.spec.heads.len();
        Ok(())
    })
}

/// Index of the head called `name`.
///
/// # Safety
/// `model` must be a live handle, `name` NUL-terminated, `index` valid.
#[no_mangle]
pub unsafe extern "C" fn dcnv_model_head_index(
    model: *const DcnvModel,
    name: *const c_char,
    index: *mut usize,
) -> DcnvStatus {
    guard(|| {
        let m = model_arg(model)?;
        if name.is_null() {
            return Err(null("name"));
        }
        let name = CStr::from_ptr(name).to_string_lossy();
        let i = m
            .ckpt
            .spec
            .head_index(&name)
            .ok_or_else(|| Fail(DcnvStatus::InvalidArgument, format!("no head named {name:?}")))?;
        *index.as_mut().ok_or_else(|| null("index"))? = i;
        Ok(())
    })
}

/// Class count of one head; also the score buffer length it needs.
///
/// # Safety
/// `model` must be a live handle and `count` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dcnv_model_class_count(
    model: *const DcnvModel,
    head: usize,
    count: *mut usize,
) -> DcnvStatus {
    guard(|| {
        let m = model_arg(model)?;
        let h = head_arg(m, head)?;
        *count.as_mut().ok_or_else(|| null("count"))? = m.ckpt.spec.heads[h].class_count;
        Ok(())
    })
}

/// Eval-mode scores of one crop-sized image (`channels * crop * crop`
/// values): softmax probabilities or per-class sigmoids.
///
/// # Safety
/// `image` must hold `image_len` values and `out` `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn dcnv_model_predict(
    model: *const DcnvModel,
    head: usize,
    image: *const f64,
    image_len: usize,
    out: *mut f64,
    out_len: usize,
) -> DcnvStatus {
    guard(|| {
        let m = model_arg(model)?;
        let h = head_arg(m, head)?;
        let shape = m.ckpt.spec.input_shape();
        let data = slice_arg(image, image_len, "image")?;
        let img = Tensor::from_vec(&shape, data.to_vec())?;
        let net = Network::new(&m.ckpt.spec, &m.ckpt.params)?;
        write_out(&net.predict(h, &img)?, out, out_len)
    })
}

/// Late-fused video scores: the mean of the center-crop scores of
/// `frame_count` stored-resolution frames (`channels * resolution *
/// resolution` values each, back to back).
///
/// # Safety
/// `frames` must hold `frame_count` frames and `out` `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn dcnv_model_predict_video(
    model: *const DcnvModel,
    head: usize,
    frames: *const f64,
    frame_count: usize,
    out: *mut f64,
    out_len: usize,
) -> DcnvStatus {
    guard(|| {
        let m = model_arg(model)?;
        let h = head_arg(m, head)?;
        let s = &m.ckpt.spec;
        let shape = [s.input_channels, s.input_resolution, s.input_resolution];
        let per = shape.iter().product::<usize>();
        let len = per
            .checked_mul(frame_count)
            .ok_or_else(|| Fail(DcnvStatus::InvalidArgument, "frame count overflows".into()))?;
        let data = slice_arg(frames, len, "frames")?;
        let frames = data
            .chunks(per.max(1))
            .enumerate()
            .map(|(i, c)| {
                Ok(Frame {
                    timestamp: i as f64,
                    source: ImageSource::Memory(Arc::new(Tensor::from_vec(&shape, c.to_vec())?)),
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let video = VideoRecord::new("ffi", frames, Vec::new(), Split::Test, None)?;
        let net = Network::new(s, &m.ckpt.params)?;
        let all: Vec<usize> = (0..frame_count).collect();
        write_out(&predict_frames(&net, h, &video, &all)?.scores, out, out_len)
    })
}

/// Average precision of one ranked list (`relevant[i]` non-zero marks a
/// positive). Returns `DcnvStatus::Undefined` when there are no positives.
///
/// # Safety
/// `scores` and `relevant` must hold `n` values; `ap` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dcnv_average_precision(
    scores: *const f64,
    relevant: *const u8,
    n: usize,
    ap: *mut f64,
) -> DcnvStatus {
    guard(|| {
        let s = slice_arg(scores, n, "scores")?;
        let r: Vec<bool> = slice_arg(relevant, n, "relevant")?.iter().map(|&b| b != 0).collect();
        let v = average_precision(s, &r)?;
        *ap.as_mut().ok_or_else(|| null("ap"))? = v;
        Ok(())
    })
}

/// Run the finite-difference gradient suite; `passed` receives 1 if every
/// check is within tolerance, else 0.
///
/// # Safety
/// `passed` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dcnv_gradcheck(seed: u64, passed: *mut i32) -> DcnvStatus {
    guard(|| {
        let results = dcnv::layers::gradcheck::run_suite(seed)?;
        *passed.as_mut().ok_or_else(|| null("passed"))? = results.iter().all(|r| r.passed()) as i32;
        Ok(())
    })
}
