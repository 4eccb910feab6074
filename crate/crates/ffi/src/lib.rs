//! C ABI over the `abexrat` core.
//!
//! Every function returns an [`AbxStatus`]; on failure a description is
//! available from [`abx_last_error_message`] on the same thread. Models are
//! opaque [`AbxModel`] handles released with [`abx_model_free`], and strings
//! handed out by this library are released with [`abx_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use abexrat::dataset::load_dataset;
use abexrat::embedder::mock_embed;
use abexrat::metrics::evaluate;
use abexrat::objective::focal_loss_batch;
use abexrat::rat::fgm_perturb;
use abexrat::trainer::train_run;
use abexrat::{AlphaMode, Error, FocalConfig, Model, TrainConfig};

/// Status codes. The nonzero values below 5 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbxStatus {
    Ok = 0,
    InvalidArgument = 1,
    Data = 2,
    Provider = 3,
    Numeric = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Opaque trained model.
pub struct AbxModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let text = message.into().replace('\0', "\\0");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = CString::new(text).ok());
}

enum Failure {
    Core(Error),
    Arg(&'static str),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> AbxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AbxStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            match e.exit_code() {
                3 => AbxStatus::Provider,
                4 => AbxStatus::Numeric,
                _ => AbxStatus::Data,
            }
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_last_error(msg);
            AbxStatus::InvalidArgument
        }
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("null pointer passed for `{name}`"));
            AbxStatus::NullPointer
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            AbxStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &'static str) -> FfiResult<*const T> {
    if p.is_null() {
        Err(Failure::Null(name))
    } else {
        Ok(p)
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &'static str) -> FfiResult<&'a str> {
    non_null(p, name)?;
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Arg("string argument is not valid UTF-8"))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &'static str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, name: &'static str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p as *const T, name)?;
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn model_ref<'a>(model: *const AbxModel) -> FfiResult<&'a Model> {
    non_null(model, "model")?;
    Ok(&(*model).inner)
}

fn into_c_string(text: String) -> FfiResult<*mut c_char> {
    CString::new(text)
        .map(CString::into_raw)
        .map_err(|_| Failure::Arg("string contains an interior NUL byte"))
}

unsafe fn emit_model(model: Model, out: *mut *mut AbxModel) {
    *out = Box::into_raw(Box::new(AbxModel { inner: model }));
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn abx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or NULL if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn abx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn abx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Load a model file written by `abexrat train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn abx_model_load(path: *const c_char, out: *mut *mut AbxModel) -> AbxStatus {
    guard(|| {
        non_null(out, "out")?;
        let model = Model::load(str_arg(path, "path")?)?;
        emit_model(model, out);
        Ok(())
    })
}

/// Parse a model from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn abx_model_from_json(json: *const c_char, out: *mut *mut AbxModel) -> AbxStatus {
    guard(|| {
        non_null(out, "out")?;
        let model = Model::from_json(str_arg(json, "json")?)?;
        emit_model(model, out);
        Ok(())
    })
}

/// Serialize a model to JSON. Free the result with [`abx_string_free`].
///
/// # Safety
/// `model` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn abx_model_to_json(model: *const AbxModel, out: *mut *mut c_char) -> AbxStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = into_c_string(model_ref(model)?.to_json()?)?;
        Ok(())
    })
}

/// Write a model file.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn abx_model_save(model: *const AbxModel, path: *const c_char) -> AbxStatus {
    guard(|| {
        model_ref(model)?.save(str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Release a model handle. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn abx_model_free(model: *mut AbxModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input dimension, hidden width and class count. Any out pointer may be NULL.
///
/// # Safety
/// `model` must be a live handle; non-NULL out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn abx_model_dims(
    model: *const AbxModel,
    d: *mut usize,
    h: *mut usize,
    classes: *mut usize,
) -> AbxStatus {
    guard(|| {
        let p = &model_ref(model)?.params;
        for (dst, v) in [(d, p.d), (h, p.h), (classes, p.c)] {
            if !dst.is_null() {
                *dst = v;
            }
        }
        Ok(())
    })
}

/// Label of class `index` as a new string; free with [`abx_string_free`].
///
/// # Safety
/// `model` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn abx_model_label(model: *const AbxModel, index: usize, out: *mut *mut c_char) -> AbxStatus {
    guard(|| {
        non_null(out, "out")?;
        let label = model_ref(model)?
            .labels
            .get(index)
            .ok_or(Failure::Arg("class index out of range"))?;
        *out = into_c_string(label.clone())?;
        Ok(())
    })
}

/// Predicted class index for one embedding of length `len`.
///
/// # Safety
/// `x` must point to `len` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn abx_model_predict(
    model: *const AbxModel,
    x: *const f64,
    len: usize,
    out: *mut usize,
) -> AbxStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = model_ref(model)?.params.predict(slice_arg(x, len, "x")?)?;
        Ok(())
    })
}

/// Class probabilities for one embedding; `out` must hold `out_len` = C doubles.
///
/// # Safety
/// `x` must point to `len` doubles and `out` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn abx_model_probabilities(
    model: *const AbxModel,
    x: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> AbxStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out_len != m.params.c {
            return Err(Failure::Arg("output length must equal the class count"));
        }
        let probs = m.params.probabilities(slice_arg(x, len, "x")?)?;
        out_slice(out, out_len, "out")?.copy_from_slice(&probs);
        Ok(())
    })
}

/// Evaluate on a JSONL dataset; writes the report JSON to `out` (free with [`abx_string_free`]).
///
/// # Safety
/// `model` must be a live handle, `dataset_path` a NUL-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn abx_model_evaluate(
    model: *const AbxModel,
    dataset_path: *const c_char,
    out: *mut *mut c_char,
) -> AbxStatus {
    guard(|| {
        non_null(out, "out")?;
        let ds = load_dataset(str_arg(dataset_path, "dataset_path")?)?;
        let report = evaluate(model_ref(model)?, &ds)?;
        *out = into_c_string(serde_json::to_string(&report).map_err(Error::from)?)?;
        Ok(())
    })
}

/// Train on JSONL train/val files. `config_json` may be NULL for defaults and
/// otherwise holds a training config document (missing fields take defaults).
///
/// # Safety
/// String arguments must be NUL-terminated (or NULL where allowed); `out` writable.
#[no_mangle]
pub unsafe extern "C" fn abx_train(
    train_path: *const c_char,
    val_path: *const c_char,
    config_json: *const c_char,
    out: *mut *mut AbxModel,
) -> AbxStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = if config_json.is_null() {
            TrainConfig::default()
        } else {
            serde_json::from_str(str_arg(config_json, "config_json")?)
                .map_err(|e| Error::Config(e.to_string()))?
        };
        let train = load_dataset(str_arg(train_path, "train_path")?)?;
        let val = load_dataset(str_arg(val_path, "val_path")?)?;
        let (model, _history) = train_run(&train, &val, &cfg)?;
        emit_model(model.quantized(), out);
        Ok(())
    })
}

/// FGM perturbation `epsilon · g / ‖g‖` of a length-`len` gradient (zero for a zero gradient).
///
/// # Safety
/// `grad` and `out` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn abx_fgm_perturb(grad: *const f64, len: usize, epsilon: f64, out: *mut f64) -> AbxStatus {
    guard(|| {
        let r = fgm_perturb(slice_arg(grad, len, "grad")?, epsilon)?;
        out_slice(out, len, "out")?.copy_from_slice(&r);
        Ok(())
    })
}

/// Mean focal loss over a row-major `batch × classes` logit matrix.
/// `alpha` may be NULL for unit weights. `grad_out`, if not NULL, receives the
/// `batch × classes` gradient of the mean loss with respect to the logits.
///
/// # Safety
/// Pointers must reference arrays of the stated sizes; `loss_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn abx_focal_loss(
    logits: *const f64,
    labels: *const usize,
    batch: usize,
    classes: usize,
    gamma: f64,
    alpha: *const f64,
    loss_out: *mut f64,
    grad_out: *mut f64,
) -> AbxStatus {
    guard(|| {
        non_null(loss_out, "loss_out")?;
        if classes == 0 {
            return Err(Failure::Arg("classes must be positive"));
        }
        let total = batch.checked_mul(classes).ok_or(Failure::Arg("batch × classes overflows"))?;
        let flat = slice_arg(logits, total, "logits")?;
        let labels = slice_arg(labels, batch, "labels")?;
        let alpha = if alpha.is_null() {
            vec![1.0; classes]
        } else {
            slice_arg(alpha, classes, "alpha")?.to_vec()
        };
        let cfg = FocalConfig {
            gamma,
            alpha,
            alpha_mode: AlphaMode::Explicit,
        };
        cfg.validate(classes)?;
        let rows: Vec<Vec<f64>> = flat.chunks(classes).map(<[f64]>::to_vec).collect();
        let (loss, grads) = focal_loss_batch(&rows, labels, &cfg)?;
        *loss_out = loss;
        if !grad_out.is_null() {
            let dst = out_slice(grad_out, total, "grad_out")?;
            for (chunk, g) in dst.chunks_mut(classes).zip(&grads) {
                chunk.copy_from_slice(g);
            }
        }
        Ok(())
    })
}

/// Deterministic mock embedding of `text` into `d` unit-norm doubles.
///
/// # Safety
/// `text` must be NUL-terminated and `out` must point to `d` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn abx_mock_embed(text: *const c_char, d: usize, out: *mut f64) -> AbxStatus {
    guard(|| {
        if d == 0 {
            return Err(Failure::Arg("dimension must be positive"));
        }
        let v = mock_embed(str_arg(text, "text")?, d);
        out_slice(out, d, "out")?.copy_from_slice(&v);
        Ok(())
    })
}
