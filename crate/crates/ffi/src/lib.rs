//! C ABI over `rsddl`.
//!
//! Every function returns an [`RsddlStatus`]; on failure the message is kept
//! per thread and can be read with [`rsddl_last_error`]. Models are opaque
//! handles released with [`rsddl_model_free`]. Sample buffers are row-major,
//! one sample per row. Class labels are 1-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use rsddl::dataio::{load_model, save_model, Dataset};
use rsddl::ddl::Architecture;
use rsddl::inference::{classify, encode_test, Rule};
use rsddl::joint::{joint_train, DropMode, TrainConfig};
use rsddl::metrics::{average_accuracy, kappa, overall_accuracy, ConfusionMatrix};
use rsddl::model::{train_greedy, Model};
use rsddl::{Activation, Error, Matrix, Vector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsddlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Diverged = 5,
    Panic = 6,
}

// Input selectors are plain integers so that an out-of-range value from C
// is an error, not undefined behavior.
pub type RsddlTrainer = u32;
pub const RSDDL_TRAINER_JOINT: RsddlTrainer = 0;
pub const RSDDL_TRAINER_GREEDY: RsddlTrainer = 1;

pub type RsddlActivation = u32;
pub const RSDDL_ACTIVATION_TANH: RsddlActivation = 0;
pub const RSDDL_ACTIVATION_IDENTITY: RsddlActivation = 1;

pub type RsddlDrop = u32;
pub const RSDDL_DROP_NONE: RsddlDrop = 0;
pub const RSDDL_DROP_OUT: RsddlDrop = 1;
pub const RSDDL_DROP_CONNECT: RsddlDrop = 2;

pub type RsddlRule = u32;
pub const RSDDL_RULE_L0: RsddlRule = 0;
pub const RSDDL_RULE_L1: RsddlRule = 1;

/// Training options. Fill with [`rsddl_train_options_default`] and override
/// fields. A zero sparsity budget means "derive from the architecture".
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RsddlTrainOptions {
    pub trainer: RsddlTrainer,
    pub activation: RsddlActivation,
    pub drop: RsddlDrop,
    pub drop_rate: f64,
    pub lambda: f64,
    pub mu: f64,
    pub gamma: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub per_column_s: usize,
    pub row_s: usize,
    pub outer_iters: usize,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RsddlScores {
    pub overall_accuracy: f64,
    pub average_accuracy: f64,
    pub kappa: f64,
}

/// Opaque trained model.
pub struct RsddlModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(RsddlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Input(_) => RsddlStatus::InvalidArgument,
            Error::Io { .. } => RsddlStatus::Io,
            Error::Parse { .. } | Error::Format(_) => RsddlStatus::Format,
            Error::Diverged { .. } => RsddlStatus::Diverged,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RsddlStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(RsddlStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RsddlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RsddlStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RsddlStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn model_ref<'a>(m: *const RsddlModel) -> Result<&'a Model, Fail> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rsddl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`). Returns the full message length
/// without the terminator, 0 if there is none.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn rsddl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

#[no_mangle]
pub extern "C" fn rsddl_train_options_default() -> RsddlTrainOptions {
    let arch = Architecture::new(vec![1], Activation::tanh()).expect("one-layer architecture");
    let cfg = TrainConfig::for_architecture(&arch);
    RsddlTrainOptions {
        trainer: RSDDL_TRAINER_JOINT,
        activation: RSDDL_ACTIVATION_TANH,
        drop: RSDDL_DROP_CONNECT,
        drop_rate: cfg.drop_rate,
        lambda: cfg.lambda,
        mu: cfg.mu,
        gamma: cfg.gamma,
        eta1: cfg.eta1,
        eta2: cfg.eta2,
        per_column_s: 0,
        row_s: 0,
        outer_iters: cfg.outer_iters,
        seed: cfg.seed,
    }
}

fn samples(data: &[f64], n: usize, dim: usize) -> Matrix {
    // row-major samples are a column-major dim × n matrix
    Matrix::from_column_slice(dim, n, data)
}

/// Train a model on `n_samples` rows of length `dim`.
///
/// # Safety
/// `data` holds `n_samples * dim` doubles, `labels` `n_samples` entries,
/// `atoms` `n_layers` entries; `options` may be null for defaults;
/// `out_model` receives a handle to free with [`rsddl_model_free`].
#[no_mangle]
pub unsafe extern "C" fn rsddl_train(
    data: *const f64,
    n_samples: usize,
    dim: usize,
    labels: *const u32,
    atoms: *const usize,
    n_layers: usize,
    options: *const RsddlTrainOptions,
    out_model: *mut *mut RsddlModel,
) -> RsddlStatus {
    guard(|| {
        if out_model.is_null() {
            return Err(null("out_model"));
        }
        *out_model = ptr::null_mut();
        let len = n_samples.checked_mul(dim).ok_or_else(|| invalid("sample buffer size overflows"))?;
        let x = samples(slice(data, len, "data")?, n_samples, dim);
        let labels: Vec<usize> = slice(labels, n_samples, "labels")?.iter().map(|&l| l as usize).collect();
        let atoms = slice(atoms, n_layers, "atoms")?.to_vec();
        let opt = options.as_ref().copied().unwrap_or_else(|| rsddl_train_options_default());
        let activation = match opt.activation {
            RSDDL_ACTIVATION_TANH => Activation::tanh(),
            RSDDL_ACTIVATION_IDENTITY => Activation::identity(),
            a => return Err(invalid(format!("unknown activation {a}"))),
        };
        let arch = Architecture::new(atoms, activation)?;
        let mut cfg = TrainConfig::for_architecture(&arch);
        cfg.drop_mode = match opt.drop {
            RSDDL_DROP_NONE => DropMode::None,
            RSDDL_DROP_OUT => DropMode::DropOut,
            RSDDL_DROP_CONNECT => DropMode::DropConnect,
            d => return Err(invalid(format!("unknown drop mode {d}"))),
        };
        cfg.drop_rate = opt.drop_rate;
        cfg.lambda = opt.lambda;
        cfg.mu = opt.mu;
        cfg.gamma = opt.gamma;
        cfg.eta1 = opt.eta1;
        cfg.eta2 = opt.eta2;
        if opt.per_column_s > 0 {
            cfg.budget.per_column_s = opt.per_column_s;
        }
        if opt.row_s > 0 {
            cfg.budget.row_s = opt.row_s;
        }
        cfg.outer_iters = opt.outer_iters;
        cfg.seed = opt.seed;
        let ds = Dataset::new(x, labels)?;
        let model = match opt.trainer {
            RSDDL_TRAINER_JOINT => joint_train(&ds, &arch, &cfg)?.model,
            RSDDL_TRAINER_GREEDY => train_greedy(&ds, &arch, &cfg)?.0,
            t => return Err(invalid(format!("unknown trainer {t}"))),
        };
        *out_model = Box::into_raw(Box::new(RsddlModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `path` is a NUL-terminated UTF-8 path; `out_model` is writable.
#[no_mangle]
pub unsafe extern "C" fn rsddl_model_load(path: *const c_char, out_model: *mut *mut RsddlModel) -> RsddlStatus {
    guard(|| {
        if out_model.is_null() {
            return Err(null("out_model"));
        }
        *out_model = ptr::null_mut();
        let model = load_model(path_arg(path)?)?;
        *out_model = Box::into_raw(Box::new(RsddlModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` is a live handle; `path` is a NUL-terminated UTF-8 path.
#[no_mangle]
pub unsafe extern "C" fn rsddl_model_save(model: *const RsddlModel, path: *const c_char) -> RsddlStatus {
    guard(|| Ok(save_model(model_ref(model)?, path_arg(path)?)?))
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `model` came from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rsddl_model_free(model: *mut RsddlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Sample dimension the model expects, 0 for a null handle.
///
/// # Safety
/// `model` is a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rsddl_model_input_dim(model: *const RsddlModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.input_dim())
}

/// Length of an encoded feature, 0 for a null handle.
///
/// # Safety
/// `model` is a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rsddl_model_feature_dim(model: *const RsddlModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.feature_dim())
}

/// # Safety
/// `model` is a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rsddl_model_num_classes(model: *const RsddlModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.num_classes())
}

/// Encode one sample of length `dim` into `out` (length `feature_dim`).
///
/// # Safety
/// Buffers are valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn rsddl_encode(
    model: *const RsddlModel,
    x: *const f64,
    dim: usize,
    out: *mut f64,
    out_len: usize,
) -> RsddlStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out_len != m.feature_dim() {
            return Err(invalid(format!("output holds {out_len} values, features have {}", m.feature_dim())));
        }
        let f = encode_test(m, &Vector::from_column_slice(slice(x, dim, "x")?))?;
        slice_mut(out, out_len, "out")?.copy_from_slice(f.z.as_slice());
        Ok(())
    })
}

/// Predict labels for `n_samples` rows of length `dim`.
///
/// # Safety
/// `data` holds `n_samples * dim` doubles and `out_labels` `n_samples`
/// entries.
#[no_mangle]
pub unsafe extern "C" fn rsddl_classify(
    model: *const RsddlModel,
    data: *const f64,
    n_samples: usize,
    dim: usize,
    rule: RsddlRule,
    out_labels: *mut u32,
) -> RsddlStatus {
    guard(|| {
        let m = model_ref(model)?;
        let len = n_samples.checked_mul(dim).ok_or_else(|| invalid("sample buffer size overflows"))?;
        let x = samples(slice(data, len, "data")?, n_samples, dim);
        let out = slice_mut(out_labels, n_samples, "out_labels")?;
        let rule = match rule {
            RSDDL_RULE_L0 => Rule::L0,
            RSDDL_RULE_L1 => Rule::L1,
            r => return Err(invalid(format!("unknown rule {r}"))),
        };
        for (j, slot) in out.iter_mut().enumerate() {
            let f = encode_test(m, &x.column(j).into_owned())?;
            *slot = classify(m, &f, rule).label as u32;
        }
        Ok(())
    })
}

/// OA, AA and Kappa of `predicted` against `truth`.
///
/// # Safety
/// Both label arrays hold `n` entries; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn rsddl_scores(
    truth: *const u32,
    predicted: *const u32,
    n: usize,
    out: *mut RsddlScores,
) -> RsddlStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let t: Vec<usize> = slice(truth, n, "truth")?.iter().map(|&l| l as usize).collect();
        let p: Vec<usize> = slice(predicted, n, "predicted")?.iter().map(|&l| l as usize).collect();
        let cm = ConfusionMatrix::from_labels(&t, &p)?;
        *out = RsddlScores {
            overall_accuracy: overall_accuracy(&cm)?,
            average_accuracy: average_accuracy(&cm)?,
            kappa: kappa(&cm)?,
        };
        Ok(())
    })
}
