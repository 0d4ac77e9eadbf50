//! C interface to `tscond`.
//!
//! Every fallible function returns a [`TscondStatus`]; on failure the message
//! is available from [`tscond_last_error`] on the same thread. Objects are
//! opaque handles returned through `out` parameters and released with the
//! matching `*_free`. Matrices cross the boundary as row-major `double`
//! arrays (rows are time steps, columns are channels).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ndarray::Array2;

use tscond::buffer::{generate_buffer, load_buffer, save_buffer, ExpertBuffer};
use tscond::condense::{condtsf_update, distill, label_error, CondenseConfig};
use tscond::data::{
    load_csv, split_normalize, CsvOptions, SeriesOrigin, SplitDataset, SyntheticSeries, TimeSeries, WindowSpec,
};
use tscond::eval::{evaluate_full, evaluate_synthetic};
use tscond::forecaster::{Architecture, BatchSize, Optimizer, TrainConfig, DEFAULT_HIDDEN, DEFAULT_KERNEL};
use tscond::unroll::UnrollConfig;
use tscond::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TscondStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Data = 5,
    Shape = 6,
    Numeric = 7,
    BufferFormat = 8,
    FingerprintMismatch = 9,
    Panic = 10,
}

/// Which half of a split to copy out.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TscondPart {
    Train = 0,
    Test = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TscondArch {
    Linear = 0,
    Mlp = 1,
}

/// A time series: raw data, one half of a split, or a synthetic series.
pub struct TscondSeries(TimeSeries);

/// Train/test halves plus their normalization statistics.
pub struct TscondSplit(SplitDataset);

pub struct TscondBuffer(ExpertBuffer);

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TscondBufferParams {
    pub experts: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub kernel: usize,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TscondCondenseParams {
    pub epochs: usize,
    pub gap: usize,
    pub beta: f64,
    pub unroll_steps: usize,
    pub alpha: f64,
    /// 0 means the horizon of the buffer.
    pub pair_stride: usize,
    pub outer_lr: f64,
    pub outer_momentum: f64,
    pub synthetic_len: usize,
    pub condtsf: bool,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TscondEvalParams {
    pub arch: TscondArch,
    pub kernel: usize,
    pub hidden: usize,
    pub trials: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> TscondStatus {
    match err {
        Error::FileNotFound(_) | Error::Io { .. } => TscondStatus::Io,
        Error::Parse { .. } | Error::EmptyFile | Error::ColumnNotFound(_) => TscondStatus::Parse,
        Error::NonFinite(_)
        | Error::SplitTooShort { .. }
        | Error::ConstantChannel(_)
        | Error::SeriesTooShort { .. }
        | Error::TrainTooShort { .. }
        | Error::NoPairs
        | Error::NoSyntheticPairs
        | Error::NoBlocks { .. } => TscondStatus::Data,
        Error::ShapeMismatch { .. } | Error::LayoutMismatch(_) | Error::TapeInvalid(_) => TscondStatus::Shape,
        Error::DivergedLoss { .. }
        | Error::NonFiniteDuringUnroll { .. }
        | Error::NonFiniteSynthetic { .. }
        | Error::DegenerateExpert => TscondStatus::Numeric,
        Error::BadMagic | Error::VersionMismatch { .. } | Error::TruncatedFile => TscondStatus::BufferFormat,
        Error::FingerprintMismatch { .. } => TscondStatus::FingerprintMismatch,
        Error::Expert { source, .. } | Error::Trial { source, .. } => status_of(source),
        Error::KernelEven(_) | Error::SingleExpert | Error::InvalidArgument(_) | Error::Config(_) => {
            TscondStatus::InvalidArgument
        }
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TscondStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TscondStatus::Ok,
        Ok(Err(Failure::Null(name))) => {
            set_last_error(format!("{name} must not be null"));
            TscondStatus::NullArgument
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_last_error(msg);
            TscondStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            TscondStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(name))
}

unsafe fn borrow_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(name))
}

unsafe fn string_arg(p: *const c_char, name: &'static str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(Failure::Null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Invalid(format!("{name} is not valid UTF-8")))
}

unsafe fn emit<T>(out: *mut *mut T, value: T, name: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tscond_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tscond_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a CSV with a header row. `date_column` may be null; when given and
/// present in the header, that column is dropped.
///
/// # Safety
/// `path` and a non-null `date_column` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tscond_series_load_csv(
    path: *const c_char,
    date_column: *const c_char,
    out: *mut *mut TscondSeries,
) -> TscondStatus {
    guard(|| {
        let path = string_arg(path, "path")?;
        let date = if date_column.is_null() {
            None
        } else {
            Some(string_arg(date_column, "date_column")?)
        };
        let opts = CsvOptions {
            has_header: true,
            date_column: date.clone(),
        };
        let ts = match load_csv(&path, &opts) {
            Err(Error::ColumnNotFound(_)) if date.is_some() => load_csv(
                &path,
                &CsvOptions {
                    has_header: true,
                    date_column: None,
                },
            ),
            other => other,
        }?;
        emit(out, TscondSeries(ts), "out")
    })
}

/// Copies `rows * cols` row-major values into a new series with channels named `ch0`, `ch1`, ...
///
/// # Safety
/// `values` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tscond_series_from_values(
    values: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut TscondSeries,
) -> TscondStatus {
    guard(|| {
        if values.is_null() {
            return Err(Failure::Null("values"));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Failure::Invalid("rows * cols overflows".into()))?;
        let data = std::slice::from_raw_parts(values, len).to_vec();
        let arr = Array2::from_shape_vec((rows, cols), data).map_err(|e| Failure::Invalid(e.to_string()))?;
        emit(out, TscondSeries(TimeSeries::from_values(arr)?), "out")
    })
}

/// # Safety
/// `series` must be a live handle; `rows` and `cols` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tscond_series_shape(
    series: *const TscondSeries,
    rows: *mut usize,
    cols: *mut usize,
) -> TscondStatus {
    guard(|| {
        let s = borrow(series, "series")?;
        *borrow_mut(rows, "rows")? = s.0.len();
        *borrow_mut(cols, "cols")? = s.0.channels();
        Ok(())
    })
}

/// Copies the values row-major into `out`, which must hold `rows * cols` doubles.
///
/// # Safety
/// `series` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tscond_series_copy_values(
    series: *const TscondSeries,
    out: *mut f64,
    len: usize,
) -> TscondStatus {
    guard(|| {
        let s = borrow(series, "series")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let need = s.0.values.len();
        if len < need {
            return Err(Failure::Invalid(format!("output holds {len} values, need {need}")));
        }
        let dst = std::slice::from_raw_parts_mut(out, need);
        for (d, v) in dst.iter_mut().zip(s.0.values.iter()) {
            *d = *v;
        }
        Ok(())
    })
}

/// # Safety
/// `series` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tscond_series_free(series: *mut TscondSeries) {
    release(series)
}

/// Chronological split at `floor(ratio * T)` with train-statistics z-scoring.
///
/// # Safety
/// `series` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tscond_split_normalize(
    series: *const TscondSeries,
    ratio: f64,
    lookback: usize,
    horizon: usize,
    strict: bool,
    out: *mut *mut TscondSplit,
) -> TscondStatus {
    guard(|| {
        let s = borrow(series, "series")?;
        let spec = WindowSpec::new(lookback, horizon, 1)?;
        emit(out, TscondSplit(split_normalize(&s.0, ratio, spec, strict)?), "out")
    })
}

/// Copies one half of a split into a new series handle.
///
/// # Safety
/// `split` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tscond_split_part(
    split: *const TscondSplit,
    part: TscondPart,
    out: *mut *mut TscondSeries,
) -> TscondStatus {
    guard(|| {
        let s = borrow(split, "split")?;
        let ts = match part {
            TscondPart::Train => s.0.train.clone(),
            TscondPart::Test => s.0.test.clone(),
        };
        emit(out, TscondSeries(ts), "out")
    })
}

/// # Safety
/// `split` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tscond_split_free(split: *mut TscondSplit) {
    release(split)
}

#[no_mangle]
pub extern "C" fn tscond_buffer_params_default() -> TscondBufferParams {
    let t = TrainConfig::expert_default();
    TscondBufferParams {
        experts: tscond::buffer::DEFAULT_EXPERTS,
        epochs: t.epochs,
        learning_rate: t.learning_rate,
        batch_size: match t.batch_size {
            BatchSize::Size(b) => b,
            BatchSize::Full => 0,
        },
        kernel: DEFAULT_KERNEL,
        seed: 0,
    }
}

fn buffer_train_config(p: &TscondBufferParams) -> TrainConfig {
    TrainConfig {
        optimizer: Optimizer::Adam,
        learning_rate: p.learning_rate,
        epochs: p.epochs,
        batch_size: if p.batch_size == 0 {
            BatchSize::Full
        } else {
            BatchSize::Size(p.batch_size)
        },
        seed: p.seed,
    }
}

/// Trains `params.experts` linear experts on the train half of `split`.
///
/// # Safety
/// `split` must be a live handle, `params` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tscond_buffer_generate(
    split: *const TscondSplit,
    lookback: usize,
    horizon: usize,
    params: *const TscondBufferParams,
    out: *mut *mut TscondBuffer,
) -> TscondStatus {
    guard(|| {
        let s = borrow(split, "split")?;
        let p = borrow(params, "params")?;
        let spec = WindowSpec::new(lookback, horizon, 1)?;
        let arch = Architecture::Linear { kernel: p.kernel };
        let buf = generate_buffer(&s.0.train, spec, arch, p.experts, &buffer_train_config(p), p.seed)?;
        emit(out, TscondBuffer(buf), "out")
    })
}

/// # Safety
/// `buffer` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tscond_buffer_save(buffer: *const TscondBuffer, path: *const c_char) -> TscondStatus {
    guard(|| {
        let b = borrow(buffer, "buffer")?;
        let path = string_arg(path, "path")?;
        Ok(save_buffer(&b.0, path)?)
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tscond_buffer_load(path: *const c_char, out: *mut *mut TscondBuffer) -> TscondStatus {
    guard(|| {
        let path = string_arg(path, "path")?;
        emit(out, TscondBuffer(load_buffer(path)?), "out")
    })
}

/// Number of expert pairs; 0 for a null handle.
///
/// # Safety
/// `buffer` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tscond_buffer_len(buffer: *const TscondBuffer) -> usize {
    buffer.as_ref().map_or(0, |b| b.0.len())
}

/// # Safety
/// `buffer` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tscond_buffer_free(buffer: *mut TscondBuffer) {
    release(buffer)
}

#[no_mangle]
pub extern "C" fn tscond_condense_params_default() -> TscondCondenseParams {
    let c = CondenseConfig::default();
    TscondCondenseParams {
        epochs: c.epochs,
        gap: c.gap,
        beta: c.beta,
        unroll_steps: c.unroll.steps,
        alpha: c.unroll.alpha,
        pair_stride: 0,
        outer_lr: c.outer_lr,
        outer_momentum: c.outer_momentum,
        synthetic_len: c.synthetic_len,
        condtsf: c.condtsf,
        seed: c.seed,
    }
}

/// Distills the train half of `split` with `buffer`. The final label error
/// is written to `final_label_error` when it is not null.
///
/// # Safety
/// Handles must be live, `params` readable, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tscond_distill(
    buffer: *const TscondBuffer,
    split: *const TscondSplit,
    params: *const TscondCondenseParams,
    out: *mut *mut TscondSeries,
    final_label_error: *mut f64,
) -> TscondStatus {
    guard(|| {
        let b = borrow(buffer, "buffer")?;
        let s = borrow(split, "split")?;
        let p = borrow(params, "params")?;
        let cfg = CondenseConfig {
            epochs: p.epochs,
            gap: p.gap,
            beta: p.beta,
            unroll: UnrollConfig {
                steps: p.unroll_steps,
                alpha: p.alpha,
                pair_stride: if p.pair_stride == 0 {
                    b.0.spec.horizon
                } else {
                    p.pair_stride
                },
            },
            outer_lr: p.outer_lr,
            outer_momentum: p.outer_momentum,
            synthetic_len: p.synthetic_len,
            condtsf: p.condtsf,
            eval_every: 0,
            seed: p.seed,
        };
        let (synthetic, log) = distill(&b.0, &s.0.train, &cfg, None)?;
        if let (Some(slot), Some(last)) = (final_label_error.as_mut(), log.last()) {
            *slot = last.label_error;
        }
        let ts = TimeSeries::new(synthetic.values, s.0.train.channel_names.clone(), "synthetic")?;
        emit(out, TscondSeries(ts), "out")
    })
}

fn as_synthetic(ts: &TimeSeries) -> SyntheticSeries {
    SyntheticSeries {
        values: ts.values.clone(),
        origin: SeriesOrigin::Distilled,
        seed: 0,
    }
}

fn expert_at(b: &ExpertBuffer, index: usize) -> Result<tscond::forecaster::Forecaster, Failure> {
    if index >= b.len() {
        return Err(Failure::Invalid(format!(
            "expert index {index} out of range for {} experts",
            b.len()
        )));
    }
    Ok(b.expert_model(index)?)
}

/// One in-place label update of `series` towards expert `expert`'s forecasts.
///
/// # Safety
/// Handles must be live.
#[no_mangle]
pub unsafe extern "C" fn tscond_condtsf_update(
    series: *mut TscondSeries,
    buffer: *const TscondBuffer,
    expert: usize,
    beta: f64,
) -> TscondStatus {
    guard(|| {
        let s = borrow_mut(series, "series")?;
        let b = borrow(buffer, "buffer")?;
        let model = expert_at(&b.0, expert)?;
        let updated = condtsf_update(&as_synthetic(&s.0), &model, b.0.spec, beta)?;
        s.0.values = updated.values;
        Ok(())
    })
}

/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tscond_label_error(
    series: *const TscondSeries,
    buffer: *const TscondBuffer,
    expert: usize,
    out: *mut f64,
) -> TscondStatus {
    guard(|| {
        let s = borrow(series, "series")?;
        let b = borrow(buffer, "buffer")?;
        let model = expert_at(&b.0, expert)?;
        *borrow_mut(out, "out")? = label_error(s.0.values.view(), &model, b.0.spec)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn tscond_eval_params_default() -> TscondEvalParams {
    let t = TrainConfig::test_model_default();
    TscondEvalParams {
        arch: TscondArch::Linear,
        kernel: DEFAULT_KERNEL,
        hidden: DEFAULT_HIDDEN,
        trials: tscond::eval::DEFAULT_TRIALS,
        steps: t.epochs,
        learning_rate: t.learning_rate,
        seed: 0,
    }
}

/// Trains `params.trials` fresh models and reports mean test MAE and MSE.
/// With a null `synthetic`, models train on the whole train half instead.
///
/// # Safety
/// `split` must be live, `synthetic` null or live, outputs writable.
#[no_mangle]
pub unsafe extern "C" fn tscond_evaluate(
    synthetic: *const TscondSeries,
    split: *const TscondSplit,
    lookback: usize,
    horizon: usize,
    params: *const TscondEvalParams,
    mean_mae: *mut f64,
    mean_mse: *mut f64,
) -> TscondStatus {
    guard(|| {
        let s = borrow(split, "split")?;
        let p = borrow(params, "params")?;
        let spec = WindowSpec::new(lookback, horizon, 1)?;
        let arch = match p.arch {
            TscondArch::Linear => Architecture::Linear { kernel: p.kernel },
            TscondArch::Mlp => Architecture::Mlp { hidden: p.hidden },
        };
        let report = match synthetic.as_ref() {
            Some(syn) => {
                let cfg = TrainConfig {
                    optimizer: Optimizer::Adam,
                    learning_rate: p.learning_rate,
                    epochs: p.steps,
                    batch_size: BatchSize::Full,
                    seed: p.seed,
                };
                evaluate_synthetic(
                    &as_synthetic(&syn.0),
                    &s.0,
                    arch,
                    spec,
                    p.trials,
                    &cfg,
                    p.seed,
                    "synthetic",
                )?
            }
            None => evaluate_full(&s.0, arch, spec, p.trials, &TrainConfig::expert_default(), p.seed)?,
        };
        *borrow_mut(mean_mae, "mean_mae")? = report.mean_mae;
        *borrow_mut(mean_mse, "mean_mse")? = report.mean_mse;
        Ok(())
    })
}
