//! C ABI over `radar-nowcast`.
//!
//! Every function returns an [`RnStatus`]; on failure the message is kept per
//! thread and can be copied out with [`rn_last_error`]. Models are opaque
//! handles created by `rn_model_new` / `rn_model_load` and released with
//! `rn_model_free`. Fields are row-major `f64` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use radar_nowcast::denoiser::{Denoiser, DenoiserConfig};
use radar_nowcast::diffusion::{load_checkpoint, nowcast, NoiseSchedule, NowcastConfig, SamplerConfig, SamplerKind, ScheduleConfig};
use radar_nowcast::numeric::Tensor;
use radar_nowcast::patch_grid::ReferenceMode;
use radar_nowcast::spen::SpenVariant;
use radar_nowcast::verification::{evaluate_pairs, persistence_baseline};
use radar_nowcast::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Config = 4,
    Io = 5,
    Format = 6,
    Numeric = 7,
    BufferTooSmall = 8,
    Internal = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RnVariant {
    NoEmbd = 0,
    TimeEmbd = 1,
    Full = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RnSamplerKind {
    Ddim = 0,
    Ddpm = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RnSampler {
    pub kind: RnSamplerKind,
    /// DDIM steps.
    pub steps: usize,
    pub eta: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RnModelInfo {
    pub patch_size: usize,
    /// History length the model was trained with, 0 if unknown.
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub blocks: usize,
    pub t_diff: usize,
    pub parameter_count: usize,
}

/// Overall scores; `psnr_db` is `INFINITY` for a perfect match.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RnMetrics {
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub ets: f64,
    pub acc: f64,
}

/// Opaque model handle.
pub struct RnModel {
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    t_diff: usize,
    reference_mode: ReferenceMode,
    n: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> RnStatus {
    match e {
        Error::Dimension(_) | Error::Bounds { .. } => RnStatus::Dimension,
        Error::Config(_) | Error::Evaluation(_) | Error::Render(_) => RnStatus::Config,
        Error::Io { .. } => RnStatus::Io,
        Error::Format { .. } | Error::Json { .. } => RnStatus::Format,
        Error::Divergence { .. } | Error::SamplingDivergence { .. } | Error::NonFinite(_) => RnStatus::Numeric,
        _ => RnStatus::Internal,
    }
}

struct Fail(RnStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RnStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside radar-nowcast");
            RnStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(RnStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn read_field(data: *const f64, shape: &[usize], what: &str) -> Result<Tensor, Fail> {
    non_null(data, what)?;
    let len = shape.iter().product::<usize>();
    if len == 0 {
        return Err(Fail(RnStatus::InvalidArgument, format!("{what} is empty")));
    }
    let slice = std::slice::from_raw_parts(data, len);
    Ok(Tensor::new(shape.to_vec(), slice.to_vec())?)
}

unsafe fn write_out(t: &Tensor, out: *mut f64, out_len: usize) -> Result<(), Fail> {
    non_null(out, "output buffer")?;
    if out_len < t.len() {
        return Err(Fail(RnStatus::BufferTooSmall, format!("output needs {} values, buffer holds {out_len}", t.len())));
    }
    ptr::copy_nonoverlapping(t.data().as_ptr(), out, t.len());
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rn_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Fresh, untrained model with default geometry and `m` forecast steps.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn rn_model_new(variant: RnVariant, m: usize, seed: u64, out: *mut *mut RnModel) -> RnStatus {
    guard(|| {
        non_null(out, "out")?;
        let variant = match variant {
            RnVariant::NoEmbd => SpenVariant::NoEmbd,
            RnVariant::TimeEmbd => SpenVariant::TimeEmbd,
            RnVariant::Full => SpenVariant::Full,
        };
        let cfg = DenoiserConfig { variant, m, init_seed: seed, ..Default::default() };
        let sc = ScheduleConfig::default();
        let model = RnModel {
            denoiser: Denoiser::new(cfg)?,
            schedule: NoiseSchedule::new(sc)?,
            t_diff: sc.t_diff,
            reference_mode: ReferenceMode::Neighborhood,
            n: 0,
        };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Loads a checkpoint directory written by the trainer.
///
/// # Safety
/// `dir` must be a NUL-terminated UTF-8 path and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn rn_model_load(dir: *const c_char, out: *mut *mut RnModel) -> RnStatus {
    guard(|| {
        non_null(dir, "dir")?;
        non_null(out, "out")?;
        let dir = CStr::from_ptr(dir)
            .to_str()
            .map_err(|_| Fail(RnStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let (denoiser, meta) = load_checkpoint(Path::new(dir))?;
        let model = RnModel {
            denoiser,
            schedule: NoiseSchedule::new(meta.schedule)?,
            t_diff: meta.schedule.t_diff,
            reference_mode: meta.reference_mode,
            n: meta.n,
        };
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `model` must come from `rn_model_new` / `rn_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rn_model_free(model: *mut RnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `info` writable.
#[no_mangle]
pub unsafe extern "C" fn rn_model_info(model: *const RnModel, info: *mut RnModelInfo) -> RnStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(info, "info")?;
        let m = &*model;
        let c = m.denoiser.config();
        *info = RnModelInfo {
            patch_size: c.patch_size,
            n: m.n,
            m: c.m,
            d: c.d,
            blocks: c.blocks,
            t_diff: m.t_diff,
            parameter_count: m.denoiser.params().scalar_count(),
        };
        Ok(())
    })
}

/// Forecasts `M x H x W` from an `N x H x W` history into `out`.
///
/// # Safety
/// `history` must hold `n*h*w` values and `out` `out_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn rn_nowcast(
    model: *const RnModel,
    history: *const f64,
    n: usize,
    h: usize,
    w: usize,
    sampler: RnSampler,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> RnStatus {
    guard(|| {
        non_null(model, "model")?;
        let m = &*model;
        if m.n != 0 && m.n != n {
            return Err(Fail(RnStatus::Config, format!("model was trained with N = {}, got {n}", m.n)));
        }
        let hist = read_field(history, &[n, h, w], "history")?;
        let cfg = NowcastConfig {
            sampler: SamplerConfig {
                kind: match sampler.kind {
                    RnSamplerKind::Ddim => SamplerKind::Ddim,
                    RnSamplerKind::Ddpm => SamplerKind::Ddpm,
                },
                steps: sampler.steps,
                eta: sampler.eta,
                stochastic: true,
            },
            reference_mode: m.reference_mode,
            seed,
        };
        let pred = nowcast(&hist, &m.denoiser, &m.schedule, &cfg, 0)?;
        write_out(&pred, out, out_len)
    })
}

/// Repeats the last history frame `m` times.
///
/// # Safety
/// `history` must hold `n*h*w` values and `out` `out_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn rn_persistence(history: *const f64, n: usize, h: usize, w: usize, m: usize, out: *mut f64, out_len: usize) -> RnStatus {
    guard(|| {
        let hist = read_field(history, &[n, h, w], "history")?;
        write_out(&persistence_baseline(&hist, m)?, out, out_len)
    })
}

/// Scores one `M x H x W` forecast against the truth.
///
/// # Safety
/// `pred` and `truth` must each hold `m*h*w` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rn_evaluate(
    pred: *const f64,
    truth: *const f64,
    m: usize,
    h: usize,
    w: usize,
    threshold: f64,
    out: *mut RnMetrics,
) -> RnStatus {
    guard(|| {
        non_null(out, "out")?;
        let p = read_field(pred, &[m, h, w], "pred")?;
        let t = read_field(truth, &[m, h, w], "truth")?;
        let r = evaluate_pairs(&[(p, t)], threshold)?;
        *out = RnMetrics { mse: r.mse, psnr_db: r.psnr(), ssim: r.ssim, ets: r.ets, acc: r.acc };
        Ok(())
    })
}
