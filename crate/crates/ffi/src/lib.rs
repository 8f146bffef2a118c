//! C ABI over `ninn-core`.
//!
//! Every fallible function returns a [`NinnStatus`]; on failure the message
//! is available from [`ninn_last_error`] on the same thread. Systems are
//! opaque handles created by [`ninn_system_load`] and released with
//! [`ninn_system_free`]. Arrays are passed as pointer + length; matrices
//! are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use ninn_core::assimilation::{self as assim, case2_direction, ObservationOperator, Type2Variant};
use ninn_core::eval::rmse;
use ninn_core::nn::{load_model, Matrix, ResNetSystem};
use ninn_core::NinnError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NinnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Divergence = 4,
    Io = 5,
    CorruptFile = 6,
    VersionMismatch = 7,
    ScheduleMismatch = 8,
    Panic = 9,
}

/// Opaque trained system.
pub struct NinnSystem {
    inner: ResNetSystem,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &NinnError) -> NinnStatus {
    match err {
        NinnError::Divergence { .. }
        | NinnError::ComponentDivergence { .. }
        | NinnError::IntegrationDivergence { .. } => NinnStatus::Divergence,
        NinnError::DimensionMismatch(_) => NinnStatus::DimensionMismatch,
        NinnError::ScheduleMismatch(_) => NinnStatus::ScheduleMismatch,
        NinnError::InvalidArgument(_) => NinnStatus::InvalidArgument,
        NinnError::VersionMismatch { .. } => NinnStatus::VersionMismatch,
        NinnError::CorruptFile(_) | NinnError::Csv(_) => NinnStatus::CorruptFile,
        NinnError::Io(_) => NinnStatus::Io,
    }
}

enum Failure {
    Status(NinnStatus, String),
    Core(NinnError),
}

impl From<NinnError> for Failure {
    fn from(e: NinnError) -> Self {
        Failure::Core(e)
    }
}

fn null() -> Failure {
    Failure::Status(NinnStatus::NullPointer, "null pointer argument".into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NinnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NinnStatus::Ok
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(&msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            NinnStatus::Panic
        }
    }
}

/// Borrowed input slice; `len == 0` accepts a null pointer.
unsafe fn input<'a, T>(ptr: *const T, len: usize) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a>(ptr: *mut f64, len: usize) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null());
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn handle<'a>(ptr: *const NinnSystem) -> Result<&'a ResNetSystem, Failure> {
    ptr.as_ref().map(|s| &s.inner).ok_or_else(null)
}

fn write_out(dst: &mut [f64], src: &[f64]) -> Result<(), Failure> {
    if dst.len() != src.len() {
        return Err(Failure::Core(NinnError::DimensionMismatch(format!(
            "output buffer has length {}, result has {}",
            dst.len(),
            src.len()
        ))));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ninn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn ninn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a model file. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ninn_system_load(
    path: *const c_char,
    out: *mut *mut NinnSystem,
) -> NinnStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(null());
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| {
            Failure::Status(NinnStatus::InvalidArgument, "path is not UTF-8".into())
        })?;
        let inner = load_model(path)?;
        *out = Box::into_raw(Box::new(NinnSystem { inner }));
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `system` must come from [`ninn_system_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ninn_system_free(system: *mut NinnSystem) {
    if !system.is_null() {
        drop(Box::from_raw(system));
    }
}

/// State dimension of the system, 0 for null.
///
/// # Safety
/// `system` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ninn_system_state_dim(system: *const NinnSystem) -> usize {
    system.as_ref().map_or(0, |s| s.inner.state_dim())
}

/// Network depth `L` of the system, 0 for null.
///
/// # Safety
/// `system` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ninn_system_depth(system: *const NinnSystem) -> usize {
    system.as_ref().map_or(0, |s| s.inner.depth())
}

/// One uncontrolled step: `out = S(w)`. Both buffers have `len` entries.
///
/// # Safety
/// `w` and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ninn_system_forward(
    system: *const NinnSystem,
    w: *const f64,
    len: usize,
    out: *mut f64,
) -> NinnStatus {
    guard(|| {
        let sys = handle(system)?;
        let next = sys.forward(input(w, len)?)?;
        write_out(output(out, len)?, &next)
    })
}

/// Assembles the observation operator and checks the buffer lengths.
unsafe fn observation_args<'a>(
    sys: &ResNetSystem,
    observed: *const usize,
    n_observed: usize,
    obs: *const f64,
) -> Result<(ObservationOperator, &'a [f64]), Failure> {
    let idx = input(observed, n_observed)?.to_vec();
    let mut sorted = idx.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted != idx {
        return Err(Failure::Status(
            NinnStatus::InvalidArgument,
            "observed indices must be strictly increasing".into(),
        ));
    }
    let op = ObservationOperator::new(idx, sys.state_dim())?;
    Ok((op, input(obs, n_observed)?))
}

/// NINN Type 1 step. `obs[j]` is the observation of component
/// `observed[j]`; `observed` must be strictly increasing.
///
/// # Safety
/// `w` and `out` point to `len` doubles; `observed` and `obs` to
/// `n_observed` entries.
#[no_mangle]
pub unsafe extern "C" fn ninn_type1_step(
    system: *const NinnSystem,
    w: *const f64,
    len: usize,
    observed: *const usize,
    obs: *const f64,
    n_observed: usize,
    mu: f64,
    out: *mut f64,
) -> NinnStatus {
    guard(|| {
        let sys = handle(system)?;
        let (op, obs) = observation_args(sys, observed, n_observed, obs)?;
        let next = assim::ninn_type1_step(sys, input(w, len)?, obs, &op, mu)?;
        write_out(output(out, len)?, &next)
    })
}

/// NINN Type 2 (scalar-output case) step; `lookahead != 0` measures the
/// misfit through the remaining layers.
///
/// # Safety
/// As [`ninn_type1_step`].
#[no_mangle]
pub unsafe extern "C" fn ninn_type2_step(
    system: *const NinnSystem,
    w: *const f64,
    len: usize,
    observed: *const usize,
    obs: *const f64,
    n_observed: usize,
    mu: f64,
    lookahead: c_int,
    out: *mut f64,
) -> NinnStatus {
    guard(|| {
        let sys = handle(system)?;
        let (op, obs) = observation_args(sys, observed, n_observed, obs)?;
        let variant = if lookahead != 0 {
            Type2Variant::Lookahead
        } else {
            Type2Variant::Plain
        };
        let next = assim::ninn_type2_step(sys, input(w, len)?, obs, &op, mu, variant)?;
        write_out(output(out, len)?, &next)
    })
}

/// Direct Observation step: observed input components are replaced by
/// `obs` before the forward pass. Pass `n_observed = 0` for a plain step.
///
/// # Safety
/// As [`ninn_type1_step`].
#[no_mangle]
pub unsafe extern "C" fn ninn_direct_obs_step(
    system: *const NinnSystem,
    w: *const f64,
    len: usize,
    observed: *const usize,
    obs: *const f64,
    n_observed: usize,
    out: *mut f64,
) -> NinnStatus {
    guard(|| {
        let sys = handle(system)?;
        let (op, obs) = observation_args(sys, observed, n_observed, obs)?;
        let next = assim::direct_obs_step(sys, input(w, len)?, Some(obs), &op)?;
        write_out(output(out, len)?, &next)
    })
}

/// `argmin_{‖x‖ ≤ 1} ‖W(y + x) − q‖²` for a `rows × cols` row-major `W`.
/// `y` and `out` have `cols` entries, `q` has `rows`.
///
/// # Safety
/// Buffers must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ninn_case2_direction(
    w: *const f64,
    rows: usize,
    cols: usize,
    y: *const f64,
    q: *const f64,
    out: *mut f64,
) -> NinnStatus {
    guard(|| {
        let n = rows.checked_mul(cols).ok_or_else(|| {
            Failure::Status(NinnStatus::InvalidArgument, "matrix size overflows".into())
        })?;
        let m = Matrix::from_row_major(rows, cols, input(w, n)?.to_vec());
        let x = case2_direction(&m, input(y, cols)?, input(q, rows)?)?;
        write_out(output(out, cols)?, &x)
    })
}

/// Spatio-temporal RMSE over checkpoints `k0..=k_end`. `alg` and `reference`
/// are `n_runs × n_checkpoints × dim` arrays in C order. Writes `+inf`
/// when any contributing value is non-finite.
///
/// # Safety
/// `alg` and `reference` point to `n_runs · n_checkpoints · dim` doubles,
/// `out` to one.
#[no_mangle]
pub unsafe extern "C" fn ninn_rmse(
    alg: *const f64,
    reference: *const f64,
    n_runs: usize,
    n_checkpoints: usize,
    dim: usize,
    k0: usize,
    k_end: usize,
    out: *mut f64,
) -> NinnStatus {
    guard(|| {
        let total = n_runs
            .checked_mul(n_checkpoints)
            .and_then(|v| v.checked_mul(dim))
            .ok_or_else(|| {
                Failure::Status(NinnStatus::InvalidArgument, "array size overflows".into())
            })?;
        let nest = |flat: &[f64]| -> Vec<Vec<Vec<f64>>> {
            flat.chunks(n_checkpoints * dim.max(1))
                .map(|run| run.chunks(dim.max(1)).map(<[f64]>::to_vec).collect())
                .collect()
        };
        let a = nest(input(alg, total)?);
        let r = nest(input(reference, total)?);
        let value = rmse(&a, &r, k0, k_end)?;
        write_out(output(out, 1)?, &[value])
    })
}
