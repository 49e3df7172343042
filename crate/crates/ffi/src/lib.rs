//! C ABI over the trajrank core.
//!
//! Every fallible call returns a [`TrStatus`]; on failure a message is kept
//! per thread and can be copied out with [`trajrank_last_error_message`].
//! Points are passed as interleaved `x, y` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use trajrank::cluster::{assign, kmeans, soft_dtw, ClusterSpace, Sample};
use trajrank::forecasters::{cvm_predict, Proposal, ProposalSet};
use trajrank::ranking::{inverse_distance_softmax, rank_centroids, Operand};
use trajrank::trajectory::{unflatten_steps, DisplacementSeries, FlatDisplacement};
use trajrank::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    LengthMismatch = 3,
    Config = 4,
    Lineage = 5,
    Divergence = 6,
    Io = 7,
    Parse = 8,
    Panic = 99,
}

/// Opaque handle to a cluster space.
pub struct TrClusterSpace {
    inner: ClusterSpace,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> TrStatus {
    match e {
        Error::LengthMismatch { .. } | Error::Shape { .. } => TrStatus::LengthMismatch,
        Error::Config(_) => TrStatus::Config,
        Error::Lineage { .. } => TrStatus::Lineage,
        Error::Divergence(_) | Error::NonFiniteGradient(_) => TrStatus::Divergence,
        Error::Io { .. } => TrStatus::Io,
        Error::Parse { .. } | Error::Json(_) => TrStatus::Parse,
        _ => TrStatus::InvalidArgument,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), TrStatus>) -> TrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TrStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            TrStatus::Panic
        }
    }
}

fn fail(e: Error) -> TrStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(what: &str) -> TrStatus {
    set_error(format!("{what} is null"));
    TrStatus::NullPointer
}

fn invalid(msg: &str) -> TrStatus {
    set_error(msg);
    TrStatus::InvalidArgument
}

unsafe fn read<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], TrStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn write<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], TrStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn trajrank_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Length in bytes of the calling thread's last error message (without NUL).
#[no_mangle]
pub extern "C" fn trajrank_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `len - 1` bytes). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn trajrank_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Parses a cluster space from its JSON artifact.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trajrank_cluster_space_from_json(json: *const c_char, out: *mut *mut TrClusterSpace) -> TrStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| invalid("json is not UTF-8"))?;
        let inner = ClusterSpace::from_json(text).map_err(fail)?;
        *out = Box::into_raw(Box::new(TrClusterSpace { inner }));
        Ok(())
    })
}

/// Clusters `n` full displacement series of `steps` steps each with k-Means.
/// `data` holds `n * steps * 2` doubles; the first `t_obs` steps of each
/// series are the observed part.
///
/// # Safety
/// `data` must hold `n * steps * 2` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trajrank_kmeans(
    data: *const f64,
    n: usize,
    steps: usize,
    t_obs: usize,
    k: usize,
    seed: u64,
    out: *mut *mut TrClusterSpace,
) -> TrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if t_obs >= steps {
            return Err(invalid("t_obs must be smaller than steps"));
        }
        let values = read(data, n * steps * 2, "data")?;
        let flat: Vec<FlatDisplacement> = values.chunks(steps * 2).map(|c| FlatDisplacement(c.to_vec())).collect();
        let inner = kmeans(&flat, k, seed, 100, 1e-6).map_err(fail)?.with_shape(t_obs, steps - t_obs);
        *out = Box::into_raw(Box::new(TrClusterSpace { inner }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `space` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn trajrank_cluster_space_free(space: *mut TrClusterSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

/// Number of clusters, or 0 for a null handle.
///
/// # Safety
/// `space` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn trajrank_cluster_space_k(space: *const TrClusterSpace) -> usize {
    space.as_ref().map_or(0, |s| s.inner.k)
}

/// Predicted steps per series, or 0 for a null handle.
///
/// # Safety
/// `space` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn trajrank_cluster_space_t_pred(space: *const TrClusterSpace) -> usize {
    space.as_ref().map_or(0, |s| s.inner.t_pred)
}

/// Nearest cluster of a full displacement series of `steps` steps.
///
/// # Safety
/// `space` must be a live handle; `series` must hold `steps * 2` doubles.
#[no_mangle]
pub unsafe extern "C" fn trajrank_assign(
    space: *const TrClusterSpace,
    series: *const f64,
    steps: usize,
    out_cluster: *mut usize,
) -> TrStatus {
    guard(|| {
        let s = space.as_ref().ok_or_else(|| null("space"))?;
        if out_cluster.is_null() {
            return Err(null("out_cluster"));
        }
        let deltas = unflatten_steps(read(series, steps * 2, "series")?).map_err(fail)?;
        let t_obs = s.inner.t_obs.min(steps);
        let d = DisplacementSeries::new(deltas, t_obs, steps - t_obs, [0.0, 0.0]).map_err(fail)?;
        *out_cluster = assign(&s.inner, Sample::Series(&d)).map_err(fail)?;
        Ok(())
    })
}

/// Centroid ranking of `k` proposals, proposal `i` conditioned on cluster `i`.
/// `futures` holds `k * t_pred * 2` doubles; `probs_out` receives `k`.
///
/// # Safety
/// Pointers must reference buffers of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn trajrank_rank_centroids(
    space: *const TrClusterSpace,
    futures: *const f64,
    k: usize,
    t_pred: usize,
    tau: f64,
    probs_out: *mut f64,
) -> TrStatus {
    guard(|| {
        let s = space.as_ref().ok_or_else(|| null("space"))?;
        let values = read(futures, k * t_pred * 2, "futures")?;
        let out = write(probs_out, k, "probs_out")?;
        if t_pred == 0 {
            return Err(invalid("t_pred must be positive"));
        }
        let proposals = values
            .chunks(t_pred * 2)
            .enumerate()
            .map(|(c, f)| {
                Ok(Proposal {
                    cluster: Some(c),
                    deltas: unflatten_steps(f).map_err(fail)?,
                })
            })
            .collect::<Result<Vec<_>, TrStatus>>()?;
        let set = ProposalSet::new("ffi", proposals, None, [0.0, 0.0]);
        let ranked = rank_centroids(&set, &s.inner, tau, Operand::Future).map_err(fail)?;
        out.copy_from_slice(ranked.probabilities.as_deref().unwrap_or_default());
        Ok(())
    })
}

/// Softmax over inverse distances with temperature `tau`.
///
/// # Safety
/// `m` and `out` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn trajrank_inverse_distance_softmax(m: *const f64, n: usize, tau: f64, out: *mut f64) -> TrStatus {
    guard(|| {
        if !(tau > 0.0) {
            return Err(invalid("tau must be positive"));
        }
        let d = read(m, n, "m")?;
        if d.iter().any(|v| !(*v >= 0.0)) {
            return Err(invalid("distances must be non-negative"));
        }
        write(out, n, "out")?.copy_from_slice(&inverse_distance_softmax(d, tau));
        Ok(())
    })
}

/// Constant-velocity forecast from `t_obs` observed displacements; writes
/// `t_pred * 2` doubles.
///
/// # Safety
/// `observed` must hold `t_obs * 2` doubles and `out` `t_pred * 2`.
#[no_mangle]
pub unsafe extern "C" fn trajrank_cvm_predict(
    observed: *const f64,
    t_obs: usize,
    t_pred: usize,
    sigma: f64,
    out: *mut f64,
) -> TrStatus {
    guard(|| {
        let deltas = unflatten_steps(read(observed, t_obs * 2, "observed")?).map_err(fail)?;
        let obs = DisplacementSeries::observed(deltas, [0.0, 0.0]).map_err(fail)?;
        let pred = cvm_predict(&obs, t_pred, sigma).map_err(fail)?;
        let dst = write(out, t_pred * 2, "out")?;
        for (i, d) in pred.deltas.iter().enumerate() {
            dst[2 * i] = d[0];
            dst[2 * i + 1] = d[1];
        }
        Ok(())
    })
}

/// Soft-DTW between two 2D step sequences of `n` and `m` steps.
///
/// # Safety
/// `a` must hold `n * 2` doubles, `b` `m * 2`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trajrank_soft_dtw(a: *const f64, n: usize, b: *const f64, m: usize, gamma: f64, out: *mut f64) -> TrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let v = soft_dtw(read(a, n * 2, "a")?, read(b, m * 2, "b")?, gamma).map_err(fail)?;
        *out = v;
        Ok(())
    })
}
