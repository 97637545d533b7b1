//! C interface to `nystrom-ridge`.
//!
//! Two opaque handles cross the boundary: [`NrKernel`] (a point set plus a
//! kernel choice) and [`NrSketch`] (a Nyström sketch built from a kernel
//! handle). Every fallible call returns an [`NrStatus`]; on failure the
//! message for the calling thread is available from
//! [`nr_last_error_message`]. Output buffers are caller-allocated and must
//! hold exactly `n` doubles, where `n` is the number of points.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DVector;
use nystrom_ridge::kernels::{kernel_diagonal, kernel_matrix, KernelSpec, LazyGram, PointSet};
use nystrom_ridge::leverage::{approx_ridge_leverage, SpectralData};
use nystrom_ridge::regression::krr_fit_nystrom;
use nystrom_ridge::sampling::{sufficient_p, Distribution};
use nystrom_ridge::sketch::NystromSketch;
use nystrom_ridge::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrKernelFamily {
    Linear = 0,
    /// `exp(-|x - x'|^2 / (2 h^2))`, parameter `h`.
    Rbf = 1,
    /// Periodic Bernoulli kernel on [0, 1), parameter is the integer order.
    Bernoulli = 2,
}

/// Points and kernel.
pub struct NrKernel {
    points: PointSet,
    spec: KernelSpec,
}

/// Nyström sketch over the points of an [`NrKernel`].
pub struct NrSketch {
    sketch: NystromSketch,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> NrStatus {
    match err {
        Error::DimensionMismatch { .. } | Error::IndexOutOfRange { .. } => NrStatus::DimensionMismatch,
        Error::NonFinite(_)
        | Error::NotSymmetric(_)
        | Error::NotPositiveDefinite
        | Error::DegenerateSketch(_)
        | Error::CapExceeded { .. } => NrStatus::Numerical,
        _ => NrStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (NrStatus, String)>) -> NrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NrStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            NrStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (NrStatus, String)>;
}

impl<T> IntoFfi<T> for nystrom_ridge::Result<T> {
    fn ffi(self) -> Result<T, (NrStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (NrStatus, String) {
    (NrStatus::NullPointer, format!("{what} is null"))
}

unsafe fn out_slice<'a>(out: *mut f64, len: usize, n: usize) -> Result<&'a mut [f64], (NrStatus, String)> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len != n {
        return Err((NrStatus::DimensionMismatch, format!("output buffer holds {len} values, expected {n}")));
    }
    Ok(std::slice::from_raw_parts_mut(out, len))
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates a kernel handle from `n` points of dimension `dim` stored row-major.
///
/// # Safety
/// `data` must point to `n * dim` readable doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nr_kernel_new(
    data: *const f64,
    n: usize,
    dim: usize,
    family: NrKernelFamily,
    parameter: f64,
    out: *mut *mut NrKernel,
) -> NrStatus {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n.checked_mul(dim).ok_or((NrStatus::InvalidArgument, "n * dim overflows".into()))?;
        let values = std::slice::from_raw_parts(data, len).to_vec();
        let spec = match family {
            NrKernelFamily::Linear => KernelSpec::Linear,
            NrKernelFamily::Rbf => KernelSpec::Rbf { bandwidth: parameter },
            NrKernelFamily::Bernoulli => {
                if !(parameter >= 1.0 && parameter.fract() == 0.0 && parameter <= u32::MAX as f64) {
                    return Err((
                        NrStatus::InvalidArgument,
                        format!("bernoulli order must be a positive integer, got {parameter}"),
                    ));
                }
                KernelSpec::Bernoulli { order: parameter as u32 }
            }
        };
        let points = PointSet::from_row_major(n, dim, values).ffi()?;
        LazyGram::new(&points, spec).ffi()?;
        *out = Box::into_raw(Box::new(NrKernel { points, spec }));
        Ok(())
    })
}

/// # Safety
/// `kernel` must be NULL or a handle from [`nr_kernel_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nr_kernel_free(kernel: *mut NrKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Number of points, or 0 for NULL.
///
/// # Safety
/// `kernel` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nr_kernel_len(kernel: *const NrKernel) -> usize {
    kernel.as_ref().map_or(0, |k| k.points.len())
}

/// Exact λ-ridge leverage scores through a dense eigendecomposition.
///
/// # Safety
/// `kernel` must be a live handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nr_exact_leverage(
    kernel: *const NrKernel,
    lambda: f64,
    out: *mut f64,
    len: usize,
) -> NrStatus {
    guard(|| {
        let k = kernel.as_ref().ok_or_else(|| null("kernel"))?;
        let dst = out_slice(out, len, k.points.len())?;
        let gram = kernel_matrix(&k.points, k.spec).ffi()?;
        let scores = SpectralData::decompose(gram.entries()).ffi()?.ridge_leverage(lambda).ffi()?;
        dst.copy_from_slice(scores.as_slice());
        Ok(())
    })
}

/// Effective dimension and maximal degrees of freedom at `lambda`. Either
/// output pointer may be NULL.
///
/// # Safety
/// `kernel` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn nr_degrees_of_freedom(
    kernel: *const NrKernel,
    lambda: f64,
    d_eff: *mut f64,
    d_mof: *mut f64,
) -> NrStatus {
    guard(|| {
        let k = kernel.as_ref().ok_or_else(|| null("kernel"))?;
        let gram = kernel_matrix(&k.points, k.spec).ffi()?;
        let scores = SpectralData::decompose(gram.entries()).ffi()?.ridge_leverage(lambda).ffi()?;
        if let Some(d) = d_eff.as_mut() {
            *d = scores.sum();
        }
        if let Some(d) = d_mof.as_mut() {
            *d = scores.max_dof();
        }
        Ok(())
    })
}

/// Fast approximate scores from `p` columns drawn with probability
/// proportional to the kernel diagonal.
///
/// # Safety
/// `kernel` must be a live handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nr_approx_leverage(
    kernel: *const NrKernel,
    lambda: f64,
    p: usize,
    seed: u64,
    out: *mut f64,
    len: usize,
) -> NrStatus {
    guard(|| {
        let k = kernel.as_ref().ok_or_else(|| null("kernel"))?;
        let dst = out_slice(out, len, k.points.len())?;
        let source = LazyGram::new(&k.points, k.spec).ffi()?;
        let diag = kernel_diagonal(&k.points, k.spec).ffi()?;
        let dist = Distribution::proportional(diag.as_slice()).ffi()?;
        let scores = approx_ridge_leverage(&source, lambda, p, &dist, seed).ffi()?;
        dst.copy_from_slice(scores.as_slice());
        Ok(())
    })
}

/// Smallest `p ≥ 8(d_eff/β + 1/6)·ln(n/ρ)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nr_sufficient_p(d_eff: f64, beta: f64, n: usize, rho: f64, out: *mut usize) -> NrStatus {
    guard(|| {
        let dst = out.as_mut().ok_or_else(|| null("out"))?;
        *dst = sufficient_p(d_eff, beta, n, rho).ffi()?;
        Ok(())
    })
}

/// Builds a Nyström sketch from the listed column indices; repeats are
/// allowed and ignored.
///
/// # Safety
/// `kernel` must be a live handle, `indices` must hold `count` readable
/// values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nr_sketch_new(
    kernel: *const NrKernel,
    indices: *const usize,
    count: usize,
    out: *mut *mut NrSketch,
) -> NrStatus {
    guard(|| {
        let k = kernel.as_ref().ok_or_else(|| null("kernel"))?;
        if indices.is_null() {
            return Err(null("indices"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let sampled = std::slice::from_raw_parts(indices, count);
        let source = LazyGram::new(&k.points, k.spec).ffi()?;
        let sketch = NystromSketch::from_source(&source, sampled).ffi()?;
        *out = Box::into_raw(Box::new(NrSketch { sketch }));
        Ok(())
    })
}

/// # Safety
/// `sketch` must be NULL or a handle from [`nr_sketch_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nr_sketch_free(sketch: *mut NrSketch) {
    if !sketch.is_null() {
        drop(Box::from_raw(sketch));
    }
}

/// Rank of the sketch factor, or 0 for NULL.
///
/// # Safety
/// `sketch` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nr_sketch_rank(sketch: *const NrSketch) -> usize {
    sketch.as_ref().map_or(0, |s| s.sketch.rank())
}

/// Kernel ridge regression with the sketched kernel; writes fitted values.
///
/// # Safety
/// `sketch` must be a live handle, `y` must hold `len` readable doubles and
/// `fitted` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nr_sketch_fit(
    sketch: *const NrSketch,
    y: *const f64,
    lambda: f64,
    fitted: *mut f64,
    len: usize,
) -> NrStatus {
    guard(|| {
        let s = sketch.as_ref().ok_or_else(|| null("sketch"))?;
        if y.is_null() {
            return Err(null("y"));
        }
        let dst = out_slice(fitted, len, s.sketch.n())?;
        let target = DVector::from_column_slice(std::slice::from_raw_parts(y, len));
        let model = krr_fit_nystrom(&s.sketch, &target, lambda).ffi()?;
        dst.copy_from_slice(model.fitted.as_slice());
        Ok(())
    })
}
