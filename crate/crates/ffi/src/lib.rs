//! C ABI over `smm_core`.
//!
//! Every entry point returns an [`SmmStatus`] and writes results through out
//! pointers. On failure the message is available from
//! [`smm_last_error_message`] until the next call on the same thread. Panics
//! are caught at the boundary and reported as `SMM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use smm_core::diophantine::{beta_estimate, cf_expand_with_budget, AlphaDescriptor, ContinuedFraction};
use smm_core::green::{surface_symbol, Energy};
use smm_core::reduction::zeta0_closed_form;
use smm_core::spectrum::{
    build_finite, eig_window, predict_eigenvalues, resolvent_check, PredictedEigenvalue, Predictor,
};
use smm_core::{Geometry, ModelParams, SmmError};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmmStatus {
    Ok = 0,
    InvalidParameter = 1,
    PhaseSingularity = 2,
    BranchPoint = 3,
    UnwrapFailure = 4,
    SeriesDiverges = 5,
    PrecisionExhausted = 6,
    RationalTermination = 7,
    OverflowBudget = 8,
    NoQualifyingIndex = 9,
    SolverFailure = 10,
    Io = 11,
    NullPointer = 12,
    InvalidUtf8 = 13,
    Panic = 14,
}

/// `0` for the full space, `1` for the half space `x ≥ 0`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmmGeometry {
    Full = 0,
    Half = 1,
}

impl From<SmmGeometry> for Geometry {
    fn from(g: SmmGeometry) -> Self {
        match g {
            SmmGeometry::Full => Geometry::FullSpace,
            SmmGeometry::Half => Geometry::HalfSpace,
        }
    }
}

/// Model parameters `(λ, α, θ, geometry)`.
pub struct SmmModel(ModelParams);

/// Continued-fraction expansion of a frequency.
pub struct SmmContinuedFraction(ContinuedFraction);

/// Sorted list of energies with optional integer labels.
pub struct SmmSpectrum {
    energies: Vec<f64>,
    labels: Vec<i64>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Core(SmmError),
    Null(&'static str),
    Utf8,
}

impl From<SmmError> for Failure {
    fn from(e: SmmError) -> Self {
        Failure::Core(e)
    }
}

fn status_of(e: &SmmError) -> SmmStatus {
    match e {
        SmmError::InvalidParameter(_) => SmmStatus::InvalidParameter,
        SmmError::PhaseSingularity { .. } => SmmStatus::PhaseSingularity,
        SmmError::BranchPoint { .. } => SmmStatus::BranchPoint,
        SmmError::UnwrapFailure { .. } => SmmStatus::UnwrapFailure,
        SmmError::SeriesDiverges { .. } => SmmStatus::SeriesDiverges,
        SmmError::PrecisionExhausted { .. } => SmmStatus::PrecisionExhausted,
        SmmError::RationalTermination { .. } => SmmStatus::RationalTermination,
        SmmError::OverflowBudget { .. } => SmmStatus::OverflowBudget,
        SmmError::NoQualifyingIndex { .. } => SmmStatus::NoQualifyingIndex,
        SmmError::SolverFailure(_) => SmmStatus::SolverFailure,
        SmmError::Io(_) => SmmStatus::Io,
    }
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> SmmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SmmStatus::Ok
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(&format!("{}: {e}", e.kind()));
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            SmmStatus::NullPointer
        }
        Ok(Err(Failure::Utf8)) => {
            set_error("string argument is not valid UTF-8");
            SmmStatus::InvalidUtf8
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            SmmStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8)
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn smm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn smm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Creates model parameters with `d` frequencies.
///
/// # Safety
/// `alpha` must point to `d` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smm_model_new(
    lambda: f64,
    alpha: *const f64,
    d: usize,
    theta: f64,
    geometry: SmmGeometry,
    out_model: *mut *mut SmmModel,
) -> SmmStatus {
    guard(|| {
        let dst = out(out_model, "out_model")?;
        let a = slice(alpha, d, "alpha")?.to_vec();
        let p = ModelParams::new(lambda, a, theta, geometry.into())?;
        *dst = Box::into_raw(Box::new(SmmModel(p)));
        Ok(())
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from [`smm_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn smm_model_free(model: *mut SmmModel) {
    if !model.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(model))));
    }
}

/// `v(n) = tan π(α·n + θ)` at a surface site of length `d`.
///
/// # Safety
/// `model` must be valid, `n` must point to `d` integers and `out_v` to a double.
#[no_mangle]
pub unsafe extern "C" fn smm_model_surface_function(
    model: *const SmmModel,
    n: *const i64,
    d: usize,
    out_v: *mut f64,
) -> SmmStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let site = slice(n, d, "n")?;
        if d != m.0.d() {
            return Err(SmmError::InvalidParameter(format!("site has {d} components, model has {}", m.0.d())).into());
        }
        *out(out_v, "out_v")? = m.0.surface_function(site)?;
        Ok(())
    })
}

/// Surface symbol `Γ̂₀(y; z)` (full space) or `Γ̂₀⁺(y; z)` (half space).
///
/// # Safety
/// `y` must point to `d` doubles; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn smm_surface_symbol(
    y: *const f64,
    d: usize,
    z_re: f64,
    z_im: f64,
    geometry: SmmGeometry,
    out_re: *mut f64,
    out_im: *mut f64,
) -> SmmStatus {
    guard(|| {
        let y = slice(y, d, "y")?;
        if d == 0 {
            return Err(SmmError::InvalidParameter("d must be at least 1".into()).into());
        }
        let g = surface_symbol(y, Energy::new(z_re, z_im), geometry.into())?;
        *out(out_re, "out_re")? = g.re;
        *out(out_im, "out_im")? = g.im;
        Ok(())
    })
}

/// Rotation number `ζ₀(E)` for `d = 1` at real `E` outside `[−4, 4]`.
///
/// # Safety
/// `out_zeta0` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smm_zeta0(
    energy: f64,
    lambda: f64,
    geometry: SmmGeometry,
    grid: usize,
    out_zeta0: *mut f64,
) -> SmmStatus {
    guard(|| {
        *out(out_zeta0, "out_zeta0")? = zeta0_closed_form(energy, lambda, grid, geometry.into())?;
        Ok(())
    })
}

fn spectrum_from_predictions(p: &[PredictedEigenvalue]) -> SmmSpectrum {
    SmmSpectrum {
        energies: p.iter().map(|e| e.energy).collect(),
        labels: p.iter().map(|e| e.k).collect(),
    }
}

/// Eigenvalues predicted by the quantization condition for labels `k_min..=k_max`
/// in `(e_lo, e_hi)`, `d = 1`.
///
/// # Safety
/// `out_spectrum` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smm_predict(
    lambda: f64,
    alpha: f64,
    theta: f64,
    geometry: SmmGeometry,
    k_min: i64,
    k_max: i64,
    e_lo: f64,
    e_hi: f64,
    out_spectrum: *mut *mut SmmSpectrum,
) -> SmmStatus {
    guard(|| {
        let dst = out(out_spectrum, "out_spectrum")?;
        let p = Predictor::new(lambda, alpha, theta)?.with_geometry(geometry.into());
        let pred = predict_eigenvalues(&p, (k_min, k_max), (e_lo, e_hi))?;
        *dst = Box::into_raw(Box::new(spectrum_from_predictions(&pred.predictions)));
        Ok(())
    })
}

/// Eigenvalues of the box truncation of radius `l` in `(e_lo, e_hi)`.
/// Labels are the surface centre of each eigenvector (first component).
///
/// # Safety
/// `model` and `out_spectrum` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn smm_fv_eigenvalues(
    model: *const SmmModel,
    l: i64,
    e_lo: f64,
    e_hi: f64,
    out_spectrum: *mut *mut SmmSpectrum,
) -> SmmStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let dst = out(out_spectrum, "out_spectrum")?;
        let op = build_finite(&m.0, l)?;
        let eigs = eig_window(&op, e_lo, e_hi)?;
        *dst = Box::into_raw(Box::new(SmmSpectrum {
            energies: eigs.iter().map(|e| e.energy).collect(),
            labels: eigs.iter().map(|e| e.center_n[0]).collect(),
        }));
        Ok(())
    })
}

/// Number of entries.
///
/// # Safety
/// `spectrum` and `out_len` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn smm_spectrum_len(spectrum: *const SmmSpectrum, out_len: *mut usize) -> SmmStatus {
    guard(|| {
        *out(out_len, "out_len")? = borrow(spectrum, "spectrum")?.energies.len();
        Ok(())
    })
}

/// Entry `i`: its energy and label.
///
/// # Safety
/// `spectrum` must be valid; `out_energy` and `out_label` may be null.
#[no_mangle]
pub unsafe extern "C" fn smm_spectrum_get(
    spectrum: *const SmmSpectrum,
    i: usize,
    out_energy: *mut f64,
    out_label: *mut i64,
) -> SmmStatus {
    guard(|| {
        let s = borrow(spectrum, "spectrum")?;
        if i >= s.energies.len() {
            return Err(SmmError::InvalidParameter(format!("index {i} out of range ({})", s.energies.len())).into());
        }
        if let Some(e) = out_energy.as_mut() {
            *e = s.energies[i];
        }
        if let Some(k) = out_label.as_mut() {
            *k = s.labels[i];
        }
        Ok(())
    })
}

/// Releases a spectrum; null is ignored.
///
/// # Safety
/// `spectrum` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn smm_spectrum_free(spectrum: *mut SmmSpectrum) {
    if !spectrum.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(spectrum))));
    }
}

/// Largest relative deviation between the box resolvent and the surface-reduction
/// formula on the interior block.
///
/// # Safety
/// `model` and `out_error` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn smm_resolvent_check(
    model: *const SmmModel,
    l: i64,
    w: i64,
    z_re: f64,
    z_im: f64,
    out_error: *mut f64,
) -> SmmStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        let dst = out(out_error, "out_error")?;
        *dst = resolvent_check(&m.0, l, Energy::new(z_re, z_im), w)?.max_rel_error;
        Ok(())
    })
}

/// Expands a frequency descriptor (`golden`, `silver`, `quotients:…`, `beta:1.0`, a
/// decimal) to `depth` partial quotients with exact integers.
///
/// # Safety
/// `alpha` must be a NUL-terminated string; `out_cf` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn smm_cf_expand(
    alpha: *const c_char,
    depth: usize,
    budget_bits: u64,
    out_cf: *mut *mut SmmContinuedFraction,
) -> SmmStatus {
    guard(|| {
        let dst = out(out_cf, "out_cf")?;
        let desc: AlphaDescriptor = text(alpha, "alpha")?.parse()?;
        let cf = cf_expand_with_budget(&desc, depth, budget_bits)?;
        *dst = Box::into_raw(Box::new(SmmContinuedFraction(cf)));
        Ok(())
    })
}

/// Depth, growth index and exactness of the identities `q_{n+1}p_n − p_{n+1}q_n = ±1`
/// and `1/(q_{n+1}+q_n) < Δ_n < 1/q_{n+1}`.
///
/// # Safety
/// `cf` must be valid; any out pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn smm_cf_summary(
    cf: *const SmmContinuedFraction,
    out_depth: *mut usize,
    out_beta_estimate: *mut f64,
    out_identities_hold: *mut bool,
) -> SmmStatus {
    guard(|| {
        let c = &borrow(cf, "cf")?.0;
        if let Some(d) = out_depth.as_mut() {
            *d = c.depth();
        }
        if let Some(b) = out_beta_estimate.as_mut() {
            *b = beta_estimate(c).beta_estimate;
        }
        if let Some(h) = out_identities_hold.as_mut() {
            *h = c.determinant_identity_holds() && c.gdc2_sandwich_holds();
        }
        Ok(())
    })
}

/// The expansion as JSON. Release the string with [`smm_string_free`].
///
/// # Safety
/// `cf` and `out_json` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn smm_cf_to_json(cf: *const SmmContinuedFraction, out_json: *mut *mut c_char) -> SmmStatus {
    guard(|| {
        let c = &borrow(cf, "cf")?.0;
        let dst = out(out_json, "out_json")?;
        let s = CString::new(c.to_json().to_string()).map_err(|e| SmmError::Io(e.to_string()))?;
        *dst = s.into_raw();
        Ok(())
    })
}

/// Releases an expansion; null is ignored.
///
/// # Safety
/// `cf` must come from [`smm_cf_expand`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn smm_cf_free(cf: *mut SmmContinuedFraction) {
    if !cf.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(cf))));
    }
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn smm_string_free(s: *mut c_char) {
    if !s.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(CString::from_raw(s))));
    }
}
