//! C interface to the mbpre library.
//!
//! Objects cross the boundary as opaque handles created by `*_new` and
//! released by the matching `*_free`. Every fallible call returns an
//! [`MbpreStatus`]; on failure a description is available from
//! [`mbpre_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mbpre::env::{EnvironmentModel, FiniteIidEnv, FiniteMarkovEnv, GaussianAr1Env};
use mbpre::gaussian::{
    gain_mixed_over_pure, gain_sensing_over_no_sensing, gaussian_optimal_no_sensing, gaussian_optimal_sensing,
    GaussianProblem,
};
use mbpre::growth::{gamma_no_sensing, gamma_sensing};
use mbpre::model::{FiniteLandscape, TraitRule};
use mbpre::optimize::{optimize_no_sensing, optimize_sensing, OptimizationResult, SolverOptions};
use mbpre::Error;

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MbpreStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Domain = 3,
    Singular = 4,
    /// A caller-supplied buffer is too small.
    BufferTooSmall = 5,
    /// Any other failure, including a caught panic.
    Internal = 6,
}

/// Finite fitness landscape.
pub struct MbpreLandscape(FiniteLandscape);

/// Finite environment model.
pub struct MbpreEnv(EnvironmentModel);

/// Result of an optimization.
pub struct MbpreResult(OptimizationResult);

/// Solver settings. Pass NULL to use the defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MbpreSolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub support_tol: f64,
}

/// Closed-form optimum of the Gaussian model.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MbpreGaussianOptimum {
    pub mean: f64,
    pub variance: f64,
    pub rate: f64,
    pub sensing_slope: f64,
    pub sensing_intercept: f64,
    pub sensing_variance: f64,
    pub sensing_rate: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> MbpreStatus {
    match err {
        Error::InvalidParameter(_) => MbpreStatus::InvalidParameter,
        Error::Domain(_) => MbpreStatus::Domain,
        Error::Singular(_) => MbpreStatus::Singular,
        _ => MbpreStatus::Internal,
    }
}

struct Fail(MbpreStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MbpreStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MbpreStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MbpreStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MbpreStatus::Internal
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn rows(flat: &[f64], cols: usize) -> Vec<Vec<f64>> {
    flat.chunks(cols).map(<[f64]>::to_vec).collect()
}

fn solver(opts: *const MbpreSolverOptions) -> SolverOptions {
    // SAFETY: the caller passes NULL or a valid pointer.
    match unsafe { opts.as_ref() } {
        Some(o) => SolverOptions {
            tol: o.tol,
            max_iter: o.max_iter,
            support_tol: o.support_tol,
        },
        None => SolverOptions::default(),
    }
}

/// Message for the last failed call on this thread, or NULL.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn mbpre_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Default solver settings.
#[no_mangle]
pub extern "C" fn mbpre_solver_options_default() -> MbpreSolverOptions {
    let d = SolverOptions::default();
    MbpreSolverOptions {
        tol: d.tol,
        max_iter: d.max_iter,
        support_tol: d.support_tol,
    }
}

/// Builds a landscape from a row-major `num_traits x num_envs` matrix of mean offspring numbers.
///
/// # Safety
/// `mean` must point to `num_traits * num_envs` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbpre_landscape_new(
    mean: *const f64,
    num_traits: usize,
    num_envs: usize,
    out: *mut *mut MbpreLandscape,
) -> MbpreStatus {
    guard(|| {
        if num_envs == 0 {
            return Err(Fail(MbpreStatus::InvalidParameter, "landscape needs at least one environment".into()));
        }
        let m = slice(mean, num_traits * num_envs, "mean")?;
        let l = FiniteLandscape::from_matrix(rows(m, num_envs))?;
        write(out, Box::into_raw(Box::new(MbpreLandscape(l))), "out")
    })
}

/// # Safety
/// `l` must be NULL or a handle from [`mbpre_landscape_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mbpre_landscape_free(l: *mut MbpreLandscape) {
    if !l.is_null() {
        drop(Box::from_raw(l));
    }
}

/// I.i.d. environment with the given marginal law.
///
/// # Safety
/// `marginal` must point to `num_states` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbpre_env_iid_new(marginal: *const f64, num_states: usize, out: *mut *mut MbpreEnv) -> MbpreStatus {
    guard(|| {
        let m = slice(marginal, num_states, "marginal")?;
        let env = EnvironmentModel::FiniteIid(FiniteIidEnv::with_marginal(m.to_vec())?);
        write(out, Box::into_raw(Box::new(MbpreEnv(env))), "out")
    })
}

/// Stationary Markov environment with a row-major transition matrix.
///
/// # Safety
/// `transition` must point to `num_states * num_states` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbpre_env_markov_new(
    transition: *const f64,
    num_states: usize,
    out: *mut *mut MbpreEnv,
) -> MbpreStatus {
    guard(|| {
        let t = slice(transition, num_states * num_states, "transition")?;
        let rows = if num_states == 0 { Vec::new() } else { rows(t, num_states) };
        let env = EnvironmentModel::FiniteMarkov(FiniteMarkovEnv::with_transition(rows)?);
        write(out, Box::into_raw(Box::new(MbpreEnv(env))), "out")
    })
}

/// # Safety
/// `env` must be NULL or a handle from an `mbpre_env_*_new` call not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mbpre_env_free(env: *mut MbpreEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Growth rate of a strategy that ignores the environment.
///
/// # Safety
/// Handles must be live, `p` must point to `len` doubles and `rate` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbpre_gamma_no_sensing(
    l: *const MbpreLandscape,
    env: *const MbpreEnv,
    p: *const f64,
    len: usize,
    rate: *mut f64,
) -> MbpreStatus {
    guard(|| {
        let (l, env) = (handle(l, "landscape")?, handle(env, "env")?);
        let p = slice(p, len, "p")?;
        let r = gamma_no_sensing(p, &l.0, &env.0)?;
        write(rate, r.rate, "rate")
    })
}

/// Growth rate of a sensing strategy given as a row-major `num_envs x num_traits` matrix.
///
/// # Safety
/// Handles must be live, `pbar` must point to `num_envs * num_traits` doubles and `rate` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbpre_gamma_sensing(
    l: *const MbpreLandscape,
    env: *const MbpreEnv,
    pbar: *const f64,
    rate: *mut f64,
) -> MbpreStatus {
    guard(|| {
        let (l, env) = (handle(l, "landscape")?, handle(env, "env")?);
        let (q, k) = (l.0.num_traits(), l.0.num_envs());
        let p = slice(pbar, q * k, "pbar")?;
        let r = gamma_sensing(&rows(p, q), &l.0, &env.0)?;
        write(rate, r.rate, "rate")
    })
}

unsafe fn optimize_with(
    l: *const MbpreLandscape,
    env: *const MbpreEnv,
    opts: *const MbpreSolverOptions,
    out: *mut *mut MbpreResult,
    sensing: bool,
) -> MbpreStatus {
    guard(|| {
        let (l, env) = (handle(l, "landscape")?, handle(env, "env")?);
        let o = solver(opts);
        let r = if sensing {
            optimize_sensing(&l.0, &env.0, &o)?
        } else {
            optimize_no_sensing(&l.0, &env.0, &o)?
        };
        write(out, Box::into_raw(Box::new(MbpreResult(r))), "out")
    })
}

/// Optimal strategy without sensing. Check [`mbpre_result_converged`] before trusting it.
///
/// # Safety
/// Handles must be live, `opts` NULL or valid, and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mbpre_optimize_no_sensing(
    l: *const MbpreLandscape,
    env: *const MbpreEnv,
    opts: *const MbpreSolverOptions,
    out: *mut *mut MbpreResult,
) -> MbpreStatus {
    optimize_with(l, env, opts, out, false)
}

/// Optimal sensing strategy.
///
/// # Safety
/// As for [`mbpre_optimize_no_sensing`].
#[no_mangle]
pub unsafe extern "C" fn mbpre_optimize_sensing(
    l: *const MbpreLandscape,
    env: *const MbpreEnv,
    opts: *const MbpreSolverOptions,
    out: *mut *mut MbpreResult,
) -> MbpreStatus {
    optimize_with(l, env, opts, out, true)
}

/// Optimal rate, or NaN for a NULL handle.
///
/// # Safety
/// `r` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn mbpre_result_rate(r: *const MbpreResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.0.rate)
}

/// Largest certificate violation of the returned strategy, or NaN for a NULL handle.
///
/// # Safety
/// `r` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn mbpre_result_certificate_gap(r: *const MbpreResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.0.certificate_gap)
}

/// # Safety
/// `r` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn mbpre_result_converged(r: *const MbpreResult) -> bool {
    r.as_ref().is_some_and(|r| r.0.converged)
}

/// Number of doubles in the strategy: `num_traits`, or `num_envs * num_traits` with sensing.
///
/// # Safety
/// `r` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn mbpre_result_strategy_len(r: *const MbpreResult) -> usize {
    r.as_ref().map_or(0, |r| flat_strategy(&r.0).len())
}

fn flat_strategy(r: &OptimizationResult) -> Vec<f64> {
    match &r.strategy.rule {
        TraitRule::NoSensing(p) => p.clone(),
        TraitRule::Sensing(p) => p.concat(),
        TraitRule::Hereditary(_) => Vec::new(),
    }
}

/// Copies the strategy into `buf`, row-major by environment when sensing.
///
/// # Safety
/// `r` must be live and `buf` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn mbpre_result_strategy(r: *const MbpreResult, buf: *mut f64, cap: usize) -> MbpreStatus {
    guard(|| {
        let p = flat_strategy(&handle(r, "result")?.0);
        if cap < p.len() {
            return Err(Fail(MbpreStatus::BufferTooSmall, format!("need {} doubles, got {cap}", p.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(p.as_ptr(), buf, p.len());
        Ok(())
    })
}

/// # Safety
/// `r` must be NULL or a result handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mbpre_result_free(r: *mut MbpreResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Optimal Gaussian strategies for fitness `c exp(-(t-e)^2 / (2 sigma1_sq))`
/// in a stationary AR(1) environment.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbpre_gaussian_optimal(
    c: f64,
    sigma1_sq: f64,
    env_mean: f64,
    env_variance: f64,
    correlation: f64,
    out: *mut MbpreGaussianOptimum,
) -> MbpreStatus {
    guard(|| {
        let env = GaussianAr1Env::new(env_mean, env_variance, correlation)?;
        let prob = GaussianProblem::new(c, sigma1_sq, env)?;
        let (p, rate) = gaussian_optimal_no_sensing(&prob);
        let (s, sensing_rate) = gaussian_optimal_sensing(&prob);
        let o = MbpreGaussianOptimum {
            mean: p.mean,
            variance: p.variance,
            rate,
            sensing_slope: s.slope,
            sensing_intercept: s.intercept,
            sensing_variance: s.variance,
            sensing_rate,
        };
        write(out, o, "out")
    })
}

/// Gains of the best mixed strategy over the best pure one and of sensing over not sensing,
/// as functions of `chi = sigma2_sq / sigma1_sq` and the correlation.
///
/// # Safety
/// `mixed` and `sensing` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mbpre_gaussian_gains(chi: f64, rho: f64, mixed: *mut f64, sensing: *mut f64) -> MbpreStatus {
    guard(|| {
        if !(chi > 0.0 && chi.is_finite()) || !(-1.0 < rho && rho < 1.0) {
            return Err(Fail(
                MbpreStatus::InvalidParameter,
                format!("need chi > 0 and |rho| < 1, got chi = {chi}, rho = {rho}"),
            ));
        }
        write(mixed, gain_mixed_over_pure(chi), "mixed")?;
        write(sensing, gain_sensing_over_no_sensing(chi, rho), "sensing")
    })
}
