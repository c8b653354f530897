//! C interface to the `coevolve` simulator and theory calculators.
//!
//! Every fallible call returns a [`CoevolveStatus`]; results come back
//! through out-pointers. A failed call stores a message retrievable with
//! [`coevolve_last_error`] on the same thread. Simulators are opaque handles
//! created by [`coevolve_simulator_new`] and released with
//! [`coevolve_simulator_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use coevolve::dynamics::{
    macro_step_full, ImageInjectionConfig, InitSpec, NewComponent, RunCounters, RunStreams, TextInjectionConfig,
    TrainingConfig,
};
use coevolve::model::SystemState;
use coevolve::sampling::derive_stream;
use coevolve::{theory, Error};

/// Result codes shared by every function in this interface.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoevolveStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A linear-algebra routine failed or a state became degenerate.
    Numerical = 3,
    /// The simulator already reached its horizon.
    Finished = 4,
    /// The caller's buffer is too small; the required length is reported.
    BufferTooSmall = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

/// Settings for a single simulated run.
///
/// `probs` may be null, in which case the `k` texts start uniform.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CoevolveParams {
    /// Samples per update (N).
    pub n: usize,
    /// Horizon in macro steps (T).
    pub steps: usize,
    pub dim: usize,
    pub k: usize,
    pub probs: *const f64,
    /// Initial covariance scale, each component starts at `cov_scale·I`.
    pub cov_scale: f64,
    /// Text updates per macro step.
    pub m_t: usize,
    /// Image updates per macro step.
    pub n_t: usize,
    /// Nonzero selects `N·p_i` image counts.
    pub deterministic_counts: u8,
    /// Corpus injection probability; ignored when `epsilon` is 0.
    pub alpha: f64,
    pub epsilon: f64,
    /// User images per text and step; 0 disables image injection.
    pub n0: usize,
}

/// Opaque simulator handle.
pub struct CoevolveSimulator {
    state: SystemState,
    cfg: TrainingConfig,
    text_inj: Option<TextInjectionConfig>,
    image_inj: Option<ImageInjectionConfig>,
    streams: RunStreams,
    counters: RunCounters,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> CoevolveStatus {
    match e {
        Error::NonSymmetric { .. }
        | Error::EigFailure { .. }
        | Error::NotPsd { .. }
        | Error::NotFactorizable
        | Error::AllUnderflow => CoevolveStatus::Numerical,
        _ => CoevolveStatus::InvalidArgument,
    }
}

/// Runs `f` behind a panic guard and converts its error into a status.
fn guard(f: impl FnOnce() -> Result<(), CoevolveStatus>) -> CoevolveStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CoevolveStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            CoevolveStatus::Internal
        }
    }
}

fn fail(e: Error) -> CoevolveStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), CoevolveStatus> {
    if p.is_null() {
        set_error(format!("{name} is null"));
        Err(CoevolveStatus::NullPointer)
    } else {
        Ok(())
    }
}

/// Writes `v` through `out`.
///
/// # Safety
/// `out` must be valid for a write of `T`.
unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), CoevolveStatus> {
    non_null(out, "output pointer")?;
    out.write(v);
    Ok(())
}

fn build(params: &CoevolveParams, seed: u64, run: u64) -> Result<CoevolveSimulator, Error> {
    if params.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let probs = if params.probs.is_null() {
        vec![1.0 / params.k as f64; params.k]
    } else {
        // SAFETY: the caller promises `probs` points at `k` doubles.
        unsafe { std::slice::from_raw_parts(params.probs, params.k) }.to_vec()
    };
    let mut cfg = TrainingConfig::constant(
        params.n,
        params.steps,
        params.m_t,
        params.n_t,
        params.dim,
        InitSpec {
            probs,
            cov_scale: params.cov_scale,
        },
    );
    cfg.deterministic_counts = params.deterministic_counts != 0;
    cfg.validate()?;
    let text_inj = (params.epsilon != 0.0).then_some(TextInjectionConfig {
        alpha: params.alpha,
        epsilon: params.epsilon,
        new_component: NewComponent::default(),
    });
    if let Some(inj) = &text_inj {
        inj.validate()?;
    }
    let state = cfg.init.build(cfg.dim)?;
    let image_inj = (params.n0 > 0).then(|| ImageInjectionConfig::matching(&state, params.n0));
    Ok(CoevolveSimulator {
        streams: RunStreams::new(seed, run, text_inj.is_some(), image_inj.is_some()),
        state,
        cfg,
        text_inj,
        image_inj,
        counters: RunCounters::default(),
    })
}

/// Creates a simulator for run `run` of base seed `seed`.
///
/// The trajectory is identical to the one the command-line tool produces for
/// the same settings, seed and run index.
///
/// # Safety
/// `params` must point at a valid [`CoevolveParams`] whose `probs` (if not
/// null) holds `k` doubles; `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn coevolve_simulator_new(
    params: *const CoevolveParams,
    seed: u64,
    run: u64,
    out: *mut *mut CoevolveSimulator,
) -> CoevolveStatus {
    guard(|| {
        non_null(params, "params")?;
        non_null(out, "out")?;
        let sim = build(&*params, seed, run).map_err(fail)?;
        out.write(Box::into_raw(Box::new(sim)));
        Ok(())
    })
}

/// Releases a simulator. Null is accepted and ignored.
///
/// # Safety
/// `sim` must come from [`coevolve_simulator_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn coevolve_simulator_free(sim: *mut CoevolveSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances one macro step.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn coevolve_simulator_step(sim: *mut CoevolveSimulator) -> CoevolveStatus {
    guard(|| {
        non_null(sim, "sim")?;
        let s = &mut *sim;
        if s.state.t >= s.cfg.steps {
            set_error("horizon reached");
            return Err(CoevolveStatus::Finished);
        }
        macro_step_full(
            &mut s.state,
            &s.cfg,
            s.text_inj.as_ref(),
            s.image_inj.as_ref(),
            &mut s.streams,
            &mut s.counters,
        )
        .map_err(fail)?;
        Ok(())
    })
}

/// Current macro step index.
///
/// # Safety
/// `sim` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn coevolve_simulator_time(sim: *const CoevolveSimulator, out: *mut usize) -> CoevolveStatus {
    guard(|| {
        non_null(sim, "sim")?;
        write_out(out, (*sim).state.t)
    })
}

/// Current corpus size, which grows with text injection.
///
/// # Safety
/// `sim` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn coevolve_simulator_num_texts(
    sim: *const CoevolveSimulator,
    out: *mut usize,
) -> CoevolveStatus {
    guard(|| {
        non_null(sim, "sim")?;
        write_out(out, (*sim).state.text.len())
    })
}

/// Copies the text probabilities into `buf`.
///
/// `written` always receives the corpus size; if `len` is smaller the call
/// returns `BufferTooSmall` and copies nothing.
///
/// # Safety
/// `sim` must be a live handle, `buf` valid for `len` doubles and `written`
/// valid for a write.
#[no_mangle]
pub unsafe extern "C" fn coevolve_simulator_probs(
    sim: *const CoevolveSimulator,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> CoevolveStatus {
    guard(|| {
        non_null(sim, "sim")?;
        let p = (*sim).state.text.probs();
        write_out(written, p.len())?;
        if len < p.len() {
            set_error(format!("buffer holds {len} values, need {}", p.len()));
            return Err(CoevolveStatus::BufferTooSmall);
        }
        non_null(buf, "buf")?;
        ptr::copy_nonoverlapping(p.as_ptr(), buf, p.len());
        Ok(())
    })
}

/// Text diversity `1 − Σ p²` of the current state.
///
/// # Safety
/// `sim` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn coevolve_simulator_text_diversity(
    sim: *const CoevolveSimulator,
    out: *mut f64,
) -> CoevolveStatus {
    guard(|| {
        non_null(sim, "sim")?;
        write_out(out, coevolve::model::text_diversity(&(*sim).state.text))
    })
}

/// Image diversity and fidelity of component `index`.
///
/// # Safety
/// `sim` must be a live handle; `diversity` and `fidelity` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn coevolve_simulator_image_metrics(
    sim: *const CoevolveSimulator,
    index: usize,
    diversity: *mut f64,
    fidelity: *mut f64,
) -> CoevolveStatus {
    guard(|| {
        non_null(sim, "sim")?;
        let s = &*sim;
        let Some(c) = s.state.images.get(index) else {
            set_error(format!("component {index} of {}", s.state.images.len()));
            return Err(CoevolveStatus::InvalidArgument);
        };
        let d = coevolve::model::image_diversity(c).map_err(fail)?;
        write_out(diversity, d)?;
        write_out(fidelity, coevolve::model::image_fidelity(c))
    })
}

/// Copies the most recent error message of this thread into `buf` as a
/// NUL-terminated string, truncating if needed.
///
/// Returns the full message length excluding the terminator.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null with `len == 0`.
#[no_mangle]
pub unsafe extern "C" fn coevolve_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            buf.add(n).write(0);
        }
        msg.len()
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn coevolve_status_str(status: CoevolveStatus) -> *const c_char {
    let s: &'static CStr = match status {
        CoevolveStatus::Ok => c"ok",
        CoevolveStatus::NullPointer => c"null pointer",
        CoevolveStatus::InvalidArgument => c"invalid argument",
        CoevolveStatus::Numerical => c"numerical failure",
        CoevolveStatus::Finished => c"horizon reached",
        CoevolveStatus::BufferTooSmall => c"buffer too small",
        CoevolveStatus::Internal => c"internal error",
    };
    s.as_ptr()
}

/// `(1 − 1/N)^t · H0`.
#[no_mangle]
pub extern "C" fn coevolve_diversity_floor(h0: f64, n: usize, t: usize) -> f64 {
    theory::diversity_floor(h0, n, t)
}

/// `1 − (d+1) / (8(N+1)p)`, clamped to `[0, 1]`.
#[no_mangle]
pub extern "C" fn coevolve_image_rate_approx(d: usize, n: usize, p: f64) -> f64 {
    theory::image_rate_approx(d, n, p)
}

#[no_mangle]
pub extern "C" fn coevolve_matthew_ratio_bound(d: usize, n: usize, k: usize, eps: f64) -> f64 {
    theory::matthew_ratio_bound(d, n, k, eps)
}

#[no_mangle]
pub extern "C" fn coevolve_text_injection_floor(alpha: f64, eps: f64, n: usize) -> f64 {
    theory::text_injection_floor(alpha, eps, n)
}

/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn coevolve_frozen_text_fidelity_bound(
    c: f64,
    rho: f64,
    n: usize,
    p: f64,
    out: *mut f64,
) -> CoevolveStatus {
    guard(|| write_out(out, theory::frozen_text_fidelity_bound(c, rho, n, p).map_err(fail)?))
}

/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn coevolve_image_injection_diversity_floor(
    alpha_wishart: f64,
    n: usize,
    n0: usize,
    tr_sqrt_user: f64,
    out: *mut f64,
) -> CoevolveStatus {
    guard(|| {
        let v = theory::image_injection_diversity_floor(alpha_wishart, n, n0, tr_sqrt_user).map_err(fail)?;
        write_out(out, v)
    })
}

/// Writes the fidelity limit to `out`, or positive infinity when the
/// recursion is not contractive.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn coevolve_image_injection_fidelity_limit(
    n: usize,
    p: f64,
    n0: usize,
    tr_sigma0: f64,
    out: *mut f64,
) -> CoevolveStatus {
    guard(|| {
        let v = theory::image_injection_fidelity_limit(n, p, n0, tr_sigma0).map_err(fail)?;
        write_out(out, v.value().unwrap_or(f64::INFINITY))
    })
}

/// Monte Carlo estimate of the Wishart square-root scalar and its standard
/// error, drawn from the stream of `seed`.
///
/// # Safety
/// `alpha` and `stderr` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn coevolve_estimate_wishart_alpha(
    d: usize,
    dof: usize,
    samples: usize,
    seed: u64,
    alpha: *mut f64,
    stderr: *mut f64,
) -> CoevolveStatus {
    guard(|| {
        non_null(alpha, "alpha")?;
        non_null(stderr, "stderr")?;
        let mut rng = derive_stream(seed, 0, 0);
        let (a, se) = theory::estimate_wishart_sqrt_alpha(d, dof, samples, &mut rng).map_err(fail)?;
        write_out(alpha, a)?;
        write_out(stderr, se)
    })
}
