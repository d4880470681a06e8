//! C ABI for the damped value iteration diagnostics library.
//!
//! All functions return a [`VisStatus`]; outputs go through out-pointers.
//! Handles ([`VisMdp`], [`VisRun`]) are opaque and must be released with the
//! matching `*_free` function. Strings returned through out-pointers are
//! allocated by this library and must be released with [`vis_string_free`].
//! On any non-`Ok` status, [`vis_last_error`] returns a thread-local message
//! describing the failure (valid until the next call on the same thread).
//!
//! The generated header lives at `include/vi_spectral.h`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use libc::c_char;

use vi_spectral::aps::{FaultInjection, TerminalChoice};
use vi_spectral::generators::GeneratorConfig;
use vi_spectral::mdp::Mdp;
use vi_spectral::report::{
    run_pipeline, write_artifacts, E0Mode, ExperimentConfig, MdpSource, RunArtifacts,
};
use vi_spectral::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisStatus {
    /// Success.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument failed validation.
    InvalidArgument = 2,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 3,
    /// File read or write failed.
    Io = 4,
    /// JSON parsing or model validation failed.
    Parse = 5,
    /// Rejection sampling ran out of attempts.
    GenerationExhausted = 6,
    /// A traced run violated its own sandwich bounds.
    SandwichViolated = 7,
    /// A numerical routine failed (singular system, no eigen convergence,
    /// ill-posed weights).
    Numerical = 8,
    /// An index was out of range.
    OutOfRange = 9,
    /// An internal panic was caught at the boundary.
    Panic = 10,
}

/// Terminal distribution for the backward probability recursion.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisTerminal {
    Uniform = 0,
    StationaryOfLastMix = 1,
}

/// Opaque model handle.
pub struct VisMdp {
    inner: Mdp,
}

/// Opaque handle to a completed, fully diagnosed run.
pub struct VisRun {
    inner: RunArtifacts,
}

/// Horizon-level summary of a run, flattened for C consumers. Optional
/// quantities carry a paired `has_*` flag; when the flag is false the value
/// is zero and meaningless.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VisSummary {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub gamma_alpha: f64,
    pub assumption_unique_optimal: bool,
    pub assumption_irreducible: bool,
    pub assumption_aperiodic: bool,
    pub lambda: f64,
    pub has_lambda: bool,
    pub corollary_holds: bool,
    pub has_corollary: bool,
    pub corollary_effective_horizon: usize,
    pub max_theorem_residual: f64,
    pub has_max_theorem_residual: bool,
    pub steps_strongly_connected: usize,
    pub degenerate_rows: usize,
    pub fault_injected: bool,
}

/// One row of the per-step table, flattened for C consumers.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VisStepValues {
    pub t: usize,
    pub e_inf_norm: f64,
    pub consensus: f64,
    pub delta_norm_sq_weighted: f64,
    pub gain: f64,
    pub has_gain: bool,
    pub theorem_residual: f64,
    pub has_theorem_residual: bool,
    pub lambda2_generalized: f64,
    pub has_lambda2_generalized: bool,
    pub rayleigh_value: f64,
    pub has_rayleigh_value: bool,
    pub mix_strongly_connected: bool,
    pub has_mix_flag: bool,
    pub degenerate: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_last_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn status_for(err: &Error) -> VisStatus {
    match err {
        Error::ExhaustedAttempts { .. } => VisStatus::GenerationExhausted,
        Error::SandwichViolated { .. } => VisStatus::SandwichViolated,
        Error::InvalidConfig(_) | Error::InvalidTerminal { .. } => VisStatus::InvalidArgument,
        Error::InvalidModel(_) | Error::Json(_) => VisStatus::Parse,
        Error::Io(_) => VisStatus::Io,
        _ => VisStatus::Numerical,
    }
}

fn fail(err: &Error) -> VisStatus {
    set_last_error(&err.to_string());
    status_for(err)
}

fn guard<F: FnOnce() -> VisStatus>(body: F) -> VisStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(&format!("internal panic: {message}"));
            VisStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, VisStatus> {
    if ptr.is_null() {
        set_last_error("null string argument");
        return Err(VisStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_last_error("string argument is not valid UTF-8");
        VisStatus::InvalidUtf8
    })
}

fn write_handle<T>(out: *mut *mut T, value: T) -> VisStatus {
    if out.is_null() {
        set_last_error("null output pointer");
        return VisStatus::NullPointer;
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    VisStatus::Ok
}

/// Library version as a static string; never freed by the caller.
#[no_mangle]
pub extern "C" fn vis_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next library call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn vis_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Releases a string allocated by this library.
///
/// # Safety
/// `s` must be null or a pointer previously returned through one of this
/// library's string out-parameters, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vis_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a model from its JSON text.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn vis_mdp_from_json(
    json: *const c_char,
    out: *mut *mut VisMdp,
) -> VisStatus {
    guard(|| {
        let text = match read_str(json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        match Mdp::from_json_str(text) {
            Ok(mdp) => write_handle(out, VisMdp { inner: mdp }),
            Err(e) => fail(&e),
        }
    })
}

/// Loads and validates a model from a JSON file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be a valid
/// pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn vis_mdp_load_file(
    path: *const c_char,
    out: *mut *mut VisMdp,
) -> VisStatus {
    guard(|| {
        let path = match read_str(path) {
            Ok(p) => PathBuf::from(p),
            Err(status) => return status,
        };
        match Mdp::from_json_file(&path) {
            Ok(mdp) => write_handle(out, VisMdp { inner: mdp }),
            Err(e) => fail(&e),
        }
    })
}

/// Samples a model satisfying the structural assumption (unique optimum
/// inducing an irreducible aperiodic chain), by seeded rejection.
///
/// # Safety
/// `out` must be a valid pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn vis_mdp_generate(
    n: usize,
    m: usize,
    seed: u64,
    density: f64,
    gamma: f64,
    reward_lo: f64,
    reward_hi: f64,
    max_attempts: u32,
    out: *mut *mut VisMdp,
) -> VisStatus {
    guard(|| {
        let config = GeneratorConfig {
            n,
            m,
            seed,
            density,
            reward_range: (reward_lo, reward_hi),
            gamma,
            max_attempts,
        };
        match vi_spectral::generators::sample_until_assumption(&config) {
            Ok((mdp, _, _)) => write_handle(out, VisMdp { inner: mdp }),
            Err(e) => fail(&e),
        }
    })
}

/// Serializes a model to JSON. The string must be freed with
/// [`vis_string_free`].
///
/// # Safety
/// `mdp` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vis_mdp_to_json(mdp: *const VisMdp, out: *mut *mut c_char) -> VisStatus {
    guard(|| {
        if mdp.is_null() || out.is_null() {
            set_last_error("null argument");
            return VisStatus::NullPointer;
        }
        let json = (*mdp).inner.to_json_string();
        match CString::new(json) {
            Ok(s) => {
                *out = s.into_raw();
                VisStatus::Ok
            }
            Err(_) => {
                set_last_error("serialized JSON contained a NUL byte");
                VisStatus::Panic
            }
        }
    })
}

/// State and action counts of a model.
///
/// # Safety
/// `mdp` must be a live handle; `out_n` and `out_m` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vis_mdp_dims(
    mdp: *const VisMdp,
    out_n: *mut usize,
    out_m: *mut usize,
) -> VisStatus {
    guard(|| {
        if mdp.is_null() || out_n.is_null() || out_m.is_null() {
            set_last_error("null argument");
            return VisStatus::NullPointer;
        }
        *out_n = (*mdp).inner.n;
        *out_m = (*mdp).inner.m;
        VisStatus::Ok
    })
}

/// Discount factor of a model.
///
/// # Safety
/// `mdp` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vis_mdp_gamma(mdp: *const VisMdp, out: *mut f64) -> VisStatus {
    guard(|| {
        if mdp.is_null() || out.is_null() {
            set_last_error("null argument");
            return VisStatus::NullPointer;
        }
        *out = (*mdp).inner.gamma;
        VisStatus::Ok
    })
}

/// Releases a model handle.
///
/// # Safety
/// `mdp` must be null or a live handle, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vis_mdp_free(mdp: *mut VisMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// Runs the full pipeline on a model: traced damped iteration from a seeded
/// initial error, probability-sequence diagnostics, and spectral bounds.
/// `inject_fault` enables the documented negative-control hook (a 1e-3
/// corruption of one mix entry) so callers can verify the checks trip.
///
/// # Safety
/// `mdp` must be a live handle; `out` must be a valid pointer to receive the
/// run handle.
#[no_mangle]
pub unsafe extern "C" fn vis_run_experiment(
    mdp: *const VisMdp,
    alpha: f64,
    horizon: usize,
    e0_seed: u64,
    e0_scale: f64,
    terminal: VisTerminal,
    inject_fault: bool,
    out: *mut *mut VisRun,
) -> VisStatus {
    guard(|| {
        if mdp.is_null() {
            set_last_error("null model handle");
            return VisStatus::NullPointer;
        }
        let model = (*mdp).inner.clone();
        let assumption = match vi_spectral::mdp::check_assumption(&model) {
            Ok(a) => a,
            Err(e) => return fail(&e),
        };
        let config = ExperimentConfig {
            mdp_source: MdpSource::Provided,
            alpha,
            horizon,
            e0: E0Mode::Random {
                seed: e0_seed,
                scale: e0_scale,
            },
            aps_terminal: match terminal {
                VisTerminal::Uniform => TerminalChoice::Uniform,
                VisTerminal::StationaryOfLastMix => TerminalChoice::StationaryOfLastM,
            },
            emit_matrices: false,
        };
        let fault = inject_fault.then(|| FaultInjection::standard(horizon));
        match run_pipeline(model, assumption, &config, fault) {
            Ok(artifacts) => write_handle(out, VisRun { inner: artifacts }),
            Err(e) => fail(&e),
        }
    })
}

/// Number of steps in a run.
///
/// # Safety
/// `run` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vis_run_horizon(run: *const VisRun, out: *mut usize) -> VisStatus {
    guard(|| {
        if run.is_null() || out.is_null() {
            set_last_error("null argument");
            return VisStatus::NullPointer;
        }
        *out = (*run).inner.trace.horizon();
        VisStatus::Ok
    })
}

/// Horizon-level summary of a run.
///
/// # Safety
/// `run` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vis_run_summary(run: *const VisRun, out: *mut VisSummary) -> VisStatus {
    guard(|| {
        if run.is_null() || out.is_null() {
            set_last_error("null argument");
            return VisStatus::NullPointer;
        }
        let report = &(*run).inner.report;
        let summary = &report.summary;
        *out = VisSummary {
            n: report.n,
            m: report.m,
            horizon: report.steps.len() - 1,
            gamma: report.gamma,
            gamma_alpha: report.gamma_alpha,
            assumption_unique_optimal: report.assumption.unique_optimal,
            assumption_irreducible: report.assumption.irreducible,
            assumption_aperiodic: report.assumption.aperiodic,
            lambda: summary.lambda.unwrap_or(0.0),
            has_lambda: summary.lambda.is_some(),
            corollary_holds: summary.corollary_holds.unwrap_or(false),
            has_corollary: summary.corollary_holds.is_some(),
            corollary_effective_horizon: summary.corollary_effective_horizon.unwrap_or(0),
            max_theorem_residual: summary.max_theorem_residual.unwrap_or(0.0),
            has_max_theorem_residual: summary.max_theorem_residual.is_some(),
            steps_strongly_connected: summary.steps_strongly_connected,
            degenerate_rows: summary.degenerate_rows,
            fault_injected: report.fault.is_some(),
        };
        VisStatus::Ok
    })
}

/// Per-step values for `t` in `0 ..= horizon`.
///
/// # Safety
/// `run` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vis_run_step(
    run: *const VisRun,
    t: usize,
    out: *mut VisStepValues,
) -> VisStatus {
    guard(|| {
        if run.is_null() || out.is_null() {
            set_last_error("null argument");
            return VisStatus::NullPointer;
        }
        let steps = &(*run).inner.report.steps;
        if t >= steps.len() {
            set_last_error(&format!("step {t} out of range 0..{}", steps.len()));
            return VisStatus::OutOfRange;
        }
        let row = &steps[t];
        *out = VisStepValues {
            t: row.t,
            e_inf_norm: row.e_inf_norm,
            consensus: row.c_t,
            delta_norm_sq_weighted: row.delta_norm_sq_weighted,
            gain: row.r_t.unwrap_or(0.0),
            has_gain: row.r_t.is_some(),
            theorem_residual: row.theorem_residual.unwrap_or(0.0),
            has_theorem_residual: row.theorem_residual.is_some(),
            lambda2_generalized: row.lambda2_generalized.unwrap_or(0.0),
            has_lambda2_generalized: row.lambda2_generalized.is_some(),
            rayleigh_value: 0.0,
            has_rayleigh_value: false,
            mix_strongly_connected: row.m_strongly_connected.unwrap_or(false),
            has_mix_flag: row.m_strongly_connected.is_some(),
            degenerate: row.degenerate,
        };
        // Rayleigh values live in the spectral report, indexed by step.
        let spectral = &(*run).inner.spectral;
        if t < spectral.len() {
            if let Some(value) = spectral[t].rayleigh_value {
                (*out).rayleigh_value = value;
                (*out).has_rayleigh_value = true;
            }
        }
        VisStatus::Ok
    })
}

/// Writes `trace.csv` and `report.json` (and `matrices.json` when the run was
/// configured for it) into a directory.
///
/// # Safety
/// `run` must be a live handle; `dir` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vis_run_write_artifacts(
    run: *const VisRun,
    dir: *const c_char,
) -> VisStatus {
    guard(|| {
        if run.is_null() {
            set_last_error("null run handle");
            return VisStatus::NullPointer;
        }
        let dir = match read_str(dir) {
            Ok(d) => PathBuf::from(d),
            Err(status) => return status,
        };
        match write_artifacts(&dir, &(*run).inner) {
            Ok(_) => VisStatus::Ok,
            Err(e) => fail(&e),
        }
    })
}

/// Serializes the full report to JSON. The string must be freed with
/// [`vis_string_free`].
///
/// # Safety
/// `run` must be a live handle; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vis_run_report_json(
    run: *const VisRun,
    out: *mut *mut c_char,
) -> VisStatus {
    guard(|| {
        if run.is_null() || out.is_null() {
            set_last_error("null argument");
            return VisStatus::NullPointer;
        }
        match serde_json::to_string_pretty(&(*run).inner.report) {
            Ok(json) => match CString::new(json) {
                Ok(s) => {
                    *out = s.into_raw();
                    VisStatus::Ok
                }
                Err(_) => {
                    set_last_error("serialized JSON contained a NUL byte");
                    VisStatus::Panic
                }
            },
            Err(e) => {
                set_last_error(&e.to_string());
                VisStatus::Parse
            }
        }
    })
}

/// Releases a run handle.
///
/// # Safety
/// `run` must be null or a live handle, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vis_run_free(run: *mut VisRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
