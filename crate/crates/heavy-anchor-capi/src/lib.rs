//! C interface to the anchored equilibrium-seeking library.
//!
//! Scenario configuration enters as TOML text and results leave as JSON or
//! CSV strings; scenarios, certificates, and finished runs live behind
//! opaque handles. Every fallible call returns a status code, and a failing
//! call records a message retrievable with [`ha_last_error_message`] on the
//! same thread.
//!
//! Strings returned through `char**` out parameters are owned by the caller
//! and must be released with [`ha_string_free`]; handles are released with
//! their matching `*_free` function. All functions tolerate a null handle or
//! output pointer by returning [`HaStatus::NullArgument`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::fmt::Display;
use std::os::raw::c_char;
use std::ptr;

use heavy_anchor::param_synth::{ParameterCertificate, Synthesis};
use heavy_anchor::scenario::{
    build_context, compare_tables, computed_table, default_config_toml, execute, prepare,
    reference_table, run_synthesis, verify_run, RunArtifacts, ScenarioConfig, ScenarioContext,
    ScenarioError, VerifyReport,
};

/// Result of every fallible call in this interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// The scenario text failed to parse or validate.
    InvalidConfig = 3,
    /// Synthesis is provably infeasible for the requested setup.
    Infeasible = 4,
    /// Any other failure; see ha_last_error_message.
    Failed = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn fail(status: HaStatus, err: impl Display) -> HaStatus {
    let msg = CString::new(err.to_string())
        .unwrap_or_else(|_| CString::new("error message contained an interior NUL").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
    status
}

fn classify(err: &ScenarioError) -> HaStatus {
    if err.exit_code() == 2 {
        return HaStatus::Infeasible;
    }
    match err {
        ScenarioError::Parse(_) | ScenarioError::Validation(_) => HaStatus::InvalidConfig,
        _ => HaStatus::Failed,
    }
}

/// A parsed and validated scenario: game, graph, operator constants, and the
/// governing certificate tag.
pub struct HaScenario {
    ctx: ScenarioContext,
}

/// A feasible certificate: gain windows, chosen gains, and the consensus
/// floor when one applies.
pub struct HaCertificate {
    cert: ParameterCertificate,
}

/// A finished run: trajectory, diagnostics, summary, and the property
/// verdicts for the scenario's expectations.
pub struct HaRun {
    artifacts: RunArtifacts,
    verify: VerifyReport,
}

/// Version of the underlying library, as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ha_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message recorded by the most recent failing call on this thread, or null
/// when no call has failed yet. The pointer stays valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn ha_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// A commented scenario template with every default spelled out. Free with
/// ha_string_free.
#[no_mangle]
pub extern "C" fn ha_default_scenario_toml() -> *mut c_char {
    CString::new(default_config_toml())
        .map_or(ptr::null_mut(), CString::into_raw)
}

/// Release a string returned by this interface. Null is ignored.
///
/// # Safety
/// `s` must have been returned by a function of this interface and not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn ha_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn read_utf8<'a>(text: *const c_char) -> Result<&'a str, HaStatus> {
    if text.is_null() {
        return Err(fail(HaStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(text)
        .to_str()
        .map_err(|e| fail(HaStatus::InvalidUtf8, format!("string argument: {e}")))
}

fn write_string(payload: String, out: *mut *mut c_char) -> HaStatus {
    match CString::new(payload) {
        Ok(s) => {
            unsafe { *out = s.into_raw() };
            HaStatus::Ok
        }
        Err(e) => fail(HaStatus::Failed, format!("payload contained NUL: {e}")),
    }
}

/// Parse scenario TOML and build the full context behind an opaque handle.
/// Free with ha_scenario_free.
///
/// # Safety
/// `toml_text` must be a NUL-terminated string and `out_scenario` a valid
/// pointer; on success the caller owns the returned handle.
#[no_mangle]
pub unsafe extern "C" fn ha_scenario_from_toml(
    toml_text: *const c_char,
    out_scenario: *mut *mut HaScenario,
) -> HaStatus {
    if out_scenario.is_null() {
        return fail(HaStatus::NullArgument, "null output pointer");
    }
    *out_scenario = ptr::null_mut();
    let text = match read_utf8(toml_text) {
        Ok(t) => t,
        Err(status) => return status,
    };
    let config = match ScenarioConfig::from_toml_str(text) {
        Ok(c) => c,
        Err(e) => return fail(classify(&e), e),
    };
    match build_context(config) {
        Ok(ctx) => {
            *out_scenario = Box::into_raw(Box::new(HaScenario { ctx }));
            HaStatus::Ok
        }
        Err(e) => fail(classify(&e), e),
    }
}

/// Release a scenario handle. Null is ignored.
///
/// # Safety
/// `scenario` must come from ha_scenario_from_toml and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ha_scenario_free(scenario: *mut HaScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Operator moduli and the resolvent feasibility window, as JSON.
///
/// # Safety
/// `scenario` must be a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ha_scenario_analyze(
    scenario: *const HaScenario,
    out_json: *mut *mut c_char,
) -> HaStatus {
    let Some(handle) = scenario.as_ref() else {
        return fail(HaStatus::NullArgument, "null scenario handle");
    };
    if out_json.is_null() {
        return fail(HaStatus::NullArgument, "null output pointer");
    }
    let report = heavy_anchor::scenario::analyze(&handle.ctx);
    match serde_json::to_string_pretty(&report) {
        Ok(json) => write_string(json, out_json),
        Err(e) => fail(HaStatus::Failed, e),
    }
}

/// Synthesize certified gains for the scenario's governing conditions.
/// Returns Infeasible, with the reason in the last-error message, when no
/// gains exist. Free the certificate with ha_certificate_free.
///
/// # Safety
/// `scenario` must be a live handle and `out_certificate` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ha_scenario_synthesize(
    scenario: *const HaScenario,
    out_certificate: *mut *mut HaCertificate,
) -> HaStatus {
    let Some(handle) = scenario.as_ref() else {
        return fail(HaStatus::NullArgument, "null scenario handle");
    };
    if out_certificate.is_null() {
        return fail(HaStatus::NullArgument, "null output pointer");
    }
    *out_certificate = ptr::null_mut();
    match run_synthesis(&handle.ctx) {
        Ok(Synthesis::Feasible(cert)) => {
            *out_certificate = Box::into_raw(Box::new(HaCertificate { cert: *cert }));
            HaStatus::Ok
        }
        Ok(Synthesis::Infeasible { theorem, reason }) => {
            fail(HaStatus::Infeasible, format!("{theorem}: {reason}"))
        }
        Err(e) => fail(classify(&e), e),
    }
}

/// The full certificate as JSON: gain windows, chosen gains, tuning, and the
/// consensus floor with its auxiliary data.
///
/// # Safety
/// `certificate` must be a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ha_certificate_json(
    certificate: *const HaCertificate,
    out_json: *mut *mut c_char,
) -> HaStatus {
    let Some(handle) = certificate.as_ref() else {
        return fail(HaStatus::NullArgument, "null certificate handle");
    };
    if out_json.is_null() {
        return fail(HaStatus::NullArgument, "null output pointer");
    }
    match serde_json::to_string_pretty(&handle.cert) {
        Ok(json) => write_string(json, out_json),
        Err(e) => fail(HaStatus::Failed, e),
    }
}

/// The certified gains. `out_c_min` receives NaN when the scenario runs under
/// full information and no consensus gain applies.
///
/// # Safety
/// `certificate` must be a live handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ha_certificate_gains(
    certificate: *const HaCertificate,
    out_alpha: *mut f64,
    out_beta: *mut f64,
    out_c_min: *mut f64,
) -> HaStatus {
    let Some(handle) = certificate.as_ref() else {
        return fail(HaStatus::NullArgument, "null certificate handle");
    };
    if out_alpha.is_null() || out_beta.is_null() || out_c_min.is_null() {
        return fail(HaStatus::NullArgument, "null output pointer");
    }
    *out_alpha = handle.cert.alpha;
    *out_beta = handle.cert.beta;
    *out_c_min = handle.cert.c_min.unwrap_or(f64::NAN);
    HaStatus::Ok
}

/// Release a certificate handle. Null is ignored.
///
/// # Safety
/// `certificate` must come from ha_scenario_synthesize and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ha_certificate_free(certificate: *mut HaCertificate) {
    if !certificate.is_null() {
        drop(Box::from_raw(certificate));
    }
}

/// Synthesize (unless `force` takes the overrides as given), integrate, and
/// check the scenario's expected properties. Free with ha_run_free; nothing
/// is written to the filesystem.
///
/// # Safety
/// `scenario` must be a live handle and `out_run` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ha_scenario_run(
    scenario: *const HaScenario,
    force: bool,
    out_run: *mut *mut HaRun,
) -> HaStatus {
    let Some(handle) = scenario.as_ref() else {
        return fail(HaStatus::NullArgument, "null scenario handle");
    };
    if out_run.is_null() {
        return fail(HaStatus::NullArgument, "null output pointer");
    }
    *out_run = ptr::null_mut();
    let run = match prepare(&handle.ctx, force) {
        Ok(r) => r,
        Err(e) => return fail(classify(&e), e),
    };
    let artifacts = match execute(&run) {
        Ok(a) => a,
        Err(e) => return fail(classify(&e), e),
    };
    let verify = verify_run(&run, &artifacts);
    *out_run = Box::into_raw(Box::new(HaRun { artifacts, verify }));
    HaStatus::Ok
}

/// The run summary as JSON: parameters, final residuals, convergence verdict,
/// and the fitted decay rate when one is defined.
///
/// # Safety
/// `run` must be a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ha_run_summary_json(
    run: *const HaRun,
    out_json: *mut *mut c_char,
) -> HaStatus {
    let Some(handle) = run.as_ref() else {
        return fail(HaStatus::NullArgument, "null run handle");
    };
    if out_json.is_null() {
        return fail(HaStatus::NullArgument, "null output pointer");
    }
    match serde_json::to_string_pretty(&handle.artifacts.summary) {
        Ok(json) => write_string(json, out_json),
        Err(e) => fail(HaStatus::Failed, e),
    }
}

/// The recorded trajectory as CSV text with one row per sample.
///
/// # Safety
/// `run` must be a live handle and `out_csv` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ha_run_trajectory_csv(
    run: *const HaRun,
    out_csv: *mut *mut c_char,
) -> HaStatus {
    let Some(handle) = run.as_ref() else {
        return fail(HaStatus::NullArgument, "null run handle");
    };
    if out_csv.is_null() {
        return fail(HaStatus::NullArgument, "null output pointer");
    }
    let mut buf = Vec::new();
    if let Err(e) = heavy_anchor::scenario::write_trajectory_csv(&handle.artifacts.trajectory, &mut buf)
    {
        return fail(HaStatus::Failed, e);
    }
    match String::from_utf8(buf) {
        Ok(csv) => write_string(csv, out_csv),
        Err(e) => fail(HaStatus::Failed, e),
    }
}

/// The per-check verification report for the run, as JSON.
///
/// # Safety
/// `run` must be a live handle and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ha_run_verify_json(
    run: *const HaRun,
    out_json: *mut *mut c_char,
) -> HaStatus {
    let Some(handle) = run.as_ref() else {
        return fail(HaStatus::NullArgument, "null run handle");
    };
    if out_json.is_null() {
        return fail(HaStatus::NullArgument, "null output pointer");
    }
    match serde_json::to_string_pretty(&handle.verify) {
        Ok(json) => write_string(json, out_json),
        Err(e) => fail(HaStatus::Failed, e),
    }
}

/// Whether the run reached the built-in residual and consensus tolerances and
/// every verification check passed.
///
/// # Safety
/// `run` must be a live handle; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ha_run_converged(
    run: *const HaRun,
    out_converged: *mut bool,
    out_verified: *mut bool,
) -> HaStatus {
    let Some(handle) = run.as_ref() else {
        return fail(HaStatus::NullArgument, "null run handle");
    };
    if out_converged.is_null() || out_verified.is_null() {
        return fail(HaStatus::NullArgument, "null output pointer");
    }
    *out_converged = handle.artifacts.summary.converged;
    *out_verified = handle.verify.passed;
    HaStatus::Ok
}

/// Release a run handle. Null is ignored.
///
/// # Safety
/// `run` must come from ha_scenario_run and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ha_run_free(run: *mut HaRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Recompute the published parameter table, diff it cell by cell against the
/// reference, and return `{computed, reference, comparison}` as JSON.
/// `out_all_within` reports whether every cell stayed inside tolerance.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ha_reproduce_table_json(
    out_json: *mut *mut c_char,
    out_all_within: *mut bool,
) -> HaStatus {
    if out_json.is_null() || out_all_within.is_null() {
        return fail(HaStatus::NullArgument, "null output pointer");
    }
    let computed = match computed_table() {
        Ok(t) => t,
        Err(e) => return fail(classify(&e), e),
    };
    let reference = reference_table();
    let comparison = compare_tables(&computed, &reference);
    *out_all_within = comparison.all_within;
    let payload = serde_json::json!({
        "computed": computed,
        "reference": reference,
        "comparison": comparison,
    });
    match serde_json::to_string_pretty(&payload) {
        Ok(json) => write_string(json, out_json),
        Err(e) => fail(HaStatus::Failed, e),
    }
}
