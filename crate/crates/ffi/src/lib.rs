//! C ABI for the dataflow compiler and runtime.
//!
//! Handles are opaque pointers owned by this library: every `*_new`-style
//! constructor has a matching `*_free`, strings returned as `char*` are
//! freed with `lf_string_free`, and strings borrowed from a handle live
//! until that handle is freed. All functions return [`LfStatus`]; on any
//! non-`Ok` status, `lf_last_error` carries a message for the calling
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

use latticeflow::corpus::{self, Variant};
use latticeflow::ir::{parse_dsl, serialize_graph, Deployment};
use latticeflow::registry::FunctionRegistry;
use latticeflow::runtime::{run_deployment, RunConfig};
use latticeflow::scenario::Scenario;
use latticeflow::transform::apply_script;
use latticeflow::verify::{sealed_outputs, verify_variants, Outcome};

/// Result codes for every API entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    ValidationError = 4,
    RuntimeError = 5,
    TransformError = 6,
    InvalidArgument = 7,
    /// Verification completed and found a divergence witness.
    Diverged = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', "?")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = c);
}

fn fail(status: LfStatus, msg: impl Into<String>) -> LfStatus {
    set_error(msg);
    status
}

/// Message for the most recent non-Ok status on this thread. Borrowed;
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lf_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, LfStatus> {
    if ptr.is_null() {
        return Err(fail(LfStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| fail(LfStatus::InvalidUtf8, format!("argument is not utf-8: {e}")))
}

fn give<T>(out: *mut *mut T, value: T) -> LfStatus {
    if out.is_null() {
        return fail(LfStatus::NullPointer, "null output pointer");
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    LfStatus::Ok
}

fn give_string(out: *mut *mut c_char, value: String) -> LfStatus {
    if out.is_null() {
        return fail(LfStatus::NullPointer, "null output pointer");
    }
    match CString::new(value) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            LfStatus::Ok
        }
        Err(e) => fail(LfStatus::InvalidArgument, format!("string has interior nul: {e}")),
    }
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned through a `char**` output of
/// this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

pub struct LfScenario {
    inner: Scenario,
}

pub struct LfDeployment {
    inner: Deployment,
}

pub struct LfRunResult {
    lines: Vec<CString>,
    trace: CString,
    ticks: u64,
}

/// The fixed reference scenario.
#[no_mangle]
pub extern "C" fn lf_scenario_apples(out: *mut *mut LfScenario) -> LfStatus {
    give(out, LfScenario { inner: Scenario::apples() })
}

/// A deterministic generated scenario.
#[no_mangle]
pub extern "C" fn lf_scenario_generate(
    seed: u64,
    n_clients: u32,
    max_session_len: u32,
    out: *mut *mut LfScenario,
) -> LfStatus {
    if n_clients == 0 {
        return fail(LfStatus::InvalidArgument, "n_clients must be at least 1");
    }
    give(out, LfScenario { inner: Scenario::generate(seed, n_clients, max_session_len) })
}

/// Parses a scenario TOML document.
///
/// # Safety
/// `text` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lf_scenario_from_toml(
    text: *const c_char,
    out: *mut *mut LfScenario,
) -> LfStatus {
    let text = match read_str(text) {
        Ok(t) => t,
        Err(s) => return s,
    };
    match Scenario::parse(text) {
        Ok(inner) => give(out, LfScenario { inner }),
        Err(e) => fail(LfStatus::ParseError, e.to_string()),
    }
}

/// # Safety
/// `s` must come from a scenario constructor of this library.
#[no_mangle]
pub unsafe extern "C" fn lf_scenario_free(s: *mut LfScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Builds a corpus variant deployment. `variant` is one of `orig`, `bp`,
/// `ssiv`, `pushed`, `decoupled_server`, `decoupled_client`, `replicated`.
///
/// # Safety
/// `variant` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lf_deployment_variant(
    variant: *const c_char,
    replicas: u32,
    assign_seed: i64,
    out: *mut *mut LfDeployment,
) -> LfStatus {
    let name = match read_str(variant) {
        Ok(t) => t,
        Err(s) => return s,
    };
    let Some(variant) = Variant::parse(name) else {
        return fail(LfStatus::InvalidArgument, format!("unknown variant `{name}`"));
    };
    let registry = FunctionRegistry::builtin();
    match corpus::variant_deployment(variant, replicas, assign_seed, &registry) {
        Ok(inner) => give(out, LfDeployment { inner }),
        Err(e) => fail(LfStatus::TransformError, e.to_string()),
    }
}

/// Parses a deployment TOML document (inline graphs).
///
/// # Safety
/// `text` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lf_deployment_from_toml(
    text: *const c_char,
    out: *mut *mut LfDeployment,
) -> LfStatus {
    let text = match read_str(text) {
        Ok(t) => t,
        Err(s) => return s,
    };
    let deployment = match Deployment::parse(text) {
        Ok(d) => d,
        Err(e) => return fail(LfStatus::ParseError, e.to_string()),
    };
    if let Err(e) = deployment.validate() {
        return fail(LfStatus::ValidationError, e.to_string());
    }
    give(out, LfDeployment { inner: deployment })
}

/// Renders a deployment back to TOML. Free with `lf_string_free`.
///
/// # Safety
/// `d` must be a live deployment handle.
#[no_mangle]
pub unsafe extern "C" fn lf_deployment_to_toml(
    d: *const LfDeployment,
    out: *mut *mut c_char,
) -> LfStatus {
    if d.is_null() {
        return fail(LfStatus::NullPointer, "null deployment");
    }
    give_string(out, (*d).inner.to_toml())
}

/// Applies a transform script (one `rule arg=value …` per line), yielding a
/// new deployment handle.
///
/// # Safety
/// `d` must be a live deployment handle and `script` a valid
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lf_deployment_transform(
    d: *const LfDeployment,
    script: *const c_char,
    out: *mut *mut LfDeployment,
) -> LfStatus {
    if d.is_null() {
        return fail(LfStatus::NullPointer, "null deployment");
    }
    let script = match read_str(script) {
        Ok(t) => t,
        Err(s) => return s,
    };
    let registry = FunctionRegistry::builtin();
    match apply_script(&(*d).inner, script, &registry) {
        Ok((result, _)) => give(out, LfDeployment { inner: result }),
        Err(e) => fail(LfStatus::TransformError, e.to_string()),
    }
}

/// # Safety
/// `d` must come from a deployment constructor of this library.
#[no_mangle]
pub unsafe extern "C" fn lf_deployment_free(d: *mut LfDeployment) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Canonicalizes dataflow DSL text: parse, validate, re-emit. Free the
/// result with `lf_string_free`.
///
/// # Safety
/// `dsl` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lf_graph_canonicalize(
    dsl: *const c_char,
    out: *mut *mut c_char,
) -> LfStatus {
    let text = match read_str(dsl) {
        Ok(t) => t,
        Err(s) => return s,
    };
    let graph = match parse_dsl(text) {
        Ok(g) => g,
        Err(e) => return fail(LfStatus::ParseError, e.to_string()),
    };
    let diags = graph.validate();
    if !diags.is_empty() {
        let msgs: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        return fail(LfStatus::ValidationError, msgs.join("; "));
    }
    give_string(out, serialize_graph(&graph))
}

/// Runs a deployment against a scenario to quiescence.
///
/// # Safety
/// `d` and `s` must be live handles from this library.
#[no_mangle]
pub unsafe extern "C" fn lf_run(
    d: *const LfDeployment,
    s: *const LfScenario,
    net_seed: u64,
    tick_limit: u64,
    out: *mut *mut LfRunResult,
) -> LfStatus {
    if d.is_null() || s.is_null() {
        return fail(LfStatus::NullPointer, "null deployment or scenario");
    }
    let registry = FunctionRegistry::builtin();
    let config = RunConfig {
        net_seed: Some(net_seed),
        tick_limit: (tick_limit > 0).then_some(tick_limit),
        ..RunConfig::default()
    };
    let run = match run_deployment(&(*d).inner, &(*s).inner, &registry, &config) {
        Ok(r) => r,
        Err(e) => return fail(LfStatus::RuntimeError, e.to_string()),
    };
    let sealed = match sealed_outputs(&run) {
        Ok(s) => s,
        Err(e) => return fail(LfStatus::RuntimeError, e.to_string()),
    };
    let mut lines = Vec::new();
    for ((client, class), payloads) in &sealed {
        for payload in payloads {
            let line = format!("client={client} class={class} cart={payload}");
            lines.push(CString::new(line).unwrap_or_default());
        }
    }
    let trace = CString::new(run.trace.to_string()).unwrap_or_default();
    give(out, LfRunResult { lines, trace, ticks: run.ticks })
}

/// Number of sealed output lines of a run.
///
/// # Safety
/// `r` must be a live run-result handle.
#[no_mangle]
pub unsafe extern "C" fn lf_run_result_line_count(r: *const LfRunResult) -> usize {
    if r.is_null() {
        return 0;
    }
    (*r).lines.len()
}

/// One sealed output line. Borrowed; valid while the handle lives. Null
/// when out of range.
///
/// # Safety
/// `r` must be a live run-result handle.
#[no_mangle]
pub unsafe extern "C" fn lf_run_result_line(r: *const LfRunResult, idx: usize) -> *const c_char {
    if r.is_null() {
        return ptr::null();
    }
    let result = &*r;
    match result.lines.get(idx) {
        Some(line) => line.as_ptr(),
        None => ptr::null(),
    }
}

/// The full run trace. Borrowed; valid while the handle lives.
///
/// # Safety
/// `r` must be a live run-result handle.
#[no_mangle]
pub unsafe extern "C" fn lf_run_result_trace(r: *const LfRunResult) -> *const c_char {
    if r.is_null() {
        return ptr::null();
    }
    (*r).trace.as_ptr()
}

/// Ticks the run took to quiesce.
///
/// # Safety
/// `r` must be a live run-result handle.
#[no_mangle]
pub unsafe extern "C" fn lf_run_result_ticks(r: *const LfRunResult) -> u64 {
    if r.is_null() {
        return 0;
    }
    (*r).ticks
}

/// # Safety
/// `r` must come from `lf_run`.
#[no_mangle]
pub unsafe extern "C" fn lf_run_result_free(r: *mut LfRunResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Runs comma-separated corpus variants across `n_seeds` adversarial seeds
/// and compares sealed outputs against the sequential-fold oracle. Returns
/// `Ok` when equivalent; `Diverged` (with a witness message in
/// `lf_last_error`) when not.
///
/// # Safety
/// `variants` must be a valid NUL-terminated string and `s` a live
/// scenario handle.
#[no_mangle]
pub unsafe extern "C" fn lf_verify(
    variants: *const c_char,
    s: *const LfScenario,
    base_seed: u64,
    n_seeds: u32,
    replicas: u32,
    out_runs: *mut usize,
) -> LfStatus {
    let names = match read_str(variants) {
        Ok(t) => t,
        Err(st) => return st,
    };
    if s.is_null() {
        return fail(LfStatus::NullPointer, "null scenario");
    }
    let mut parsed = Vec::new();
    for name in names.split(',') {
        match Variant::parse(name.trim()) {
            Some(v) => parsed.push(v),
            None => {
                return fail(LfStatus::InvalidArgument, format!("unknown variant `{name}`"))
            }
        }
    }
    if parsed.is_empty() || n_seeds == 0 {
        return fail(LfStatus::InvalidArgument, "need at least one variant and one seed");
    }
    let registry = FunctionRegistry::builtin();
    match verify_variants(&parsed, &(*s).inner, base_seed, n_seeds, replicas.max(1), &registry) {
        Ok(result) => {
            if !out_runs.is_null() {
                *out_runs = result.runs;
            }
            match result.outcome {
                Outcome::Equivalent => LfStatus::Ok,
                Outcome::Diverged { variant, witness_seed, detail } => fail(
                    LfStatus::Diverged,
                    format!("variant {variant} diverged at seed {witness_seed}: {detail}"),
                ),
            }
        }
        Err(e) => fail(LfStatus::RuntimeError, e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    #[test]
    fn run_apples_through_the_abi() {
        unsafe {
            let mut scenario: *mut LfScenario = ptr::null_mut();
            assert_eq!(lf_scenario_apples(&mut scenario), LfStatus::Ok);
            let mut deployment: *mut LfDeployment = ptr::null_mut();
            let name = c("ssiv");
            assert_eq!(
                lf_deployment_variant(name.as_ptr(), 1, 0, &mut deployment),
                LfStatus::Ok
            );
            let mut result: *mut LfRunResult = ptr::null_mut();
            assert_eq!(lf_run(deployment, scenario, 7, 0, &mut result), LfStatus::Ok);
            assert_eq!(lf_run_result_line_count(result), 1);
            let line = CStr::from_ptr(lf_run_result_line(result, 0)).to_str().unwrap();
            assert_eq!(
                line,
                "client=1 class=basic cart=[(item=apple,qty=2),(item=apple,qty=2),(item=apple,qty=-4)]"
            );
            assert!(lf_run_result_ticks(result) > 0);
            assert!(!lf_run_result_trace(result).is_null());
            assert!(lf_run_result_line(result, 5).is_null());
            lf_run_result_free(result);
            lf_deployment_free(deployment);
            lf_scenario_free(scenario);
        }
    }

    #[test]
    fn transform_and_canonicalize_through_the_abi() {
        unsafe {
            let mut deployment: *mut LfDeployment = ptr::null_mut();
            let name = c("orig");
            assert_eq!(
                lf_deployment_variant(name.as_ptr(), 1, 0, &mut deployment),
                LfStatus::Ok
            );
            let script = c("upgrade_to_bp\nupgrade_to_ssiv\npush_groupby_through_join\n");
            let mut transformed: *mut LfDeployment = ptr::null_mut();
            assert_eq!(
                lf_deployment_transform(deployment, script.as_ptr(), &mut transformed),
                LfStatus::Ok
            );
            let mut toml_out: *mut c_char = ptr::null_mut();
            assert_eq!(lf_deployment_to_toml(transformed, &mut toml_out), LfStatus::Ok);
            let text = CStr::from_ptr(toml_out).to_str().unwrap();
            assert!(text.contains("group_by(ssiv_bot, ssiv_merge)"));
            lf_string_free(toml_out);
            lf_deployment_free(transformed);
            lf_deployment_free(deployment);

            let dsl = c("source_stream(shopping) -> map(tag_out_addr) -> dest_sink_serde(out);");
            let mut canon: *mut c_char = ptr::null_mut();
            assert_eq!(lf_graph_canonicalize(dsl.as_ptr(), &mut canon), LfStatus::Ok);
            lf_string_free(canon);
        }
    }

    #[test]
    fn errors_set_messages_and_codes() {
        unsafe {
            let mut deployment: *mut LfDeployment = ptr::null_mut();
            let bogus = c("frobnicate");
            assert_eq!(
                lf_deployment_variant(bogus.as_ptr(), 1, 0, &mut deployment),
                LfStatus::InvalidArgument
            );
            let msg = CStr::from_ptr(lf_last_error()).to_str().unwrap();
            assert!(msg.contains("frobnicate"));

            let bad = c("x = frobnicate();");
            let mut out: *mut c_char = ptr::null_mut();
            assert_eq!(lf_graph_canonicalize(bad.as_ptr(), &mut out), LfStatus::ParseError);
            assert_eq!(
                lf_scenario_from_toml(ptr::null(), ptr::null_mut()),
                LfStatus::NullPointer
            );
        }
    }

    #[test]
    fn verify_reports_equivalence_through_the_abi() {
        unsafe {
            let mut scenario: *mut LfScenario = ptr::null_mut();
            assert_eq!(lf_scenario_generate(5, 2, 4, &mut scenario), LfStatus::Ok);
            let variants = c("ssiv,pushed");
            let mut runs = 0usize;
            assert_eq!(
                lf_verify(variants.as_ptr(), scenario, 0, 3, 2, &mut runs),
                LfStatus::Ok
            );
            assert_eq!(runs, 8);
            lf_scenario_free(scenario);
        }
    }
}
