//! C ABI for edgelift.
//!
//! Edge lists and reports live behind opaque handles that the caller frees
//! with the matching `*_free` function. Every fallible call returns an
//! [`ElStatus`]; on failure the message is available from
//! [`el_last_error`] on the same thread until the next failing call.
//! Strings returned as `char *` are owned by the caller and released with
//! [`el_string_free`]. Undefined estimates are reported as NaN.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use edgelift::analysis::analyze_edges;
use edgelift::contrasts::{class_totals, ClassTotals};
use edgelift::estimators::{estimate_effects, EffectEstimates};
use edgelift::ingest::{
    parse_edge_file, resolve_group_sizes, EdgeRecord, ExperimentConfig, ParseOptions, ParsedEdges,
};
use edgelift::permutation::{PermutationEngine, PermutationMode, PermutationPlan};
use edgelift::report::{render_report, Format, Report};
use edgelift::simulator::{simulate, SimulationParams, SimulationTruth, DEFAULT_MAX_CHAIN_DEPTH};
use edgelift::{Error, Normalization, Statistic};

/// Result of a fallible call. Values 2 and 3 match the command-line exit
/// codes for invalid input and undefined estimates.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElStatus {
    Ok = 0,
    /// Null pointer, bad enum value or non-UTF-8 string.
    InvalidArgument = 1,
    /// Malformed input data or configuration.
    InvalidInput = 2,
    /// Too few members per group, an empty edge class or a degenerate null.
    Undefined = 3,
    /// Internal failure; the library caught a panic.
    Internal = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElPermutationMode {
    Full = 0,
    Sender = 1,
    Recipient = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElNormalization {
    Realized = 0,
    Expected = 1,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(message));
}

fn fail(status: ElStatus, message: impl Into<String>) -> ElStatus {
    set_error(message.into());
    status
}

fn from_error(err: Error) -> ElStatus {
    let status = match err.exit_code() {
        3 => ElStatus::Undefined,
        _ => ElStatus::InvalidInput,
    };
    fail(status, err.to_string())
}

/// Runs `body`, turning panics into `ElStatus::Internal`.
fn guard(body: impl FnOnce() -> ElStatus) -> ElStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(ElStatus::Internal, format!("internal error: {msg}"))
        }
    }
}

macro_rules! try_el {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return from_error(e),
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(ElStatus::InvalidArgument, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Opaque edge list.
pub struct ElEdges {
    records: Vec<EdgeRecord>,
}

/// Opaque analysis report.
pub struct ElReport {
    report: Report,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ElEdge {
    pub src: u64,
    pub dest: u64,
    pub msg: u64,
    pub src_treated: bool,
    pub dest_treated: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElConfig {
    /// Treatment probability of the design, in (0, 1).
    pub p: f64,
    /// Group sizes including silent members; zero in both infers them from
    /// the edges.
    pub n_treated: u64,
    pub n_control: u64,
    pub seed: u64,
    pub iterations: u32,
    pub ci_level: f64,
    /// An `ElPermutationMode` value.
    pub mode: u32,
    /// An `ElNormalization` value.
    pub normalization: u32,
    /// Days covered by the data; zero when unknown.
    pub window_days: u32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ElClassTotals {
    pub m_tt: u64,
    pub m_tc: u64,
    pub m_ct: u64,
    pub m_cc: u64,
    pub n_tt: u64,
    pub n_tc: u64,
    pub n_ct: u64,
    pub n_cc: u64,
    pub n_treated: u64,
    pub n_control: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElEstimates {
    pub corrected_total_effect_abs: f64,
    pub corrected_lift_pct: f64,
    pub alpha_hat: f64,
    pub q1_hat: f64,
    pub standard_send_lift_pct: f64,
    pub standard_receive_lift_pct: f64,
    pub approx_lift_pct: f64,
    pub approx_alpha: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElPermutationSummary {
    pub observed: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub null_mean: f64,
    pub null_sd: f64,
    pub undefined_rate: f64,
    pub reliable: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElSimParams {
    pub n: u32,
    pub p: f64,
    pub lambda: f64,
    pub q1: f64,
    pub q2: f64,
    pub alpha: f64,
    /// Reply chain cap; zero lets chains run until they die out.
    pub max_chain_depth: u32,
    pub seed: u64,
    pub perfect_affinity: bool,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ElSimTruth {
    pub n_treated: u64,
    pub n_control: u64,
    pub expected_m_tt: f64,
    pub expected_m_tc: f64,
    pub expected_m_ct: f64,
    pub expected_m_cc: f64,
    pub true_corrected_lift: f64,
    pub true_alpha: f64,
    pub true_q1: f64,
    pub true_q2: f64,
    pub counterfactual_total_at_0: f64,
    pub counterfactual_total_at_1: f64,
}

impl From<&ClassTotals> for ElClassTotals {
    fn from(t: &ClassTotals) -> Self {
        ElClassTotals {
            m_tt: t.m_tt,
            m_tc: t.m_tc,
            m_ct: t.m_ct,
            m_cc: t.m_cc,
            n_tt: t.n_tt,
            n_tc: t.n_tc,
            n_ct: t.n_ct,
            n_cc: t.n_cc,
            n_treated: t.n_treated(),
            n_control: t.n_control(),
        }
    }
}

impl From<&EffectEstimates> for ElEstimates {
    fn from(e: &EffectEstimates) -> Self {
        let v = |x: Option<f64>| x.unwrap_or(f64::NAN);
        ElEstimates {
            corrected_total_effect_abs: e.corrected_total_effect_abs,
            corrected_lift_pct: v(e.corrected_lift_pct),
            alpha_hat: v(e.alpha_hat),
            q1_hat: v(e.q1_hat),
            standard_send_lift_pct: v(e.standard_send_lift_pct),
            standard_receive_lift_pct: v(e.standard_receive_lift_pct),
            approx_lift_pct: v(e.approx_lift_pct),
            approx_alpha: v(e.approx_alpha),
        }
    }
}

impl From<&SimulationTruth> for ElSimTruth {
    fn from(t: &SimulationTruth) -> Self {
        ElSimTruth {
            n_treated: t.n_treated,
            n_control: t.n_control,
            expected_m_tt: t.expected_m_tt,
            expected_m_tc: t.expected_m_tc,
            expected_m_ct: t.expected_m_ct,
            expected_m_cc: t.expected_m_cc,
            true_corrected_lift: t.true_corrected_lift,
            true_alpha: t.true_alpha,
            true_q1: t.true_q1,
            true_q2: t.true_q2,
            counterfactual_total_at_0: t.counterfactual_total_at_0,
            counterfactual_total_at_1: t.counterfactual_total_at_1,
        }
    }
}

impl ElConfig {
    fn to_config(self) -> Result<ExperimentConfig, ElStatus> {
        let permutation_mode = match self.mode {
            0 => PermutationMode::Full,
            1 => PermutationMode::Sender,
            2 => PermutationMode::Recipient,
            m => {
                return Err(fail(
                    ElStatus::InvalidArgument,
                    format!("unknown permutation mode {m}"),
                ))
            }
        };
        let normalization = match self.normalization {
            0 => Normalization::Realized,
            1 => Normalization::Expected,
            m => {
                return Err(fail(
                    ElStatus::InvalidArgument,
                    format!("unknown normalization {m}"),
                ))
            }
        };
        let sizes = (self.n_treated != 0 || self.n_control != 0)
            .then_some((self.n_treated, self.n_control));
        Ok(ExperimentConfig {
            p: self.p,
            n_treated: sizes.map(|s| s.0),
            n_control: sizes.map(|s| s.1),
            seed: self.seed,
            iterations: self.iterations,
            ci_level: self.ci_level,
            permutation_mode,
            normalization,
            window_days: (self.window_days != 0).then_some(self.window_days),
            ..ExperimentConfig::default()
        })
    }
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn el_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn el_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn el_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn el_config_default() -> ElConfig {
    let d = ExperimentConfig::default();
    ElConfig {
        p: d.p,
        n_treated: 0,
        n_control: 0,
        seed: d.seed,
        iterations: d.iterations,
        ci_level: d.ci_level,
        mode: ElPermutationMode::Full as u32,
        normalization: ElNormalization::Realized as u32,
        window_days: 0,
    }
}

#[no_mangle]
pub extern "C" fn el_edges_new() -> *mut ElEdges {
    Box::into_raw(Box::new(ElEdges {
        records: Vec::new(),
    }))
}

/// # Safety
/// `edges` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn el_edges_free(edges: *mut ElEdges) {
    if !edges.is_null() {
        drop(Box::from_raw(edges));
    }
}

/// Appends one record. Duplicate pairs are summed at analysis time.
///
/// # Safety
/// `edges` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn el_edges_push(
    edges: *mut ElEdges,
    src: u64,
    dest: u64,
    msg: u64,
    src_treated: bool,
    dest_treated: bool,
) -> ElStatus {
    non_null!(edges);
    if src == dest {
        return from_error(Error::SelfLoop {
            line: (*edges).records.len() + 1,
            member: src,
        });
    }
    (*edges)
        .records
        .push(EdgeRecord::new(src, dest, msg, src_treated, dest_treated));
    ElStatus::Ok
}

/// Reads an edge file into a new handle stored in `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn el_edges_load(
    path: *const c_char,
    drop_self_loops: bool,
    out: *mut *mut ElEdges,
) -> ElStatus {
    non_null!(path, out);
    guard(|| {
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(ElStatus::InvalidArgument, "path is not valid UTF-8");
        };
        let options = ParseOptions {
            drop_self_loops,
            ..ParseOptions::default()
        };
        let parsed = try_el!(parse_edge_file(path, options));
        *out = Box::into_raw(Box::new(ElEdges {
            records: parsed.edges,
        }));
        ElStatus::Ok
    })
}

/// Number of records held, or 0 for NULL.
///
/// # Safety
/// `edges` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn el_edges_len(edges: *const ElEdges) -> usize {
    if edges.is_null() {
        0
    } else {
        (*edges).records.len()
    }
}

/// # Safety
/// `edges` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn el_edges_get(
    edges: *const ElEdges,
    index: usize,
    out: *mut ElEdge,
) -> ElStatus {
    non_null!(edges, out);
    match (&*edges).records.get(index) {
        Some(r) => {
            *out = ElEdge {
                src: r.src,
                dest: r.dest,
                msg: r.msg,
                src_treated: r.src_treated,
                dest_treated: r.dest_treated,
            };
            ElStatus::Ok
        }
        None => fail(
            ElStatus::InvalidArgument,
            format!("index {index} out of range"),
        ),
    }
}

unsafe fn parsed(edges: *const ElEdges) -> edgelift::Result<ParsedEdges> {
    ParsedEdges::from_records((&*edges).records.clone())
}

/// Class totals with pair counts. Zero in both sizes infers them from the
/// edges.
///
/// # Safety
/// `edges` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn el_class_totals(
    edges: *const ElEdges,
    n_treated: u64,
    n_control: u64,
    out: *mut ElClassTotals,
) -> ElStatus {
    non_null!(edges, out);
    guard(|| {
        let parsed = try_el!(parsed(edges));
        let config = ExperimentConfig {
            n_treated: (n_treated != 0 || n_control != 0).then_some(n_treated),
            n_control: (n_treated != 0 || n_control != 0).then_some(n_control),
            ..ExperimentConfig::default()
        };
        let sizes = try_el!(resolve_group_sizes(&parsed.edges, &config)).sizes;
        *out = ElClassTotals::from(&try_el!(class_totals(&parsed.edges, sizes)));
        ElStatus::Ok
    })
}

/// Point estimates without permutation tests.
///
/// # Safety
/// `edges` and `config` must be valid pointers and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn el_estimate(
    edges: *const ElEdges,
    config: *const ElConfig,
    out: *mut ElEstimates,
) -> ElStatus {
    non_null!(edges, config, out);
    guard(|| {
        let config = match (*config).to_config() {
            Ok(c) => c,
            Err(status) => return status,
        };
        try_el!(config.validate());
        let parsed = try_el!(parsed(edges));
        let sizes = try_el!(resolve_group_sizes(&parsed.edges, &config)).sizes;
        let totals = try_el!(class_totals(&parsed.edges, sizes));
        let estimates = try_el!(estimate_effects(&totals, config.p, config.normalization));
        *out = ElEstimates::from(&estimates);
        ElStatus::Ok
    })
}

/// Permutation test of one statistic, named as on the command line (for
/// example `corrected_lift`), under the configured mode.
///
/// # Safety
/// `edges`, `config` and `statistic` must be valid pointers and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn el_permutation_test(
    edges: *const ElEdges,
    config: *const ElConfig,
    statistic: *const c_char,
    out: *mut ElPermutationSummary,
) -> ElStatus {
    non_null!(edges, config, statistic, out);
    guard(|| {
        let config = match (*config).to_config() {
            Ok(c) => c,
            Err(status) => return status,
        };
        let name = CStr::from_ptr(statistic).to_str().unwrap_or("");
        let Some(stat) = Statistic::ALL.iter().copied().find(|s| s.name() == name) else {
            return fail(
                ElStatus::InvalidArgument,
                format!("unknown statistic `{name}`"),
            );
        };
        try_el!(config.validate());
        let parsed = try_el!(parsed(edges));
        let sizes = try_el!(resolve_group_sizes(&parsed.edges, &config)).sizes;
        let plan = PermutationPlan {
            mode: config.permutation_mode,
            iterations: config.iterations,
            seed: config.seed,
            p: config.p,
            ci_level: config.ci_level,
        };
        let engine = try_el!(PermutationEngine::new(&parsed.edges, sizes, plan));
        let result = try_el!(engine
            .run(&[stat], config.normalization)
            .pop()
            .expect("one statistic requested"));
        *out = ElPermutationSummary {
            observed: result.observed,
            p_value: result.p_value,
            ci_low: result.ci_low,
            ci_high: result.ci_high,
            null_mean: result.null_mean,
            null_sd: result.null_sd,
            undefined_rate: result.undefined_rate(),
            reliable: result.is_reliable(),
        };
        ElStatus::Ok
    })
}

/// Full analysis; the new report handle is stored in `*out`.
///
/// # Safety
/// `edges` and `config` must be valid pointers and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn el_analyze(
    edges: *const ElEdges,
    config: *const ElConfig,
    out: *mut *mut ElReport,
) -> ElStatus {
    non_null!(edges, config, out);
    guard(|| {
        let config = match (*config).to_config() {
            Ok(c) => c,
            Err(status) => return status,
        };
        let report = try_el!(analyze_edges(&config, try_el!(parsed(edges))));
        *out = Box::into_raw(Box::new(ElReport { report }));
        ElStatus::Ok
    })
}

/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn el_report_free(report: *mut ElReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

unsafe fn render(report: *const ElReport, format: Format) -> *mut c_char {
    if report.is_null() {
        set_error("`report` is null".into());
        return ptr::null_mut();
    }
    match render_report(&(*report).report, format) {
        Ok(s) => c_string(s),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Report as JSON; free with `el_string_free`. NULL on failure.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn el_report_json(report: *const ElReport) -> *mut c_char {
    render(report, Format::Json)
}

/// Report as sectioned text; free with `el_string_free`. NULL on failure.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn el_report_text(report: *const ElReport) -> *mut c_char {
    render(report, Format::Text)
}

/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn el_report_estimates(
    report: *const ElReport,
    out: *mut ElEstimates,
) -> ElStatus {
    non_null!(report, out);
    *out = ElEstimates::from(&(*report).report.estimates);
    ElStatus::Ok
}

/// # Safety
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn el_report_class_totals(
    report: *const ElReport,
    out: *mut ElClassTotals,
) -> ElStatus {
    non_null!(report, out);
    *out = ElClassTotals::from(&(*report).report.class_totals);
    ElStatus::Ok
}

#[no_mangle]
pub extern "C" fn el_sim_params_default() -> ElSimParams {
    let d = SimulationParams::default();
    ElSimParams {
        n: d.n,
        p: d.p,
        lambda: d.lambda,
        q1: d.q1,
        q2: d.q2,
        alpha: d.alpha,
        max_chain_depth: d.max_chain_depth.unwrap_or(DEFAULT_MAX_CHAIN_DEPTH),
        seed: d.seed,
        perfect_affinity: d.perfect_affinity,
    }
}

/// Simulates an experiment into a new edge handle. `truth` may be NULL.
///
/// # Safety
/// `params` must be valid, `out` writable and `truth` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn el_simulate(
    params: *const ElSimParams,
    out: *mut *mut ElEdges,
    truth: *mut ElSimTruth,
) -> ElStatus {
    non_null!(params, out);
    guard(|| {
        let p = *params;
        let params = SimulationParams {
            n: p.n,
            p: p.p,
            lambda: p.lambda,
            q1: p.q1,
            q2: p.q2,
            alpha: p.alpha,
            max_chain_depth: (p.max_chain_depth != 0).then_some(p.max_chain_depth),
            seed: p.seed,
            perfect_affinity: p.perfect_affinity,
        };
        let (edges, t) = try_el!(simulate(&params));
        if !truth.is_null() {
            *truth = ElSimTruth::from(&t);
        }
        *out = Box::into_raw(Box::new(ElEdges { records: edges }));
        ElStatus::Ok
    })
}
