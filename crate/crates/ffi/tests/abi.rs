use std::ffi::{CStr, CString};
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};
use std::ptr;

use edgelift_ffi::*;

fn four_member() -> *mut ElEdges {
    let edges = el_edges_new();
    for (s, d, m, st, dt) in [
        (1, 2, 3, true, true),
        (1, 3, 2, true, false),
        (2, 4, 0, true, false),
        (3, 1, 1, false, true),
        (3, 4, 5, false, false),
    ] {
        assert_eq!(
            unsafe { el_edges_push(edges, s, d, m, st, dt) },
            ElStatus::Ok
        );
    }
    edges
}

fn last_error() -> String {
    let p = el_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn class_totals_of_four_member() {
    let edges = four_member();
    let mut t = ElClassTotals::default();
    assert_eq!(
        unsafe { el_class_totals(edges, 0, 0, &mut t) },
        ElStatus::Ok
    );
    assert_eq!((t.m_tt, t.m_tc, t.m_ct, t.m_cc), (3, 2, 1, 5));
    assert_eq!((t.n_tt, t.n_tc, t.n_ct, t.n_cc), (2, 4, 4, 2));
    assert_eq!(unsafe { el_edges_len(edges) }, 5);
    unsafe { el_edges_free(edges) };
}

#[test]
fn estimates_of_four_member_in_expected_mode() {
    let edges = four_member();
    let mut config = el_config_default();
    config.normalization = ElNormalization::Expected as u32;
    let mut e = ElEstimates {
        corrected_total_effect_abs: 0.0,
        corrected_lift_pct: 0.0,
        alpha_hat: 0.0,
        q1_hat: 0.0,
        standard_send_lift_pct: 0.0,
        standard_receive_lift_pct: 0.0,
        approx_lift_pct: 0.0,
        approx_alpha: 0.0,
    };
    assert_eq!(unsafe { el_estimate(edges, &config, &mut e) }, ElStatus::Ok);
    assert_eq!(e.corrected_total_effect_abs, -8.0);
    assert_eq!(e.corrected_lift_pct, -0.4);
    assert!((e.alpha_hat - 4.0 / 3.0).abs() < 1e-12);
    assert!((e.standard_send_lift_pct + 1.0 / 6.0).abs() < 1e-12);
    assert!((e.standard_receive_lift_pct + 3.0 / 7.0).abs() < 1e-12);
    unsafe { el_edges_free(edges) };
}

#[test]
fn analyze_and_render() {
    let edges = four_member();
    let mut config = el_config_default();
    config.iterations = 100;
    config.seed = 1;
    let mut report = ptr::null_mut();
    assert_eq!(
        unsafe { el_analyze(edges, &config, &mut report) },
        ElStatus::Ok
    );
    let json = unsafe { el_report_json(report) };
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"corrected_total_effect_abs\": -8.0"));
    unsafe { el_string_free(json) };

    let rendered = unsafe { el_report_text(report) };
    assert!(unsafe { CStr::from_ptr(rendered) }
        .to_str()
        .unwrap()
        .contains("corrected lift: -40.00%"));
    unsafe { el_string_free(rendered) };

    let mut t = ElClassTotals::default();
    assert_eq!(
        unsafe { el_report_class_totals(report, &mut t) },
        ElStatus::Ok
    );
    assert_eq!(t.m_cc, 5);
    unsafe {
        el_report_free(report);
        el_edges_free(edges);
    }
}

#[test]
fn error_codes_mirror_exit_codes() {
    let edges = el_edges_new();
    assert_eq!(
        unsafe { el_edges_push(edges, 7, 7, 1, true, true) },
        ElStatus::InvalidInput
    );
    assert!(last_error().contains("self-loop"));

    unsafe { el_edges_push(edges, 1, 2, 1, true, false) };
    let mut t = ElClassTotals::default();
    assert_eq!(
        unsafe { el_class_totals(edges, 0, 0, &mut t) },
        ElStatus::Undefined
    );
    assert!(last_error().contains("at least two"));

    let mut config = el_config_default();
    config.p = 1.5;
    let mut report = ptr::null_mut();
    assert_eq!(
        unsafe { el_analyze(edges, &config, &mut report) },
        ElStatus::InvalidInput
    );
    assert!(report.is_null());

    config = el_config_default();
    config.mode = 9;
    assert_eq!(
        unsafe { el_analyze(edges, &config, &mut report) },
        ElStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { el_analyze(ptr::null(), &config, &mut report) },
        ElStatus::InvalidArgument
    );
    assert!(last_error().contains("edges"));
    unsafe { el_edges_free(edges) };
}

#[test]
fn inconsistent_flags_are_rejected_at_analysis() {
    let edges = el_edges_new();
    unsafe {
        el_edges_push(edges, 1, 2, 1, true, false);
        el_edges_push(edges, 2, 1, 1, true, false);
    }
    let mut t = ElClassTotals::default();
    assert_eq!(
        unsafe { el_class_totals(edges, 0, 0, &mut t) },
        ElStatus::InvalidInput
    );
    assert!(last_error().contains("inconsistent"));
    unsafe { el_edges_free(edges) };
}

#[test]
fn load_missing_file() {
    let path = CString::new("/nonexistent/edges.csv").unwrap();
    let mut edges = ptr::null_mut();
    assert_eq!(
        unsafe { el_edges_load(path.as_ptr(), false, &mut edges) },
        ElStatus::InvalidInput
    );
    assert!(edges.is_null());
}

#[test]
fn load_round_trip() {
    let path = std::env::temp_dir().join(format!("edgelift-ffi-{}.csv", std::process::id()));
    std::fs::write(&path, "src,dest,msg,srcT,destT\n1,2,3,1,1\n1,2,1,1,1\n").unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut edges = ptr::null_mut();
    assert_eq!(
        unsafe { el_edges_load(c_path.as_ptr(), false, &mut edges) },
        ElStatus::Ok
    );
    let mut e = ElEdge::default();
    assert_eq!(unsafe { el_edges_len(edges) }, 1);
    assert_eq!(unsafe { el_edges_get(edges, 0, &mut e) }, ElStatus::Ok);
    assert_eq!((e.src, e.dest, e.msg), (1, 2, 4));
    assert_eq!(
        unsafe { el_edges_get(edges, 1, &mut e) },
        ElStatus::InvalidArgument
    );
    unsafe { el_edges_free(edges) };
    std::fs::remove_file(path).unwrap();
}

#[test]
fn simulate_reports_truth() {
    let mut params = el_sim_params_default();
    params.n = 200;
    params.seed = 3;
    let mut edges = ptr::null_mut();
    let mut truth = ElSimTruth::default();
    assert_eq!(
        unsafe { el_simulate(&params, &mut edges, &mut truth) },
        ElStatus::Ok
    );
    assert_eq!(truth.n_treated + truth.n_control, 200);
    assert!((truth.true_corrected_lift - 0.1 / 0.7).abs() < 1e-12);
    assert!(unsafe { el_edges_len(edges) } > 0);

    let mut s = ElPermutationSummary {
        observed: 0.0,
        p_value: 0.0,
        ci_low: 0.0,
        ci_high: 0.0,
        null_mean: 0.0,
        null_sd: 0.0,
        undefined_rate: 0.0,
        reliable: false,
    };
    let mut config = el_config_default();
    config.iterations = 50;
    config.n_treated = truth.n_treated;
    config.n_control = truth.n_control;
    let stat = CString::new("tt_excess").unwrap();
    assert_eq!(
        unsafe { el_permutation_test(edges, &config, stat.as_ptr(), &mut s) },
        ElStatus::Ok
    );
    assert!(s.reliable && s.p_value > 0.0 && s.p_value <= 1.0);
    assert!(s.ci_low <= s.ci_high);
    let bad = CString::new("nope").unwrap();
    assert_eq!(
        unsafe { el_permutation_test(edges, &config, bad.as_ptr(), &mut s) },
        ElStatus::InvalidArgument
    );

    params.alpha = 1.0;
    let mut other = ptr::null_mut();
    assert_eq!(
        unsafe { el_simulate(&params, &mut other, ptr::null_mut()) },
        ElStatus::InvalidInput
    );
    unsafe { el_edges_free(edges) };
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(el_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(include.join("edgelift.h")).unwrap();
    let source =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .filter_map(|rest| rest.split('(').next())
        .collect();
    assert!(exports.len() >= 20);
    for name in &exports {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }

    let program = r#"
#include "edgelift.h"
int main(void) {
    ElConfig config = el_config_default();
    ElEdges *edges = el_edges_new();
    ElReport *report = NULL;
    ElStatus status = el_edges_push(edges, 1, 2, 3, true, false);
    if (status == EL_STATUS_OK) status = el_analyze(edges, &config, &report);
    el_report_free(report);
    el_edges_free(edges);
    return (int)status;
}
"#;
    let mut child = match Command::new("cc")
        .args([
            "-std=c99",
            "-Wall",
            "-Werror",
            "-fsyntax-only",
            "-x",
            "c",
            "-I",
        ])
        .arg(&include)
        .arg("-")
        .stdin(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
    {
        Ok(child) => child,
        Err(e) => panic!("a C compiler is required for this test: {e}"),
    };
    child
        .stdin
        .take()
        .unwrap()
        .write_all(program.as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
