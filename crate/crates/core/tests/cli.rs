use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use edgelift::report::Report;

const FOUR_MEMBER: &str =
    "src,dest,msg,srcT,destT\n1,2,3,1,1\n1,3,2,1,0\n2,4,0,1,0\n3,1,1,0,1\n3,4,5,0,0\n";

fn edgelift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgelift"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn analyze_four_member_text() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "four.csv", FOUR_MEMBER);
    let out = edgelift(&[
        "analyze",
        "--input",
        &input,
        "--p",
        "0.5",
        "--iterations",
        "100",
        "--seed",
        "1",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    for rate in ["1.500000", "0.500000", "0.250000", "2.500000"] {
        assert!(
            text.contains(&format!("per pair = {rate}")),
            "missing rate {rate}"
        );
    }
    assert!(text.contains("corrected total effect: -8.000 messages"));
    assert!(text.contains("corrected lift: -40.00%"));
    assert!(text.contains("CAVEAT: alpha is invalid"));
    assert!(text.contains("corrected_lift         full"));
}

#[test]
fn analyze_four_member_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "four.csv", FOUR_MEMBER);
    let out_path = dir.path().join("report.json");
    let args = [
        "analyze",
        "--input",
        &input,
        "--iterations",
        "100",
        "--seed",
        "1",
        "--format",
        "json",
        "--normalization",
        "expected",
        "--out",
        out_path.to_str().unwrap(),
    ];
    assert!(edgelift(&args).status.success());
    let first = fs::read_to_string(&out_path).unwrap();
    assert!(edgelift(&args).status.success());
    assert_eq!(first, fs::read_to_string(&out_path).unwrap());

    let report: Report = serde_json::from_str(&first).unwrap();
    assert_eq!(report.estimates.corrected_total_effect_abs, -8.0);
    assert_eq!(report.estimates.corrected_lift_pct, Some(-0.4));
    assert!(!report.alpha.valid);
    let again = serde_json::to_string_pretty(&report).unwrap() + "\n";
    assert_eq!(again, first);
    let ci = report
        .significance_of(
            edgelift::Statistic::CorrectedEffect,
            edgelift::PermutationMode::Full,
        )
        .unwrap();
    assert!(ci.ci_low.unwrap() <= ci.ci_high.unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "1,2,x,1,0\n");
    let out = edgelift(&["analyze", "--input", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    let tiny = write(dir.path(), "tiny.csv", "1,2,1,1,0\n2,3,1,0,0\n");
    let out = edgelift(&["analyze", "--input", &tiny]);
    assert_eq!(out.status.code(), Some(3));

    let four = write(dir.path(), "four.csv", FOUR_MEMBER);
    assert_eq!(
        edgelift(&["analyze", "--input", &four, "--p", "1.0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        edgelift(&[
            "analyze",
            "--input",
            &four,
            "--n-treated",
            "1",
            "--n-control",
            "5"
        ])
        .status
        .code(),
        Some(2)
    );
    // Unknown flags are usage errors.
    assert_eq!(
        edgelift(&["analyze", "--input", &four, "--bogus"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        edgelift(&[
            "analyze",
            "--input",
            dir.path().join("none.csv").to_str().unwrap()
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn simulate_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("sim.csv");
    let out = edgelift(&[
        "simulate",
        "--n",
        "400",
        "--lambda",
        "0.05",
        "--seed",
        "4",
        "--out",
        edges.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sim.csv.truth.json")).unwrap())
            .unwrap();
    let truth = &sidecar["truth"];
    assert!((truth["true_corrected_lift"].as_f64().unwrap() - 0.1 / 0.7).abs() < 1e-12);
    assert_eq!(sidecar["params"]["n"], 400);
    let n_treated = truth["n_treated"].as_u64().unwrap().to_string();
    let n_control = truth["n_control"].as_u64().unwrap().to_string();

    let out = edgelift(&[
        "analyze",
        "--input",
        edges.to_str().unwrap(),
        "--n-treated",
        &n_treated,
        "--n-control",
        &n_control,
        "--iterations",
        "200",
        "--format",
        "json",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Report = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(!report.group_sizes.silent_uncounted);
    assert_eq!(report.group_sizes.sizes.total(), 400);
}

#[test]
fn simulate_rejects_bad_depth() {
    let dir = tempfile::tempdir().unwrap();
    let out = edgelift(&[
        "simulate",
        "--max-depth",
        "0",
        "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dump_null_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "four.csv", FOUR_MEMBER);
    let out = edgelift(&[
        "dump-null",
        "--input",
        &input,
        "--iterations",
        "25",
        "--statistic",
        "grand_total",
        "--statistic",
        "tt_excess",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "grand_total,tt_excess");
    assert_eq!(lines.len(), 26);
    // The grand total never changes under relabeling.
    assert!(lines[1..].iter().all(|l| l.starts_with("11,")));
}

#[test]
fn calibrate_small() {
    let out = edgelift(&[
        "calibrate",
        "--replicates",
        "5",
        "--n",
        "200",
        "--lambda",
        "0.05",
        "--iterations",
        "50",
        "--format",
        "json",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["outcomes"][0]["statistic"], "corrected_lift");
    assert_eq!(v["outcomes"][0]["tested"], 5);
}
