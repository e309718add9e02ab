use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gridfeas::feasgap::{FeasibilityReport, GapExperimentRow, Verdict};
use gridfeas::io::{read_csv, read_json, Envelope, ResidualRow, GAP_CSV_HEADER};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    gridfeas::fixture_dir().join(format!("{name}.m"))
}

fn gridfeas(args: &[&str], case: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridfeas"))
        .args(args)
        .arg(case)
        .output()
        .expect("binary runs")
}

fn temp_case(name: &str, text: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("gridfeas-cli-{}-{name}.m", std::process::id()));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn validate_reports_four_passing_checks() {
    let out = gridfeas(&["validate"], &fixture("case14"));
    assert!(out.status.success());
    let env: Envelope<Value, Value> = read_json(out.stdout.as_slice()).unwrap();
    let checks = env.result["assumptions"].as_array().unwrap();
    assert_eq!(checks.len(), 4);
    assert!(checks.iter().all(|c| c["passed"] == Value::Bool(true)));
    assert_eq!(env.config["seed"], 42);
}

#[test]
fn check_feasibility_on_case14_is_ac_infeasible() {
    let out = gridfeas(&["check-feasibility"], &fixture("case14"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let env: Envelope<Value, FeasibilityReport> = read_json(out.stdout.as_slice()).unwrap();
    assert_eq!(env.result.verdict, Verdict::AcInfeasible);
    assert!(env.result.certificate.iter().all(|e| e.bus >= 1 && e.bus <= 14));
}

#[test]
fn check_feasibility_csv_lists_bus_residuals() {
    let out = gridfeas(&["check-feasibility", "--format", "csv", "--loss-mode", "fictitious-demand"], &fixture("case9"));
    assert!(out.status.success());
    let (config, rows): (_, Vec<ResidualRow>) = read_csv(out.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 9);
    assert!(config.contains(&("loss_mode".to_string(), "FictitiousDemand".to_string())));
}

#[test]
fn single_nominal_run_has_positive_gap() {
    let out = gridfeas(&["gap-experiment", "--runs", "1", "--lo", "1.0", "--hi", "1.0"], &fixture("case14"));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert!(text.lines().any(|l| l == GAP_CSV_HEADER.join(",")));
    let (config, rows): (_, Vec<GapExperimentRow>) = read_csv(out.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].gap.unwrap() > 0.0);
    assert!(config.contains(&("seed".to_string(), "42".to_string())));
}

#[test]
fn experiment_output_is_byte_identical_across_thread_counts() {
    let case = fixture("case9");
    let a = gridfeas(&["gap-experiment", "--runs", "5", "--jobs", "1", "--seed", "7"], &case);
    let b = gridfeas(&["gap-experiment", "--runs", "5", "--jobs", "3", "--seed", "7"], &case);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = gridfeas(&["gap-experiment", "--runs", "5", "--seed", "8"], &case);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn json_outputs_are_deterministic_and_round_trip() {
    for cmd in ["solve-ed", "solve-dc", "solve-ac", "power-flow", "validate"] {
        let a = gridfeas(&[cmd], &fixture("case9"));
        let b = gridfeas(&[cmd], &fixture("case9"));
        assert!(a.status.success(), "{cmd}");
        assert_eq!(a.stdout, b.stdout, "{cmd}");
        let v: Envelope<Value, Value> = read_json(a.stdout.as_slice()).unwrap();
        assert_eq!(v.config["command"], cmd);
        let again = gridfeas::io::to_canonical_json(&v).unwrap();
        assert_eq!(again.as_bytes(), a.stdout.as_slice(), "{cmd}");
    }
}

#[test]
fn out_and_trace_files_are_written() {
    let dir = std::env::temp_dir();
    let out = dir.join(format!("gridfeas-cli-{}-ac.json", std::process::id()));
    let trace = dir.join(format!("gridfeas-cli-{}-trace.csv", std::process::id()));
    let o = gridfeas(
        &["solve-ac", "--out", out.to_str().unwrap(), "--trace", trace.to_str().unwrap()],
        &fixture("case3"),
    );
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let env: Envelope<Value, Value> = read_json(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(env.result["opf"]["converged"], true);
    let (_, rows): (_, Vec<gridfeas::acopf::TraceRow>) =
        read_csv(std::io::BufReader::new(std::fs::File::open(&trace).unwrap())).unwrap();
    assert!(!rows.is_empty());
    let _ = std::fs::remove_file(out);
    let _ = std::fs::remove_file(trace);
}

#[test]
fn parse_error_exits_2_with_line_number() {
    let path = temp_case("bad", "function mpc = bad\nmpc.baseMVA = 100;\nmpc.bus = [\n\t1\t3\toops;\n];\n");
    let out = gridfeas(&["solve-dc"], &path);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
    let _ = std::fs::remove_file(path);
}

#[test]
fn bad_arguments_exit_2() {
    let case = fixture("case3");
    assert_eq!(gridfeas(&["gap-experiment", "--lo", "1.5", "--hi", "1.0"], &case).status.code(), Some(2));
    assert_eq!(gridfeas(&["gap-experiment", "--runs", "0"], &case).status.code(), Some(2));
    assert_eq!(gridfeas(&["solve-ed", "--format", "csv"], &case).status.code(), Some(2));
    assert_eq!(gridfeas(&["validate"], Path::new("/no/such/case.m")).status.code(), Some(2));
    assert_eq!(gridfeas(&["no-such-command"], &case).status.code(), Some(2));
}

#[test]
fn non_convergence_exits_1_with_diagnostics() {
    let text = "function mpc = heavy
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
\t2\t1\t3000\t0\t0\t0\t1\t1\t0\t230\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t100\t-100\t1.0\t100\t1\t10000\t0;
];
mpc.branch = [
\t1\t2\t0.02\t0.2\t0\t0\t0\t0\t0\t0\t1;
];
mpc.gencost = [
\t2\t0\t0\t3\t0.01\t10\t0;
];
";
    let path = temp_case("heavy", text);
    let out = gridfeas(&["power-flow"], &path);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("converge") || err.contains("singular"), "{err}");
    let _ = std::fs::remove_file(path);
}
