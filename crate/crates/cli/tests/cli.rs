//! End-to-end tests of the `redrec` binary: exit codes, CSV and JSON
//! formats, config merging, and the sweep fan-out.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn redrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_redrec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).expect("stdout is JSON")
}

/// Parse CSV text into (header fields, numeric rows, trailing comment lines).
fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<f64>>, Vec<String>) {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .expect("header line")
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    let mut comments = Vec::new();
    for line in lines {
        if line.starts_with('#') {
            comments.push(line.to_string());
        } else {
            rows.push(
                line.split(',')
                    .map(|v| v.parse::<f64>().expect("numeric cell"))
                    .collect(),
            );
        }
    }
    (header, rows, comments)
}

#[test]
fn verify_elliptic_passes_and_reports_the_closure_table() {
    let out = redrec(&["verify", "--system", "elliptic", "--k", "0.5"]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("J2*J3"));
    assert!(text.contains("-1/4*J1*J2"));
    let report = json(&out);
    assert_eq!(report["status"], "pass");
    assert_eq!(report["system"], "elliptic");
    assert!(report["checks"].as_array().expect("checks array").len() >= 6);
}

#[test]
fn verify_linear_gravity_reports_the_constant_bracket() {
    let out = redrec(&["verify", "--system", "linear-gravity"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("{j1,h} = -1"));
}

#[test]
fn verify_rejects_a_non_symplectic_system() {
    let out = redrec(&["verify", "--system", "halfplane-demo"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not symplectic"));
}

#[test]
fn simulate_headers_truncate_to_what_each_system_defines() {
    let cases = [
        (vec!["simulate", "--system", "elliptic", "--k", "0.5", "--samples", "2"],
         "t,x,y,px,py,h,j1,j2,j3,sigma"),
        (vec!["simulate", "--system", "linear-gravity", "--samples", "2"], "t,q,p,h,j1"),
        (vec!["simulate", "--system", "free-particle", "--samples", "2"],
         "t,x,y,px,py,h,j1,j2,j3,sigma"),
        (vec!["simulate", "--system", "halfplane-demo", "--samples", "2", "--t1", "0.5"],
         "t,x,y"),
    ];
    for (args, header) in cases {
        let out = redrec(&args);
        let text = stdout(&out);
        assert_eq!(text.lines().next(), Some(header), "args {args:?}");
    }
}

#[test]
fn simulate_holds_the_invariant_level_and_the_energy() {
    let out = redrec(&[
        "simulate", "--system", "elliptic", "--k", "0.5", "--state=-1,0,0,1",
    ]);
    assert_eq!(code(&out), 0);
    let (header, rows, comments) = parse_csv(&stdout(&out));
    assert_eq!(rows.len(), 1001);
    assert!(comments.is_empty());
    let sigma = header.iter().position(|c| c == "sigma").expect("sigma column");
    let h = header.iter().position(|c| c == "h").expect("h column");
    for row in &rows {
        assert!((row[sigma] - 1.0).abs() < 1e-8);
        assert!((row[h] - 0.9375).abs() < 1e-8);
    }
}

#[test]
fn simulate_flags_a_blow_up_in_the_exit_code_and_footer() {
    let out = redrec(&["simulate", "--system", "halfplane-demo", "--state", "0,1"]);
    assert_eq!(code(&out), 3);
    let (_, rows, comments) = parse_csv(&stdout(&out));
    assert_eq!(comments, vec!["# status: blow-up".to_string()]);
    // y' = y² from y(0)=1 leaves every sample grid near t = 1
    let last_t = rows.last().expect("partial rows")[0];
    assert!(last_t <= 1.0 && last_t > 0.9, "last sample at t = {last_t}");
}

#[test]
fn simulate_output_is_byte_deterministic() {
    let args = [
        "simulate", "--system", "elliptic", "--k", "0.7", "--samples", "101",
    ];
    let a = redrec(&args);
    let b = redrec(&args);
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn simulate_accepts_the_fixed_step_integrator() {
    let out = redrec(&[
        "simulate", "--system", "elliptic", "--k", "0.5", "--method", "rk4-fixed",
        "--samples", "11", "--t1", "1",
    ]);
    assert_eq!(code(&out), 0);
    let (_, rows, _) = parse_csv(&stdout(&out));
    assert_eq!(rows.len(), 11);
}

#[test]
fn reconstruct_line_mode_tracks_the_flow_with_constant_line_speed() {
    let out = redrec(&[
        "reconstruct", "--system", "elliptic", "--k", "0.5", "--mode", "line",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let m = json(&out);
    assert_eq!(m["system"], "elliptic");
    assert_eq!(m["mode"], "line");
    let errs: Vec<f64> = m["max_error"]
        .as_array()
        .expect("per-coordinate errors")
        .iter()
        .map(|v| v.as_f64().expect("number"))
        .collect();
    assert_eq!(errs.len(), 4);
    assert!(errs.iter().all(|e| *e < 1e-6));
    let mean = m["s_dot_mean"].as_f64().expect("mean");
    let stddev = m["s_dot_stddev"].as_f64().expect("stddev");
    assert!((mean - 1.875).abs() < 1e-8, "mean {mean}");
    assert!(stddev < 1e-8, "stddev {stddev}");
}

#[test]
fn reconstruct_second_mode_accepts_the_true_lift() {
    let out = redrec(&[
        "reconstruct", "--system", "elliptic", "--k", "0.5", "--mode", "second",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let m = json(&out);
    assert_eq!(m["mode"], "second");
    assert!(m["s_dot_mean"].is_null());
    assert!(m["s_dot_stddev"].is_null());
}

#[test]
fn reconstruct_second_mode_rejects_a_perturbed_lift() {
    let out = redrec(&[
        "reconstruct", "--system", "elliptic", "--k", "0.5", "--mode", "second",
        "--perturb-lift", "0.01",
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("inconsistent lift"));
}

#[test]
fn reconstruct_split_mode_matches_direct_integration() {
    let out = redrec(&[
        "reconstruct", "--system", "elliptic", "--k", "0.5", "--mode", "split",
    ]);
    assert_eq!(code(&out), 0);
    let m = json(&out);
    let errs = m["max_error"].as_array().expect("errors");
    assert!(errs.iter().all(|v| v.as_f64().expect("number") < 1e-6));
}

#[test]
fn reconstruct_exit_is_one_when_the_tolerance_is_not_met() {
    let out = redrec(&[
        "reconstruct", "--system", "elliptic", "--k", "0.5", "--mode", "line",
        "--tol", "1e-12",
    ]);
    assert_eq!(code(&out), 1);
    // metrics are still reported
    assert_eq!(json(&out)["mode"], "line");
}

#[test]
fn reconstruct_writes_the_rebuilt_trajectory_when_asked() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv = dir.path().join("rebuilt.csv");
    let report = dir.path().join("metrics.json");
    let out = redrec(&[
        "reconstruct", "--system", "elliptic", "--k", "0.5", "--mode", "line",
        "--samples", "11", "--out", csv.to_str().expect("utf-8"),
        "--report", report.to_str().expect("utf-8"),
    ]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).is_empty());
    let (header, rows, _) = parse_csv(&std::fs::read_to_string(&csv).expect("csv written"));
    assert_eq!(header.join(","), "t,x,y,px,py,h,j1,j2,j3,sigma");
    assert_eq!(rows.len(), 11);
    let m: Value =
        serde_json::from_str(&std::fs::read_to_string(&report).expect("report written"))
            .expect("valid JSON");
    assert_eq!(m["mode"], "line");
}

#[test]
fn elliptic_table_rows_satisfy_the_jacobi_identities() {
    let out = redrec(&["elliptic-table", "--k", "0.5", "--samples", "201"]);
    assert_eq!(code(&out), 0);
    let (header, rows, _) = parse_csv(&stdout(&out));
    assert_eq!(header.join(","), "t,sn,cn,dn");
    assert_eq!(rows[0], vec![0.0, 0.0, 1.0, 1.0]);
    for row in &rows {
        let (sn, cn, dn) = (row[1], row[2], row[3]);
        assert!((sn * sn + cn * cn - 1.0).abs() < 1e-12);
        assert!((dn * dn + 0.25 * sn * sn - 1.0).abs() < 1e-12);
    }
}

#[test]
fn elliptic_table_at_zero_modulus_is_trigonometric() {
    let out = redrec(&["elliptic-table", "--k", "0", "--t1", "6.28", "--samples", "101"]);
    assert_eq!(code(&out), 0);
    let (_, rows, _) = parse_csv(&stdout(&out));
    for row in &rows {
        assert!((row[1] - row[0].sin()).abs() < 1e-12);
        assert!((row[2] - row[0].cos()).abs() < 1e-12);
        assert!((row[3] - 1.0).abs() < 1e-15);
    }
}

#[test]
fn elliptic_table_rejects_a_modulus_outside_the_range() {
    for k in ["1", "1.5", "-0.1"] {
        let out = redrec(&["elliptic-table", "--k", k, "--samples", "2"]);
        assert_eq!(code(&out), 2, "k = {k}");
    }
}

#[test]
fn sweep_fans_out_into_suffixed_files() {
    let dir = tempfile::tempdir().expect("tempdir");
    let report = dir.path().join("m.json");
    let out = redrec(&[
        "reconstruct", "--system", "elliptic", "--mode", "line", "--samples", "101",
        "--t1", "2", "--sweep", "k=0.3:0.7:0.2",
        "--report", report.to_str().expect("utf-8"),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for label in ["0.3", "0.5", "0.7"] {
        let path = dir.path().join(format!("m_k{label}.json"));
        assert!(path.exists(), "missing {}", path.display());
        let m: Value = serde_json::from_str(&std::fs::read_to_string(path).expect("read"))
            .expect("valid JSON");
        assert_eq!(m["system"], "elliptic");
    }
    assert!(!Path::new(&dir.path().join("m_k0.4.json")).exists());
}

#[test]
fn sweep_exit_code_is_the_worst_of_the_runs() {
    // k = 1.0 is out of range for the elliptic system, so one run fails
    let out = redrec(&[
        "verify", "--system", "elliptic", "--sweep", "k=0.5:1.0:0.5",
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("k=1.0"));
}

#[test]
fn config_file_fills_in_flags_and_explicit_flags_win() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"system":"elliptic","k":0.5,"t1":2.0,"samples":5,"state":[-1,0,0,1]}"#,
    )
    .expect("write config");
    let out = redrec(&["simulate", "--config", cfg.to_str().expect("utf-8"), "--samples", "3"]);
    assert_eq!(code(&out), 0);
    let (_, rows, _) = parse_csv(&stdout(&out));
    assert_eq!(rows.len(), 3, "flag --samples must override the config");
    assert_eq!(rows.last().expect("rows")[0], 2.0, "t1 comes from the config");
}

#[test]
fn config_rejects_unknown_keys() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"system":"elliptic","stepsize":0.1}"#).expect("write config");
    let out = redrec(&["simulate", "--config", cfg.to_str().expect("utf-8")]);
    assert_eq!(code(&out), 2);
}

#[test]
fn usage_errors_exit_with_two() {
    let cases: &[&[&str]] = &[
        &["simulate"],                                              // no --system
        &["verify", "--system", "elliptic"],                        // missing --k
        &["verify", "--system", "nosuch"],                          // unknown system
        &["simulate", "--system", "elliptic", "--k", "0.5", "--state", "1,2"], // arity
        &["simulate", "--system", "elliptic", "--k", "0.5", "--state", "1,2,three,4"],
        &["simulate", "--system", "linear-gravity", "--k", "0.5"],  // stray modulus
        &["simulate", "--system", "elliptic", "--k", "0.5", "--t1", "0"], // empty span
        &["reconstruct", "--system", "linear-gravity", "--mode", "line"], // not planar
        &["elliptic-table"],                                        // no --k
        &["simulate", "--system", "elliptic", "--k", "0.5", "--sweep", "q=1:2:1"],
    ];
    for args in cases {
        let out = redrec(args);
        assert_eq!(code(&out), 2, "args {args:?}");
    }
}

#[test]
fn degenerate_momentum_is_a_numerical_failure() {
    // zero linear momentum has no moving line
    let out = redrec(&[
        "reconstruct", "--system", "elliptic", "--k", "0.5", "--mode", "line",
        "--state", "1,1,0,0",
    ]);
    assert_eq!(code(&out), 3);
}
