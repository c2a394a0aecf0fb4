use std::path::Path;
use std::process::{Command, Output};

fn cicoord(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cicoord"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("scenario.json");
    std::fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn solve_is_byte_identical_across_runs_and_thread_counts() {
    let args = ["--no-timestamp", "solve", "--schemes", "full-ci-prob,partial-ci-det,comp-perfect", "--seed", "3"];
    let a = cicoord(&args);
    let b = cicoord(&args);
    let mut seq = vec!["--sequential"];
    seq.extend_from_slice(&args);
    let c = cicoord(&seq);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# cicoord"));
    let header = lines.next().unwrap();
    assert!(header.starts_with("config_hash,scheme,channel_seed,symbol_draw,gamma_target_db,sigma_e,status,total_power_w,power_bs_1"));
    assert!(header.ends_with("relaxation_gap,solve_iterations"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn header_carries_a_timestamp_unless_suppressed() {
    let o = cicoord(&["overhead", "--n", "2"]);
    assert!(stdout(&o).lines().next().unwrap().contains("generated_unix"));
}

#[test]
fn overhead_table_matches_closed_forms() {
    let o = cicoord(&["--no-timestamp", "overhead", "--n", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let bits = |scheme: &str| -> u64 {
        let row = text.lines().find(|l| l.split(',').nth(3) == Some(scheme)).unwrap();
        row.split(',').nth(4).unwrap().parse().unwrap()
    };
    // N(N-1)K(N chi_c + chi_s) and N^2(N-1)K chi_c with N = K = 3
    assert_eq!(bits("full-ci-det"), 3 * 2 * 3 * (3 * 10 + 140));
    assert_eq!(bits("partial-ci-prob"), 9 * 2 * 3 * 10);
    assert_eq!(bits("stat-ci"), 0);
}

#[test]
fn config_errors_exit_with_two() {
    assert_eq!(cicoord(&["solve", "--schemes", "nope"]).status.code(), Some(2));
    assert_eq!(cicoord(&["--config", "/definitely/missing.json", "solve"]).status.code(), Some(2));
    assert_eq!(cicoord(&["sweep", "--axis", "height", "--grid", "1"]).status.code(), Some(2));
    assert_eq!(cicoord(&["--ball-law", "cubic", "solve"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"n_bs": 2, "k_users": 1, "no_such_field": 1}"#);
    assert_eq!(cicoord(&["--config", &cfg, "solve"]).status.code(), Some(2));
    // every cell is occupied in the default layout
    assert_eq!(cicoord(&["audit-silent-bs"]).status.code(), Some(2));
}

#[test]
fn infeasible_instance_is_a_status_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"n_bs": 1, "k_users": 1, "m_antennas": 2, "p_max": 1e-15, "csi_error_std": 0.0}"#,
    );
    let o = cicoord(&["--no-timestamp", "--config", &cfg, "solve", "--schemes", "full-ci-det"]);
    assert_eq!(o.status.code(), Some(0));
    let row = stdout(&o).lines().nth(2).unwrap().to_string();
    assert_eq!(row.split(',').nth(6), Some("infeasible"));
}

#[test]
fn sweep_then_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.csv");
    let o = cicoord(&[
        "--no-timestamp", "sweep", "--axis", "gamma_db", "--grid", "5,15", "--schemes", "full-ci-prob,stat-ci",
        "--seeds", "2", "-o", sweep.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = cicoord(&["--no-timestamp", "report", "--input", sweep.to_str().unwrap()]);
    assert!(r.status.success());
    let text = stdout(&r);
    let rows: Vec<Vec<&str>> = text.lines().skip(2).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for row in &rows {
        assert_eq!(row[3], "2");
        assert_eq!(row[5], "1");
    }
    let power = |scheme: &str, g: &str| -> f64 {
        rows.iter().find(|r| r[1] == scheme && r[2] == g).unwrap()[6].parse().unwrap()
    };
    assert!(power("full-ci-prob", "15") > power("full-ci-prob", "5"));
}

#[test]
fn montecarlo_reports_one_satisfaction_per_user() {
    let o = cicoord(&["--no-timestamp", "montecarlo", "--schemes", "full-ci-det", "--trials", "200"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let header: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let row: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    let first = header.iter().position(|h| *h == "satisfaction_user_1").unwrap();
    assert_eq!(header.len() - first, 9);
    for v in &row[first..] {
        let p: f64 = v.parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn silent_bs_audit_runs_on_an_empty_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"k_users": [2, 2, 0], "sinr_targets_db": 0.0}"#);
    let o = cicoord(&["--no-timestamp", "--config", &cfg, "audit-silent-bs", "--schemes", "partial-ci-det,stat-ci"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for line in stdout(&o).lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[6], "optimal");
        assert_eq!(f[10].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn gen_scenario_emits_the_resolved_layout() {
    let o = cicoord(&["gen-scenario", "--seed", "4"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["seed"], 4);
    assert_eq!(v["scenario"]["users"].as_array().unwrap().len(), 9);
    assert_eq!(v["scenario"]["bs_positions"].as_array().unwrap().len(), 3);
}
