use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tmdc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmdc"))
        .args(args)
        .current_dir(cwd)
        .env_remove("TMDC_SCENARIO_PATH")
        .output()
        .expect("spawn tmdc")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const SHORT: &str = r#"
version = 1
name = "short"
duration = 3.0

[sensors]
position_noise = 0.0
accel_noise = 0.0

[[setpoints]]
time = 0.0
values = [0.0, 0.0, 0.3]
"#;

#[test]
fn run_writes_trace_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = tmdc(&["run", "hover", "--duration", "5", "--out", "out", "--seed", "9"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = fs::read_to_string(dir.path().join("out/hover_trace.csv")).unwrap();
    assert!(trace.starts_with("t,"));
    assert!(trace.lines().count() > 100);
    assert!(dir.path().join("out/hover_metrics.csv").is_file());
    assert!(String::from_utf8_lossy(&o.stdout).contains("rmse"));
}

#[test]
fn csv_precision_limits_digits() {
    let dir = tempfile::tempdir().unwrap();
    let o = tmdc(&["run", "hover", "--duration", "2", "--csv-precision", "3"], dir.path());
    assert_eq!(code(&o), 0);
    let trace = fs::read_to_string(dir.path().join("hover_trace.csv")).unwrap();
    let row = trace.lines().find(|l| !l.starts_with('#') && !l.starts_with("t,")).unwrap();
    for cell in row.split(',').filter_map(|c| c.parse::<f64>().ok()) {
        let digits = format!("{cell:e}").split('e').next().unwrap().replace(['.', '-'], "");
        assert!(digits.trim_start_matches('0').len() <= 3, "{cell}");
    }
}

#[test]
fn abort_exits_3_and_keeps_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = tmdc(&["run", "freefall_guard", "--variant", "tmaf+dmc"], dir.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("free-fall"));
    let trace = fs::read_to_string(dir.path().join("freefall_guard_trace.csv")).unwrap();
    assert!(trace.lines().count() > 10);
}

#[test]
fn invalid_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tmdc(&["run", "no_such_scenario"], dir.path())), 2);
    assert_eq!(code(&tmdc(&["run", "hover", "--variant", "pd+gt"], dir.path())), 2);
    assert_eq!(code(&tmdc(&["compare", "hover", "--variants", "tmaf+dmc,bogus"], dir.path())), 2);
    // an event beyond the shortened duration
    assert_eq!(code(&tmdc(&["run", "payload_oc", "--duration", "5"], dir.path())), 2);
    assert_eq!(code(&tmdc(&["sweep", "hover", "--stage", "tmaf", "--range", "alpha=0.1:0.2:0"], dir.path())), 2);
    fs::write(dir.path().join("bad.scn"), "version = 1\nname = \"bad\"\nduration = -1\n").unwrap();
    assert_eq!(code(&tmdc(&["validate", "bad.scn"], dir.path())), 2);
}

#[test]
fn scenario_path_is_searched() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("lib");
    fs::create_dir(&lib).unwrap();
    fs::write(lib.join("short.scn"), SHORT).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_tmdc"))
        .args(["validate", "short"])
        .current_dir(dir.path())
        .env("TMDC_SCENARIO_PATH", &lib)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&tmdc(&["validate", "short"], dir.path())), 2);
}

#[test]
fn compare_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("short.scn"), SHORT).unwrap();
    let o = tmdc(&["compare", "short.scn", "--variants", "tmaf+dmc,da+gt,mi+gt"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    let orderings = fs::read_to_string(dir.path().join("orderings.csv")).unwrap();
    // three pairs per metric
    assert_eq!(orderings.lines().count(), 1 + 9 * 3);
}

#[test]
fn single_variant_compare_is_degenerate_table() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("short.scn"), SHORT).unwrap();
    let o = tmdc(&["compare", "short.scn", "--variants", "tmaf+gt"], dir.path());
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(dir.path().join("comparison.csv")).unwrap().lines().count(), 2);
    assert_eq!(fs::read_to_string(dir.path().join("orderings.csv")).unwrap().lines().count(), 1);
}

#[test]
fn sweep_emits_fragment_and_enforces_order() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("short.scn"), SHORT).unwrap();
    let o = tmdc(&["sweep", "short.scn", "--stage", "tmaf", "--range", "alpha=0.004,0.006"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let fragment = fs::read_to_string(dir.path().join("short_sweep_tmaf.toml")).unwrap();
    assert!(fragment.contains("tuned = [\"tmaf\"]"));
    assert_eq!(fs::read_to_string(dir.path().join("short_sweep_tmaf.csv")).unwrap().lines().count(), 3);

    let o = tmdc(&["sweep", "short.scn", "--stage", "pid_p", "--range", "kp=1,2"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("order"));
}

#[test]
fn list_names_bundled_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let o = tmdc(&["list"], dir.path());
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    for name in ["hover", "payload_oc", "disturbance15N", "battery"] {
        assert!(out.contains(name));
    }
}
