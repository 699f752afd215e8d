use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
p = 3.0

[domain]
lx = 0.5
ly = 1.0

[grid]
nx = 33
ny = 33

[initial_data]
family = "cap"
amplitude = 0.05
width = 0.3

[solver]
t_max = 0.002
symmetry_mode = "half"
snapshot_stride = 50

[fits.gates]
reason = "horizon_reached"
sup_excess_max = 1e-8
"#;

fn gbulab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gbulab")).args(args).output().expect("spawn gbulab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn small_run(root: &Path) -> std::path::PathBuf {
    let cfg = root.join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = root.join("run");
    let o = gbulab(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn malformed_config_exits_2_without_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, SMALL.replace("nx = 33", "nx = \"many\"")).unwrap();
    let out = tmp.path().join("run");
    let o = gbulab(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.nx"));
    assert!(!out.exists());
}

#[test]
fn invalid_value_exits_2_without_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, SMALL.replace("p = 3.0", "p = 1.5")).unwrap();
    let out = tmp.path().join("run");
    let o = gbulab(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn fresh_run_checks_clean_and_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let run = small_run(tmp.path());
    for f in ["meta.json", "series.csv", "report.json", "fits.json", "h_table.csv"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let o = gbulab(&["check", run.to_str().unwrap(), "--resimulate"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert!(stdout.contains("fits_replay"));
    assert!(stdout.contains("series_replay"));
}

#[test]
fn deleted_fits_are_regenerated_byte_equal() {
    let tmp = tempfile::tempdir().unwrap();
    let run = small_run(tmp.path());
    let before = fs::read(run.join("fits.json")).unwrap();
    fs::remove_file(run.join("fits.json")).unwrap();
    let o = gbulab(&["check", run.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(fs::read(run.join("fits.json")).unwrap(), before);
}

#[test]
fn truncated_snapshot_exits_5_naming_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let run = small_run(tmp.path());
    let snap = run.join("snapshots").join("0001.bin");
    let bytes = fs::read(&snap).unwrap();
    fs::write(&snap, &bytes[..bytes.len() / 2]).unwrap();
    let o = gbulab(&["check", run.to_str().unwrap()]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("0001.bin"));
}

#[test]
fn existing_run_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let run = small_run(tmp.path());
    let cfg = tmp.path().join("small.toml");
    let o = gbulab(&["run", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert_ne!(code(&o), 0);
}

#[test]
fn unknown_preset_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = gbulab(&["run", "--preset", "nope", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn mms_at_the_threshold_power_reports_without_gate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("mms.toml");
    let text = r#"
p = 3.0
[domain]
lx = 0.5
ly = 1.0
[grid]
nx = 17
ny = 17
[initial_data]
family = "manufactured"
[solver]
t_max = 0.05
[mms]
alpha = 2.0
horizon = 1.0
t_end = 0.05
ladder = [9, 17]
"#;
    fs::write(&cfg, text).unwrap();
    let o = gbulab(&["mms", cfg.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert!(stdout.contains("not gated"));
}

#[test]
fn barrier_preset_reports_nonnegative_residual() {
    let o = gbulab(&["barrier", "--preset", "p3-blowup"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["scan"]["min_residual"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["boundary_max_abs"].as_f64().unwrap(), 0.0);
}

#[test]
fn sweep_writes_one_directory_per_point() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = tmp.path().join("sweep");
    let o = gbulab(&["sweep", cfg.to_str().unwrap(), "--set", "p=2.5,3.0", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("p=2.5").join("meta.json").exists());
    assert!(out.join("p=3.0").join("meta.json").exists());
    assert!(out.join("sweep.json").exists());
}
