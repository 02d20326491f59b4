use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn multiflat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multiflat")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

const FLAT: &str = r#"
depths = [3]
checks = ["CH1", "CH2", "CH9"]

[[measures]]
name = "flat"
spec = { kind = "flat_patch", resolution = 512 }
"#;

#[test]
fn flat_smoke_run_caches_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FLAT);
    let out1 = dir.path().join("a");
    let o = multiflat(&["run", &cfg, "--out", out1.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let reports = out1.join("reports/flat");
    let mut files: Vec<String> =
        std::fs::read_dir(&reports).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    files.sort();
    assert_eq!(files, ["CH1_d3.json", "CH2_d3.json", "CH9_d3.json"]);
    let m = read_json(&out1.join("manifest.json"));
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["config"]["verify"]["rhs_floor"], 1e-12, "defaults are materialized");
    let stages = |m: &Value| -> Vec<String> {
        m["measures"][0]["stages"].as_array().unwrap().iter().map(|s| format!("{}:{}", s["stage"], s["status"])).collect()
    };
    assert!(stages(&m).contains(&"\"alpha\":\"computed\"".to_string()));

    // same config again: cached stages, identical reports
    let o = multiflat(&["run", &cfg, "--out", out1.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let again = read_json(&out1.join("manifest.json"));
    assert!(stages(&again).contains(&"\"alpha\":\"cached\"".to_string()));
    assert!(stages(&again).contains(&"\"betas\":\"cached\"".to_string()));

    // fresh directory from the manifest: byte-identical reports
    let out2 = dir.path().join("b");
    let o = multiflat(&["run", out1.join("manifest.json").to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    for f in &files {
        let a = std::fs::read(reports.join(f)).unwrap();
        let b = std::fs::read(out2.join("reports/flat").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let summary = std::fs::read_to_string(out2.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn unknown_check_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &FLAT.replace("\"CH9\"", "\"CH99\""));
    let o = multiflat(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("CH99") && err.contains("checks[2]"), "{err}");
}

#[test]
fn depth_floor_is_validated_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &FLAT.replace("depths = [3]", "depths = [9]"));
    let out = dir.path().join("o");
    let o = multiflat(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("depths"));
    // the manifest is still written, with the error
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["exit_code"], 1);
    assert!(m["error"].as_str().unwrap().contains("admissible"));
}

#[test]
fn no_compute_requires_a_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FLAT);
    let o = multiflat(&["run", &cfg, "--no-compute", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing cache for stage alpha"));
}

#[test]
fn failed_check_exits_two_and_series_project_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
depths = [2, 3]
checks = ["CH2", "CH4"]
output = "out"

[[measures]]
name = "cantor"
spec = { kind = "cantor4", generation = 3 }

[verify.ceilings]
CH4 = 1e-3
"#,
    );
    let out = dir.path().join("out");
    let o = multiflat(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let ch4 = read_json(&out.join("reports/cantor/CH4_d3.json"));
    assert_eq!(ch4["pass"], false);

    let o = multiflat(&["series", out.to_str().unwrap(), "carleson"]);
    assert_eq!(o.status.code(), Some(0));
    let carleson = std::fs::read_to_string(out.join("series/carleson_cantor_d3.dat")).unwrap();
    let rows: Vec<&str> = carleson.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4, "one row per generation 0..=3");
    let sums: Vec<f64> = rows.iter().map(|r| r.split_whitespace().nth(1).unwrap().parse().unwrap()).collect();
    assert!(sums.windows(2).all(|w| w[1] >= w[0]));

    let o = multiflat(&["series", out.to_str().unwrap(), "scatter"]);
    assert_eq!(o.status.code(), Some(0));
    let ch2 = read_json(&out.join("reports/cantor/CH2_d3.json"));
    let scatter = std::fs::read_to_string(out.join("series/scatter_cantor_d3.dat")).unwrap();
    let n = scatter.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(n as u64, ch2["admitted"].as_u64().unwrap());

    let o = multiflat(&["series", out.to_str().unwrap(), "cstar"]);
    assert_eq!(o.status.code(), Some(0));
    let cstar = std::fs::read_to_string(out.join("series/cstar_cantor_CH4.dat")).unwrap();
    assert_eq!(cstar.lines().filter(|l| !l.starts_with('#')).count(), 2);
}

#[test]
fn series_on_empty_dir_lists_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = multiflat(&["series", dir.path().to_str().unwrap(), "carleson"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("reports/<measure>/CH4_d<depth>.json"));
}

#[test]
fn measure_and_lattice_commands() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.txt");
    let o = multiflat(&["measure", "gen", "--spec", r#"{"kind":"cantor4","generation":4}"#, "-o", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = multiflat(&["measure", "info", file.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let info: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(info["points"], 256);
    assert!(info["regularity"]["c0_upper"].as_f64().unwrap() > 0.0);

    let lat = dir.path().join("l.json");
    let o = multiflat(&["lattice", "build", file.to_str().unwrap(), "--depth", "4", "-o", lat.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(read_json(&lat)["depth"], 4);
    let o = multiflat(&["lattice", "verify", file.to_str().unwrap(), "--depth", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let rep: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rep["partition_violations"], 0);

    std::fs::write(dir.path().join("bad.txt"), "RMEAS 1 d=2 n=1 N=1 h=0.1\n0 0 -1\n").unwrap();
    let o = multiflat(&["measure", "info", dir.path().join("bad.txt").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
