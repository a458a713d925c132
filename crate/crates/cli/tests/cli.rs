use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vacimg"));
    c.env_remove("VACIMG_OUT_DIR");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

fn stderr_error(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().rev().find(|l| l.starts_with("{\"error\"")).unwrap_or_else(|| panic!("no JSON error in:\n{text}"));
    serde_json::from_str::<Value>(line).unwrap()["error"].clone()
}

fn simulate(dir: &Path, axis: &str, points: &str) -> Output {
    run(bin().args(["simulate", "--axis", axis, "--points", points, "--out"]).arg(dir).arg(config("linear_regime.json")))
}

#[test]
fn shipped_configs_parse_and_validate() {
    for name in ["linear_regime.json", "nonlinear_regime.json"] {
        let text = std::fs::read_to_string(config(name)).unwrap();
        let cfg: vacimg::config::RunConfig = serde_json::from_str(&text).unwrap();
        cfg.validate().unwrap();
    }
}

#[test]
fn zero_points_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = simulate(tmp.path(), "z", "0");
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_error(&o)["kind"], "usage");
}

#[test]
fn unknown_plot_format_is_a_usage_error() {
    let o = run(bin().args(["plot", "--format", "png", "whatever.csv"]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulation_is_reproducible_from_the_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(simulate(a.path(), "x", "21").status.success());
    assert!(simulate(b.path(), "x", "21").status.success());
    for f in ["x_scan.csv", "x_scan.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn reconstruct_without_traces_fails_with_json() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(bin().arg("reconstruct").arg(tmp.path()).args(["--method", "none"]));
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_error(&o);
    assert_eq!(e["exit_code"], 1);
    assert!(e["message"].as_str().unwrap().contains("trace"), "{e}");
}

#[test]
fn selftest_reports_the_volume_conflict_and_writes_json() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(bin().args(["selftest", "--json", "--out"]).arg(tmp.path()));
    assert_eq!(o.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("selftest.json")).unwrap()).unwrap();
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["mode volume"]);

    let o = run(bin().args(["selftest", "--wavelength", "869.4e-9", "--out"]).arg(tmp.path()));
    assert_eq!(o.status.code(), Some(1));
    let report: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("selftest.json")).unwrap()).unwrap();
    assert!(report["failed"].as_u64().unwrap() > 1);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(bin().env("VACIMG_OUT_DIR", tmp.path()).arg("selftest"));
    assert_eq!(o.status.code(), Some(1));
    assert!(tmp.path().join("selftest.json").exists());
}

#[test]
fn corrupt_csv_reports_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.csv");
    std::fs::write(&p, "axis,coordinate,mean_photon,stderr\nz,0,1,0.1\nz,1e-7,oops,0.1\n").unwrap();
    let o = run(bin().arg("plot").arg(&p));
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr_error(&o)["message"].as_str().unwrap().to_string();
    assert!(msg.contains("line 3"), "{msg}");
}

#[test]
fn simulate_reconstruct_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let o = simulate(dir, "all", "41");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let out = dir.join("rec");
    let o = run(bin().arg("reconstruct").arg(dir).args(["--method", "none", "--out"]).arg(&out));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fits: Value = serde_json::from_slice(&std::fs::read(out.join("fits.json")).unwrap()).unwrap();
    let lambda = fits["wavelength"]["value"].as_f64().unwrap();
    assert!((lambda / 790e-9 - 1.0).abs() < 0.02, "{lambda}");
    for f in ["volume.json", "isosurface.obj", "y_profile.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let o = run(bin().arg("plot").arg(out.join("volume.json")));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let svg = std::fs::read_to_string(out.join("volume_slices.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("xz slice"));

    let o = run(bin().arg("plot").arg(dir.join("z_row00.csv")).args(["--format", "csv", "--points", "7"]));
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.join("z_row00_resampled.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 7);
}

#[test]
fn amplitude_fit_on_a_single_atom_number_is_degenerate() {
    let tmp = tempfile::tempdir().unwrap();
    let o = simulate(tmp.path(), "z", "41");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let d = tmp.path();
    let o = run(bin().arg("fit-evac").arg(d.join("z_row00.csv")).arg(d.join("z_row01.csv")));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stderr_error(&o)["kind"], "degenerate");
    assert!(d.join("evac_fit.json").exists());
}
