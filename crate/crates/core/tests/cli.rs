use std::process::{Command, Output};

fn pjac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pjac")).args(args).output().unwrap()
}

#[test]
fn configuration_errors_exit_with_two() {
    for args in [
        &["energy-gap", "--eps", "2"][..],
        &["energy-gap", "--p", "0.5"],
        &["zhukovsky", "--competitor", "phi:0"],
        &["zhukovsky", "--datum", "/nonexistent/datum.json"],
        &["check-map", "cube"],
        &["check-map", "eta", "--dump", "x.csv"],
        &["moser-demo", "--eps", "0.5,0.25"],
    ] {
        let out = pjac(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn energy_gap_csv_columns() {
    let out = pjac(&["energy-gap", "--eps", "1", "--grid", "8"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epsilon,p,E_radial,E_competitor,ratio"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row.len(), 5);
    // phi_1 of the unit datum on B_3: 2 pi int_0^3 2 r dr
    assert!((row[2] - 18.0 * std::f64::consts::PI).abs() < 1e-8);
}

#[test]
fn json_output_and_dump() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("grid.csv");
    let out = pjac(&["check-map", "counterexample", "--grid", "500", "--dump", dump.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["construction"], "counterexample");
    assert!(v["jacobian_residual"]["max"].as_f64().unwrap() < 1e-5);
    let grid = std::fs::read_to_string(&dump).unwrap();
    assert!(grid.starts_with("x,y,ux,uy,J\n"));
    assert_eq!(grid.lines().count(), 1 + 100 * 100);
}

#[test]
fn out_file_replaces_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.csv");
    let out = pjac(&["zhukovsky", "--grid", "4", "--out", path.to_str().unwrap()]);
    assert!(out.status.success() && out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 5);
    // no temporary files left behind
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}
