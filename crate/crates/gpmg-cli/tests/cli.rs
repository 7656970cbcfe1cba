//! End-to-end tests of the `gpmg` binary: exit codes, artifact shapes,
//! summary output.

use std::path::Path;
use std::process::{Command, Output};

fn gpmg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpmg"))
        .args(args)
        .output()
        .expect("binary must spawn")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.conf");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).trim().to_string()
}

#[test]
fn missing_config_path_exits_with_io_code() {
    let out = gpmg(&["run", "/no/such/file.conf"]);
    assert_eq!(out.status.code(), Some(4));
    let err = stderr_line(&out);
    assert!(err.starts_with("error: io:"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn bad_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "dim = 2\nzta = 1\n");
    let out = gpmg(&["run", &conf]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_line(&out);
    assert!(err.starts_with("error: config:"), "{err}");
    assert!(err.contains("line 2") && err.contains("zta"), "{err}");
}

#[test]
fn bad_mode_flag_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write_config(dir.path(), "dim = 1\ncells_per_axis = 4\nn_levels = 1\n");
    let out = gpmg(&["run", &conf, "--mode", "fast"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).contains("fast"));
}

#[test]
fn stalled_solver_exits_with_solver_code() {
    let dir = tempfile::tempdir().unwrap();
    // One damped iteration at strong interaction cannot reach 1e-10, and
    // the explicit damping value rules out automatic restarts.
    let conf = write_config(
        dir.path(),
        "dim = 2\ncells_per_axis = 4\nn_levels = 1\nzeta = 100\ngammas = 1,1\n\
         max_iters = 1\ndamping = 0.3\n",
    );
    let out_dir = dir.path().join("out");
    let out = gpmg(&["run", &conf, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_line(&out);
    assert!(err.starts_with("error: solver:"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn desk_scale_run_writes_the_documented_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("artifacts");
    let conf = write_config(
        dir.path(),
        &format!(
            "dim = 3\ncells_per_axis = 4\nn_levels = 4\nzeta = 1\ngammas = 1,1,1\n\
             output_dir = {}\n",
            out_dir.display()
        ),
    );
    let out = gpmg(&["run", &conf]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_line(&out));

    let csv = std::fs::read_to_string(out_dir.join("run.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "level,elements,dofs,h_max,lambda,residual,norm_drift,scf_iterations,newton_method,newton_iters,newton_residual,build_seconds,solve_seconds"
    );
    let elements: Vec<&str> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(elements, ["384", "3072", "24576", "196608"]);

    let dat = std::fs::read_to_string(out_dir.join("lambda.dat")).unwrap();
    assert!(dat.starts_with("# dofs lambda solve_seconds"));
    assert_eq!(dat.lines().count(), 5);

    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("level") && stdout.contains("elements"),
        "{stdout}"
    );
    assert!(stdout.contains("196608"), "{stdout}");
    assert!(stdout.contains("lambda"), "{stdout}");

    // Re-running with the same config overwrites the artifacts in place.
    let again = gpmg(&["run", &conf, "--quiet"]);
    assert_eq!(again.status.code(), Some(0));
    assert!(again.stdout.is_empty());
    let csv2 = std::fs::read_to_string(out_dir.join("run.csv")).unwrap();
    assert_eq!(csv2.lines().count(), csv.lines().count());
}

#[test]
fn mode_both_adds_compare_and_error_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("both");
    let conf = write_config(
        dir.path(),
        "dim = 2\ncells_per_axis = 4\nn_levels = 3\nzeta = 1\ngammas = 1,1\n",
    );
    let out = gpmg(&[
        "run",
        &conf,
        "--mode",
        "both",
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_line(&out));

    let compare = std::fs::read_to_string(out_dir.join("compare.csv")).unwrap();
    assert!(compare.starts_with(
        "level,dofs,lambda_multigrid,lambda_direct,lambda_gap,l2_distance,seconds_multigrid,seconds_direct"
    ));
    assert_eq!(compare.lines().count(), 4);

    let errors = std::fs::read_to_string(out_dir.join("errors.csv")).unwrap();
    assert!(errors.starts_with("level,err_lambda,err_h1,err_l2,order_lambda,order_h1,order_l2"));
    // Levels 1 and 2 measured against the level-3 direct solution.
    assert_eq!(errors.lines().count(), 3);
    assert!(out_dir.join("errors.dat").exists());
}

#[test]
fn vtk_export_writes_one_file_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("vtk");
    let conf = write_config(
        dir.path(),
        "dim = 2\ncells_per_axis = 4\nn_levels = 2\nzeta = 1\ngammas = 1,1\n",
    );
    let out = gpmg(&[
        "run",
        &conf,
        "--out",
        out_dir.to_str().unwrap(),
        "--export-vtk",
        "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_line(&out));
    for level in 1..=2 {
        let text = std::fs::read_to_string(out_dir.join(format!("level_{level}.vtk"))).unwrap();
        assert!(
            text.starts_with("# vtk DataFile Version 3.0"),
            "level {level}"
        );
        assert!(text.contains("SCALARS u double 1"));
    }
}

#[test]
fn help_documents_the_csv_schemas() {
    let out = gpmg(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("level,elements,dofs,h_max,lambda"), "{text}");
    assert!(text.contains("level,err_lambda,err_h1,err_l2"), "{text}");
    assert!(text.contains("lambda_multigrid"), "{text}");
    assert!(text.contains("EXIT CODES"), "{text}");
}

#[test]
fn direct_mode_reports_the_reference_chain() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("direct");
    let conf = write_config(
        dir.path(),
        "dim = 1\ncells_per_axis = 8\nn_levels = 3\nmode = direct\n",
    );
    let out = gpmg(&["run", &conf, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_line(&out));
    let csv = std::fs::read_to_string(out_dir.join("run.csv")).unwrap();
    let scf_col: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(7).unwrap())
        .collect();
    // The reference chain iterates on every level, not just the coarsest.
    assert!(
        scf_col.iter().all(|s| s.parse::<usize>().unwrap() > 0),
        "{csv}"
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("mode direct"));
    assert!(!out_dir.join("compare.csv").exists());
}
