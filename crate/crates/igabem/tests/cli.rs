//! End-to-end runs of the command line program and CSV round trips.

use std::process::Command;

use igabem::xcli::{read_csv, CSV_HEADER};

fn igabem() -> Command {
    Command::new(env!("CARGO_BIN_EXE_igabem"))
}

#[test]
fn hyper_slit_run_writes_csv() {
    let dir = std::env::temp_dir().join(format!("igabem-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("run.csv");
    let status = igabem()
        .args(["--problem", "hyper-slit", "--theta", "0.9", "--max-dofs", "500", "--precond", "both", "--tol", "1e-8"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert!(!text.contains('\r'));
    let rows = read_csv(text.as_bytes()).unwrap();
    assert!(rows.len() >= 5);
    assert!(rows.last().unwrap().n >= 500);
    for (l, r) in rows.iter().enumerate() {
        assert_eq!(r.problem, "hyper-slit");
        assert_eq!(r.level, l);
        assert_eq!(r.cond_method, "exact");
        assert!(r.cond_diag.is_some() && r.cond_mlas.is_some());
        assert!(r.iters_diag.is_some() && r.iters_mlas.is_some());
        assert!(r.apply_ns.unwrap() > 0.0);
    }
    assert!(rows.windows(2).all(|w| w[1].n > w[0].n));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn csv_reals_round_trip() {
    let stdout = igabem()
        .args(["--problem", "weak-slit", "--max-dofs", "12", "--precond", "mlas"])
        .output()
        .unwrap();
    assert!(stdout.status.success());
    let text = String::from_utf8(stdout.stdout).unwrap();
    let rows = read_csv(text.as_bytes()).unwrap();
    assert!(!rows.is_empty());
    for r in &rows {
        assert!(r.cond_diag.is_none() && r.iters_diag.is_none());
        assert!(r.cond_mlas.is_some());
    }
    // 17 significant digits reproduce the value exactly.
    for line in text.lines().skip(1) {
        let eta: &str = line.split(',').nth(4).unwrap();
        let v: f64 = eta.parse().unwrap();
        assert_eq!(format!("{v:.16e}"), eta);
    }
}

#[test]
fn invalid_theta_is_rejected() {
    for theta in ["0", "1.5", "-0.2"] {
        let out = igabem().args(["--problem", "hyper-slit", "--theta", theta]).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "theta {theta}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("theta must satisfy 0<theta<=1"));
    }
}

#[test]
fn unknown_problem_and_listing() {
    let out = igabem().args(["--problem", "circle"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = igabem().arg("--list").output().unwrap();
    assert!(out.status.success());
    let names: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(String::from).collect();
    assert_eq!(names, ["hyper-pacman", "weak-pacman", "hyper-slit", "weak-slit"]);
}

#[test]
fn read_csv_rejects_bad_header() {
    assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
}
