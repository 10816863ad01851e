use bbal::{run, ExperimentConfig, Status};
use serde_json::Value;
use std::path::Path;
use std::process::Command;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_str_in(text, Path::new(".")).unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn bbal(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_bbal"))
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn solve_balanced_on_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        config("task = solve-balanced\nseed = 2\n[model]\nm = 3\n[solver]\nperturbation = 0.5\n");
    let s = run(&cfg, dir.path()).unwrap();
    assert_eq!(s.status, Status::Ok);
    let r = report(dir.path());
    assert_eq!(r["result"]["converged"], true);
    assert!(
        r["result"]["certificate"]["moment_residual"]
            .as_f64()
            .unwrap()
            < 1e-8
    );
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(r["model"]["polar_exactness_degree"], 31);
    assert!(r["tolerances"]["residual_tol"].is_number());
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,ding,residual"));
}

#[test]
fn scalar_generator_has_zero_slope() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        "task = slope\n[model]\nkind = p1-graded\nm = 2\n[slope]\neigenvalues = 1,1,1,1,1\n",
    );
    assert_eq!(run(&cfg, dir.path()).unwrap().status, Status::Ok);
    let f = report(dir.path())["result"]["f_invariant"]
        .as_f64()
        .unwrap();
    assert!(f.abs() < 1e-10, "{f}");
    let csv = std::fs::read_to_string(dir.path().join("slope_samples.csv")).unwrap();
    assert!(csv.starts_with("t,dL/dt,dE/dt\n"));
}

#[test]
fn delta_on_the_line_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("task = delta-toric\n[model]\npolytope = p1\n[delta]\nm_max = 20\n");
    run(&cfg, dir.path()).unwrap();
    let r = report(dir.path());
    let levels = r["result"]["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 20);
    assert!(levels
        .iter()
        .all(|l| l["delta_m"] == "1" && l["label"] == "toric upper bound"));
}

#[test]
fn invariant_suite_passes_and_catches_a_broken_energy() {
    let dir = tempfile::tempdir().unwrap();
    let good = config("task = check-invariants\nseed = 5\n[invariants]\ngeodesics = 4\n");
    assert_eq!(run(&good, dir.path()).unwrap().status, Status::Ok);
    let bad = config(
        "task = check-invariants\nseed = 5\n[invariants]\ngeodesics = 4\ninject = energy-sign\n",
    );
    assert_eq!(
        run(&bad, dir.path()).unwrap().status,
        Status::ValidationFailure
    );
    let failed = report(dir.path())["result"]["failed"].clone();
    assert!(
        failed
            .as_array()
            .unwrap()
            .iter()
            .any(|f| f == "ding-convexity"),
        "{failed}"
    );
}

#[test]
fn reports_are_byte_stable() {
    let text = "task = check-invariants\nseed = 9\n[invariants]\ngeodesics = 3\n";
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&config(text), a.path()).unwrap();
    run(&config(text), b.path()).unwrap();
    let read = |d: &Path| std::fs::read(d.join("report.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));

    let solve = "task = solve-balanced\nseed = 4\n[model]\nm = 2\n[solver]\nperturbation = 0.4\n";
    run(&config(solve), a.path()).unwrap();
    run(&config(solve), b.path()).unwrap();
    for f in ["report.json", "trace.csv", "form.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let write = |name: &str, text: &str| {
        let p = d.join(name);
        std::fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    };
    let out = d.join("out");
    let out = out.to_str().unwrap();

    let ok = write("ok.ini", "task = certify\n[model]\nm = 2\n");
    assert_eq!(bbal(&["--config", &ok, "--out", out]), 0);

    let missing = write(
        "missing.ini",
        "task = delta-toric\n[model]\npolytope = nowhere.txt\n",
    );
    assert_eq!(bbal(&["--config", &missing, "--out", out]), 1);
    assert_eq!(
        bbal(&["--config", &ok, "--task", "juggle", "--out", out]),
        1
    );

    let slow = write(
        "slow.ini",
        "task = solve-balanced\n[model]\nm = 2\n[solver]\nmax_iters = 1\nperturbation = 0.8\n",
    );
    assert_eq!(
        bbal(&[
            "--config",
            &slow,
            "--out",
            out,
            "--seed",
            "3",
            "--threads",
            "2"
        ]),
        2
    );
    let r = report(Path::new(out));
    assert_eq!(r["status"], "non-convergence");
    assert_eq!(r["seed"], 3);

    // twice the reference weight on the first section
    write(
        "form.json",
        r#"{"n": 5, "entries": [[2,0],[0,0],[0,0],[0,0],[0,0],[0,0],[1,0],[0,0],[0,0],[0,0],[0,0],[0,0],[1,0],[0,0],[0,0],[0,0],[0,0],[0,0],[1,0],[0,0],[0,0],[0,0],[0,0],[0,0],[1,0]]}"#,
    );
    let cert = write(
        "cert.ini",
        "task = certify\n[model]\nm = 2\n[certify]\nform = form.json\n",
    );
    assert_eq!(bbal(&["--config", &cert, "--out", out]), 3);
}

#[test]
fn polytope_files_resolve_against_the_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("square.txt"),
        "# P1 x P1\n1 1\n-1 1\n-1 -1\n1 -1\n",
    )
    .unwrap();
    let cfg_path = dir.path().join("d.ini");
    std::fs::write(
        &cfg_path,
        "task = delta-toric\n[model]\npolytope = square.txt\n[delta]\nm_max = 3\n",
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    run(&cfg, &dir.path().join("out")).unwrap();
    let r = report(&dir.path().join("out"));
    assert!(r["result"]["levels"]
        .as_array()
        .unwrap()
        .iter()
        .all(|l| l["delta_m"] == "1"));
}
