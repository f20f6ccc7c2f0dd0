use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(cmd: &str, config: &str, dir: &Path, extra: &[&str], threads: Option<&str>) -> Output {
    let cfg = dir.join(format!("{cmd}.conf"));
    fs::write(&cfg, config).unwrap();
    let mut c = Command::new(env!("CARGO_BIN_EXE_apxlab"));
    c.arg(cmd).arg("--config").arg(&cfg).arg("--out").arg(dir.join("out"));
    c.args(extra);
    if let Some(t) = threads {
        c.env("APXLAB_THREADS", t);
    }
    c.output().unwrap()
}

fn out(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn rate(csv: &str) -> f64 {
    csv.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap()
}

#[test]
fn check_passes_and_writes_manifest() {
    let d = tempfile::tempdir().unwrap();
    let o = run("check", "command = check\n", d.path(), &["--seed", "3"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out(d.path(), "checks.csv").starts_with("check,passed,detail\n"));
    let m = out(d.path(), "manifest.txt");
    assert!(m.contains("command = check"));
    assert!(m.contains("seed = 3"));
    assert!(m.contains("status = ok"));
}

#[test]
fn unknown_key_is_rejected_with_line() {
    let d = tempfile::tempdir().unwrap();
    let o = run("rates", "m = 1\nspeed = 9\n", d.path(), &[], None);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("speed"), "{err}");
}

#[test]
fn hypothesis_violation_is_invalid_config() {
    let d = tempfile::tempdir().unwrap();
    let o = run(
        "rates",
        "indicator = local_seminorm\nrho = lp\np = 2\nq = 1\nalpha = 0.4\n",
        d.path(),
        &[],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("delta"));
}

#[test]
fn bad_arguments_exit_one() {
    let o = Command::new(env!("CARGO_BIN_EXE_apxlab")).arg("nonsense").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

const LSHAPE_RATES: &str = "command = rates\ndomain = l_shape\nfield = lshape_corner\nm = 1\nrho = h1\neps_steps = 16\nuniform_levels = 8\n";

#[test]
fn lshape_greedy_rate_is_one_half() {
    let d = tempfile::tempdir().unwrap();
    let o = run("rates", LSHAPE_RATES, d.path(), &[], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = rate(&out(d.path(), "greedy_rate.csv"));
    assert!((s - 0.5).abs() < 0.07, "greedy rate {s}");
    let su = rate(&out(d.path(), "uniform_rate.csv"));
    assert!((su - 1.0 / 3.0).abs() < 0.07, "uniform rate {su}");
    assert!(out(d.path(), "greedy_curve.csv").starts_with("N,error,epsilon,surrogate\n"));
    assert!(out(d.path(), "greedy_plot.csv").starts_with("N,error,log2_N,log2_E,fit_log2_E,slope\n"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = "domain = l_shape\nfield = lshape_corner\nrho = lp\np = 1\nq = 1\neps_steps = 8\nuniform_levels = 5\n";
    assert_eq!(run("rates", cfg, a.path(), &[], Some("1")).status.code(), Some(0));
    assert_eq!(run("rates", cfg, b.path(), &[], Some("4")).status.code(), Some(0));
    for f in ["greedy_curve.csv", "greedy_rate.csv", "uniform_curve.csv"] {
        assert_eq!(out(a.path(), f), out(b.path(), f), "{f}");
    }
}

#[test]
fn afem_runs_six_iterations() {
    let d = tempfile::tempdir().unwrap();
    let o = run("afem", "problem = poisson_lshape\ntheta = 0.5\nmax_iter = 8\n", d.path(), &[], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let t = out(d.path(), "afem_trace.csv");
    let mut lines = t.lines();
    assert_eq!(lines.next(), Some("iter,N,eta,osc,energy_err,rho_d,theta_D,m,d"));
    assert_eq!(lines.count(), 9);
}

#[test]
fn iteration_cap_exit_code() {
    let d = tempfile::tempdir().unwrap();
    let o = run("rates", "eps_start = 1e-9\ngreedy_cap = 2\n", d.path(), &[], None);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out(d.path(), "manifest.txt").contains("iteration cap"));
}

#[test]
fn mesh_snapshot_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let o = run("mesh", "domain = l_shape\nmarking = corner\nrounds = 6\n", d.path(), &[], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let path: PathBuf = d.path().join("out").join("mesh.txt");
    let p = apxlab_core::mesh::mesh_load(&path).unwrap();
    let rounds = out(d.path(), "rounds.csv");
    let last_n: usize = rounds.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(p.len(), last_n);
    assert!(out(d.path(), "admissibility.csv").lines().nth(1).unwrap().ends_with("true"));
    let again = run("mesh", "domain = l_shape\nmarking = corner\nrounds = 2\n", d.path(), &[], None);
    assert_eq!(again.status.code(), Some(0));
    let custom = format!("domain = {}\nmarking = uniform\nrounds = 1\n", path.display());
    let o = run("mesh", &custom, d.path(), &[], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}
