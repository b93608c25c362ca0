//! The `csfb` binary: output format, exit codes, reproducibility.

use std::path::Path;
use std::process::{Command, Output};

use csfb::harness::{parse_csv, CSV_HEADER, WISHART_HEADER};

fn csfb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csfb"))
        .args(args)
        .output()
        .expect("failed to launch csfb")
}

fn small_run<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "run",
        "--scenario",
        "custom",
        "--sparsity",
        "3",
        "--c-half",
        "0.4,0.8",
        "--trials",
        "40",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn writes_the_documented_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let status = csfb(&small_run(out.to_str().unwrap(), &[]));
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "scenario,n,p,rho,mode,recovery,r,s,k,c_half,sigma,delta_star,rate_emp,rate_se,rate_R,rate_Ra,rate_Reff,rate_Rd,recov_rate,bits_fed"
    );
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    let rows = parse_csv(&out).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.scenario == "custom" && r.s == 3));
}

#[test]
fn output_bytes_do_not_depend_on_threads() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let mut run_a = vec!["--threads", "1"];
    run_a.extend(small_run(
        a.to_str().unwrap(),
        &["--recovery", "lasso,maxcorr"],
    ));
    let mut run_b = vec!["--threads", "4"];
    run_b.extend(small_run(
        b.to_str().unwrap(),
        &["--recovery", "lasso,maxcorr"],
    ));
    assert!(csfb(&run_a).status.success());
    assert!(csfb(&run_b).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "scenario = \"custom\"\nsparsity = [2]\nc-half = [0.5]\ntrials = 20\nseed = 3\n",
    )
    .unwrap();
    let out = dir.path().join("r.csv");
    let o = csfb(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--sparsity",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = parse_csv(&out).unwrap();
    assert!(rows.iter().all(|r| r.s == 4));
    assert!(rows.iter().any(|r| r.c_half == 0.5));
}

#[test]
fn eigenvalue_scenarios_use_their_own_schema() {
    let o = csfb(&[
        "run",
        "--scenario",
        "fig7",
        "--trials",
        "2000",
        "--wishart-r",
        "2,3",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), WISHART_HEADER);
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn exit_codes() {
    let code = |o: Output| o.status.code().unwrap();
    assert_eq!(code(csfb(&["run", "--trials", "0"])), 2);
    assert_eq!(code(csfb(&["run", "--scenario", "fig9"])), 2);
    assert_eq!(code(csfb(&["run", "--mode", "sideways"])), 2);
    assert_eq!(code(csfb(&["run", "--bogus-flag"])), 2);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "banana = 1\n").unwrap();
    assert_eq!(code(csfb(&["run", "--config", bad.to_str().unwrap()])), 2);

    let infeasible = [
        "run",
        "--strict-conditions",
        "--dedicated-noisy",
        "false",
        "--dedicated-noiseless",
        "false",
        "--trials",
        "5",
    ];
    assert_eq!(code(csfb(&infeasible)), 3);

    let unwritable = Path::new("/nonexistent-dir/out.csv").to_str().unwrap();
    assert_eq!(code(csfb(&small_run(unwritable, &[]))), 4);
    assert_eq!(
        code(csfb(&["run", "--config", "/nonexistent-dir/exp.toml"])),
        4
    );
}
