use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use spurcorr::data::{read_matrix, ResponseSpec};
use spurcorr::experiments::{sdp_run_stream, sdp_single_run};
use spurcorr::subset_search::SearchMethod;

fn spurcorr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spurcorr"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SPURCORR_THREADS")
        .output()
        .unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn check_discovery_reproduces_experiment_run() {
    let dir = tempfile::tempdir().unwrap();
    let (seed, n, r, run) = (31u64, 50usize, 20usize, 3usize);
    let out = spurcorr(
        &[
            "simulate", "--study", "data", "--design", "sdp", "--n", "50", "--p", "60", "--r", "20", "--run", "3",
            "--seed", "31", "--data-out", "d.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let stream = json(&out)["result"]["analysis_stream"].as_str().unwrap().to_owned();

    let out = spurcorr(
        &[
            "check-discovery", "--data", "d.csv", "--header", "--response-col", "y", "--seed", "31", "--stream",
            &stream, "--reps", "200", "--folds", "5",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);

    let d = read_matrix::<f64>(&dir.path().join("d.csv"), true, &ResponseSpec::Column("y".into())).unwrap();
    let lib = sdp_single_run(
        &d,
        0.05,
        200,
        5,
        &SearchMethod::default(),
        &sdp_run_stream(seed, n, r, run).child("analysis"),
    )
    .unwrap();
    let res = &v["result"];
    assert_eq!(res["spurious"].as_bool().unwrap(), lib.spurious);
    assert_eq!(res["s_hat"].as_u64().unwrap() as usize, lib.s_hat);
    if let Some(q) = lib.quantile {
        assert_eq!(res["report"]["statistic"].as_f64().unwrap().to_bits(), lib.correlation.to_bits());
        assert_eq!(res["report"]["reference"]["value"].as_f64().unwrap().to_bits(), q.to_bits());
    }
}

#[test]
fn header_names_reach_subset_report() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("x.csv"),
        "alpha,beta,gamma,resp\n1,0.5,3,1.1\n2,0.1,1,2.3\n3,0.9,4,2.9\n4,0.3,1,4.2\n5,0.7,5,5.1\n",
    )
    .unwrap();
    let out = spurcorr(&["maxcorr", "--data", "x.csv", "--header", "--response-col", "resp", "--s", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["result"]["subset"][0].as_u64(), Some(0));
    assert_eq!(v["result"]["subset_names"][0].as_str(), Some("alpha"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("covariates 1 (1-based)"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = spurcorr(&["maxcorr", "--data", "x.csv", "--response", "y.csv", "--s", "0"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--s"));

    let out = spurcorr(&["exo-test", "--data", "x.csv", "--response-col", "0", "--scad-a", "1.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--scad-a"));

    let out = Command::new(env!("CARGO_BIN_EXE_spurcorr"))
        .args(["asym"])
        .env("SPURCORR_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("SPURCORR_THREADS"));
}

#[test]
fn parse_error_is_structured() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.csv"), "1,2,3\n4,NaN,6\n7,8,9\n").unwrap();
    let out = spurcorr(&["maxcorr", "--data", "x.csv", "--response-col", "2", "--s", "1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["error"]["kind"].as_str(), Some("ParseError"));
    assert!(v["error"]["message"].as_str().unwrap().contains("row 2, column 2"));
}

#[test]
fn writes_only_declared_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = spurcorr(
        &["simulate", "--study", "data", "--n", "20", "--p", "5", "--data-out", "d.csv", "--output", "r.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, vec!["d.csv", "r.json"]);

    let out = spurcorr(
        &["null-quantile", "--data", "d.csv", "--header", "--response-col", "y", "--s", "2", "--reps", "100",
          "--dist-csv", "dist.csv", "--output", "q.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let dist = std::fs::read_to_string(dir.path().join("dist.csv")).unwrap();
    assert_eq!(dist.lines().count(), 101);
}

#[test]
fn thread_env_fallback_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_spurcorr"))
            .args(["simulate", "--study", "joint", "--n", "30", "--p", "40", "--s", "2", "--reps-outer", "20"])
            .current_dir(dir.path())
            .env("SPURCORR_THREADS", threads)
            .output()
            .unwrap()
    };
    let (a, b) = (run("1"), run("3"));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}
